use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use heapfacts::abstraction::AbstractionConfig;
use heapfacts::code::{load_site_map_file, scan_inputs, CodeModel, CodeSource};
use heapfacts::context::SensitivityConfig;
use heapfacts::enricher::EnricherNames;
use heapfacts::facts::{export_facts, sha256_hex, write_class_archive};
use heapfacts::heap::{build_heap, HeapGraph, ObjectKind};
use heapfacts::hprof::{parse_dump, IdSize, Warning};
use heapfacts::pipeline::{analyze_graph, with_recovered_classes, PipelineConfig};
use heapfacts::recall::{read_edges, recall, MatchMode};
use heapfacts::synth::{emit, random_program, SynthParams};

#[derive(Parser)]
#[command(name = "heapfacts", version, about = "Heap snapshots to points-to and call-graph facts")]
struct Cli {
    /// TOML file with defaults for any flag (keys are the flag names).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export fact CSVs and a manifest for a dump.
    Facts(FactsArgs),
    /// Write the class files kept in the heap to a zip archive.
    Classes {
        dump: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print object, class and trace counts.
    Stats { dump: PathBuf },
    /// Fraction of observed call-graph edges found in a reference.
    Recall {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        observed: PathBuf,
        /// Match on caller and callee methods, ignoring lines.
        #[arg(long)]
        method_pair: bool,
    },
    /// Generate a random test dump.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Number of objects.
        #[arg(long, default_value_t = 40)]
        size: usize,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(4..=8))]
        id_size: u32,
        /// Also write the program's allocation sites here.
        #[arg(long)]
        site_map: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FactsArgs {
    dump: PathBuf,
    /// Class files, directories or archives of the program.
    #[arg(long, num_args = 1..)]
    code: Vec<PathBuf>,
    #[arg(long)]
    site_map: Option<PathBuf>,
    /// `insensitive` or `flavor:n:m`, e.g. `object:2:1`.
    #[arg(long, value_parser = parse_sensitivity)]
    sensitivity: Option<SensitivityConfig>,
    #[arg(long)]
    strings_by_content: bool,
    #[arg(long)]
    distinguish_loaders: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_sensitivity(s: &str) -> Result<SensitivityConfig, String> {
    s.parse()
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    code: Vec<PathBuf>,
    site_map: Option<PathBuf>,
    sensitivity: Option<String>,
    strings_by_content: Option<bool>,
    distinguish_loaders: Option<bool>,
    excluded_frame_prefixes: Option<Vec<String>>,
    commonplace_types: Option<Vec<String>>,
    enrichers: Option<EnricherNames>,
    out: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn warn_all<'a>(warnings: impl IntoIterator<Item = &'a Warning>) -> usize {
    let mut n = 0;
    for w in warnings {
        eprintln!("warning: {w}");
        n += 1;
    }
    n
}

fn load_graph(path: &Path) -> anyhow::Result<(Vec<u8>, HeapGraph)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let raw = parse_dump(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    Ok((bytes, build_heap(&raw)))
}

fn facts(args: FactsArgs, file: FileConfig) -> anyhow::Result<()> {
    let sensitivity = match (args.sensitivity, &file.sensitivity) {
        (Some(s), _) => s,
        (None, Some(s)) => s.parse().map_err(|e: String| anyhow::anyhow!("config sensitivity: {e}"))?,
        (None, None) => SensitivityConfig::default(),
    };
    let mut abstraction = AbstractionConfig {
        distinguish_strings_by_content: args.strings_by_content || file.strings_by_content.unwrap_or(false),
        distinguish_loaders: args.distinguish_loaders || file.distinguish_loaders.unwrap_or(false),
        ..Default::default()
    };
    if let Some(p) = file.excluded_frame_prefixes {
        abstraction.excluded_frame_prefixes = p;
    }
    if let Some(t) = file.commonplace_types {
        abstraction.commonplace_types = t.into_iter().collect();
    }
    let cfg = PipelineConfig { abstraction, sensitivity, enrichers: file.enrichers.unwrap_or_default() };
    let code_paths = if args.code.is_empty() { file.code } else { args.code };
    let site_map = args.site_map.or(file.site_map);
    let out = args.out.or(file.out).unwrap_or_else(|| PathBuf::from("facts"));

    let (bytes, graph) = load_graph(&args.dump)?;
    let mut code = if code_paths.is_empty() { CodeModel::new(CodeSource::ClassfileScan) } else { scan_inputs(&code_paths) };
    if let Some(path) = &site_map {
        let sites = load_site_map_file(path).with_context(|| format!("loading site map {}", path.display()))?;
        code = if code_paths.is_empty() { sites } else { code.merge(sites) };
    }
    let (code, recovered) = with_recovered_classes(&graph, code, &cfg)?;
    let analysis = analyze_graph(graph, code, &cfg)?;
    let warnings = warn_all(analysis.warnings());

    let config = serde_json::json!({
        "sensitivity": cfg.sensitivity.to_string(),
        "abstraction": cfg.abstraction,
        "enrichers": cfg.enrichers,
        "code": code_paths,
        "site_map": site_map,
        "code_source": analysis.code.source,
        "code_methods": analysis.code.methods.len(),
        "recovered_classes": recovered.len(),
    });
    let manifest = export_facts(&analysis.facts(&cfg), config, &sha256_hex(&bytes), warnings, &out)
        .with_context(|| format!("writing facts to {}", out.display()))?;
    for (file, entry) in &manifest.files {
        println!("{file}\t{}", entry.rows);
    }
    Ok(())
}

fn classes(dump: &Path, out: &Path, file: FileConfig) -> anyhow::Result<()> {
    let cfg = PipelineConfig { enrichers: file.enrichers.unwrap_or_default(), ..Default::default() };
    let (_, graph) = load_graph(dump)?;
    warn_all(&graph.warnings);
    let (code, recovered) = with_recovered_classes(&graph, CodeModel::new(CodeSource::ClassfileScan), &cfg)?;
    warn_all(&code.warnings);
    let f = std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_class_archive(&recovered, f)?;
    for c in &recovered {
        println!("{}", c.entry_name());
    }
    Ok(())
}

fn stats(dump: &Path) -> anyhow::Result<()> {
    let (_, graph) = load_graph(dump)?;
    let warnings = warn_all(&graph.warnings);
    let mut by_kind: BTreeMap<&str, usize> =
        ["instances", "object-arrays", "primitive-arrays", "class-objects"].into_iter().map(|k| (k, 0)).collect();
    for o in graph.objects.values() {
        let k = match o.kind() {
            ObjectKind::Instance => "instances",
            ObjectKind::ObjectArray => "object-arrays",
            ObjectKind::PrimitiveArray => "primitive-arrays",
            ObjectKind::ClassObject => "class-objects",
        };
        *by_kind.get_mut(k).expect("all kinds listed") += 1;
    }
    println!("id-size\t{}", graph.id_size.bytes());
    println!("objects\t{}", graph.len());
    for (k, n) in by_kind {
        println!("{k}\t{n}");
    }
    println!("classes\t{}", graph.classes.len());
    println!("strings\t{}", graph.strings_by_content.values().map(Vec::len).sum::<usize>());
    println!("traces\t{}", graph.traces.len());
    println!("traced-objects\t{}", graph.objects.values().filter(|o| o.alloc_trace.is_some()).count());
    println!("gc-roots\t{}", graph.gc_roots.len());
    println!("dangling\t{}", graph.dangling.len());
    println!("warnings\t{warnings}");
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Facts(args) => facts(args, file),
        Command::Classes { dump, out } => classes(&dump, &out, file),
        Command::Stats { dump } => stats(&dump),
        Command::Recall { reference, observed, method_pair } => {
            let mode = if method_pair { MatchMode::MethodPair } else { MatchMode::Exact };
            let report = recall(&read_edges(&reference)?, &read_edges(&observed)?, mode)?;
            println!("recall\t{}\t{:.6}", report.recall, report.as_f64());
            println!("matched\t{}", report.matched);
            println!("observed\t{}", report.observed);
            for (inv, m) in &report.missing {
                println!("missing\t{inv}\t{m}");
            }
            Ok(())
        }
        Command::Synth { seed, out, size, id_size, site_map } => {
            let Some(id_size) = IdSize::from_bytes(id_size) else { bail!("--id-size must be 4 or 8") };
            let program = random_program(seed, &SynthParams::sized(size));
            let emitted = emit(&program, id_size)?;
            std::fs::write(&out, &emitted.bytes).with_context(|| format!("writing {}", out.display()))?;
            if let Some(path) = site_map {
                std::fs::write(&path, program.site_map()).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
