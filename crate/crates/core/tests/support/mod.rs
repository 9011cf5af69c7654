//! Checks shared by the per-module tests and the acceptance run. Each returns
//! a one-line summary, or the first discrepancy found.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::PathBuf;
use std::time::Instant;

use heapfacts::abstraction::abstraction_table;
use heapfacts::code::scan_inputs;
use heapfacts::context::{
    edges_from_traces, heap_context, recognize_enrichers, ContextInputs, ContextTuple, Flavor, SensitivityConfig, PADDING,
};
use heapfacts::facts::CALL_GRAPH_EDGE;
use heapfacts::heap::build_heap;
use heapfacts::hprof::{parse_dump, BasicType, IdSize};
use heapfacts::pipeline::{analyze, PipelineConfig};
use heapfacts::recall::{recall, Edge, MatchMode};
use heapfacts::synth::{
    emit, emit_with, random_program, verify_round_trip, EmitOptions, ObjRef, SiteRef, SynthFrame, SynthParams, SynthProgram,
    SynthSite,
};
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Outcome = Result<String, String>;

pub fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn gunzip(rel: &str) -> Vec<u8> {
    let file = std::fs::File::open(repo_path(rel)).expect("fixture present");
    let mut out = Vec::new();
    flate2::read::GzDecoder::new(file).read_to_end(&mut out).expect("valid gzip");
    out
}

pub fn id_size_for(seed: u64) -> IdSize {
    if seed.is_multiple_of(2) {
        IdSize::Four
    } else {
        IdSize::Eight
    }
}

/// Programs of every size from empty to ~90 objects.
pub fn fixture_program(seed: u64) -> SynthProgram {
    random_program(seed, &SynthParams::sized((seed % 91) as usize))
}

pub fn round_trip(programs: u64) -> Outcome {
    let start = Instant::now();
    let mut objects = 0;
    for seed in 0..programs {
        let p = fixture_program(seed);
        let opts = EmitOptions { id_size: id_size_for(seed), segment_records: 1 + (seed as usize % 17) * 40 };
        let emitted = emit_with(&p, &opts).map_err(|e| format!("seed {seed}: {e}"))?;
        let dump = parse_dump(&emitted.bytes).map_err(|e| format!("seed {seed}: {e}"))?;
        if !dump.warnings.is_empty() {
            return Err(format!("seed {seed}: reader warned {:?}", dump.warnings[0]));
        }
        let graph = build_heap(&dump);
        let bad = verify_round_trip(&p, &emitted, &graph);
        if let Some(first) = bad.first() {
            return Err(format!("seed {seed}: {first} ({} mismatches)", bad.len()));
        }
        objects += graph.len();
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("{programs} programs took {secs:.1}s"));
    }
    Ok(format!("{programs} programs, {objects} objects, 0 warnings, {secs:.1}s"))
}

pub fn call_graph_oracle(programs: u64) -> Outcome {
    let mut total = 0;
    for seed in 0..programs {
        let p = fixture_program(seed);
        let emitted = emit(&p, id_size_for(seed)).map_err(|e| e.to_string())?;
        let graph = build_heap(&parse_dump(&emitted.bytes).map_err(|e| e.to_string())?);
        let got: BTreeSet<(String, Option<u32>, String)> = edges_from_traces(&graph)
            .into_iter()
            .map(|e| (e.caller_method, e.caller_line, e.callee_method))
            .collect();
        let mut want = BTreeSet::new();
        for t in &p.traces {
            for i in 1..t.frames.len() {
                let (callee, caller) = (&t.frames[i - 1], &t.frames[i]);
                let line = (caller.line > 0).then_some(caller.line as u32);
                want.insert((caller.signature(), line, callee.signature()));
            }
        }
        if got != want {
            let extra: Vec<_> = got.difference(&want).take(2).collect();
            let missing: Vec<_> = want.difference(&got).take(2).collect();
            return Err(format!("seed {seed}: extra {extra:?}, missing {missing:?}"));
        }
        total += want.len();
    }
    Ok(format!("{programs} programs, {total} edges"))
}

/// A chain `o0 -> o1 -> ... -> o5` of allocation receivers, plus
/// commonplace objects hanging off it and an object with no receiver.
pub struct ChainFixture {
    pub program: SynthProgram,
    pub subjects: Vec<ObjRef>,
    /// Receiver of each object's allocating method, as the builder intends.
    pub links: BTreeMap<ObjRef, ObjRef>,
}

pub const CHAIN_LEN: usize = 5;
const NODE: &str = "ctx.Node";

pub fn chain_fixture(seed: u64) -> ChainFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = SynthProgram::new();
    p.add_class(NODE, None, &[("next", BasicType::Object)]);
    let mut methods = Vec::new();
    for i in 0..=CHAIN_LEN {
        let nodes = rng.random_range(1..=3);
        let mut sites: Vec<SynthSite> =
            (0..nodes).map(|j| SynthSite { ty: NODE.into(), line: Some(10 * i as u32 + j + 1) }).collect();
        sites.push(SynthSite { ty: "java.lang.String".into(), line: Some(10 * i as u32 + 7) });
        sites.push(SynthSite { ty: "int[]".into(), line: Some(10 * i as u32 + 8) });
        sites.shuffle(&mut rng);
        // Odd methods are static: their objects take the caller's receiver.
        let name = if i % 2 == 1 { format!("make{i}") } else { format!("build{i}") };
        methods.push(p.add_method(&format!("ctx.Alloc{}", i % 3), &name, "()V", sites));
    }
    let frame_at = |p: &SynthProgram, site: SiteRef| {
        let m = &p.methods[site.method];
        SynthFrame::new(&m.class, &m.name, &m.descriptor, m.sites[site.site].line)
    };
    let main = SynthFrame::new("ctx.Main", "main", "([Ljava/lang/String;)V", Some(3));

    // Allocate in a shuffled order so ids do not follow the chain.
    let mut order: Vec<usize> = (0..=CHAIN_LEN).collect();
    order.shuffle(&mut rng);
    let mut chain = vec![ObjRef(usize::MAX); CHAIN_LEN + 1];
    for i in order {
        let m = methods[i];
        let candidates: Vec<usize> = (0..p.methods[m].sites.len()).filter(|&s| p.methods[m].sites[s].ty == NODE).collect();
        let site = SiteRef { method: m, site: candidates[rng.random_range(0..candidates.len())] };
        let ctor = SynthFrame::new(NODE, "<init>", "()V", Some(1));
        let trace = p.add_trace(vec![ctor, frame_at(&p, site), main.clone()]);
        let o = p.add_instance(NODE, vec![], Some(trace));
        p.objects[o.0].site = Some(site);
        chain[i] = o;
    }
    let mut links = BTreeMap::new();
    for i in 0..CHAIN_LEN {
        links.insert(chain[i], chain[i + 1]);
        p.set_field(chain[i], "next", heapfacts::synth::SynthValue::Ref(chain[i + 1]));
    }
    let mut subjects = chain.clone();

    let m = methods[rng.random_range(0..methods.len())];
    let at = |ty: &str, p: &SynthProgram| SiteRef { method: m, site: p.methods[m].sites.iter().position(|s| s.ty == ty).unwrap() };
    let s_site = at("java.lang.String", &p);
    let t = p.add_trace(vec![frame_at(&p, s_site), main.clone()]);
    let s = p.add_string("commonplace", Some(t));
    let a_site = at("int[]", &p);
    let t = p.add_trace(vec![frame_at(&p, a_site), main.clone()]);
    let arr = p.add_primitive_array(BasicType::Int, vec![], Some(t));
    p.objects[arr.0].site = Some(a_site);
    for (o, ctx) in [(s, chain[1]), (arr, chain[2])] {
        links.insert(o, ctx);
        subjects.push(o);
    }
    for (&o, &ctx) in &links {
        p.add_obj_and_ctx(o, ctx);
    }
    for &o in &subjects {
        p.add_root(o);
    }
    ChainFixture { program: p, subjects, links }
}

/// Pointer chase over the builder's links.
pub fn expected_heap_context(f: &ChainFixture, obj: ObjRef, k: usize, flavor: Flavor) -> Vec<String> {
    let ty = f.program.type_name(obj);
    let mut out = Vec::new();
    let commonplace = ["java.lang.String", "int[]"];
    if !commonplace.contains(&ty.as_str()) {
        let mut cur = obj;
        while out.len() < k {
            let Some(&next) = f.links.get(&cur) else { break };
            let site = f.program.objects[next.0].site.expect("chain objects have sites");
            out.push(match flavor {
                Flavor::Type => f.program.methods[site.method].class.clone(),
                _ => {
                    let (sig, ty, idx) = f.program.site_key(site);
                    format!("{sig}/new {ty}/{idx}")
                }
            });
            cur = next;
        }
    }
    while out.len() < k {
        out.push(PADDING.to_owned());
    }
    out
}

pub fn context_oracle(fixtures: u64) -> Outcome {
    let mut checked = 0;
    for seed in 0..fixtures {
        let f = chain_fixture(seed);
        let emitted = emit(&f.program, id_size_for(seed)).map_err(|e| e.to_string())?;
        let graph = build_heap(&parse_dump(&emitted.bytes).map_err(|e| e.to_string())?);
        let code = f.program.code_model();
        let cfg = PipelineConfig::default();
        let table = abstraction_table(&graph, &code, &cfg.abstraction);
        let bindings = recognize_enrichers(&graph, &cfg.enrichers).map_err(|e| e.to_string())?;
        let inputs = ContextInputs { graph: &graph, table: &table, bindings: &bindings, abstraction: &cfg.abstraction };
        for flavor in [Flavor::Object, Flavor::Type] {
            for k in 1..=3 {
                let sens = SensitivityConfig::new(flavor, 1, k).unwrap();
                for &o in &f.subjects {
                    let got = heap_context(&inputs, emitted.id(o), &sens).map_err(|e| e.to_string())?;
                    let want = ContextTuple(expected_heap_context(&f, o, k, flavor));
                    if got != want {
                        return Err(format!("seed {seed} {flavor} k={k} object #{}: got {got}, want {want}", o.0));
                    }
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{fixtures} chains of length {CHAIN_LEN}, {checked} contexts"))
}

/// `(class, method, descriptor, bci, type, line, ordinal)` rows.
pub type ListingRow = (String, String, String, u32, String, String, u32);

pub fn classfile_oracle() -> Outcome {
    let dir = repo_path("fixtures/classes");
    let listing = std::fs::read_to_string(dir.join("listing.tsv")).map_err(|e| e.to_string())?;
    let want: BTreeSet<ListingRow> = listing
        .lines()
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            (c[0].into(), c[1].into(), c[2].into(), c[3].parse().unwrap(), c[4].into(), c[5].into(), c[6].parse().unwrap())
        })
        .collect();
    let classes: BTreeSet<&String> = want.iter().map(|r| &r.0).collect();
    if classes.len() < 10 {
        return Err(format!("only {} fixture classes", classes.len()));
    }
    let code = scan_inputs(&[dir]);
    if let Some(w) = code.warnings.first() {
        return Err(format!("scan warned: {w}"));
    }
    let got: BTreeSet<ListingRow> = code
        .methods
        .values()
        .flat_map(|m| {
            m.allocations.iter().map(move |a| {
                (
                    m.declaring_class.clone(),
                    m.name.clone(),
                    m.descriptor.clone(),
                    a.bytecode_index,
                    a.allocated_type.clone(),
                    a.line.map_or_else(|| "-".to_owned(), |l| l.to_string()),
                    a.site_index,
                )
            })
        })
        .collect();
    if got != want {
        let extra: Vec<_> = got.difference(&want).take(2).collect();
        let missing: Vec<_> = want.difference(&got).take(2).collect();
        return Err(format!("extra {extra:?}, missing {missing:?}"));
    }
    Ok(format!("{} classes, {} allocation sites", classes.len(), want.len()))
}

pub const COHERENCE_FLAVORS: [&str; 5] = ["object:2:1", "object:1:3", "type:2:2", "call-site:2:1", "call-site:1:0"];

pub fn coherence(programs: u64) -> Outcome {
    let mut compared = 0;
    for seed in 0..programs {
        let p = fixture_program(seed);
        let bytes = emit(&p, id_size_for(seed)).map_err(|e| e.to_string())?.bytes;
        let base = PipelineConfig::default();
        let insensitive = analyze(&bytes, p.code_model(), &base).map_err(|e| e.to_string())?.facts(&base);
        for flavor in COHERENCE_FLAVORS {
            let cfg = PipelineConfig { sensitivity: flavor.parse().unwrap(), ..base.clone() };
            let sensitive = analyze(&bytes, p.code_model(), &cfg).map_err(|e| e.to_string())?.facts(&cfg);
            for (name, rel) in &sensitive.relations {
                let dropped = rel.without_contexts();
                let plain = insensitive.get(name);
                if dropped != *plain {
                    let extra: Vec<_> = dropped.rows.difference(&plain.rows).take(1).collect();
                    let missing: Vec<_> = plain.rows.difference(&dropped.rows).take(1).collect();
                    return Err(format!("seed {seed} {flavor} {name}: extra {extra:?}, missing {missing:?}"));
                }
                compared += 1;
            }
        }
    }
    Ok(format!("{programs} programs x {} settings, {compared} relations equal", COHERENCE_FLAVORS.len()))
}

pub fn error_recovery(programs: u64) -> Outcome {
    let mut cuts = 0;
    for seed in 0..programs {
        let p = fixture_program(seed * 7 + 3);
        let emitted = emit_with(&p, &EmitOptions { id_size: id_size_for(seed), segment_records: 3 }).map_err(|e| e.to_string())?;
        let full = parse_dump(&emitted.bytes).map_err(|e| e.to_string())?;
        let full_graph = build_heap(&full);
        for (k, &cut) in emitted.truncation_points().iter().enumerate() {
            let prefix = parse_dump(&emitted.bytes[..cut]).map_err(|e| format!("seed {seed} cut {cut}: {e}"))?;
            if prefix.warnings.len() != 1 {
                return Err(format!("seed {seed} cut {cut}: {} warnings", prefix.warnings.len()));
            }
            // k records end at or before the cut.
            if prefix.records.len() != k || prefix.records[..] != full.records[..k] {
                return Err(format!("seed {seed} cut {cut}: records are not the first {k} of the full parse"));
            }
            let graph = build_heap(&prefix);
            for (id, obj) in &graph.objects {
                if full_graph.object(*id).map(|o| &o.type_name) != Some(&obj.type_name) {
                    return Err(format!("seed {seed} cut {cut}: object {id} not in the full dump"));
                }
            }
            let cfg = PipelineConfig::default();
            let facts = analyze(&emitted.bytes[..cut], p.code_model(), &cfg).map_err(|e| e.to_string())?.facts(&cfg);
            let full_facts = analyze(&emitted.bytes, p.code_model(), &cfg).map_err(|e| e.to_string())?.facts(&cfg);
            let edges = &facts.get(CALL_GRAPH_EDGE).rows;
            if !edges.is_subset(&full_facts.get(CALL_GRAPH_EDGE).rows) {
                return Err(format!("seed {seed} cut {cut}: call edges not in the full dump"));
            }
            cuts += 1;
        }
    }
    Ok(format!("{programs} dumps, {cuts} cuts, one warning each"))
}

fn edge_set(ids: impl IntoIterator<Item = usize>) -> BTreeSet<Edge> {
    ids.into_iter().map(|i| Edge::new(format!("<A: void m{}()>/{}", i % 7, i), format!("<B: void n{i}()>"))).collect()
}

pub fn recall_exact() -> Outcome {
    for n in [1usize, 3, 10, 57] {
        let x = edge_set(0..10 * n);
        for mode in [MatchMode::Exact, MatchMode::MethodPair] {
            let r = recall(&x, &x, mode).map_err(|e| e.to_string())?;
            if r.recall != Ratio::from_integer(1) {
                return Err(format!("recall(X, X) = {} for |X| = {}", r.recall, x.len()));
            }
        }
        // Reference shares 7n of the 10n observed edges and adds its own.
        let observed = edge_set(0..10 * n);
        let reference = edge_set((3 * n..10 * n).chain(1000..1000 + 5 * n));
        let r = recall(&reference, &observed, MatchMode::Exact).map_err(|e| e.to_string())?;
        if r.recall != Ratio::new(7, 10) || r.missing.len() != 3 * n {
            return Err(format!("70% overlap of {} edges gave {}", 10 * n, r.recall));
        }
    }
    Ok("recall(X,X) = 1; 70% overlap = 7/10 exactly".into())
}

/// Object count from the last class histogram in the JVM log, taken after
/// the same full GC that wrote the dump.
pub fn histogram_total() -> usize {
    let log = String::from_utf8(gunzip("fixtures/real/class_histogram.log.gz")).unwrap();
    let line = log.lines().rfind(|l| l.contains(" Total ")).unwrap();
    line.split_whitespace().rev().nth(1).unwrap().parse().unwrap()
}

pub fn real_dump() -> Outcome {
    let bytes = gunzip("fixtures/real/hello.hprof.gz");
    let code = scan_inputs(&[repo_path("fixtures/real/Hello.class")]);
    let cfg = PipelineConfig::default();
    let analysis = analyze(&bytes, code, &cfg).map_err(|e| e.to_string())?;
    let warnings = analysis.warnings();
    if let Some(w) = warnings.first() {
        return Err(format!("{} warnings, first: {w}", warnings.len()));
    }
    let edges = analysis.facts(&cfg).get(CALL_GRAPH_EDGE).rows.len();
    let (objects, reference) = (analysis.graph.len(), histogram_total());
    if edges == 0 || objects != reference {
        return Err(format!("{edges} call edges, {objects} objects vs {reference} in the histogram"));
    }
    Ok(format!("0 warnings, {edges} call edges, {objects} objects = histogram total"))
}
