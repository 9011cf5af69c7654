//! One line per acceptance criterion; exits nonzero if any criterion fails.
//! Runs without the test harness so the lines are always shown.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use support::Outcome;

type Criterion = (&'static str, fn() -> Outcome);

fn heapfacts(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_heapfacts")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("heapfacts {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stderr).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every output file's bytes, with the manifest's timestamp removed.
fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name().into_string().unwrap();
        let mut bytes = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
        if name == "manifest.json" {
            let mut m: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
            m.as_object_mut().ok_or("manifest is not an object")?.remove("generated_at").ok_or("no generated_at")?;
            bytes = serde_json::to_vec(&m).unwrap();
        }
        files.insert(name, bytes);
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let real = dir.join("hello.hprof");
    std::fs::write(&real, support::gunzip("fixtures/real/hello.hprof.gz")).unwrap();
    let hello = support::repo_path("fixtures/real/Hello.class");

    let mut cases: Vec<(PathBuf, Vec<String>)> = Vec::new();
    for seed in [7u64, 8, 2024] {
        let dump = dir.join(format!("s{seed}.hprof"));
        let sites = dir.join(format!("s{seed}.sites"));
        heapfacts(&["synth", "--seed", &seed.to_string(), "--size", "80", "--out", s(&dump), "--site-map", s(&sites)])?;
        for sens in ["insensitive", "object:2:1", "call-site:2:1"] {
            let args = vec!["--site-map".into(), s(&sites).into(), "--sensitivity".into(), sens.into()];
            cases.push((dump.clone(), args));
        }
    }
    for sens in ["insensitive", "type:2:1"] {
        cases.push((real.clone(), vec!["--code".into(), s(&hello).into(), "--sensitivity".into(), sens.into()]));
    }

    let mut files = 0;
    for (i, (dump, extra)) in cases.iter().enumerate() {
        let mut runs = Vec::new();
        for run in 0..2 {
            let out = dir.join(format!("out{i}_{run}"));
            let mut args: Vec<&str> = vec!["facts", s(dump), "--out", s(&out)];
            args.extend(extra.iter().map(String::as_str));
            heapfacts(&args)?;
            runs.push(snapshot(&out)?);
        }
        if runs[0] != runs[1] {
            let differing: Vec<_> = runs[0].keys().filter(|k| runs[0].get(*k) != runs[1].get(*k)).collect();
            return Err(format!("{} {}: outputs differ in {differing:?}", dump.display(), extra.join(" ")));
        }
        files += runs[0].len();
    }
    Ok(format!("{} configurations run twice, {files} files byte-identical", cases.len()))
}

fn main() -> std::process::ExitCode {
    let criteria: [Criterion; 9] = [
        ("round-trip of 1000 random programs", || support::round_trip(1000)),
        ("call-graph oracle", || support::call_graph_oracle(200)),
        ("context oracle", || support::context_oracle(60)),
        ("class-file scan oracle", support::classfile_oracle),
        ("determinism", determinism),
        ("coherence", || support::coherence(40)),
        ("error recovery", || support::error_recovery(10)),
        ("recall", support::recall_exact),
        ("real dump", support::real_dump),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                println!("FAIL [{}] {name}: {detail}", i + 1);
                failed.push(*name);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: {} of {} criteria passed", criteria.len(), criteria.len());
        std::process::ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
