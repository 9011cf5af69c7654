//! Relations written for the static analyzer.
//!
//! Every file is CSV with a header row, rows sorted and deduplicated, LF line
//! endings. Nulls never appear. Objects are named by abstraction key, methods
//! by signature, invocations by `callerSignature/line`.

mod archive;

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use archive::{
    collect_class_data, extract_class_archive, merged_code_inputs, write_class_archive, ArchiveError, ClassData,
    BOOTSTRAP_LOADER,
};

use crate::abstraction::AbstractionTable;
use crate::context::{is_helper_class, Contexts, EnricherBindings};
use crate::enricher::EnricherNames;
use crate::heap::{FieldValue, HeapGraph, ObjectData};
use crate::hprof::Id;

pub const OBJECT_FIELD_VALUE: &str = "ObjectFieldValue";
pub const STATIC_FIELD_VALUE: &str = "StaticFieldValue";
pub const ARRAY_CONTENTS_VALUE: &str = "ArrayContentsValue";
pub const CALL_GRAPH_EDGE: &str = "CallGraphEdge";
pub const REACHABLE: &str = "Reachable";
pub const MANIFEST: &str = "manifest.json";

/// Header names that hold contexts rather than program entities.
pub const CONTEXT_COLUMNS: [&str; 4] = ["ctx", "hctx", "callerCtx", "calleeCtx"];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Relation {
    pub header: Vec<&'static str>,
    pub rows: BTreeSet<Vec<String>>,
}

impl Relation {
    fn new(header: &[&'static str]) -> Self {
        Relation { header: header.to_vec(), rows: BTreeSet::new() }
    }

    /// The relation without its context columns, deduplicated.
    pub fn without_contexts(&self) -> Relation {
        let keep: Vec<usize> = (0..self.header.len()).filter(|&i| !CONTEXT_COLUMNS.contains(&self.header[i])).collect();
        Relation {
            header: keep.iter().map(|&i| self.header[i]).collect(),
            rows: self.rows.iter().map(|r| keep.iter().map(|&i| r[i].clone()).collect()).collect(),
        }
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .quote_style(csv::QuoteStyle::Necessary)
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("writing to memory");
        for r in &self.rows {
            w.write_record(r).expect("writing to memory");
        }
        w.into_inner().expect("writing to memory")
    }
}

/// All relations, keyed by file stem.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FactSet {
    pub relations: BTreeMap<&'static str, Relation>,
}

impl FactSet {
    pub fn get(&self, name: &str) -> &Relation {
        &self.relations[name]
    }
}

/// Builds the relations. With an insensitive configuration the context
/// columns are left out entirely.
///
/// Helper objects from the agent are bookkeeping: rows that start or end at
/// one, and static fields of helper classes, are not exported.
pub fn compute_facts(
    graph: &HeapGraph,
    table: &AbstractionTable,
    bindings: &EnricherBindings,
    contexts: &Contexts,
    names: &EnricherNames,
) -> FactSet {
    let sensitive = !contexts.sensitivity.is_insensitive();
    let cols = |plain: &[&'static str], full: &[&'static str]| Relation::new(if sensitive { full } else { plain });
    let mut ofv = cols(&["obj", "field", "value"], &["ctx", "obj", "field", "hctx", "value"]);
    let mut sfv = cols(&["class", "field", "value"], &["class", "field", "hctx", "value"]);
    let mut acv = cols(&["array", "value"], &["ctx", "array", "hctx", "value"]);
    let mut cge = cols(&["invocation", "method"], &["callerCtx", "invocation", "calleeCtx", "method"]);
    let mut reach = cols(&["method"], &["ctx", "method"]);

    let skip = |id: &Id| bindings.helpers.contains(id);
    let key = |id: &Id| table.key(*id).unwrap_or_default().to_owned();
    let hctx = |id: &Id| contexts.heap_of(*id).to_string();

    for obj in graph.objects.values().filter(|o| !skip(&o.id)) {
        match &obj.data {
            ObjectData::Instance { fields } => {
                for (name, v) in fields {
                    let FieldValue::Object(v) = v else { continue };
                    if skip(v) {
                        continue;
                    }
                    ofv.rows.insert(if sensitive {
                        vec![hctx(&obj.id), key(&obj.id), name.clone(), hctx(v), key(v)]
                    } else {
                        vec![key(&obj.id), name.clone(), key(v)]
                    });
                }
            }
            ObjectData::ObjectArray { elements } => {
                for v in elements.iter().filter_map(FieldValue::object_id) {
                    if skip(&v) {
                        continue;
                    }
                    acv.rows.insert(if sensitive {
                        vec![hctx(&obj.id), key(&obj.id), hctx(&v), key(&v)]
                    } else {
                        vec![key(&obj.id), key(&v)]
                    });
                }
            }
            _ => {}
        }
    }

    for class in graph.classes.values() {
        if is_helper_class(&class.name, names) {
            continue;
        }
        for (name, v) in &class.static_fields {
            let FieldValue::Object(v) = v else { continue };
            if skip(v) {
                continue;
            }
            sfv.rows.insert(if sensitive {
                vec![class.name.clone(), name.clone(), hctx(v), key(v)]
            } else {
                vec![class.name.clone(), name.clone(), key(v)]
            });
        }
    }

    let mut callees = BTreeSet::new();
    let mut in_context = BTreeSet::new();
    for e in &contexts.edges {
        callees.insert(e.callee_method.clone());
        in_context.insert(e.callee_method.clone());
        in_context.insert(e.caller_method.clone());
        if sensitive {
            let caller_ctx = e.caller_ctx.to_string();
            let callee_ctx = e.callee_ctx.to_string();
            cge.rows.insert(vec![caller_ctx.clone(), e.invocation(), callee_ctx.clone(), e.callee_method.clone()]);
            reach.rows.insert(vec![callee_ctx, e.callee_method.clone()]);
            reach.rows.insert(vec![caller_ctx, e.caller_method.clone()]);
        } else {
            cge.rows.insert(vec![e.invocation(), e.callee_method.clone()]);
        }
    }
    for m in contexts.frame_methods.iter().chain(&callees) {
        if sensitive {
            if !in_context.contains(m) {
                reach.rows.insert(vec![contexts.padding_call().to_string(), m.clone()]);
            }
        } else {
            reach.rows.insert(vec![m.clone()]);
        }
    }

    FactSet {
        relations: BTreeMap::from([
            (OBJECT_FIELD_VALUE, ofv),
            (STATIC_FIELD_VALUE, sfv),
            (ARRAY_CONTENTS_VALUE, acv),
            (CALL_GRAPH_EDGE, cge),
            (REACHABLE, reach),
        ]),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub rows: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    /// Settings that shaped the output, as given.
    pub config: serde_json::Value,
    pub dump_sha256: String,
    pub warnings: usize,
    pub files: BTreeMap<String, FileEntry>,
    /// Seconds since the epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub generated_at: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        })
}

/// Writes one CSV per relation plus `manifest.json` into `out_dir`.
pub fn export_facts(
    facts: &FactSet,
    config: serde_json::Value,
    dump_sha256: &str,
    warnings: usize,
    out_dir: &Path,
) -> io::Result<Manifest> {
    std::fs::create_dir_all(out_dir)?;
    let mut files = BTreeMap::new();
    for (name, rel) in &facts.relations {
        let bytes = rel.to_csv();
        let file = format!("{name}.csv");
        std::fs::write(out_dir.join(&file), &bytes)?;
        files.insert(file, FileEntry { rows: rel.rows.len(), sha256: sha256_hex(&bytes) });
    }
    let manifest = Manifest {
        tool: "heapfacts",
        version: env!("CARGO_PKG_VERSION"),
        config,
        dump_sha256: dump_sha256.to_owned(),
        warnings,
        files,
        generated_at: now(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest).map_err(io::Error::other)?;
    json.push(b'\n');
    std::fs::write(out_dir.join(MANIFEST), json)?;
    Ok(manifest)
}
