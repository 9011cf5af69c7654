//! Class bytes kept by the agent, written back out as a zip archive.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Seek, Write};

use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipWriter};

use crate::abstraction::AbstractionTable;
use crate::code::{add_bytes, CodeModel, CodeSource};
use crate::context::ContextError;
use crate::enricher::{self, name_matches, EnricherNames};
use crate::heap::{decode_string, ConcreteObject, FieldValue, HeapGraph, ObjectData, ObjectKind};
use crate::hprof::{BasicType, Id, Warning};

pub const BOOTSTRAP_LOADER: &str = "bootstrap";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassData {
    pub fq_name: String,
    /// Directory name of the defining loader inside the archive.
    pub loader_key: String,
    pub bytecode: Vec<u8>,
}

impl ClassData {
    pub fn entry_name(&self) -> String {
        format!("loader_{}/{}.class", self.loader_key, self.fq_name.replace('.', "/"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error(transparent)]
    Shape(#[from] ContextError),
    #[error(transparent)]
    Zip(#[from] zip::result::ZipError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn sanitize(key: &str) -> String {
    let s: String = key
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    s.trim_matches('_').to_owned()
}

/// Reads every class data helper. Loaders are named after their abstraction
/// key; distinct loaders sharing a key get `#2`, `#3`, ... in id order. When
/// the same (class, loader) pair shows up twice the first object wins.
pub fn collect_class_data(
    graph: &HeapGraph,
    table: &AbstractionTable,
    names: &EnricherNames,
) -> Result<(Vec<ClassData>, Vec<Warning>), ContextError> {
    let mut warnings = Vec::new();
    let helpers: Vec<&ConcreteObject> = graph
        .objects
        .values()
        .filter(|o| o.kind() == ObjectKind::Instance && name_matches(&o.type_name, &names.class_data_class))
        .collect();

    let mut raw = Vec::new();
    for obj in helpers {
        let mismatch = |message: String| ContextError::EnricherShapeMismatch {
            class: obj.type_name.clone(),
            object: obj.id,
            message,
        };
        let target = |field: &str| -> Result<Option<&ConcreteObject>, ContextError> {
            match obj.field(field) {
                None => Err(mismatch(format!("no field {field}"))),
                Some(FieldValue::Object(id)) => Ok(graph.object(*id)),
                Some(FieldValue::Null) | Some(FieldValue::Dangling(_)) => Ok(None),
                Some(FieldValue::Primitive(_)) => Err(mismatch(format!("field {field} is not a reference"))),
            }
        };
        let name = target(enricher::NAME_FIELD)?
            .and_then(|s| decode_string(s, graph))
            .ok_or_else(|| mismatch("name is not a string".into()))?;
        let loader = target(enricher::LOADER_FIELD)?.map(|l| l.id);
        let bytecode = match target(enricher::BYTECODE_FIELD)?.map(|b| &b.data) {
            Some(ObjectData::PrimitiveArray { element_type: BasicType::Byte, data }) => data.clone(),
            _ => return Err(mismatch("bytecode is not a byte[]".into())),
        };
        raw.push((obj.id, name.replace('/', "."), loader, bytecode));
    }

    let loaders: BTreeSet<Id> = raw.iter().filter_map(|r| r.2).collect();
    let mut dir_of: BTreeMap<Id, String> = BTreeMap::new();
    let mut used: BTreeMap<String, usize> = BTreeMap::from([(BOOTSTRAP_LOADER.to_owned(), 1)]);
    for id in loaders {
        let base = sanitize(table.key(id).unwrap_or("unknown"));
        let count = used.entry(base.clone()).or_insert(0);
        *count += 1;
        let dir = if *count == 1 { base } else { format!("{base}#{count}") };
        dir_of.insert(id, dir);
    }

    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (_, fq_name, loader, bytecode) in raw {
        let loader_key = loader.map_or_else(|| BOOTSTRAP_LOADER.to_owned(), |l| dir_of[&l].clone());
        if !seen.insert((fq_name.clone(), loader_key.clone())) {
            warnings.push(Warning::new(format!(
                "class {fq_name} recorded twice for loader {loader_key}; keeping the first"
            )));
            continue;
        }
        out.push(ClassData { fq_name, loader_key, bytecode });
    }
    out.sort_by_key(|a| a.entry_name());
    Ok((out, warnings))
}

/// Writes the classes as a zip with sorted entries and fixed timestamps, so
/// the same heap always gives the same archive bytes.
pub fn write_class_archive<W: Write + Seek>(classes: &[ClassData], out: W) -> Result<W, ArchiveError> {
    let mut zip = ZipWriter::new(out);
    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(DateTime::default())
        .unix_permissions(0o644);
    let mut sorted: Vec<&ClassData> = classes.iter().collect();
    sorted.sort_by_key(|c| c.entry_name());
    for c in sorted {
        zip.start_file(c.entry_name(), options)?;
        zip.write_all(&c.bytecode)?;
    }
    Ok(zip.finish()?)
}

pub fn extract_class_archive(
    graph: &HeapGraph,
    table: &AbstractionTable,
    names: &EnricherNames,
    path: &std::path::Path,
) -> Result<(Vec<ClassData>, Vec<Warning>), ArchiveError> {
    let (classes, warnings) = collect_class_data(graph, table, names)?;
    write_class_archive(&classes, std::fs::File::create(path)?)?;
    Ok((classes, warnings))
}

/// Static inputs plus classes recovered from the heap. A class present in
/// both keeps its static definition; the collision is a warning.
pub fn merged_code_inputs(code: CodeModel, recovered: &[ClassData]) -> CodeModel {
    let mut extra = CodeModel::new(CodeSource::ClassfileScan);
    for c in recovered {
        add_bytes(&mut extra, &c.bytecode, &format!("heap class {} (loader {})", c.fq_name, c.loader_key));
    }
    code.merge(extra)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loader_keys_become_safe_directory_names() {
        assert_eq!(sanitize("<M: void main(java.lang.String[])>/new x.L/0"), "M__void_main_java.lang.String_____new_x.L_0");
        let c = ClassData { fq_name: "a.b.C".into(), loader_key: "k".into(), bytecode: vec![] };
        assert_eq!(c.entry_name(), "loader_k/a/b/C.class");
    }
}
