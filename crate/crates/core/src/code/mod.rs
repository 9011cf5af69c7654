//! Static code side of abstraction matching: which allocation instructions
//! exist in which methods, and at which source lines.

mod classfile;
mod sitemap;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use crate::hprof::Warning;

pub use classfile::{parse_classfile, scan_instructions, ClassFileError, Instruction, ParsedClass, MAGIC};
pub use sitemap::{load_site_map, load_site_map_file, write_site_map, SiteMapError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllocationInstr {
    pub bytecode_index: u32,
    /// Dotted type; arrays carry one `[]` per dimension.
    pub allocated_type: String,
    pub line: Option<u32>,
    /// Ordinal among same-typed allocations of the method, in bytecode order.
    pub site_index: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodMeta {
    pub signature: String,
    pub declaring_class: String,
    pub name: String,
    pub descriptor: String,
    pub is_static: bool,
    /// `(start bytecode index, line)` sorted by index.
    pub line_table: Vec<(u32, u32)>,
    pub allocations: Vec<AllocationInstr>,
}

impl MethodMeta {
    /// Source line covering `bci`, if the method has a line table.
    pub fn line_at(&self, bci: u32) -> Option<u32> {
        let idx = self.line_table.partition_point(|&(pc, _)| pc <= bci);
        idx.checked_sub(1).map(|i| self.line_table[i].1)
    }

    /// Sorts allocations by bytecode index and renumbers same-typed sites.
    pub(crate) fn number_sites(&mut self) {
        self.allocations.sort_by_key(|a| a.bytecode_index);
        let mut next: BTreeMap<String, u32> = BTreeMap::new();
        for a in &mut self.allocations {
            let n = next.entry(a.allocated_type.clone()).or_default();
            a.site_index = *n;
            *n += 1;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodeSource {
    #[default]
    ClassfileScan,
    SiteMapFile,
    Merged,
}

impl fmt::Display for CodeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodeSource::ClassfileScan => "classfile-scan",
            CodeSource::SiteMapFile => "site-map-file",
            CodeSource::Merged => "merged",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CodeModel {
    pub methods: BTreeMap<String, MethodMeta>,
    pub classes_seen: BTreeSet<String>,
    /// Superclass names from scanned class files; site maps leave this empty.
    pub supers: BTreeMap<String, String>,
    pub source: CodeSource,
    pub warnings: Vec<Warning>,
}

impl CodeModel {
    pub fn new(source: CodeSource) -> Self {
        CodeModel { source, ..Default::default() }
    }

    pub fn method(&self, signature: &str) -> Option<&MethodMeta> {
        self.methods.get(signature)
    }

    pub fn lookup(&self, class: &str, name: &str, descriptor: &str) -> Option<&MethodMeta> {
        self.methods.get(&crate::jvm::method_signature(class, name, descriptor))
    }

    pub fn site_count(&self) -> usize {
        self.methods.values().map(|m| m.allocations.len()).sum()
    }

    /// Adds a parsed class unless a class of that name is already present, in
    /// which case the existing one is kept and a warning recorded.
    pub fn add_class(&mut self, class: ParsedClass, origin: &str) -> bool {
        if self.classes_seen.contains(&class.name) {
            self.warnings
                .push(Warning::new(format!("duplicate class {} in {origin}; keeping the first definition", class.name)));
            return false;
        }
        self.classes_seen.insert(class.name.clone());
        if let Some(sup) = class.super_name {
            self.supers.insert(class.name.clone(), sup);
        }
        for m in class.methods {
            if self.methods.contains_key(&m.signature) {
                self.warnings.push(Warning::new(format!("duplicate method {} in {origin}", m.signature)));
                continue;
            }
            self.methods.insert(m.signature.clone(), m);
        }
        true
    }

    /// Merges `other` into `self`; classes already present in `self` win.
    pub fn merge(mut self, other: CodeModel) -> CodeModel {
        let mut by_class: BTreeMap<String, Vec<MethodMeta>> = BTreeMap::new();
        for m in other.methods.into_values() {
            by_class.entry(m.declaring_class.clone()).or_default().push(m);
        }
        for name in other.classes_seen {
            let methods = by_class.remove(&name).unwrap_or_default();
            let super_name = other.supers.get(&name).cloned();
            self.add_class(ParsedClass { name, super_name, methods }, "merged input");
        }
        self.warnings.extend(other.warnings);
        self.source = CodeSource::Merged;
        self
    }
}

fn is_archive(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "jar" | "zip" | "apk" | "war"))
}

fn is_classfile(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("class")
}

/// Loads every class file under the given paths. Directories are walked in
/// sorted order; archives are read entry by entry in name order. Problems
/// with individual entries become warnings.
pub fn scan_inputs<P: AsRef<Path>>(paths: &[P]) -> CodeModel {
    let mut model = CodeModel::new(CodeSource::ClassfileScan);
    for path in paths {
        let path = path.as_ref();
        if path.is_dir() {
            let walk = walkdir::WalkDir::new(path).sort_by_file_name();
            for entry in walk {
                match entry {
                    Ok(e) if e.file_type().is_file() => scan_file(&mut model, e.path()),
                    Ok(_) => {}
                    Err(err) => model.warnings.push(Warning::new(format!("{}: {err}", path.display()))),
                }
            }
        } else {
            scan_file(&mut model, path);
        }
    }
    model
}

fn scan_file(model: &mut CodeModel, path: &Path) {
    let origin = path.display().to_string();
    if is_archive(path) {
        if let Err(err) = scan_archive(model, path) {
            model.warnings.push(Warning::new(format!("{origin}: {err}")));
        }
    } else if is_classfile(path) {
        match std::fs::read(path) {
            Ok(bytes) => add_bytes(model, &bytes, &origin),
            Err(err) => model.warnings.push(Warning::new(format!("{origin}: {err}"))),
        }
    } else if !path.exists() {
        model.warnings.push(Warning::new(format!("{origin}: no such file or directory")));
    }
}

fn scan_archive(model: &mut CodeModel, path: &Path) -> Result<(), zip::result::ZipError> {
    let mut archive = zip::ZipArchive::new(std::fs::File::open(path)?)?;
    let mut names: Vec<String> = archive.file_names().filter(|n| n.ends_with(".class")).map(str::to_owned).collect();
    names.sort();
    for name in names {
        let origin = format!("{}!{name}", path.display());
        let mut bytes = Vec::new();
        match archive.by_name(&name).map(|mut f| f.read_to_end(&mut bytes)) {
            Ok(Ok(_)) => add_bytes(model, &bytes, &origin),
            Ok(Err(err)) => model.warnings.push(Warning::new(format!("{origin}: {err}"))),
            Err(err) => model.warnings.push(Warning::new(format!("{origin}: {err}"))),
        }
    }
    Ok(())
}

pub(crate) fn add_bytes(model: &mut CodeModel, bytes: &[u8], origin: &str) {
    match parse_classfile(bytes) {
        Ok(class) => {
            model.add_class(class, origin);
        }
        Err(err) => model.warnings.push(Warning::new(format!("{origin}: malformed class file: {err}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(allocs: &[(u32, &str)]) -> MethodMeta {
        let mut m = MethodMeta {
            signature: "<C: void m()>".into(),
            declaring_class: "C".into(),
            name: "m".into(),
            descriptor: "()V".into(),
            is_static: false,
            line_table: vec![(0, 10), (4, 11), (9, 13)],
            allocations: allocs
                .iter()
                .map(|&(bci, ty)| AllocationInstr { bytecode_index: bci, allocated_type: ty.into(), line: None, site_index: 0 })
                .collect(),
        };
        m.number_sites();
        m
    }

    #[test]
    fn line_lookup_uses_covering_entry() {
        let m = meta(&[]);
        assert_eq!(m.line_at(0), Some(10));
        assert_eq!(m.line_at(3), Some(10));
        assert_eq!(m.line_at(4), Some(11));
        assert_eq!(m.line_at(100), Some(13));
        let bare = MethodMeta { line_table: vec![], ..m };
        assert_eq!(bare.line_at(0), None);
    }

    #[test]
    fn site_indices_follow_bytecode_order_per_type() {
        let m = meta(&[(9, "A"), (0, "A"), (4, "B")]);
        let got: Vec<_> = m.allocations.iter().map(|a| (a.bytecode_index, a.allocated_type.as_str(), a.site_index)).collect();
        assert_eq!(got, vec![(0, "A", 0), (4, "B", 0), (9, "A", 1)]);
    }

    #[test]
    fn duplicate_class_keeps_first() {
        let mut model = CodeModel::default();
        let a = ParsedClass { name: "C".into(), super_name: None, methods: vec![meta(&[(0, "A")])] };
        let b = ParsedClass { name: "C".into(), super_name: None, methods: vec![meta(&[])] };
        assert!(model.add_class(a, "one"));
        assert!(!model.add_class(b, "two"));
        assert_eq!(model.warnings.len(), 1);
        assert_eq!(model.site_count(), 1);
    }

    #[test]
    fn empty_dir_scans_to_empty_model() {
        let dir = tempfile::tempdir().unwrap();
        let model = scan_inputs(&[dir.path()]);
        assert!(model.methods.is_empty() && model.classes_seen.is_empty() && model.warnings.is_empty());
    }
}
