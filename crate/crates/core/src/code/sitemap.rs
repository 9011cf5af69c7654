//! Site-map files: a text stand-in for class files.
//!
//! One record per line, tab separated (shown as `\t`):
//!
//! ```text
//! <a.b.C: void m()>\tjava.lang.Object\t5\t0
//! ```
//!
//! i.e. signature, allocated type, line (`-` if unknown) and site index. A
//! line holding only a signature declares a method with no allocations.
//! Blank lines and lines starting with `#` are ignored. Rows of one method
//! are taken to be in bytecode order, so same-typed site indices must count
//! up from 0 in file order.

use std::collections::BTreeMap;
use std::path::Path;

use super::{AllocationInstr, CodeModel, CodeSource, MethodMeta, ParsedClass};
use crate::jvm;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SiteMapError {
    #[error("site map line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("reading site map: {0}")]
    Io(String),
}

fn syntax(line: usize, message: impl Into<String>) -> SiteMapError {
    SiteMapError::Syntax { line, message: message.into() }
}

pub fn load_site_map_file(path: impl AsRef<Path>) -> Result<CodeModel, SiteMapError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| SiteMapError::Io(format!("{}: {e}", path.as_ref().display())))?;
    load_site_map(&text)
}

pub fn load_site_map(text: &str) -> Result<CodeModel, SiteMapError> {
    let mut methods: BTreeMap<String, MethodMeta> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 1 && cols.len() != 4 {
            return Err(syntax(lineno, format!("expected 1 or 4 tab-separated columns, found {}", cols.len())));
        }
        let sig = cols[0];
        let (class, name, descriptor) =
            jvm::parse_method_signature(sig).ok_or_else(|| syntax(lineno, format!("malformed signature {sig:?}")))?;
        let canonical = jvm::method_signature(&class, &name, &descriptor);
        if canonical != sig {
            return Err(syntax(lineno, format!("signature {sig:?} is not canonical (expected {canonical:?})")));
        }
        let meta = methods.entry(canonical.clone()).or_insert_with(|| MethodMeta {
            signature: canonical,
            declaring_class: class,
            name,
            descriptor,
            is_static: false,
            line_table: Vec::new(),
            allocations: Vec::new(),
        });
        if cols.len() == 1 {
            continue;
        }
        let ty = cols[1].trim();
        if ty.is_empty() || ty.contains(char::is_whitespace) {
            return Err(syntax(lineno, format!("bad allocated type {:?}", cols[1])));
        }
        let src_line = match cols[2].trim() {
            "-" => None,
            s => match s.parse::<u32>() {
                Ok(n) if n > 0 => Some(n),
                _ => return Err(syntax(lineno, format!("bad line number {s:?}"))),
            },
        };
        let site_index: u32 =
            cols[3].trim().parse().map_err(|_| syntax(lineno, format!("bad site index {:?}", cols[3])))?;
        let expected = meta.allocations.iter().filter(|a| a.allocated_type == ty).count() as u32;
        if site_index < expected {
            return Err(syntax(lineno, format!("duplicate site index {site_index} for {ty} in {}", meta.signature)));
        }
        if site_index != expected {
            return Err(syntax(
                lineno,
                format!("site index {site_index} for {ty} in {} is out of order (expected {expected})", meta.signature),
            ));
        }
        let bytecode_index = meta.allocations.len() as u32;
        meta.allocations.push(AllocationInstr { bytecode_index, allocated_type: ty.to_owned(), line: src_line, site_index });
    }

    let mut model = CodeModel::new(CodeSource::SiteMapFile);
    let mut by_class: BTreeMap<String, Vec<MethodMeta>> = BTreeMap::new();
    for m in methods.into_values() {
        by_class.entry(m.declaring_class.clone()).or_default().push(m);
    }
    for (name, methods) in by_class {
        model.add_class(ParsedClass { name, super_name: None, methods }, "site map");
    }
    Ok(model)
}

/// Renders a model in site-map form; `load_site_map` reads it back to the
/// same sites.
pub fn write_site_map(model: &CodeModel) -> String {
    let mut out = String::new();
    for m in model.methods.values() {
        if m.allocations.is_empty() {
            out.push_str(&m.signature);
            out.push('\n');
        }
        for a in &m.allocations {
            let line = a.line.map_or_else(|| "-".to_owned(), |l| l.to_string());
            out.push_str(&format!("{}\t{}\t{}\t{}\n", m.signature, a.allocated_type, line, a.site_index));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_empty_model() {
        let model = load_site_map("").unwrap();
        assert!(model.methods.is_empty());
        assert_eq!(model.source, CodeSource::SiteMapFile);
    }

    #[test]
    fn single_row_transcribes_directly() {
        let model = load_site_map("<C: void m()>\tjava.lang.Object\t5\t0\n").unwrap();
        let m = model.lookup("C", "m", "()V").unwrap();
        assert_eq!(
            m.allocations,
            vec![AllocationInstr { bytecode_index: 0, allocated_type: "java.lang.Object".into(), line: Some(5), site_index: 0 }]
        );
        assert!(model.classes_seen.contains("C"));
    }

    #[test]
    fn duplicate_rows_are_rejected_with_line_number() {
        let text = "<C: void m()>\tA\t5\t0\n<C: void m()>\tA\t6\t0\n";
        assert!(matches!(load_site_map(text), Err(SiteMapError::Syntax { line: 2, .. })));
    }

    #[test]
    fn malformed_rows_are_rejected() {
        for bad in ["C.m()V\tA\t1\t0", "<C: void m()>\tA\t1", "<C: void m()>\tA\tx\t0", "<C: void m()>\tA\t1\t1"] {
            assert!(load_site_map(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn write_then_load_round_trips() {
        let text = "# comment\n<C: void m()>\tA\t5\t0\n<C: void m()>\tB\t-\t0\n<C: void m()>\tA\t7\t1\n<D: int f(int)>\n";
        let model = load_site_map(text).unwrap();
        let again = load_site_map(&write_site_map(&model)).unwrap();
        assert_eq!(model.methods, again.methods);
        assert!(again.lookup("D", "f", "(I)I").unwrap().allocations.is_empty());
    }
}
