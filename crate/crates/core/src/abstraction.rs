//! Object abstractions: which static entity stands for each heap object.
//!
//! Class mirrors are identified by class name, strings by content (or all
//! merged), and everything else by the allocation site its trace points at.
//! Objects whose trace leads nowhere in the code model get a per-type dummy.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::code::{AllocationInstr, CodeModel};
use crate::heap::{decode_string, FrameView, HeapGraph, ObjectKind, StackTraceView, JAVA_LANG_STRING, ConcreteObject};
use crate::hprof::Id;
use crate::jvm;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbstractionKind {
    AllocSite,
    ClassIdentity,
    StringIdentity,
    MergedString,
    Dummy,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjAbstraction {
    pub kind: AbstractionKind,
    pub key: String,
    pub type_name: String,
}

impl fmt::Display for ObjAbstraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbstractionConfig {
    pub distinguish_strings_by_content: bool,
    pub distinguish_loaders: bool,
    pub excluded_frame_prefixes: Vec<String>,
    pub commonplace_types: BTreeSet<String>,
}

impl Default for AbstractionConfig {
    fn default() -> Self {
        let mut commonplace: BTreeSet<String> = jvm::PRIMITIVE_TYPES.iter().map(|t| format!("{t}[]")).collect();
        for t in [JAVA_LANG_STRING, "java.lang.StringBuilder", "java.lang.StringBuffer"] {
            commonplace.insert(t.to_owned());
        }
        AbstractionConfig {
            distinguish_strings_by_content: false,
            distinguish_loaders: false,
            excluded_frame_prefixes: vec!["java.lang.reflect".into(), "jdk.internal.reflect".into(), "sun.reflect".into()],
            commonplace_types: commonplace,
        }
    }
}

impl AbstractionConfig {
    pub fn is_excluded(&self, class_name: &str) -> bool {
        self.excluded_frame_prefixes.iter().any(|p| {
            class_name.strip_prefix(p.as_str()).is_some_and(|rest| rest.is_empty() || rest.starts_with('.'))
        })
    }

    pub fn is_commonplace(&self, type_name: &str) -> bool {
        self.commonplace_types.contains(type_name)
    }
}

pub fn alloc_site_key(signature: &str, ty: &str, site_index: u32) -> String {
    format!("{signature}/new {ty}/{site_index}")
}

pub fn dummy_key(ty: &str) -> String {
    format!("<dynamic {ty} (unknown site)>")
}

pub fn class_key(name: &str, loader: Option<Id>) -> String {
    match loader {
        Some(l) => format!("<class {name} loader {l}>"),
        None => format!("<class {name}>"),
    }
}

pub fn string_key(content: &str) -> String {
    format!("<string \"{}\">", content.escape_default())
}

pub fn merged_string_key(ty: &str) -> String {
    format!("<merged-string {ty}>")
}

/// Index of a frame that survives the skip rules: not a constructor of the
/// object's type chain and not in an excluded package.
fn survives(frame: &FrameView, type_chain: &[String], cfg: &AbstractionConfig) -> bool {
    let ctor_of_chain = frame.method_name == "<init>" && type_chain.contains(&frame.class_name);
    !ctor_of_chain && !cfg.is_excluded(&frame.class_name)
}

/// Finds the allocation instruction an object most probably came from.
///
/// Frames are walked innermost first. Constructors of the object's own type
/// or its superclasses (`type_chain`, nearest first) and frames in excluded
/// packages are skipped. The first remaining frame whose method is in the
/// code model decides: an allocation of the type at the frame's line wins,
/// else any allocation of the type in that method; ties go to the smallest
/// bytecode index, then site index. Returns the frame's index in the trace.
pub fn match_allocation_frame<'c>(
    trace: &StackTraceView,
    type_chain: &[String],
    code: &'c CodeModel,
    cfg: &AbstractionConfig,
) -> Option<(usize, &'c AllocationInstr)> {
    let obj_type = type_chain.first()?;
    let (idx, frame, method) = trace
        .frames
        .iter()
        .enumerate()
        .filter(|(_, f)| survives(f, type_chain, cfg))
        .find_map(|(i, f)| code.method(&f.signature()).map(|m| (i, f, m)))?;
    let best = |pred: &dyn Fn(&AllocationInstr) -> bool| {
        method
            .allocations
            .iter()
            .filter(|a| a.allocated_type == *obj_type && pred(a))
            .min_by_key(|a| (a.bytecode_index, a.site_index))
    };
    let by_line = frame.line.and_then(|line| best(&|a| a.line == Some(line)));
    by_line.or_else(|| best(&|_| true)).map(|a| (idx, a))
}

/// Where an abstracted object was allocated, as far as the trace tells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllocInfo {
    /// Index of the allocating frame in the object's trace.
    pub frame_index: usize,
    pub class_name: String,
}

pub const UNKNOWN_ALLOCATOR: &str = "<<unknown-class>>";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AbstractionTable {
    pub entries: BTreeMap<Id, ObjAbstraction>,
    pub alloc: BTreeMap<Id, AllocInfo>,
}

impl AbstractionTable {
    pub fn get(&self, id: Id) -> Option<&ObjAbstraction> {
        self.entries.get(&id)
    }

    pub fn key(&self, id: Id) -> Option<&str> {
        self.entries.get(&id).map(|a| a.key.as_str())
    }

    /// Class in whose code the object was allocated.
    pub fn allocator_class(&self, id: Id) -> &str {
        self.alloc.get(&id).map_or(UNKNOWN_ALLOCATOR, |a| a.class_name.as_str())
    }

    pub fn count(&self, kind: AbstractionKind) -> usize {
        self.entries.values().filter(|a| a.kind == kind).count()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn abstract_with_info(
    obj: &ConcreteObject,
    graph: &HeapGraph,
    code: &CodeModel,
    cfg: &AbstractionConfig,
) -> (ObjAbstraction, Option<AllocInfo>) {
    let make = |kind, key: String, type_name: &str| ObjAbstraction { kind, key, type_name: type_name.to_owned() };
    if obj.kind() == ObjectKind::ClassObject {
        let (name, loader) = match graph.classes.get(&obj.id) {
            Some(c) => (c.name.as_str(), (cfg.distinguish_loaders && !c.loader_id.is_null()).then_some(c.loader_id)),
            None => (obj.type_name.as_str(), None),
        };
        return (make(AbstractionKind::ClassIdentity, class_key(name, loader), &obj.type_name), None);
    }

    let trace = graph.alloc_trace(obj);
    let type_chain = graph.type_chain(obj);
    let info = trace.and_then(|t| {
        let matched = match_allocation_frame(t, &type_chain, code, cfg).map(|(i, _)| i);
        let idx = matched.or_else(|| t.frames.iter().position(|f| survives(f, &type_chain, cfg)))?;
        Some(AllocInfo { frame_index: idx, class_name: t.frames[idx].class_name.clone() })
    });

    if obj.kind() == ObjectKind::Instance && obj.type_name == JAVA_LANG_STRING {
        let abs = match decode_string(obj, graph).filter(|_| cfg.distinguish_strings_by_content) {
            Some(content) => make(AbstractionKind::StringIdentity, string_key(&content), &obj.type_name),
            None => make(AbstractionKind::MergedString, merged_string_key(&obj.type_name), &obj.type_name),
        };
        return (abs, info);
    }

    let site = trace.and_then(|t| match_allocation_frame(t, &type_chain, code, cfg));
    let abs = match site {
        Some((idx, instr)) => {
            let sig = trace.expect("matched a trace").frames[idx].signature();
            make(AbstractionKind::AllocSite, alloc_site_key(&sig, &instr.allocated_type, instr.site_index), &obj.type_name)
        }
        None => make(AbstractionKind::Dummy, dummy_key(&obj.type_name), &obj.type_name),
    };
    (abs, info)
}

pub fn abstract_object(obj: &ConcreteObject, graph: &HeapGraph, code: &CodeModel, cfg: &AbstractionConfig) -> ObjAbstraction {
    abstract_with_info(obj, graph, code, cfg).0
}

/// Abstractions of every object in the graph.
pub fn abstraction_table(graph: &HeapGraph, code: &CodeModel, cfg: &AbstractionConfig) -> AbstractionTable {
    let mut table = AbstractionTable::default();
    for obj in graph.objects.values() {
        let (abs, info) = abstract_with_info(obj, graph, code, cfg);
        table.entries.insert(obj.id, abs);
        if let Some(info) = info {
            table.alloc.insert(obj.id, info);
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::load_site_map;

    fn frame(class: &str, method: &str, desc: &str, line: Option<u32>) -> FrameView {
        FrameView {
            class_name: class.into(),
            method_name: method.into(),
            method_descriptor: desc.into(),
            source_file: None,
            line,
        }
    }

    fn trace(frames: Vec<FrameView>) -> StackTraceView {
        StackTraceView { serial: 1, thread_serial: 1, frames }
    }

    #[test]
    fn constructor_frames_are_skipped_and_line_matches() {
        let code = load_site_map("<M: C make()>\tC\t16\t0\n<M: C make()>\tC\t17\t1\n").unwrap();
        let t = trace(vec![frame("C", "<init>", "()V", Some(3)), frame("M", "make", "()LC;", Some(17))]);
        let (idx, site) = match_allocation_frame(&t, &["C".into(), "java.lang.Object".into()], &code, &Default::default()).unwrap();
        assert_eq!(idx, 1);
        assert_eq!((site.line, site.site_index), (Some(17), 1));
    }

    #[test]
    fn reflection_only_traces_match_nothing() {
        let code = load_site_map("<java.lang.reflect.Constructor: java.lang.Object newInstance()>\tC\t1\t0\n").unwrap();
        let t = trace(vec![
            frame("java.lang.reflect.Constructor", "newInstance", "()Ljava/lang/Object;", Some(1)),
            frame("jdk.internal.reflect.X", "go", "()V", None),
        ]);
        assert_eq!(match_allocation_frame(&t, &["C".into()], &code, &Default::default()), None);
    }

    #[test]
    fn missing_line_falls_back_to_type() {
        let code = load_site_map("<M: void run()>\tD\t4\t0\n<M: void run()>\tC\t9\t0\n").unwrap();
        let t = trace(vec![frame("M", "run", "()V", None)]);
        let (_, site) = match_allocation_frame(&t, &["C".into()], &code, &Default::default()).unwrap();
        assert_eq!(site.line, Some(9));
        // A line that matches no site of the type also falls back.
        let t = trace(vec![frame("M", "run", "()V", Some(4))]);
        assert_eq!(match_allocation_frame(&t, &["C".into()], &code, &Default::default()).unwrap().1.line, Some(9));
    }

    #[test]
    fn first_model_frame_decides() {
        // The inner frame is in the model but allocates no C: no match, even
        // though an outer frame does.
        let code = load_site_map("<A: void a()>\tD\t1\t0\n<B: void b()>\tC\t2\t0\n").unwrap();
        let t = trace(vec![frame("A", "a", "()V", Some(1)), frame("B", "b", "()V", Some(2))]);
        assert_eq!(match_allocation_frame(&t, &["C".into()], &code, &Default::default()), None);
    }

    #[test]
    fn prefixes_match_on_package_boundaries() {
        let cfg = AbstractionConfig::default();
        assert!(cfg.is_excluded("java.lang.reflect.Method"));
        assert!(cfg.is_excluded("sun.reflect"));
        assert!(!cfg.is_excluded("java.lang.reflection.Thing"));
        assert!(cfg.is_commonplace("int[]") && cfg.is_commonplace("java.lang.StringBuilder"));
        assert!(!cfg.is_commonplace("int[][]"));
    }

    #[test]
    fn key_formats() {
        assert_eq!(class_key("com.example.C", None), "<class com.example.C>");
        assert_eq!(dummy_key("com.example.C"), "<dynamic com.example.C (unknown site)>");
        assert_eq!(string_key("config.xml"), "<string \"config.xml\">");
        assert_eq!(string_key("a\"b\n"), "<string \"a\\\"b\\n\">");
        assert_eq!(alloc_site_key("<M: void m()>", "C[]", 2), "<M: void m()>/new C[]/2");
    }
}
