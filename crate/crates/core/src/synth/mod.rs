//! Synthetic heap dumps.
//!
//! A [`SynthProgram`] declares classes, objects, stack traces and the
//! enricher helper objects at the level a test thinks about them; [`emit`]
//! turns it into HPROF bytes with deterministic ids. The program can also
//! describe the methods and allocation sites of the code that "ran", so a
//! matching [`CodeModel`](crate::code::CodeModel) can be produced alongside.

mod emit;
mod random;
mod verify;

use std::collections::BTreeMap;

use crate::code::{load_site_map, CodeModel};
use crate::enricher::{self, EnricherNames};
use crate::hprof::{BasicType, Value};
use crate::jvm;

/// A class file declaring `public static void make()`, whose body
/// allocates one instance of the class. `name` is in internal form.
pub fn minimal_classfile(name: &str) -> Vec<u8> {
    fn utf8(out: &mut Vec<u8>, s: &str) {
        out.push(1);
        out.extend_from_slice(&(s.len() as u16).to_be_bytes());
        out.extend_from_slice(s.as_bytes());
    }
    let mut b = vec![0xCA, 0xFE, 0xBA, 0xBE, 0, 0, 0, 49, 0, 8];
    utf8(&mut b, name);
    b.extend_from_slice(&[7, 0, 1]);
    utf8(&mut b, "java/lang/Object");
    b.extend_from_slice(&[7, 0, 3]);
    utf8(&mut b, "make");
    utf8(&mut b, "()V");
    utf8(&mut b, "Code");
    // public super; this #2, super #4; no interfaces or fields; one method.
    b.extend_from_slice(&[0, 0x21, 0, 2, 0, 4, 0, 0, 0, 0, 0, 1]);
    // public static make()V with a Code attribute.
    b.extend_from_slice(&[0, 0x09, 0, 5, 0, 6, 0, 1, 0, 7, 0, 0, 0, 17, 0, 1, 0, 0, 0, 0, 0, 5]);
    // new #2; pop; return
    b.extend_from_slice(&[0xBB, 0, 2, 0x57, 0xB1, 0, 0, 0, 0]);
    // no class attributes
    b.extend_from_slice(&[0, 0]);
    b
}

pub use emit::{emit, emit_with, EmitOptions, Emitted, SynthError};
pub use random::{random_program, SynthParams};
pub use verify::verify_round_trip;

/// Index of an object in [`SynthProgram::objects`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjRef(pub usize);

/// Index of a trace in [`SynthProgram::traces`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TraceRef(pub usize);

/// A method and one of its allocation sites, by position in
/// [`SynthProgram::methods`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteRef {
    pub method: usize,
    pub site: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SynthValue {
    Null,
    Ref(ObjRef),
    Prim(Value),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthClass {
    /// Dotted name.
    pub name: String,
    /// `None` only for `java.lang.Object`; other classes default to it.
    pub super_name: Option<String>,
    pub loader: Option<ObjRef>,
    pub fields: Vec<(String, BasicType)>,
    pub statics: Vec<(String, SynthValue)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SynthObjectKind {
    /// Unassigned fields hold null / zero.
    Instance { class: String, fields: Vec<(String, SynthValue)> },
    /// `elem_class` is the element type; the array's type is `elem_class[]`.
    ObjectArray { elem_class: String, elements: Vec<Option<ObjRef>> },
    PrimitiveArray { elem: BasicType, values: Vec<Value> },
    /// A `java.lang.String` plus its backing array.
    Str { content: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthObject {
    pub kind: SynthObjectKind,
    pub trace: Option<TraceRef>,
    /// The allocation site the object truly came from, when the program
    /// models one. Not emitted; used to check site matching.
    pub site: Option<SiteRef>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SynthFrame {
    pub class: String,
    pub method: String,
    pub descriptor: String,
    pub source_file: Option<String>,
    /// Raw HPROF line: 0 = unavailable, negative = unknown/compiled/native.
    pub line: i32,
}

impl SynthFrame {
    pub fn new(class: &str, method: &str, descriptor: &str, line: Option<u32>) -> Self {
        SynthFrame {
            class: class.to_owned(),
            method: method.to_owned(),
            descriptor: descriptor.to_owned(),
            source_file: Some(format!("{}.java", class.rsplit('.').next().unwrap_or(class))),
            line: line.map_or(0, |l| l as i32),
        }
    }

    pub fn signature(&self) -> String {
        jvm::method_signature(&self.class, &self.method, &self.descriptor)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthTrace {
    pub thread_serial: u32,
    /// Innermost first.
    pub frames: Vec<SynthFrame>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthSite {
    pub ty: String,
    pub line: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthMethod {
    pub class: String,
    pub name: String,
    pub descriptor: String,
    /// In bytecode order.
    pub sites: Vec<SynthSite>,
}

impl SynthMethod {
    pub fn signature(&self) -> String {
        jvm::method_signature(&self.class, &self.name, &self.descriptor)
    }

    /// Ordinal of `site` among same-typed sites before it.
    pub fn site_index(&self, site: usize) -> u32 {
        let ty = &self.sites[site].ty;
        self.sites[..site].iter().filter(|s| &s.ty == ty).count() as u32
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StringLayout {
    /// `char[] value`.
    #[default]
    CharArray,
    /// `byte[] value` + `byte coder` (Latin-1 when possible, else UTF-16LE).
    ByteArray,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthProgram {
    pub classes: Vec<SynthClass>,
    pub objects: Vec<SynthObject>,
    pub traces: Vec<SynthTrace>,
    pub methods: Vec<SynthMethod>,
    pub roots: Vec<ObjRef>,
    pub string_layout: StringLayout,
    pub enricher_names: EnricherNames,
}

impl SynthProgram {
    pub fn new() -> Self {
        SynthProgram::default()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty() && self.objects.is_empty() && self.traces.is_empty()
    }

    pub fn class(&self, name: &str) -> Option<&SynthClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn class_mut(&mut self, name: &str) -> Option<&mut SynthClass> {
        self.classes.iter_mut().find(|c| c.name == name)
    }

    /// Declares a class; `super_name` `None` means `java.lang.Object`.
    pub fn add_class(&mut self, name: &str, super_name: Option<&str>, fields: &[(&str, BasicType)]) -> &mut SynthClass {
        let super_name = match super_name {
            Some(s) => Some(s.to_owned()),
            None if name == crate::heap::JAVA_LANG_OBJECT => None,
            None => Some(crate::heap::JAVA_LANG_OBJECT.to_owned()),
        };
        self.classes.push(SynthClass {
            name: name.to_owned(),
            super_name,
            loader: None,
            fields: fields.iter().map(|(n, t)| ((*n).to_owned(), *t)).collect(),
            statics: Vec::new(),
        });
        self.classes.last_mut().expect("just pushed")
    }

    pub fn add_trace(&mut self, frames: Vec<SynthFrame>) -> TraceRef {
        self.traces.push(SynthTrace { thread_serial: 1, frames });
        TraceRef(self.traces.len() - 1)
    }

    pub fn add_object(&mut self, kind: SynthObjectKind, trace: Option<TraceRef>) -> ObjRef {
        self.objects.push(SynthObject { kind, trace, site: None });
        ObjRef(self.objects.len() - 1)
    }

    pub fn add_instance(&mut self, class: &str, fields: Vec<(&str, SynthValue)>, trace: Option<TraceRef>) -> ObjRef {
        let fields = fields.into_iter().map(|(n, v)| (n.to_owned(), v)).collect();
        self.add_object(SynthObjectKind::Instance { class: class.to_owned(), fields }, trace)
    }

    pub fn add_object_array(&mut self, elem_class: &str, elements: Vec<Option<ObjRef>>, trace: Option<TraceRef>) -> ObjRef {
        self.add_object(SynthObjectKind::ObjectArray { elem_class: elem_class.to_owned(), elements }, trace)
    }

    /// All values must have type `elem`.
    pub fn add_primitive_array(&mut self, elem: BasicType, values: Vec<Value>, trace: Option<TraceRef>) -> ObjRef {
        self.add_object(SynthObjectKind::PrimitiveArray { elem, values }, trace)
    }

    pub fn add_string(&mut self, content: &str, trace: Option<TraceRef>) -> ObjRef {
        self.add_object(SynthObjectKind::Str { content: content.to_owned() }, trace)
    }

    /// Assigns a field after creation, e.g. to close reference cycles.
    pub fn set_field(&mut self, obj: ObjRef, name: &str, value: SynthValue) {
        if let Some(SynthObject { kind: SynthObjectKind::Instance { fields, .. }, .. }) = self.objects.get_mut(obj.0) {
            match fields.iter_mut().find(|(n, _)| n == name) {
                Some(slot) => slot.1 = value,
                None => fields.push((name.to_owned(), value)),
            }
        }
    }

    pub fn add_root(&mut self, obj: ObjRef) {
        self.roots.push(obj);
    }

    /// Declares a method of the code that ran; returns its index.
    pub fn add_method(&mut self, class: &str, name: &str, descriptor: &str, sites: Vec<SynthSite>) -> usize {
        self.methods.push(SynthMethod {
            class: class.to_owned(),
            name: name.to_owned(),
            descriptor: descriptor.to_owned(),
            sites,
        });
        self.methods.len() - 1
    }

    fn ensure_class(&mut self, name: &str, fields: &[(&str, BasicType)]) {
        if self.class(name).is_none() {
            self.add_class(name, None, fields);
        }
    }

    /// Adds an `ObjAndCtx` recording that `obj` was allocated with receiver
    /// `ctx`.
    pub fn add_obj_and_ctx(&mut self, obj: ObjRef, ctx: ObjRef) -> ObjRef {
        let class = self.enricher_names.obj_ctx_class.clone();
        self.ensure_class(&class, &[(enricher::OBJ_FIELD, BasicType::Object), (enricher::CTX_FIELD, BasicType::Object)]);
        self.add_instance(
            &class,
            vec![(enricher::OBJ_FIELD, SynthValue::Ref(obj)), (enricher::CTX_FIELD, SynthValue::Ref(ctx))],
            None,
        )
    }

    /// Adds an `EdgeCtx`. `trace` should start with the `EdgeCtx.<init>`
    /// frame, then the callee, then the caller.
    pub fn add_edge_ctx(&mut self, caller_ctx: Option<ObjRef>, callee_ctx: Option<ObjRef>, trace: TraceRef) -> ObjRef {
        let class = self.enricher_names.edge_ctx_class.clone();
        self.ensure_class(
            &class,
            &[(enricher::CALLER_CTX_FIELD, BasicType::Object), (enricher::CALLEE_CTX_FIELD, BasicType::Object)],
        );
        let r = |o: Option<ObjRef>| o.map_or(SynthValue::Null, SynthValue::Ref);
        self.add_instance(
            &class,
            vec![(enricher::CALLER_CTX_FIELD, r(caller_ctx)), (enricher::CALLEE_CTX_FIELD, r(callee_ctx))],
            Some(trace),
        )
    }

    /// A trace of the shape an `EdgeCtx` allocation has: constructor frame,
    /// then `callee`, then `caller` and whatever called it.
    pub fn edge_ctx_trace(&mut self, callee: SynthFrame, callers: Vec<SynthFrame>) -> TraceRef {
        let ctor = SynthFrame::new(&self.enricher_names.edge_ctx_class.clone(), "<init>", "(Ljava/lang/Object;Ljava/lang/Object;)V", None);
        let mut frames = vec![ctor, callee];
        frames.extend(callers);
        self.add_trace(frames)
    }

    /// Adds a `ClassData` with its name string and bytecode array.
    pub fn add_class_data(&mut self, name: &str, loader: Option<ObjRef>, bytecode: &[u8]) -> ObjRef {
        let class = self.enricher_names.class_data_class.clone();
        self.ensure_class(
            &class,
            &[
                (enricher::NAME_FIELD, BasicType::Object),
                (enricher::LOADER_FIELD, BasicType::Object),
                (enricher::BYTECODE_FIELD, BasicType::Object),
            ],
        );
        let name_obj = self.add_string(name, None);
        let bytes = self.add_primitive_array(BasicType::Byte, bytecode.iter().map(|&b| Value::Byte(b as i8)).collect(), None);
        self.add_instance(
            &class,
            vec![
                (enricher::NAME_FIELD, SynthValue::Ref(name_obj)),
                (enricher::LOADER_FIELD, loader.map_or(SynthValue::Null, SynthValue::Ref)),
                (enricher::BYTECODE_FIELD, SynthValue::Ref(bytes)),
            ],
            None,
        )
    }

    /// Site-map text for the declared methods.
    pub fn site_map(&self) -> String {
        let mut out = String::new();
        for m in &self.methods {
            let sig = m.signature();
            if m.sites.is_empty() {
                out.push_str(&sig);
                out.push('\n');
            }
            for (i, s) in m.sites.iter().enumerate() {
                let line = s.line.map_or_else(|| "-".to_owned(), |l| l.to_string());
                out.push_str(&format!("{sig}\t{}\t{line}\t{}\n", s.ty, m.site_index(i)));
            }
        }
        out
    }

    /// The code model of the declared methods.
    pub fn code_model(&self) -> CodeModel {
        load_site_map(&self.site_map()).expect("declared methods form a valid site map")
    }

    /// `(signature, type, site index)` of a site.
    pub fn site_key(&self, site: SiteRef) -> (String, String, u32) {
        let m = &self.methods[site.method];
        (m.signature(), m.sites[site.site].ty.clone(), m.site_index(site.site))
    }

    /// Instance-field layout of a class in dump order: own fields first,
    /// then each superclass's. `None` if a class in the chain is undeclared
    /// or the chain is cyclic.
    pub fn layout(&self, class: &str) -> Option<Vec<(String, BasicType)>> {
        let by_name: BTreeMap<&str, &SynthClass> = self.classes.iter().map(|c| (c.name.as_str(), c)).collect();
        let mut out = Vec::new();
        let mut cur = Some(class);
        let mut steps = 0;
        while let Some(name) = cur {
            // java.lang.Object is implied when not declared.
            if name == crate::heap::JAVA_LANG_OBJECT && !by_name.contains_key(name) {
                break;
            }
            let c = by_name.get(name)?;
            out.extend(c.fields.iter().cloned());
            cur = c.super_name.as_deref();
            steps += 1;
            if steps > by_name.len() {
                return None;
            }
        }
        Some(out)
    }

    /// Dotted type name the object will have in the heap graph.
    pub fn type_name(&self, obj: ObjRef) -> String {
        match &self.objects[obj.0].kind {
            SynthObjectKind::Instance { class, .. } => class.clone(),
            SynthObjectKind::ObjectArray { elem_class, .. } => format!("{elem_class}[]"),
            SynthObjectKind::PrimitiveArray { elem, .. } => format!("{}[]", elem.java_name()),
            SynthObjectKind::Str { .. } => crate::heap::JAVA_LANG_STRING.to_owned(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::parse_classfile;

    #[test]
    fn minimal_classfile_parses() {
        let c = parse_classfile(&minimal_classfile("a/b/G")).unwrap();
        assert_eq!(c.name, "a.b.G");
        assert_eq!(c.super_name.as_deref(), Some("java.lang.Object"));
        let m = &c.methods[0];
        assert_eq!(m.signature, "<a.b.G: void make()>");
        assert!(m.is_static);
        assert_eq!(m.allocations.len(), 1);
        assert_eq!(m.allocations[0].allocated_type, "a.b.G");
    }
}
