//! Concrete heap graph resolved from a [`RawDump`].
//!
//! Resolution joins the records the reader keeps separate: class names from
//! `LOAD CLASS`, field layouts from `CLASS DUMP`, instance field bytes decoded
//! against the layout of the whole superclass chain, and allocation trace
//! serials joined to their frames.

mod strings;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::hprof::{BasicType, HeapSubRecord, Id, IdSize, RawDump, RecordBody, Value, Warning};
use crate::jvm;

pub use strings::decode_string;

pub const JAVA_LANG_OBJECT: &str = "java.lang.Object";
pub const JAVA_LANG_CLASS: &str = "java.lang.Class";
pub const JAVA_LANG_STRING: &str = "java.lang.String";

/// A field or array slot. Every reference is exactly one of these.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FieldValue {
    Null,
    Object(Id),
    /// A reference to an id that has no object in the dump.
    Dangling(Id),
    Primitive(Value),
}

impl FieldValue {
    pub fn object_id(&self) -> Option<Id> {
        match self {
            FieldValue::Object(id) => Some(*id),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObjectKind {
    Instance,
    ObjectArray,
    PrimitiveArray,
    ClassObject,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObjectData {
    Instance { fields: Vec<(String, FieldValue)> },
    ObjectArray { elements: Vec<FieldValue> },
    /// Raw big-endian element bytes.
    PrimitiveArray { element_type: BasicType, data: Vec<u8> },
    /// The `java.lang.Class` mirror of the class with this id.
    ClassObject,
}

/// How an object's class was resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassRef {
    Resolved(Id),
    /// The dump names a class id that has no `CLASS DUMP`.
    Unknown(Id),
    /// Primitive arrays and class mirrors when the dump has no class record
    /// for their type.
    Builtin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConcreteObject {
    pub id: Id,
    pub class_ref: ClassRef,
    /// Dotted type name; arrays in source form (`int[]`, `a.B[][]`).
    pub type_name: String,
    pub data: ObjectData,
    /// Serial of the allocation trace, when the dump tracked allocations and
    /// the serial resolves to a non-empty trace.
    pub alloc_trace: Option<u32>,
}

impl ConcreteObject {
    pub fn kind(&self) -> ObjectKind {
        match self.data {
            ObjectData::Instance { .. } => ObjectKind::Instance,
            ObjectData::ObjectArray { .. } => ObjectKind::ObjectArray,
            ObjectData::PrimitiveArray { .. } => ObjectKind::PrimitiveArray,
            ObjectData::ClassObject => ObjectKind::ClassObject,
        }
    }

    pub fn fields(&self) -> &[(String, FieldValue)] {
        match &self.data {
            ObjectData::Instance { fields } => fields,
            _ => &[],
        }
    }

    /// Last value of the named field; later entries are superclass fields.
    pub fn field(&self, name: &str) -> Option<&FieldValue> {
        self.fields().iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassInfo {
    pub id: Id,
    pub name: String,
    /// `Id::NULL` for the bootstrap loader.
    pub loader_id: Id,
    pub super_ref: Option<Id>,
    pub static_fields: Vec<(String, FieldValue)>,
    pub instance_fields: Vec<(String, BasicType)>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameView {
    pub class_name: String,
    pub method_name: String,
    pub method_descriptor: String,
    pub source_file: Option<String>,
    pub line: Option<u32>,
}

impl FrameView {
    pub fn signature(&self) -> String {
        jvm::method_signature(&self.class_name, &self.method_name, &self.method_descriptor)
    }
}

/// Frames innermost (allocating) first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StackTraceView {
    pub serial: u32,
    pub thread_serial: u32,
    pub frames: Vec<FrameView>,
}

#[derive(Clone, Debug)]
pub struct HeapGraph {
    pub id_size: IdSize,
    pub objects: BTreeMap<Id, ConcreteObject>,
    pub classes: BTreeMap<Id, ClassInfo>,
    pub classes_by_name: BTreeMap<String, Vec<Id>>,
    pub strings_by_content: BTreeMap<String, Vec<Id>>,
    pub gc_roots: Vec<Id>,
    /// Non-empty stack traces by serial.
    pub traces: BTreeMap<u32, StackTraceView>,
    pub dangling: BTreeSet<Id>,
    pub warnings: Vec<Warning>,
}

impl HeapGraph {
    pub fn object(&self, id: Id) -> Option<&ConcreteObject> {
        self.objects.get(&id)
    }

    pub fn alloc_trace(&self, obj: &ConcreteObject) -> Option<&StackTraceView> {
        obj.alloc_trace.and_then(|s| self.traces.get(&s))
    }

    /// The class and its superclasses, nearest first. Stops at a missing
    /// class or a cycle.
    pub fn class_chain(&self, class_id: Id) -> Vec<&ClassInfo> {
        let mut chain = Vec::new();
        let mut seen = BTreeSet::new();
        let mut next = Some(class_id);
        while let Some(id) = next {
            if !seen.insert(id) {
                break;
            }
            let Some(class) = self.classes.get(&id) else { break };
            chain.push(class);
            next = class.super_ref;
        }
        chain
    }

    /// The object's type name followed by its superclass names.
    pub fn type_chain(&self, obj: &ConcreteObject) -> Vec<String> {
        match (obj.kind(), obj.class_ref) {
            (ObjectKind::Instance, ClassRef::Resolved(cid)) => {
                self.class_chain(cid).into_iter().map(|c| c.name.clone()).collect()
            }
            _ => vec![obj.type_name.clone()],
        }
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }
}

/// Resolves a raw dump into a heap graph. Never fails: unresolvable parts
/// become warnings, dangling markers or unknown-class markers.
pub fn build_heap(dump: &RawDump) -> HeapGraph {
    Resolver::new(dump).run()
}

/// Objects whose class is `fq_name` (or a subclass of it, when asked),
/// ordered by id.
pub fn objects_of_class<'g>(graph: &'g HeapGraph, fq_name: &str, include_subclasses: bool) -> Vec<&'g ConcreteObject> {
    graph
        .objects
        .values()
        .filter(|obj| {
            if obj.kind() == ObjectKind::ClassObject {
                return fq_name == obj.type_name;
            }
            if obj.type_name == fq_name {
                return true;
            }
            include_subclasses
                && matches!(obj.class_ref, ClassRef::Resolved(cid)
                    if graph.class_chain(cid).iter().skip(1).any(|c| c.name == fq_name))
        })
        .collect()
}

struct FrameRecord {
    method_name_id: Id,
    method_sig_id: Id,
    source_file_id: Id,
    class_serial: u32,
    line: i32,
}

struct Resolver<'d> {
    dump: &'d RawDump,
    warnings: Vec<Warning>,
    class_names: HashMap<Id, String>,
}

impl<'d> Resolver<'d> {
    fn new(dump: &'d RawDump) -> Self {
        Resolver { dump, warnings: dump.warnings.clone(), class_names: HashMap::new() }
    }

    fn string(&self, id: Id) -> Option<&'d str> {
        self.dump.strings.get(&id).map(String::as_str)
    }

    fn run(mut self) -> HeapGraph {
        let dump = self.dump;
        let id_size = dump.header.id_size;

        let mut serial_to_class = HashMap::new();
        let mut frames = HashMap::new();
        let mut raw_traces = Vec::new();
        for record in &dump.records {
            match &record.body {
                RecordBody::LoadClass { serial, class_obj_id, name_id, .. } => {
                    let name = match self.string(*name_id) {
                        Some(n) => jvm::internal_to_dotted(n),
                        None => {
                            self.warnings.push(Warning::new(format!("class {class_obj_id} has unresolved name string {name_id}")));
                            format!("<unnamed class {class_obj_id}>")
                        }
                    };
                    self.class_names.insert(*class_obj_id, name);
                    serial_to_class.insert(*serial, *class_obj_id);
                }
                RecordBody::StackFrame { frame_id, method_name_id, method_sig_id, source_file_id, class_serial, line } => {
                    frames.insert(
                        *frame_id,
                        FrameRecord {
                            method_name_id: *method_name_id,
                            method_sig_id: *method_sig_id,
                            source_file_id: *source_file_id,
                            class_serial: *class_serial,
                            line: *line,
                        },
                    );
                }
                RecordBody::StackTrace { trace_serial, thread_serial, frame_ids } => {
                    raw_traces.push((*trace_serial, *thread_serial, frame_ids));
                }
                _ => {}
            }
        }

        let traces = self.resolve_traces(&raw_traces, &frames, &serial_to_class);

        // Pass 1: classes and the set of object ids.
        let mut classes = BTreeMap::new();
        let mut object_ids = BTreeSet::new();
        let mut duplicate_ids = 0usize;
        for sub in dump.heap_records() {
            match sub {
                HeapSubRecord::ClassDump(cd) => {
                    let name = match self.class_names.get(&cd.class_obj_id) {
                        Some(n) => n.clone(),
                        None => {
                            self.warnings.push(Warning::new(format!("class dump {} has no LOAD CLASS name", cd.class_obj_id)));
                            format!("<unnamed class {}>", cd.class_obj_id)
                        }
                    };
                    let instance_fields = cd
                        .instance_fields
                        .iter()
                        .map(|f| (self.field_name(f.name_id), f.ty))
                        .collect();
                    classes.insert(
                        cd.class_obj_id,
                        ClassInfo {
                            id: cd.class_obj_id,
                            name,
                            loader_id: cd.loader_id,
                            super_ref: (!cd.super_id.is_null()).then_some(cd.super_id),
                            static_fields: Vec::new(),
                            instance_fields,
                        },
                    );
                    if !object_ids.insert(cd.class_obj_id) {
                        duplicate_ids += 1;
                    }
                }
                HeapSubRecord::InstanceDump { obj_id, .. }
                | HeapSubRecord::ObjectArrayDump { obj_id, .. }
                | HeapSubRecord::PrimitiveArrayDump { obj_id, .. } => {
                    if !object_ids.insert(*obj_id) {
                        duplicate_ids += 1;
                    }
                }
                HeapSubRecord::GcRoot { .. } => {}
            }
        }
        if duplicate_ids > 0 {
            self.warnings.push(Warning::new(format!("{duplicate_ids} heap records reuse an earlier object id; the last one wins")));
        }
        self.check_super_chains(&classes);

        let mut classes_by_name: BTreeMap<String, Vec<Id>> = BTreeMap::new();
        for class in classes.values() {
            classes_by_name.entry(class.name.clone()).or_default().push(class.id);
        }
        let class_class = classes_by_name.get(JAVA_LANG_CLASS).and_then(|ids| ids.first().copied());

        // Pass 2: objects.
        let mut refs = RefResolver { ids: &object_ids, dangling: BTreeSet::new(), dangling_count: 0 };
        let mut objects = BTreeMap::new();
        let mut unresolved_traces = 0usize;
        let mut resolve_trace = |serial: u32| -> Option<u32> {
            if serial == 0 {
                return None;
            }
            match traces.get(&serial) {
                Some(_) => Some(serial),
                None => {
                    if !raw_traces.iter().any(|(s, _, _)| *s == serial) {
                        unresolved_traces += 1;
                    }
                    None
                }
            }
        };
        let mut gc_roots = Vec::new();
        let mut root_set = BTreeSet::new();
        let mut static_values: BTreeMap<Id, Vec<(String, FieldValue)>> = BTreeMap::new();
        for sub in dump.heap_records() {
            match sub {
                HeapSubRecord::GcRoot { obj_id, .. } => {
                    if root_set.insert(*obj_id) {
                        gc_roots.push(*obj_id);
                    }
                }
                HeapSubRecord::ClassDump(cd) => {
                    let statics = cd
                        .static_fields
                        .iter()
                        .map(|f| (self.field_name(f.name_id), refs.value(f.value)))
                        .collect();
                    static_values.insert(cd.class_obj_id, statics);
                    objects.insert(
                        cd.class_obj_id,
                        ConcreteObject {
                            id: cd.class_obj_id,
                            class_ref: class_class.map_or(ClassRef::Builtin, ClassRef::Resolved),
                            type_name: JAVA_LANG_CLASS.to_owned(),
                            data: ObjectData::ClassObject,
                            alloc_trace: resolve_trace(cd.trace_serial),
                        },
                    );
                }
                HeapSubRecord::InstanceDump { obj_id, trace_serial, class_obj_id, field_bytes } => {
                    let (class_ref, type_name, fields) = match classes.get(class_obj_id) {
                        Some(class) => {
                            let fields = self.decode_fields(*obj_id, class.id, &classes, field_bytes, id_size, &mut refs);
                            (ClassRef::Resolved(class.id), class.name.clone(), fields)
                        }
                        None => {
                            self.warnings.push(Warning::new(format!(
                                "instance {obj_id} refers to class {class_obj_id}, which has no class dump"
                            )));
                            let name = match self.class_names.get(class_obj_id) {
                                Some(n) => format!("<unknown class {n}>"),
                                None => format!("<unknown class {class_obj_id}>"),
                            };
                            (ClassRef::Unknown(*class_obj_id), name, Vec::new())
                        }
                    };
                    objects.insert(
                        *obj_id,
                        ConcreteObject {
                            id: *obj_id,
                            class_ref,
                            type_name,
                            data: ObjectData::Instance { fields },
                            alloc_trace: resolve_trace(*trace_serial),
                        },
                    );
                }
                HeapSubRecord::ObjectArrayDump { obj_id, trace_serial, element_class_id, elements } => {
                    let (class_ref, type_name) = match classes.get(element_class_id) {
                        Some(c) => (ClassRef::Resolved(c.id), c.name.clone()),
                        None => match self.class_names.get(element_class_id) {
                            Some(n) => (ClassRef::Unknown(*element_class_id), n.clone()),
                            None => {
                                self.warnings.push(Warning::new(format!(
                                    "object array {obj_id} has unknown array class {element_class_id}"
                                )));
                                (ClassRef::Unknown(*element_class_id), "java.lang.Object[]".to_owned())
                            }
                        },
                    };
                    let elements = elements.iter().map(|&e| refs.value(Value::Object(e))).collect();
                    objects.insert(
                        *obj_id,
                        ConcreteObject {
                            id: *obj_id,
                            class_ref,
                            type_name,
                            data: ObjectData::ObjectArray { elements },
                            alloc_trace: resolve_trace(*trace_serial),
                        },
                    );
                }
                HeapSubRecord::PrimitiveArrayDump { obj_id, trace_serial, element_type, data, .. } => {
                    let type_name = format!("{}[]", element_type.java_name());
                    let class_ref = classes_by_name
                        .get(&type_name)
                        .and_then(|ids| ids.first().copied())
                        .map_or(ClassRef::Builtin, ClassRef::Resolved);
                    objects.insert(
                        *obj_id,
                        ConcreteObject {
                            id: *obj_id,
                            class_ref,
                            type_name,
                            data: ObjectData::PrimitiveArray { element_type: *element_type, data: data.clone() },
                            alloc_trace: resolve_trace(*trace_serial),
                        },
                    );
                }
            }
        }
        for (id, statics) in static_values {
            if let Some(class) = classes.get_mut(&id) {
                class.static_fields = statics;
            }
        }
        if unresolved_traces > 0 {
            self.warnings.push(Warning::new(format!(
                "{unresolved_traces} objects carry a stack trace serial with no STACK TRACE record"
            )));
        }
        if refs.dangling_count > 0 {
            let first = refs.dangling.iter().next().copied().unwrap_or_default();
            self.warnings.push(Warning::new(format!(
                "{} references to {} ids absent from the dump (first {first})",
                refs.dangling_count,
                refs.dangling.len()
            )));
        }

        let mut graph = HeapGraph {
            id_size,
            objects,
            classes,
            classes_by_name,
            strings_by_content: BTreeMap::new(),
            gc_roots,
            traces,
            dangling: refs.dangling,
            warnings: self.warnings,
        };
        strings::index_strings(&mut graph);
        graph
    }

    fn field_name(&mut self, id: Id) -> String {
        match self.string(id) {
            Some(s) => s.to_owned(),
            None => {
                self.warnings.push(Warning::new(format!("field name string {id} is missing")));
                format!("<field {id}>")
            }
        }
    }

    fn resolve_traces(
        &mut self,
        raw: &[(u32, u32, &Vec<Id>)],
        frames: &HashMap<Id, FrameRecord>,
        serial_to_class: &HashMap<u32, Id>,
    ) -> BTreeMap<u32, StackTraceView> {
        let mut traces = BTreeMap::new();
        let mut frame_cache: HashMap<Id, FrameView> = HashMap::new();
        for &(serial, thread_serial, frame_ids) in raw {
            let mut views = Vec::with_capacity(frame_ids.len());
            for fid in frame_ids {
                if let Some(v) = frame_cache.get(fid) {
                    views.push(v.clone());
                    continue;
                }
                let Some(fr) = frames.get(fid) else {
                    self.warnings.push(Warning::new(format!("trace {serial} refers to missing frame {fid}")));
                    continue;
                };
                let class_name = match serial_to_class.get(&fr.class_serial).and_then(|cid| self.class_names.get(cid)) {
                    Some(n) => n.clone(),
                    None => {
                        self.warnings.push(Warning::new(format!("frame {fid} has unknown class serial {}", fr.class_serial)));
                        format!("<unknown class serial {}>", fr.class_serial)
                    }
                };
                let method_name = self.string(fr.method_name_id).unwrap_or("<unknown method>").to_owned();
                let method_descriptor = self.string(fr.method_sig_id).unwrap_or("").to_owned();
                if jvm::parse_method_descriptor(&method_descriptor).is_none() {
                    self.warnings.push(Warning::new(format!(
                        "frame {fid} ({class_name}.{method_name}) has malformed descriptor {method_descriptor:?}"
                    )));
                }
                let view = FrameView {
                    class_name,
                    method_name,
                    method_descriptor,
                    source_file: if fr.source_file_id.is_null() {
                        None
                    } else {
                        self.string(fr.source_file_id).map(str::to_owned)
                    },
                    // 0 = unavailable, negative = unknown/compiled/native.
                    line: (fr.line > 0).then_some(fr.line as u32),
                };
                frame_cache.insert(*fid, view.clone());
                views.push(view);
            }
            if !views.is_empty() {
                traces.insert(serial, StackTraceView { serial, thread_serial, frames: views });
            }
        }
        traces
    }

    fn check_super_chains(&mut self, classes: &BTreeMap<Id, ClassInfo>) {
        for class in classes.values() {
            let mut seen = BTreeSet::new();
            let mut cur = class;
            loop {
                if !seen.insert(cur.id) {
                    self.warnings.push(Warning::new(format!("superclass chain of {} is cyclic", class.name)));
                    break;
                }
                let Some(sup) = cur.super_ref else { break };
                match classes.get(&sup) {
                    Some(s) => cur = s,
                    None => {
                        // Only report at the class whose super is missing.
                        if cur.id == class.id {
                            self.warnings.push(Warning::new(format!(
                                "superclass {sup} of {} has no class dump",
                                class.name
                            )));
                        }
                        break;
                    }
                }
            }
        }
    }

    fn decode_fields(
        &mut self,
        obj_id: Id,
        class_id: Id,
        classes: &BTreeMap<Id, ClassInfo>,
        bytes: &[u8],
        id_size: IdSize,
        refs: &mut RefResolver<'_>,
    ) -> Vec<(String, FieldValue)> {
        let mut layout = Vec::new();
        let mut seen = BTreeSet::new();
        let mut next = Some(class_id);
        while let Some(id) = next {
            if !seen.insert(id) {
                break;
            }
            let Some(class) = classes.get(&id) else { break };
            layout.extend(class.instance_fields.iter());
            next = class.super_ref;
        }
        let expected: usize = layout.iter().map(|(_, ty)| ty.size(id_size)).sum();
        if expected != bytes.len() {
            self.warnings.push(Warning::new(format!(
                "instance {obj_id}: class layout needs {expected} field bytes, record has {}",
                bytes.len()
            )));
            return Vec::new();
        }
        let mut cursor = crate::hprof::reader_cursor(bytes, id_size);
        layout
            .into_iter()
            .map(|(name, ty)| {
                let value = cursor.value(*ty).expect("layout size checked");
                (name.clone(), refs.value(value))
            })
            .collect()
    }
}

struct RefResolver<'a> {
    ids: &'a BTreeSet<Id>,
    dangling: BTreeSet<Id>,
    dangling_count: usize,
}

impl RefResolver<'_> {
    fn value(&mut self, v: Value) -> FieldValue {
        match v {
            Value::Object(id) if id.is_null() => FieldValue::Null,
            Value::Object(id) if self.ids.contains(&id) => FieldValue::Object(id),
            Value::Object(id) => {
                self.dangling.insert(id);
                self.dangling_count += 1;
                FieldValue::Dangling(id)
            }
            other => FieldValue::Primitive(other),
        }
    }
}
