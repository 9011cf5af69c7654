use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::*;
use crate::heap::{JAVA_LANG_OBJECT, JAVA_LANG_STRING};
use crate::hprof::{
    ClassDump, DumpHeader, FieldDecl, GcRootKind, HeapSubRecord, HprofWriter, Id, IdSize, RawRecord, RecordBody,
    StaticField,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthError {
    #[error("inconsistent program: {0}")]
    InconsistentProgram(String),
}

fn inconsistent(msg: impl Into<String>) -> SynthError {
    SynthError::InconsistentProgram(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmitOptions {
    pub id_size: IdSize,
    /// Heap sub-records per `HEAP DUMP SEGMENT`.
    pub segment_records: usize,
}

impl EmitOptions {
    pub fn new(id_size: IdSize) -> Self {
        EmitOptions { id_size, segment_records: 4096 }
    }
}

/// Bytes of an emitted program plus the ids it was given.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Emitted {
    pub bytes: Vec<u8>,
    pub header_len: usize,
    /// Offsets just past each record, the final `HEAP DUMP END` included.
    pub record_ends: Vec<usize>,
    pub object_ids: Vec<Id>,
    /// Backing array of each string object, keyed by object index.
    pub backing_ids: BTreeMap<usize, Id>,
    pub class_ids: BTreeMap<String, Id>,
    pub trace_serials: Vec<u32>,
}

impl Emitted {
    pub fn id(&self, obj: ObjRef) -> Id {
        self.object_ids[obj.0]
    }

    /// Record boundaries a truncated copy can be cut at: the end of the
    /// header and the end of every record before `HEAP DUMP END`.
    pub fn truncation_points(&self) -> Vec<usize> {
        let mut points = vec![self.header_len];
        points.extend(self.record_ends.iter().take(self.record_ends.len().saturating_sub(1)));
        points
    }
}

pub fn emit(program: &SynthProgram, id_size: IdSize) -> Result<Emitted, SynthError> {
    emit_with(program, &EmitOptions::new(id_size))
}

struct EmitClass {
    name: String,
    super_name: Option<String>,
    loader: Option<ObjRef>,
    fields: Vec<(String, BasicType)>,
    statics: Vec<(String, SynthValue)>,
}

fn string_fields(layout: StringLayout) -> Vec<(String, BasicType)> {
    let mut f = vec![("value".to_owned(), BasicType::Object), ("hash".to_owned(), BasicType::Int)];
    if layout == StringLayout::ByteArray {
        f.push(("coder".to_owned(), BasicType::Byte));
    }
    f
}

/// Internal (`LOAD CLASS`) spelling of a dotted type.
fn internal_name(dotted: &str) -> String {
    if dotted.ends_with("[]") {
        jvm::source_to_descriptor(dotted).unwrap_or_else(|| dotted.replace('.', "/"))
    } else {
        dotted.replace('.', "/")
    }
}

fn check_value(program: &SynthProgram, ty: BasicType, v: &SynthValue, what: &str) -> Result<(), SynthError> {
    match (ty, v) {
        (BasicType::Object, SynthValue::Null) => Ok(()),
        (BasicType::Object, SynthValue::Ref(r)) if r.0 < program.objects.len() => Ok(()),
        (BasicType::Object, SynthValue::Ref(r)) => Err(inconsistent(format!("{what} refers to undeclared object #{}", r.0))),
        (t, SynthValue::Prim(p)) if p.basic_type() == t && t != BasicType::Object => Ok(()),
        (t, _) => Err(inconsistent(format!("{what} has a value that does not fit type {}", t.java_name()))),
    }
}

fn collect_classes(program: &SynthProgram) -> Result<Vec<EmitClass>, SynthError> {
    let mut names = BTreeSet::new();
    for c in &program.classes {
        if c.name.is_empty() || !names.insert(c.name.as_str()) {
            return Err(inconsistent(format!("class {:?} declared twice or unnamed", c.name)));
        }
    }
    let has_strings = program.objects.iter().any(|o| matches!(o.kind, SynthObjectKind::Str { .. }));
    if has_strings && names.contains(JAVA_LANG_STRING) {
        return Err(inconsistent("java.lang.String is synthesized for string objects and cannot be declared"));
    }

    let mut out = Vec::new();
    if !names.contains(JAVA_LANG_OBJECT) {
        out.push(EmitClass {
            name: JAVA_LANG_OBJECT.into(),
            super_name: None,
            loader: None,
            fields: Vec::new(),
            statics: Vec::new(),
        });
    }
    if has_strings {
        out.push(EmitClass {
            name: JAVA_LANG_STRING.into(),
            super_name: Some(JAVA_LANG_OBJECT.into()),
            loader: None,
            fields: string_fields(program.string_layout),
            statics: Vec::new(),
        });
    }
    for c in &program.classes {
        out.push(EmitClass {
            name: c.name.clone(),
            super_name: c.super_name.clone(),
            loader: c.loader,
            fields: c.fields.clone(),
            statics: c.statics.clone(),
        });
    }
    let declared: BTreeSet<String> = out.iter().map(|c| c.name.clone()).collect();
    let mut arrays = Vec::new();
    for o in &program.objects {
        if let SynthObjectKind::ObjectArray { elem_class, .. } = &o.kind {
            let base = elem_class.trim_end_matches("[]");
            if !declared.contains(base) {
                return Err(inconsistent(format!("array element class {elem_class} is not declared")));
            }
            let ty = format!("{elem_class}[]");
            if !declared.contains(&ty) && !arrays.contains(&ty) {
                arrays.push(ty);
            }
        }
    }
    for ty in arrays {
        out.push(EmitClass {
            name: ty,
            super_name: Some(JAVA_LANG_OBJECT.into()),
            loader: None,
            fields: Vec::new(),
            statics: Vec::new(),
        });
    }
    Ok(out)
}

fn layout_of(classes: &HashMap<&str, &EmitClass>, name: &str) -> Result<Vec<(String, BasicType)>, SynthError> {
    let mut out = Vec::new();
    let mut cur = Some(name);
    let mut steps = 0;
    while let Some(n) = cur {
        let c = classes.get(n).ok_or_else(|| inconsistent(format!("class {n} is not declared")))?;
        out.extend(c.fields.iter().cloned());
        cur = c.super_name.as_deref();
        steps += 1;
        if steps > classes.len() {
            return Err(inconsistent(format!("superclass chain of {name} is cyclic")));
        }
    }
    Ok(out)
}

struct Strings {
    ids: HashMap<String, Id>,
    records: Vec<RawRecord>,
}

impl Strings {
    fn id(&mut self, text: &str) -> Id {
        if let Some(id) = self.ids.get(text) {
            return *id;
        }
        let id = Id(self.ids.len() as u64 + 1);
        self.ids.insert(text.to_owned(), id);
        self.records.push(RawRecord::new(RecordBody::Utf8 { id, text: text.to_owned() }));
        id
    }
}

fn encode_string(content: &str, layout: StringLayout) -> (BasicType, Vec<Value>, Option<i8>) {
    match layout {
        StringLayout::CharArray => (BasicType::Char, content.encode_utf16().map(Value::Char).collect(), None),
        StringLayout::ByteArray => {
            if content.chars().all(|c| (c as u32) <= 0xFF) {
                (BasicType::Byte, content.chars().map(|c| Value::Byte(c as u32 as u8 as i8)).collect(), Some(0))
            } else {
                let bytes: Vec<Value> = content
                    .encode_utf16()
                    .flat_map(|u| u.to_le_bytes())
                    .map(|b| Value::Byte(b as i8))
                    .collect();
                (BasicType::Byte, bytes, Some(1))
            }
        }
    }
}

pub fn emit_with(program: &SynthProgram, opts: &EmitOptions) -> Result<Emitted, SynthError> {
    let mut writer = HprofWriter::new(&DumpHeader::new(opts.id_size));
    let header_len = writer.header_len();
    if program.is_empty() {
        writer.heap_dump_end();
        let record_ends = writer.record_ends().to_vec();
        return Ok(Emitted {
            bytes: writer.finish(),
            header_len,
            record_ends,
            object_ids: Vec::new(),
            backing_ids: BTreeMap::new(),
            class_ids: BTreeMap::new(),
            trace_serials: Vec::new(),
        });
    }

    let classes = collect_classes(program)?;
    let by_name: HashMap<&str, &EmitClass> = classes.iter().map(|c| (c.name.as_str(), c)).collect();
    let n_objects = program.objects.len();
    let check_ref = |r: ObjRef, what: &str| {
        if r.0 < n_objects {
            Ok(())
        } else {
            Err(inconsistent(format!("{what} refers to undeclared object #{}", r.0)))
        }
    };
    let check_trace = |t: Option<TraceRef>, what: &str| match t {
        Some(t) if t.0 >= program.traces.len() => Err(inconsistent(format!("{what} refers to undeclared trace #{}", t.0))),
        _ => Ok(()),
    };
    for c in &classes {
        if let Some(s) = &c.super_name {
            if !by_name.contains_key(s.as_str()) {
                return Err(inconsistent(format!("superclass {s} of {} is not declared", c.name)));
            }
        }
        layout_of(&by_name, &c.name)?;
        if let Some(l) = c.loader {
            check_ref(l, &format!("loader of {}", c.name))?;
        }
        for (name, v) in &c.statics {
            let ty = match v {
                SynthValue::Prim(p) => p.basic_type(),
                _ => BasicType::Object,
            };
            check_value(program, ty, v, &format!("static {}.{name}", c.name))?;
        }
    }

    // Ids: classes first, then objects (a string's backing array right after it).
    let id_step = 0x10u64;
    let mut next_id = 0x1000u64;
    let mut fresh = || {
        let id = Id(next_id);
        next_id += id_step;
        id
    };
    let class_ids: BTreeMap<String, Id> = classes.iter().map(|c| (c.name.clone(), fresh())).collect();
    let mut object_ids = Vec::with_capacity(n_objects);
    let mut backing_ids = BTreeMap::new();
    for (i, o) in program.objects.iter().enumerate() {
        object_ids.push(fresh());
        if matches!(o.kind, SynthObjectKind::Str { .. }) {
            backing_ids.insert(i, fresh());
        }
    }
    let obj_id = |r: ObjRef| object_ids[r.0];
    let resolve = |v: &SynthValue| match v {
        SynthValue::Null => Value::Object(Id::NULL),
        SynthValue::Ref(r) => Value::Object(obj_id(*r)),
        SynthValue::Prim(p) => *p,
    };

    let mut strings = Strings { ids: HashMap::new(), records: Vec::new() };

    // LOAD CLASS for dumped classes, then for classes seen only in frames.
    let mut serials: BTreeMap<String, u32> = BTreeMap::new();
    let mut load_records = Vec::new();
    let mut class_loads: Vec<(String, Id)> = classes.iter().map(|c| (c.name.clone(), class_ids[&c.name])).collect();
    let mut frame_only_id = next_id + 0x1000_0000;
    for t in &program.traces {
        for f in &t.frames {
            if !class_loads.iter().any(|(n, _)| n == &f.class) {
                class_loads.push((f.class.clone(), Id(frame_only_id)));
                frame_only_id += id_step;
            }
        }
    }
    for (i, (name, class_obj_id)) in class_loads.into_iter().enumerate() {
        let serial = i as u32 + 1;
        let name_id = strings.id(&internal_name(&name));
        serials.insert(name, serial);
        load_records.push(RawRecord::new(RecordBody::LoadClass { serial, class_obj_id, trace_serial: 0, name_id }));
    }

    // Frames and traces.
    let mut frame_ids: HashMap<&SynthFrame, Id> = HashMap::new();
    let mut frame_records = Vec::new();
    let mut trace_records = Vec::new();
    let mut trace_serials = Vec::new();
    for (ti, t) in program.traces.iter().enumerate() {
        let mut ids = Vec::with_capacity(t.frames.len());
        for f in &t.frames {
            let id = match frame_ids.get(f) {
                Some(id) => *id,
                None => {
                    let frame_id = Id(frame_ids.len() as u64 + 1);
                    let method_name_id = strings.id(&f.method);
                    let method_sig_id = strings.id(&f.descriptor);
                    let source_file_id = f.source_file.as_deref().map_or(Id::NULL, |s| strings.id(s));
                    frame_records.push(RawRecord::new(RecordBody::StackFrame {
                        frame_id,
                        method_name_id,
                        method_sig_id,
                        source_file_id,
                        class_serial: serials[&f.class],
                        line: f.line,
                    }));
                    frame_ids.insert(f, frame_id);
                    frame_id
                }
            };
            ids.push(id);
        }
        let serial = ti as u32 + 1;
        trace_serials.push(serial);
        trace_records.push(RawRecord::new(RecordBody::StackTrace {
            trace_serial: serial,
            thread_serial: t.thread_serial,
            frame_ids: ids,
        }));
    }
    let trace_serial = |t: Option<TraceRef>| t.map_or(0, |t| trace_serials[t.0]);

    // Heap.
    let mut subs = Vec::new();
    for r in &program.roots {
        check_ref(*r, "GC root")?;
        subs.push(HeapSubRecord::GcRoot { kind: GcRootKind::Unknown, obj_id: obj_id(*r) });
    }
    for c in &classes {
        let instance_size = c.fields.iter().map(|(_, t)| t.size(opts.id_size) as u32).sum::<u32>()
            + match &c.super_name {
                Some(s) => layout_of(&by_name, s)?.iter().map(|(_, t)| t.size(opts.id_size) as u32).sum::<u32>(),
                None => 0,
            };
        let static_fields = c
            .statics
            .iter()
            .map(|(n, v)| StaticField { name_id: strings.id(n), value: resolve(v) })
            .collect();
        let instance_fields = c.fields.iter().map(|(n, t)| FieldDecl { name_id: strings.id(n), ty: *t }).collect();
        subs.push(HeapSubRecord::ClassDump(ClassDump {
            class_obj_id: class_ids[&c.name],
            trace_serial: 0,
            super_id: c.super_name.as_ref().map_or(Id::NULL, |s| class_ids[s]),
            loader_id: c.loader.map_or(Id::NULL, obj_id),
            signers_id: Id::NULL,
            protection_domain_id: Id::NULL,
            reserved: [Id::NULL; 2],
            instance_size,
            constant_pool: Vec::new(),
            static_fields,
            instance_fields,
        }));
    }

    let encode = |values: &[Value]| -> Vec<u8> {
        let mut out = Vec::new();
        for v in values {
            crate::hprof::put_value_raw(&mut out, v, opts.id_size);
        }
        out
    };
    for (i, o) in program.objects.iter().enumerate() {
        let what = format!("object #{i}");
        check_trace(o.trace, &what)?;
        let id = object_ids[i];
        let ts = trace_serial(o.trace);
        match &o.kind {
            SynthObjectKind::Instance { class, fields } => {
                if !by_name.contains_key(class.as_str()) {
                    return Err(inconsistent(format!("{what} has undeclared class {class}")));
                }
                let layout = layout_of(&by_name, class)?;
                let mut values: Vec<Value> = layout.iter().map(|(_, t)| zero(*t)).collect();
                for (name, v) in fields {
                    let slot = layout
                        .iter()
                        .position(|(n, _)| n == name)
                        .ok_or_else(|| inconsistent(format!("{what}: class {class} has no field {name}")))?;
                    check_value(program, layout[slot].1, v, &format!("{what}.{name}"))?;
                    values[slot] = resolve(v);
                }
                subs.push(HeapSubRecord::InstanceDump {
                    obj_id: id,
                    trace_serial: ts,
                    class_obj_id: class_ids[class],
                    field_bytes: encode(&values),
                });
            }
            SynthObjectKind::ObjectArray { elem_class, elements } => {
                let mut ids = Vec::with_capacity(elements.len());
                for e in elements {
                    ids.push(match e {
                        Some(r) => {
                            check_ref(*r, &what)?;
                            obj_id(*r)
                        }
                        None => Id::NULL,
                    });
                }
                subs.push(HeapSubRecord::ObjectArrayDump {
                    obj_id: id,
                    trace_serial: ts,
                    element_class_id: class_ids[&format!("{elem_class}[]")],
                    elements: ids,
                });
            }
            SynthObjectKind::PrimitiveArray { elem, values } => {
                if *elem == BasicType::Object || values.iter().any(|v| v.basic_type() != *elem) {
                    return Err(inconsistent(format!("{what}: values do not match element type {}", elem.java_name())));
                }
                subs.push(HeapSubRecord::PrimitiveArrayDump {
                    obj_id: id,
                    trace_serial: ts,
                    element_type: *elem,
                    count: values.len() as u32,
                    data: encode(values),
                });
            }
            SynthObjectKind::Str { content } => {
                let backing = backing_ids[&i];
                let (elem, values, coder) = encode_string(content, program.string_layout);
                let mut fields = vec![Value::Object(backing), Value::Int(0)];
                if let Some(c) = coder {
                    fields.push(Value::Byte(c));
                }
                subs.push(HeapSubRecord::InstanceDump {
                    obj_id: id,
                    trace_serial: ts,
                    class_obj_id: class_ids[JAVA_LANG_STRING],
                    field_bytes: encode(&fields),
                });
                subs.push(HeapSubRecord::PrimitiveArrayDump {
                    obj_id: backing,
                    trace_serial: 0,
                    element_type: elem,
                    count: values.len() as u32,
                    data: encode(&values),
                });
            }
        }
    }

    for r in strings.records.iter().chain(&load_records).chain(&frame_records).chain(&trace_records) {
        writer.record(r);
    }
    for chunk in subs.chunks(opts.segment_records.max(1)) {
        writer.record(&RawRecord::new(RecordBody::HeapDump(chunk.to_vec())));
    }
    writer.heap_dump_end();
    let record_ends = writer.record_ends().to_vec();
    Ok(Emitted {
        bytes: writer.finish(),
        header_len,
        record_ends,
        object_ids,
        backing_ids,
        class_ids,
        trace_serials,
    })
}

fn zero(ty: BasicType) -> Value {
    match ty {
        BasicType::Object => Value::Object(Id::NULL),
        BasicType::Boolean => Value::Boolean(false),
        BasicType::Char => Value::Char(0),
        BasicType::Float => Value::Float(0.0),
        BasicType::Double => Value::Double(0.0),
        BasicType::Byte => Value::Byte(0),
        BasicType::Short => Value::Short(0),
        BasicType::Int => Value::Int(0),
        BasicType::Long => Value::Long(0),
    }
}
