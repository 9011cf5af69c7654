use super::*;
use crate::heap::{decode_string, FieldValue, FrameView, HeapGraph, ObjectData, ObjectKind};
use crate::hprof::Id;

/// Compares a heap graph against the program it was emitted from, walking
/// the program's declarations directly. Returns one line per mismatch.
pub fn verify_round_trip(program: &SynthProgram, emitted: &Emitted, graph: &HeapGraph) -> Vec<String> {
    let mut bad = Vec::new();
    for w in &graph.warnings {
        bad.push(format!("unexpected warning: {}", w.message));
    }
    let expect_value = |v: &SynthValue| match v {
        SynthValue::Null => FieldValue::Null,
        SynthValue::Ref(r) => FieldValue::Object(emitted.id(*r)),
        SynthValue::Prim(p) => FieldValue::Primitive(*p),
    };

    for c in &program.classes {
        let Some(&cid) = emitted.class_ids.get(&c.name) else {
            bad.push(format!("class {} was given no id", c.name));
            continue;
        };
        let Some(info) = graph.classes.get(&cid) else {
            bad.push(format!("class {} missing from graph", c.name));
            continue;
        };
        if info.name != c.name {
            bad.push(format!("class {cid} named {} instead of {}", info.name, c.name));
        }
        let super_name = info.super_ref.and_then(|s| graph.classes.get(&s)).map(|s| s.name.clone());
        if super_name != c.super_name {
            bad.push(format!("class {} has super {super_name:?}, declared {:?}", c.name, c.super_name));
        }
        let loader = c.loader.map_or(Id::NULL, |l| emitted.id(l));
        if info.loader_id != loader {
            bad.push(format!("class {} has loader {}, declared {loader}", c.name, info.loader_id));
        }
        if info.instance_fields != c.fields {
            bad.push(format!("class {} fields {:?} != {:?}", c.name, info.instance_fields, c.fields));
        }
        let statics: Vec<(String, FieldValue)> = c.statics.iter().map(|(n, v)| (n.clone(), expect_value(v))).collect();
        if info.static_fields != statics {
            bad.push(format!("class {} statics {:?} != {statics:?}", c.name, info.static_fields));
        }
    }

    let mut expected_non_class = 0usize;
    for (i, o) in program.objects.iter().enumerate() {
        let id = emitted.object_ids[i];
        expected_non_class += 1;
        let Some(obj) = graph.object(id) else {
            bad.push(format!("object #{i} ({id}) missing"));
            continue;
        };
        let ty = program.type_name(ObjRef(i));
        if obj.type_name != ty {
            bad.push(format!("object #{i} has type {} instead of {ty}", obj.type_name));
        }
        let want_frames: Option<Vec<FrameView>> = o.trace.map(|t| program.traces[t.0].frames.iter().map(frame_view).collect());
        let want_frames = want_frames.filter(|f| !f.is_empty());
        let got_frames = graph.alloc_trace(obj).map(|t| t.frames.clone());
        if got_frames != want_frames {
            bad.push(format!("object #{i} trace {got_frames:?} != {want_frames:?}"));
        }
        match &o.kind {
            SynthObjectKind::Instance { class, fields } => {
                let Some(layout) = program.layout(class) else {
                    bad.push(format!("object #{i}: layout of {class} unavailable"));
                    continue;
                };
                let want: Vec<(String, FieldValue)> = layout
                    .iter()
                    .map(|(name, ty)| {
                        let v = fields
                            .iter()
                            .find(|(n, _)| n == name)
                            .map(|(_, v)| expect_value(v))
                            .unwrap_or(if *ty == BasicType::Object { FieldValue::Null } else { zero_field(*ty) });
                        (name.clone(), v)
                    })
                    .collect();
                if obj.fields() != want.as_slice() {
                    bad.push(format!("object #{i} fields {:?} != {want:?}", obj.fields()));
                }
            }
            SynthObjectKind::ObjectArray { elements, .. } => {
                let want: Vec<FieldValue> = elements
                    .iter()
                    .map(|e| e.map_or(FieldValue::Null, |r| FieldValue::Object(emitted.id(r))))
                    .collect();
                match &obj.data {
                    ObjectData::ObjectArray { elements: got } if *got == want => {}
                    other => bad.push(format!("object #{i} array {other:?} != {want:?}")),
                }
            }
            SynthObjectKind::PrimitiveArray { elem, values } => match &obj.data {
                ObjectData::PrimitiveArray { element_type, data } if element_type == elem => {
                    let got = decode_array(*elem, data);
                    if got.as_deref() != Some(values.as_slice()) {
                        bad.push(format!("object #{i} values {got:?} != {values:?}"));
                    }
                }
                other => bad.push(format!("object #{i} data {other:?} is not a {}[]", elem.java_name())),
            },
            SynthObjectKind::Str { content } => {
                expected_non_class += 1;
                if decode_string(obj, graph).as_deref() != Some(content.as_str()) {
                    bad.push(format!("object #{i} decodes to {:?}, declared {content:?}", decode_string(obj, graph)));
                }
                if !graph.strings_by_content.get(content).is_some_and(|ids| ids.contains(&id)) {
                    bad.push(format!("object #{i} not indexed under {content:?}"));
                }
            }
        }
    }
    let non_class = graph.objects.values().filter(|o| o.kind() != ObjectKind::ClassObject).count();
    if non_class != expected_non_class {
        bad.push(format!("{non_class} non-class objects, expected {expected_non_class}"));
    }

    let mut roots = Vec::new();
    for r in &program.roots {
        let id = emitted.id(*r);
        if !roots.contains(&id) {
            roots.push(id);
        }
    }
    if graph.gc_roots != roots {
        bad.push(format!("gc roots {:?} != {roots:?}", graph.gc_roots));
    }
    bad
}

fn frame_view(f: &SynthFrame) -> FrameView {
    FrameView {
        class_name: f.class.clone(),
        method_name: f.method.clone(),
        method_descriptor: f.descriptor.clone(),
        source_file: f.source_file.clone(),
        line: (f.line > 0).then_some(f.line as u32),
    }
}

fn zero_field(ty: BasicType) -> FieldValue {
    FieldValue::Primitive(match ty {
        BasicType::Boolean => Value::Boolean(false),
        BasicType::Char => Value::Char(0),
        BasicType::Float => Value::Float(0.0),
        BasicType::Double => Value::Double(0.0),
        BasicType::Byte => Value::Byte(0),
        BasicType::Short => Value::Short(0),
        BasicType::Int => Value::Int(0),
        BasicType::Long => Value::Long(0),
        BasicType::Object => return FieldValue::Null,
    })
}

fn decode_array(elem: BasicType, data: &[u8]) -> Option<Vec<Value>> {
    let size = match elem {
        BasicType::Boolean | BasicType::Byte => 1,
        BasicType::Char | BasicType::Short => 2,
        BasicType::Float | BasicType::Int => 4,
        BasicType::Double | BasicType::Long => 8,
        BasicType::Object => return None,
    };
    if !data.len().is_multiple_of(size) {
        return None;
    }
    Some(
        data.chunks(size)
            .map(|c| match elem {
                BasicType::Boolean => Value::Boolean(c[0] != 0),
                BasicType::Byte => Value::Byte(c[0] as i8),
                BasicType::Char => Value::Char(u16::from_be_bytes([c[0], c[1]])),
                BasicType::Short => Value::Short(i16::from_be_bytes([c[0], c[1]])),
                BasicType::Float => Value::Float(f32::from_be_bytes([c[0], c[1], c[2], c[3]])),
                BasicType::Int => Value::Int(i32::from_be_bytes([c[0], c[1], c[2], c[3]])),
                BasicType::Double => Value::Double(f64::from_be_bytes(c.try_into().expect("8 bytes"))),
                BasicType::Long => Value::Long(i64::from_be_bytes(c.try_into().expect("8 bytes"))),
                BasicType::Object => unreachable!(),
            })
            .collect(),
    )
}
