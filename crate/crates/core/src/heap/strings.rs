use crate::hprof::{BasicType, Value, Warning};

use super::{ConcreteObject, FieldValue, HeapGraph, ObjectData, ObjectKind, JAVA_LANG_STRING};

#[derive(Debug, PartialEq)]
pub(super) enum StringIssue {
    DanglingValue,
    BadValueArray(String),
}

/// Content of a `java.lang.String` instance.
///
/// Handles both backing layouts: a `char[] value` (with optional `offset` and
/// `count`, as in old JDKs) and a `byte[] value` plus `coder` (0 = Latin-1,
/// 1 = UTF-16 in little-endian byte order). Returns `None` for anything that
/// is not a String or whose backing array does not resolve.
pub fn decode_string(obj: &ConcreteObject, graph: &HeapGraph) -> Option<String> {
    decode_checked(obj, graph).ok().flatten()
}

pub(super) fn decode_checked(obj: &ConcreteObject, graph: &HeapGraph) -> Result<Option<String>, StringIssue> {
    if obj.kind() != ObjectKind::Instance || obj.type_name != JAVA_LANG_STRING {
        return Ok(None);
    }
    let array_id = match obj.field("value") {
        Some(FieldValue::Object(id)) => *id,
        Some(FieldValue::Dangling(_)) => return Err(StringIssue::DanglingValue),
        Some(FieldValue::Null) | None => return Ok(None),
        Some(FieldValue::Primitive(_)) => return Err(StringIssue::BadValueArray("value is not a reference".into())),
    };
    let Some(array) = graph.object(array_id) else {
        return Err(StringIssue::DanglingValue);
    };
    let ObjectData::PrimitiveArray { element_type, data } = &array.data else {
        return Err(StringIssue::BadValueArray(format!("value {array_id} is not a primitive array")));
    };
    let int_field = |name: &str| match obj.field(name) {
        Some(FieldValue::Primitive(Value::Int(v))) => Some(*v),
        _ => None,
    };
    match element_type {
        BasicType::Char => {
            let units: Vec<u16> = data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
            let (start, len) = match (int_field("offset"), int_field("count")) {
                (Some(off), Some(count)) => (off.max(0) as usize, count.max(0) as usize),
                (None, Some(count)) => (0, count.max(0) as usize),
                _ => (0, units.len()),
            };
            let slice = units
                .get(start..start.saturating_add(len))
                .ok_or_else(|| StringIssue::BadValueArray("offset/count outside the char array".into()))?;
            Ok(Some(String::from_utf16_lossy(slice)))
        }
        BasicType::Byte => {
            let coder = match obj.field("coder") {
                Some(FieldValue::Primitive(Value::Byte(c))) => *c,
                _ => 0,
            };
            match coder {
                0 => Ok(Some(data.iter().map(|&b| char::from(b)).collect())),
                1 => {
                    let units: Vec<u16> = data.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
                    Ok(Some(String::from_utf16_lossy(&units)))
                }
                other => Err(StringIssue::BadValueArray(format!("unknown coder {other}"))),
            }
        }
        other => Err(StringIssue::BadValueArray(format!("value array has element type {other:?}"))),
    }
}

pub(super) fn index_strings(graph: &mut HeapGraph) {
    let mut index: std::collections::BTreeMap<String, Vec<_>> = Default::default();
    let mut warnings = Vec::new();
    for obj in graph.objects.values() {
        match decode_checked(obj, graph) {
            Ok(Some(s)) => index.entry(s).or_default().push(obj.id),
            Ok(None) => {}
            Err(StringIssue::DanglingValue) => {
                warnings.push(Warning::new(format!("string {} has a dangling backing array", obj.id)))
            }
            Err(StringIssue::BadValueArray(msg)) => warnings.push(Warning::new(format!("string {}: {msg}", obj.id))),
        }
    }
    graph.strings_by_content = index;
    graph.warnings.extend(warnings);
}
