//! HPROF 1.0.2 binary heap dumps: record model, reader and writer.
//!
//! The reader is a single forward pass over the bytes. It decodes the record
//! kinds the fact pipeline needs (strings, classes, frames, traces and the
//! heap dump sub-records) and keeps every other record as an opaque byte span.
//! Heap graph resolution happens later, in [`crate::heap`], because class
//! records may legally refer forward.

mod reader;
mod writer;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

pub use reader::{parse_dump, read_dump};
pub use writer::HprofWriter;

pub(crate) use reader::decode_modified_utf8;
pub(crate) use writer::put_value_raw;

pub(crate) fn reader_cursor(bytes: &[u8], id_size: IdSize) -> reader::Cursor<'_> {
    reader::Cursor::new(bytes, id_size)
}

pub const TAG_UTF8: u8 = 0x01;
pub const TAG_LOAD_CLASS: u8 = 0x02;
pub const TAG_STACK_FRAME: u8 = 0x04;
pub const TAG_STACK_TRACE: u8 = 0x05;
pub const TAG_HEAP_DUMP: u8 = 0x0C;
pub const TAG_HEAP_DUMP_SEGMENT: u8 = 0x1C;
pub const TAG_HEAP_DUMP_END: u8 = 0x2C;

pub const SUB_ROOT_UNKNOWN: u8 = 0xFF;
pub const SUB_ROOT_JNI_GLOBAL: u8 = 0x01;
pub const SUB_ROOT_JNI_LOCAL: u8 = 0x02;
pub const SUB_ROOT_JAVA_FRAME: u8 = 0x03;
pub const SUB_ROOT_NATIVE_STACK: u8 = 0x04;
pub const SUB_ROOT_STICKY_CLASS: u8 = 0x05;
pub const SUB_ROOT_THREAD_BLOCK: u8 = 0x06;
pub const SUB_ROOT_MONITOR_USED: u8 = 0x07;
pub const SUB_ROOT_THREAD_OBJECT: u8 = 0x08;
pub const SUB_CLASS_DUMP: u8 = 0x20;
pub const SUB_INSTANCE_DUMP: u8 = 0x21;
pub const SUB_OBJECT_ARRAY_DUMP: u8 = 0x22;
pub const SUB_PRIMITIVE_ARRAY_DUMP: u8 = 0x23;

/// Heap identifier. Dumps with 4-byte identifiers are widened on read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Id(pub u64);

impl Id {
    pub const NULL: Id = Id(0);

    pub fn is_null(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

impl From<u64> for Id {
    fn from(v: u64) -> Self {
        Id(v)
    }
}

/// A problem found while reading or resolving a dump. Never fatal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Warning {
    /// Byte offset into the dump, when the problem is tied to one.
    pub offset: Option<u64>,
    pub message: String,
}

impl Warning {
    pub fn at(offset: u64, message: impl Into<String>) -> Self {
        Warning { offset: Some(offset), message: message.into() }
    }

    pub fn new(message: impl Into<String>) -> Self {
        Warning { offset: None, message: message.into() }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.offset {
            Some(off) => write!(f, "at byte {off}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HprofError {
    #[error("malformed dump header: {0}")]
    HeaderMalformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IdSize {
    Four,
    Eight,
}

impl IdSize {
    pub fn bytes(self) -> usize {
        match self {
            IdSize::Four => 4,
            IdSize::Eight => 8,
        }
    }

    pub fn from_bytes(n: u32) -> Option<IdSize> {
        match n {
            4 => Some(IdSize::Four),
            8 => Some(IdSize::Eight),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DumpHeader {
    pub format_name: String,
    pub id_size: IdSize,
    /// Milliseconds since the epoch.
    pub timestamp: u64,
}

impl DumpHeader {
    pub fn new(id_size: IdSize) -> Self {
        DumpHeader { format_name: "JAVA PROFILE 1.0.2".to_owned(), id_size, timestamp: 0 }
    }
}

/// JVM basic types as tagged in HPROF.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BasicType {
    Object,
    Boolean,
    Char,
    Float,
    Double,
    Byte,
    Short,
    Int,
    Long,
}

impl BasicType {
    pub fn from_tag(tag: u8) -> Option<BasicType> {
        Some(match tag {
            2 => BasicType::Object,
            4 => BasicType::Boolean,
            5 => BasicType::Char,
            6 => BasicType::Float,
            7 => BasicType::Double,
            8 => BasicType::Byte,
            9 => BasicType::Short,
            10 => BasicType::Int,
            11 => BasicType::Long,
            _ => return None,
        })
    }

    pub fn tag(self) -> u8 {
        match self {
            BasicType::Object => 2,
            BasicType::Boolean => 4,
            BasicType::Char => 5,
            BasicType::Float => 6,
            BasicType::Double => 7,
            BasicType::Byte => 8,
            BasicType::Short => 9,
            BasicType::Int => 10,
            BasicType::Long => 11,
        }
    }

    /// Encoded width; object references take the dump's identifier size.
    pub fn size(self, id_size: IdSize) -> usize {
        match self {
            BasicType::Object => id_size.bytes(),
            BasicType::Boolean | BasicType::Byte => 1,
            BasicType::Char | BasicType::Short => 2,
            BasicType::Float | BasicType::Int => 4,
            BasicType::Double | BasicType::Long => 8,
        }
    }

    /// Java source spelling of the primitive type (`int`, `char`, ...).
    pub fn java_name(self) -> &'static str {
        match self {
            BasicType::Object => "java.lang.Object",
            BasicType::Boolean => "boolean",
            BasicType::Char => "char",
            BasicType::Float => "float",
            BasicType::Double => "double",
            BasicType::Byte => "byte",
            BasicType::Short => "short",
            BasicType::Int => "int",
            BasicType::Long => "long",
        }
    }
}

/// A typed value as stored in class statics, constant pools and instance fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Object(Id),
    Boolean(bool),
    Char(u16),
    Float(f32),
    Double(f64),
    Byte(i8),
    Short(i16),
    Int(i32),
    Long(i64),
}

impl Value {
    pub fn basic_type(&self) -> BasicType {
        match self {
            Value::Object(_) => BasicType::Object,
            Value::Boolean(_) => BasicType::Boolean,
            Value::Char(_) => BasicType::Char,
            Value::Float(_) => BasicType::Float,
            Value::Double(_) => BasicType::Double,
            Value::Byte(_) => BasicType::Byte,
            Value::Short(_) => BasicType::Short,
            Value::Int(_) => BasicType::Int,
            Value::Long(_) => BasicType::Long,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Object(id) => write!(f, "{id}"),
            Value::Boolean(v) => write!(f, "{v}"),
            Value::Char(v) => match char::from_u32(u32::from(*v)) {
                Some(c) => write!(f, "{c:?}"),
                None => write!(f, "\\u{v:04x}"),
            },
            Value::Float(v) => write!(f, "{v}"),
            Value::Double(v) => write!(f, "{v}"),
            Value::Byte(v) => write!(f, "{v}"),
            Value::Short(v) => write!(f, "{v}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Long(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GcRootKind {
    Unknown,
    JniGlobal { global_ref: Id },
    JniLocal { thread_serial: u32, frame: u32 },
    JavaFrame { thread_serial: u32, frame: u32 },
    NativeStack { thread_serial: u32 },
    StickyClass,
    ThreadBlock { thread_serial: u32 },
    MonitorUsed,
    ThreadObject { thread_serial: u32, trace_serial: u32 },
}

impl GcRootKind {
    pub fn sub_tag(&self) -> u8 {
        match self {
            GcRootKind::Unknown => SUB_ROOT_UNKNOWN,
            GcRootKind::JniGlobal { .. } => SUB_ROOT_JNI_GLOBAL,
            GcRootKind::JniLocal { .. } => SUB_ROOT_JNI_LOCAL,
            GcRootKind::JavaFrame { .. } => SUB_ROOT_JAVA_FRAME,
            GcRootKind::NativeStack { .. } => SUB_ROOT_NATIVE_STACK,
            GcRootKind::StickyClass => SUB_ROOT_STICKY_CLASS,
            GcRootKind::ThreadBlock { .. } => SUB_ROOT_THREAD_BLOCK,
            GcRootKind::MonitorUsed => SUB_ROOT_MONITOR_USED,
            GcRootKind::ThreadObject { .. } => SUB_ROOT_THREAD_OBJECT,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StaticField {
    pub name_id: Id,
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldDecl {
    pub name_id: Id,
    pub ty: BasicType,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassDump {
    pub class_obj_id: Id,
    pub trace_serial: u32,
    pub super_id: Id,
    pub loader_id: Id,
    pub signers_id: Id,
    pub protection_domain_id: Id,
    pub reserved: [Id; 2],
    pub instance_size: u32,
    pub constant_pool: Vec<(u16, Value)>,
    pub static_fields: Vec<StaticField>,
    pub instance_fields: Vec<FieldDecl>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HeapSubRecord {
    GcRoot { kind: GcRootKind, obj_id: Id },
    ClassDump(ClassDump),
    InstanceDump { obj_id: Id, trace_serial: u32, class_obj_id: Id, field_bytes: Vec<u8> },
    ObjectArrayDump { obj_id: Id, trace_serial: u32, element_class_id: Id, elements: Vec<Id> },
    /// Element data is kept big-endian, exactly as stored.
    PrimitiveArrayDump { obj_id: Id, trace_serial: u32, element_type: BasicType, count: u32, data: Vec<u8> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum RecordBody {
    Utf8 { id: Id, text: String },
    LoadClass { serial: u32, class_obj_id: Id, trace_serial: u32, name_id: Id },
    StackFrame {
        frame_id: Id,
        method_name_id: Id,
        method_sig_id: Id,
        source_file_id: Id,
        class_serial: u32,
        line: i32,
    },
    StackTrace { trace_serial: u32, thread_serial: u32, frame_ids: Vec<Id> },
    /// One `HEAP DUMP` or `HEAP DUMP SEGMENT` record.
    HeapDump(Vec<HeapSubRecord>),
    /// A record kind outside the decoded subset, kept verbatim.
    Opaque(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub tag: u8,
    /// Microseconds since the header timestamp.
    pub time_delta: u32,
    pub body: RecordBody,
}

impl RawRecord {
    pub fn new(body: RecordBody) -> Self {
        let tag = match &body {
            RecordBody::Utf8 { .. } => TAG_UTF8,
            RecordBody::LoadClass { .. } => TAG_LOAD_CLASS,
            RecordBody::StackFrame { .. } => TAG_STACK_FRAME,
            RecordBody::StackTrace { .. } => TAG_STACK_TRACE,
            RecordBody::HeapDump(_) => TAG_HEAP_DUMP_SEGMENT,
            RecordBody::Opaque(_) => 0xFE,
        };
        RawRecord { tag, time_delta: 0, body }
    }

    pub fn kind(&self) -> RecordKind {
        match self.body {
            RecordBody::Utf8 { .. } => RecordKind::Utf8String,
            RecordBody::LoadClass { .. } => RecordKind::LoadClass,
            RecordBody::StackFrame { .. } => RecordKind::StackFrame,
            RecordBody::StackTrace { .. } => RecordKind::StackTrace,
            RecordBody::HeapDump(_) => RecordKind::HeapDump,
            RecordBody::Opaque(_) => RecordKind::Other,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum RecordKind {
    Utf8String,
    LoadClass,
    StackFrame,
    StackTrace,
    HeapDump,
    Other,
}

impl RecordKind {
    pub const ALL: [RecordKind; 6] = [
        RecordKind::Utf8String,
        RecordKind::LoadClass,
        RecordKind::StackFrame,
        RecordKind::StackTrace,
        RecordKind::HeapDump,
        RecordKind::Other,
    ];
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawDump {
    pub header: DumpHeader,
    pub strings: HashMap<Id, String>,
    pub records: Vec<RawRecord>,
    pub warnings: Vec<Warning>,
}

impl RawDump {
    /// All heap sub-records, segments concatenated in file order.
    pub fn heap_records(&self) -> impl Iterator<Item = &HeapSubRecord> {
        self.records.iter().flat_map(|r| match &r.body {
            RecordBody::HeapDump(subs) => subs.as_slice(),
            _ => &[],
        })
    }
}

/// Counts records per kind. Every kind is present in the map, zero or not.
pub fn record_stats(dump: &RawDump) -> BTreeMap<RecordKind, usize> {
    let mut counts: BTreeMap<RecordKind, usize> = RecordKind::ALL.iter().map(|&k| (k, 0)).collect();
    for record in &dump.records {
        *counts.entry(record.kind()).or_default() += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_dump() -> RawDump {
        RawDump {
            header: DumpHeader::new(IdSize::Eight),
            strings: HashMap::new(),
            records: vec![],
            warnings: vec![],
        }
    }

    #[test]
    fn stats_of_empty_dump_are_all_zero() {
        let stats = record_stats(&empty_dump());
        assert_eq!(stats.len(), RecordKind::ALL.len());
        assert!(stats.values().all(|&c| c == 0));
    }

    #[test]
    fn stats_are_additive_over_concatenation() {
        let mut dump = empty_dump();
        dump.records = vec![
            RawRecord::new(RecordBody::Utf8 { id: Id(1), text: "a".into() }),
            RawRecord::new(RecordBody::StackTrace { trace_serial: 1, thread_serial: 1, frame_ids: vec![] }),
            RawRecord::new(RecordBody::HeapDump(vec![])),
        ];
        let single = record_stats(&dump);
        let mut doubled = dump.clone();
        doubled.records.extend(dump.records.iter().cloned());
        let stats = record_stats(&doubled);
        for kind in RecordKind::ALL {
            assert_eq!(stats[&kind], 2 * single[&kind]);
        }
        assert_eq!(stats.values().sum::<usize>(), doubled.records.len());
    }

    #[test]
    fn basic_type_tags_round_trip() {
        for tag in 0..=255u8 {
            if let Some(t) = BasicType::from_tag(tag) {
                assert_eq!(t.tag(), tag);
            }
        }
        assert_eq!(BasicType::Long.size(IdSize::Four), 8);
        assert_eq!(BasicType::Object.size(IdSize::Four), 4);
    }
}
