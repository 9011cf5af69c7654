use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use super::*;

const FORMAT_PREFIX: &str = "JAVA PROFILE";
const MAX_FORMAT_NAME: usize = 64;
const RECORD_HEADER_LEN: usize = 9;

/// Reads and parses a dump file.
pub fn read_dump(path: impl AsRef<Path>) -> Result<RawDump, HprofError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_dump(&bytes)
}

/// Parses an HPROF byte stream.
///
/// Only a malformed header is fatal. Truncation or an undecodable record
/// ends (or skips) the affected region and is reported in
/// [`RawDump::warnings`]; everything decoded before it is returned.
pub fn parse_dump(bytes: &[u8]) -> Result<RawDump, HprofError> {
    let (header, mut pos) = parse_header(bytes)?;
    let id_size = header.id_size;
    let mut strings = HashMap::new();
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut saw_end = false;
    let mut truncated = false;

    while pos < bytes.len() {
        if bytes.len() - pos < RECORD_HEADER_LEN {
            warnings.push(Warning::at(
                pos as u64,
                format!("truncated record header ({} of {RECORD_HEADER_LEN} bytes)", bytes.len() - pos),
            ));
            truncated = true;
            break;
        }
        let tag = bytes[pos];
        let time_delta = be_u32(&bytes[pos + 1..]);
        let len = be_u32(&bytes[pos + 5..]) as usize;
        let body_start = pos + RECORD_HEADER_LEN;
        let available = bytes.len() - body_start;
        if len > available {
            warnings.push(Warning::at(
                pos as u64,
                format!("record 0x{tag:02x} truncated: declares {len} body bytes, {available} present"),
            ));
            truncated = true;
            break;
        }
        let body = &bytes[body_start..body_start + len];
        let next = body_start + len;

        match tag {
            TAG_HEAP_DUMP_END => saw_end = true,
            TAG_HEAP_DUMP | TAG_HEAP_DUMP_SEGMENT => {
                let (subs, problem) = parse_heap_body(body, id_size);
                if let Some((rel, msg)) = problem {
                    warnings.push(Warning::at((body_start + rel) as u64, msg));
                }
                records.push(RawRecord { tag, time_delta, body: RecordBody::HeapDump(subs) });
            }
            TAG_UTF8 | TAG_LOAD_CLASS | TAG_STACK_FRAME | TAG_STACK_TRACE => {
                match parse_simple_body(tag, body, id_size, &mut warnings, body_start) {
                    Ok(parsed) => {
                        if let RecordBody::Utf8 { id, text } = &parsed {
                            strings.insert(*id, text.clone());
                        }
                        records.push(RawRecord { tag, time_delta, body: parsed });
                    }
                    Err(msg) => warnings.push(Warning::at(pos as u64, format!("record 0x{tag:02x} skipped: {msg}"))),
                }
            }
            _ => records.push(RawRecord { tag, time_delta, body: RecordBody::Opaque(body.to_vec()) }),
        }
        pos = next;
    }

    if !truncated && !saw_end {
        warnings.push(Warning::at(
            bytes.len() as u64,
            "stream ended without HEAP DUMP END; dump is probably truncated",
        ));
    }

    Ok(RawDump { header, strings, records, warnings })
}

fn parse_header(bytes: &[u8]) -> Result<(DumpHeader, usize), HprofError> {
    let nul = bytes
        .iter()
        .take(MAX_FORMAT_NAME)
        .position(|&b| b == 0)
        .ok_or_else(|| HprofError::HeaderMalformed("format name is not NUL-terminated".into()))?;
    let format_name = std::str::from_utf8(&bytes[..nul])
        .map_err(|_| HprofError::HeaderMalformed("format name is not text".into()))?;
    if !format_name.starts_with(FORMAT_PREFIX) {
        return Err(HprofError::HeaderMalformed(format!("unexpected format name {format_name:?}")));
    }
    let pos = nul + 1;
    if bytes.len() < pos + 12 {
        return Err(HprofError::HeaderMalformed("header ends before id size and timestamp".into()));
    }
    let raw_id_size = be_u32(&bytes[pos..]);
    let id_size = IdSize::from_bytes(raw_id_size)
        .ok_or_else(|| HprofError::HeaderMalformed(format!("unsupported identifier size {raw_id_size}")))?;
    let timestamp = be_u64(&bytes[pos + 4..]);
    Ok((DumpHeader { format_name: format_name.to_owned(), id_size, timestamp }, pos + 12))
}

fn parse_simple_body(
    tag: u8,
    body: &[u8],
    id_size: IdSize,
    warnings: &mut Vec<Warning>,
    body_start: usize,
) -> Result<RecordBody, String> {
    let mut c = Cursor::new(body, id_size);
    let parsed = match tag {
        TAG_UTF8 => {
            let id = c.id()?;
            let raw = c.rest();
            let text = match decode_modified_utf8(raw) {
                Some(text) => text,
                None => {
                    warnings.push(Warning::at(body_start as u64, format!("string {id} is not valid modified UTF-8")));
                    String::from_utf8_lossy(raw).into_owned()
                }
            };
            RecordBody::Utf8 { id, text }
        }
        TAG_LOAD_CLASS => RecordBody::LoadClass {
            serial: c.u32()?,
            class_obj_id: c.id()?,
            trace_serial: c.u32()?,
            name_id: c.id()?,
        },
        TAG_STACK_FRAME => RecordBody::StackFrame {
            frame_id: c.id()?,
            method_name_id: c.id()?,
            method_sig_id: c.id()?,
            source_file_id: c.id()?,
            class_serial: c.u32()?,
            line: c.u32()? as i32,
        },
        TAG_STACK_TRACE => {
            let trace_serial = c.u32()?;
            let thread_serial = c.u32()?;
            let n = c.u32()? as usize;
            if n.saturating_mul(id_size.bytes()) > c.remaining() {
                return Err(format!("stack trace declares {n} frames, body too short"));
            }
            let frame_ids = (0..n).map(|_| c.id()).collect::<Result<_, _>>()?;
            RecordBody::StackTrace { trace_serial, thread_serial, frame_ids }
        }
        _ => unreachable!("not a simple record tag: {tag:#x}"),
    };
    if c.remaining() != 0 {
        return Err(format!("{} trailing body bytes", c.remaining()));
    }
    Ok(parsed)
}

/// Decodes sub-records until the body is exhausted. On the first undecodable
/// sub-record the rest of the body is dropped and its offset returned.
fn parse_heap_body(body: &[u8], id_size: IdSize) -> (Vec<HeapSubRecord>, Option<(usize, String)>) {
    let mut c = Cursor::new(body, id_size);
    let mut subs = Vec::new();
    while c.remaining() > 0 {
        let start = c.pos;
        match parse_sub_record(&mut c) {
            Ok(sub) => subs.push(sub),
            Err(msg) => return (subs, Some((start, msg))),
        }
    }
    (subs, None)
}

fn parse_sub_record(c: &mut Cursor<'_>) -> Result<HeapSubRecord, String> {
    let sub_tag = c.u8()?;
    let root = |kind, c: &mut Cursor<'_>| -> Result<HeapSubRecord, String> { Ok(HeapSubRecord::GcRoot { kind, obj_id: c.id()? }) };
    Ok(match sub_tag {
        SUB_ROOT_UNKNOWN => root(GcRootKind::Unknown, c)?,
        SUB_ROOT_JNI_GLOBAL => {
            let obj_id = c.id()?;
            HeapSubRecord::GcRoot { kind: GcRootKind::JniGlobal { global_ref: c.id()? }, obj_id }
        }
        SUB_ROOT_JNI_LOCAL | SUB_ROOT_JAVA_FRAME => {
            let obj_id = c.id()?;
            let thread_serial = c.u32()?;
            let frame = c.u32()?;
            let kind = if sub_tag == SUB_ROOT_JNI_LOCAL {
                GcRootKind::JniLocal { thread_serial, frame }
            } else {
                GcRootKind::JavaFrame { thread_serial, frame }
            };
            HeapSubRecord::GcRoot { kind, obj_id }
        }
        SUB_ROOT_NATIVE_STACK | SUB_ROOT_THREAD_BLOCK => {
            let obj_id = c.id()?;
            let thread_serial = c.u32()?;
            let kind = if sub_tag == SUB_ROOT_NATIVE_STACK {
                GcRootKind::NativeStack { thread_serial }
            } else {
                GcRootKind::ThreadBlock { thread_serial }
            };
            HeapSubRecord::GcRoot { kind, obj_id }
        }
        SUB_ROOT_STICKY_CLASS => root(GcRootKind::StickyClass, c)?,
        SUB_ROOT_MONITOR_USED => root(GcRootKind::MonitorUsed, c)?,
        SUB_ROOT_THREAD_OBJECT => {
            let obj_id = c.id()?;
            let thread_serial = c.u32()?;
            let trace_serial = c.u32()?;
            HeapSubRecord::GcRoot { kind: GcRootKind::ThreadObject { thread_serial, trace_serial }, obj_id }
        }
        SUB_CLASS_DUMP => HeapSubRecord::ClassDump(parse_class_dump(c)?),
        SUB_INSTANCE_DUMP => {
            let obj_id = c.id()?;
            let trace_serial = c.u32()?;
            let class_obj_id = c.id()?;
            let n = c.u32()? as usize;
            let field_bytes = c.take(n)?.to_vec();
            HeapSubRecord::InstanceDump { obj_id, trace_serial, class_obj_id, field_bytes }
        }
        SUB_OBJECT_ARRAY_DUMP => {
            let obj_id = c.id()?;
            let trace_serial = c.u32()?;
            let n = c.u32()? as usize;
            let element_class_id = c.id()?;
            if n.saturating_mul(c.id_size.bytes()) > c.remaining() {
                return Err(format!("object array {obj_id} declares {n} elements, segment too short"));
            }
            let elements = (0..n).map(|_| c.id()).collect::<Result<_, _>>()?;
            HeapSubRecord::ObjectArrayDump { obj_id, trace_serial, element_class_id, elements }
        }
        SUB_PRIMITIVE_ARRAY_DUMP => {
            let obj_id = c.id()?;
            let trace_serial = c.u32()?;
            let count = c.u32()?;
            let type_tag = c.u8()?;
            let element_type = BasicType::from_tag(type_tag)
                .filter(|t| *t != BasicType::Object)
                .ok_or_else(|| format!("primitive array {obj_id} has bad element type {type_tag}"))?;
            let len = (count as usize).saturating_mul(element_type.size(c.id_size));
            let data = c.take(len)?.to_vec();
            HeapSubRecord::PrimitiveArrayDump { obj_id, trace_serial, element_type, count, data }
        }
        other => return Err(format!("unknown heap sub-record tag 0x{other:02x}")),
    })
}

fn parse_class_dump(c: &mut Cursor<'_>) -> Result<ClassDump, String> {
    let class_obj_id = c.id()?;
    let trace_serial = c.u32()?;
    let super_id = c.id()?;
    let loader_id = c.id()?;
    let signers_id = c.id()?;
    let protection_domain_id = c.id()?;
    let reserved = [c.id()?, c.id()?];
    let instance_size = c.u32()?;

    let n = c.u16()?;
    let mut constant_pool = Vec::with_capacity(n.into());
    for _ in 0..n {
        let index = c.u16()?;
        let ty = c.basic_type()?;
        constant_pool.push((index, c.value(ty)?));
    }
    let n = c.u16()?;
    let mut static_fields = Vec::with_capacity(n.into());
    for _ in 0..n {
        let name_id = c.id()?;
        let ty = c.basic_type()?;
        static_fields.push(StaticField { name_id, value: c.value(ty)? });
    }
    let n = c.u16()?;
    let mut instance_fields = Vec::with_capacity(n.into());
    for _ in 0..n {
        let name_id = c.id()?;
        instance_fields.push(FieldDecl { name_id, ty: c.basic_type()? });
    }
    Ok(ClassDump {
        class_obj_id,
        trace_serial,
        super_id,
        loader_id,
        signers_id,
        protection_domain_id,
        reserved,
        instance_size,
        constant_pool,
        static_fields,
        instance_fields,
    })
}

/// Decodes Java's modified UTF-8 (CESU-8 surrogate pairs, `C0 80` for NUL).
pub(crate) fn decode_modified_utf8(raw: &[u8]) -> Option<String> {
    if let Ok(s) = std::str::from_utf8(raw) {
        return Some(s.to_owned());
    }
    let mut units: Vec<u16> = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        let b = raw[i];
        if b < 0x80 {
            units.push(b.into());
            i += 1;
        } else if b & 0xE0 == 0xC0 {
            let b2 = *raw.get(i + 1)?;
            if b2 & 0xC0 != 0x80 {
                return None;
            }
            units.push((u16::from(b & 0x1F) << 6) | u16::from(b2 & 0x3F));
            i += 2;
        } else if b & 0xF0 == 0xE0 {
            let (b2, b3) = (*raw.get(i + 1)?, *raw.get(i + 2)?);
            if b2 & 0xC0 != 0x80 || b3 & 0xC0 != 0x80 {
                return None;
            }
            units.push((u16::from(b & 0x0F) << 12) | (u16::from(b2 & 0x3F) << 6) | u16::from(b3 & 0x3F));
            i += 3;
        } else {
            return None;
        }
    }
    String::from_utf16(&units).ok()
}

pub(crate) fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

fn be_u64(b: &[u8]) -> u64 {
    u64::from_be_bytes(b[..8].try_into().expect("8 bytes"))
}

pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    id_size: IdSize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8], id_size: IdSize) -> Self {
        Cursor { bytes, pos: 0, id_size }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn rest(&mut self) -> &'a [u8] {
        let r = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        r
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if n > self.remaining() {
            return Err(format!("need {n} bytes at +{}, {} left", self.pos, self.remaining()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, String> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, String> {
        Ok(be_u32(self.take(4)?))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(be_u64(self.take(8)?))
    }

    pub(crate) fn id(&mut self) -> Result<Id, String> {
        Ok(Id(match self.id_size {
            IdSize::Four => u64::from(self.u32()?),
            IdSize::Eight => self.u64()?,
        }))
    }

    fn basic_type(&mut self) -> Result<BasicType, String> {
        let tag = self.u8()?;
        BasicType::from_tag(tag).ok_or_else(|| format!("bad basic type tag {tag}"))
    }

    pub(crate) fn value(&mut self, ty: BasicType) -> Result<Value, String> {
        Ok(match ty {
            BasicType::Object => Value::Object(self.id()?),
            BasicType::Boolean => Value::Boolean(self.u8()? != 0),
            BasicType::Char => Value::Char(self.u16()?),
            BasicType::Float => Value::Float(f32::from_bits(self.u32()?)),
            BasicType::Double => Value::Double(f64::from_bits(self.u64()?)),
            BasicType::Byte => Value::Byte(self.u8()? as i8),
            BasicType::Short => Value::Short(self.u16()? as i16),
            BasicType::Int => Value::Int(self.u32()? as i32),
            BasicType::Long => Value::Long(self.u64()? as i64),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(id_size: u32) -> Vec<u8> {
        let mut b = b"JAVA PROFILE 1.0.2\0".to_vec();
        b.extend_from_slice(&id_size.to_be_bytes());
        b.extend_from_slice(&0x0123_4567_89ab_cdefu64.to_be_bytes());
        b
    }

    #[test]
    fn header_only_dump_is_empty_but_flagged() {
        let dump = parse_dump(&header(8)).unwrap();
        assert_eq!(dump.header.format_name, "JAVA PROFILE 1.0.2");
        assert_eq!(dump.header.id_size, IdSize::Eight);
        assert_eq!(dump.header.timestamp, 0x0123_4567_89ab_cdef);
        assert!(dump.records.is_empty());
        assert_eq!(dump.warnings.len(), 1);
        let mut b = header(8);
        b.extend_from_slice(&[TAG_HEAP_DUMP_END, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert!(parse_dump(&b).unwrap().warnings.is_empty());
    }

    #[test]
    fn bad_headers_are_fatal() {
        let mut wrong_name = b"NOT A PROFILE\0".to_vec();
        wrong_name.extend_from_slice(&[0; 12]);
        assert!(matches!(parse_dump(&wrong_name), Err(HprofError::HeaderMalformed(_))));
        assert!(matches!(parse_dump(&header(6)), Err(HprofError::HeaderMalformed(_))));
        let short = &header(4)[..22];
        assert!(matches!(parse_dump(short), Err(HprofError::HeaderMalformed(_))));
        assert!(matches!(parse_dump(b"JAVA PROFILE"), Err(HprofError::HeaderMalformed(_))));
    }

    #[test]
    fn unknown_tags_are_kept_opaque() {
        let mut b = header(4);
        b.extend_from_slice(&[0x0E, 0, 0, 0, 0, 0, 0, 0, 3, 9, 8, 7]);
        b.extend_from_slice(&[TAG_HEAP_DUMP_END, 0, 0, 0, 0, 0, 0, 0, 0]);
        let dump = parse_dump(&b).unwrap();
        assert!(dump.warnings.is_empty(), "{:?}", dump.warnings);
        assert_eq!(dump.records.len(), 1);
        assert_eq!(dump.records[0].tag, 0x0E);
        assert_eq!(dump.records[0].body, RecordBody::Opaque(vec![9, 8, 7]));
    }

    #[test]
    fn record_with_intact_length_but_bad_body_is_skipped() {
        let mut b = header(4);
        // LOAD CLASS needs 16 bytes; give it 5.
        b.extend_from_slice(&[TAG_LOAD_CLASS, 0, 0, 0, 0, 0, 0, 0, 5, 1, 2, 3, 4, 5]);
        b.extend_from_slice(&[TAG_UTF8, 0, 0, 0, 0, 0, 0, 0, 6, 0, 0, 0, 7, b'h', b'i']);
        b.extend_from_slice(&[TAG_HEAP_DUMP_END, 0, 0, 0, 0, 0, 0, 0, 0]);
        let dump = parse_dump(&b).unwrap();
        assert_eq!(dump.warnings.len(), 1);
        assert_eq!(dump.warnings[0].offset, Some(31));
        assert_eq!(dump.records.len(), 1);
        assert_eq!(dump.strings[&Id(7)], "hi");
    }

    #[test]
    fn unknown_sub_record_keeps_earlier_sub_records() {
        let mut b = header(4);
        let body = [SUB_ROOT_STICKY_CLASS, 0, 0, 0, 9, 0x99, 1, 2];
        b.extend_from_slice(&[TAG_HEAP_DUMP_SEGMENT, 0, 0, 0, 0, 0, 0, 0, body.len() as u8]);
        b.extend_from_slice(&body);
        b.extend_from_slice(&[TAG_HEAP_DUMP_END, 0, 0, 0, 0, 0, 0, 0, 0]);
        let dump = parse_dump(&b).unwrap();
        assert_eq!(dump.warnings.len(), 1);
        assert!(dump.warnings[0].message.contains("0x99"));
        assert_eq!(dump.heap_records().count(), 1);
    }

    #[test]
    fn modified_utf8_decodes_nul_and_surrogates() {
        assert_eq!(decode_modified_utf8(&[0xC0, 0x80]).as_deref(), Some("\0"));
        // U+1F600 as a CESU-8 surrogate pair.
        let smile = [0xED, 0xA0, 0xBD, 0xED, 0xB8, 0x80];
        assert_eq!(decode_modified_utf8(&smile).as_deref(), Some("\u{1F600}"));
        assert_eq!(decode_modified_utf8(&[0xFF]), None);
    }
}
