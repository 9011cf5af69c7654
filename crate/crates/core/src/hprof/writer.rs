use super::*;

/// Serializes records in the HPROF subset the reader decodes.
///
/// Used by the synthetic dump builder and by tests that need byte-exact
/// control over a dump (truncation, corruption).
#[derive(Debug, Clone)]
pub struct HprofWriter {
    id_size: IdSize,
    buf: Vec<u8>,
    header_len: usize,
    record_ends: Vec<usize>,
}

impl HprofWriter {
    pub fn new(header: &DumpHeader) -> Self {
        let mut buf = Vec::with_capacity(4096);
        buf.extend_from_slice(header.format_name.as_bytes());
        buf.push(0);
        buf.extend_from_slice(&(header.id_size.bytes() as u32).to_be_bytes());
        buf.extend_from_slice(&header.timestamp.to_be_bytes());
        let header_len = buf.len();
        HprofWriter { id_size: header.id_size, buf, header_len, record_ends: Vec::new() }
    }

    /// Offset of the first record.
    pub fn header_len(&self) -> usize {
        self.header_len
    }

    /// Byte offsets just past each record written so far, in order.
    pub fn record_ends(&self) -> &[usize] {
        &self.record_ends
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn record(&mut self, record: &RawRecord) -> &mut Self {
        let body = self.encode_body(&record.body);
        self.raw_record(record.tag, record.time_delta, &body)
    }

    /// Writes one record with an arbitrary tag and body.
    pub fn raw_record(&mut self, tag: u8, time_delta: u32, body: &[u8]) -> &mut Self {
        self.buf.push(tag);
        self.buf.extend_from_slice(&time_delta.to_be_bytes());
        self.buf.extend_from_slice(&(body.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(body);
        self.record_ends.push(self.buf.len());
        self
    }

    pub fn heap_dump_end(&mut self) -> &mut Self {
        self.raw_record(TAG_HEAP_DUMP_END, 0, &[])
    }

    fn encode_body(&self, body: &RecordBody) -> Vec<u8> {
        let mut out = Vec::new();
        match body {
            RecordBody::Utf8 { id, text } => {
                self.put_id(&mut out, *id);
                out.extend_from_slice(text.as_bytes());
            }
            RecordBody::LoadClass { serial, class_obj_id, trace_serial, name_id } => {
                out.extend_from_slice(&serial.to_be_bytes());
                self.put_id(&mut out, *class_obj_id);
                out.extend_from_slice(&trace_serial.to_be_bytes());
                self.put_id(&mut out, *name_id);
            }
            RecordBody::StackFrame { frame_id, method_name_id, method_sig_id, source_file_id, class_serial, line } => {
                for id in [frame_id, method_name_id, method_sig_id, source_file_id] {
                    self.put_id(&mut out, *id);
                }
                out.extend_from_slice(&class_serial.to_be_bytes());
                out.extend_from_slice(&line.to_be_bytes());
            }
            RecordBody::StackTrace { trace_serial, thread_serial, frame_ids } => {
                out.extend_from_slice(&trace_serial.to_be_bytes());
                out.extend_from_slice(&thread_serial.to_be_bytes());
                out.extend_from_slice(&(frame_ids.len() as u32).to_be_bytes());
                for id in frame_ids {
                    self.put_id(&mut out, *id);
                }
            }
            RecordBody::HeapDump(subs) => {
                for sub in subs {
                    self.encode_sub(&mut out, sub);
                }
            }
            RecordBody::Opaque(bytes) => out.extend_from_slice(bytes),
        }
        out
    }

    fn encode_sub(&self, out: &mut Vec<u8>, sub: &HeapSubRecord) {
        match sub {
            HeapSubRecord::GcRoot { kind, obj_id } => {
                out.push(kind.sub_tag());
                self.put_id(out, *obj_id);
                match *kind {
                    GcRootKind::Unknown | GcRootKind::StickyClass | GcRootKind::MonitorUsed => {}
                    GcRootKind::JniGlobal { global_ref } => self.put_id(out, global_ref),
                    GcRootKind::JniLocal { thread_serial, frame } | GcRootKind::JavaFrame { thread_serial, frame } => {
                        out.extend_from_slice(&thread_serial.to_be_bytes());
                        out.extend_from_slice(&frame.to_be_bytes());
                    }
                    GcRootKind::NativeStack { thread_serial } | GcRootKind::ThreadBlock { thread_serial } => {
                        out.extend_from_slice(&thread_serial.to_be_bytes());
                    }
                    GcRootKind::ThreadObject { thread_serial, trace_serial } => {
                        out.extend_from_slice(&thread_serial.to_be_bytes());
                        out.extend_from_slice(&trace_serial.to_be_bytes());
                    }
                }
            }
            HeapSubRecord::ClassDump(cd) => {
                out.push(SUB_CLASS_DUMP);
                self.put_id(out, cd.class_obj_id);
                out.extend_from_slice(&cd.trace_serial.to_be_bytes());
                for id in [cd.super_id, cd.loader_id, cd.signers_id, cd.protection_domain_id, cd.reserved[0], cd.reserved[1]] {
                    self.put_id(out, id);
                }
                out.extend_from_slice(&cd.instance_size.to_be_bytes());
                out.extend_from_slice(&(cd.constant_pool.len() as u16).to_be_bytes());
                for (index, value) in &cd.constant_pool {
                    out.extend_from_slice(&index.to_be_bytes());
                    out.push(value.basic_type().tag());
                    self.put_value(out, value);
                }
                out.extend_from_slice(&(cd.static_fields.len() as u16).to_be_bytes());
                for field in &cd.static_fields {
                    self.put_id(out, field.name_id);
                    out.push(field.value.basic_type().tag());
                    self.put_value(out, &field.value);
                }
                out.extend_from_slice(&(cd.instance_fields.len() as u16).to_be_bytes());
                for field in &cd.instance_fields {
                    self.put_id(out, field.name_id);
                    out.push(field.ty.tag());
                }
            }
            HeapSubRecord::InstanceDump { obj_id, trace_serial, class_obj_id, field_bytes } => {
                out.push(SUB_INSTANCE_DUMP);
                self.put_id(out, *obj_id);
                out.extend_from_slice(&trace_serial.to_be_bytes());
                self.put_id(out, *class_obj_id);
                out.extend_from_slice(&(field_bytes.len() as u32).to_be_bytes());
                out.extend_from_slice(field_bytes);
            }
            HeapSubRecord::ObjectArrayDump { obj_id, trace_serial, element_class_id, elements } => {
                out.push(SUB_OBJECT_ARRAY_DUMP);
                self.put_id(out, *obj_id);
                out.extend_from_slice(&trace_serial.to_be_bytes());
                out.extend_from_slice(&(elements.len() as u32).to_be_bytes());
                self.put_id(out, *element_class_id);
                for e in elements {
                    self.put_id(out, *e);
                }
            }
            HeapSubRecord::PrimitiveArrayDump { obj_id, trace_serial, element_type, count, data } => {
                out.push(SUB_PRIMITIVE_ARRAY_DUMP);
                self.put_id(out, *obj_id);
                out.extend_from_slice(&trace_serial.to_be_bytes());
                out.extend_from_slice(&count.to_be_bytes());
                out.push(element_type.tag());
                out.extend_from_slice(data);
            }
        }
    }

    pub(crate) fn put_id(&self, out: &mut Vec<u8>, id: Id) {
        put_id_raw(out, id, self.id_size)
    }

    pub(crate) fn put_value(&self, out: &mut Vec<u8>, value: &Value) {
        put_value_raw(out, value, self.id_size)
    }
}

pub(crate) fn put_id_raw(out: &mut Vec<u8>, id: Id, id_size: IdSize) {
    match id_size {
        IdSize::Four => out.extend_from_slice(&(id.0 as u32).to_be_bytes()),
        IdSize::Eight => out.extend_from_slice(&id.0.to_be_bytes()),
    }
}

/// Big-endian encoding of one value, as in field bytes and array data.
pub(crate) fn put_value_raw(out: &mut Vec<u8>, value: &Value, id_size: IdSize) {
    match *value {
        Value::Object(id) => put_id_raw(out, id, id_size),
        Value::Boolean(v) => out.push(v as u8),
        Value::Char(v) => out.extend_from_slice(&v.to_be_bytes()),
        Value::Float(v) => out.extend_from_slice(&v.to_bits().to_be_bytes()),
        Value::Double(v) => out.extend_from_slice(&v.to_bits().to_be_bytes()),
        Value::Byte(v) => out.push(v as u8),
        Value::Short(v) => out.extend_from_slice(&v.to_be_bytes()),
        Value::Int(v) => out.extend_from_slice(&v.to_be_bytes()),
        Value::Long(v) => out.extend_from_slice(&v.to_be_bytes()),
    }
}
