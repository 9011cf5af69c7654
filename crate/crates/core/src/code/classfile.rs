//! Read-only subset of the JVM class-file format: enough of the constant pool
//! to name classes, methods and allocated types, plus each method's
//! `LineNumberTable` and allocation instructions.

use crate::jvm;

use super::{AllocationInstr, MethodMeta};

pub const MAGIC: u32 = 0xCAFE_BABE;

pub const OP_TABLESWITCH: u8 = 0xAA;
pub const OP_LOOKUPSWITCH: u8 = 0xAB;
pub const OP_NEW: u8 = 0xBB;
pub const OP_NEWARRAY: u8 = 0xBC;
pub const OP_ANEWARRAY: u8 = 0xBD;
pub const OP_WIDE: u8 = 0xC4;
pub const OP_MULTIANEWARRAY: u8 = 0xC5;
const OP_IINC: u8 = 0x84;

const ACC_STATIC: u16 = 0x0008;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClassFileError {
    #[error("bad magic {0:#010x}")]
    BadMagic(u32),
    #[error("truncated while reading {0}")]
    Truncated(&'static str),
    #[error("constant pool entry {index}: {message}")]
    BadConstant { index: u16, message: String },
    #[error("invalid opcode {opcode:#04x} at bytecode index {pc} in {method}")]
    BadInstruction { method: String, pc: u32, opcode: u8 },
    #[error("instruction at {pc} in {method} runs past the end of the code")]
    InstructionOverrun { method: String, pc: u32 },
}

/// One class file's worth of method metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedClass {
    /// Dotted name.
    pub name: String,
    pub super_name: Option<String>,
    pub methods: Vec<MethodMeta>,
}

#[derive(Debug, Clone)]
enum Constant {
    Unused,
    Utf8(String),
    Class(u16),
    Other,
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ClassFileError> {
        if self.b.len() - self.pos < n {
            return Err(ClassFileError::Truncated(what));
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u1(&mut self, what: &'static str) -> Result<u8, ClassFileError> {
        Ok(self.take(1, what)?[0])
    }

    fn u2(&mut self, what: &'static str) -> Result<u16, ClassFileError> {
        let s = self.take(2, what)?;
        Ok(u16::from_be_bytes([s[0], s[1]]))
    }

    fn u4(&mut self, what: &'static str) -> Result<u32, ClassFileError> {
        let s = self.take(4, what)?;
        Ok(u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
    }
}

struct Pool(Vec<Constant>);

impl Pool {
    fn utf8(&self, index: u16) -> Result<&str, ClassFileError> {
        match self.0.get(usize::from(index)) {
            Some(Constant::Utf8(s)) => Ok(s),
            _ => Err(ClassFileError::BadConstant { index, message: "expected Utf8".into() }),
        }
    }

    /// Internal name (or array descriptor) of a Class constant.
    fn class_name(&self, index: u16) -> Result<&str, ClassFileError> {
        match self.0.get(usize::from(index)) {
            Some(Constant::Class(name_index)) => self.utf8(*name_index),
            _ => Err(ClassFileError::BadConstant { index, message: "expected Class".into() }),
        }
    }
}

fn read_pool(r: &mut Reader<'_>) -> Result<Pool, ClassFileError> {
    let count = r.u2("constant pool count")?;
    let mut entries = vec![Constant::Unused; usize::from(count.max(1))];
    let mut i = 1u16;
    while i < count {
        let tag = r.u1("constant tag")?;
        let mut wide = false;
        let entry = match tag {
            1 => {
                let len = r.u2("utf8 length")?;
                let raw = r.take(usize::from(len), "utf8 bytes")?;
                let s = crate::hprof::decode_modified_utf8(raw)
                    .ok_or_else(|| ClassFileError::BadConstant { index: i, message: "invalid modified UTF-8".into() })?;
                Constant::Utf8(s)
            }
            7 => Constant::Class(r.u2("class name index")?),
            3 | 4 => {
                r.take(4, "numeric constant")?;
                Constant::Other
            }
            5 | 6 => {
                r.take(8, "wide numeric constant")?;
                wide = true;
                Constant::Other
            }
            8 | 16 | 19 | 20 => {
                r.take(2, "constant")?;
                Constant::Other
            }
            9 | 10 | 11 | 12 | 17 | 18 => {
                r.take(4, "constant")?;
                Constant::Other
            }
            15 => {
                r.take(3, "method handle")?;
                Constant::Other
            }
            other => {
                return Err(ClassFileError::BadConstant { index: i, message: format!("unknown tag {other}") });
            }
        };
        entries[usize::from(i)] = entry;
        i += if wide { 2 } else { 1 };
    }
    Ok(Pool(entries))
}

fn skip_attributes(r: &mut Reader<'_>) -> Result<(), ClassFileError> {
    let n = r.u2("attribute count")?;
    for _ in 0..n {
        r.u2("attribute name")?;
        let len = r.u4("attribute length")?;
        r.take(len as usize, "attribute body")?;
    }
    Ok(())
}

/// Parses a class file into per-method metadata.
pub fn parse_classfile(bytes: &[u8]) -> Result<ParsedClass, ClassFileError> {
    let mut r = Reader { b: bytes, pos: 0 };
    let magic = r.u4("magic")?;
    if magic != MAGIC {
        return Err(ClassFileError::BadMagic(magic));
    }
    r.u2("minor version")?;
    r.u2("major version")?;
    let pool = read_pool(&mut r)?;
    r.u2("access flags")?;
    let this_class = r.u2("this class")?;
    let super_class = r.u2("super class")?;
    let name = jvm::internal_to_dotted(pool.class_name(this_class)?);
    let super_name = match super_class {
        0 => None,
        idx => Some(jvm::internal_to_dotted(pool.class_name(idx)?)),
    };
    let interfaces = r.u2("interface count")?;
    r.take(usize::from(interfaces) * 2, "interfaces")?;

    let fields = r.u2("field count")?;
    for _ in 0..fields {
        r.take(6, "field header")?;
        skip_attributes(&mut r)?;
    }

    let method_count = r.u2("method count")?;
    let mut methods = Vec::with_capacity(method_count.into());
    for _ in 0..method_count {
        let access = r.u2("method access flags")?;
        let mname = pool.utf8(r.u2("method name")?)?.to_owned();
        let descriptor = pool.utf8(r.u2("method descriptor")?)?.to_owned();
        let mut line_table = Vec::new();
        let mut allocations = Vec::new();
        let attr_count = r.u2("method attribute count")?;
        for _ in 0..attr_count {
            let attr_name = pool.utf8(r.u2("attribute name")?)?;
            let len = r.u4("attribute length")? as usize;
            let body = r.take(len, "method attribute")?;
            if attr_name == "Code" {
                let label = format!("{name}.{mname}{descriptor}");
                let (lines, allocs) = parse_code_attribute(body, &pool, &label)?;
                line_table = lines;
                allocations = allocs;
            }
        }
        let mut meta = MethodMeta {
            signature: jvm::method_signature(&name, &mname, &descriptor),
            declaring_class: name.clone(),
            name: mname,
            descriptor,
            is_static: access & ACC_STATIC != 0,
            line_table,
            allocations: Vec::new(),
        };
        for (bci, ty) in allocations {
            let line = meta.line_at(bci);
            meta.allocations.push(AllocationInstr { bytecode_index: bci, allocated_type: ty, line, site_index: 0 });
        }
        meta.number_sites();
        methods.push(meta);
    }
    skip_attributes(&mut r)?;
    Ok(ParsedClass { name, super_name, methods })
}

type LineTable = Vec<(u32, u32)>;

fn parse_code_attribute(
    body: &[u8],
    pool: &Pool,
    method: &str,
) -> Result<(LineTable, Vec<(u32, String)>), ClassFileError> {
    let mut r = Reader { b: body, pos: 0 };
    r.u2("max stack")?;
    r.u2("max locals")?;
    let code_len = r.u4("code length")? as usize;
    let code = r.take(code_len, "bytecode")?;
    let handlers = r.u2("exception table length")?;
    r.take(usize::from(handlers) * 8, "exception table")?;

    let mut lines = Vec::new();
    let attr_count = r.u2("code attribute count")?;
    for _ in 0..attr_count {
        let attr_name = pool.utf8(r.u2("attribute name")?)?;
        let len = r.u4("attribute length")? as usize;
        let attr = r.take(len, "code attribute")?;
        if attr_name == "LineNumberTable" {
            let mut lr = Reader { b: attr, pos: 0 };
            let n = lr.u2("line table length")?;
            for _ in 0..n {
                let start = lr.u2("line start pc")?;
                let line = lr.u2("line number")?;
                lines.push((u32::from(start), u32::from(line)));
            }
        }
    }
    lines.sort_by_key(|&(pc, _)| pc);

    let mut allocs = Vec::new();
    for insn in scan_instructions(code, method)? {
        let operand = |off: usize| u16::from_be_bytes([code[insn.pc as usize + off], code[insn.pc as usize + off + 1]]);
        let ty = match insn.opcode {
            OP_NEW => jvm::internal_to_dotted(pool.class_name(operand(1))?),
            OP_NEWARRAY => {
                let atype = code[insn.pc as usize + 1];
                let elem = match atype {
                    4 => "boolean",
                    5 => "char",
                    6 => "float",
                    7 => "double",
                    8 => "byte",
                    9 => "short",
                    10 => "int",
                    11 => "long",
                    _ => {
                        return Err(ClassFileError::BadInstruction {
                            method: method.to_owned(),
                            pc: insn.pc,
                            opcode: OP_NEWARRAY,
                        })
                    }
                };
                format!("{elem}[]")
            }
            OP_ANEWARRAY => format!("{}[]", jvm::internal_to_dotted(pool.class_name(operand(1))?)),
            OP_MULTIANEWARRAY => jvm::internal_to_dotted(pool.class_name(operand(1))?),
            _ => continue,
        };
        allocs.push((insn.pc, ty));
    }
    Ok((lines, allocs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instruction {
    pub pc: u32,
    pub opcode: u8,
    pub len: u32,
}

/// Walks the instruction stream, decoding only lengths. Fails if an opcode is
/// invalid or the last instruction runs past the end of the code, so a
/// successful scan always ends exactly at `code.len()`.
pub fn scan_instructions(code: &[u8], method: &str) -> Result<Vec<Instruction>, ClassFileError> {
    let mut out = Vec::new();
    let mut pc = 0usize;
    let overrun = |pc: usize| ClassFileError::InstructionOverrun { method: method.to_owned(), pc: pc as u32 };
    let read_i32 = |at: usize| -> Option<i32> {
        code.get(at..at + 4).map(|b| i32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    };
    while pc < code.len() {
        let opcode = code[pc];
        let len = match opcode {
            OP_TABLESWITCH => {
                let base = pc + 1 + (3 - pc % 4);
                let low = read_i32(base + 4).ok_or_else(|| overrun(pc))?;
                let high = read_i32(base + 8).ok_or_else(|| overrun(pc))?;
                if high < low {
                    return Err(ClassFileError::BadInstruction { method: method.to_owned(), pc: pc as u32, opcode });
                }
                let n = (i64::from(high) - i64::from(low) + 1) as usize;
                base + 12 + 4 * n - pc
            }
            OP_LOOKUPSWITCH => {
                let base = pc + 1 + (3 - pc % 4);
                let npairs = read_i32(base + 4).ok_or_else(|| overrun(pc))?;
                if npairs < 0 {
                    return Err(ClassFileError::BadInstruction { method: method.to_owned(), pc: pc as u32, opcode });
                }
                base + 8 + 8 * npairs as usize - pc
            }
            OP_WIDE => match code.get(pc + 1) {
                Some(&OP_IINC) => 6,
                Some(0x15..=0x19 | 0x36..=0x3A | 0xA9) => 4,
                Some(_) => {
                    return Err(ClassFileError::BadInstruction { method: method.to_owned(), pc: pc as u32, opcode })
                }
                None => return Err(overrun(pc)),
            },
            op => fixed_length(op)
                .ok_or_else(|| ClassFileError::BadInstruction { method: method.to_owned(), pc: pc as u32, opcode })?,
        };
        if pc + len > code.len() {
            return Err(overrun(pc));
        }
        out.push(Instruction { pc: pc as u32, opcode, len: len as u32 });
        pc += len;
    }
    Ok(out)
}

/// Length in bytes of fixed-size instructions, including the opcode.
fn fixed_length(op: u8) -> Option<usize> {
    Some(match op {
        0x00..=0x0F => 1,
        0x10 => 2,
        0x11 => 3,
        0x12 => 2,
        0x13 | 0x14 => 3,
        0x15..=0x19 => 2,
        0x1A..=0x35 => 1,
        0x36..=0x3A => 2,
        0x3B..=0x83 => 1,
        0x84 => 3,
        0x85..=0x98 => 1,
        0x99..=0xA8 => 3,
        0xA9 => 2,
        0xAC..=0xB1 => 1,
        0xB2..=0xB8 => 3,
        0xB9 | 0xBA => 5,
        0xBB => 3,
        0xBC => 2,
        0xBD => 3,
        0xBE | 0xBF => 1,
        0xC0 | 0xC1 => 3,
        0xC2 | 0xC3 => 1,
        0xC5 => 4,
        0xC6 | 0xC7 => 3,
        0xC8 | 0xC9 => 5,
        0xCA | 0xFE | 0xFF => 1,
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_magic_is_rejected() {
        assert_eq!(parse_classfile(&[0xCA, 0xFE, 0xBA, 0xBF, 0, 0]), Err(ClassFileError::BadMagic(0xCAFEBABF)));
        assert!(matches!(parse_classfile(&[0xCA, 0xFE]), Err(ClassFileError::Truncated(_))));
    }

    #[test]
    fn truncated_pool_is_an_error() {
        let bytes = [0xCA, 0xFE, 0xBA, 0xBE, 0, 0, 0, 52, 0, 10, 1, 0, 5, b'a'];
        assert!(matches!(parse_classfile(&bytes), Err(ClassFileError::Truncated(_))));
    }

    #[test]
    fn tableswitch_padding_depends_on_position() {
        // iconst_0; tableswitch (pad 2) default=0 low=0 high=1 [0,0]; return
        let mut code = vec![0x03, OP_TABLESWITCH, 0, 0];
        code.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0]);
        code.push(0xB1);
        let insns = scan_instructions(&code, "t").unwrap();
        assert_eq!(insns.iter().map(|i| i.pc).collect::<Vec<_>>(), vec![0, 1, 24]);
        assert_eq!(insns.last().unwrap().opcode, 0xB1);
    }

    #[test]
    fn lookupswitch_and_wide_lengths() {
        // lookupswitch at 0 (pad 3) default npairs=1 {5:0}; wide iinc; wide iload; return
        let mut code = vec![OP_LOOKUPSWITCH, 0, 0, 0];
        code.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 5, 0, 0, 0, 0]);
        code.extend_from_slice(&[OP_WIDE, OP_IINC, 1, 0, 0, 7, OP_WIDE, 0x15, 1, 0, 0xB1]);
        let pcs: Vec<u32> = scan_instructions(&code, "t").unwrap().iter().map(|i| i.pc).collect();
        assert_eq!(pcs, vec![0, 20, 26, 30]);
    }

    #[test]
    fn overrun_and_bad_opcodes_are_reported() {
        assert!(matches!(scan_instructions(&[0xBB, 0], "t"), Err(ClassFileError::InstructionOverrun { .. })));
        assert!(matches!(scan_instructions(&[0xCB], "t"), Err(ClassFileError::BadInstruction { opcode: 0xCB, .. })));
        assert!(matches!(scan_instructions(&[OP_WIDE, 0x60], "t"), Err(ClassFileError::BadInstruction { .. })));
    }
}
