//! JVM naming: internal names, descriptors and the canonical method
//! signature `<a.b.C: ret name(arg1,arg2)>` that frames, code models and fact
//! files join on.

/// Converts an internal class name (`a/b/C`) or an array descriptor
/// (`[[Ljava/lang/String;`, `[I`) to source form (`a.b.C`,
/// `java.lang.String[][]`, `int[]`).
pub fn internal_to_dotted(name: &str) -> String {
    if name.starts_with('[') {
        if let Some((ty, rest)) = parse_field_type(name) {
            if rest.is_empty() {
                return ty;
            }
        }
    }
    name.replace('/', ".")
}

/// Parses one field descriptor off the front of `desc`, returning the
/// source-form type and the unconsumed remainder.
pub fn parse_field_type(desc: &str) -> Option<(String, &str)> {
    let dims = desc.bytes().take_while(|&b| b == b'[').count();
    let rest = &desc[dims..];
    let (base, rest) = match rest.as_bytes().first()? {
        b'B' => ("byte".to_owned(), &rest[1..]),
        b'C' => ("char".to_owned(), &rest[1..]),
        b'D' => ("double".to_owned(), &rest[1..]),
        b'F' => ("float".to_owned(), &rest[1..]),
        b'I' => ("int".to_owned(), &rest[1..]),
        b'J' => ("long".to_owned(), &rest[1..]),
        b'S' => ("short".to_owned(), &rest[1..]),
        b'Z' => ("boolean".to_owned(), &rest[1..]),
        b'L' => {
            let end = rest.find(';')?;
            if end == 1 {
                return None;
            }
            (rest[1..end].replace('/', "."), &rest[end + 1..])
        }
        _ => return None,
    };
    let mut ty = base;
    for _ in 0..dims {
        ty.push_str("[]");
    }
    Some((ty, rest))
}

/// A parsed method descriptor in source form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodType {
    pub params: Vec<String>,
    pub ret: String,
}

pub fn parse_method_descriptor(desc: &str) -> Option<MethodType> {
    let mut rest = desc.strip_prefix('(')?;
    let mut params = Vec::new();
    while !rest.starts_with(')') {
        let (ty, r) = parse_field_type(rest)?;
        params.push(ty);
        rest = r;
    }
    rest = &rest[1..];
    let ret = if rest == "V" {
        "void".to_owned()
    } else {
        let (ty, r) = parse_field_type(rest)?;
        if !r.is_empty() {
            return None;
        }
        ty
    };
    Some(MethodType { params, ret })
}

/// Canonical method id. Descriptors that do not parse are kept verbatim so
/// that frames from odd code still get a stable, distinct id.
pub fn method_signature(class: &str, name: &str, descriptor: &str) -> String {
    match parse_method_descriptor(descriptor) {
        Some(mt) => format!("<{class}: {} {name}({})>", mt.ret, mt.params.join(",")),
        None => format!("<{class}: {name}{descriptor}>"),
    }
}

/// Inverse of [`method_signature`] for well-formed signatures: returns
/// `(class, method name, descriptor)`.
pub fn parse_method_signature(sig: &str) -> Option<(String, String, String)> {
    let inner = sig.strip_prefix('<')?.strip_suffix('>')?;
    let (class, rest) = inner.split_once(": ")?;
    let (ret, rest) = rest.split_once(' ')?;
    let open = rest.find('(')?;
    let name = &rest[..open];
    let args = rest[open + 1..].strip_suffix(')')?;
    if class.is_empty() || name.is_empty() {
        return None;
    }
    let mut desc = String::from("(");
    if !args.is_empty() {
        for arg in args.split(',') {
            desc.push_str(&source_to_descriptor(arg)?);
        }
    }
    desc.push(')');
    if ret == "void" {
        desc.push('V');
    } else {
        desc.push_str(&source_to_descriptor(ret)?);
    }
    Some((class.to_owned(), name.to_owned(), desc))
}

/// `int[]` -> `[I`, `a.b.C` -> `La/b/C;`.
pub fn source_to_descriptor(ty: &str) -> Option<String> {
    let ty = ty.trim();
    let mut base = ty;
    let mut dims = 0;
    while let Some(b) = base.strip_suffix("[]") {
        base = b;
        dims += 1;
    }
    if base.is_empty() || base.contains(['[', ']', ' ', '/', ';']) {
        return None;
    }
    let mut out = "[".repeat(dims);
    match base {
        "byte" => out.push('B'),
        "char" => out.push('C'),
        "double" => out.push('D'),
        "float" => out.push('F'),
        "int" => out.push('I'),
        "long" => out.push('J'),
        "short" => out.push('S'),
        "boolean" => out.push('Z'),
        "void" => return None,
        obj => {
            out.push('L');
            out.push_str(&obj.replace('.', "/"));
            out.push(';');
        }
    }
    Some(out)
}

pub const PRIMITIVE_TYPES: [&str; 8] = ["boolean", "byte", "char", "double", "float", "int", "long", "short"];

/// True for `int[]`, `byte[]`, ... (one dimension or more).
pub fn is_primitive_array(ty: &str) -> bool {
    ty.strip_suffix("[]")
        .map(|elem| elem.trim_end_matches("[]"))
        .is_some_and(|elem| PRIMITIVE_TYPES.contains(&elem))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn internal_names_become_dotted() {
        assert_eq!(internal_to_dotted("java/lang/Object"), "java.lang.Object");
        assert_eq!(internal_to_dotted("[Ljava/lang/String;"), "java.lang.String[]");
        assert_eq!(internal_to_dotted("[[I"), "int[][]");
        assert_eq!(internal_to_dotted("already.Dotted"), "already.Dotted");
    }

    #[test]
    fn signatures_use_source_types() {
        assert_eq!(method_signature("C", "m", "()V"), "<C: void m()>");
        assert_eq!(
            method_signature("a.B", "f", "(I[Ljava/lang/String;J)[[D"),
            "<a.B: double[][] f(int,java.lang.String[],long)>"
        );
        assert_eq!(method_signature("C", "bad", "(Q)V"), "<C: bad(Q)V>");
    }

    #[test]
    fn signature_parse_inverts_format() {
        for (class, name, desc) in [
            ("C", "m", "()V"),
            ("a.b.C", "<init>", "(IZ[[Ljava/lang/Object;)V"),
            ("x.Y", "g", "(Ljava/util/List;)[B"),
        ] {
            let sig = method_signature(class, name, desc);
            assert_eq!(parse_method_signature(&sig), Some((class.into(), name.into(), desc.into())));
        }
        assert_eq!(parse_method_signature("C.m()V"), None);
    }

    #[test]
    fn malformed_descriptors_are_rejected() {
        assert!(parse_method_descriptor("()").is_none());
        assert!(parse_method_descriptor("(L;)V").is_none());
        assert!(parse_method_descriptor("(I)VV").is_none());
        assert!(parse_method_descriptor("I").is_none());
    }

    #[test]
    fn primitive_arrays() {
        assert!(is_primitive_array("int[]"));
        assert!(is_primitive_array("char[][]"));
        assert!(!is_primitive_array("int"));
        assert!(!is_primitive_array("java.lang.String[]"));
    }
}
