use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthParams {
    pub classes: usize,
    pub objects: usize,
    pub methods: usize,
    /// Maximum number of caller frames below the allocating method.
    pub max_callers: usize,
    pub enrichers: bool,
    /// `None` picks a layout from the seed.
    pub string_layout: Option<StringLayout>,
}

impl SynthParams {
    /// Parameters scaled to roughly `objects` declared objects. Zero gives
    /// the empty program.
    pub fn sized(objects: usize) -> Self {
        if objects == 0 {
            return SynthParams {
                classes: 0,
                objects: 0,
                methods: 0,
                max_callers: 0,
                enrichers: false,
                string_layout: None,
            };
        }
        SynthParams {
            classes: (objects / 4).clamp(1, 12),
            objects,
            methods: (objects / 3).clamp(1, 10),
            max_callers: 4,
            enrichers: true,
            string_layout: None,
        }
    }
}

const DESCRIPTORS: [&str; 5] = ["()V", "(I)V", "(Ljava/lang/Object;)Ljava/lang/Object;", "()[I", "(J[Ljava/lang/String;)Z"];
const PRIM_ELEMS: [BasicType; 4] = [BasicType::Int, BasicType::Char, BasicType::Byte, BasicType::Long];
const FIELD_TYPES: [BasicType; 10] = [
    BasicType::Object,
    BasicType::Object,
    BasicType::Object,
    BasicType::Int,
    BasicType::Long,
    BasicType::Boolean,
    BasicType::Char,
    BasicType::Double,
    BasicType::Short,
    BasicType::Float,
];
const STRING_POOL: [&str; 7] = ["", "config.xml", "hello", "com.example.Plugin", "naïve", "\u{4e2d}\u{6587}", "a,b \"q\""];
const REFLECTION_FRAMES: [(&str, &str, &str); 2] = [
    ("jdk.internal.reflect.DirectConstructorHandleAccessor", "newInstance", "([Ljava/lang/Object;)Ljava/lang/Object;"),
    ("java.lang.reflect.Constructor", "newInstance", "([Ljava/lang/Object;)Ljava/lang/Object;"),
];

fn random_prim(rng: &mut ChaCha8Rng, ty: BasicType) -> Value {
    match ty {
        BasicType::Boolean => Value::Boolean(rng.random()),
        BasicType::Char => Value::Char(rng.random_range(0x20..0x3000)),
        BasicType::Float => Value::Float(rng.random_range(-400..400) as f32 / 4.0),
        BasicType::Double => Value::Double(rng.random_range(-4000..4000) as f64 / 8.0),
        BasicType::Byte => Value::Byte(rng.random()),
        BasicType::Short => Value::Short(rng.random()),
        BasicType::Int => Value::Int(rng.random()),
        BasicType::Long => Value::Long(rng.random()),
        BasicType::Object => Value::Object(crate::hprof::Id::NULL),
    }
}

fn method_frame(m: &SynthMethod, line: Option<u32>) -> SynthFrame {
    SynthFrame::new(&m.class, &m.name, &m.descriptor, line)
}

/// A random, internally consistent program; the same seed and parameters
/// always give the same program.
///
/// Every object that records a true allocation site has a trace the site
/// matcher can resolve unambiguously: a same-typed site is only left without
/// a line when it is the method's first site of that type, and frames only
/// drop their line for such sites. Other objects have no trace or a trace of
/// frames outside the declared code.
pub fn random_program(seed: u64, params: &SynthParams) -> SynthProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = SynthProgram::new();
    p.string_layout = params.string_layout.unwrap_or(if rng.random_bool(0.5) {
        StringLayout::CharArray
    } else {
        StringLayout::ByteArray
    });
    if params.objects == 0 && params.classes == 0 {
        return p;
    }

    let n_classes = params.classes.max(1);
    for i in 0..n_classes {
        let name = format!("synth.p{}.C{i}", i % 3);
        let super_name = (i > 0 && rng.random_bool(0.4)).then(|| p.classes[rng.random_range(0..i)].name.clone());
        let fields: Vec<(String, BasicType)> = (0..rng.random_range(0..=4))
            .map(|j| (format!("f{i}_{j}"), *FIELD_TYPES.choose(&mut rng).expect("non-empty")))
            .collect();
        let fields_ref: Vec<(&str, BasicType)> = fields.iter().map(|(n, t)| (n.as_str(), *t)).collect();
        p.add_class(&name, super_name.as_deref(), &fields_ref);
    }
    let class_names: Vec<String> = p.classes.iter().map(|c| c.name.clone()).collect();

    let mut site_types: Vec<String> = class_names.clone();
    site_types.extend(class_names.iter().take(3).map(|c| format!("{c}[]")));
    site_types.extend(PRIM_ELEMS.iter().map(|t| format!("{}[]", t.java_name())));
    for k in 0..params.methods.max(1) {
        let n_sites = rng.random_range(0..=5);
        let mut sites: Vec<SynthSite> = Vec::with_capacity(n_sites);
        for s in 0..n_sites {
            let ty = site_types.choose(&mut rng).expect("non-empty").clone();
            let first_of_type = !sites.iter().any(|x| x.ty == ty);
            let line = if first_of_type && rng.random_bool(0.2) { None } else { Some(10 + 3 * s as u32) };
            sites.push(SynthSite { ty, line });
        }
        let desc = DESCRIPTORS[k % DESCRIPTORS.len()];
        p.add_method(&format!("synth.code.K{}", k % 4), &format!("m{k}"), desc, sites);
    }
    let all_sites: Vec<SiteRef> = p
        .methods
        .iter()
        .enumerate()
        .flat_map(|(mi, m)| (0..m.sites.len()).map(move |si| SiteRef { method: mi, site: si }))
        .collect();

    let main = SynthFrame::new("synth.Main", "main", "([Ljava/lang/String;)V", Some(7));
    let callers = |rng: &mut ChaCha8Rng, p: &SynthProgram| -> Vec<SynthFrame> {
        let mut frames: Vec<SynthFrame> = (0..rng.random_range(0..=params.max_callers))
            .map(|_| {
                let m = p.methods.choose(rng).expect("non-empty");
                method_frame(m, rng.random_bool(0.9).then(|| rng.random_range(1..200)))
            })
            .collect();
        if rng.random_bool(0.7) {
            frames.push(main.clone());
        }
        frames
    };

    for _ in 0..params.objects {
        let roll = rng.random_range(0..100);
        if roll < 15 {
            let content = *STRING_POOL.choose(&mut rng).expect("non-empty");
            let trace = rng.random_bool(0.5).then(|| {
                let mut frames = vec![method_frame(p.methods.choose(&mut rng).expect("non-empty"), Some(3))];
                frames.extend(callers(&mut rng, &p));
                p.add_trace(frames)
            });
            p.add_string(content, trace);
            continue;
        }
        let Some(&site) = all_sites.choose(&mut rng) else {
            // No sites at all: untraced instance of a random class.
            let class = class_names.choose(&mut rng).expect("non-empty").clone();
            p.add_instance(&class, Vec::new(), None);
            continue;
        };
        let m = p.methods[site.method].clone();
        let s = m.sites[site.site].clone();
        let kind = if let Some(elem) = s.ty.strip_suffix("[]") {
            match PRIM_ELEMS.iter().find(|t| t.java_name() == elem) {
                Some(&t) => {
                    let values = (0..rng.random_range(0..6)).map(|_| random_prim(&mut rng, t)).collect();
                    SynthObjectKind::PrimitiveArray { elem: t, values }
                }
                None => SynthObjectKind::ObjectArray { elem_class: elem.to_owned(), elements: Vec::new() },
            }
        } else {
            SynthObjectKind::Instance { class: s.ty.clone(), fields: Vec::new() }
        };

        let obfuscate = rng.random_range(0..100);
        let (trace, true_site) = if obfuscate < 8 {
            (None, None)
        } else if obfuscate < 14 {
            let frames = vec![
                SynthFrame::new("native.Lib", "alloc", "()Ljava/lang/Object;", None),
                SynthFrame::new("native.Lib", "entry", "()V", Some(1)),
            ];
            (Some(p.add_trace(frames)), None)
        } else {
            let mut frames = Vec::new();
            if let SynthObjectKind::Instance { class, .. } = &kind {
                // Superclass constructors run innermost.
                let mut chain = Vec::new();
                let mut cur = Some(class.clone());
                while let Some(c) = cur {
                    cur = p.class(&c).and_then(|x| x.super_name.clone());
                    chain.push(c);
                }
                let depth = rng.random_range(1..=chain.len());
                for c in chain[..depth].iter().rev() {
                    frames.push(SynthFrame::new(c, "<init>", "()V", Some(rng.random_range(1..50))));
                }
                if rng.random_bool(0.2) {
                    for (c, n, d) in REFLECTION_FRAMES {
                        frames.push(SynthFrame::new(c, n, d, None));
                    }
                }
            }
            let site_index = m.site_index(site.site);
            let line = match s.line {
                Some(_) if site_index == 0 && rng.random_bool(0.15) => None,
                other => other,
            };
            frames.push(method_frame(&m, line));
            frames.extend(callers(&mut rng, &p));
            (Some(p.add_trace(frames)), Some(site))
        };
        let r = p.add_object(kind, trace);
        p.objects[r.0].site = true_site;
    }

    // References, now that every object exists.
    let n = p.objects.len();
    for i in 0..n {
        let kind = p.objects[i].kind.clone();
        match kind {
            SynthObjectKind::Instance { class, .. } => {
                let layout = p.layout(&class).expect("declared hierarchy");
                let mut fields = Vec::new();
                for (name, ty) in layout {
                    if !rng.random_bool(0.7) {
                        continue;
                    }
                    let v = if ty == BasicType::Object {
                        if rng.random_bool(0.8) {
                            SynthValue::Ref(ObjRef(rng.random_range(0..n)))
                        } else {
                            SynthValue::Null
                        }
                    } else {
                        SynthValue::Prim(random_prim(&mut rng, ty))
                    };
                    fields.push((name, v));
                }
                if let SynthObjectKind::Instance { fields: f, .. } = &mut p.objects[i].kind {
                    *f = fields;
                }
            }
            SynthObjectKind::ObjectArray { .. } => {
                let elements: Vec<Option<ObjRef>> = (0..rng.random_range(0..6))
                    .map(|_| rng.random_bool(0.8).then(|| ObjRef(rng.random_range(0..n))))
                    .collect();
                if let SynthObjectKind::ObjectArray { elements: e, .. } = &mut p.objects[i].kind {
                    *e = elements;
                }
            }
            _ => {}
        }
        if rng.random_bool(0.2) {
            p.add_root(ObjRef(i));
        }
    }
    for ci in 0..p.classes.len() {
        if n > 0 && rng.random_bool(0.3) {
            let v = if rng.random_bool(0.7) {
                SynthValue::Ref(ObjRef(rng.random_range(0..n)))
            } else {
                SynthValue::Prim(Value::Int(rng.random()))
            };
            p.classes[ci].statics.push((format!("s{ci}"), v));
        }
    }

    if params.enrichers && n > 0 {
        let instances: Vec<usize> = (0..n)
            .filter(|&i| {
                matches!(&p.objects[i].kind, SynthObjectKind::Instance { .. })
            })
            .collect();
        // Receiver chains: each linked object points at an earlier instance.
        for &i in &instances {
            let earlier: Vec<usize> = instances.iter().copied().filter(|&j| j < i).collect();
            if let Some(&j) = earlier.choose(&mut rng) {
                if rng.random_bool(0.4) {
                    p.add_obj_and_ctx(ObjRef(i), ObjRef(j));
                }
            }
        }
        for _ in 0..(n / 5).max(1) {
            let callee = method_frame(p.methods.choose(&mut rng).expect("non-empty"), None);
            let mut rest = vec![method_frame(p.methods.choose(&mut rng).expect("non-empty"), Some(rng.random_range(1..200)))];
            rest.extend(callers(&mut rng, &p));
            let trace = p.edge_ctx_trace(callee, rest);
            let pick = |rng: &mut ChaCha8Rng| instances.choose(rng).filter(|_| rng.random_bool(0.8)).map(|&i| ObjRef(i));
            let caller_ctx = pick(&mut rng);
            let callee_ctx = pick(&mut rng);
            p.add_edge_ctx(caller_ctx, callee_ctx, trace);
        }
        for j in 0..rng.random_range(0..=2) {
            let bytes = minimal_classfile(&format!("synth/gen/G{j}"));
            let loader = instances.choose(&mut rng).map(|&i| ObjRef(i)).filter(|_| rng.random_bool(0.7));
            p.add_class_data(&format!("synth.gen.G{j}"), loader, &bytes);
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_program() {
        let params = SynthParams::sized(30);
        assert_eq!(random_program(7, &params), random_program(7, &params));
        assert_ne!(random_program(7, &params), random_program(8, &params));
    }

    #[test]
    fn size_zero_is_empty() {
        assert!(random_program(3, &SynthParams::sized(0)).is_empty());
    }
}
