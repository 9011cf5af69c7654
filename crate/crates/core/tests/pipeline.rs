mod support;

use std::collections::BTreeSet;
use std::io::Read;

use heapfacts::code::CodeModel;
use heapfacts::context::{ContextError, PADDING};
use heapfacts::facts::{write_class_archive, CALL_GRAPH_EDGE, OBJECT_FIELD_VALUE};
use heapfacts::heap::build_heap;
use heapfacts::hprof::{parse_dump, BasicType, IdSize};
use heapfacts::pipeline::{analyze, analyze_graph, with_recovered_classes, PipelineConfig};
use heapfacts::recall::{recall, Edge, MatchMode};
use heapfacts::synth::{emit, minimal_classfile, SynthFrame, SynthProgram, SynthSite};
use proptest::prelude::*;

fn config(sens: &str) -> PipelineConfig {
    PipelineConfig { sensitivity: sens.parse().unwrap(), ..Default::default() }
}

#[test]
fn ctx_cycle_is_reported_not_followed() {
    let mut p = SynthProgram::new();
    p.add_class("cyc.Node", None, &[]);
    let a = p.add_instance("cyc.Node", vec![], None);
    let b = p.add_instance("cyc.Node", vec![], None);
    let c = p.add_instance("cyc.Node", vec![], None);
    p.add_obj_and_ctx(c, a);
    p.add_obj_and_ctx(a, b);
    p.add_obj_and_ctx(b, a);
    let bytes = emit(&p, IdSize::Eight).unwrap().bytes;
    let err = analyze(&bytes, CodeModel::default(), &config("object:1:4")).err().expect("cycle");
    assert!(matches!(err, heapfacts::pipeline::PipelineError::Context(ContextError::CycleDetected(_))), "{err}");
    // A depth that never reaches the repeat is fine.
    assert!(analyze(&bytes, CodeModel::default(), &config("object:1:1")).is_ok());
}

#[test]
fn shorter_contexts_are_prefixes_of_longer_ones() {
    for seed in 0..12 {
        let f = support::chain_fixture(seed);
        let emitted = emit(&f.program, IdSize::Four).unwrap();
        let graph = build_heap(&parse_dump(&emitted.bytes).unwrap());
        for flavor in ["object", "type", "call-site"] {
            let runs: Vec<_> = (1..=4)
                .map(|m| {
                    let cfg = config(&format!("{flavor}:1:{m}"));
                    analyze_graph(graph.clone(), f.program.code_model(), &cfg).unwrap().contexts
                })
                .collect();
            for &o in &f.subjects {
                let id = emitted.id(o);
                for w in runs.windows(2) {
                    let (short, long) = (w[0].heap_of(id).0, w[1].heap_of(id).0);
                    assert_eq!(long.len(), short.len() + 1);
                    assert_eq!(short[..], long[..short.len()], "seed {seed} {flavor}");
                    // Once padding starts it never stops.
                    if short.last().is_some_and(|c| c == PADDING) {
                        assert_eq!(long.last().unwrap(), PADDING);
                    }
                }
            }
        }
    }
}

#[test]
fn static_and_helper_calls_get_the_right_contexts() {
    let mut p = SynthProgram::new();
    p.add_class("cg.Recv", None, &[]);
    p.add_method("cg.Main", "main", "([Ljava/lang/String;)V", vec![SynthSite { ty: "cg.Recv".into(), line: Some(4) }]);
    let main = SynthFrame::new("cg.Main", "main", "([Ljava/lang/String;)V", Some(4));
    let t = p.add_trace(vec![main.clone()]);
    let recv = p.add_instance("cg.Recv", vec![], Some(t));
    p.objects[recv.0].site = Some(heapfacts::synth::SiteRef { method: 0, site: 0 });
    let run = SynthFrame::new("cg.Recv", "run", "()V", Some(9));
    let util = SynthFrame::new("cg.Util", "help", "()V", Some(2));
    // Virtual call main -> run on recv, recorded by a helper.
    let t = p.edge_ctx_trace(run.clone(), vec![SynthFrame { line: 5, ..main.clone() }]);
    p.add_edge_ctx(None, Some(recv), t);
    // Static call run -> help seen only on a plain trace.
    let t = p.add_trace(vec![util.clone(), run.clone(), SynthFrame { line: 5, ..main.clone() }]);
    p.add_primitive_array(BasicType::Int, vec![], Some(t));
    let bytes = emit(&p, IdSize::Eight).unwrap().bytes;
    let cfg = config("object:1:1");
    let a = analyze(&bytes, p.code_model(), &cfg).unwrap();
    assert!(a.warnings().is_empty(), "{:?}", a.warnings());
    let facts = a.facts(&cfg);
    let rows = &facts.get(CALL_GRAPH_EDGE).rows;
    let pad = format!("[{PADDING}]");
    let recv_key = "[<cg.Main: void main(java.lang.String[])>/new cg.Recv/0]".to_owned();
    let want: BTreeSet<Vec<String>> = [
        vec![pad.clone(), "<cg.Main: void main(java.lang.String[])>/5".into(), recv_key, "<cg.Recv: void run()>".into()],
        vec![pad.clone(), "<cg.Recv: void run()>/9".into(), pad, "<cg.Util: void help()>".into()],
    ]
    .into();
    assert_eq!(*rows, want);
}

#[test]
fn recovered_classes_feed_the_code_model_and_a_stable_archive() {
    let mut p = SynthProgram::new();
    p.add_class("ld.Loader", None, &[]);
    let l1 = p.add_instance("ld.Loader", vec![], None);
    let l2 = p.add_instance("ld.Loader", vec![], None);
    let bytes = minimal_classfile("gen/Made");
    p.add_class_data("gen.Made", Some(l1), &bytes);
    p.add_class_data("gen.Made", Some(l2), &bytes);
    p.add_class_data("gen.Made", Some(l1), &minimal_classfile("gen/Other"));
    p.add_class_data("gen.Boot", None, &minimal_classfile("gen/Boot"));
    let graph = build_heap(&parse_dump(&emit(&p, IdSize::Four).unwrap().bytes).unwrap());
    let (code, classes) = with_recovered_classes(&graph, CodeModel::default(), &PipelineConfig::default()).unwrap();

    let mut names: Vec<String> = classes.iter().map(|c| c.entry_name()).collect();
    names.sort();
    assert_eq!(names.len(), 3, "{names:?}");
    assert!(names[0].starts_with("loader_bootstrap/gen/Boot.class"));
    assert_ne!(names[1], names[2], "same-key loaders must not collide");
    assert!(names[1..].iter().all(|n| n.ends_with("/gen/Made.class")));
    assert!(code.method("<gen.Made: void make()>").is_some());
    assert!(code.method("<gen.Boot: void make()>").is_some());

    let a = write_class_archive(&classes, std::io::Cursor::new(Vec::new())).unwrap().into_inner();
    let mut reversed = classes.clone();
    reversed.reverse();
    let b = write_class_archive(&reversed, std::io::Cursor::new(Vec::new())).unwrap().into_inner();
    assert_eq!(a, b);
    let mut zip = zip::ZipArchive::new(std::io::Cursor::new(a)).unwrap();
    let mut first = Vec::new();
    zip.by_name(&names[1]).unwrap().read_to_end(&mut first).unwrap();
    assert_eq!(first, bytes);
}

#[test]
fn archived_bytes_are_exactly_what_the_heap_held() {
    let fake: Vec<u8> = (0..16u8).map(|b| b.wrapping_mul(37)).collect();
    let mut p = SynthProgram::new();
    p.add_class_data("dyn.Fake", None, &fake);
    let graph = build_heap(&parse_dump(&emit(&p, IdSize::Eight).unwrap().bytes).unwrap());
    let (code, classes) = with_recovered_classes(&graph, CodeModel::default(), &PipelineConfig::default()).unwrap();
    assert_eq!(classes.len(), 1);
    assert_eq!(classes[0].bytecode, fake);
    // Unparseable bytes are archived but flagged when read as code.
    assert_eq!(code.warnings.len(), 1);
    let zip_bytes = write_class_archive(&classes, std::io::Cursor::new(Vec::new())).unwrap().into_inner();
    let mut zip = zip::ZipArchive::new(std::io::Cursor::new(zip_bytes)).unwrap();
    let mut got = Vec::new();
    zip.by_name("loader_bootstrap/dyn/Fake.class").unwrap().read_to_end(&mut got).unwrap();
    assert_eq!(got, fake);
}

#[test]
fn signatures_with_commas_are_quoted_in_csv() {
    let mut p = SynthProgram::new();
    p.add_class("q.Box", None, &[("other", BasicType::Object)]);
    p.add_method("q.Make", "of", "(II)Lq/Box;", vec![SynthSite { ty: "q.Box".into(), line: Some(3) }]);
    let t = p.add_trace(vec![SynthFrame::new("q.Make", "of", "(II)Lq/Box;", Some(3))]);
    let a = p.add_instance("q.Box", vec![], Some(t));
    let b = p.add_instance("q.Box", vec![], Some(t));
    p.set_field(a, "other", heapfacts::synth::SynthValue::Ref(b));
    let bytes = emit(&p, IdSize::Eight).unwrap().bytes;
    let cfg = PipelineConfig::default();
    let csv = String::from_utf8(analyze(&bytes, p.code_model(), &cfg).unwrap().facts(&cfg).get(OBJECT_FIELD_VALUE).to_csv()).unwrap();
    let key = "\"<q.Make: q.Box of(int,int)>/new q.Box/0\"";
    assert_eq!(csv, format!("obj,field,value\n{key},other,{key}\n"));
}

fn edge() -> impl Strategy<Value = Edge> {
    (0..6u8, 0..4u8, 0..6u8).prop_map(|(c, l, m)| Edge::new(format!("<C{c}: void m()>/{l}"), format!("<C{m}: void m()>")))
}

proptest! {
    #[test]
    fn recall_grows_with_the_reference(
        observed in prop::collection::btree_set(edge(), 1..20),
        base in prop::collection::btree_set(edge(), 0..20),
        extra in prop::collection::btree_set(edge(), 0..20),
    ) {
        let bigger: BTreeSet<Edge> = base.union(&extra).cloned().collect();
        for mode in [MatchMode::Exact, MatchMode::MethodPair] {
            let small = recall(&base, &observed, mode).unwrap();
            let large = recall(&bigger, &observed, mode).unwrap();
            prop_assert!(small.recall <= large.recall);
        }
        let exact = recall(&base, &observed, MatchMode::Exact).unwrap();
        prop_assert_eq!(exact.observed, observed.len() as u64);
        let loose = recall(&base, &observed, MatchMode::MethodPair).unwrap();
        prop_assert!(exact.recall <= loose.recall);
        prop_assert_eq!(recall(&observed, &observed, MatchMode::Exact).unwrap().recall, 1.into());
    }
}
