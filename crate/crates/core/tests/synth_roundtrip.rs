use heapfacts::heap::build_heap;
use heapfacts::hprof::{parse_dump, record_stats, IdSize, RecordKind};
use heapfacts::synth::{
    emit, emit_with, random_program, verify_round_trip, EmitOptions, SynthError, SynthParams, SynthProgram, SynthValue,
};

#[test]
fn empty_program_is_header_and_end_only() {
    let out = emit(&SynthProgram::new(), IdSize::Eight).unwrap();
    assert_eq!(out.record_ends.len(), 1);
    assert_eq!(out.bytes.len(), out.header_len + 9);
    let dump = parse_dump(&out.bytes).unwrap();
    assert!(dump.records.is_empty() && dump.warnings.is_empty());
}

#[test]
fn undeclared_field_target_is_inconsistent() {
    let mut p = SynthProgram::new();
    p.add_class("C", None, &[("f", heapfacts::hprof::BasicType::Object)]);
    p.add_instance("C", vec![("f", SynthValue::Ref(heapfacts::synth::ObjRef(9)))], None);
    let err = emit(&p, IdSize::Eight).unwrap_err();
    assert!(matches!(err, SynthError::InconsistentProgram(ref m) if m.contains("#9")), "{err}");
}

#[test]
fn random_programs_round_trip_in_both_id_sizes() {
    for seed in 0..60u64 {
        let p = random_program(seed, &SynthParams::sized(25));
        for id_size in [IdSize::Four, IdSize::Eight] {
            let opts = EmitOptions { id_size, segment_records: 7 };
            let out = emit_with(&p, &opts).unwrap();
            let dump = parse_dump(&out.bytes).unwrap();
            assert!(dump.warnings.is_empty(), "seed {seed}: {:?}", dump.warnings);
            let graph = build_heap(&dump);
            let bad = verify_round_trip(&p, &out, &graph);
            assert!(bad.is_empty(), "seed {seed} {id_size:?}: {bad:#?}");
        }
    }
}

#[test]
fn emission_is_bit_stable() {
    let p = random_program(42, &SynthParams::sized(50));
    assert_eq!(emit(&p, IdSize::Eight).unwrap(), emit(&p, IdSize::Eight).unwrap());
    let stats = record_stats(&parse_dump(&emit(&p, IdSize::Eight).unwrap().bytes).unwrap());
    assert_eq!(stats[&RecordKind::HeapDump], 1);
}
