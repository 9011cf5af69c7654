use std::io::Read;

use heapfacts::heap::{build_heap, objects_of_class};
use heapfacts::hprof::{parse_dump, record_stats, IdSize, RecordKind};

fn gunzip(path: &str) -> Vec<u8> {
    let file = std::fs::File::open(path).unwrap();
    let mut out = Vec::new();
    flate2::read::GzDecoder::new(file).read_to_end(&mut out).unwrap();
    out
}

const DUMP: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/real/hello.hprof.gz");
const HISTO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/real/class_histogram.log.gz");

/// Object total of the last class histogram the JVM logged (the one taken
/// after the full GC that also wrote the dump).
fn histogram_total() -> usize {
    let log = String::from_utf8(gunzip(HISTO)).unwrap();
    let line = log.lines().rfind(|l| l.contains(" Total ")).unwrap();
    line.split_whitespace().rev().nth(1).unwrap().parse().unwrap()
}

#[test]
fn hello_world_dump_parses_cleanly() {
    let dump = parse_dump(&gunzip(DUMP)).unwrap();
    assert_eq!(dump.header.id_size, IdSize::Eight);
    assert!(dump.header.format_name.starts_with("JAVA PROFILE 1.0"));
    assert!(dump.warnings.is_empty(), "{:?}", dump.warnings);
    let stats = record_stats(&dump);
    assert!(stats[&RecordKind::LoadClass] > 100);
    assert!(stats[&RecordKind::StackTrace] > 0);

    let graph = build_heap(&dump);
    assert!(graph.warnings.is_empty(), "{:?}", &graph.warnings[..graph.warnings.len().min(5)]);
    assert_eq!(graph.len(), histogram_total());
}

#[test]
fn hello_world_strings_are_decoded() {
    let graph = build_heap(&parse_dump(&gunzip(DUMP)).unwrap());
    assert!(graph.strings_by_content.contains_key("hello, world"));
    assert!(!objects_of_class(&graph, "java.lang.Thread", true).is_empty());
    assert!(graph.classes_by_name.contains_key("Hello"));
}
