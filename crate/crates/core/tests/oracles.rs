mod support;

fn check(outcome: support::Outcome) {
    match outcome {
        Ok(summary) => println!("{summary}"),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn call_edges_match_successive_frame_pairs() {
    check(support::call_graph_oracle(120));
}

#[test]
fn heap_contexts_match_pointer_chase() {
    check(support::context_oracle(40));
}

#[test]
fn class_scan_matches_disassembler_listing() {
    check(support::classfile_oracle());
}

#[test]
fn sensitive_facts_project_onto_insensitive_ones() {
    check(support::coherence(30));
}

#[test]
fn truncated_dumps_parse_to_their_prefix() {
    check(support::error_recovery(8));
}

#[test]
fn recall_is_an_exact_ratio() {
    check(support::recall_exact());
}

#[test]
fn real_dump_yields_edges_and_all_objects() {
    check(support::real_dump());
}
