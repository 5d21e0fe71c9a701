use cfeval_demo_wasm::{audit_ranges, distances, score_methods};

#[test]
fn distances_match_hand_values() {
    assert_eq!(
        distances(&[0.0, 0.0], &[3.0, 4.0]).unwrap(),
        vec![7.0, 5.0, 12.0]
    );
    assert!(distances(&[0.0], &[1.0, 2.0]).is_err());
}

#[test]
fn score_table_lists_all_methods() {
    let table = score_methods(7, 100, 0.0, 1.0).unwrap();
    for m in ["| tiny |", "| mid |", "| prototype |"] {
        assert!(table.contains(m), "{table}");
    }
    assert!(score_methods(7, 100, 1.0, 0.0).is_err());
}

#[test]
fn audit_reports_a_verdict() {
    let text = audit_ranges(7, 100).unwrap();
    assert!(text.contains("agreement"));
}
