use std::path::Path;

use proptest::prelude::*;
use scbm_harness::runner::trace_table;
use scbm_harness::{emit_csv, fmt_float, parse_scenario, read_csv, run_experiment, HarnessError, Table};

const GOLDEN: &str = "tests/golden/synthetic-dt-103ms.csv";

#[test]
fn empty_trajectory_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    emit_csv(&trace_table("dirty-rate-jump", "none", &[]), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, "scenario,point,n,e_tot,dirty_scale,k0_scale,settle_iterations,assumptions\n");
}

#[test]
fn read_back_equals_what_was_written() {
    let scen = parse_scenario("t", "preset = \"synthetic-deadlines\"\n").unwrap();
    let table = run_experiment(&scen).unwrap().to_table();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    emit_csv(&table, &path).unwrap();
    assert_eq!(read_csv(&path).unwrap(), table);
}

#[test]
fn quoted_cells_survive_the_round_trip() {
    let mut t = Table::new(&["label", "note"]);
    t.rows.push(vec!["a,b".into(), "line\nbreak and \"quotes\"".into()]);
    t.rows.push(vec![String::new(), "plain".into()]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.csv");
    emit_csv(&t, &path).unwrap();
    assert_eq!(read_csv(&path).unwrap(), t);
}

#[test]
fn io_failures_name_the_path() {
    let bad = Path::new("/nonexistent-dir/for/sure/out.csv");
    match emit_csv(&Table::new(&["x"]), bad).unwrap_err() {
        HarnessError::Io { path, .. } => assert_eq!(path, bad),
        other => panic!("expected an I/O error, got {other:?}"),
    }
}

/// Set `SCBM_BLESS=1` to rewrite the fixture after a deliberate change.
#[test]
fn first_synthetic_column_matches_the_golden_file() {
    let scen = parse_scenario("synthetic-dt-103ms", "preset = \"synthetic-dt-103ms\"\n").unwrap();
    let csv = run_experiment(&scen).unwrap().to_table().to_csv_string();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join(GOLDEN);
    if std::env::var_os("SCBM_BLESS").is_some() {
        std::fs::create_dir_all(golden.parent().unwrap()).unwrap();
        std::fs::write(&golden, &csv).unwrap();
    }
    let want = std::fs::read_to_string(&golden).expect("golden file present");
    assert_eq!(csv, want);
}

proptest! {
    #[test]
    fn nine_digit_floats_parse_back_closely(mant in 1.0f64..10.0, exp in -12i32..12, neg in any::<bool>()) {
        let x = if neg { -mant } else { mant } * 10f64.powi(exp);
        let s = fmt_float(x);
        let back: f64 = s.parse().unwrap();
        prop_assert!(((back - x) / x).abs() <= 5e-9, "{x} -> {s}");
        let digits = s.trim_start_matches('-').split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).collect::<String>();
        prop_assert!(digits.trim_start_matches('0').len() <= 9, "{s}");
    }
}
