use scbm_harness::{emit_plotdata, parse_scenario, read_csv, run_dynamic, Scenario};

const MAX_SETTLE: usize = 10;
const MAX_SPREAD: usize = 2;

fn preset(name: &str) -> Scenario {
    parse_scenario(name, &format!("preset = \"{name}\"\n")).unwrap()
}

/// Settle counts per jump event (the run start is excluded), one vector per a_max.
fn settle_by_run(name: &str) -> Vec<(String, Vec<usize>)> {
    let out = run_dynamic(&preset(name)).unwrap();
    out.runs
        .iter()
        .map(|r| (r.point.clone(), r.settle.iter().filter(|s| s.at_iter > 0).map(|s| s.iterations).collect()))
        .collect()
}

fn check_settling(name: &str) {
    let runs = settle_by_run(name);
    assert_eq!(runs.len(), 3, "one run per a_max");
    for (point, settle) in &runs {
        assert_eq!(settle.len(), 2, "{name} {point}: both jumps reported");
        for s in settle {
            assert!(*s <= MAX_SETTLE, "{name} {point}: settled after {s}");
        }
    }
    for k in 0..2 {
        let v: Vec<usize> = runs.iter().map(|(_, s)| s[k]).collect();
        let spread = v.iter().max().unwrap() - v.iter().min().unwrap();
        assert!(spread <= MAX_SPREAD, "{name} event {k}: settle times {v:?}");
    }
}

#[test]
fn dirty_rate_jumps_settle_quickly_for_every_gain_cap() {
    check_settling("dirty-rate-jump");
}

#[test]
fn power_coefficient_jumps_settle_quickly_for_every_gain_cap() {
    check_settling("k0-jump");
}

#[test]
fn trace_follows_the_active_scales() {
    let out = run_dynamic(&preset("dirty-rate-jump")).unwrap();
    for r in out.rows.iter().filter(|r| r.point == "a_max=0.01") {
        let want = if (8..20).contains(&r.n) { 2.0 } else { 1.0 };
        assert_eq!(r.dirty_scale, want, "n = {}", r.n);
        assert_eq!(r.k0_scale, 1.0);
    }
    // Doubling the dirty rate costs energy; the trace must show it.
    let e = |n: usize| out.rows.iter().find(|r| r.point == "a_max=0.01" && r.n == n).unwrap().e_tot;
    assert!(e(19) > e(7));
}

#[test]
fn plot_data_has_one_row_per_iterate_and_settle_marks() {
    let out = run_dynamic(&preset("k0-jump")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k0-jump.csv");
    emit_plotdata(&out, &path).unwrap();
    let t = read_csv(&path).unwrap();
    assert_eq!(t.rows.len(), out.rows.len());
    let marked: Vec<(&str, &str)> = (0..t.rows.len())
        .filter(|&r| !t.get(r, "settle_iterations").unwrap().is_empty())
        .map(|r| (t.get(r, "point").unwrap(), t.get(r, "n").unwrap()))
        .collect();
    assert_eq!(marked.len(), 9, "three marks per run: start and two jumps");
    assert!(marked.contains(&("a_max=0.003", "8")));
    assert!(marked.contains(&("a_max=0.03", "20")));
}

#[test]
fn scenarios_without_events_are_refused() {
    let scen = preset("synthetic-dt-103ms");
    assert!(run_dynamic(&scen).is_err());
}
