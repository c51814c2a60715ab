use scbm_harness::{parse_scenario, run_oracle, Execution};

const RESOLUTION: usize = 120;

fn fixed(m0: f64, w: f64, i_max: usize, q: usize, dt: f64, mt: f64) -> String {
    format!(
        r#"
managers = ["scbm"]
[spec]
m0 = {m0}
dirty_rate = {w}
r_hat = 18.0
beta = 2.0
delta_mt = {mt}
delta_dt = {dt}
i_max = {i_max}
q = {q}
[power]
k0 = 0.025
p_setup = 0.29729
"#
    )
}

#[test]
fn single_pre_copy_round_matches_the_grid() {
    let scen = parse_scenario("toy", &fixed(16.0, 2.0, 0, 1, 0.5, 20.0)).unwrap();
    let rows = run_oracle(&scen, RESOLUTION, Execution::Sequential).unwrap();
    let r = &rows[0];
    assert!(r.feasible && r.exhaustive);
    let (o, s) = (r.oracle_e_tot.unwrap(), r.solver_e_tot.unwrap());
    assert!(s <= o * 1.01, "solver {s} vs grid {o}");
    assert!(r.verdicts_agree());
}

#[test]
fn two_clusters_of_one_round_match_the_grid() {
    let scen = parse_scenario("small", &fixed(32.0, 3.0, 2, 2, 0.05, 30.0)).unwrap();
    let rows = run_oracle(&scen, RESOLUTION, Execution::Parallel).unwrap();
    let r = &rows[0];
    assert!(r.feasible);
    let (o, s) = (r.oracle_e_tot.unwrap(), r.solver_e_tot.unwrap());
    assert!(((s - o) / o).abs() <= 0.01 || s < o, "solver {s} vs grid {o}");
}

#[test]
fn infeasible_instances_give_an_empty_grid() {
    // 64 Mb through an 18 Mb/s cap cannot finish within 2 s.
    let scen = parse_scenario("tight", &fixed(64.0, 3.0, 2, 1, 0.05, 2.0)).unwrap();
    let rows = run_oracle(&scen, RESOLUTION, Execution::Sequential).unwrap();
    let r = &rows[0];
    assert!(!r.feasible);
    assert_eq!(r.oracle_e_tot, None);
    assert_eq!(r.solver_e_tot, None);
    assert!(r.verdicts_agree());
}
