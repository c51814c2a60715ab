mod common;

use scbm_core::oracle::brute_force;
use scbm_core::solver::{solve, SolverOptions};

#[test]
fn solver_matches_grid_minimum_on_small_instances() {
    let mut rng = common::rng(7);
    for case in 0..40 {
        let i_max = [0, 1, 2, 3, 5][case % 5];
        let spec = common::random_feasible(&mut rng, i_max, 1);
        let power = common::random_power(&mut rng);
        let opt = solve(&spec, &power, &SolverOptions::default()).unwrap();
        let grid = brute_force(&spec, &power, 500).unwrap();
        let rel = (opt.report.e_tot - grid.report.e_tot) / grid.report.e_tot;
        println!("{case} I={i_max} conv={} it={} solver={:.6} grid={:.6} rel={rel:.2e}", opt.converged, opt.iterations, opt.report.e_tot, grid.report.e_tot);
        assert!(opt.report.feasible, "{case}: {:?}", opt.report);
        assert!(rel.abs() < 1e-2, "case {case}: rel {rel}");
    }
}
