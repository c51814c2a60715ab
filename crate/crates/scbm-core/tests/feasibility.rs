//! The closed-form feasibility verdict against the brute-force search, and the
//! optimized round count.

mod common;

use rand::Rng;
use scbm_core::model::MigrationSpec;
use scbm_core::oracle::brute_force;
use scbm_core::solver::{check_feasibility, optimized_imax, solve, spec_at_optimized_imax, SolverOptions};
use scbm_core::Error;

/// Instances straddling the feasibility boundary: each deadline is a random
/// multiple in [0.5, 2] of what the cap achieves and `β·w̄` ranges around `R̂`.
pub fn boundary_instance(rng: &mut rand_chacha::ChaCha8Rng) -> MigrationSpec {
    let (i_max, q) = [(0, 1), (1, 1), (2, 1), (3, 1), (5, 1), (2, 2), (4, 2)][rng.random_range(0..7)];
    let r_hat: f64 = rng.random_range(5.0..40.0);
    let w: f64 = rng.random_range(0.0..0.9) * r_hat;
    let beta = if w > 0.0 { rng.random_range(1.0..(1.3 * r_hat / w).max(1.0 + 1e-9)) } else { 1.5 };
    let mut spec = MigrationSpec::new(rng.random_range(8.0..300.0), w, i_max, q, beta, 1.0, 1.0, r_hat).unwrap();
    let f = check_feasibility(&spec).unwrap();
    spec.delta_mt = f.time_margin * rng.random_range(0.5..2.0);
    spec.delta_dt = if f.downtime_margin > 0.0 { f.downtime_margin * rng.random_range(0.5..2.0) } else { 1.0 };
    spec
}

#[test]
fn verdict_matches_search_emptiness() {
    let mut rng = common::rng(31);
    let power = scbm_core::BalancedPowerModel { k0: 0.025, alpha: 2.0, p_setup_total: 0.3 };
    let (mut feasible, mut infeasible) = (0, 0);
    for case in 0..240 {
        let spec = boundary_instance(&mut rng);
        let verdict = check_feasibility(&spec).unwrap().feasible;
        let search = brute_force(&spec, &power, 60);
        match (&search, verdict) {
            (Ok(_), true) => feasible += 1,
            (Err(Error::NoFeasibleCandidate(_)), false) => infeasible += 1,
            _ => panic!("case {case}: verdict {verdict}, search {:?}, spec {spec:?}", search.map(|r| r.report.e_tot)),
        }
    }
    assert!(feasible > 40 && infeasible > 40, "{feasible} / {infeasible}");
}

#[test]
fn solve_refuses_exactly_the_infeasible_instances() {
    let mut rng = common::rng(32);
    let power = scbm_core::BalancedPowerModel { k0: 0.025, alpha: 2.0, p_setup_total: 0.3 };
    for _ in 0..100 {
        let spec = boundary_instance(&mut rng);
        let verdict = check_feasibility(&spec).unwrap().feasible;
        match solve(&spec, &power, &SolverOptions::default()) {
            Ok(r) => {
                assert!(verdict);
                assert!(r.report.feasible, "{:?}", r.report.residuals);
            }
            Err(Error::Infeasible { .. }) => assert!(!verdict),
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn optimized_round_count_is_the_smallest_meeting_the_downtime_at_the_cap() {
    let mut rng = common::rng(33);
    for _ in 0..200 {
        let r_hat = rng.random_range(2.0..50.0);
        let w = rng.random_range(0.01..0.95) * r_hat;
        let spec = MigrationSpec::new(rng.random_range(1.0..500.0), w, 1, 1, 1.0, 1e9, rng.random_range(1e-4..1.0), r_hat).unwrap();
        let i = optimized_imax(&spec).unwrap();
        let at = |n: usize| check_feasibility(&spec.with_rounds(n, 1).unwrap()).unwrap().downtime_margin;
        assert!(at(i) <= 1.0 + 1e-12);
        if i > 0 {
            assert!(at(i - 1) > 1.0);
        }
    }
}

#[test]
fn solved_schedule_uses_the_downtime_budget() {
    let mut rng = common::rng(34);
    let power = scbm_core::BalancedPowerModel { k0: 0.025, alpha: 2.0, p_setup_total: 0.3 };
    let mut checked = 0;
    while checked < 40 {
        let r_hat = rng.random_range(5.0..40.0);
        let w = rng.random_range(0.05..0.49) * r_hat;
        let m0 = rng.random_range(16.0..300.0);
        let base = MigrationSpec::new(m0, w, 1, 1, 2.0, m0 / r_hat * rng.random_range(1.5..10.0), rng.random_range(0.01..0.5), r_hat).unwrap();
        let Ok((spec, _)) = spec_at_optimized_imax(&base, 1) else { continue };
        if !check_feasibility(&spec).unwrap().feasible {
            continue;
        }
        let r = solve(&spec, &power, &SolverOptions::default()).unwrap();
        let used = r.report.t_dt / spec.delta_dt;
        assert!(used > 0.3 && used <= 1.0 + 1e-6, "{used}");
        checked += 1;
    }
}

#[test]
fn dirty_rate_at_the_cap_has_no_round_count() {
    let spec = MigrationSpec::new(64.0, 18.0, 1, 1, 1.0, 100.0, 1.0, 18.0).unwrap();
    assert!(optimized_imax(&spec).is_err());
}
