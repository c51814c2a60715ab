//! Closed-form Lagrangian gradients against central finite differences.

mod common;

use rand::Rng;
use scbm_core::model::{DirtyRate, MigrationSpec};
use scbm_core::solver::{gradients, lagrangian, SolverOptions, SolverState};

/// Worst relative error between the closed-form gradient and central differences
/// (step scaled to each coordinate), with an absolute floor tied to the size of the
/// Lagrangian so that components that are zero up to rounding do not dominate.
fn worst_gradient_error(spec: &MigrationSpec, power: &scbm_core::BalancedPowerModel, state: &SolverState) -> f64 {
    let g = gradients(spec, power, state).unwrap();
    let l0 = lagrangian(spec, power, state).unwrap();
    let floor = 1e-9 * l0.abs().max(1.0);
    let mut worst: f64 = 0.0;
    for i in 0..state.r_log.len() {
        let h = 1e-5;
        let mut p = state.clone();
        p.r_log[i] += h;
        let mut m = state.clone();
        m.r_log[i] -= h;
        let fd = (lagrangian(spec, power, &p).unwrap() - lagrangian(spec, power, &m).unwrap()) / (2.0 * h);
        worst = worst.max((fd - g.primal[i]).abs() / (fd.abs().max(g.primal[i].abs()) + floor));
    }
    for k in 0..state.lambda.len() {
        let h = 1e-4 * (1.0 + state.lambda[k]);
        let mut p = state.clone();
        p.lambda[k] += h;
        let mut m = state.clone();
        m.lambda[k] -= h;
        let fd = (lagrangian(spec, power, &p).unwrap() - lagrangian(spec, power, &m).unwrap()) / (2.0 * h);
        worst = worst.max((fd - g.dual[k]).abs() / (fd.abs().max(g.dual[k].abs()) + floor));
    }
    worst
}

fn random_state(rng: &mut rand_chacha::ChaCha8Rng, spec: &MigrationSpec) -> SolverState {
    let mut st = SolverState::initial(spec, &SolverOptions::default());
    let lo = (spec.beta * spec.dirty_rate.max()).ln();
    let hi = spec.r_hat.ln();
    for x in st.r_log.iter_mut() {
        *x = rng.random_range(lo..=hi);
    }
    for l in st.lambda.iter_mut() {
        *l = rng.random_range(0.0..50.0);
    }
    st
}

#[test]
fn closed_form_matches_finite_differences() {
    let mut rng = common::rng(11);
    let layouts = [(0, 1), (2, 1), (2, 2), (4, 1), (4, 2), (6, 1), (6, 2), (6, 3)];
    let mut count = 0;
    for round in 0..16 {
        for &(i_max, q) in &layouts {
            let spec = common::random_feasible(&mut rng, i_max, q);
            let power = common::random_power(&mut rng);
            let st = random_state(&mut rng, &spec);
            let err = worst_gradient_error(&spec, &power, &st);
            assert!(err < 1e-5, "round {round}, I={i_max} Q={q}: {err}");
            count += 1;
        }
    }
    assert!(count >= 100);
}

#[test]
fn closed_form_matches_finite_differences_for_dirty_rate_traces() {
    let mut rng = common::rng(12);
    for _ in 0..30 {
        let mut spec = common::random_feasible(&mut rng, 6, 3);
        let w = spec.dirty_rate.max();
        spec.dirty_rate = DirtyRate::Trace((0..7).map(|_| w * rng.random_range(0.3..1.0)).collect());
        let power = common::random_power(&mut rng);
        let st = random_state(&mut rng, &spec);
        let err = worst_gradient_error(&spec, &power, &st);
        assert!(err < 1e-5, "{err}");
    }
}

#[test]
fn multiplier_gradient_is_the_constraint_vector() {
    let mut rng = common::rng(13);
    let spec = common::random_feasible(&mut rng, 4, 2);
    let power = common::random_power(&mut rng);
    let st = random_state(&mut rng, &spec);
    let g = gradients(&spec, &power, &st).unwrap();
    let obj = scbm_core::solver::objective_log(&spec, &power, &st.r_log).unwrap();
    assert_eq!(g.dual, scbm_core::solver::constraint_values(&spec, &obj, &st.r_log));
}

#[test]
fn clean_vm_gradient_only_moves_round_zero() {
    let spec = MigrationSpec::new(64.0, 0.0, 4, 2, 2.0, 100.0, 1.0, 18.0).unwrap();
    let power = scbm_core::BalancedPowerModel { k0: 0.03, alpha: 2.0, p_setup_total: 0.2 };
    let st = SolverState::initial(&spec, &SolverOptions::default());
    let g = gradients(&spec, &power, &st).unwrap();
    assert!(g.primal[0] > 0.0);
    assert!(g.primal[1..].iter().all(|v| *v == 0.0));
}
