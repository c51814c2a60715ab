//! Responsiveness of the iteration to mid-run changes of the dirty rate and of K0.

use scbm_core::model::MigrationSpec;
use scbm_core::power::BalancedPowerModel;
use scbm_core::solver::{settle_iterations, solve, solve_dynamic, DynamicEvent, EventTarget, SolverOptions};

fn memtester_spec() -> MigrationSpec {
    let base = MigrationSpec::new(64.0, 1.0, 2, 1, 2.0, 50.5, 5.6e-3, 18.0).unwrap();
    let (spec, _) = scbm_core::solver::spec_at_optimized_imax(&base, 1).unwrap();
    spec
}

fn three_radio_ewtcp() -> BalancedPowerModel {
    BalancedPowerModel { k0: 2.5e-2, alpha: 2.0, p_setup_total: 0.08783 + 0.13783 + 0.15946 }
}

fn jump_and_back(target: EventTarget, factor: f64) -> Vec<DynamicEvent> {
    vec![
        DynamicEvent { at_iter: 8, target, multiplier: factor },
        DynamicEvent { at_iter: 20, target, multiplier: 1.0 / factor },
    ]
}

fn max_settle(events: &[DynamicEvent], a_max: f64) -> (usize, Vec<usize>) {
    let opts = SolverOptions { a_max, ..SolverOptions::default() };
    let run = solve_dynamic(&memtester_spec(), &three_radio_ewtcp(), &opts, events).unwrap();
    assert!(run.result.converged);
    let settle: Vec<usize> = settle_iterations(&run.trace, events, 0.01).iter().skip(1).map(|s| s.iterations).collect();
    (*settle.iter().max().unwrap(), settle)
}

#[test]
fn dirty_rate_doubling_settles_within_ten_iterations() {
    let (worst, all) = max_settle(&jump_and_back(EventTarget::DirtyRate, 2.0), 1e-2);
    assert!(worst <= 10, "{all:?}");
}

#[test]
fn k0_tenfold_settles_within_ten_iterations() {
    let (worst, all) = max_settle(&jump_and_back(EventTarget::K0, 10.0), 1e-2);
    assert!(worst <= 10, "{all:?}");
}

#[test]
fn settle_time_barely_depends_on_gain_clip() {
    for target in [EventTarget::DirtyRate, EventTarget::K0] {
        let factor = if target == EventTarget::K0 { 10.0 } else { 2.0 };
        let events = jump_and_back(target, factor);
        let per_event: Vec<Vec<usize>> = [3e-3, 1e-2, 3e-2].iter().map(|a| max_settle(&events, *a).1).collect();
        for k in 0..per_event[0].len() {
            let col: Vec<usize> = per_event.iter().map(|v| v[k]).collect();
            let spread = col.iter().max().unwrap() - col.iter().min().unwrap();
            assert!(spread <= 2, "{target:?} event {k}: {col:?}");
        }
    }
}

#[test]
fn after_the_last_event_the_run_lands_on_the_static_optimum() {
    let events = jump_and_back(EventTarget::DirtyRate, 2.0);
    let run = solve_dynamic(&memtester_spec(), &three_radio_ewtcp(), &SolverOptions::default(), &events).unwrap();
    let fresh = solve(&memtester_spec(), &three_radio_ewtcp(), &SolverOptions::default()).unwrap();
    assert!((run.result.report.e_tot - fresh.report.e_tot).abs() < 1e-6 * fresh.report.e_tot);
}

#[test]
fn doubled_dirty_rate_costs_more() {
    let events = vec![DynamicEvent { at_iter: 8, target: EventTarget::DirtyRate, multiplier: 2.0 }];
    let run = solve_dynamic(&memtester_spec(), &three_radio_ewtcp(), &SolverOptions::default(), &events).unwrap();
    let s = settle_iterations(&run.trace, &events, 0.01);
    assert!(s[1].steady_energy > s[0].steady_energy);
}

#[test]
fn events_are_validated() {
    let spec = memtester_spec();
    let p = three_radio_ewtcp();
    let opts = SolverOptions::default();
    let at = |at_iter, multiplier| vec![DynamicEvent { at_iter, target: EventTarget::K0, multiplier }];
    assert!(solve_dynamic(&spec, &p, &opts, &at(0, 2.0)).is_err());
    assert!(solve_dynamic(&spec, &p, &opts, &at(opts.max_iters, 2.0)).is_err());
    assert!(solve_dynamic(&spec, &p, &opts, &at(5, 0.0)).is_err());
}

#[test]
fn without_events_dynamic_equals_static() {
    let run = solve_dynamic(&memtester_spec(), &three_radio_ewtcp(), &SolverOptions::default(), &[]).unwrap();
    let fresh = solve(&memtester_spec(), &three_radio_ewtcp(), &SolverOptions::default()).unwrap();
    assert_eq!(run.result.report, fresh.report);
    assert_eq!(run.result.iterations, fresh.iterations);
}
