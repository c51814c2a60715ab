//! The two reference bandwidth managers the optimizer is compared against: the
//! hypervisor's linear rate ramp and a single-rate energy optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{expand_schedule, migration_energy, round_volumes_and_times, EnergyReport, MigrationSpec, RateSchedule};
use crate::par;
use crate::power::BalancedPowerModel;
use crate::solver::{spec_at_optimized_imax, RoundAdjustment, SolveResult};

/// Round count range searched by default for the ramp heuristic.
pub const XEN_DEFAULT_RANGE: std::ops::RangeInclusive<usize> = 0..=29;

/// Linear ramp from the dirty rate up to the cap: `R_i = w̄ + i·(R̂ − w̄)/(I+1)`,
/// so round 0 runs at `w̄` and the stop-and-copy round at `R̂` exactly.
///
/// For a dirty-rate trace the ramp starts at its maximum.
pub fn xen_schedule(spec: &MigrationSpec) -> Result<RateSchedule> {
    spec.validate()?;
    let w = spec.dirty_rate.max();
    if !(spec.r_hat > w) {
        return Err(Error::OutOfDomain { what: "ramp span R̂ - w̄", requirement: "> 0", value: spec.r_hat - w });
    }
    if w == 0.0 {
        return Err(Error::OutOfDomain { what: "ramp start rate w̄", requirement: "> 0", value: w });
    }
    let steps = spec.i_max + 1;
    let dr = (spec.r_hat - w) / steps as f64;
    let mut rates: Vec<f64> = (0..=steps).map(|i| w + i as f64 * dr).collect();
    rates[steps] = spec.r_hat;
    RateSchedule::per_round(rates)
}

/// Ramp energy for every round count in `range`; the cheapest one meeting both
/// deadlines wins (ties go to fewer rounds). The ramp ignores the speed-up bound.
pub fn xen_optimize_imax(
    spec: &MigrationSpec,
    power: &BalancedPowerModel,
    range: std::ops::RangeInclusive<usize>,
) -> Result<(usize, EnergyReport)> {
    let candidates: Vec<usize> = range.collect();
    if candidates.is_empty() {
        return Err(Error::NoFeasibleCandidate("empty round-count range".into()));
    }
    let reports = par::map(&candidates, |&i| -> Result<EnergyReport> {
        let s = spec.with_rounds(i, 1)?;
        migration_energy(&s, &xen_schedule(&s)?, power)
    });
    let mut best: Option<(usize, EnergyReport)> = None;
    for (i, rep) in candidates.iter().zip(reports) {
        let rep = match rep {
            Ok(r) => r,
            // a trace too short for this many rounds just drops the candidate
            Err(Error::InvalidSpec(_)) => continue,
            Err(e) => return Err(e),
        };
        if rep.deadlines_met && best.as_ref().is_none_or(|(_, b)| rep.e_tot < b.e_tot) {
            best = Some((*i, rep));
        }
    }
    best.ok_or_else(|| {
        Error::NoFeasibleCandidate(format!(
            "no ramp with {}..={} pre-copy rounds meets both deadlines",
            candidates[0],
            candidates[candidates.len() - 1]
        ))
    })
}

/// Outcome of the single-rate optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LivMigResult {
    /// The instance actually solved, at the optimized round count.
    pub spec: MigrationSpec,
    pub rounds: RoundAdjustment,
    /// The common rate.
    pub rate: f64,
    /// Lowest feasible common rate.
    pub rate_lo: f64,
    pub result: SolveResult,
}

/// `(T_MT, T_DT)` when every round runs at `r`.
fn single_rate_times(spec: &MigrationSpec, r: f64) -> Result<(f64, f64)> {
    let sched = expand_schedule(spec, &vec![r; spec.free_rate_count()])?;
    let rounds = round_volumes_and_times(spec, &sched)?;
    Ok((rounds.iter().map(|x| x.time_s).sum(), rounds.last().map_or(0.0, |x| x.time_s)))
}

/// `E_dyn/K0` when every round runs at `r`.
fn single_rate_energy(spec: &MigrationSpec, power: &BalancedPowerModel, r: f64) -> Result<f64> {
    let sched = expand_schedule(spec, &vec![r; spec.free_rate_count()])?;
    Ok(migration_energy(spec, &sched, power)?.e_dyn)
}

/// One common rate for all rounds, at the optimized round count. Both deadlines
/// fall with the rate and the energy is convex in its logarithm, so the feasible
/// rates form an interval `[R_lo, R̂]` (found by bisection) and a golden-section
/// search in `ln R` over it finds the optimum.
pub fn livmig_solve(spec: &MigrationSpec, power: &BalancedPowerModel) -> Result<LivMigResult> {
    power.validate()?;
    let (spec, rounds) = spec_at_optimized_imax(spec, 1)?;
    let r_hat = spec.r_hat;
    let meets = |r: f64| -> Result<bool> {
        let (t_mt, t_dt) = single_rate_times(&spec, r)?;
        Ok(t_mt <= spec.delta_mt && t_dt <= spec.delta_dt)
    };
    let w = spec.dirty_rate.max();
    let beta_floor = spec.beta * w;
    if beta_floor > r_hat || !meets(r_hat)? {
        let (t_mt, t_dt) = single_rate_times(&spec, r_hat)?;
        return Err(Error::Infeasible {
            time: t_mt / spec.delta_mt,
            downtime: t_dt / spec.delta_dt,
            speedup: beta_floor / r_hat,
        });
    }

    // bisection in ln R for the smallest rate meeting both deadlines
    let mut lo = (spec.m0 / spec.delta_mt).min(r_hat).ln() - 1.0;
    while meets(lo.exp())? {
        lo -= 1.0;
    }
    let mut hi = r_hat.ln();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if meets(mid.exp())? {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 * (1.0 + hi.abs()) {
            break;
        }
    }
    let rate_lo = hi.exp().max(beta_floor).min(r_hat);

    let f = |x: f64| single_rate_energy(&spec, power, x.exp());
    let (mut a, mut b) = (rate_lo.ln(), r_hat.ln());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    let mut iterations = 2;
    while b - a > 1e-12 * (1.0 + b.abs()) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
        iterations += 1;
    }
    // the optimum may sit on an end of the interval
    let mut best = (0.5 * (a + b), f(0.5 * (a + b))?);
    for x in [rate_lo.ln(), r_hat.ln()] {
        let e = f(x)?;
        if e < best.1 {
            best = (x, e);
        }
    }
    let rate = best.0.exp().clamp(rate_lo, r_hat);
    let schedule = expand_schedule(&spec, &vec![rate; spec.free_rate_count()])?;
    let report = migration_energy(&spec, &schedule, power)?;
    let result = SolveResult {
        schedule,
        report,
        converged: true,
        iterations,
        trajectory: None,
        lambda: Vec::new(),
        scalar_updates_per_iteration: 1,
    };
    Ok(LivMigResult { spec, rounds, rate, rate_lo, result })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power() -> BalancedPowerModel {
        BalancedPowerModel { k0: 0.025, alpha: 2.0, p_setup_total: 0.3 }
    }

    #[test]
    fn ramp_examples() {
        let s = MigrationSpec::new(64.0, 1.0, 4, 1, 2.0, 100.0, 1.0, 11.0).unwrap();
        assert_eq!(xen_schedule(&s).unwrap().expanded, vec![1.0, 3.0, 5.0, 7.0, 9.0, 11.0]);
        let s = s.with_rounds(0, 1).unwrap();
        assert_eq!(xen_schedule(&s).unwrap().expanded, vec![1.0, 11.0]);
        let s = MigrationSpec::new(64.0, 11.0, 4, 1, 1.0, 100.0, 1.0, 11.0).unwrap();
        assert!(xen_schedule(&s).is_err());
    }

    #[test]
    fn ramp_ends_exactly_at_cap() {
        let s = MigrationSpec::new(64.0, 0.3, 7, 1, 2.0, 100.0, 1.0, 1.7).unwrap();
        let r = xen_schedule(&s).unwrap();
        assert_eq!(*r.expanded.last().unwrap(), 1.7);
        assert!(r.expanded.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn generous_downtime_favours_fewest_rounds() {
        // holds once the dirty rate is a sizeable share of the cap; at w̄/R̂ <= 0.1 a
        // longer, slower ramp is cheaper
        let s = MigrationSpec::new(64.0, 6.0, 2, 1, 2.0, 1e3, 1e3, 18.0).unwrap();
        let (i, _) = xen_optimize_imax(&s, &power(), XEN_DEFAULT_RANGE).unwrap();
        assert_eq!(i, 0);
    }

    #[test]
    fn impossible_downtime_is_an_error() {
        let s = MigrationSpec::new(64.0, 6.0, 2, 1, 2.0, 1e3, 1e-9, 18.0).unwrap();
        assert!(matches!(xen_optimize_imax(&s, &power(), XEN_DEFAULT_RANGE), Err(Error::NoFeasibleCandidate(_))));
    }

    #[test]
    fn clean_vm_single_rate_sits_on_the_time_deadline() {
        let s = MigrationSpec::new(64.0, 0.0, 2, 1, 2.0, 16.0, 1.0, 18.0).unwrap();
        let r = livmig_solve(&s, &power()).unwrap();
        assert!((r.rate - 4.0).abs() < 1e-6, "{}", r.rate);
    }

    #[test]
    fn golden_section_matches_grid_scan() {
        let s = MigrationSpec::new(128.0, 6.0, 3, 1, 2.0, 60.0, 0.3, 18.0).unwrap();
        let r = livmig_solve(&s, &power()).unwrap();
        let (a, b) = (r.rate_lo.ln(), r.spec.r_hat.ln());
        let grid = (0..=10_000)
            .map(|k| single_rate_energy(&r.spec, &power(), (a + (b - a) * k as f64 / 1e4).exp()).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(r.result.report.e_dyn <= grid * 1.001);
        assert!(r.result.report.feasible);
    }
}
