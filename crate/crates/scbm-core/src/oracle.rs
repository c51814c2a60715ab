//! Brute-force reference minimizer used to check the iterative solver.
//!
//! Every free rate except the stop-and-copy one is scanned over a log-spaced grid
//! on `[β·w̄, R̂]` (endpoint included exactly). The stop-and-copy rate is then
//! eliminated in closed form: its round energy grows with the rate, so the best
//! choice is the smallest rate meeting both deadlines (and the speed-up bound when
//! that rate is also a round-0 successor, i.e. without pre-copy rounds).
//!
//! With at most two scanned rates the grid is exhaustive. Larger problems use a
//! coarser full grid followed by cyclic one-coordinate rescans on shrinking
//! windows until nothing improves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{expand_schedule, migration_energy, EnergyReport, MigrationSpec, RateSchedule};
use crate::par;
use crate::power::BalancedPowerModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub schedule: RateSchedule,
    pub report: EnergyReport,
    /// Number of grid points evaluated.
    pub evaluated: usize,
    pub exhaustive: bool,
}

/// Largest number of grid points in the coarse stage of the non-exhaustive search.
const COARSE_BUDGET: usize = 1_000_000;

struct Problem<'a> {
    spec: &'a MigrationSpec,
    power: &'a BalancedPowerModel,
    /// Lower grid end for the scanned rates.
    lo: f64,
    /// Speed-up floor for the stop-and-copy rate (zero unless it is constrained).
    last_floor: f64,
}

impl Problem<'_> {
    /// Dynamic energy (over K0) of the scanned prefix plus the cheapest feasible
    /// stop-and-copy rate, or `None` if no such rate exists below the cap.
    fn complete(&self, prefix: &[f64]) -> Option<(f64, f64)> {
        let spec = self.spec;
        let alpha = self.power.alpha;
        let mut t_sum = 0.0;
        let mut e = 0.0;
        let mut t_prev = 0.0;
        for i in 0..=spec.i_max {
            let r = prefix[spec.free_index_of_round(i)];
            let v = if i == 0 {
                spec.m0
            } else {
                let w = spec.dirty_rate.at(i);
                if w == 0.0 {
                    0.0
                } else {
                    w * t_prev
                }
            };
            let t = v / r;
            t_sum += t;
            if t > 0.0 {
                e += r.powf(alpha) * t;
            }
            t_prev = t;
        }
        let w_last = spec.dirty_rate.at(spec.i_max + 1);
        let v_last = if w_last == 0.0 { 0.0 } else { w_last * t_prev };
        let slack = spec.delta_mt - t_sum;
        if slack < 0.0 {
            return None;
        }
        if v_last == 0.0 {
            // any rate works; the grid floor already satisfies the speed-up bound
            return Some((e, self.lo));
        }
        if slack == 0.0 {
            return None;
        }
        let r = (v_last / spec.delta_dt).max(v_last / slack).max(self.last_floor);
        if r > spec.r_hat * (1.0 + 1e-12) {
            return None;
        }
        let r = r.min(spec.r_hat);
        Some((e + r.powf(alpha) * v_last / r, r))
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo >= hi {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut g: Vec<f64> = (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect();
    g[0] = lo;
    g[n - 1] = hi;
    g
}

/// Feasible-grid minimum of the total energy. `resolution` is the number of grid
/// points per scanned rate in the exhaustive case.
pub fn brute_force(spec: &MigrationSpec, power: &BalancedPowerModel, resolution: usize) -> Result<OracleResult> {
    spec.validate()?;
    power.validate()?;
    let resolution = resolution.max(2);
    let n_free = spec.free_rate_count();
    let dims = n_free - 1;
    let w = spec.dirty_rate.max();
    let beta_floor = spec.beta * w;
    let lo = if beta_floor > 0.0 { beta_floor } else { (spec.m0 / spec.delta_mt).min(spec.r_hat) };
    if lo > spec.r_hat {
        return Err(Error::NoFeasibleCandidate(format!("speed-up floor {beta_floor} exceeds the cap {}", spec.r_hat)));
    }
    let last_floor = if spec.i_max == 0 { beta_floor } else { 0.0 };
    let prob = Problem { spec, power, lo, last_floor };

    let exhaustive = dims <= 2;
    let per_dim = if exhaustive {
        resolution
    } else {
        ((COARSE_BUDGET as f64).powf(1.0 / dims as f64).floor() as usize).clamp(3, resolution)
    };
    let grid = log_grid(lo, spec.r_hat, per_dim);

    // exhaustive scan over the grid, parallel over the first coordinate
    let rows = par::map(&grid, |&first| {
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut idx = vec![0usize; dims - 1];
        let mut prefix = vec![first; dims];
        let mut count = 0usize;
        loop {
            for (d, &k) in idx.iter().enumerate() {
                prefix[d + 1] = grid[k];
            }
            count += 1;
            if let Some((e, r)) = prob.complete(&prefix) {
                if best.as_ref().is_none_or(|(b, _)| e < *b) {
                    let mut full = prefix.clone();
                    full.push(r);
                    best = Some((e, full));
                }
            }
            // odometer over the remaining coordinates
            let mut d = 0;
            loop {
                if d == idx.len() {
                    return (best, count);
                }
                idx[d] += 1;
                if idx[d] < grid.len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    });
    let mut evaluated = 0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (b, c) in rows {
        evaluated += c;
        if let Some((e, x)) = b {
            if best.as_ref().is_none_or(|(be, _)| e < *be) {
                best = Some((e, x));
            }
        }
    }
    let Some((mut best_e, mut best_x)) = best else {
        return Err(Error::NoFeasibleCandidate("no grid point meets every constraint".into()));
    };

    if !exhaustive {
        let ln_lo = lo.ln();
        let ln_hi = spec.r_hat.ln();
        let mut half_width = (ln_hi - ln_lo) / per_dim as f64;
        while half_width > 1e-9 * (1.0 + ln_hi.abs()) {
            let mut improved = true;
            while improved {
                improved = false;
                for d in 0..dims {
                    let c = best_x[d].ln();
                    let line = log_grid(
                        (c - half_width).max(ln_lo).exp(),
                        (c + half_width).min(ln_hi).exp(),
                        resolution,
                    );
                    let results = par::map(&line, |&v| {
                        let mut p = best_x[..dims].to_vec();
                        p[d] = v;
                        prob.complete(&p).map(|(e, r)| (e, p, r))
                    });
                    evaluated += line.len();
                    for (e, mut p, r) in results.into_iter().flatten() {
                        if e < best_e * (1.0 - 1e-15) {
                            best_e = e;
                            p.push(r);
                            best_x = p;
                            improved = true;
                        }
                    }
                }
            }
            half_width /= 4.0;
        }
    }

    let schedule = expand_schedule(spec, &best_x)?;
    let report = migration_energy(spec, &schedule, power)?;
    Ok(OracleResult { schedule, report, evaluated, exhaustive })
}
