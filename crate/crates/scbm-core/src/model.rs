//! Pre-copy round model: instance types, round recursion, clustered closed forms,
//! energy accounting and the auxiliary failure/compression/stretching relations.
//!
//! Units are fixed across the crate: Mb, Mb/s, s, W, J.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power::BalancedPowerModel;

/// Relative tolerance used for "rate <= cap" and constraint residual checks.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Memory dirtying behaviour of the migrating VM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DirtyRate {
    /// Same average dirty rate (Mb/s) in every round.
    Constant(f64),
    /// Per-round dirty rates. Entry `k` applies to round `k + 1`, so a trace for
    /// `I_max` pre-copy rounds carries `I_max + 1` values (the last one feeds the
    /// stop-and-copy round).
    Trace(Vec<f64>),
}

impl DirtyRate {
    /// Dirty rate acting during round `i - 1`, i.e. the one that generates `V_i`.
    /// `i` starts at 1.
    pub fn at(&self, i: usize) -> f64 {
        match self {
            DirtyRate::Constant(w) => *w,
            DirtyRate::Trace(t) => t[i - 1],
        }
    }

    /// Largest dirty rate over the trace; the speed-up constraint uses this bound.
    pub fn max(&self) -> f64 {
        match self {
            DirtyRate::Constant(w) => *w,
            DirtyRate::Trace(t) => t.iter().copied().fold(0.0, f64::max),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, DirtyRate::Constant(_))
    }

    /// Multiply every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> DirtyRate {
        match self {
            DirtyRate::Constant(w) => DirtyRate::Constant(w * factor),
            DirtyRate::Trace(t) => DirtyRate::Trace(t.iter().map(|w| w * factor).collect()),
        }
    }
}

/// Fixed durations of the pre-migration, reservation, commitment and activation stages.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Overheads {
    pub t_pm_s: f64,
    pub t_re_s: f64,
    pub t_cm_s: f64,
    pub t_at_s: f64,
}

impl Overheads {
    pub fn sum(&self) -> f64 {
        self.t_pm_s + self.t_re_s + self.t_cm_s + self.t_at_s
    }
}

/// One migration instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationSpec {
    /// VM memory size M0 (Mb).
    pub m0: f64,
    pub dirty_rate: DirtyRate,
    /// Maximum number of pre-copy rounds.
    pub i_max: usize,
    /// Number of independently optimized pre-copy rates.
    pub q: usize,
    /// Cluster size; each optimized rate is held for `s` consecutive rounds.
    pub s: usize,
    /// Minimum volume ratio between consecutive rounds.
    pub beta: f64,
    /// Migration-time deadline (s).
    pub delta_mt: f64,
    /// Downtime deadline (s).
    pub delta_dt: f64,
    /// Migration bandwidth cap (Mb/s).
    pub r_hat: f64,
    #[serde(default)]
    pub overheads: Overheads,
}

impl MigrationSpec {
    /// Build a spec with constant dirty rate, deriving the cluster size from `i_max / q`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m0: f64,
        dirty_rate: f64,
        i_max: usize,
        q: usize,
        beta: f64,
        delta_mt: f64,
        delta_dt: f64,
        r_hat: f64,
    ) -> Result<Self> {
        let s = if i_max == 0 { 0 } else { i_max / q.max(1) };
        let spec = MigrationSpec {
            m0,
            dirty_rate: DirtyRate::Constant(dirty_rate),
            i_max,
            q,
            s,
            beta,
            delta_mt,
            delta_dt,
            r_hat,
            overheads: Overheads::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Copy of this spec with a different round count and number of optimized rates.
    /// The cluster size follows from the pair.
    pub fn with_rounds(&self, i_max: usize, q: usize) -> Result<Self> {
        let mut out = self.clone();
        out.i_max = i_max;
        out.q = if i_max == 0 { 1 } else { q };
        out.s = if i_max == 0 { 0 } else { i_max / q.max(1) };
        if let DirtyRate::Trace(t) = &self.dirty_rate {
            if t.len() < i_max + 1 {
                return Err(Error::InvalidSpec(format!(
                    "dirty-rate trace has {} entries but {} rounds need {}",
                    t.len(),
                    i_max,
                    i_max + 1
                )));
            }
        }
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if !(self.m0 > 0.0 && self.m0.is_finite()) {
            return bad(format!("M0 must be positive, got {}", self.m0));
        }
        if !(self.beta >= 1.0) {
            return bad(format!("beta must be >= 1, got {}", self.beta));
        }
        if !(self.delta_mt > 0.0) || !(self.delta_dt > 0.0) {
            return bad("both deadlines must be positive".into());
        }
        if !(self.r_hat > 0.0 && self.r_hat.is_finite()) {
            return bad(format!("bandwidth cap must be positive and finite, got {}", self.r_hat));
        }
        if self.i_max == 0 {
            if self.q != 1 || self.s != 0 {
                return bad("with no pre-copy rounds the cluster layout must be Q = 1, S = 0".into());
            }
        } else {
            if self.q == 0 || self.q > self.i_max {
                return bad(format!(
                    "Q must lie in 1..={} (the number of pre-copy rounds), got {}",
                    self.i_max, self.q
                ));
            }
            if self.s * self.q != self.i_max {
                return bad(format!(
                    "Q = {} must divide I_max = {} exactly with S = I_max / Q (got S = {})",
                    self.q, self.i_max, self.s
                ));
            }
        }
        match &self.dirty_rate {
            DirtyRate::Constant(w) => {
                if !(*w >= 0.0 && w.is_finite()) {
                    return bad(format!("dirty rate must be non-negative, got {w}"));
                }
            }
            DirtyRate::Trace(t) => {
                if t.len() < self.i_max + 1 {
                    return bad(format!(
                        "dirty-rate trace needs {} entries, got {}",
                        self.i_max + 1,
                        t.len()
                    ));
                }
                if let Some(w) = t.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
                    return bad(format!("dirty rates must be non-negative, got {w}"));
                }
            }
        }
        let o = &self.overheads;
        if [o.t_pm_s, o.t_re_s, o.t_cm_s, o.t_at_s].iter().any(|t| !(*t >= 0.0)) {
            return bad("stage overheads must be non-negative".into());
        }
        Ok(())
    }

    /// Number of independently optimized rates: round 0, one per cluster, and the
    /// stop-and-copy round. Without pre-copy rounds only round 0 and the
    /// stop-and-copy round remain.
    pub fn free_rate_count(&self) -> usize {
        if self.i_max == 0 {
            2
        } else {
            self.q + 2
        }
    }

    /// Index into the free-rate vector that governs round `i` (0 ..= I_max + 1).
    pub fn free_index_of_round(&self, i: usize) -> usize {
        if i == 0 {
            0
        } else if i == self.i_max + 1 {
            self.free_rate_count() - 1
        } else {
            1 + (i - 1) / self.s
        }
    }

    /// Free-rate indices subject to the speed-up bound: round 0 and the first
    /// round of every cluster. With no pre-copy rounds that leader is round 1.
    pub fn speedup_constrained(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.q
    }

    /// Number of Lagrange multipliers: two deadlines plus one per speed-up bound.
    pub fn multiplier_count(&self) -> usize {
        self.q + 3
    }

    /// `ln Γ_i`, the log of the product of the dirty rates feeding rounds 1..=i.
    /// Returns negative infinity once a zero dirty rate has been met.
    pub fn log_dirty_product(&self, i: usize) -> f64 {
        match &self.dirty_rate {
            DirtyRate::Constant(w) => {
                if i == 0 {
                    0.0
                } else {
                    i as f64 * w.ln()
                }
            }
            DirtyRate::Trace(t) => t[..i].iter().map(|w| w.ln()).sum(),
        }
    }

    /// `ln Γ_i` for every round 0 ..= I_max + 1, accumulated incrementally.
    pub fn log_dirty_products(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.i_max + 2);
        let mut acc = 0.0;
        out.push(acc);
        for i in 1..=self.i_max + 1 {
            acc += self.dirty_rate.at(i).ln();
            out.push(acc);
        }
        out
    }
}

/// Uncompressed image description for the effective-size relation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VmImage {
    pub raw_size_mb: f64,
    /// Compression ratio in [0, 1].
    pub cp: f64,
    /// Coding rate in (0, 1].
    pub cr: f64,
}

/// How much of the uplink the migration may use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthPolicy {
    /// Out-band reservation cap (Mb/s), may be infinite.
    pub r_max: f64,
    /// Aggregate in-band bandwidth (Mb/s), may be infinite.
    pub r_agr: f64,
    /// Fraction of the aggregate bandwidth given to the migration.
    pub rho_mgr: f64,
}

impl BandwidthPolicy {
    /// `min(R_MAX, ρ·R_AGR)`.
    pub fn r_hat(&self) -> Result<f64> {
        if !(0.0..=1.0).contains(&self.rho_mgr) {
            return Err(Error::OutOfDomain {
                what: "migration bandwidth fraction",
                requirement: "in [0, 1]",
                value: self.rho_mgr,
            });
        }
        let in_band = self.rho_mgr * self.r_agr;
        let r = self.r_max.min(in_band);
        if !r.is_finite() {
            return Err(Error::OutOfDomain {
                what: "bandwidth cap",
                requirement: "finite (one of R_MAX, R_AGR must be finite)",
                value: r,
            });
        }
        if r <= 0.0 {
            return Err(Error::OutOfDomain { what: "bandwidth cap", requirement: "positive", value: r });
        }
        Ok(r)
    }
}

/// Free rates plus their expansion to every round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    pub free_rates: Vec<f64>,
    pub expanded: Vec<f64>,
}

impl RateSchedule {
    /// A schedule whose rounds do not follow the cluster-hold layout (ramp heuristics).
    /// `free_rates` mirrors the per-round rates.
    pub fn per_round(rates: Vec<f64>) -> Result<Self> {
        check_positive(&rates)?;
        Ok(RateSchedule { free_rates: rates.clone(), expanded: rates })
    }
}

fn check_positive(rates: &[f64]) -> Result<()> {
    match rates.iter().position(|r| !(*r > 0.0 && r.is_finite())) {
        Some(index) => Err(Error::NonPositiveRate { index, value: rates[index] }),
        None => Ok(()),
    }
}

/// Spread the free rates over all rounds with the cluster-hold rule.
pub fn expand_schedule(spec: &MigrationSpec, free_rates: &[f64]) -> Result<RateSchedule> {
    spec.validate()?;
    let expected = spec.free_rate_count();
    if free_rates.len() != expected {
        return Err(Error::RateCountMismatch { expected, got: free_rates.len() });
    }
    check_positive(free_rates)?;
    let expanded = (0..spec.i_max + 2).map(|i| free_rates[spec.free_index_of_round(i)]).collect();
    Ok(RateSchedule { free_rates: free_rates.to_vec(), expanded })
}

/// Volume and duration of one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub volume_mb: f64,
    pub time_s: f64,
}

/// `V_0 = M0`, `V_i = w_i·T_{i-1}`, `T_i = V_i / R_i`.
pub fn round_volumes_and_times(spec: &MigrationSpec, sched: &RateSchedule) -> Result<Vec<Round>> {
    let n = spec.i_max + 2;
    if sched.expanded.len() != n {
        return Err(Error::RateCountMismatch { expected: n, got: sched.expanded.len() });
    }
    check_positive(&sched.expanded)?;
    let mut rounds = Vec::with_capacity(n);
    let mut volume = spec.m0;
    for (i, rate) in sched.expanded.iter().enumerate() {
        if i > 0 {
            let w = spec.dirty_rate.at(i);
            let prev: f64 = rounds.last().map(|r: &Round| r.time_s).unwrap_or(0.0);
            // A clean round produces nothing to resend, whatever the previous duration.
            volume = if w == 0.0 { 0.0 } else { w * prev };
        }
        rounds.push(Round { volume_mb: volume, time_s: volume / rate });
    }
    Ok(rounds)
}

/// Total memory-transfer time, summed round by round.
pub fn memory_migration_time(spec: &MigrationSpec, sched: &RateSchedule) -> Result<f64> {
    Ok(round_volumes_and_times(spec, sched)?.iter().map(|r| r.time_s).sum())
}

/// Stop-and-copy duration, i.e. the last round time.
pub fn downtime(spec: &MigrationSpec, sched: &RateSchedule) -> Result<f64> {
    Ok(round_volumes_and_times(spec, sched)?.last().map(|r| r.time_s).unwrap_or(0.0))
}

/// Closed-form evaluation of (T_MT, T_DT, E_dyn/K0) directly from the free rates,
/// summing each cluster as a geometric series when the dirty rate is constant.
///
/// This is the clustered counterpart of the round recursion and is kept
/// separate so the two can be cross-checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteredTotals {
    pub t_mt: f64,
    pub t_dt: f64,
    /// Dynamic energy divided by K0, i.e. `Σ R_i^α T_i`.
    pub e_dyn_per_k0: f64,
}

pub fn clustered_totals(spec: &MigrationSpec, free_rates: &[f64], alpha: f64) -> Result<ClusteredTotals> {
    let expected = spec.free_rate_count();
    if free_rates.len() != expected {
        return Err(Error::RateCountMismatch { expected, got: free_rates.len() });
    }
    check_positive(free_rates)?;
    let x: Vec<f64> = free_rates.iter().map(|r| r.ln()).collect();
    Ok(clustered_totals_log(spec, &x, alpha))
}

/// Same as [`clustered_totals`] but taking log-rates; the caller guarantees the length.
pub fn clustered_totals_log(spec: &MigrationSpec, x: &[f64], alpha: f64) -> ClusteredTotals {
    let lg = spec.log_dirty_products();
    let ln_m0 = spec.m0.ln();
    let x0 = x[0];

    let mut t_mt = (ln_m0 - x0).exp();
    let mut e = (ln_m0 + (alpha - 1.0) * x0).exp();
    // ln of M0·e^{-x0}·Π_{k<j} e^{-S y_k}, the common factor in front of cluster j
    let mut ln_prefix = ln_m0 - x0;
    for j in 0..if spec.i_max == 0 { 0 } else { spec.q } {
        let y = x[1 + j];
        let t = ln_prefix.exp() * cluster_sum(spec, &lg, j, y);
        t_mt += t;
        e += t * (alpha * y).exp();
        ln_prefix -= spec.s as f64 * y;
    }
    let z = x[x.len() - 1];
    let t_dt = (ln_prefix + lg[spec.i_max + 1] - z).exp();
    t_mt += t_dt;
    e += t_dt * (alpha * z).exp();
    ClusteredTotals { t_mt, t_dt, e_dyn_per_k0: e }
}

/// `Σ_{l=1}^{S} Γ_{jS+l} e^{-l y}`: geometric with ratio `w e^{-y}` for a constant dirty
/// rate, evaluated with `expm1` so ratios near one keep full precision.
fn cluster_sum(spec: &MigrationSpec, lg: &[f64], j: usize, y: f64) -> f64 {
    let s = spec.s;
    match spec.dirty_rate {
        DirtyRate::Constant(w) => {
            if w == 0.0 {
                return 0.0;
            }
            let ln_q = w.ln() - y;
            let head = (lg[j * s] + ln_q).exp();
            if ln_q == 0.0 {
                head * s as f64
            } else {
                head * (s as f64 * ln_q).exp_m1() / ln_q.exp_m1()
            }
        }
        DirtyRate::Trace(_) => (1..=s).map(|l| (lg[j * s + l] - l as f64 * y).exp()).sum(),
    }
}

/// Energy, timing and constraint bookkeeping for one schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub e_setup: f64,
    pub e_dyn: f64,
    pub e_tot: f64,
    pub t_mt: f64,
    pub t_dt: f64,
    pub t_tot: f64,
    pub residuals: Residuals,
    /// Deadlines, speed-up bounds and the bandwidth cap all hold within tolerance.
    pub feasible: bool,
    /// Only the two deadlines (and the cap) hold; heuristics that ignore the speed-up
    /// bound are judged on this.
    pub deadlines_met: bool,
}

/// Normalized constraint values; a constraint holds when its residual is <= 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `T_MT/Δ_MT - 1`
    pub migration_time: f64,
    /// `T_DT/Δ_DT - 1`
    pub downtime: f64,
    /// `β·w_max/R_k - 1` for round 0 and every cluster leader.
    pub speedup: Vec<f64>,
    /// `max_i R_i/R̂ - 1`
    pub rate_cap: f64,
}

impl Residuals {
    pub fn max_violation(&self) -> f64 {
        self.speedup
            .iter()
            .copied()
            .chain([self.migration_time, self.downtime, self.rate_cap])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-round energy sum plus setup energy over the migration-time budget.
pub fn migration_energy(
    spec: &MigrationSpec,
    sched: &RateSchedule,
    power: &BalancedPowerModel,
) -> Result<EnergyReport> {
    migration_energy_with_tolerance(spec, sched, power, DEFAULT_TOLERANCE)
}

pub fn migration_energy_with_tolerance(
    spec: &MigrationSpec,
    sched: &RateSchedule,
    power: &BalancedPowerModel,
    tol: f64,
) -> Result<EnergyReport> {
    let rounds = round_volumes_and_times(spec, sched)?;
    let e_dyn: f64 = rounds
        .iter()
        .zip(&sched.expanded)
        .map(|(r, rate)| if r.time_s == 0.0 { 0.0 } else { power.k0 * rate.powf(power.alpha) * r.time_s })
        .sum();
    let t_mt: f64 = rounds.iter().map(|r| r.time_s).sum();
    let t_dt = rounds.last().map(|r| r.time_s).unwrap_or(0.0);
    let e_setup = power.p_setup_total * spec.delta_mt;

    let w_max = spec.dirty_rate.max();
    let speedup = if sched.free_rates.len() == spec.free_rate_count() {
        spec.speedup_constrained().map(|k| spec.beta * w_max / sched.free_rates[k] - 1.0).collect()
    } else {
        // Per-round schedules: bound round 0 and every pre-copy round.
        sched.expanded[..sched.expanded.len() - 1]
            .iter()
            .map(|r| spec.beta * w_max / r - 1.0)
            .collect()
    };
    let rate_cap = sched.expanded.iter().copied().fold(0.0, f64::max) / spec.r_hat - 1.0;
    let residuals = Residuals {
        migration_time: t_mt / spec.delta_mt - 1.0,
        downtime: t_dt / spec.delta_dt - 1.0,
        speedup,
        rate_cap,
    };
    let deadlines_met = residuals.migration_time <= tol && residuals.downtime <= tol && residuals.rate_cap <= tol;
    let feasible = deadlines_met && residuals.speedup.iter().all(|r| *r <= tol);
    Ok(EnergyReport {
        e_setup,
        e_dyn,
        e_tot: e_setup + e_dyn,
        t_mt,
        t_dt,
        t_tot: total_migration_time(spec, t_mt),
        residuals,
        feasible,
        deadlines_met,
    })
}

/// Pre-migration + reservation + memory transfer + commitment + activation.
pub fn total_migration_time(spec: &MigrationSpec, t_mt: f64) -> f64 {
    spec.overheads.sum() + t_mt
}

/// Pareto-like connection-failure model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureModel {
    pub sigma: f64,
    /// Maximum expected connection duration (s).
    pub t_con: f64,
    /// Average number of attempted migrations.
    pub n_mgr: f64,
}

/// Failure probability together with a flag telling whether it stayed in [0, 1].
/// Large shaping factors push the cubic above one inside the interval; the value
/// is reported verbatim rather than clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureProbability {
    pub value: f64,
    pub in_unit_interval: bool,
}

pub fn failure_probability(fm: &FailureModel, delta_mt: f64) -> Result<FailureProbability> {
    if !(delta_mt >= 0.0) {
        return Err(Error::OutOfDomain { what: "migration-time deadline", requirement: ">= 0", value: delta_mt });
    }
    if !(fm.t_con > 0.0) {
        return Err(Error::OutOfDomain { what: "connection duration", requirement: "> 0", value: fm.t_con });
    }
    let value = if delta_mt > fm.t_con {
        1.0
    } else {
        let x = delta_mt / fm.t_con;
        (1.0 + fm.sigma) * x - fm.sigma * x.powi(3)
    };
    Ok(FailureProbability { value, in_unit_interval: (0.0..=1.0).contains(&value) })
}

/// Expected energy wasted by failed migrations.
pub fn expected_failure_energy_loss(fm: &FailureModel, delta_mt: f64, e_tot_avg: f64) -> Result<f64> {
    if !(e_tot_avg >= 0.0) || !(fm.n_mgr >= 0.0) {
        return Err(Error::OutOfDomain {
            what: "average energy and migration count",
            requirement: "non-negative",
            value: e_tot_avg.min(fm.n_mgr),
        });
    }
    Ok(fm.n_mgr * failure_probability(fm, delta_mt)?.value * e_tot_avg)
}

/// How much in-band migration traffic stretches the co-located application.
pub fn stretching_ratio(rho_mgr: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho_mgr) {
        return Err(Error::OutOfDomain { what: "migration bandwidth fraction", requirement: "in [0, 1)", value: rho_mgr });
    }
    Ok(1.0 / (1.0 - rho_mgr))
}

/// Size actually shipped after compression and channel coding. A zero compression
/// ratio yields a zero size, which callers should treat as degenerate.
pub fn effective_vm_size(img: &VmImage) -> Result<f64> {
    if !(0.0..=1.0).contains(&img.cp) {
        return Err(Error::OutOfDomain { what: "compression ratio", requirement: "in [0, 1]", value: img.cp });
    }
    if !(img.cr > 0.0 && img.cr <= 1.0) {
        return Err(Error::OutOfDomain { what: "coding rate", requirement: "in (0, 1]", value: img.cr });
    }
    if !(img.raw_size_mb >= 0.0) {
        return Err(Error::OutOfDomain { what: "raw image size", requirement: ">= 0", value: img.raw_size_mb });
    }
    Ok(img.cp / img.cr * img.raw_size_mb)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(m0: f64, w: f64, i_max: usize, q: usize) -> MigrationSpec {
        MigrationSpec::new(m0, w, i_max, q, 1.0, 1e3, 1e3, 100.0).unwrap()
    }

    #[test]
    fn expansion_holds_cluster_rates() {
        let s = spec(64.0, 1.0, 6, 3);
        let sched = expand_schedule(&s, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(sched.expanded, vec![1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 5.0]);

        let s = spec(64.0, 1.0, 0, 1);
        assert_eq!(expand_schedule(&s, &[7.0, 9.0]).unwrap().expanded, vec![7.0, 9.0]);

        let s = spec(64.0, 1.0, 4, 1);
        let sched = expand_schedule(&s, &[1.0, 2.0, 5.0]).unwrap();
        assert_eq!(sched.expanded, vec![1.0, 2.0, 2.0, 2.0, 2.0, 5.0]);
    }

    #[test]
    fn expansion_rejects_bad_input() {
        let s = spec(64.0, 1.0, 4, 2);
        assert!(matches!(expand_schedule(&s, &[1.0, 2.0]), Err(Error::RateCountMismatch { expected: 4, got: 2 })));
        assert!(matches!(expand_schedule(&s, &[1.0, 0.0, 1.0, 1.0]), Err(Error::NonPositiveRate { index: 1, .. })));
    }

    #[test]
    fn spec_rejects_non_dividing_q() {
        let err = MigrationSpec::new(64.0, 1.0, 5, 2, 1.0, 1.0, 1.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("divide"));
        assert!(MigrationSpec::new(64.0, 1.0, 0, 2, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn recursion_examples() {
        let s = spec(100.0, 0.0, 0, 1);
        let r = round_volumes_and_times(&s, &expand_schedule(&s, &[10.0, 10.0]).unwrap()).unwrap();
        assert_eq!((r[0].volume_mb, r[1].volume_mb, r[0].time_s, r[1].time_s), (100.0, 0.0, 10.0, 0.0));

        let s = spec(100.0, 1.0, 0, 1);
        let r = round_volumes_and_times(&s, &expand_schedule(&s, &[10.0, 10.0]).unwrap()).unwrap();
        assert_eq!((r[1].volume_mb, r[1].time_s), (10.0, 1.0));

        let s = spec(64.0, 8.0, 2, 1);
        let sched = expand_schedule(&s, &[16.0, 16.0, 16.0]).unwrap();
        let t: Vec<f64> = round_volumes_and_times(&s, &sched).unwrap().iter().map(|r| r.time_s).collect();
        assert_eq!(t, vec![4.0, 2.0, 1.0, 0.5]);
        assert_eq!(memory_migration_time(&s, &sched).unwrap(), 7.5);
        assert_eq!(downtime(&s, &sched).unwrap(), 0.5);
    }

    #[test]
    fn geometric_sum_at_cap() {
        let r_hat = 18.0;
        let s = MigrationSpec::new(128.0, 0.33 * r_hat, 4, 1, 1.0, 1e3, 1e3, r_hat).unwrap();
        let sched = expand_schedule(&s, &[r_hat; 3]).unwrap();
        let expected: f64 = (128.0 / r_hat) * (0..=5).map(|i| 0.33f64.powi(i)).sum::<f64>();
        let t = memory_migration_time(&s, &sched).unwrap();
        assert!((t - expected).abs() / expected < 1e-13);
        // same quantity through the closed geometric form used by the feasibility test
        let q: f64 = 0.33;
        let closed = 128.0 / r_hat * (1.0 - q.powi(6)) / (1.0 - q);
        assert!((t - closed).abs() / closed < 1e-13);
    }

    #[test]
    fn downtime_at_one_third() {
        let s = MigrationSpec::new(128.0, 6.0, 3, 1, 1.0, 1e3, 0.103, 18.0).unwrap();
        let sched = expand_schedule(&s, &[18.0; 3]).unwrap();
        let t = downtime(&s, &sched).unwrap();
        assert!((t - 128.0 / 18.0 / 81.0).abs() < 1e-15);
        assert!(t <= 0.103);
    }

    #[test]
    fn energy_of_constant_rate() {
        let s = spec(64.0, 8.0, 2, 1);
        let sched = expand_schedule(&s, &[16.0; 3]).unwrap();
        let pm = BalancedPowerModel { k0: 0.025, alpha: 2.0, p_setup_total: 0.0 };
        let rep = migration_energy(&s, &sched, &pm).unwrap();
        assert!((rep.e_dyn - 48.0).abs() < 1e-12);
        assert_eq!(rep.e_tot, rep.e_setup + rep.e_dyn);
        assert_eq!(rep.t_tot, rep.t_mt);
    }

    #[test]
    fn overheads_sum() {
        let mut s = spec(64.0, 8.0, 2, 1);
        assert_eq!(total_migration_time(&s, 7.5), 7.5);
        s.overheads = Overheads { t_pm_s: 1.0, t_re_s: 1.0, t_cm_s: 1.0, t_at_s: 1.0 };
        assert_eq!(total_migration_time(&s, 7.5), 11.5);
    }

    #[test]
    fn failure_relations() {
        let fm = |sigma| FailureModel { sigma, t_con: 10.0, n_mgr: 1.0 };
        for sigma in [0.0, 0.3, 2.0] {
            assert_eq!(failure_probability(&fm(sigma), 10.0).unwrap().value, 1.0);
        }
        assert_eq!(failure_probability(&fm(0.0), 5.0).unwrap().value, 0.5);
        assert_eq!(failure_probability(&fm(1.0), 5.0).unwrap().value, 0.875);
        assert!(!failure_probability(&fm(3.0), 6.0).unwrap().in_unit_interval);
        assert!(failure_probability(&fm(1.0), -1.0).is_err());

        let none = FailureModel { sigma: 1.0, t_con: 10.0, n_mgr: 0.0 };
        assert_eq!(expected_failure_energy_loss(&none, 5.0, 100.0).unwrap(), 0.0);
        let two = FailureModel { sigma: 1.0, t_con: 10.0, n_mgr: 2.0 };
        assert_eq!(expected_failure_energy_loss(&two, 20.0, 100.0).unwrap(), 200.0);
        assert_eq!(expected_failure_energy_loss(&fm(1.0), 5.0, 48.0).unwrap(), 0.875 * 48.0);
    }

    #[test]
    fn stretching_and_size() {
        assert_eq!(stretching_ratio(0.0).unwrap(), 1.0);
        assert_eq!(stretching_ratio(0.5).unwrap(), 2.0);
        assert!((stretching_ratio(0.9).unwrap() - 10.0).abs() < 1e-12);
        assert!(stretching_ratio(1.0).is_err());

        let img = |cp, cr| VmImage { raw_size_mb: 128.0, cp, cr };
        assert_eq!(effective_vm_size(&img(1.0, 1.0)).unwrap(), 128.0);
        assert_eq!(effective_vm_size(&img(0.5, 0.8)).unwrap(), 80.0);
        assert_eq!(effective_vm_size(&img(0.0, 0.5)).unwrap(), 0.0);
        assert!(effective_vm_size(&img(0.5, 0.0)).is_err());
    }

    #[test]
    fn bandwidth_cap() {
        let p = BandwidthPolicy { r_max: 20.0, r_agr: 40.0, rho_mgr: 0.45 };
        assert_eq!(p.r_hat().unwrap(), 18.0);
        let p = BandwidthPolicy { r_max: f64::INFINITY, r_agr: 40.0, rho_mgr: 0.5 };
        assert_eq!(p.r_hat().unwrap(), 20.0);
        let p = BandwidthPolicy { r_max: f64::INFINITY, r_agr: f64::INFINITY, rho_mgr: 0.5 };
        assert!(p.r_hat().is_err());
    }
}
