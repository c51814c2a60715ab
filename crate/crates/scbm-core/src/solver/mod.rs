//! Minimum-energy rate allocation under migration-time, downtime, speed-up and
//! bandwidth-cap constraints.
//!
//! The problem is convex in the log-rates. Iterations are projected primal-dual
//! updates `R̃ ← min(R̃ - ω·d_R, log R̂)`, `λ ← max(λ + ξ·d_λ, 0)` with clipped
//! per-variable gains. Two choices for the directions `(d_R, d_λ)` are offered:
//!
//! * [`StepRule::Gradient`] uses the raw Lagrangian gradients. It is the plain
//!   first-order saddle-point iteration and moves very slowly on badly scaled
//!   instances (energies in joules, downtimes in milliseconds).
//! * [`StepRule::Newton`] (default) takes the direction from a quadratic model of
//!   the Lagrangian with the deadlines written as `log(T/Δ) <= 0` (same feasible set,
//!   nearly linear in the log-rates), solved as a small dense QP. The direction is
//!   divided by `a_max`, so a gain at its upper clip takes the full step and the
//!   lower clip a tenth of it.

mod objective;
pub mod qp;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{expand_schedule, migration_energy_with_tolerance, EnergyReport, MigrationSpec, RateSchedule};
use crate::power::BalancedPowerModel;

pub use objective::{constraint_values, gradients, lagrangian, objective_log, Gradients, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    #[default]
    Newton,
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Gain clip; gains live in `[a_max/10, a_max]`.
    pub a_max: f64,
    pub max_iters: usize,
    /// Relative energy change and scaled KKT residual below which the run stops.
    pub convergence_tol: f64,
    pub record_trajectory: bool,
    pub step_rule: StepRule,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { a_max: 1e-2, max_iters: 500, convergence_tol: 1e-6, record_trajectory: true, step_rule: StepRule::Newton }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_max > 0.0) {
            return Err(Error::OutOfDomain { what: "gain clip a_max", requirement: "> 0", value: self.a_max });
        }
        if self.max_iters == 0 {
            return Err(Error::OutOfDomain { what: "iteration budget", requirement: ">= 1", value: 0.0 });
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::OutOfDomain { what: "convergence tolerance", requirement: "> 0", value: self.convergence_tol });
        }
        Ok(())
    }
}

/// Gains for the log-rates (`omega`), the two deadline multipliers (`xi`) and the
/// speed-up multipliers (`psi`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub omega: Vec<f64>,
    pub xi: [f64; 2],
    pub psi: Vec<f64>,
}

impl Gains {
    fn uniform(spec: &MigrationSpec, value: f64) -> Self {
        Gains { omega: vec![value; spec.free_rate_count()], xi: [value; 2], psi: vec![value; spec.q + 1] }
    }

    fn len(&self) -> usize {
        self.omega.len() + 2 + self.psi.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub r_log: Vec<f64>,
    pub lambda: Vec<f64>,
    pub gains: Gains,
    /// Iteration counter.
    pub n: usize,
    /// `log R̂`, the projection ceiling for the log-rates.
    pub r_log_cap: f64,
    pub energy_trace: Vec<f64>,
    /// Scalar updates performed so far (log-rates, multipliers and gains).
    pub scalar_updates: usize,
}

impl SolverState {
    /// Every log-rate at `log w̄` (the cap when the VM does not dirty memory) and
    /// every multiplier at zero.
    pub fn initial(spec: &MigrationSpec, opts: &SolverOptions) -> Self {
        let cap = spec.r_hat.ln();
        let w = spec.dirty_rate.max();
        let start = if w > 0.0 { w.ln().min(cap) } else { cap };
        SolverState {
            r_log: vec![start; spec.free_rate_count()],
            lambda: vec![0.0; spec.multiplier_count()],
            gains: Gains::uniform(spec, opts.a_max),
            n: 0,
            r_log_cap: cap,
            energy_trace: Vec::new(),
            scalar_updates: 0,
        }
    }

    /// Start from given rates (clamped to the cap) with zero multipliers.
    pub fn from_rates(spec: &MigrationSpec, opts: &SolverOptions, rates: &[f64]) -> Result<Self> {
        let mut st = SolverState::initial(spec, opts);
        if rates.len() != st.r_log.len() {
            return Err(Error::RateCountMismatch { expected: st.r_log.len(), got: rates.len() });
        }
        for (x, r) in st.r_log.iter_mut().zip(rates) {
            if !(*r > 0.0) {
                return Err(Error::NonPositiveRate { index: 0, value: *r });
            }
            *x = r.ln().min(st.r_log_cap);
        }
        Ok(st)
    }
}

fn clip_gain(value: f64, a_max: f64) -> f64 {
    (0.5 * value * value).min(a_max).max(a_max / 10.0)
}

/// Gains for the next step: `max(a_max/10, min(a_max, ½·v²))` per variable, or
/// `a_max` everywhere on the very first step.
pub fn adaptive_gains(state: &SolverState, opts: &SolverOptions) -> Gains {
    if state.n == 0 {
        return Gains {
            omega: vec![opts.a_max; state.r_log.len()],
            xi: [opts.a_max; 2],
            psi: vec![opts.a_max; state.lambda.len() - 2],
        };
    }
    Gains {
        omega: state.r_log.iter().map(|x| clip_gain(*x, opts.a_max)).collect(),
        xi: [clip_gain(state.lambda[0], opts.a_max), clip_gain(state.lambda[1], opts.a_max)],
        psi: state.lambda[2..].iter().map(|l| clip_gain(*l, opts.a_max)).collect(),
    }
}

/// One simultaneous projected update with the gains stored in `state`:
/// descent on the log-rates, ascent on the multipliers.
pub fn primal_dual_step(state: &SolverState, grads: &Gradients, _opts: &SolverOptions) -> SolverState {
    let mut next = state.clone();
    for (i, x) in next.r_log.iter_mut().enumerate() {
        *x = (state.r_log[i] - state.gains.omega[i] * grads.primal[i]).min(state.r_log_cap);
    }
    for (k, l) in next.lambda.iter_mut().enumerate() {
        let gain = if k < 2 { state.gains.xi[k] } else { state.gains.psi[k - 2] };
        *l = (state.lambda[k] + gain * grads.dual[k]).max(0.0);
    }
    next.n += 1;
    next.scalar_updates += next.r_log.len() + next.lambda.len();
    next
}

/// Scalar updates performed per iteration: every log-rate, every multiplier and
/// one gain for each of them.
pub fn scalar_updates_per_iteration(spec: &MigrationSpec) -> usize {
    2 * (spec.free_rate_count() + spec.multiplier_count())
}

/// Left-hand sides of the three feasibility conditions evaluated at `R = R̂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// Migration time at the cap over its deadline.
    pub time_margin: f64,
    /// Downtime at the cap over its deadline.
    pub downtime_margin: f64,
    /// `β·w̄/R̂`.
    pub speedup_margin: f64,
}

/// Every round time decreases in every rate, so the instance is feasible exactly
/// when running all rounds at the cap meets both deadlines and the speed-up bound.
pub fn check_feasibility(spec: &MigrationSpec) -> Result<Feasibility> {
    spec.validate()?;
    let r = spec.r_hat;
    let m0 = spec.m0;
    let i = spec.i_max as i32;
    let (time_margin, downtime_margin) = if spec.dirty_rate.is_constant() {
        let w = spec.dirty_rate.max();
        let ratio = w / r;
        let geometric = if w == r { (i + 2) as f64 / r } else { (1.0 - ratio.powi(i + 2)) / (r - w) };
        (m0 / spec.delta_mt * geometric, m0 / spec.delta_dt / r * ratio.powi(i + 1))
    } else {
        let sched = expand_schedule(spec, &vec![r; spec.free_rate_count()])?;
        let rounds = crate::model::round_volumes_and_times(spec, &sched)?;
        let t_mt: f64 = rounds.iter().map(|x| x.time_s).sum();
        (t_mt / spec.delta_mt, rounds.last().map(|x| x.time_s).unwrap_or(0.0) / spec.delta_dt)
    };
    let speedup_margin = spec.beta * spec.dirty_rate.max() / r;
    Ok(Feasibility {
        feasible: time_margin <= 1.0 && downtime_margin <= 1.0 && speedup_margin <= 1.0,
        time_margin,
        downtime_margin,
        speedup_margin,
    })
}

/// Round count that lets the stop-and-copy round just meet the downtime deadline
/// when every round runs at the cap.
pub fn optimized_imax(spec: &MigrationSpec) -> Result<usize> {
    let w = spec.dirty_rate.max();
    if !(w < spec.r_hat) {
        return Err(Error::OutOfDomain { what: "dirty rate over bandwidth cap", requirement: "< 1", value: w / spec.r_hat });
    }
    if w == 0.0 {
        return Ok(0);
    }
    let num = (spec.m0 / (spec.delta_dt * spec.r_hat)).ln();
    if num <= 0.0 {
        return Ok(0);
    }
    let raw = (num / (spec.r_hat / w).ln() - 1.0).ceil();
    Ok(if raw > 0.0 { raw as usize } else { 0 })
}

/// Round count actually used for a requested number of optimized rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundAdjustment {
    /// Value from [`optimized_imax`].
    pub optimized: usize,
    /// Smallest multiple of `q` not below it (zero stays zero).
    pub used: usize,
    pub q: usize,
}

/// Copy of `spec` at the optimized round count, rounded up to a multiple of `q`
/// so the clusters have equal size.
pub fn spec_at_optimized_imax(spec: &MigrationSpec, q: usize) -> Result<(MigrationSpec, RoundAdjustment)> {
    let optimized = optimized_imax(spec)?;
    let q = q.max(1);
    let used = optimized.div_ceil(q) * q;
    let eff_q = if used == 0 { 1 } else { q };
    Ok((spec.with_rounds(used, eff_q)?, RoundAdjustment { optimized, used, q: eff_q }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub schedule: RateSchedule,
    pub report: EnergyReport,
    pub converged: bool,
    pub iterations: usize,
    pub trajectory: Option<Vec<f64>>,
    /// Final multipliers `[λ_1, λ_2, λ_3…]`.
    pub lambda: Vec<f64>,
    pub scalar_updates_per_iteration: usize,
}

/// What a dynamic event rescales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventTarget {
    DirtyRate,
    K0,
}

/// Mid-run parameter change: from iteration `at_iter` on, `target` is multiplied by
/// `multiplier` (relative to its current value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicEvent {
    pub at_iter: usize,
    pub target: EventTarget,
    pub multiplier: f64,
}

/// One iteration of a dynamic run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub n: usize,
    pub e_tot: f64,
    /// Dirty-rate scale relative to the starting instance.
    pub dirty_scale: f64,
    /// K0 scale relative to the starting instance.
    pub k0_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicRun {
    pub trace: Vec<TracePoint>,
    pub result: SolveResult,
}

pub fn solve(spec: &MigrationSpec, power: &BalancedPowerModel, opts: &SolverOptions) -> Result<SolveResult> {
    let feas = check_feasibility(spec)?;
    if !feas.feasible {
        return Err(Error::Infeasible { time: feas.time_margin, downtime: feas.downtime_margin, speedup: feas.speedup_margin });
    }
    let state = SolverState::initial(spec, opts);
    Ok(iterate(spec, power, opts, state, &[])?.result)
}

/// Same iteration as [`solve`] from a caller-chosen starting state.
pub fn solve_from(spec: &MigrationSpec, power: &BalancedPowerModel, opts: &SolverOptions, state: SolverState) -> Result<SolveResult> {
    let feas = check_feasibility(spec)?;
    if !feas.feasible {
        return Err(Error::Infeasible { time: feas.time_margin, downtime: feas.downtime_margin, speedup: feas.speedup_margin });
    }
    Ok(iterate(spec, power, opts, state, &[])?.result)
}

/// Run the iteration while the instance changes under it. The state is never
/// reset; the run stops at convergence only once every event has fired.
pub fn solve_dynamic(
    spec: &MigrationSpec,
    power: &BalancedPowerModel,
    opts: &SolverOptions,
    events: &[DynamicEvent],
) -> Result<DynamicRun> {
    for e in events {
        if e.at_iter == 0 || e.at_iter >= opts.max_iters {
            return Err(Error::EventOutOfRange { at: e.at_iter, max_iters: opts.max_iters });
        }
        if !(e.multiplier > 0.0) {
            return Err(Error::OutOfDomain { what: "event multiplier", requirement: "> 0", value: e.multiplier });
        }
    }
    let feas = check_feasibility(spec)?;
    if !feas.feasible {
        return Err(Error::Infeasible { time: feas.time_margin, downtime: feas.downtime_margin, speedup: feas.speedup_margin });
    }
    iterate(spec, power, opts, SolverState::initial(spec, opts), events)
}

fn iterate(
    spec0: &MigrationSpec,
    power0: &BalancedPowerModel,
    opts: &SolverOptions,
    mut state: SolverState,
    events: &[DynamicEvent],
) -> Result<DynamicRun> {
    opts.validate()?;
    power0.validate()?;
    let mut spec = spec0.clone();
    let mut power = *power0;
    let (mut dirty_scale, mut k0_scale) = (1.0, 1.0);
    let last_event = events.iter().map(|e| e.at_iter).max();
    let tol = opts.convergence_tol;

    let mut trace = Vec::new();
    let mut stable = 0usize;
    let mut prev_energy: Option<f64> = None;
    let mut converged = false;
    let mut best: Option<(f64, SolverState)> = None;
    let mut iterations = 0;

    for n in 0..opts.max_iters {
        for e in events.iter().filter(|e| e.at_iter == n) {
            match e.target {
                EventTarget::DirtyRate => {
                    spec.dirty_rate = spec.dirty_rate.scaled(e.multiplier);
                    dirty_scale *= e.multiplier;
                }
                EventTarget::K0 => {
                    power.k0 *= e.multiplier;
                    k0_scale *= e.multiplier;
                }
            }
            // a new instance invalidates the stability streak and the best iterate
            stable = 0;
            prev_energy = None;
            best = None;
        }
        iterations = n + 1;
        state.n = n;
        let obj = objective_log(&spec, &power, &state.r_log)?;
        let grads = gradients(&spec, &power, &state)?;
        state.energy_trace.push(obj.e_tot);
        trace.push(TracePoint { n, e_tot: obj.e_tot, dirty_scale, k0_scale });

        let max_violation = grads.dual.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let feasible_now = max_violation <= tol;
        if feasible_now && best.as_ref().is_none_or(|(e, _)| obj.e_tot < *e) {
            best = Some((obj.e_tot, state.clone()));
        }
        if let Some(prev) = prev_energy {
            if (obj.e_tot - prev).abs() <= tol * obj.e_tot.abs().max(f64::MIN_POSITIVE) {
                stable += 1;
            } else {
                stable = 0;
            }
        }
        prev_energy = Some(obj.e_tot);
        let events_done = last_event.is_none_or(|l| n > l);
        if events_done && stable >= 3 && feasible_now && kkt_residual(&state, &grads) <= tol * (1.0 + obj.e_tot.abs()) {
            converged = true;
            break;
        }

        state.gains = adaptive_gains(&state, opts);
        state.scalar_updates += state.gains.len();
        let direction = match opts.step_rule {
            StepRule::Gradient => grads,
            StepRule::Newton => newton_direction(&spec, &power, &state, opts)?,
        };
        state = primal_dual_step(&state, &direction, opts);
    }

    let final_state = if converged {
        state
    } else {
        best.map(|(_, s)| s).unwrap_or(state)
    };
    let schedule = expand_schedule(&spec, &final_state.r_log.iter().map(|x| x.exp()).collect::<Vec<_>>())?;
    let report = migration_energy_with_tolerance(&spec, &schedule, &power, tol)?;
    let result = SolveResult {
        schedule,
        report,
        converged,
        iterations,
        trajectory: opts.record_trajectory.then(|| trace.iter().map(|t| t.e_tot).collect()),
        lambda: final_state.lambda.clone(),
        scalar_updates_per_iteration: scalar_updates_per_iteration(&spec),
    };
    Ok(DynamicRun { trace, result })
}

/// Stationarity over the log-rates a projected step could still move, and
/// complementary slackness `λ_k·|φ_k|` over the multipliers (feasibility is
/// tested separately).
fn kkt_residual(state: &SolverState, grads: &Gradients) -> f64 {
    let primal = state
        .r_log
        .iter()
        .zip(&grads.primal)
        .filter(|(x, g)| !(**x >= state.r_log_cap - 1e-12 && **g < 0.0))
        .map(|(_, g)| g.abs());
    let dual = state.lambda.iter().zip(&grads.dual).map(|(l, g)| l * g.abs());
    primal.chain(dual).fold(0.0, f64::max)
}

/// Direction from the quadratic model of the log-form problem, expressed so that
/// [`primal_dual_step`] with gain `a_max` takes it in full.
fn newton_direction(spec: &MigrationSpec, power: &BalancedPowerModel, state: &SolverState, opts: &SolverOptions) -> Result<Gradients> {
    let x = &state.r_log;
    let n = x.len();
    let c = objective::curvature(spec, power, x);
    let scale = 1.0 / c.e_dyn.max(f64::MIN_POSITIVE);

    // multiplier of log(T_MT/Δ_MT) <= 0 matching λ_1 of T_MT/Δ_MT - 1 <= 0
    let mu1 = state.lambda[0] * c.t_mt / spec.delta_mt;
    let j1 = &c.grad_t / c.t_mt;
    let h1 = &c.hess_t / c.t_mt - &j1 * j1.transpose();
    let mut h = (&c.hess_e + h1 * mu1) * scale;
    let ridge = 1e-10 * (1.0 + h.diagonal().amax());
    for i in 0..n {
        h[(i, i)] += ridge;
    }
    let g = &c.grad_e * scale;

    let w_max = spec.dirty_rate.max();
    let bw = spec.beta * w_max;
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    rows.push((j1.clone(), -(c.t_mt / spec.delta_mt).ln()));
    let has_downtime = c.t_dt > 0.0;
    if has_downtime {
        rows.push((&c.grad_tdt / c.t_dt, -(c.t_dt / spec.delta_dt).ln()));
    }
    let speedup_first = rows.len();
    let speedup: Vec<usize> = if bw > 0.0 { spec.speedup_constrained().collect() } else { Vec::new() };
    for &k in &speedup {
        let mut e = DVector::zeros(n);
        e[k] = -1.0;
        rows.push((e, x[k] - bw.ln()));
    }
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        rows.push((e, state.r_log_cap - x[i]));
    }
    let mut a = DMatrix::zeros(rows.len(), n);
    let mut b = DVector::zeros(rows.len());
    for (r, (row, rhs)) in rows.iter().enumerate() {
        a.set_row(r, &row.transpose());
        b[r] = *rhs;
    }

    let (d, targets) = match qp::solve(&h, &g, &a, &b) {
        Ok(sol) => {
            let mult = &sol.multipliers / scale;
            let mut lam = vec![0.0; state.lambda.len()];
            lam[0] = mult[0] / (c.t_mt / spec.delta_mt);
            if has_downtime {
                lam[1] = mult[1] / (c.t_dt / spec.delta_dt);
            }
            for (slot, &k) in speedup.iter().enumerate() {
                lam[2 + slot] = mult[speedup_first + slot] / (bw * (-x[k]).exp());
            }
            (sol.x, lam)
        }
        // Only reachable when an event has made the instance infeasible: head for the cap.
        Err(qp::QpError::Infeasible) => (DVector::from_iterator(n, x.iter().map(|xi| state.r_log_cap - xi)), state.lambda.clone()),
        Err(e) => return Err(Error::Subproblem(e.to_string())),
    };

    let a_max = opts.a_max;
    Ok(Gradients {
        primal: d.iter().map(|di| -di / a_max).collect(),
        dual: targets.iter().zip(&state.lambda).map(|(t, l)| (t - l) / a_max).collect(),
    })
}

/// Iterations each event needs before the energy stays within `band` (relative) of
/// the value it settles to, i.e. the energy just before the next event or at the
/// end of the run. The run start counts as an event at iteration 0.
pub fn settle_iterations(trace: &[TracePoint], events: &[DynamicEvent], band: f64) -> Vec<SettleTime> {
    let mut starts: Vec<usize> = events.iter().map(|e| e.at_iter).collect();
    starts.push(0);
    starts.sort_unstable();
    starts.dedup();
    let mut out = Vec::with_capacity(starts.len());
    for (k, &start) in starts.iter().enumerate() {
        let end = starts.get(k + 1).copied().unwrap_or(trace.len()).min(trace.len());
        if start >= end {
            continue;
        }
        let segment = &trace[start..end];
        let steady = segment[segment.len() - 1].e_tot;
        let outside = segment.iter().rposition(|p| (p.e_tot - steady).abs() > band * steady.abs());
        out.push(SettleTime { at_iter: start, iterations: outside.map_or(0, |i| i + 1), steady_energy: steady });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettleTime {
    pub at_iter: usize,
    pub iterations: usize,
    pub steady_energy: f64,
}
