//! Experiment execution: static comparisons across managers, perturbed runs,
//! the brute-force cross-check and the feasibility report. Points are
//! independent; results come back in declared order whatever the execution mode.

use scbm_core::managers::{livmig_solve, xen_optimize_imax};
use scbm_core::model::{EnergyReport, MigrationSpec};
use scbm_core::oracle::brute_force;
use scbm_core::solver::{check_feasibility, settle_iterations, solve, solve_dynamic, SettleTime, SolveResult};
use scbm_core::{par, Error as CoreError};

use crate::error::{HarnessError, Result};
use crate::output::{fmt_float, fmt_opt_float, Table};
use crate::scenario::{Manager, RoundMode, RoundPolicy, Scenario, SweepPoint};

/// Band around the value a segment settles to, as a fraction of it.
pub const SETTLE_BAND: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Points on the rayon pool when the `parallel` feature is on.
    #[default]
    Parallel,
    Sequential,
}

fn map_points<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Execution::Parallel => par::map(items, f),
        Execution::Sequential => items.iter().map(f).collect(),
    }
}

fn is_infeasible(e: &CoreError) -> bool {
    matches!(e, CoreError::Infeasible { .. } | CoreError::NoFeasibleCandidate(_))
}

fn point_err(point: &SweepPoint) -> impl Fn(CoreError) -> HarnessError + '_ {
    move |source| HarnessError::Point { point: point.label.clone(), source }
}

/// What a savings column compares against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Baseline {
    /// Another manager at the same point and power model.
    Manager(Manager),
    /// The same manager at the same point under another power model.
    Power(String),
}

impl Baseline {
    pub fn column_name(&self) -> String {
        match self {
            Baseline::Manager(m) => format!("saving_vs_{}_pct", m.id()),
            Baseline::Power(p) => format!("saving_vs_{p}_pct"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub point: String,
    pub power: String,
    pub manager: Manager,
    /// Instance actually run, at the round count the manager settled on.
    pub spec: MigrationSpec,
    pub optimized_imax: Option<usize>,
    pub model: scbm_core::BalancedPowerModel,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    /// `None` when no schedule of this manager meets the constraints.
    pub report: Option<EnergyReport>,
    /// One entry per [`ExperimentTable::baselines`], in percent.
    pub savings: Vec<Option<f64>>,
}

impl ResultRow {
    pub fn e_tot(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.e_tot)
    }

    pub fn feasible(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.feasible)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTable {
    pub scenario: String,
    pub assumptions: String,
    pub baselines: Vec<Baseline>,
    pub rows: Vec<ResultRow>,
}

const RESULT_COLUMNS: &[&str] = &[
    "scenario",
    "point",
    "power",
    "manager",
    "status",
    "feasible",
    "deadlines_met",
    "converged",
    "iterations",
    "i_max",
    "optimized_imax",
    "q",
    "m0",
    "dirty_rate",
    "r_hat",
    "beta",
    "delta_mt",
    "delta_dt",
    "k0",
    "alpha",
    "p_setup",
    "e_setup",
    "e_dyn",
    "e_tot",
    "t_mt",
    "t_dt",
    "t_tot",
];

impl ExperimentTable {
    pub fn find(&self, point: &str, power: &str, manager: Manager) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.point == point && r.power == power && r.manager == manager)
    }

    /// True when no row found a schedule meeting the constraints.
    pub fn all_infeasible(&self) -> bool {
        !self.rows.iter().any(ResultRow::feasible)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(RESULT_COLUMNS);
        t.header.extend(self.baselines.iter().map(Baseline::column_name));
        t.header.push("assumptions".into());
        for r in &self.rows {
            let rep = r.report.as_ref();
            let f = |g: fn(&EnergyReport) -> f64| fmt_opt_float(rep.map(g));
            let mut rec = vec![
                self.scenario.clone(),
                r.point.clone(),
                r.power.clone(),
                r.manager.id().to_string(),
                if rep.is_some() { "solved" } else { "infeasible" }.to_string(),
                r.feasible().to_string(),
                rep.is_some_and(|x| x.deadlines_met).to_string(),
                r.converged.map(|c| c.to_string()).unwrap_or_default(),
                r.iterations.map(|c| c.to_string()).unwrap_or_default(),
                r.spec.i_max.to_string(),
                r.optimized_imax.map(|c| c.to_string()).unwrap_or_default(),
                r.spec.q.to_string(),
                fmt_float(r.spec.m0),
                fmt_float(r.spec.dirty_rate.max()),
                fmt_float(r.spec.r_hat),
                fmt_float(r.spec.beta),
                fmt_float(r.spec.delta_mt),
                fmt_float(r.spec.delta_dt),
                fmt_float(r.model.k0),
                fmt_float(r.model.alpha),
                fmt_float(r.model.p_setup_total),
                f(|x| x.e_setup),
                f(|x| x.e_dyn),
                f(|x| x.e_tot),
                f(|x| x.t_mt),
                f(|x| x.t_dt),
                f(|x| x.t_tot),
            ];
            rec.extend(r.savings.iter().map(|s| fmt_opt_float(*s)));
            rec.push(self.assumptions.clone());
            t.rows.push(rec);
        }
        t
    }
}

/// Per-cent saving `(1 − E_a/E_b)·100`.
pub fn saving_pct(e_a: f64, e_b: f64) -> f64 {
    (1.0 - e_a / e_b) * 100.0
}

/// Cheapest feasible SCBM run among the round counts the policy allows.
pub fn run_scbm(point: &SweepPoint, policy: &RoundPolicy) -> std::result::Result<(MigrationSpec, SolveResult), CoreError> {
    let start = &point.spec;
    let counts: Vec<usize> = match policy.mode {
        RoundMode::Fixed | RoundMode::Optimized => vec![start.i_max],
        RoundMode::Search => (0..=policy.search_extra).map(|k| start.i_max + k * point.q).collect(),
    };
    let mut best: Option<(MigrationSpec, SolveResult)> = None;
    let mut last_err = None;
    for i in counts {
        let spec = start.with_rounds(i, if i == 0 { 1 } else { point.q })?;
        match solve(&spec, &point.power.model, &point.solver) {
            Ok(res) => {
                let cheaper = res.report.feasible && best.as_ref().is_none_or(|(_, b)| res.report.e_tot < b.report.e_tot);
                // Outside the search a single count is tried; keep its result even if infeasible.
                let only = best.is_none() && policy.mode != RoundMode::Search;
                if cheaper || only {
                    best = Some((spec, res));
                }
            }
            Err(e) if is_infeasible(&e) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| CoreError::NoFeasibleCandidate("no round count searched".into())))
}

fn run_manager(point: &SweepPoint, manager: Manager, policy: &RoundPolicy) -> Result<ResultRow> {
    let mut row = ResultRow {
        point: point.label.clone(),
        power: point.power.label.clone(),
        manager,
        spec: point.spec.clone(),
        optimized_imax: point.optimized_imax,
        model: point.power.model,
        converged: None,
        iterations: None,
        report: None,
        savings: Vec::new(),
    };
    let model = &point.power.model;
    let outcome = match manager {
        Manager::Scbm => run_scbm(point, policy).map(|(spec, res)| {
            row.spec = spec;
            row.converged = Some(res.converged);
            row.iterations = Some(res.iterations);
            res.report
        }),
        Manager::Xen => xen_optimize_imax(&point.spec, model, policy.xen_range.clone()).and_then(|(i, rep)| {
            row.spec = point.spec.with_rounds(i, 1)?;
            Ok(rep)
        }),
        Manager::LivMig => livmig_solve(&point.spec, model).map(|r| {
            row.spec = r.spec;
            row.converged = Some(r.result.converged);
            row.iterations = Some(r.result.iterations);
            r.result.report
        }),
    };
    match outcome {
        Ok(rep) => row.report = Some(rep),
        Err(e) if is_infeasible(&e) => {}
        Err(e) => return Err(point_err(point)(e)),
    }
    Ok(row)
}

pub fn run_experiment(scen: &Scenario) -> Result<ExperimentTable> {
    run_experiment_with(scen, &scen.managers, Execution::Parallel)
}

/// One row per point per manager, in declared order, with savings against every
/// other listed manager and every reference power model.
pub fn run_experiment_with(scen: &Scenario, managers: &[Manager], exec: Execution) -> Result<ExperimentTable> {
    let per_point = map_points(exec, &scen.points, |p| -> Result<Vec<ResultRow>> {
        managers.iter().map(|m| run_manager(p, *m, &scen.rounds)).collect()
    });
    let mut rows = Vec::new();
    for r in per_point {
        rows.extend(r?);
    }
    let mut baselines: Vec<Baseline> =
        [Manager::Xen, Manager::LivMig].into_iter().filter(|m| managers.contains(m)).map(Baseline::Manager).collect();
    baselines.extend(scen.reference_powers.iter().cloned().map(Baseline::Power));

    let savings: Vec<Vec<Option<f64>>> = rows
        .iter()
        .map(|r| {
            baselines
                .iter()
                .map(|b| {
                    let other = rows.iter().find(|o| match b {
                        Baseline::Manager(m) => o.point == r.point && o.power == r.power && o.manager == *m,
                        Baseline::Power(p) => o.point == r.point && &o.power == p && o.manager == r.manager,
                    })?;
                    Some(saving_pct(r.e_tot()?, other.e_tot()?))
                })
                .collect()
        })
        .collect();
    for (r, s) in rows.iter_mut().zip(savings) {
        r.savings = s;
    }
    Ok(ExperimentTable { scenario: scen.name.clone(), assumptions: scen.assumptions.clone(), baselines, rows })
}

/// One iteration of a perturbed run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub point: String,
    pub n: usize,
    pub e_tot: f64,
    pub dirty_scale: f64,
    pub k0_scale: f64,
    /// On the first iteration of each segment: iterations it took to settle.
    pub settle_iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicRun {
    pub point: String,
    pub settle: Vec<SettleTime>,
    pub result: SolveResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicOutput {
    pub scenario: String,
    pub assumptions: String,
    pub rows: Vec<TraceRow>,
    pub runs: Vec<DynamicRun>,
}

const TRACE_COLUMNS: &[&str] = &["scenario", "point", "n", "e_tot", "dirty_scale", "k0_scale", "settle_iterations", "assumptions"];

impl DynamicOutput {
    pub fn to_table(&self) -> Table {
        trace_table(&self.scenario, &self.assumptions, &self.rows)
    }
}

/// Plot-ready trajectory table; the header is written even with no rows.
pub fn trace_table(scenario: &str, assumptions: &str, rows: &[TraceRow]) -> Table {
    let mut t = Table::new(TRACE_COLUMNS);
    for r in rows {
        t.rows.push(vec![
            scenario.to_string(),
            r.point.clone(),
            r.n.to_string(),
            fmt_float(r.e_tot),
            fmt_float(r.dirty_scale),
            fmt_float(r.k0_scale),
            r.settle_iterations.map(|s| s.to_string()).unwrap_or_default(),
            assumptions.to_string(),
        ]);
    }
    t
}

pub fn run_dynamic(scen: &Scenario) -> Result<DynamicOutput> {
    run_dynamic_with(scen, Execution::Parallel)
}

/// SCBM trajectories under the scenario's events, one per point.
pub fn run_dynamic_with(scen: &Scenario, exec: Execution) -> Result<DynamicOutput> {
    if scen.events.is_empty() {
        return Err(HarnessError::invalid("events", "a perturbed run needs at least one event"));
    }
    let runs = map_points(exec, &scen.points, |p| {
        solve_dynamic(&p.spec, &p.power.model, &p.solver, &scen.events).map_err(point_err(p)).map(|run| (p.label.clone(), run))
    });
    let mut out = DynamicOutput { scenario: scen.name.clone(), assumptions: scen.assumptions.clone(), rows: Vec::new(), runs: Vec::new() };
    for r in runs {
        let (label, run) = r?;
        let settle = settle_iterations(&run.trace, &scen.events, SETTLE_BAND);
        for t in &run.trace {
            out.rows.push(TraceRow {
                point: label.clone(),
                n: t.n,
                e_tot: t.e_tot,
                dirty_scale: t.dirty_scale,
                k0_scale: t.k0_scale,
                settle_iterations: settle.iter().find(|s| s.at_iter == t.n).map(|s| s.iterations),
            });
        }
        out.runs.push(DynamicRun { point: label, settle, result: run.result });
    }
    Ok(out)
}

/// Solver against the brute-force grid at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub point: String,
    pub power: String,
    pub i_max: usize,
    pub q: usize,
    /// Verdict of the closed-form feasibility check.
    pub feasible: bool,
    pub oracle_e_tot: Option<f64>,
    pub solver_e_tot: Option<f64>,
    /// `(E_solver − E_oracle)/E_oracle`; negative when the solver beats the grid.
    pub relative_gap: Option<f64>,
    pub evaluated: usize,
    pub exhaustive: bool,
}

impl OracleRow {
    /// The grid is empty exactly when the feasibility check says infeasible.
    pub fn verdicts_agree(&self) -> bool {
        self.feasible == self.oracle_e_tot.is_some()
    }
}

pub fn run_oracle(scen: &Scenario, resolution: usize, exec: Execution) -> Result<Vec<OracleRow>> {
    map_points(exec, &scen.points, |p| -> Result<OracleRow> {
        let model = &p.power.model;
        let feas = check_feasibility(&p.spec).map_err(point_err(p))?;
        let mut row = OracleRow {
            point: p.label.clone(),
            power: p.power.label.clone(),
            i_max: p.spec.i_max,
            q: p.spec.q,
            feasible: feas.feasible,
            oracle_e_tot: None,
            solver_e_tot: None,
            relative_gap: None,
            evaluated: 0,
            exhaustive: false,
        };
        match brute_force(&p.spec, model, resolution) {
            Ok(o) => {
                row.oracle_e_tot = Some(o.report.e_tot);
                row.evaluated = o.evaluated;
                row.exhaustive = o.exhaustive;
            }
            Err(e) if is_infeasible(&e) => {}
            Err(e) => return Err(point_err(p)(e)),
        }
        match solve(&p.spec, model, &p.solver) {
            Ok(s) => row.solver_e_tot = Some(s.report.e_tot),
            Err(e) if is_infeasible(&e) => {}
            Err(e) => return Err(point_err(p)(e)),
        }
        if let (Some(o), Some(s)) = (row.oracle_e_tot, row.solver_e_tot) {
            row.relative_gap = Some((s - o) / o);
        }
        Ok(row)
    })
    .into_iter()
    .collect()
}

pub fn oracle_table(scenario: &Scenario, rows: &[OracleRow]) -> Table {
    let mut t = Table::new(&[
        "scenario",
        "point",
        "power",
        "i_max",
        "q",
        "feasible",
        "oracle_e_tot",
        "solver_e_tot",
        "relative_gap",
        "evaluated",
        "exhaustive",
        "verdicts_agree",
        "assumptions",
    ]);
    for r in rows {
        t.rows.push(vec![
            scenario.name.clone(),
            r.point.clone(),
            r.power.clone(),
            r.i_max.to_string(),
            r.q.to_string(),
            r.feasible.to_string(),
            fmt_opt_float(r.oracle_e_tot),
            fmt_opt_float(r.solver_e_tot),
            fmt_opt_float(r.relative_gap),
            r.evaluated.to_string(),
            r.exhaustive.to_string(),
            r.verdicts_agree().to_string(),
            scenario.assumptions.clone(),
        ]);
    }
    t
}

/// Feasibility margins at one point; each must be at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub point: String,
    pub power: String,
    pub i_max: usize,
    pub optimized_imax: Option<usize>,
    pub q: usize,
    pub feasible: bool,
    pub time_margin: f64,
    pub downtime_margin: f64,
    pub speedup_margin: f64,
}

pub fn run_check(scen: &Scenario) -> Result<Vec<CheckRow>> {
    scen.points
        .iter()
        .map(|p| {
            let f = check_feasibility(&p.spec).map_err(point_err(p))?;
            Ok(CheckRow {
                point: p.label.clone(),
                power: p.power.label.clone(),
                i_max: p.spec.i_max,
                optimized_imax: p.optimized_imax,
                q: p.spec.q,
                feasible: f.feasible,
                time_margin: f.time_margin,
                downtime_margin: f.downtime_margin,
                speedup_margin: f.speedup_margin,
            })
        })
        .collect()
}

pub fn check_table(scenario: &Scenario, rows: &[CheckRow]) -> Table {
    let mut t = Table::new(&[
        "scenario",
        "point",
        "power",
        "i_max",
        "optimized_imax",
        "q",
        "feasible",
        "time_margin",
        "downtime_margin",
        "speedup_margin",
        "assumptions",
    ]);
    for r in rows {
        t.rows.push(vec![
            scenario.name.clone(),
            r.point.clone(),
            r.power.clone(),
            r.i_max.to_string(),
            r.optimized_imax.map(|c| c.to_string()).unwrap_or_default(),
            r.q.to_string(),
            r.feasible.to_string(),
            fmt_float(r.time_margin),
            fmt_float(r.downtime_margin),
            fmt_float(r.speedup_margin),
            scenario.assumptions.clone(),
        ]);
    }
    t
}
