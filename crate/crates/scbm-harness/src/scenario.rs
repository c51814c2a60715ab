//! Scenario files.
//!
//! A scenario is TOML. It may name a built-in scenario in `preset`, whose
//! values it then overrides field by field; command-line flags go on top in the
//! same way. [`Scenario::resolve`] turns the merged raw shape into validated
//! sweep points, each a concrete instance with its power model and solver
//! settings. Validation errors carry the dotted path of the offending field.

use std::fmt;
use std::ops::RangeInclusive;
use std::path::Path;
use std::str::FromStr;

use scbm_core::model::{DirtyRate, MigrationSpec, Overheads};
use scbm_core::power::{balanced_k0, CcAlgorithm, ConnectionProfile};
use scbm_core::solver::{spec_at_optimized_imax, StepRule};
use scbm_core::{BalancedPowerModel, DynamicEvent, EventTarget, SolverOptions};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::presets::{scenario_source, PresetLibrary};

/// Parse TOML, reporting failures with the line and column they occur at.
pub(crate) fn parse_toml<T: DeserializeOwned>(source_name: &str, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        HarnessError::Parse { source_name: source_name.to_string(), line, column, message: e.message().trim().to_string() }
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line_start = before.rfind('\n').map_or(0, |p| p + 1);
    (before.matches('\n').count() + 1, before[line_start..].chars().count() + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manager {
    /// The settable-complexity optimizer.
    Scbm,
    /// The hypervisor's linear rate ramp.
    Xen,
    /// One common rate for every round.
    LivMig,
}

impl Manager {
    pub const ALL: [Manager; 3] = [Manager::Scbm, Manager::Xen, Manager::LivMig];

    pub fn id(self) -> &'static str {
        match self {
            Manager::Scbm => "scbm",
            Manager::Xen => "xen",
            Manager::LivMig => "liv_mig",
        }
    }
}

impl fmt::Display for Manager {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Manager {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Manager::ALL.into_iter().find(|m| m.id() == norm).ok_or_else(|| {
            format!("unknown manager `{s}`; valid: {}", Manager::ALL.map(|m| m.id()).join(", "))
        })
    }
}

/// How SCBM picks its number of pre-copy rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundMode {
    /// The downtime-optimal count, rounded up to a multiple of `q`.
    #[default]
    Optimized,
    /// Exactly `spec.i_max`.
    Fixed,
    /// The cheapest feasible count among the downtime-optimal one and the next
    /// `search_extra` multiples of `q` above it.
    Search,
}

impl FromStr for RoundMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "optimized" => Ok(RoundMode::Optimized),
            "fixed" => Ok(RoundMode::Fixed),
            "search" => Ok(RoundMode::Search),
            _ => Err(format!("unknown round mode `{s}`; valid: optimized, fixed, search")),
        }
    }
}

/// Instance fields, every one optional so layers can be merged.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpec {
    /// Workload preset supplying `m0` and, unless set here, the dirty rate.
    pub workload: Option<String>,
    pub m0: Option<f64>,
    pub dirty_rate: Option<f64>,
    /// Dirty rate as a fraction of the bandwidth cap.
    pub dirty_ratio: Option<f64>,
    pub dirty_rate_trace: Option<Vec<f64>>,
    pub i_max: Option<usize>,
    pub q: Option<usize>,
    pub beta: Option<f64>,
    pub delta_mt: Option<f64>,
    pub delta_dt: Option<f64>,
    pub r_hat: Option<f64>,
    pub overheads: Option<Overheads>,
}

impl RawSpec {
    /// `over` on top of `self`. The three ways of giving the dirty rate replace
    /// each other as a group so a layer never ends up with two of them.
    pub fn overlay(&self, over: &RawSpec) -> RawSpec {
        let dirty_from_over = over.dirty_rate.is_some() || over.dirty_ratio.is_some() || over.dirty_rate_trace.is_some();
        let dirty = if dirty_from_over { over } else { self };
        RawSpec {
            workload: over.workload.clone().or_else(|| self.workload.clone()),
            m0: over.m0.or(self.m0),
            dirty_rate: dirty.dirty_rate,
            dirty_ratio: dirty.dirty_ratio,
            dirty_rate_trace: dirty.dirty_rate_trace.clone(),
            i_max: over.i_max.or(self.i_max),
            q: over.q.or(self.q),
            beta: over.beta.or(self.beta),
            delta_mt: over.delta_mt.or(self.delta_mt),
            delta_dt: over.delta_dt.or(self.delta_dt),
            r_hat: over.r_hat.or(self.r_hat),
            overheads: over.overheads.or(self.overheads),
        }
    }

    fn set_dirty_ratio(&mut self, ratio: f64) {
        self.dirty_ratio = Some(ratio);
        self.dirty_rate = None;
        self.dirty_rate_trace = None;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawConnection {
    /// Congestion-control id.
    pub cc: String,
    /// Interface presets, one per subflow.
    pub subflows: Vec<String>,
    pub alpha: Option<f64>,
}

/// Power model: a named preset, a connection built from interface presets, or
/// explicit numbers. Explicit numbers override what the other two provide.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawPower {
    pub preset: Option<String>,
    pub connection: Option<RawConnection>,
    pub k0: Option<f64>,
    pub alpha: Option<f64>,
    pub p_setup: Option<f64>,
}

impl RawPower {
    pub fn overlay(&self, over: &RawPower) -> RawPower {
        let source_from_over = over.preset.is_some() || over.connection.is_some();
        let source = if source_from_over { over } else { self };
        RawPower {
            preset: source.preset.clone(),
            connection: source.connection.clone(),
            k0: over.k0.or(self.k0),
            alpha: over.alpha.or(self.alpha),
            p_setup: over.p_setup.or(self.p_setup),
        }
    }

    fn named(name: &str) -> RawPower {
        RawPower { preset: Some(name.to_string()), ..RawPower::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawRounds {
    pub mode: Option<RoundMode>,
    pub search_extra: Option<usize>,
    /// Round-count range searched for the ramp.
    pub xen_min: Option<usize>,
    pub xen_max: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawSolver {
    pub a_max: Option<f64>,
    pub max_iters: Option<usize>,
    pub convergence_tol: Option<f64>,
    pub step_rule: Option<StepRule>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawEvent {
    pub at_iter: usize,
    pub target: EventTarget,
    pub multiplier: f64,
}

/// One explicit sweep point: a label and the instance fields it changes.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawPoint {
    pub label: Option<String>,
    #[serde(default)]
    pub spec: RawSpec,
    /// Power preset replacing the scenario's power model at this point.
    pub power: Option<String>,
}

/// Sweep grid. Explicit points come first; every other axis multiplies them.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    pub points: Option<Vec<RawPoint>>,
    pub power: Option<Vec<String>>,
    /// Power presets to report savings against.
    pub reference_powers: Option<Vec<String>>,
    pub q: Option<Vec<usize>>,
    pub dirty_ratio: Option<Vec<f64>>,
    pub a_max: Option<Vec<f64>>,
}

impl RawSweep {
    fn overlay(&self, over: &RawSweep) -> RawSweep {
        RawSweep {
            points: over.points.clone().or_else(|| self.points.clone()),
            power: over.power.clone().or_else(|| self.power.clone()),
            reference_powers: over.reference_powers.clone().or_else(|| self.reference_powers.clone()),
            q: over.q.clone().or_else(|| self.q.clone()),
            dirty_ratio: over.dirty_ratio.clone().or_else(|| self.dirty_ratio.clone()),
            a_max: over.a_max.clone().or_else(|| self.a_max.clone()),
        }
    }
}

/// A scenario as written, before presets are applied and values checked.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    /// Built-in scenario this one starts from.
    pub preset: Option<String>,
    pub name: Option<String>,
    /// Free text recording the assumptions behind the numbers; copied into every
    /// output row.
    pub assumptions: Option<String>,
    pub managers: Option<Vec<Manager>>,
    #[serde(default)]
    pub spec: RawSpec,
    #[serde(default)]
    pub power: RawPower,
    #[serde(default)]
    pub rounds: RawRounds,
    #[serde(default)]
    pub solver: RawSolver,
    pub events: Option<Vec<RawEvent>>,
    #[serde(default)]
    pub sweep: RawSweep,
}

const MAX_PRESET_DEPTH: usize = 8;

impl RawScenario {
    pub fn parse(source_name: &str, text: &str) -> Result<RawScenario> {
        parse_toml(source_name, text)
    }

    pub fn from_file(path: &Path) -> Result<RawScenario> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
        let mut raw = Self::parse(&path.display().to_string(), &text)?;
        if raw.name.is_none() {
            raw.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(raw)
    }

    pub fn from_preset(name: &str) -> Result<RawScenario> {
        RawScenario { preset: Some(name.to_string()), name: Some(name.to_string()), ..RawScenario::default() }
            .with_presets_applied()
    }

    /// Apply the `preset` chain, innermost first.
    pub fn with_presets_applied(self) -> Result<RawScenario> {
        self.apply_presets(0)
    }

    fn apply_presets(self, depth: usize) -> Result<RawScenario> {
        let Some(name) = self.preset.clone() else { return Ok(self) };
        if depth >= MAX_PRESET_DEPTH {
            return Err(HarnessError::invalid("preset", format!("preset chain through `{name}` is too deep (cycle?)")));
        }
        let text = scenario_source(&name)?;
        let base = Self::parse(&format!("preset {name}"), text)?.apply_presets(depth + 1)?;
        let mut merged = base.overlay(&self);
        merged.preset = None;
        Ok(merged)
    }

    /// `over` on top of `self`, field by field. Lists are replaced whole.
    pub fn overlay(&self, over: &RawScenario) -> RawScenario {
        RawScenario {
            preset: over.preset.clone().or_else(|| self.preset.clone()),
            name: over.name.clone().or_else(|| self.name.clone()),
            assumptions: over.assumptions.clone().or_else(|| self.assumptions.clone()),
            managers: over.managers.clone().or_else(|| self.managers.clone()),
            spec: self.spec.overlay(&over.spec),
            power: self.power.overlay(&over.power),
            rounds: RawRounds {
                mode: over.rounds.mode.or(self.rounds.mode),
                search_extra: over.rounds.search_extra.or(self.rounds.search_extra),
                xen_min: over.rounds.xen_min.or(self.rounds.xen_min),
                xen_max: over.rounds.xen_max.or(self.rounds.xen_max),
            },
            solver: RawSolver {
                a_max: over.solver.a_max.or(self.solver.a_max),
                max_iters: over.solver.max_iters.or(self.solver.max_iters),
                convergence_tol: over.solver.convergence_tol.or(self.solver.convergence_tol),
                step_rule: over.solver.step_rule.or(self.solver.step_rule),
            },
            events: over.events.clone().or_else(|| self.events.clone()),
            sweep: self.sweep.overlay(&over.sweep),
        }
    }
}

/// Round-count policy shared by every point.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundPolicy {
    pub mode: RoundMode,
    pub search_extra: usize,
    pub xen_range: RangeInclusive<usize>,
}

/// A power model with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedPower {
    pub label: String,
    pub model: BalancedPowerModel,
    /// Rate cap carried by the preset or connection, used when the spec sets none.
    pub r_max: Option<f64>,
}

/// One fully specified run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub label: String,
    /// Instance at its starting round count: `spec.i_max` in fixed mode, the
    /// downtime-optimal count otherwise.
    pub spec: MigrationSpec,
    /// Requested number of optimized pre-copy rates (`spec.q` collapses to 1
    /// when there are no pre-copy rounds).
    pub q: usize,
    /// Downtime-optimal round count, when the round mode computes it.
    pub optimized_imax: Option<usize>,
    pub power: ResolvedPower,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub assumptions: String,
    pub managers: Vec<Manager>,
    pub rounds: RoundPolicy,
    pub events: Vec<DynamicEvent>,
    pub points: Vec<SweepPoint>,
    pub reference_powers: Vec<String>,
}

/// Read, layer and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let lib = PresetLibrary::builtin()?;
    Scenario::resolve(&RawScenario::from_file(path)?.with_presets_applied()?, &lib)
}

/// Validate scenario text (presets applied) under the given source name.
pub fn parse_scenario(source_name: &str, text: &str) -> Result<Scenario> {
    let lib = PresetLibrary::builtin()?;
    Scenario::resolve(&RawScenario::parse(source_name, text)?.with_presets_applied()?, &lib)
}

fn non_empty<'a, T>(axis: &'a Option<Vec<T>>, field: &str) -> Result<Option<&'a [T]>> {
    match axis {
        Some(v) if v.is_empty() => Err(HarnessError::invalid(field, "grid must not be empty")),
        Some(v) => Ok(Some(v)),
        None => Ok(None),
    }
}

fn required(v: Option<f64>, field: String) -> Result<f64> {
    v.ok_or_else(|| HarnessError::invalid(field, "missing"))
}

fn axis_values<T: Clone>(axis: Option<&[T]>) -> Vec<Option<T>> {
    axis.map_or(vec![None], |v| v.iter().cloned().map(Some).collect())
}

impl Scenario {
    pub fn resolve(raw: &RawScenario, lib: &PresetLibrary) -> Result<Scenario> {
        let managers = match &raw.managers {
            Some(m) if m.is_empty() => return Err(HarnessError::invalid("managers", "list must not be empty")),
            Some(m) => {
                let mut out: Vec<Manager> = Vec::new();
                for x in m {
                    if !out.contains(x) {
                        out.push(*x);
                    }
                }
                out
            }
            None => Manager::ALL.to_vec(),
        };

        let mode = match (raw.rounds.mode, raw.spec.i_max) {
            (Some(m), _) => m,
            (None, Some(_)) => RoundMode::Fixed,
            (None, None) => RoundMode::Optimized,
        };
        let xen_range = raw.rounds.xen_min.unwrap_or(0)..=raw.rounds.xen_max.unwrap_or(29);
        if xen_range.is_empty() {
            return Err(HarnessError::invalid("rounds.xen_max", "must not be below rounds.xen_min"));
        }
        let rounds = RoundPolicy { mode, search_extra: raw.rounds.search_extra.unwrap_or(10), xen_range };

        let mut solver = SolverOptions::default();
        solver.a_max = raw.solver.a_max.unwrap_or(solver.a_max);
        solver.max_iters = raw.solver.max_iters.unwrap_or(solver.max_iters);
        solver.convergence_tol = raw.solver.convergence_tol.unwrap_or(solver.convergence_tol);
        solver.step_rule = raw.solver.step_rule.unwrap_or(solver.step_rule);
        solver.validate().map_err(|e| HarnessError::invalid("solver", e.to_string()))?;

        let sweep = &raw.sweep;
        let explicit = non_empty(&sweep.points, "sweep.points")?;
        let power_axis = non_empty(&sweep.power, "sweep.power")?;
        let q_axis = non_empty(&sweep.q, "sweep.q")?;
        let ratio_axis = non_empty(&sweep.dirty_ratio, "sweep.dirty_ratio")?;
        let a_axis = non_empty(&sweep.a_max, "sweep.a_max")?;

        let base_point = [RawPoint::default()];
        let point_list = explicit.unwrap_or(&base_point);
        let mut points = Vec::new();
        for (pi, point) in point_list.iter().enumerate() {
            let point_path = if explicit.is_some() { format!("sweep.points[{pi}]") } else { String::new() };
            let spec_path = if explicit.is_some() { format!("{point_path}.spec") } else { "spec".to_string() };
            for (wi, axis_power) in axis_values(power_axis).into_iter().enumerate() {
                let (power_raw, power_path) = match (&axis_power, &point.power) {
                    (Some(name), _) => (RawPower::named(name), format!("sweep.power[{wi}]")),
                    (None, Some(name)) => (RawPower::named(name), format!("{point_path}.power")),
                    (None, None) => (raw.power.clone(), "power".to_string()),
                };
                let power = resolve_power(&power_raw, lib, &power_path)?;
                for q in axis_values(q_axis) {
                    for ratio in axis_values(ratio_axis) {
                        for a_max in axis_values(a_axis) {
                            let mut spec_raw = raw.spec.overlay(&point.spec);
                            if let Some(q) = q {
                                spec_raw.q = Some(q);
                            }
                            if let Some(r) = ratio {
                                spec_raw.set_dirty_ratio(r);
                            }
                            let mut opts = solver;
                            if let Some(a) = a_max {
                                opts.a_max = a;
                                opts.validate().map_err(|e| HarnessError::invalid("sweep.a_max", e.to_string()))?;
                            }
                            let (spec, req_q, optimized_imax) = resolve_spec(&spec_raw, &power, lib, &spec_path, mode)?;

                            let mut parts = Vec::new();
                            if explicit.is_some() {
                                parts.push(point.label.clone().unwrap_or_else(|| format!("p{pi}")));
                            }
                            if let Some(q) = q {
                                parts.push(format!("q={q}"));
                            }
                            if let Some(r) = ratio {
                                parts.push(format!("ratio={r}"));
                            }
                            if let Some(a) = a_max {
                                parts.push(format!("a_max={a}"));
                            }
                            let label = if parts.is_empty() { "base".to_string() } else { parts.join("/") };
                            points.push(SweepPoint { label, spec, q: req_q, optimized_imax, power: power.clone(), solver: opts });
                        }
                    }
                }
            }
        }

        let max_iters = points.iter().map(|p| p.solver.max_iters).min().unwrap_or(solver.max_iters);
        let mut events = Vec::new();
        for (k, e) in raw.events.iter().flatten().enumerate() {
            if e.at_iter == 0 {
                return Err(HarnessError::invalid(
                    format!("events[{k}].at_iter"),
                    "must be at least 1; iteration 0 is the unperturbed instance",
                ));
            }
            if e.at_iter >= max_iters {
                return Err(HarnessError::invalid(
                    format!("events[{k}].at_iter"),
                    format!("{} is not below solver.max_iters = {max_iters}", e.at_iter),
                ));
            }
            if !(e.multiplier > 0.0 && e.multiplier.is_finite()) {
                return Err(HarnessError::invalid(format!("events[{k}].multiplier"), format!("must be positive, got {}", e.multiplier)));
            }
            events.push(DynamicEvent { at_iter: e.at_iter, target: e.target, multiplier: e.multiplier });
        }

        let reference_powers = sweep.reference_powers.clone().unwrap_or_default();
        for (k, name) in reference_powers.iter().enumerate() {
            if !points.iter().any(|p| &p.power.label == name) {
                let mut labels: Vec<&str> = points.iter().map(|p| p.power.label.as_str()).collect();
                labels.dedup();
                return Err(HarnessError::invalid(
                    format!("sweep.reference_powers[{k}]"),
                    format!("`{name}` is not among the swept power models ({})", labels.join(", ")),
                ));
            }
        }

        Ok(Scenario {
            name: raw.name.clone().unwrap_or_else(|| "scenario".to_string()),
            assumptions: raw.assumptions.clone().unwrap_or_default(),
            managers,
            rounds,
            events,
            points,
            reference_powers,
        })
    }
}

fn resolve_power(raw: &RawPower, lib: &PresetLibrary, path: &str) -> Result<ResolvedPower> {
    if raw.preset.is_some() && raw.connection.is_some() {
        return Err(HarnessError::invalid(format!("{path}.connection"), "set either a preset or a connection, not both"));
    }
    let mut label = "custom".to_string();
    let mut base: Option<BalancedPowerModel> = None;
    let mut r_max = None;
    if let Some(name) = &raw.preset {
        let p = lib.power(name)?;
        label = name.clone();
        base = Some(BalancedPowerModel { k0: p.k0, alpha: p.alpha, p_setup_total: p.p_setup });
        r_max = Some(p.r_max);
    }
    if let Some(conn) = &raw.connection {
        let cc: CcAlgorithm =
            conn.cc.parse().map_err(|e: scbm_core::Error| HarnessError::invalid(format!("{path}.connection.cc"), e.to_string()))?;
        let mut subflows = Vec::with_capacity(conn.subflows.len());
        for (k, name) in conn.subflows.iter().enumerate() {
            subflows.push(lib.connection(name).map_err(|e| HarnessError::invalid(format!("{path}.connection.subflows[{k}]"), e.to_string()))?);
        }
        let profile = ConnectionProfile::new(subflows, cc, conn.alpha.or(raw.alpha).unwrap_or(2.0))
            .map_err(|e| HarnessError::invalid(format!("{path}.connection"), e.to_string()))?;
        r_max = Some(profile.subflows.iter().map(|s| s.r_max_mbps).sum());
        base = Some(balanced_k0(&profile).map_err(|e| HarnessError::invalid(format!("{path}.connection"), e.to_string()))?);
        label = format!("{cc}:{}", conn.subflows.join("+"));
    }
    let model = BalancedPowerModel {
        k0: raw
            .k0
            .or(base.map(|b| b.k0))
            .ok_or_else(|| HarnessError::invalid(format!("{path}.k0"), "missing; set k0, a preset or a connection"))?,
        alpha: raw.alpha.or(base.map(|b| b.alpha)).unwrap_or(2.0),
        p_setup_total: raw.p_setup.or(base.map(|b| b.p_setup_total)).unwrap_or(0.0),
    };
    model.validate().map_err(|e| HarnessError::invalid(path, e.to_string()))?;
    Ok(ResolvedPower { label, model, r_max })
}

/// Concrete instance, requested `q`, and the downtime-optimal round count when computed.
fn resolve_spec(
    raw: &RawSpec,
    power: &ResolvedPower,
    lib: &PresetLibrary,
    path: &str,
    mode: RoundMode,
) -> Result<(MigrationSpec, usize, Option<usize>)> {
    let field = |name: &str| format!("{path}.{name}");
    let workload = match &raw.workload {
        Some(name) => Some(lib.workload(name).map_err(|e| HarnessError::invalid(field("workload"), e.to_string()))?),
        None => None,
    };
    let m0 = raw
        .m0
        .or(workload.map(|w| w.m0))
        .ok_or_else(|| HarnessError::invalid(field("m0"), "missing; set m0 or a workload"))?;
    let r_hat = raw.r_hat.or(power.r_max).ok_or_else(|| {
        HarnessError::invalid(field("r_hat"), "missing; set r_hat or use a power model that carries a rate cap")
    })?;
    let given = [raw.dirty_rate.is_some(), raw.dirty_ratio.is_some(), raw.dirty_rate_trace.is_some()];
    if given.iter().filter(|g| **g).count() > 1 {
        return Err(HarnessError::invalid(field("dirty_rate"), "set only one of dirty_rate, dirty_ratio, dirty_rate_trace"));
    }
    let dirty_rate = if let Some(t) = &raw.dirty_rate_trace {
        DirtyRate::Trace(t.clone())
    } else if let Some(w) = raw.dirty_rate {
        DirtyRate::Constant(w)
    } else if let Some(r) = raw.dirty_ratio {
        if r.is_nan() || r < 0.0 {
            return Err(HarnessError::invalid(field("dirty_ratio"), format!("must be non-negative, got {r}")));
        }
        DirtyRate::Constant(r * r_hat)
    } else if let Some(w) = workload.and_then(|w| w.dirty_rate) {
        DirtyRate::Constant(w)
    } else {
        return Err(HarnessError::invalid(
            field("dirty_rate"),
            "missing; set dirty_rate or dirty_ratio (the workload has no fixed dirty rate)",
        ));
    };
    let q = raw.q.unwrap_or(1);
    if q == 0 {
        return Err(HarnessError::invalid(field("q"), "must be at least 1"));
    }
    let beta = required(raw.beta, field("beta"))?;
    let delta_mt = required(raw.delta_mt, field("delta_mt"))?;
    let delta_dt = required(raw.delta_dt, field("delta_dt"))?;
    let overheads = raw.overheads.unwrap_or_default();
    let build = |i_max: usize, q: usize| MigrationSpec {
        m0,
        dirty_rate: dirty_rate.clone(),
        i_max,
        q,
        s: if i_max == 0 { 0 } else { i_max / q },
        beta,
        delta_mt,
        delta_dt,
        r_hat,
        overheads,
    };
    let invalid = |name: &str| {
        let f = field(name);
        move |e: scbm_core::Error| HarnessError::invalid(f.clone(), e.to_string())
    };

    match mode {
        RoundMode::Fixed => {
            let i_max = raw.i_max.ok_or_else(|| HarnessError::invalid(field("i_max"), "missing; fixed rounds need i_max"))?;
            if i_max > 0 && i_max % q != 0 {
                return Err(HarnessError::invalid(
                    field("q"),
                    format!(
                        "q = {q} does not divide i_max = {i_max}; the pre-copy rounds must split into q clusters of equal size S = i_max / q"
                    ),
                ));
            }
            if i_max == 0 && q != 1 {
                return Err(HarnessError::invalid(field("q"), "with no pre-copy rounds q must be 1"));
            }
            let spec = build(i_max, q);
            spec.validate().map_err(invalid(""))?;
            Ok((spec, q, None))
        }
        RoundMode::Optimized | RoundMode::Search => {
            if raw.i_max.is_some() {
                return Err(HarnessError::invalid(field("i_max"), "only used with rounds.mode = \"fixed\""));
            }
            let probe = build(0, 1);
            probe.validate().map_err(invalid(""))?;
            let (spec, adj) = spec_at_optimized_imax(&probe, q).map_err(invalid("dirty_rate"))?;
            Ok((spec, q, Some(adj.optimized)))
        }
    }
}
