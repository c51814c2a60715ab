//! Built-in named presets. The data lives in the `presets/` directory and is
//! compiled in, so the binary needs no files at run time.

use std::collections::BTreeMap;

use scbm_core::power::SubflowProfile;
use serde::Deserialize;

use crate::error::{HarnessError, Result};
use crate::scenario::parse_toml;

const CONNECTIONS: &str = include_str!("../presets/connections.toml");
const POWER: &str = include_str!("../presets/power.toml");
const WORKLOADS: &str = include_str!("../presets/workloads.toml");

const SCENARIOS: &[(&str, &str)] = &[
    ("synthetic-dt-103ms", include_str!("../presets/scenarios/synthetic-dt-103ms.toml")),
    ("synthetic-dt-542us", include_str!("../presets/scenarios/synthetic-dt-542us.toml")),
    ("synthetic-dt-40us", include_str!("../presets/scenarios/synthetic-dt-40us.toml")),
    ("synthetic-deadlines", include_str!("../presets/scenarios/synthetic-deadlines.toml")),
    ("workloads-published", include_str!("../presets/scenarios/workloads-published.toml")),
    ("workloads-relaxed", include_str!("../presets/scenarios/workloads-relaxed.toml")),
    ("connections", include_str!("../presets/scenarios/connections.toml")),
    ("dirty-rate-jump", include_str!("../presets/scenarios/dirty-rate-jump.toml")),
    ("k0-jump", include_str!("../presets/scenarios/k0-jump.toml")),
    ("q-chain", include_str!("../presets/scenarios/q-chain.toml")),
];

/// A connection summarized by its balanced power model.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerPreset {
    pub k0: f64,
    pub alpha: f64,
    /// Aggregate rate cap (Mb/s).
    pub r_max: f64,
    /// Setup power (W).
    pub p_setup: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadPreset {
    /// VM image size (Mb).
    pub m0: f64,
    /// Average dirty rate (Mb/s); absent when the workload lets it be set freely.
    pub dirty_rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PresetLibrary {
    pub connections: BTreeMap<String, SubflowProfile>,
    pub power: BTreeMap<String, PowerPreset>,
    pub workloads: BTreeMap<String, WorkloadPreset>,
}

impl PresetLibrary {
    pub fn builtin() -> Result<Self> {
        let lib = PresetLibrary {
            connections: parse_toml("presets/connections.toml", CONNECTIONS)?,
            power: parse_toml("presets/power.toml", POWER)?,
            workloads: parse_toml("presets/workloads.toml", WORKLOADS)?,
        };
        for (name, w) in &lib.workloads {
            if w.m0.is_nan() || w.m0 <= 0.0 || w.dirty_rate.is_some_and(|r| r.is_nan() || r <= 0.0) {
                return Err(HarnessError::invalid(format!("workloads.{name}"), "sizes and dirty rates must be positive"));
            }
        }
        for (name, p) in &lib.power {
            if !(p.k0 > 0.0 && p.alpha > 1.0 && p.r_max > 0.0 && p.p_setup >= 0.0) {
                return Err(HarnessError::invalid(format!("power.{name}"), "needs k0 > 0, alpha > 1, r_max > 0, p_setup >= 0"));
            }
        }
        Ok(lib)
    }

    pub fn connection(&self, name: &str) -> Result<SubflowProfile> {
        lookup(&self.connections, "connection", name).copied()
    }

    pub fn power(&self, name: &str) -> Result<PowerPreset> {
        lookup(&self.power, "power", name).copied()
    }

    pub fn workload(&self, name: &str) -> Result<WorkloadPreset> {
        lookup(&self.workloads, "workload", name).copied()
    }
}

fn lookup<'a, T>(map: &'a BTreeMap<String, T>, kind: &'static str, name: &str) -> Result<&'a T> {
    map.get(name).ok_or_else(|| HarnessError::UnknownPreset {
        kind,
        name: name.to_string(),
        available: map.keys().cloned().collect::<Vec<_>>().join(", "),
    })
}

/// Source text of a built-in scenario.
pub fn scenario_source(name: &str) -> Result<&'static str> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s).ok_or_else(|| HarnessError::UnknownPreset {
        kind: "scenario",
        name: name.to_string(),
        available: scenario_names().join(", "),
    })
}

pub fn scenario_names() -> Vec<&'static str> {
    SCENARIOS.iter().map(|(n, _)| *n).collect()
}
