//! Migrate-or-not advice for a mobile device that can hand its workload to a fog
//! clone: execution times on both sides and the time/energy budgets a migration
//! has to fit into to pay off.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EnergyReport, Overheads};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevicePowerProfile {
    /// Power drawn while computing (W).
    pub p_com: f64,
    /// Power drawn while idle (W).
    pub p_idle: f64,
    /// Network power while receiving (W).
    pub p_rx: f64,
    /// Processing speed (Mb of workload per second).
    pub s_com: f64,
}

impl DevicePowerProfile {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("device compute power", self.p_com), ("device idle power", self.p_idle), ("device receive power", self.p_rx)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::OutOfDomain { what, requirement: ">= 0", value: v });
            }
        }
        if !(self.s_com > 0.0) {
            return Err(Error::OutOfDomain { what: "device compute speed", requirement: "> 0", value: self.s_com });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FogProfile {
    /// Processing speed of the clone (Mb/s).
    pub s_com_fog: f64,
    /// Fog-to-device download bandwidth (Mb/s).
    pub r_down: f64,
}

impl FogProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_com_fog > 0.0) {
            return Err(Error::OutOfDomain { what: "fog compute speed", requirement: "> 0", value: self.s_com_fog });
        }
        if !(self.r_down > 0.0) {
            return Err(Error::OutOfDomain { what: "download bandwidth", requirement: "> 0", value: self.r_down });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffloadScenario {
    /// Workload over VM size.
    pub gamma: f64,
    /// Size of the processed data sent back, relative to the VM size.
    pub t_ratio: f64,
}

impl OffloadScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::OutOfDomain { what: "workload ratio gamma", requirement: "> 0", value: self.gamma });
        }
        if !(self.t_ratio >= 0.0) {
            return Err(Error::OutOfDomain { what: "returned-data ratio", requirement: ">= 0", value: self.t_ratio });
        }
        Ok(())
    }
}

/// `γ·M0 / s_com`.
pub fn local_execution_time(dev: &DevicePowerProfile, scen: &OffloadScenario, m0: f64) -> f64 {
    scen.gamma * m0 / dev.s_com
}

/// Migration plus remote processing: `T_tot + γ·M0 / s_fog`.
pub fn remote_execution_time(fog: &FogProfile, scen: &OffloadScenario, m0: f64, t_tot: f64) -> f64 {
    t_tot + scen.gamma * m0 / fog.s_com_fog
}

/// A budget after the clamp at zero, with the unclamped value kept so a zero
/// budget can be told apart from a migration that never pays off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub value: f64,
    pub unclamped: f64,
    /// The unclamped value was negative, so no migration can pay off.
    pub never_beneficial: bool,
}

impl Budget {
    fn clamp(raw: f64) -> Self {
        Budget { value: raw.max(0.0), unclamped: raw, never_beneficial: raw < 0.0 }
    }
}

/// Longest memory-transfer time for which the migrated run still finishes first:
/// `max{0, γM0(1/s_mob − 1/s_fog) − overheads}`.
pub fn migration_time_budget(
    dev: &DevicePowerProfile,
    fog: &FogProfile,
    scen: &OffloadScenario,
    m0: f64,
    overheads: &Overheads,
) -> Budget {
    Budget::clamp(scen.gamma * m0 * (1.0 / dev.s_com - 1.0 / fog.s_com_fog) - overheads.sum())
}

/// Energy budget together with the terms it is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    pub budget: Budget,
    /// Energy of running the workload on the device.
    pub e_local: f64,
    /// Device idle energy while the clone computes.
    pub e_idle: f64,
    /// Device energy for receiving the results.
    pub e_rx: f64,
}

/// Largest migration energy that still saves energy overall:
/// `max{0, M0[(P_com/s_mob − P_idle/s_fog)γ − 𝒯·P_rx/R_D]}`.
pub fn migration_energy_budget(dev: &DevicePowerProfile, fog: &FogProfile, scen: &OffloadScenario, m0: f64) -> EnergyBudget {
    let e_local = dev.p_com * scen.gamma * m0 / dev.s_com;
    let e_idle = dev.p_idle * scen.gamma * m0 / fog.s_com_fog;
    let e_rx = dev.p_rx * scen.t_ratio * m0 / fog.r_down;
    EnergyBudget { budget: Budget::clamp(e_local - e_idle - e_rx), e_local, e_idle, e_rx }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MigrationDecision {
    pub time_ok: bool,
    pub energy_ok: bool,
}

pub fn should_migrate(report: &EnergyReport, time_budget: &Budget, energy_budget: &EnergyBudget) -> MigrationDecision {
    MigrationDecision {
        time_ok: report.t_mt <= time_budget.value,
        energy_ok: report.e_tot <= energy_budget.budget.value,
    }
}

/// Validated convenience wrapper computing both budgets.
pub fn budgets(
    dev: &DevicePowerProfile,
    fog: &FogProfile,
    scen: &OffloadScenario,
    m0: f64,
    overheads: &Overheads,
) -> Result<(Budget, EnergyBudget)> {
    dev.validate()?;
    fog.validate()?;
    scen.validate()?;
    if !(m0 > 0.0) {
        return Err(Error::OutOfDomain { what: "VM size", requirement: "> 0", value: m0 });
    }
    Ok((migration_time_budget(dev, fog, scen, m0, overheads), migration_energy_budget(dev, fog, scen, m0)))
}
