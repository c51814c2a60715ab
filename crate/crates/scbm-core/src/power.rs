//! Dynamic power of a multipath connection as a function of its subflow rates.
//!
//! Every congestion-control rule below is a pair (per-ACK increment `I_c`, per-loss
//! decrement `D_c`) on a congestion window counted in segments, `w_j = R_j·RTT_j/MSS`.
//! In congestion avoidance the window is stationary, so `I_c(j) = Pr_loss(j)·D_c(j)`,
//! and the loss probability falls as a power of the radiated power,
//! `Pr_loss(j) = Ω_j·P_j^{-2/α}`. Solving for `P_j` gives
//! `P_j = (Ω_j·D_c(j)/I_c(j))^{α/2}`, which for every rule factors into
//! `P = A·Σ_j τ_j·R_j^c` with a balanced form `P = K0·R^α`.
//! The exponent `2/α` in the loss law is what makes the per-subflow form and the
//! balanced monomial share the same `R^α` growth.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Default maximum segment size (Mb).
pub const DEFAULT_MSS_MB: f64 = 8e-3;

/// One wireless interface carrying a subflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubflowProfile {
    /// Round-trip time (s).
    pub rtt_s: f64,
    /// Noise-power-to-coding-gain ratio.
    pub omega: f64,
    /// Maximum segment size (Mb).
    #[serde(default = "default_mss")]
    pub mss_mb: f64,
    /// Subflow rate cap (Mb/s).
    pub r_max_mbps: f64,
    /// Setup power of the interface (W).
    pub p_setup_w: f64,
}

fn default_mss() -> f64 {
    DEFAULT_MSS_MB
}

impl SubflowProfile {
    fn validate(&self, index: usize) -> Result<()> {
        let fields = [
            ("rtt", self.rtt_s),
            ("omega", self.omega),
            ("mss", self.mss_mb),
            ("r_max", self.r_max_mbps),
            ("p_setup", self.p_setup_w),
        ];
        for (name, v) in fields {
            if !(v > 0.0) {
                return Err(Error::InvalidProfile(format!("subflow {index}: {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Window in segments for a subflow rate.
    fn window(&self, rate: f64) -> f64 {
        rate * self.rtt_s / self.mss_mb
    }
}

/// Congestion-control rule of the connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CcAlgorithm {
    #[serde(rename = "ewtcp")]
    Ewtcp,
    #[serde(rename = "semicoupled")]
    Semicoupled,
    #[serde(rename = "max")]
    MaxMptcp,
    #[serde(rename = "balia")]
    Balia,
    #[serde(rename = "newreno")]
    NewReno,
}

impl CcAlgorithm {
    pub const ALL: [CcAlgorithm; 5] =
        [CcAlgorithm::Ewtcp, CcAlgorithm::Semicoupled, CcAlgorithm::MaxMptcp, CcAlgorithm::Balia, CcAlgorithm::NewReno];

    pub fn id(&self) -> &'static str {
        match self {
            CcAlgorithm::Ewtcp => "ewtcp",
            CcAlgorithm::Semicoupled => "semicoupled",
            CcAlgorithm::MaxMptcp => "max",
            CcAlgorithm::Balia => "balia",
            CcAlgorithm::NewReno => "newreno",
        }
    }

    /// Increment constant `a` for `n` subflows.
    pub fn a_const(&self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            CcAlgorithm::Ewtcp | CcAlgorithm::NewReno => 1.0,
            CcAlgorithm::Semicoupled => n,
            CcAlgorithm::MaxMptcp | CcAlgorithm::Balia => n * n,
        }
    }
}

impl fmt::Display for CcAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for CcAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CcAlgorithm::ALL
            .into_iter()
            .find(|cc| cc.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let valid: Vec<&str> = CcAlgorithm::ALL.iter().map(|c| c.id()).collect();
                Error::InvalidProfile(format!(
                    "unknown congestion-control id `{s}`; valid ids are: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// A multipath (or single-path) connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionProfile {
    pub subflows: Vec<SubflowProfile>,
    pub cc: CcAlgorithm,
    /// Power exponent; must be at least one.
    pub alpha: f64,
    pub a_const: f64,
}

impl ConnectionProfile {
    /// Build a profile, taking `a` from the rule and the number of subflows.
    pub fn new(subflows: Vec<SubflowProfile>, cc: CcAlgorithm, alpha: f64) -> Result<Self> {
        let a_const = cc.a_const(subflows.len());
        let conn = ConnectionProfile { subflows, cc, alpha, a_const };
        conn.validate()?;
        Ok(conn)
    }

    pub fn validate(&self) -> Result<()> {
        if self.subflows.is_empty() {
            return Err(Error::InvalidProfile("a connection needs at least one subflow".into()));
        }
        if self.cc == CcAlgorithm::NewReno && self.subflows.len() != 1 {
            return Err(Error::InvalidProfile(format!(
                "single-path newreno needs exactly one subflow, got {}",
                self.subflows.len()
            )));
        }
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidProfile(format!("alpha must be >= 1, got {}", self.alpha)));
        }
        let expected = self.cc.a_const(self.subflows.len());
        if (self.a_const - expected).abs() > 1e-12 * expected {
            return Err(Error::InvalidProfile(format!(
                "{} with {} subflows uses a = {expected}, got {}",
                self.cc,
                self.subflows.len(),
                self.a_const
            )));
        }
        for (i, s) in self.subflows.iter().enumerate() {
            s.validate(i)?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.subflows.len()
    }

    /// Sum of the interface setup powers (W).
    pub fn setup_power(&self) -> f64 {
        self.subflows.iter().map(|s| s.p_setup_w).sum()
    }
}

/// `P = K0·R^α` with the setup power carried alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalancedPowerModel {
    pub k0: f64,
    pub alpha: f64,
    /// Aggregated setup power (W); setup energy is this times the migration-time budget.
    pub p_setup_total: f64,
}

impl BalancedPowerModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.k0 > 0.0 && self.k0.is_finite()) {
            return Err(Error::InvalidProfile(format!("K0 must be positive, got {}", self.k0)));
        }
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidProfile(format!("alpha must exceed 1, got {}", self.alpha)));
        }
        if !(self.p_setup_total >= 0.0) {
            return Err(Error::InvalidProfile(format!("setup power must be >= 0, got {}", self.p_setup_total)));
        }
        Ok(())
    }
}

fn check_rates(conn: &ConnectionProfile, rates: &[f64]) -> Result<()> {
    conn.validate()?;
    if rates.len() != conn.n() {
        return Err(Error::RateCountMismatch { expected: conn.n(), got: rates.len() });
    }
    for (i, (r, s)) in rates.iter().zip(&conn.subflows).enumerate() {
        if !(*r >= 0.0) {
            return Err(Error::NonPositiveRate { index: i, value: *r });
        }
        if *r > s.r_max_mbps * (1.0 + 1e-12) {
            return Err(Error::RateAboveCap { index: i, rate: *r, cap: s.r_max_mbps });
        }
    }
    Ok(())
}

/// Per-subflow dynamic powers (W) at the given subflow rates.
pub fn subflow_powers(conn: &ConnectionProfile, rates: &[f64]) -> Result<Vec<f64>> {
    check_rates(conn, rates)?;
    let alpha = conn.alpha;
    let a = conn.a_const;
    let half = alpha / 2.0;
    let subs = &conn.subflows;
    let total: f64 = rates.iter().sum();
    if total == 0.0 {
        return Ok(vec![0.0; rates.len()]);
    }
    let powers = match conn.cc {
        CcAlgorithm::Ewtcp | CcAlgorithm::NewReno => subs
            .iter()
            .zip(rates)
            .map(|(s, r)| (s.rtt_s * s.omega.sqrt() / (s.mss_mb * (2.0 * a).sqrt())).powf(alpha) * r.powf(alpha))
            .collect(),
        CcAlgorithm::Semicoupled => {
            let coupling = subs.iter().zip(rates).map(|(s, r)| s.window(*r)).sum::<f64>() / (2.0 * a);
            let scale = coupling.powf(half);
            subs.iter()
                .zip(rates)
                .map(|(s, r)| scale * (s.rtt_s * s.omega / s.mss_mb).powf(half) * r.powf(half))
                .collect()
        }
        CcAlgorithm::MaxMptcp => {
            let seg_rate: f64 = subs.iter().zip(rates).map(|(s, r)| r / s.mss_mb).sum();
            let peak = subs.iter().zip(rates).map(|(s, r)| r / (s.mss_mb * s.rtt_s)).fold(0.0, f64::max);
            let coupled = (seg_rate * seg_rate / (2.0 * a * peak)).powf(half);
            subs.iter()
                .zip(rates)
                .map(|(s, r)| {
                    if *r == 0.0 {
                        return 0.0;
                    }
                    if max_uses_own_window(conn, rates, s, *r) {
                        (s.rtt_s * s.omega.sqrt() / (s.mss_mb * (2.0 * a).sqrt())).powf(alpha) * r.powf(alpha)
                    } else {
                        coupled * (s.rtt_s * s.omega / s.mss_mb).powf(half) * r.powf(half)
                    }
                })
                .collect()
        }
        CcAlgorithm::Balia => {
            let seg_rate: f64 = subs.iter().zip(rates).map(|(s, r)| r / s.mss_mb).sum();
            let prefactor = (seg_rate * seg_rate / (2.0 * a)).powf(half);
            let r_peak = rates.iter().copied().fold(0.0, f64::max);
            subs.iter()
                .zip(rates)
                .map(|(s, r)| {
                    if *r == 0.0 {
                        return 0.0;
                    }
                    let gamma = r_peak / r;
                    prefactor * (s.rtt_s * s.rtt_s * s.omega * balia_decrease(gamma) / balia_increase(gamma)).powf(half)
                })
                .collect()
        }
    };
    Ok(powers)
}

/// Total dynamic power (W).
pub fn dynamic_power(conn: &ConnectionProfile, rates: &[f64]) -> Result<f64> {
    Ok(subflow_powers(conn, rates)?.iter().sum())
}

fn balia_increase(gamma: f64) -> f64 {
    (1.0 + gamma) / 2.0 * (4.0 + gamma) / 5.0
}

fn balia_decrease(gamma: f64) -> f64 {
    gamma.min(1.5)
}

/// True when the uncoupled branch `1/w_j` of the Max rule is the smaller one.
fn max_uses_own_window(conn: &ConnectionProfile, rates: &[f64], s: &SubflowProfile, r: f64) -> bool {
    let own = 1.0 / s.window(r);
    own <= max_coupled_term(conn, rates)
}

/// `max_k(w_k/RTT_k²) / (Σ_k w_k/RTT_k)²` with windows in segments.
fn max_coupled_term(conn: &ConnectionProfile, rates: &[f64]) -> f64 {
    let mut peak: f64 = 0.0;
    let mut sum = 0.0;
    for (s, r) in conn.subflows.iter().zip(rates) {
        let w = s.window(*r);
        peak = peak.max(w / (s.rtt_s * s.rtt_s));
        sum += w / s.rtt_s;
    }
    peak / (sum * sum)
}

/// Per-ACK window increment (segments) of subflow `j`.
pub fn window_increment(conn: &ConnectionProfile, rates: &[f64], j: usize) -> f64 {
    let s = &conn.subflows[j];
    let a = conn.a_const;
    match conn.cc {
        CcAlgorithm::Ewtcp | CcAlgorithm::NewReno => a / s.window(rates[j]),
        CcAlgorithm::Semicoupled => {
            let total: f64 = conn.subflows.iter().zip(rates).map(|(s, r)| s.window(*r)).sum();
            a / total
        }
        CcAlgorithm::MaxMptcp => a * (1.0 / s.window(rates[j])).min(max_coupled_term(conn, rates)),
        CcAlgorithm::Balia => {
            // rates expressed in segments per second
            let x: Vec<f64> = conn.subflows.iter().zip(rates).map(|(s, r)| r / s.mss_mb).collect();
            let big_x: f64 = x.iter().sum();
            let gamma = rates.iter().copied().fold(0.0, f64::max) / rates[j];
            a * x[j] / (s.rtt_s * big_x * big_x) * balia_increase(gamma)
        }
    }
}

/// Per-loss window decrement (segments) of subflow `j`.
pub fn window_decrement(conn: &ConnectionProfile, rates: &[f64], j: usize) -> f64 {
    let half_window = conn.subflows[j].window(rates[j]) / 2.0;
    match conn.cc {
        CcAlgorithm::Balia => {
            let gamma = rates.iter().copied().fold(0.0, f64::max) / rates[j];
            half_window * balia_decrease(gamma)
        }
        _ => half_window,
    }
}

/// `K0` of the balanced monomial for a connection whose subflows share the load equally.
pub fn balanced_k0(conn: &ConnectionProfile) -> Result<BalancedPowerModel> {
    conn.validate()?;
    let alpha = conn.alpha;
    let half = alpha / 2.0;
    let a = conn.a_const;
    let n = conn.n() as f64;
    let subs = &conn.subflows;
    // Σ_k 1/MSS_k: segments per Mb summed over subflows (N/MSS for a common size)
    let inv_mss: f64 = subs.iter().map(|s| 1.0 / s.mss_mb).sum();
    let k0 = match conn.cc {
        CcAlgorithm::Ewtcp => {
            (1.0 / ((2.0 * a).sqrt() * n)).powf(alpha)
                * subs.iter().map(|s| (s.rtt_s * s.omega.sqrt() / s.mss_mb).powf(alpha)).sum::<f64>()
        }
        CcAlgorithm::Semicoupled => {
            let window_per_rate: f64 = subs.iter().map(|s| s.rtt_s / s.mss_mb).sum();
            (window_per_rate / (2.0 * a)).powf(half)
                * n.powf(-alpha)
                * subs.iter().map(|s| (s.rtt_s * s.omega / s.mss_mb).powf(half)).sum::<f64>()
        }
        CcAlgorithm::MaxMptcp => {
            let peak = subs.iter().map(|s| 1.0 / (s.mss_mb * s.rtt_s)).fold(0.0, f64::max);
            (inv_mss * inv_mss / (2.0 * a * peak)).powf(half)
                * n.powf(-alpha)
                * subs.iter().map(|s| (s.rtt_s * s.omega / s.mss_mb).powf(half)).sum::<f64>()
        }
        CcAlgorithm::Balia => {
            (inv_mss * inv_mss / (2.0 * a * n * n)).powf(half)
                * subs.iter().map(|s| (s.rtt_s * s.omega.sqrt()).powf(alpha)).sum::<f64>()
        }
        CcAlgorithm::NewReno => {
            let s = &subs[0];
            (s.rtt_s / s.mss_mb * (s.omega / 2.0).sqrt()).powf(alpha)
        }
    };
    Ok(BalancedPowerModel { k0, alpha, p_setup_total: conn.setup_power() })
}

/// `K0·R^α`.
pub fn balanced_power(model: &BalancedPowerModel, r_total: f64) -> Result<f64> {
    if !(r_total >= 0.0) {
        return Err(Error::NonPositiveRate { index: 0, value: r_total });
    }
    Ok(model.k0 * r_total.powf(model.alpha))
}

/// `Ω·P^{-1/α}`: segment-loss probability at dynamic power `p_dyn`.
pub fn loss_probability(sub: &SubflowProfile, p_dyn: f64, alpha: f64) -> Result<f64> {
    if !(p_dyn > 0.0) {
        return Err(Error::OutOfDomain { what: "subflow dynamic power", requirement: "> 0", value: p_dyn });
    }
    Ok(sub.omega * p_dyn.powf(-1.0 / alpha))
}

/// `I_c(j) - Pr_loss(j)·D_c(j)` for every subflow: zero when the windows are
/// stationary at the given powers.
pub fn steady_state_residual(conn: &ConnectionProfile, rates: &[f64], p_dyn: &[f64]) -> Result<Vec<f64>> {
    check_rates(conn, rates)?;
    if p_dyn.len() != conn.n() {
        return Err(Error::RateCountMismatch { expected: conn.n(), got: p_dyn.len() });
    }
    if let Some(index) = rates.iter().position(|r| *r <= 0.0) {
        return Err(Error::NonPositiveRate { index, value: rates[index] });
    }
    (0..conn.n())
        .map(|j| {
            // loss law exponent is 2/α, see the module docs
            let loss = loss_probability(&conn.subflows[j], p_dyn[j], conn.alpha / 2.0)?;
            Ok(window_increment(conn, rates, j) - loss * window_decrement(conn, rates, j))
        })
        .collect()
}

/// Recover α from the total power measured at the cap, the setup power and K0.
pub fn profile_alpha(p_tot_at_rhat: f64, p_setup_total: f64, k0: f64, r_hat: f64) -> Result<f64> {
    let p_dyn = p_tot_at_rhat - p_setup_total;
    if !(p_dyn > 0.0) {
        return Err(Error::OutOfDomain { what: "dynamic power at the cap", requirement: "> 0", value: p_dyn });
    }
    if !(r_hat > 1.0) {
        return Err(Error::OutOfDomain { what: "bandwidth cap for exponent profiling", requirement: "> 1 Mb/s", value: r_hat });
    }
    if !(k0 > 0.0) {
        return Err(Error::OutOfDomain { what: "K0", requirement: "> 0", value: k0 });
    }
    let alpha = (p_dyn / k0).ln() / r_hat.ln();
    if !(alpha > 1.0 + 1e-12) {
        return Err(Error::OutOfDomain { what: "profiled exponent", requirement: "> 1", value: alpha });
    }
    Ok(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wifi() -> SubflowProfile {
        SubflowProfile { rtt_s: 0.025, omega: 1e-2, mss_mb: 8e-3, r_max_mbps: 54.0, p_setup_w: 0.15946 }
    }

    fn lte() -> SubflowProfile {
        SubflowProfile { rtt_s: 0.035, omega: 5.1e-3, mss_mb: 8e-3, r_max_mbps: 100.0, p_setup_w: 0.13783 }
    }

    #[test]
    fn zero_rates_draw_no_power() {
        for cc in [CcAlgorithm::Ewtcp, CcAlgorithm::Semicoupled, CcAlgorithm::MaxMptcp, CcAlgorithm::Balia] {
            let conn = ConnectionProfile::new(vec![wifi(), lte()], cc, 2.0).unwrap();
            assert_eq!(dynamic_power(&conn, &[0.0, 0.0]).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_wifi_subflow_power() {
        // ((RTT/MSS)·sqrt(Ω/2))^2 · R^2 with RTT/MSS = 3.125 and Ω/2 = 5e-3
        let expected = 3.125f64.powi(2) * 5e-3 * 25.0;
        for cc in [CcAlgorithm::Ewtcp, CcAlgorithm::NewReno] {
            let conn = ConnectionProfile::new(vec![wifi()], cc, 2.0).unwrap();
            let p = dynamic_power(&conn, &[5.0]).unwrap();
            assert!((p - expected).abs() < 1e-12, "{cc}: {p}");
        }
    }

    #[test]
    fn rate_above_cap_is_rejected() {
        let conn = ConnectionProfile::new(vec![wifi()], CcAlgorithm::NewReno, 2.0).unwrap();
        assert!(matches!(dynamic_power(&conn, &[60.0]), Err(Error::RateAboveCap { .. })));
    }

    #[test]
    fn ewtcp_dual_radio_k0() {
        let conn = ConnectionProfile::new(vec![lte(), wifi()], CcAlgorithm::Ewtcp, 2.0).unwrap();
        let m = balanced_k0(&conn).unwrap();
        assert!((m.k0 - 2.44e-2).abs() < 1e-4, "{}", m.k0);
        assert!((m.p_setup_total - (0.15946 + 0.13783)).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_k0_scaling() {
        let one = ConnectionProfile::new(vec![wifi()], CcAlgorithm::Ewtcp, 2.0).unwrap();
        let k1 = balanced_k0(&one).unwrap().k0;
        for n in 2..=4 {
            let conn = ConnectionProfile::new(vec![wifi(); n], CcAlgorithm::Ewtcp, 2.0).unwrap();
            let k = balanced_k0(&conn).unwrap().k0;
            assert!((k - k1 / n as f64).abs() < 1e-15);
            let linear = ConnectionProfile::new(vec![wifi(); n], CcAlgorithm::Ewtcp, 1.0).unwrap();
            let k_lin1 = balanced_k0(&ConnectionProfile::new(vec![wifi()], CcAlgorithm::Ewtcp, 1.0).unwrap()).unwrap().k0;
            assert!((balanced_k0(&linear).unwrap().k0 - k_lin1).abs() < 1e-15);
        }
    }

    #[test]
    fn monomial() {
        let m = BalancedPowerModel { k0: 2.5e-2, alpha: 2.0, p_setup_total: 0.0 };
        assert_eq!(balanced_power(&m, 0.0).unwrap(), 0.0);
        assert_eq!(balanced_power(&m, 1.0).unwrap(), 2.5e-2);
        assert!((balanced_power(&m, 18.0).unwrap() - 8.1).abs() < 1e-12);
    }

    #[test]
    fn loss_law() {
        let s = wifi();
        assert!((loss_probability(&s, 1.0, 2.0).unwrap() - 0.01).abs() < 1e-15);
        assert!((loss_probability(&s, 4.0, 2.0).unwrap() - 5e-3).abs() < 1e-15);
        let t = SubflowProfile { omega: 1e-4, ..s };
        assert!((loss_probability(&t, 0.01, 2.0).unwrap() - 1e-3).abs() < 1e-15);
        assert!(loss_probability(&s, 0.0, 2.0).is_err());
    }

    #[test]
    fn residual_rejects_empty_window() {
        let conn = ConnectionProfile::new(vec![wifi()], CcAlgorithm::Ewtcp, 2.0).unwrap();
        assert!(steady_state_residual(&conn, &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn exponent_roundtrip() {
        let a = profile_alpha(8.1, 0.0, 0.025, 18.0).unwrap();
        assert!((a - 2.0).abs() < 1e-12);
        let a = profile_alpha(0.05 * 9.9f64.powi(2) + 0.3, 0.3, 0.05, 9.9).unwrap();
        assert!((a - 2.0).abs() < 1e-12);
        assert!(profile_alpha(0.025 * 18.0, 0.0, 0.025, 18.0).is_err());
        assert!(profile_alpha(8.1, 0.0, 0.025, 1.0).is_err());
        assert!(profile_alpha(0.1, 0.2, 0.025, 18.0).is_err());
    }

    #[test]
    fn unknown_cc_lists_valid_ids() {
        let err = "cubic".parse::<CcAlgorithm>().unwrap_err().to_string();
        for id in ["ewtcp", "semicoupled", "max", "balia", "newreno"] {
            assert!(err.contains(id));
        }
        assert_eq!("Balia".parse::<CcAlgorithm>().unwrap(), CcAlgorithm::Balia);
    }
}
