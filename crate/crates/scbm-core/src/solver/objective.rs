//! Log-rate formulation: energy, deadlines, Lagrangian and its closed-form gradients.
//!
//! Free log-rates are ordered `[R̃_0, R̃_1, R̃_{S+1}, …, R̃_{(Q-1)S+1}, R̃_{I+1}]`
//! (just `[R̃_0, R̃_1]` without pre-copy rounds). Multipliers are ordered
//! `[λ_1, λ_2, λ_30, λ_31, λ_3(S+1), …]`: migration time, downtime, then one speed-up
//! bound per constrained rate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{clustered_totals_log, MigrationSpec};
use crate::power::BalancedPowerModel;
use crate::solver::SolverState;

/// Energy and timing at a log-rate vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub e_tot: f64,
    pub e_dyn: f64,
    pub t_mt: f64,
    pub t_dt: f64,
}

fn check_len(spec: &MigrationSpec, r_log: &[f64]) -> Result<()> {
    let expected = spec.free_rate_count();
    if r_log.len() != expected {
        return Err(Error::RateCountMismatch { expected, got: r_log.len() });
    }
    Ok(())
}

pub fn objective_log(spec: &MigrationSpec, power: &BalancedPowerModel, r_log: &[f64]) -> Result<Objective> {
    check_len(spec, r_log)?;
    let c = clustered_totals_log(spec, r_log, power.alpha);
    let e_dyn = power.k0 * c.e_dyn_per_k0;
    Ok(Objective { e_tot: power.p_setup_total * spec.delta_mt + e_dyn, e_dyn, t_mt: c.t_mt, t_dt: c.t_dt })
}

/// Normalized constraint values `[φ_1, φ_2, φ_30, φ_31, …]`.
pub fn constraint_values(spec: &MigrationSpec, obj: &Objective, r_log: &[f64]) -> Vec<f64> {
    let bw = spec.beta * spec.dirty_rate.max();
    let mut phi = vec![obj.t_mt / spec.delta_mt - 1.0, obj.t_dt / spec.delta_dt - 1.0];
    phi.extend(spec.speedup_constrained().map(|k| bw * (-r_log[k]).exp() - 1.0));
    phi
}

pub fn lagrangian(spec: &MigrationSpec, power: &BalancedPowerModel, state: &SolverState) -> Result<f64> {
    let obj = objective_log(spec, power, &state.r_log)?;
    let phi = constraint_values(spec, &obj, &state.r_log);
    if state.lambda.len() != phi.len() {
        return Err(Error::RateCountMismatch { expected: phi.len(), got: state.lambda.len() });
    }
    Ok(obj.e_tot + state.lambda.iter().zip(&phi).map(|(l, p)| l * p).sum::<f64>())
}

/// Gradient of the Lagrangian with respect to the log-rates and to the multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
}

/// Per-cluster partial sums shared by the energy and migration-time derivatives.
struct ClusterTerms {
    /// Time spent in cluster `j`.
    time: f64,
    /// Energy spent in cluster `j`.
    energy: f64,
    /// Derivative of the cluster time with respect to its own log-rate.
    d_time: f64,
    /// Derivative of the cluster energy with respect to its own log-rate.
    d_energy: f64,
}

/// Closed-form gradients. Every round time is `M0·Γ_i·exp(-(sum of the log-rates of
/// rounds 0..=i))`, so a log-rate shared by a whole cluster scales each of its rounds
/// by `e^{-l·y}` and every later round by `e^{-S·y}`.
pub fn gradients(spec: &MigrationSpec, power: &BalancedPowerModel, state: &SolverState) -> Result<Gradients> {
    let x = &state.r_log;
    check_len(spec, x)?;
    let n = x.len();
    let alpha = power.alpha;
    let k0 = power.k0;
    let lg = spec.log_dirty_products();
    let ln_m0 = spec.m0.ln();
    let s = spec.s as f64;
    let q = if spec.i_max == 0 { 0 } else { spec.q };

    let x0 = x[0];
    let t0 = (ln_m0 - x0).exp();
    let e0 = k0 * (ln_m0 + (alpha - 1.0) * x0).exp();

    let mut clusters = Vec::with_capacity(q);
    let mut ln_prefix = ln_m0 - x0;
    for j in 0..q {
        let y = x[1 + j];
        let (mut a_sum, mut b_sum) = (0.0, 0.0);
        for l in 1..=spec.s {
            let v = (lg[j * spec.s + l] - l as f64 * y).exp();
            a_sum += v;
            b_sum += l as f64 * v;
        }
        let pre = ln_prefix.exp();
        let ey = k0 * (alpha * y).exp();
        clusters.push(ClusterTerms {
            time: pre * a_sum,
            energy: ey * pre * a_sum,
            d_time: -pre * b_sum,
            d_energy: ey * pre * (alpha * a_sum - b_sum),
        });
        ln_prefix -= s * y;
    }
    let z = x[n - 1];
    let t_last = (ln_prefix + lg[spec.i_max + 1] - z).exp();
    let e_last = k0 * (alpha * z).exp() * t_last;
    let t_mt = t0 + clusters.iter().map(|c| c.time).sum::<f64>() + t_last;
    let t_dt = t_last;
    let e_dyn = e0 + clusters.iter().map(|c| c.energy).sum::<f64>() + e_last;

    let mut d_e = vec![0.0; n];
    let mut d_tmt = vec![0.0; n];
    let mut d_tdt = vec![0.0; n];

    d_e[0] = (alpha - 1.0) * e0 - (e_dyn - e0);
    d_tmt[0] = -t_mt;
    d_tdt[0] = -t_dt;

    // suffix sums over the clusters after m plus the stop-and-copy round
    let mut later_time = t_last;
    let mut later_energy = e_last;
    for m in (0..q).rev() {
        let c = &clusters[m];
        d_e[1 + m] = c.d_energy - s * later_energy;
        d_tmt[1 + m] = c.d_time - s * later_time;
        d_tdt[1 + m] = -s * t_dt;
        later_time += c.time;
        later_energy += c.energy;
    }
    d_e[n - 1] = (alpha - 1.0) * e_last;
    d_tmt[n - 1] = -t_last;
    d_tdt[n - 1] = -t_dt;

    let lam = &state.lambda;
    if lam.len() != spec.multiplier_count() {
        return Err(Error::RateCountMismatch { expected: spec.multiplier_count(), got: lam.len() });
    }
    let bw = spec.beta * spec.dirty_rate.max();
    let mut primal: Vec<f64> = (0..n)
        .map(|i| d_e[i] + lam[0] * d_tmt[i] / spec.delta_mt + lam[1] * d_tdt[i] / spec.delta_dt)
        .collect();
    for (slot, k) in spec.speedup_constrained().enumerate() {
        primal[k] -= lam[2 + slot] * bw * (-x[k]).exp();
    }

    let obj = Objective { e_tot: e_dyn + power.p_setup_total * spec.delta_mt, e_dyn, t_mt, t_dt };
    let dual = constraint_values(spec, &obj, x);
    Ok(Gradients { primal, dual })
}

/// Second-order data of the dynamic energy and of the two round-time sums, built
/// from the per-round monomials `exp(c_i + a_i·x)`.
pub(crate) struct Curvature {
    pub e_dyn: f64,
    pub grad_e: DVector<f64>,
    pub hess_e: DMatrix<f64>,
    pub t_mt: f64,
    pub grad_t: DVector<f64>,
    pub hess_t: DMatrix<f64>,
    pub t_dt: f64,
    pub grad_tdt: DVector<f64>,
}

pub(crate) fn curvature(spec: &MigrationSpec, power: &BalancedPowerModel, x: &[f64]) -> Curvature {
    let n = x.len();
    let lg = spec.log_dirty_products();
    let ln_m0 = spec.m0.ln();
    let mut out = Curvature {
        e_dyn: 0.0,
        grad_e: DVector::zeros(n),
        hess_e: DMatrix::zeros(n, n),
        t_mt: 0.0,
        grad_t: DVector::zeros(n),
        hess_t: DMatrix::zeros(n, n),
        t_dt: 0.0,
        grad_tdt: DVector::zeros(n),
    };
    let mut a = DVector::zeros(n);
    for (i, &lg_i) in lg.iter().enumerate().take(spec.i_max + 2) {
        let own = spec.free_index_of_round(i);
        a[own] -= 1.0;
        if lg_i == f64::NEG_INFINITY {
            continue;
        }
        let t = (ln_m0 + lg_i + a.dot(&DVector::from_column_slice(x))).exp();
        out.t_mt += t;
        out.grad_t += &a * t;
        out.hess_t += &a * a.transpose() * t;
        let mut b = a.clone();
        b[own] += power.alpha;
        let e = power.k0 * (power.alpha * x[own]).exp() * t;
        out.e_dyn += e;
        out.grad_e += &b * e;
        out.hess_e += &b * b.transpose() * e;
        if i == spec.i_max + 1 {
            out.t_dt = t;
            out.grad_tdt = &a * t;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{SolverOptions, SolverState};

    fn setup() -> (MigrationSpec, BalancedPowerModel, Vec<f64>) {
        let spec = MigrationSpec::new(100.0, 3.0, 6, 3, 1.5, 60.0, 0.2, 20.0).unwrap();
        let power = BalancedPowerModel { k0: 0.04, alpha: 2.3, p_setup_total: 0.3 };
        (spec, power, vec![1.9, 2.2, 2.5, 2.7, 2.95])
    }

    #[test]
    fn curvature_first_order_terms_match_closed_form() {
        let (spec, power, x) = setup();
        let c = curvature(&spec, &power, &x);
        let mut st = SolverState::initial(&spec, &SolverOptions::default());
        st.r_log = x.clone();
        let g = gradients(&spec, &power, &st).unwrap();
        let obj = objective_log(&spec, &power, &x).unwrap();
        assert!((c.e_dyn - obj.e_dyn).abs() < 1e-12 * obj.e_dyn);
        assert!((c.t_mt - obj.t_mt).abs() < 1e-12 * obj.t_mt);
        assert!((c.t_dt - obj.t_dt).abs() < 1e-12 * obj.t_dt);
        for i in 0..x.len() {
            assert!((c.grad_e[i] - g.primal[i]).abs() < 1e-10 * obj.e_dyn, "{i}");
        }
    }

    #[test]
    fn curvature_hessians_match_differenced_gradients() {
        let (spec, power, x) = setup();
        let c = curvature(&spec, &power, &x);
        let h = 1e-6;
        for j in 0..x.len() {
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let (cp, cm) = (curvature(&spec, &power, &xp), curvature(&spec, &power, &xm));
            for i in 0..x.len() {
                let fd_e = (cp.grad_e[i] - cm.grad_e[i]) / (2.0 * h);
                let fd_t = (cp.grad_t[i] - cm.grad_t[i]) / (2.0 * h);
                assert!((fd_e - c.hess_e[(i, j)]).abs() < 1e-6 * c.e_dyn, "E {i},{j}");
                assert!((fd_t - c.hess_t[(i, j)]).abs() < 1e-6 * c.t_mt, "T {i},{j}");
            }
        }
    }
}
