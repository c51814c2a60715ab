//! Dense strictly convex quadratic programs of a handful of variables:
//! minimize `½·dᵀHd + gᵀd` subject to `A·d <= b`.
//!
//! Dual active-set method (Goldfarb and Idnani). It starts from the unconstrained
//! minimizer and repeatedly adds the most violated constraint, dropping active ones
//! whose multiplier would turn negative. Every intermediate point is optimal for
//! the constraints in the working set, so no feasible starting point is needed.
//! Matrices are tiny (tens of rows), so the projected quantities are rebuilt from
//! scratch at each pass instead of being updated by factorization downdates.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One non-negative multiplier per constraint row; zero for inactive rows.
    pub multipliers: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QpError {
    NotPositiveDefinite,
    Infeasible,
    IterationLimit,
}

impl std::fmt::Display for QpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QpError::NotPositiveDefinite => f.write_str("Hessian is not positive definite"),
            QpError::Infeasible => f.write_str("linearized constraints are infeasible"),
            QpError::IterationLimit => f.write_str("active-set iteration limit reached"),
        }
    }
}

pub fn solve(h: &DMatrix<f64>, g: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<QpSolution, QpError> {
    let n = g.len();
    let m = b.len();
    let h_inv = h.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?.inverse();
    let mut x = -(&h_inv * g);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let scale: Vec<f64> = (0..m).map(|i| a.row(i).norm().max(1e-300)).collect();
    let eps = 1e-13;

    for _ in 0..(50 * (m + n) + 100) {
        // slack of the most violated constraint, normalized by its row norm
        let mut p = None;
        let mut worst = 0.0;
        for i in 0..m {
            if active.contains(&i) {
                continue;
            }
            let viol = ((a.row(i) * &x)[0] - b[i]) / scale[i];
            if viol > worst + eps * (1.0 + b[i].abs() / scale[i]) {
                worst = viol;
                p = Some(i);
            }
        }
        let Some(p) = p else {
            let mut mult = DVector::zeros(m);
            for (k, &i) in active.iter().enumerate() {
                mult[i] = u[k];
            }
            return Ok(QpSolution { x, multipliers: mult });
        };

        let np: DVector<f64> = a.row(p).transpose();
        let mut u_plus = u.clone();
        u_plus.push(0.0);
        loop {
            let (z, r) = directions(&h_inv, a, &active, &np);
            let s_p = (np.dot(&x)) - b[p];
            // largest dual step keeping the active multipliers non-negative
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (k, rk) in r.iter().enumerate() {
                if *rk > eps {
                    let t = u_plus[k] / rk;
                    if t < t1 {
                        t1 = t;
                        drop = Some(k);
                    }
                }
            }
            let zn = z.dot(&np);
            let t2 = if z.norm() > eps * (1.0 + x.norm()) && zn > 0.0 { s_p / zn } else { f64::INFINITY };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpError::Infeasible);
            }
            for (k, rk) in r.iter().enumerate() {
                u_plus[k] -= t * rk;
            }
            let last = u_plus.len() - 1;
            u_plus[last] += t;
            if t2.is_finite() {
                x -= &z * t;
            }
            if t2 <= t1 {
                active.push(p);
                u = u_plus;
                break;
            }
            let k = drop.expect("partial step always has a blocking constraint");
            active.remove(k);
            u_plus.remove(k);
        }
    }
    Err(QpError::IterationLimit)
}

/// Primal step direction `z` (in the null space of the active rows, metric `H`) and
/// the change `r` of the active multipliers per unit step along the new row.
fn directions(h_inv: &DMatrix<f64>, a: &DMatrix<f64>, active: &[usize], np: &DVector<f64>) -> (DVector<f64>, Vec<f64>) {
    let hn = h_inv * np;
    if active.is_empty() {
        return (hn, Vec::new());
    }
    let n = np.len();
    let k = active.len();
    let mut big_n = DMatrix::zeros(n, k);
    for (c, &i) in active.iter().enumerate() {
        big_n.set_column(c, &a.row(i).transpose());
    }
    let hinv_n = h_inv * &big_n;
    let gram = big_n.transpose() * &hinv_n;
    let r = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&(big_n.transpose() * &hn)),
        None => gram.pseudo_inverse(1e-14).expect("pseudo-inverse of a small symmetric matrix") * (big_n.transpose() * &hn),
    };
    let z = hn - hinv_n * &r;
    (z, r.iter().copied().collect())
}
