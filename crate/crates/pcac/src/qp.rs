//! Dense convex quadratic programming.
//!
//! Solves `min 1/2 x' H x + f' x  s.t.  G x <= h` with `H` symmetric positive
//! definite, by a dual active-set method: start at the unconstrained minimizer
//! and add violated constraints one at a time, taking the dual-blocking drops
//! along the way. No feasible starting point is needed and infeasibility shows
//! up as an unbounded dual step. Constraint selection is lowest-index first,
//! with constraints active at the warm-start point considered before the rest,
//! so identical specs replay identical pivot sequences.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Solver-facing problem statement. Box bounds are folded into `g`/`h_ineq` rows.
#[derive(Debug, Clone)]
pub struct QpSpec {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h_ineq: DVector<f64>,
    /// Optional warm start; its near-active constraints get pivot priority.
    pub x0: Option<DVector<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint row; zero off the active set.
    pub multipliers: DVector<f64>,
    pub active_set: Vec<usize>,
    pub iterations: usize,
    pub status: QpStatus,
}

/// KKT residuals of a candidate solution: (stationarity, feasibility, complementarity).
pub fn kkt_residuals(spec: &QpSpec, sol: &QpSolution) -> (f64, f64, f64) {
    let grad = &spec.h * &sol.x + &spec.f + spec.g.transpose() * &sol.multipliers;
    let stationarity = grad.abs().max();
    let slack = &spec.g * &sol.x - &spec.h_ineq;
    let feasibility = slack.iter().cloned().fold(0.0_f64, f64::max).max(0.0);
    let complementarity = slack
        .iter()
        .zip(sol.multipliers.iter())
        .map(|(s, m)| (s * m).abs())
        .fold(0.0_f64, f64::max);
    (stationarity, feasibility, complementarity)
}

const FEAS_TOL: f64 = 1e-10;
const DEP_TOL: f64 = 1e-12;

/// Solves the QP. `H` must be positive definite.
pub fn solve(spec: &QpSpec) -> Result<QpSolution> {
    let n = spec.h.nrows();
    let mc = spec.g.nrows();
    if spec.h.ncols() != n || spec.f.len() != n {
        return Err(Error::ContractViolation("Hessian and gradient sizes disagree".into()));
    }
    if spec.g.ncols() != n && mc > 0 {
        return Err(Error::ContractViolation("constraint matrix width must match x".into()));
    }
    if spec.h_ineq.len() != mc {
        return Err(Error::ContractViolation("constraint rhs length must match rows".into()));
    }

    let chol = Cholesky::new(spec.h.clone())
        .ok_or_else(|| Error::Numerical("QP Hessian is not positive definite".into()))?;

    let mut x = chol.solve(&(-&spec.f));
    let mut active: Vec<usize> = Vec::new();
    let mut u_act: Vec<f64> = Vec::new();
    let mut iterations = 0usize;
    let max_iterations = 50 * (n + mc).max(1);

    // Constraint scan order: warm-start actives first, then the remainder,
    // each in index order.
    let scan_order: Vec<usize> = match &spec.x0 {
        Some(x0) if x0.len() == n => {
            let mut primed = Vec::new();
            let mut rest = Vec::new();
            for i in 0..mc {
                let slack = spec.g.row(i).transpose().dot(x0) - spec.h_ineq[i];
                if slack.abs() <= 1e-8 * (1.0 + spec.h_ineq[i].abs()) {
                    primed.push(i);
                } else {
                    rest.push(i);
                }
            }
            primed.extend(rest);
            primed
        }
        _ => (0..mc).collect(),
    };

    let violation = |x: &DVector<f64>, i: usize| -> f64 {
        spec.g.row(i).transpose().dot(x) - spec.h_ineq[i]
    };

    'outer: loop {
        // Most negative slack wins nothing here: first violated in scan order.
        let mut chosen = None;
        for &i in &scan_order {
            if active.contains(&i) {
                continue;
            }
            if violation(&x, i) > FEAS_TOL * (1.0 + spec.h_ineq[i].abs()) {
                chosen = Some(i);
                break;
            }
        }
        let p = match chosen {
            Some(p) => p,
            None => {
                return Ok(finish(spec, x, active, u_act, iterations, QpStatus::Optimal));
            }
        };

        // Inward-pointing normal of row p for the >= formulation.
        let n_p: DVector<f64> = -spec.g.row(p).transpose();
        let b_p = -spec.h_ineq[p];
        let mut u_p = 0.0_f64;

        loop {
            iterations += 1;
            if iterations > max_iterations {
                return Ok(finish(spec, x, active, u_act, iterations, QpStatus::MaxIter));
            }

            // Primal direction z (keeps active rows tight) and dual rates r.
            let h_inv_np = chol.solve(&n_p);
            let (z, r) = if active.is_empty() {
                (h_inv_np, DVector::zeros(0))
            } else {
                let q = active.len();
                let mut n_mat = DMatrix::zeros(n, q);
                for (col, &idx) in active.iter().enumerate() {
                    n_mat.set_column(col, &(-spec.g.row(idx).transpose()));
                }
                let h_inv_n = chol.solve(&n_mat);
                let schur = n_mat.transpose() * &h_inv_n;
                let schur_chol = Cholesky::new(schur).ok_or_else(|| {
                    Error::Numerical("active-set normals became dependent".into())
                })?;
                let r = schur_chol.solve(&(n_mat.transpose() * &h_inv_np));
                let z = &h_inv_np - &h_inv_n * &r;
                (z, r)
            };

            let ztn = z.dot(&n_p);
            if ztn > DEP_TOL * (1.0 + n_p.norm_squared()) {
                // Full step length to make p feasible, and dual blocking length.
                let t2 = (b_p - n_p.dot(&x)) / ztn;
                let mut t1 = f64::INFINITY;
                let mut blocker = None;
                for (j, &rj) in r.iter().enumerate() {
                    if rj > DEP_TOL {
                        let ratio = u_act[j] / rj;
                        if ratio < t1 {
                            t1 = ratio;
                            blocker = Some(j);
                        }
                    }
                }
                let t = t1.min(t2);
                x += t * &z;
                for (j, rj) in r.iter().enumerate() {
                    u_act[j] -= t * rj;
                }
                u_p += t;
                if t2 <= t1 {
                    active.push(p);
                    u_act.push(u_p);
                    continue 'outer;
                }
                let j = blocker.expect("finite t1 implies a blocking row");
                active.remove(j);
                u_act.remove(j);
            } else {
                // p is linearly dependent on the active normals: pure dual step.
                let mut t1 = f64::INFINITY;
                let mut blocker = None;
                for (j, &rj) in r.iter().enumerate() {
                    if rj > DEP_TOL {
                        let ratio = u_act[j] / rj;
                        if ratio < t1 {
                            t1 = ratio;
                            blocker = Some(j);
                        }
                    }
                }
                match blocker {
                    None => {
                        // No dual motion can admit p: the constraints are inconsistent.
                        return Ok(finish(spec, x, active, u_act, iterations, QpStatus::Infeasible));
                    }
                    Some(j) => {
                        for (jj, rj) in r.iter().enumerate() {
                            u_act[jj] -= t1 * rj;
                        }
                        u_p += t1;
                        active.remove(j);
                        u_act.remove(j);
                    }
                }
            }
        }
    }
}

fn finish(
    spec: &QpSpec,
    x: DVector<f64>,
    active: Vec<usize>,
    u_act: Vec<f64>,
    iterations: usize,
    status: QpStatus,
) -> QpSolution {
    let mut multipliers = DVector::zeros(spec.g.nrows());
    for (&idx, &u) in active.iter().zip(&u_act) {
        multipliers[idx] = u.max(0.0);
    }
    QpSolution { x, multipliers, active_set: active, iterations, status }
}

/// Shifts the previous horizon solution one block forward for warm starting:
/// the first control block is dropped, the final block duplicated, and any
/// slack tail zeroed.
pub fn warm_start_shift(prev: &QpSolution, block: usize, horizon: usize) -> DVector<f64> {
    let n_u = block * horizon;
    let mut x0 = DVector::zeros(prev.x.len());
    if horizon >= 1 && prev.x.len() >= n_u {
        for i in 0..(horizon - 1) * block {
            x0[i] = prev.x[i + block];
        }
        for b in 0..block {
            x0[(horizon - 1) * block + b] = prev.x[(horizon - 1) * block + b];
        }
    }
    x0
}
