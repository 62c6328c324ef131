//! Receding-horizon predictive control from the current ARX estimate.
//!
//! The l-step prediction is `Y = Gamma + T U`, assembled from block-Toeplitz
//! factors of the estimated coefficients: `F_p Y = -F_d Y_hist + G_d U_hist + G_p U`
//! with `F_p` unit lower block triangular, so both `Gamma` and `T` come out of
//! block forward substitution rather than an explicit inverse. On top of the
//! prediction sit the tracking, integrated-error, control, and move-suppression
//! weights, the output constraints with slack, and the control magnitude/rate
//! bounds, yielding one dense QP per step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::qp::{QpSolution, QpSpec};
use crate::sysid::ArxModel;

/// Quadratic weights of the receding-horizon objective, already lifted to the
/// horizon (each block `l p_t` or `l m` or `l n_c` square).
#[derive(Debug, Clone)]
pub struct HorizonWeights {
    pub q: DMatrix<f64>,
    pub q_i: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub r_delta: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub ell: usize,
}

impl HorizonWeights {
    /// Scaled-identity weights, the common scenario configuration.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        ell: usize,
        p_t: usize,
        m: usize,
        n_c: usize,
        q: f64,
        q_i: f64,
        r: f64,
        r_delta: f64,
        s: f64,
    ) -> Self {
        Self {
            q: DMatrix::identity(ell * p_t, ell * p_t) * q,
            q_i: DMatrix::identity(ell * p_t, ell * p_t) * q_i,
            r: DMatrix::identity(ell * m, ell * m) * r,
            r_delta: DMatrix::identity(ell * m, ell * m) * r_delta,
            s: DMatrix::identity(ell * n_c, ell * n_c) * s,
            ell,
        }
    }
}

/// Output selectors and the affine output constraint `Ccal y_c + Dcal <= 0`.
#[derive(Debug, Clone)]
pub struct OutputMaps {
    pub c_t: DMatrix<f64>,
    pub c_c: DMatrix<f64>,
    pub ccal: DMatrix<f64>,
    pub dcal: DVector<f64>,
}

impl OutputMaps {
    /// Track every output, no constrained outputs.
    pub fn tracking_only(p: usize) -> Self {
        Self {
            c_t: DMatrix::identity(p, p),
            c_c: DMatrix::zeros(0, p),
            ccal: DMatrix::zeros(0, 0),
            dcal: DVector::zeros(0),
        }
    }

    pub fn n_constraints(&self) -> usize {
        self.ccal.nrows()
    }
}

/// Control magnitude bounds, with optional rate bounds.
#[derive(Debug, Clone)]
pub struct ControlBounds {
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
    pub du_min: Option<DVector<f64>>,
    pub du_max: Option<DVector<f64>>,
}

impl ControlBounds {
    pub fn magnitude_only(u_min: DVector<f64>, u_max: DVector<f64>) -> Self {
        Self { u_min, u_max, du_min: None, du_max: None }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.u_min.len() != m || self.u_max.len() != m {
            return Err(Error::ContractViolation("magnitude bounds have wrong size".into()));
        }
        if self.u_min.iter().zip(self.u_max.iter()).any(|(lo, hi)| lo > hi) {
            return Err(Error::ContractViolation("u_min must not exceed u_max".into()));
        }
        match (&self.du_min, &self.du_max) {
            (Some(lo), Some(hi)) => {
                if lo.len() != m || hi.len() != m {
                    return Err(Error::ContractViolation("rate bounds have wrong size".into()));
                }
                // Holding the previous control must stay feasible.
                if lo.iter().any(|v| *v > 0.0) || hi.iter().any(|v| *v < 0.0) {
                    return Err(Error::ContractViolation(
                        "rate bounds must bracket zero".into(),
                    ));
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::ContractViolation(
                    "rate bounds must be given as a pair".into(),
                ))
            }
        }
        Ok(())
    }
}

/// The l-step prediction `Y = Gamma + T U` plus the factors it was built from.
#[derive(Debug, Clone)]
pub struct PredictionOperators {
    pub gamma: DVector<f64>,
    pub t: DMatrix<f64>,
    pub f_p: DMatrix<f64>,
    pub g_p: DMatrix<f64>,
    pub f_d: DMatrix<f64>,
    pub g_d: DMatrix<f64>,
    pub d_hist: DVector<f64>,
    pub ell: usize,
    pub p: usize,
    pub m: usize,
}

/// Running sum of tracking errors `i_k = sum (y_t - r)`.
#[derive(Debug, Clone)]
pub struct IntegratorState {
    pub i_accum: DVector<f64>,
}

impl IntegratorState {
    pub fn zero(p_t: usize) -> Self {
        Self { i_accum: DVector::zeros(p_t) }
    }

    pub fn update(&mut self, y_t: &DVector<f64>, r: &DVector<f64>) {
        self.i_accum += y_t - r;
    }
}

/// Block-Toeplitz factors of the prediction map.
pub fn build_toeplitz(
    model: &ArxModel,
    ell: usize,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    assert!(ell >= 1, "horizon must be at least 1");
    let n = model.n_hat();
    let p = model.n_outputs();
    let m = model.n_inputs();

    let f: Vec<DMatrix<f64>> = (1..=n).map(|i| model.f_block(i)).collect();
    let g: Vec<DMatrix<f64>> = (0..=n).map(|i| model.g_block(i)).collect();

    let mut f_p = DMatrix::zeros(ell * p, ell * p);
    let mut g_p = DMatrix::zeros(ell * p, ell * m);
    for i in 0..ell {
        f_p.view_mut((i * p, i * p), (p, p)).copy_from(&DMatrix::identity(p, p));
        for j in 0..=i {
            let lag = i - j;
            if (1..=n).contains(&lag) {
                f_p.view_mut((i * p, j * p), (p, p)).copy_from(&f[lag - 1]);
            }
            if lag <= n {
                g_p.view_mut((i * p, j * m), (p, m)).copy_from(&g[lag]);
            }
        }
    }

    let mut f_d = DMatrix::zeros(ell * p, n * p);
    let mut g_d = DMatrix::zeros(ell * p, n * m);
    for i in 0..ell {
        for j in 0..n {
            // Column block j multiplies the (j+1)-th oldest history sample;
            // the coefficient index is n + (i+1) - (j+1).
            let lag = n + i - j;
            if lag <= n {
                f_d.view_mut((i * p, j * p), (p, p)).copy_from(&f[lag - 1]);
                g_d.view_mut((i * p, j * m), (p, m)).copy_from(&g[lag]);
            }
        }
    }

    (f_p, g_p, f_d, g_d)
}

/// Solves `F_p X = rhs` by block forward substitution; `F_p` has identity
/// diagonal blocks so no division is involved.
fn forward_substitute(
    model: &ArxModel,
    ell: usize,
    rhs: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = model.n_hat();
    let p = model.n_outputs();
    let w = rhs.ncols();
    let f: Vec<DMatrix<f64>> = (1..=n).map(|i| model.f_block(i)).collect();

    let mut x = DMatrix::zeros(ell * p, w);
    for i in 0..ell {
        let mut row = rhs.view((i * p, 0), (p, w)).into_owned();
        for s in 1..=n.min(i) {
            row -= &f[s - 1] * x.view(((i - s) * p, 0), (p, w));
        }
        x.view_mut((i * p, 0), (p, w)).copy_from(&row);
    }
    x
}

/// Assembles the prediction operators from the model and the latest history
/// (`ys`, `us` oldest first, each of length `n_hat`, ending at the current step).
pub fn build_prediction(
    model: &ArxModel,
    ys: &[DVector<f64>],
    us: &[DVector<f64>],
    ell: usize,
) -> Result<PredictionOperators> {
    let n = model.n_hat();
    let p = model.n_outputs();
    let m = model.n_inputs();
    if ys.len() != n || us.len() != n {
        return Err(Error::ContractViolation(format!(
            "prediction history must hold {n} outputs and {n} inputs"
        )));
    }

    let (f_p, g_p, f_d, g_d) = build_toeplitz(model, ell);

    let mut y_hist = DVector::zeros(n * p);
    let mut u_hist = DVector::zeros(n * m);
    let mut d_hist = DVector::zeros(n * (p + m));
    for (j, y) in ys.iter().enumerate() {
        y_hist.rows_mut(j * p, p).copy_from(y);
        d_hist.rows_mut(j * p, p).copy_from(y);
    }
    for (j, u) in us.iter().enumerate() {
        u_hist.rows_mut(j * m, m).copy_from(u);
        d_hist.rows_mut(n * p + j * m, m).copy_from(u);
    }

    let rhs = -&f_d * &y_hist + &g_d * &u_hist;
    let gamma = forward_substitute(model, ell, &DMatrix::from_column_slice(ell * p, 1, rhs.as_slice()))
        .column(0)
        .into_owned();
    let t = forward_substitute(model, ell, &g_p);

    Ok(PredictionOperators { gamma, t, f_p, g_p, f_d, g_d, d_hist, ell, p, m })
}

/// Expresses the integrated tracking error affinely in the control sequence:
/// `I_t = M_i U + c_i`. `r_now` is the current command; `r_future` holds the
/// l predicted commands.
pub fn build_integrated_error(
    ops: &PredictionOperators,
    c_t: &DMatrix<f64>,
    i_state: &IntegratorState,
    y_t_now: &DVector<f64>,
    r_now: &DVector<f64>,
    r_future: &[DVector<f64>],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (ell, p, m) = (ops.ell, ops.p, ops.m);
    let p_t = c_t.nrows();
    if r_future.len() != ell {
        return Err(Error::ContractViolation("need one predicted command per horizon step".into()));
    }

    let mut m_i = DMatrix::zeros(ell * p_t, ell * m);
    let mut c_i = DVector::zeros(ell * p_t);

    // First entry: accumulated error led by the current sample, independent of U.
    let lead = &i_state.i_accum + y_t_now - r_now;
    c_i.rows_mut(0, p_t).copy_from(&lead);

    for i in 1..ell {
        // i_{k|i+1} = i_{k|i} + y_t(k|i) - r(k+i), with y_t(k|i) from row i-1 of Y.
        let prev_m = m_i.view(((i - 1) * p_t, 0), (p_t, ell * m)).into_owned();
        let prev_c = c_i.rows((i - 1) * p_t, p_t).into_owned();
        let t_row = c_t * ops.t.view(((i - 1) * p, 0), (p, ell * m));
        let g_row = c_t * ops.gamma.rows((i - 1) * p, p);
        m_i.view_mut((i * p_t, 0), (p_t, ell * m)).copy_from(&(prev_m + t_row));
        c_i.rows_mut(i * p_t, p_t)
            .copy_from(&(prev_c + g_row - &r_future[i - 1]));
    }
    Ok((m_i, c_i))
}

/// One receding-horizon QP over the decision vector `[U; slack]`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h_ineq: DVector<f64>,
    pub n_u: usize,
    pub n_slack: usize,
}

impl QpProblem {
    pub fn into_spec(self, x0: Option<DVector<f64>>) -> QpSpec {
        QpSpec { h: self.h, f: self.f, g: self.g, h_ineq: self.h_ineq, x0 }
    }
}

const HESSIAN_RIDGE: f64 = 1e-9;

/// Builds the step QP: tracking, integrated-error, control, and move weights in
/// the objective; output constraints with slack, magnitude and rate bounds, and
/// slack nonnegativity as inequality rows.
#[allow(clippy::too_many_arguments)]
pub fn build_qp(
    ops: &PredictionOperators,
    weights: &HorizonWeights,
    maps: &OutputMaps,
    bounds: &ControlBounds,
    u_prev: &DVector<f64>,
    r_now: &DVector<f64>,
    r_future: &[DVector<f64>],
    i_state: &IntegratorState,
    y_t_now: &DVector<f64>,
) -> Result<QpProblem> {
    let (ell, p, m) = (ops.ell, ops.p, ops.m);
    let p_t = maps.c_t.nrows();
    let n_c = maps.n_constraints();
    let n_u = ell * m;
    let n_slack = ell * n_c;
    let n_x = n_u + n_slack;

    bounds.validate(m)?;
    if u_prev.len() != m || r_future.len() != ell {
        return Err(Error::ContractViolation("previous control or command horizon mis-sized".into()));
    }
    if weights.q.nrows() != ell * p_t || weights.r.nrows() != n_u || weights.r_delta.nrows() != n_u {
        return Err(Error::ContractViolation("weight blocks do not match the horizon".into()));
    }

    // Tracking map A_t = (I ⊗ C_t) T and free response y0 = (I ⊗ C_t) Gamma.
    let mut a_t = DMatrix::zeros(ell * p_t, n_u);
    let mut y0 = DVector::zeros(ell * p_t);
    for i in 0..ell {
        a_t.view_mut((i * p_t, 0), (p_t, n_u))
            .copy_from(&(&maps.c_t * ops.t.view((i * p, 0), (p, n_u))));
        y0.rows_mut(i * p_t, p_t)
            .copy_from(&(&maps.c_t * ops.gamma.rows(i * p, p)));
    }
    let mut rcal = DVector::zeros(ell * p_t);
    for (i, r) in r_future.iter().enumerate() {
        rcal.rows_mut(i * p_t, p_t).copy_from(r);
    }

    // First-difference operator and its anchor at the applied control.
    let mut e = DMatrix::identity(n_u, n_u);
    for i in m..n_u {
        e[(i, i - m)] = -1.0;
    }
    let mut b_u = DVector::zeros(n_u);
    b_u.rows_mut(0, m).copy_from(u_prev);

    let mut h_uu = a_t.transpose() * &weights.q * &a_t
        + &weights.r
        + e.transpose() * &weights.r_delta * &e;
    let mut f_u = a_t.transpose() * (&weights.q * (&y0 - &rcal))
        - e.transpose() * (&weights.r_delta * &b_u);

    if weights.q_i.amax() > 0.0 {
        let (m_i, c_i) =
            build_integrated_error(ops, &maps.c_t, i_state, y_t_now, r_now, r_future)?;
        h_uu += m_i.transpose() * &weights.q_i * &m_i;
        f_u += m_i.transpose() * (&weights.q_i * &c_i);
    }

    let mut h = DMatrix::zeros(n_x, n_x);
    h.view_mut((0, 0), (n_u, n_u)).copy_from(&(h_uu * 2.0));
    if n_slack > 0 {
        h.view_mut((n_u, n_u), (n_slack, n_slack)).copy_from(&(&weights.s * 2.0));
    }
    for i in 0..n_x {
        h[(i, i)] += HESSIAN_RIDGE;
    }
    let mut f = DVector::zeros(n_x);
    f.rows_mut(0, n_u).copy_from(&(f_u * 2.0));

    // Inequality rows: outputs with slack, magnitude box, rate box, slack sign.
    let rate_rows = if bounds.du_min.is_some() { 2 * n_u } else { 0 };
    let n_rows = n_slack + 2 * n_u + rate_rows + n_slack;
    let mut g_rows = DMatrix::zeros(n_rows, n_x);
    let mut rhs = DVector::zeros(n_rows);
    let mut row = 0;

    if n_c > 0 {
        let cc = &maps.ccal * &maps.c_c; // n_c x p
        for i in 0..ell {
            let block = &cc * ops.t.view((i * p, 0), (p, n_u));
            g_rows.view_mut((row, 0), (n_c, n_u)).copy_from(&block);
            for j in 0..n_c {
                g_rows[(row + j, n_u + i * n_c + j)] = -1.0;
            }
            let free = &cc * ops.gamma.rows(i * p, p);
            rhs.rows_mut(row, n_c).copy_from(&(-&maps.dcal - free));
            row += n_c;
        }
    }

    for i in 0..ell {
        for j in 0..m {
            g_rows[(row, i * m + j)] = 1.0;
            rhs[row] = bounds.u_max[j];
            row += 1;
        }
    }
    for i in 0..ell {
        for j in 0..m {
            g_rows[(row, i * m + j)] = -1.0;
            rhs[row] = -bounds.u_min[j];
            row += 1;
        }
    }

    if let (Some(du_min), Some(du_max)) = (&bounds.du_min, &bounds.du_max) {
        for i in 0..n_u {
            for j in 0..n_u {
                g_rows[(row + i, j)] = e[(i, j)];
            }
            rhs[row + i] = du_max[i % m] + b_u[i];
        }
        row += n_u;
        for i in 0..n_u {
            for j in 0..n_u {
                g_rows[(row + i, j)] = -e[(i, j)];
            }
            rhs[row + i] = -du_min[i % m] - b_u[i];
        }
        row += n_u;
    }

    for i in 0..n_slack {
        g_rows[(row, n_u + i)] = -1.0;
        row += 1;
    }
    debug_assert_eq!(row, n_rows);

    Ok(QpProblem { h, f, g: g_rows, h_ineq: rhs, n_u, n_slack })
}

/// First control block of the horizon solution; the rest is warm-start fodder.
pub fn extract_control(solution: &QpSolution, m: usize) -> DVector<f64> {
    solution.x.rows(0, m).into_owned()
}
