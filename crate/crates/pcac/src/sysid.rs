//! Online ARX identification by recursive least squares.
//!
//! The estimated input-output model is
//! `y_k ≈ -Σ F_i y_{k-i} + Σ G_i u_{k-i}` (i = 1..n for F, 0..n for G),
//! packed row-wise as `theta = [-F_1 .. -F_n  G_0 .. G_n]` against the
//! regressor `phi_k = [y_{k-1} .. y_{k-n}  u_k .. u_{k-n}]` with zero initial
//! history. Two update variants are provided: the covariance form and an
//! exponential-resetting information form whose information matrix contracts
//! toward a configured target absent excitation. The forgetting factor is
//! either fixed or driven by an F-test on residual-variance windows.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fdist::f_quantile;

/// Estimated ARX coefficient matrix.
#[derive(Debug, Clone)]
pub struct ArxModel {
    n_hat: usize,
    p: usize,
    m: usize,
    /// `p x [n_hat (p + m) + m]` packing `[-F_1 .. -F_n  G_0 .. G_n]`.
    pub theta: DMatrix<f64>,
}

impl ArxModel {
    pub fn zeros(n_hat: usize, p: usize, m: usize) -> Self {
        let cols = regressor_len(n_hat, p, m);
        Self { n_hat, p, m, theta: DMatrix::zeros(p, cols) }
    }

    pub fn n_hat(&self) -> usize {
        self.n_hat
    }

    pub fn n_outputs(&self) -> usize {
        self.p
    }

    pub fn n_inputs(&self) -> usize {
        self.m
    }

    /// `F_i` for `i` in `1..=n_hat` (sign restored from the packed `-F_i`).
    pub fn f_block(&self, i: usize) -> DMatrix<f64> {
        assert!((1..=self.n_hat).contains(&i));
        -self.theta.view((0, (i - 1) * self.p), (self.p, self.p)).into_owned()
    }

    /// `G_i` for `i` in `0..=n_hat`.
    pub fn g_block(&self, i: usize) -> DMatrix<f64> {
        assert!(i <= self.n_hat);
        self.theta
            .view((0, self.n_hat * self.p + i * self.m), (self.p, self.m))
            .into_owned()
    }

    pub fn set_f_block(&mut self, i: usize, f: &DMatrix<f64>) {
        assert!((1..=self.n_hat).contains(&i));
        self.theta.view_mut((0, (i - 1) * self.p), (self.p, self.p)).copy_from(&(-f));
    }

    pub fn set_g_block(&mut self, i: usize, g: &DMatrix<f64>) {
        assert!(i <= self.n_hat);
        self.theta
            .view_mut((0, self.n_hat * self.p + i * self.m), (self.p, self.m))
            .copy_from(g);
    }

    /// One-step prediction `theta * phi`.
    pub fn predict(&self, phi: &DVector<f64>) -> Result<DVector<f64>> {
        if phi.len() != self.theta.ncols() {
            return Err(Error::ContractViolation(format!(
                "regressor length {} does not match model width {}",
                phi.len(),
                self.theta.ncols()
            )));
        }
        Ok(&self.theta * phi)
    }
}

/// Regressor length `n_hat (p + m) + m`.
pub fn regressor_len(n_hat: usize, p: usize, m: usize) -> usize {
    n_hat * (p + m) + m
}

/// Shift-register of past outputs and inputs forming the regressor.
///
/// Histories start at zero, matching the model's zero initial conditions.
#[derive(Debug, Clone)]
pub struct Regressor {
    n_hat: usize,
    p: usize,
    m: usize,
    /// Newest first: `y_k, y_{k-1}, ...` (length `n_hat`).
    y_hist: VecDeque<DVector<f64>>,
    /// Newest first: `u_k, u_{k-1}, ...` (length `n_hat + 1` once `u_k` arrives).
    u_hist: VecDeque<DVector<f64>>,
}

impl Regressor {
    pub fn new(n_hat: usize, p: usize, m: usize) -> Self {
        let y_hist = (0..n_hat).map(|_| DVector::zeros(p)).collect();
        let u_hist = (0..n_hat).map(|_| DVector::zeros(m)).collect();
        Self { n_hat, p, m, y_hist, u_hist }
    }

    /// Registers the control applied at the current step; call before [`Self::phi`].
    pub fn push_u(&mut self, u: &DVector<f64>) {
        self.u_hist.push_front(u.clone());
        self.u_hist.truncate(self.n_hat + 1);
    }

    /// Registers the output measured at the current step; call after [`Self::phi`].
    pub fn push_y(&mut self, y: &DVector<f64>) {
        self.y_hist.push_front(y.clone());
        self.y_hist.truncate(self.n_hat);
    }

    /// Stacks `[y_{k-1} .. y_{k-n}  u_k .. u_{k-n}]`.
    pub fn phi(&self) -> DVector<f64> {
        let mut phi = DVector::zeros(regressor_len(self.n_hat, self.p, self.m));
        let mut row = 0;
        for y in &self.y_hist {
            phi.rows_mut(row, self.p).copy_from(y);
            row += self.p;
        }
        for u in &self.u_hist {
            phi.rows_mut(row, self.m).copy_from(u);
            row += self.m;
        }
        phi
    }

    /// Past outputs `y_{k-n+1} .. y_k` (oldest first), as needed by the
    /// prediction operators. Valid after the step-`k` output was pushed.
    pub fn recent_outputs(&self) -> Vec<DVector<f64>> {
        self.y_hist.iter().rev().cloned().collect()
    }

    /// Past inputs `u_{k-n+1} .. u_k` (oldest first).
    pub fn recent_inputs(&self) -> Vec<DVector<f64>> {
        self.u_hist.iter().take(self.n_hat).rev().cloned().collect()
    }
}

/// Covariance-form RLS update. Returns the pre-update residual `y - theta phi`.
///
/// `L = P / lambda`, `P+ = L - L phi phi' L / (1 + phi' L phi)`,
/// `theta+ = theta + (y - theta phi) phi' P+`.
pub fn rls_update(
    theta: &mut DMatrix<f64>,
    p_cov: &mut DMatrix<f64>,
    y: &DVector<f64>,
    phi: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::ContractViolation("forgetting factor must lie in (0, 1]".into()));
    }
    let l = &*p_cov / lambda;
    let l_phi = &l * phi;
    let denom = 1.0 + phi.dot(&l_phi);
    if denom <= 0.0 || !denom.is_finite() {
        return Err(Error::Numerical("covariance update lost positive definiteness".into()));
    }
    *p_cov = &l - &l_phi * (l_phi.transpose() / denom);
    symmetrize(p_cov);

    let residual = y - &*theta * phi;
    let p_phi = &*p_cov * phi;
    *theta += &residual * p_phi.transpose();
    Ok(residual)
}

/// Exponential-resetting information-form update. Returns the pre-update residual.
///
/// `R+ = lambda R + (1 - lambda) R_inf + phi phi'`,
/// `theta+ = theta + (y - theta phi) phi' inv(R+)`, the inverse applied by a
/// Cholesky solve rather than formed.
pub fn er_rls_update(
    theta: &mut DMatrix<f64>,
    r_info: &mut DMatrix<f64>,
    r_inf: &DMatrix<f64>,
    y: &DVector<f64>,
    phi: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::ContractViolation("forgetting factor must lie in (0, 1]".into()));
    }
    *r_info = &*r_info * lambda + r_inf * (1.0 - lambda) + phi * phi.transpose();
    symmetrize(r_info);

    let chol = Cholesky::new(r_info.clone())
        .ok_or_else(|| Error::Numerical("information matrix is not positive definite".into()))?;
    let residual = y - &*theta * phi;
    let r_inv_phi = chol.solve(phi);
    *theta += &residual * r_inv_phi.transpose();
    Ok(residual)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// F-test forgetting parameters: gain, window lengths, significance level.
#[derive(Debug, Clone, Copy)]
pub struct VrfParams {
    pub eta: f64,
    pub tau_n: usize,
    pub tau_d: usize,
    pub alpha_sig: f64,
}

impl Default for VrfParams {
    fn default() -> Self {
        Self { eta: 0.1, tau_n: 20, tau_d: 40, alpha_sig: 0.01 }
    }
}

/// Quantities derived from [`VrfParams`] that stay fixed across steps.
#[derive(Debug, Clone, Copy)]
pub struct VrfTest {
    pub params: VrfParams,
    c: f64,
    sqrt_quantile: f64,
}

impl VrfTest {
    pub fn new(params: VrfParams, p: usize) -> Result<Self> {
        let (tau_n, tau_d, pf) = (params.tau_n as f64, params.tau_d as f64, p as f64);
        if params.tau_n < p || params.tau_n >= params.tau_d {
            return Err(Error::ContractViolation(
                "window lengths must satisfy p <= tau_n < tau_d".into(),
            ));
        }
        if params.tau_d <= p + 3 {
            return Err(Error::ContractViolation("tau_d must exceed p + 3".into()));
        }
        if !(params.eta >= 0.0) || !(params.alpha_sig > 0.0 && params.alpha_sig < 1.0) {
            return Err(Error::ContractViolation("invalid forgetting gain or level".into()));
        }
        let a = (tau_n + tau_d - pf - 1.0) * (tau_d - 1.0) / ((tau_d - pf - 3.0) * (tau_d - pf));
        if a <= 1.0 {
            return Err(Error::ContractViolation(
                "window lengths give a degenerate F approximation".into(),
            ));
        }
        let b = 4.0 + (pf * tau_n + 2.0) / (a - 1.0);
        let c = pf * tau_n * (b - 2.0) / (b * (tau_d - pf - 1.0));
        let quantile = f_quantile(pf * tau_n, b, 1.0 - params.alpha_sig)?;
        Ok(Self { params, c, sqrt_quantile: quantile.sqrt() })
    }

    /// Forgetting factor from the residual window (oldest first, newest last).
    ///
    /// Returns `lambda` in `(0, 1]` plus a flag marking a singular denominator
    /// variance (treated as a closed gate). Short windows return 1.
    pub fn lambda(&self, residuals: &VecDeque<DVector<f64>>) -> (f64, bool) {
        let VrfParams { eta, tau_n, tau_d, .. } = self.params;
        if residuals.len() < tau_d || eta == 0.0 {
            return (1.0, false);
        }
        let sigma_n = sample_covariance(residuals, tau_n);
        let sigma_d = sample_covariance(residuals, tau_d);
        let chol = match Cholesky::new(sigma_d) {
            Some(c) => c,
            None => return (1.0, true),
        };
        let trace = chol.solve(&sigma_n).trace();
        let stat = (tau_n as f64 / tau_d as f64) * trace / self.c;
        if !(stat >= 0.0) {
            return (1.0, true);
        }
        let g = stat.sqrt() - self.sqrt_quantile;
        if g > 0.0 {
            ((1.0 + eta * g).recip(), false)
        } else {
            (1.0, false)
        }
    }
}

/// Unbiased sample covariance of the newest `len` entries.
fn sample_covariance(window: &VecDeque<DVector<f64>>, len: usize) -> DMatrix<f64> {
    let p = window[0].len();
    let newest = window.iter().skip(window.len() - len);
    let mut mean = DVector::zeros(p);
    for z in newest.clone() {
        mean += z;
    }
    mean /= len as f64;
    let mut cov = DMatrix::zeros(p, p);
    for z in newest {
        let d = z - &mean;
        cov += &d * d.transpose();
    }
    cov / (len as f64 - 1.0)
}

/// Which recursive update the identifier runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdVariant {
    Rls,
    ErRls,
}

/// Full online identifier state: model, regressor, covariance or information
/// matrix, residual window, and forgetting-factor machinery.
#[derive(Debug, Clone)]
pub struct RlsState {
    pub model: ArxModel,
    regressor: Regressor,
    variant: IdVariant,
    p_cov: DMatrix<f64>,
    r_info: DMatrix<f64>,
    r_inf: DMatrix<f64>,
    residuals: VecDeque<DVector<f64>>,
    vrf: Option<VrfTest>,
    /// Forgetting factor used when no variance test is configured.
    pub fixed_lambda: f64,
    /// Forgetting factor applied at the most recent step.
    pub last_lambda: f64,
    /// Steps on which the denominator variance was singular and the gate held closed.
    pub singular_variance_steps: usize,
}

impl RlsState {
    /// Builds an identifier with prior covariance `p0_bar * I`.
    ///
    /// `r_inf` is the resetting target for the information form; when `None`
    /// it defaults to `(1 / p0_bar) * I`, mirroring the prior.
    pub fn new(
        n_hat: usize,
        p: usize,
        m: usize,
        p0_bar: f64,
        variant: IdVariant,
        r_inf: Option<DMatrix<f64>>,
        vrf: Option<VrfParams>,
    ) -> Result<Self> {
        if p0_bar <= 0.0 {
            return Err(Error::ContractViolation("prior covariance scale must be positive".into()));
        }
        let n = regressor_len(n_hat, p, m);
        let r_inf = match r_inf {
            Some(r) => {
                if r.nrows() != n || r.ncols() != n {
                    return Err(Error::ContractViolation("resetting target has wrong size".into()));
                }
                r
            }
            None => DMatrix::identity(n, n) / p0_bar,
        };
        let vrf = vrf.map(|params| VrfTest::new(params, p)).transpose()?;
        Ok(Self {
            model: ArxModel::zeros(n_hat, p, m),
            regressor: Regressor::new(n_hat, p, m),
            variant,
            p_cov: DMatrix::identity(n, n) * p0_bar,
            r_info: DMatrix::identity(n, n) / p0_bar,
            r_inf,
            residuals: VecDeque::new(),
            vrf,
            fixed_lambda: 1.0,
            last_lambda: 1.0,
            singular_variance_steps: 0,
        })
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.p_cov
    }

    pub fn information(&self) -> &DMatrix<f64> {
        &self.r_info
    }

    pub fn regressor(&self) -> &Regressor {
        &self.regressor
    }

    /// Processes one `(y, u)` sample: forms the regressor with the applied
    /// control, scores the residual, updates the forgetting factor from the
    /// window including the new residual, and runs the configured update.
    /// The model produced here is the one available for prediction at this step.
    pub fn ingest(&mut self, y: &DVector<f64>, u: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        self.regressor.push_u(u);
        let phi = self.regressor.phi();

        let residual = y - &self.model.theta * &phi;
        let tau_d = self.vrf.map(|v| v.params.tau_d).unwrap_or(1);
        self.residuals.push_back(residual.clone());
        while self.residuals.len() > tau_d {
            self.residuals.pop_front();
        }

        let lambda = match &self.vrf {
            Some(test) => {
                let (lambda, singular) = test.lambda(&self.residuals);
                if singular {
                    self.singular_variance_steps += 1;
                }
                lambda
            }
            None => self.fixed_lambda,
        };

        match self.variant {
            IdVariant::Rls => {
                rls_update(&mut self.model.theta, &mut self.p_cov, y, &phi, lambda)?;
            }
            IdVariant::ErRls => {
                er_rls_update(&mut self.model.theta, &mut self.r_info, &self.r_inf, y, &phi, lambda)?;
            }
        }

        self.regressor.push_y(y);
        self.last_lambda = lambda;
        Ok((residual, lambda))
    }
}
