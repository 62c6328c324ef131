//! Continuous-time LTI plant under zero-order-hold sampled-data control.
//!
//! The plant is `x' = A x + B u + B_w w`, `y = C x`, with `u` and `w` held
//! constant over each sample interval. Discretization is exact: the held-input
//! solution is read off the exponential of the augmented matrix
//! `[[A, B, B_w], [0, 0, 0]]` scaled by the sample period.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Continuous-time LTI plant with state.
#[derive(Debug, Clone)]
pub struct LtiPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub b_w: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub x: DVector<f64>,
}

impl LtiPlant {
    /// Builds a plant with zero initial state, checking dimensional consistency.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, b_w: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::ContractViolation("state matrix must be square".into()));
        }
        if b.nrows() != n || b_w.nrows() != n {
            return Err(Error::ContractViolation(
                "input and disturbance matrices must have one row per state".into(),
            ));
        }
        if c.ncols() != n {
            return Err(Error::ContractViolation(
                "output matrix must have one column per state".into(),
            ));
        }
        let x = DVector::zeros(n);
        Ok(Self { a, b, b_w, c, x })
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Output `y = C x` at the current sample instant.
    pub fn output(&self) -> DVector<f64> {
        &self.c * &self.x
    }

    /// Advances one sample period under held `u` and `w` and returns the output
    /// sampled at the new state. The caller supplies the step index so a
    /// divergence error can name the offending step.
    pub fn step(
        &mut self,
        disc: &ZohDiscretization,
        u: &DVector<f64>,
        w: f64,
        step_index: usize,
    ) -> Result<DVector<f64>> {
        if !u.iter().all(|v| v.is_finite()) || !w.is_finite() {
            return Err(Error::ContractViolation("non-finite input sample".into()));
        }
        let x_next = &disc.a_d * &self.x + &disc.b_d * u + &disc.b_wd * w;
        if !x_next.iter().all(|v| v.is_finite()) {
            return Err(Error::SimulationDiverged { step: step_index });
        }
        self.x = x_next;
        Ok(self.output())
    }
}

/// Exact zero-order-hold discretization of an [`LtiPlant`].
#[derive(Debug, Clone, PartialEq)]
pub struct ZohDiscretization {
    pub a_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub b_wd: DMatrix<f64>,
    pub t_s: f64,
}

/// Discretizes `plant` at sample period `t_s` via the augmented-matrix exponential.
///
/// `A_d = exp(A T_s)` and `[B_d | B_wd] = ∫ exp(A τ) dτ · [B | B_w]`, both read
/// off one exponential of the augmented block matrix.
pub fn discretize_zoh(plant: &LtiPlant, t_s: f64) -> Result<ZohDiscretization> {
    if !(t_s > 0.0) {
        return Err(Error::ContractViolation("sample period must be positive".into()));
    }
    let n = plant.n_states();
    let m = plant.b.ncols();
    let mw = plant.b_w.ncols();
    let dim = n + m + mw;

    let mut aug = DMatrix::zeros(dim, dim);
    aug.view_mut((0, 0), (n, n)).copy_from(&plant.a);
    aug.view_mut((0, n), (n, m)).copy_from(&plant.b);
    aug.view_mut((0, n + m), (n, mw)).copy_from(&plant.b_w);
    aug *= t_s;

    let e = expm(&aug);
    if !e.iter().all(|v| v.is_finite()) {
        return Err(Error::Discretization("exponential has non-finite entries".into()));
    }

    Ok(ZohDiscretization {
        a_d: e.view((0, 0), (n, n)).into_owned(),
        b_d: e.view((0, n), (n, m)).into_owned(),
        b_wd: e.view((0, n + m), (n, mw)).into_owned(),
        t_s,
    })
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    const THETA_13: f64 = 5.371_920_351_148_152;
    // Padé-13 numerator coefficients.
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];

    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");

    // 1-norm: max absolute column sum.
    let norm = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a1 = a * 2.0_f64.powi(-s);

    let id = DMatrix::identity(n, n);
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let u_inner = &a6 * (B[13] * &a6 + B[11] * &a4 + B[9] * &a2)
        + B[7] * &a6
        + B[5] * &a4
        + B[3] * &a2
        + B[1] * &id;
    let u = &a1 * u_inner;
    let v = &a6 * (B[12] * &a6 + B[10] * &a4 + B[8] * &a2)
        + B[6] * &a6
        + B[4] * &a4
        + B[2] * &a2
        + B[0] * &id;

    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut r = lhs
        .full_piv_lu()
        .solve(&rhs)
        .expect("Padé denominator is singular");

    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Shape of the measured performance signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    /// `J(s) = -|s - r*|`, maximized at `s = r*` with `J(r*) = 0`.
    AbsLinear,
    /// `J(s) = -sqrt(|s - r*|)`, maximized at `s = r*` with `J(r*) = 0`.
    SqrtAbs,
    /// `J(s) = exp(-(s - r*)^2)`, maximized at `s = r*` with `J(r*) = 1`.
    Gaussian,
}

/// Which closed-loop signal the cost is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSignal {
    /// Evaluate at the generated command (matches the reported trajectories).
    Command,
    /// Evaluate at the plant output (matches the block-diagram wiring).
    Output,
}

/// Static performance map with a unique maximizer at `r_star`.
#[derive(Debug, Clone, Copy)]
pub struct CostMap {
    pub kind: CostKind,
    pub r_star: f64,
    pub eval_signal: EvalSignal,
}

impl CostMap {
    /// Evaluates the map at the command or the output per `eval_signal`.
    pub fn measure(&self, r: f64, y: f64) -> f64 {
        let s = match self.eval_signal {
            EvalSignal::Command => r,
            EvalSignal::Output => y,
        };
        self.eval_at(s)
    }

    /// Evaluates the map at an explicit point.
    pub fn eval_at(&self, s: f64) -> f64 {
        let d = s - self.r_star;
        match self.kind {
            CostKind::AbsLinear => -d.abs(),
            CostKind::SqrtAbs => -d.abs().sqrt(),
            CostKind::Gaussian => (-d * d).exp(),
        }
    }

    /// Value of the map at its maximizer.
    pub fn max_value(&self) -> f64 {
        match self.kind {
            CostKind::AbsLinear | CostKind::SqrtAbs => 0.0,
            CostKind::Gaussian => 1.0,
        }
    }
}
