//! Extremum-seeking command generator.
//!
//! Discrete pipeline per cost sample `J_k`:
//!
//! ```text
//! y_h <- (1 - w_h) y_h + J_k - J_{k-1}          highpass (bias removal)
//! y_d <- (2 b / a) w_l sin(k w_es T_s) y_h      demodulation
//! y_l <- (1 - w_l) y_l + w_l y_d                lowpass (gradient estimate)
//! y_es <- y_es + K y_l                          integrator
//! r_k = y_es + a sin(k w_es T_s)                command with injected dither
//! ```
//!
//! `w_h` and `w_l` are per-step cutoffs. The gradient gain `K` is either fixed
//! or normalized by the gradient-estimate magnitude, and the dither amplitude
//! (and, for the smooth scheme, the gain) can be attenuated once a configured
//! step is passed, which kills the residual oscillations after convergence.

use crate::error::{Error, Result};

/// Filter, dither, and timing parameters of the generator.
#[derive(Debug, Clone, Copy)]
pub struct EcgParams {
    /// Highpass cutoff, per step; enters the recursion directly.
    pub omega_h: f64,
    /// Lowpass cutoff, per step; enters the recursion directly.
    pub omega_l: f64,
    /// Dither frequency in rad/s; the per-step phase increment is `omega_es * t_s`.
    pub omega_es: f64,
    /// Modulation dither amplitude (injected into the command).
    pub a_es: f64,
    /// Demodulation dither amplitude (multiplies the highpassed cost).
    pub b_es: f64,
    /// Sample period in seconds.
    pub t_s: f64,
    /// Drop the extra lowpass-cutoff factor from the demodulation stage,
    /// matching the block-diagram form of the pipeline.
    pub figure_form: bool,
    /// Use the current (possibly attenuated) dither amplitude in the
    /// demodulation denominator instead of the configured one.
    pub demod_tracks_dither: bool,
}

impl EcgParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_h > 0.0 && self.omega_h < 1.0) || !(self.omega_l > 0.0 && self.omega_l < 1.0)
        {
            return Err(Error::ContractViolation(
                "filter cutoffs must lie in (0, 1) per step".into(),
            ));
        }
        if !(self.a_es > 0.0) || !(self.b_es > 0.0) {
            return Err(Error::ContractViolation("dither amplitudes must be positive".into()));
        }
        if !(self.t_s > 0.0) || !(self.omega_es > 0.0) {
            return Err(Error::ContractViolation(
                "sample period and dither frequency must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Gradient gain law.
#[derive(Debug, Clone, Copy)]
pub enum GainLaw {
    Constant {
        k0: f64,
    },
    /// `K = k0 / (eps + |y_l|)`; the additive form keeps the division safe.
    /// `multiplicative_norm` selects `k0 / (eps * |y_l|)` with `|y_l|` floored.
    Normalized {
        k0: f64,
        eps_norm: f64,
        multiplicative_norm: bool,
    },
}

impl GainLaw {
    pub fn eval(&self, y_l: f64) -> f64 {
        match *self {
            GainLaw::Constant { k0 } => k0,
            GainLaw::Normalized { k0, eps_norm, multiplicative_norm } => {
                if multiplicative_norm {
                    k0 / (eps_norm * y_l.abs().max(1e-300))
                } else {
                    k0 / (eps_norm + y_l.abs())
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let GainLaw::Normalized { eps_norm, .. } = self {
            if !(*eps_norm > 0.0) {
                return Err(Error::ContractViolation(
                    "normalization constant must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Dither (and gain) attenuation applied after `k_switch`.
#[derive(Debug, Clone, Copy)]
pub enum ModulationScheme {
    None,
    /// Geometric decay of the dither amplitude while the gradient estimate
    /// stays below a threshold, floored at `a_min`.
    ThresholdDecay {
        a_min: f64,
        alpha: f64,
        beta: f64,
        k_switch: u64,
    },
    /// Smooth output-dependent attenuation of both the dither amplitude and
    /// the gradient gain; the decay fades out when `|y_l|` is large relative
    /// to `y_l_ref`.
    SmoothAttenuation {
        a_min: f64,
        k_min: f64,
        gamma_a: f64,
        gamma_k: f64,
        y_l_ref: f64,
        k_switch: u64,
    },
}

impl ModulationScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ModulationScheme::None => Ok(()),
            ModulationScheme::ThresholdDecay { a_min, alpha, beta, .. } => {
                if !(a_min > 0.0) || !(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0) {
                    return Err(Error::ContractViolation(
                        "threshold decay needs a_min > 0, alpha in (0,1), beta > 0".into(),
                    ));
                }
                Ok(())
            }
            ModulationScheme::SmoothAttenuation { a_min, k_min, gamma_a, gamma_k, y_l_ref, .. } => {
                if !(a_min > 0.0)
                    || !(k_min > 0.0)
                    || !(gamma_a > 0.0 && gamma_a < 1.0)
                    || !(gamma_k > 0.0 && gamma_k < 1.0)
                    || !(y_l_ref > 0.0)
                {
                    return Err(Error::ContractViolation(
                        "smooth attenuation parameters out of range".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    fn modulates_gain(&self) -> bool {
        matches!(self, ModulationScheme::SmoothAttenuation { .. })
    }

    fn k_switch(&self) -> Option<u64> {
        match *self {
            ModulationScheme::None => None,
            ModulationScheme::ThresholdDecay { k_switch, .. }
            | ModulationScheme::SmoothAttenuation { k_switch, .. } => Some(k_switch),
        }
    }
}

/// Pipeline signals and the per-step dither/gain values.
#[derive(Debug, Clone, Copy, Default)]
pub struct EcgState {
    pub y_h: f64,
    pub y_d: f64,
    pub y_l: f64,
    pub y_es: f64,
    pub j_prev: Option<f64>,
    pub k: u64,
    pub a_cur: f64,
    pub k_cur: f64,
}

/// The command generator: parameters, gain law, modulation scheme, and state.
#[derive(Debug, Clone)]
pub struct Ecg {
    pub params: EcgParams,
    pub gain: GainLaw,
    pub modulation: ModulationScheme,
    pub state: EcgState,
}

impl Ecg {
    pub fn new(params: EcgParams, gain: GainLaw, modulation: ModulationScheme) -> Result<Self> {
        params.validate()?;
        gain.validate()?;
        modulation.validate()?;
        let state = EcgState {
            a_cur: params.a_es,
            k_cur: gain.eval(0.0),
            ..EcgState::default()
        };
        Ok(Self { params, gain, modulation, state })
    }

    /// Consumes the cost sample for this step and emits the command `r_k`.
    ///
    /// The first call seeds the cost differencer with its own sample, so the
    /// highpass output starts at zero instead of an artificial impulse.
    pub fn step(&mut self, j_k: f64) -> f64 {
        let p = &self.params;
        let s = &mut self.state;
        debug_assert!(j_k.is_finite());

        let j_prev = s.j_prev.unwrap_or(j_k);
        s.y_h = (1.0 - p.omega_h) * s.y_h + j_k - j_prev;

        let phase = (s.k as f64) * p.omega_es * p.t_s;
        let dither = phase.sin();
        let a_demod = if p.demod_tracks_dither { s.a_cur } else { p.a_es };
        let demod_gain =
            2.0 * p.b_es / a_demod * if p.figure_form { 1.0 } else { p.omega_l };
        s.y_d = demod_gain * dither * s.y_h;
        s.y_l = (1.0 - p.omega_l) * s.y_l + p.omega_l * s.y_d;

        let gain_frozen = self.modulation.modulates_gain()
            && self.modulation.k_switch().is_some_and(|ks| s.k > ks);
        if !gain_frozen {
            s.k_cur = self.gain.eval(s.y_l);
        }
        s.y_es += s.k_cur * s.y_l;

        let r = s.y_es + s.a_cur * dither;

        match self.modulation {
            ModulationScheme::None => {}
            ModulationScheme::ThresholdDecay { a_min, alpha, beta, k_switch } => {
                if s.k > k_switch && s.y_l.abs() < beta {
                    s.a_cur = (alpha * s.a_cur).max(a_min);
                }
            }
            ModulationScheme::SmoothAttenuation {
                a_min,
                k_min,
                gamma_a,
                gamma_k,
                y_l_ref,
                k_switch,
            } => {
                if s.k > k_switch {
                    let shape = (-(s.y_l / y_l_ref).powi(2)).exp();
                    s.a_cur = ((1.0 - gamma_a * shape) * s.a_cur).max(a_min);
                    s.k_cur = ((1.0 - gamma_k * shape) * s.k_cur).max(k_min);
                }
            }
        }

        s.j_prev = Some(j_k);
        s.k += 1;
        r
    }
}
