//! Closed-loop orchestration: sample, identify, generate the command,
//! optimize, apply.
//!
//! Per step `k`: (1) sample `y_k` and the cost `J_k`; (2) feed the identifier
//! with `(y_k, u_k)` where `u_k` is the control currently applied; (3) advance
//! the command generator to get `r_k`; (4) assemble and solve the horizon QP
//! (warm-started) for `u_{k+1}`; (5) advance the plant one period under `u_k`.
//! The first few steps clamp the control to zero while the regressor fills;
//! the bootstrap coefficient in the estimate then gives the first QP a live
//! control channel, and identification proceeds from the resulting transient.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::config::ScenarioConfig;
use crate::ecg::Ecg;
use crate::error::{Error, Result};
use crate::mpc::{
    build_prediction, build_qp, extract_control, ControlBounds, HorizonWeights, IntegratorState,
    OutputMaps,
};
use crate::plant::discretize_zoh;
use crate::qp::{self, QpSolution, QpStatus};
use crate::sysid::RlsState;

/// One sampled instant of every logged signal.
#[derive(Debug, Clone, Copy)]
pub struct LogRow {
    pub k: usize,
    pub t: f64,
    pub u: f64,
    pub y: f64,
    pub r: f64,
    pub j: f64,
    pub e: f64,
    pub y_h: f64,
    pub y_d: f64,
    pub y_l: f64,
    pub y_es: f64,
    pub a_es: f64,
    pub k_es: f64,
    pub lambda: f64,
}

/// Summary metrics reported next to the trajectory.
#[derive(Debug, Clone, Copy)]
pub struct Summary {
    pub final_command_error: f64,
    pub rms_tracking_error_tail: f64,
    pub convergence_step: Option<usize>,
}

/// Full per-step trajectory record of one scenario run.
#[derive(Debug, Clone)]
pub struct SimLog {
    pub rows: Vec<LogRow>,
    pub r_star: f64,
    /// Estimated coefficient rows, one per step, when theta logging is on.
    pub theta_rows: Option<Vec<Vec<f64>>>,
}

impl SimLog {
    pub fn summary(&self) -> Summary {
        let final_command_error =
            self.rows.last().map(|row| (row.r - self.r_star).abs()).unwrap_or(f64::NAN);
        let tail = (self.rows.len() as f64 * 0.1).ceil() as usize;
        let tail = tail.clamp(1, self.rows.len().max(1));
        let start = self.rows.len().saturating_sub(tail);
        let rms = if self.rows.is_empty() {
            f64::NAN
        } else {
            let sum_sq: f64 = self.rows[start..].iter().map(|row| row.e * row.e).sum();
            (sum_sq / (self.rows.len() - start) as f64).sqrt()
        };
        let band = 0.05 * self.r_star.abs() + 0.05;
        let convergence_step = self
            .rows
            .iter()
            .find(|row| (row.r - self.r_star).abs() <= band)
            .map(|row| row.k);
        Summary { final_command_error, rms_tracking_error_tail: rms, convergence_step }
    }
}

/// A run that aborted mid-trajectory; the partial log is preserved.
#[derive(Debug)]
pub struct RunError {
    pub error: Error,
    pub partial: SimLog,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({} steps logged)", self.error, self.partial.rows.len())
    }
}

impl std::error::Error for RunError {}

/// Executes the configured closed loop and returns the trajectory log.
pub fn run_scenario(cfg: &ScenarioConfig) -> std::result::Result<SimLog, Box<RunError>> {
    let mut log = SimLog {
        rows: Vec::with_capacity(cfg.n_steps),
        r_star: cfg.cost.r_star,
        theta_rows: cfg.log_theta.then(Vec::new),
    };
    match run_into(cfg, &mut log) {
        Ok(()) => Ok(log),
        Err(error) => Err(Box::new(RunError { error, partial: log })),
    }
}

fn run_into(cfg: &ScenarioConfig, log: &mut SimLog) -> Result<()> {
    cfg.validate()?;
    let mut plant = cfg.plant.build()?;
    let disc = discretize_zoh(&plant, cfg.t_s)?;

    let pc = &cfg.pcac;
    let n = crate::sysid::regressor_len(pc.n_hat, 1, 1);
    let r_inf = pc
        .r_inf
        .map(|scale| nalgebra::DMatrix::identity(n, n) * scale);
    let mut rls = RlsState::new(
        pc.n_hat,
        1,
        1,
        pc.p0_bar,
        pc.id_variant,
        r_inf,
        Some(pc.vrf),
    )?;
    if pc.theta0_g != 0.0 {
        rls.model
            .set_g_block(1, &nalgebra::DMatrix::from_row_slice(1, 1, &[pc.theta0_g]));
    }

    let mut ecg_params = cfg.ecg.params;
    ecg_params.t_s = cfg.t_s;
    let mut ecg = Ecg::new(ecg_params, cfg.ecg.gain, cfg.ecg.modulation)?;
    let weights =
        HorizonWeights::uniform(pc.ell, 1, 1, 0, pc.q, pc.q_i, pc.r, pc.r_delta, 0.0);
    let maps = OutputMaps::tracking_only(1);
    let bounds = ControlBounds {
        u_min: DVector::from_element(1, pc.u_min),
        u_max: DVector::from_element(1, pc.u_max),
        du_min: pc.du_min.map(|v| DVector::from_element(1, v)),
        du_max: pc.du_max.map(|v| DVector::from_element(1, v)),
    };
    let mut integrator = IntegratorState::zero(1);

    let mut u_cur = DVector::zeros(1);
    let mut r_prev = 0.0_f64;
    let mut warm: Option<QpSolution> = None;

    // A trajectory that has left any physically meaningful range takes the
    // identifier or the QP down with it; report that as divergence, not as a
    // numerical fault of the control path.
    let blown_up = |plant: &crate::plant::LtiPlant| plant.x.abs().max() > 1e4;

    for k in 0..cfg.n_steps {
        let y = plant.output();
        let j = cfg.cost.measure(r_prev, y[0]);

        let (_, lambda) = rls.ingest(&y, &u_cur).map_err(|e| {
            if blown_up(&plant) {
                Error::SimulationDiverged { step: k }
            } else {
                e
            }
        })?;

        let a_used = ecg.state.a_cur;
        let r = ecg.step(j);
        let r_vec = DVector::from_element(1, r);
        integrator.update(&y, &r_vec);

        let u_next = if k < pc.warmup {
            DVector::zeros(1)
        } else {
            let ops = build_prediction(
                &rls.model,
                &rls.regressor().recent_outputs(),
                &rls.regressor().recent_inputs(),
                pc.ell,
            )?;
            // Future commands are held at the current one.
            let r_future = vec![r_vec.clone(); pc.ell];
            let problem = build_qp(
                &ops, &weights, &maps, &bounds, &u_cur, &r_vec, &r_future, &integrator, &y,
            )?;
            let x0 = warm.as_ref().map(|sol| qp::warm_start_shift(sol, 1, pc.ell));
            let sol = qp::solve(&problem.into_spec(x0)).map_err(|e| {
                if blown_up(&plant) {
                    Error::SimulationDiverged { step: k }
                } else {
                    e
                }
            })?;
            if sol.status == QpStatus::Infeasible {
                return Err(Error::Numerical(format!(
                    "step {k}: horizon QP reported infeasible"
                )));
            }
            let u = extract_control(&sol, 1);
            warm = Some(sol);
            u
        };

        if let Some(thetas) = log.theta_rows.as_mut() {
            thetas.push(rls.model.theta.iter().copied().collect());
        }
        log.rows.push(LogRow {
            k,
            t: k as f64 * cfg.t_s,
            u: u_cur[0],
            y: y[0],
            r,
            j,
            e: r - y[0],
            y_h: ecg.state.y_h,
            y_d: ecg.state.y_d,
            y_l: ecg.state.y_l,
            y_es: ecg.state.y_es,
            a_es: a_used,
            k_es: ecg.state.k_cur,
            lambda,
        });

        plant.step(&disc, &u_cur, cfg.w, k)?;
        // Abort before downstream squares of the state overflow.
        if plant.x.abs().max() > 1e150 {
            return Err(Error::SimulationDiverged { step: k });
        }
        u_cur = u_next;
        r_prev = r;
    }
    Ok(())
}

pub const CSV_HEADER: &str = "k,t,u,y,r,J,e,y_h,y_d,y_l,y_es,a_es,K_es,lambda";

fn push_f64(out: &mut String, v: f64) {
    // 17 significant digits round-trip f64 exactly.
    let _ = write!(out, "{v:.16e}");
}

/// Renders the log as CSV with a fixed header and round-trip-exact decimals.
/// Coefficient columns `theta_0..` are appended when theta logging is on.
pub fn csv_string(log: &SimLog) -> String {
    let mut out = String::with_capacity(32 + log.rows.len() * 16 * 24);
    out.push_str(CSV_HEADER);
    if let Some(thetas) = &log.theta_rows {
        let width = thetas.first().map(|t| t.len()).unwrap_or(0);
        for i in 0..width {
            let _ = write!(out, ",theta_{i}");
        }
    }
    out.push('\n');
    for (idx, row) in log.rows.iter().enumerate() {
        let _ = write!(out, "{},", row.k);
        for (i, v) in [
            row.t, row.u, row.y, row.r, row.j, row.e, row.y_h, row.y_d, row.y_l, row.y_es,
            row.a_es, row.k_es, row.lambda,
        ]
        .into_iter()
        .enumerate()
        {
            if i > 0 {
                out.push(',');
            }
            push_f64(&mut out, v);
        }
        if let Some(thetas) = &log.theta_rows {
            for v in &thetas[idx] {
                out.push(',');
                push_f64(&mut out, *v);
            }
        }
        out.push('\n');
    }
    out
}

/// Renders the summary metrics as a small JSON document.
pub fn summary_json(summary: &Summary) -> String {
    let step = summary
        .convergence_step
        .map(|k| k.to_string())
        .unwrap_or_else(|| "null".to_string());
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"final_command_error\": {:.16e},", summary.final_command_error);
    let _ = writeln!(
        out,
        "  \"rms_tracking_error_tail\": {:.16e},",
        summary.rms_tracking_error_tail
    );
    let _ = writeln!(out, "  \"convergence_step\": {step}");
    out.push_str("}\n");
    out
}

/// Path of the summary file written next to a CSV log.
pub fn summary_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "log".to_string());
    name.push_str(".summary.json");
    csv_path.with_file_name(name)
}

/// Writes the CSV trajectory and the sibling summary file.
pub fn write_log(log: &SimLog, path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(log))?;
    std::fs::write(summary_path(path), summary_json(&log.summary()))?;
    Ok(())
}
