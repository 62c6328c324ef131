//! Acceptance suite: one test per criterion, each printing a pass line with
//! its measured margins (run with `--nocapture` to see them).
//!
//! Oracles live in this file and stay independent of the library paths they
//! check: batch least squares by dense normal equations, the one-step model
//! recursion rolled forward, active-set enumeration for the QP, and a
//! step-doubled RK4 integration for the zero-order-hold discretization.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pcac::config::{preset, PlantPreset};
use pcac::mpc::build_prediction;
use pcac::plant::{discretize_zoh, LtiPlant};
use pcac::qp::{self, QpSpec, QpStatus};
use pcac::scenario::{run_scenario, SimLog};
use pcac::sysid::{er_rls_update, rls_update, ArxModel, Regressor, VrfParams, VrfTest};

fn randn(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[test]
fn criterion_01_rls_matches_batch_least_squares() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let p0_bar = 1e3;
    let n_hat = 2usize;
    let n = pcac::sysid::regressor_len(n_hat, 1, 1);
    let mut worst = 0.0f64;

    for _ in 0..200 {
        // Random stable ARX truth (real poles inside the unit circle) with
        // output noise.
        let r1 = rng.random_range(-0.95..0.95);
        let r2 = rng.random_range(-0.95..0.95);
        let f1 = r1 + r2;
        let f2 = -r1 * r2;
        let g: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let noise = rng.random_range(0.0..0.1);

        let mut theta = DMatrix::zeros(1, n);
        let mut p_cov = DMatrix::identity(n, n) * p0_bar;
        let mut gram = DMatrix::identity(n, n) / p0_bar;
        let mut rhs = DVector::zeros(n);

        let mut reg = Regressor::new(n_hat, 1, 1);
        let (mut y1, mut y2, mut u1, mut u2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for _ in 0..200 {
            let u = randn(&mut rng);
            let y = f1 * y1 + f2 * y2 + g[0] * u + g[1] * u1 + g[2] * u2
                + noise * randn(&mut rng);
            reg.push_u(&DVector::from_element(1, u));
            let phi = reg.phi();
            rls_update(&mut theta, &mut p_cov, &DVector::from_element(1, y), &phi, 1.0).unwrap();
            reg.push_y(&DVector::from_element(1, y));

            gram += &phi * phi.transpose();
            rhs += &phi * y;
            let batch = gram.clone().cholesky().unwrap().solve(&rhs);
            let diff = (0..n).map(|j| (theta[(0, j)] - batch[j]).abs()).fold(0.0, f64::max);
            let scale = batch.abs().max().max(1.0);
            worst = worst.max(diff / scale);

            (y2, y1, u2, u1) = (y1, y, u1, u);
        }
    }
    assert!(worst <= 1e-8, "worst relative deviation {worst}");
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 10.0, "runtime {dt}s");
    println!("criterion 01 PASS: recursive vs batch least squares, worst rel dev {worst:.2e} ({dt:.1}s)");
}

#[test]
fn criterion_02_exponential_resetting_contracts_geometrically() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let dim = 4usize;
    let phi = DVector::zeros(dim);
    let y = DVector::zeros(1);
    for _ in 0..100 {
        let m = DMatrix::from_fn(dim, dim, |_, _| randn(&mut rng));
        let mut r = &m * m.transpose() + DMatrix::identity(dim, dim) * rng.random_range(0.1..1.0);
        let m = DMatrix::from_fn(dim, dim, |_, _| randn(&mut rng));
        let r_inf = &m * m.transpose() + DMatrix::identity(dim, dim) * rng.random_range(0.1..1.0);
        let mut theta = DMatrix::zeros(1, dim);
        let d0 = (&r - &r_inf).norm();
        // Repeated affine maps accumulate roundoff at machine scale.
        let floor = 1e-12 * (1.0 + r_inf.norm());
        for k in 1..=500 {
            er_rls_update(&mut theta, &mut r, &r_inf, &y, &phi, 0.95).unwrap();
            let bound = 0.95f64.powi(k) * d0;
            let dist = (&r - &r_inf).norm();
            assert!(
                dist <= bound * (1.0 + 1e-9) + floor,
                "step {k}: {dist} > {bound}"
            );
        }
    }
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 5.0, "runtime {dt}s");
    println!("criterion 02 PASS: information matrix contracts within the 0.95^k envelope ({dt:.1}s)");
}

/// Reference rollout of the one-step model over the horizon.
fn rollout(
    model: &ArxModel,
    ys: &[DVector<f64>],
    us: &[DVector<f64>],
    u_future: &[DVector<f64>],
) -> DVector<f64> {
    let n = model.n_hat();
    let p = model.n_outputs();
    let ell = u_future.len();
    let mut y_seq: Vec<DVector<f64>> = ys.to_vec();
    let mut u_seq: Vec<DVector<f64>> = us.to_vec();
    u_seq.extend_from_slice(u_future);
    let mut out = DVector::zeros(ell * p);
    for i in 1..=ell {
        let mut y = DVector::zeros(p);
        for j in 1..=n {
            y -= model.f_block(j) * &y_seq[n - 1 + i - j];
        }
        for j in 0..=n {
            y += model.g_block(j) * &u_seq[n - 1 + i - j];
        }
        y_seq.push(y.clone());
        out.rows_mut((i - 1) * p, p).copy_from(&y);
    }
    out
}

#[test]
fn criterion_03_prediction_operators_match_the_rollout() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let mut count = 0;
    'outer: loop {
        for n_hat in [1usize, 2, 3] {
            for ell in [1usize, 5, 30] {
                if count >= 500 {
                    break 'outer;
                }
                count += 1;
                let p = rng.random_range(1..=2usize);
                let m = rng.random_range(1..=2usize);
                let mut model = ArxModel::zeros(n_hat, p, m);
                for i in 1..=n_hat {
                    let f = DMatrix::from_fn(p, p, |_, _| {
                        rng.random_range(-0.4..0.4) / n_hat as f64
                    });
                    model.set_f_block(i, &f);
                }
                for i in 0..=n_hat {
                    let g = DMatrix::from_fn(p, m, |_, _| rng.random_range(-1.0..1.0));
                    model.set_g_block(i, &g);
                }
                let ys: Vec<DVector<f64>> = (0..n_hat)
                    .map(|_| DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0)))
                    .collect();
                let us: Vec<DVector<f64>> = (0..n_hat)
                    .map(|_| DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)))
                    .collect();
                let u_future: Vec<DVector<f64>> = (0..ell)
                    .map(|_| DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)))
                    .collect();

                let ops = build_prediction(&model, &ys, &us, ell).unwrap();
                let mut u_stack = DVector::zeros(ell * m);
                for (i, u) in u_future.iter().enumerate() {
                    u_stack.rows_mut(i * m, m).copy_from(u);
                }
                let predicted = &ops.gamma + &ops.t * u_stack;
                let reference = rollout(&model, &ys, &us, &u_future);
                worst = worst.max((&predicted - &reference).abs().max());
            }
        }
    }
    assert!(worst <= 1e-10, "worst absolute deviation {worst}");
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 10.0, "runtime {dt}s");
    println!("criterion 03 PASS: 500 prediction instances within {worst:.2e} of the rollout ({dt:.1}s)");
}

/// Equality-constrained KKT enumeration over every constraint subset.
fn enumerate_qp(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    g: &DMatrix<f64>,
    h_ineq: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = h.nrows();
    let mc = g.nrows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0..(1usize << mc) {
        let rows: Vec<usize> = (0..mc).filter(|i| mask & (1 << i) != 0).collect();
        let q = rows.len();
        if q > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + q, n + q);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        let mut rhs = DVector::zeros(n + q);
        rhs.rows_mut(0, n).copy_from(&(-f));
        for (j, &i) in rows.iter().enumerate() {
            for k in 0..n {
                kkt[(n + j, k)] = g[(i, k)];
                kkt[(k, n + j)] = g[(i, k)];
            }
            rhs[n + j] = h_ineq[i];
        }
        let sol = match kkt.full_piv_lu().solve(&rhs) {
            Some(s) => s,
            None => continue,
        };
        let x = sol.rows(0, n).into_owned();
        if sol.rows(n, q).iter().any(|&mu| mu < -1e-9) {
            continue;
        }
        if (g * &x - h_ineq).iter().any(|&s| s > 1e-8) {
            continue;
        }
        let obj = 0.5 * (&x.transpose() * h * &x)[(0, 0)] + f.dot(&x);
        if best.as_ref().is_none_or(|(b, _)| obj < *b - 1e-12) {
            best = Some((obj, x));
        }
    }
    best.map(|(_, x)| x)
}

#[test]
fn criterion_04_qp_solver_matches_enumeration_with_kkt_certificates() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut solved = 0;
    let mut worst = 0.0f64;
    let mut worst_kkt = 0.0f64;
    while solved < 300 {
        let n = rng.random_range(1..=4usize);
        let mc = rng.random_range(0..=6usize);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = &m * m.transpose() + DMatrix::identity(n, n) * (0.2 + rng.random::<f64>());
        let f = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let g = DMatrix::from_fn(mc, n, |_, _| rng.random_range(-1.0..1.0));
        let h_ineq = DVector::from_fn(mc, |_, _| rng.random_range(-0.5..1.5));
        let oracle = match enumerate_qp(&h, &f, &g, &h_ineq) {
            Some(x) => x,
            None => continue, // infeasible draw; not part of this criterion
        };
        let spec = QpSpec { h, f, g, h_ineq, x0: None };
        let sol = qp::solve(&spec).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        worst = worst.max((&sol.x - &oracle).abs().max());
        let (st, fe, co) = qp::kkt_residuals(&spec, &sol);
        worst_kkt = worst_kkt.max(st).max(fe).max(co);
        solved += 1;
    }
    assert!(worst <= 1e-6, "worst deviation from enumeration {worst}");
    assert!(worst_kkt <= 1e-8, "worst KKT residual {worst_kkt}");
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 10.0, "runtime {dt}s");
    println!("criterion 04 PASS: 300 QPs match enumeration to {worst:.2e}, KKT <= {worst_kkt:.2e} ({dt:.1}s)");
}

/// RK4 over the sample interval with held inputs, step-doubled for validation.
#[allow(clippy::too_many_arguments)]
fn rk4_state(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    b_w: &DMatrix<f64>,
    x0: &DVector<f64>,
    u: f64,
    w: f64,
    t: f64,
    substeps: usize,
) -> DVector<f64> {
    let h = t / substeps as f64;
    let forcing = b * u + b_w * w;
    let deriv = |x: &DVector<f64>| a * x + &forcing;
    let mut x = x0.clone();
    for _ in 0..substeps {
        let k1 = deriv(&x);
        let k2 = deriv(&(&x + &k1 * (h / 2.0)));
        let k3 = deriv(&(&x + &k2 * (h / 2.0)));
        let k4 = deriv(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

#[test]
fn criterion_05_discretization_matches_held_input_integration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let t_s = 0.01;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-3.0..3.0));
        let b = DMatrix::from_fn(2, 1, |_, _| rng.random_range(-2.0..2.0));
        let b_w = DMatrix::from_fn(2, 1, |_, _| rng.random_range(-2.0..2.0));
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let x0 = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        let u = rng.random_range(-2.0..2.0);
        let w = rng.random_range(-1.0..1.0);

        let mut plant = LtiPlant::new(a.clone(), b.clone(), b_w.clone(), c).unwrap();
        plant.x = x0.clone();
        let disc = discretize_zoh(&plant, t_s).unwrap();
        plant.step(&disc, &DVector::from_element(1, u), w, 0).unwrap();

        let coarse = rk4_state(&a, &b, &b_w, &x0, u, w, t_s, 200);
        let fine = rk4_state(&a, &b, &b_w, &x0, u, w, t_s, 400);
        assert!((&coarse - &fine).norm() <= 1e-12 * (1.0 + fine.norm()), "reference not converged");

        let rel = (&plant.x - &fine).norm() / fine.norm().max(1e-12);
        worst = worst.max(rel);
    }
    assert!(worst <= 1e-9, "worst relative deviation {worst}");

    // Preset plants against their closed forms.
    let t: f64 = 0.01;
    let checks: [(PlantPreset, DMatrix<f64>, DMatrix<f64>); 3] = [
        (
            PlantPreset::UndampedOscillator,
            DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]),
            DMatrix::from_row_slice(2, 1, &[1.0 - t.cos(), t.sin()]),
        ),
        (
            PlantPreset::DoubleIntegrator,
            DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[t * t / 2.0, t]),
        ),
        (
            PlantPreset::ExpUnstable,
            DMatrix::from_row_slice(2, 2, &[t.cosh(), t.sinh(), t.sinh(), t.cosh()]),
            DMatrix::from_row_slice(2, 1, &[t.cosh() - 1.0, t.sinh()]),
        ),
    ];
    for (p, a_d, b_d) in checks {
        let plant = preset(p).plant.build().unwrap();
        let disc = discretize_zoh(&plant, t).unwrap();
        assert!((&disc.a_d - &a_d).abs().max() <= 1e-12, "{p:?} state matrix");
        assert!((&disc.b_d - &b_d).abs().max() <= 1e-12, "{p:?} input matrix");
    }
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 5.0, "runtime {dt}s");
    println!("criterion 05 PASS: 100 random plants within {worst:.2e} of RK4, presets match closed forms ({dt:.1}s)");
}

fn oscillation_amplitude(log: &SimLog, lo: usize, hi: usize) -> f64 {
    let w = &log.rows[lo..hi];
    let max = w.iter().map(|r| r.r).fold(f64::NEG_INFINITY, f64::max);
    let min = w.iter().map(|r| r.r).fold(f64::INFINITY, f64::min);
    (max - min) / 2.0
}

#[test]
fn criterion_06_oscillator_scenario_converges_and_tracks() {
    let start = Instant::now();
    let cfg = preset(PlantPreset::UndampedOscillator);
    let log = run_scenario(&cfg).expect("scenario must complete");
    assert_eq!(log.rows.len(), 40_000);

    let worst_band = log
        .rows
        .iter()
        .filter(|row| row.k >= 20_000)
        .map(|row| (row.r - 2.0).abs())
        .fold(0.0f64, f64::max);
    assert!(worst_band <= 0.2, "command band violation: {worst_band}");

    let tail = &log.rows[36_000..];
    let rms_e = (tail.iter().map(|r| r.e * r.e).sum::<f64>() / tail.len() as f64).sqrt();
    let rms_limit = 2.0 * 5e-5 + 0.05;
    assert!(rms_e <= rms_limit, "tail tracking RMS {rms_e} > {rms_limit}");

    let max_y = log.rows.iter().map(|r| r.y.abs()).fold(0.0f64, f64::max);
    assert!(max_y <= 10.0, "plant output reached {max_y}");

    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 60.0, "runtime {dt}s");
    println!(
        "criterion 06 PASS: oscillator |r-2| <= {worst_band:.3}, tail RMS(e) {rms_e:.2e}, max|y| {max_y:.2} ({dt:.1}s)"
    );
}

#[test]
fn criterion_07_double_integrator_rejects_the_disturbance() {
    let start = Instant::now();
    let cfg = preset(PlantPreset::DoubleIntegrator);
    let log = run_scenario(&cfg).expect("scenario must complete");

    let worst_band = log
        .rows
        .iter()
        .filter(|row| row.k >= 20_000)
        .map(|row| (row.r + 2.0).abs())
        .fold(0.0f64, f64::max);
    assert!(worst_band <= 0.25, "command band violation: {worst_band}");

    let max_u = log.rows.iter().map(|r| r.u.abs()).fold(0.0f64, f64::max);
    assert!(max_u <= 10.0 + 1e-9, "control bound violated: {max_u}");

    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 60.0, "runtime {dt}s");
    println!(
        "criterion 07 PASS: double integrator |r+2| <= {worst_band:.3} under w=0.1, max|u| {max_u:.2} ({dt:.1}s)"
    );
}

#[test]
fn criterion_08_unstable_plant_stays_bounded_and_optimizes() {
    let start = Instant::now();
    let cfg = preset(PlantPreset::ExpUnstable);
    let log = run_scenario(&cfg).expect("scenario must complete");

    let max_y = log.rows.iter().map(|r| r.y.abs()).fold(0.0f64, f64::max);
    assert!(max_y <= 50.0, "plant output reached {max_y}");

    let worst_band = log
        .rows
        .iter()
        .filter(|row| row.k >= 25_000)
        .map(|row| (row.r - 4.0).abs())
        .fold(0.0f64, f64::max);
    assert!(worst_band <= 0.3, "command band violation: {worst_band}");

    let j_min = log.rows[36_000..].iter().map(|r| r.j).fold(f64::INFINITY, f64::min);
    assert!(j_min >= 0.9, "tail cost dropped to {j_min}");

    let max_u = log.rows.iter().map(|r| r.u.abs()).fold(0.0f64, f64::max);
    assert!(max_u <= 20.0 + 1e-9, "control bound violated: {max_u}");

    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 60.0, "runtime {dt}s");
    println!(
        "criterion 08 PASS: unstable plant max|y| {max_y:.2}, |r-4| <= {worst_band:.3}, tail J >= {j_min:.4} ({dt:.1}s)"
    );
}

#[test]
fn criterion_09_dither_modulation_attenuates_the_oscillations() {
    let start = Instant::now();
    for (p, label) in [
        (PlantPreset::UndampedOscillator, "oscillator"),
        (PlantPreset::DoubleIntegrator, "double integrator"),
    ] {
        let log = run_scenario(&preset(p)).expect("scenario must complete");
        let before = oscillation_amplitude(&log, 19_000, 21_000);
        let after = oscillation_amplitude(&log, 38_000, 40_000);
        let ratio = after / before;
        assert!(
            ratio <= 0.10,
            "{label}: amplitude ratio {ratio} (before {before}, after {after})"
        );
        println!(
            "criterion 09 PASS ({label}): oscillation amplitude {before:.4} -> {after:.6}, ratio {:.2}%",
            100.0 * ratio
        );
    }
    let dt = start.elapsed().as_secs_f64();
    println!("criterion 09 PASS: dither attenuation on both scenarios ({dt:.1}s)");
}

#[test]
fn criterion_10_variance_test_gates_the_forgetting_factor() {
    let start = Instant::now();
    // Window lengths sized so the overlapping denominator cannot mask a jump.
    let params = VrfParams { eta: 0.1, tau_n: 10, tau_d: 40, alpha_sig: 0.01 };
    let test = VrfTest::new(params, 1).unwrap();

    // Stationary residuals: the gate stays closed in at least 99% of steps.
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut window: VecDeque<DVector<f64>> = VecDeque::new();
    let mut closed = 0usize;
    let total = 10_000usize;
    for _ in 0..total {
        window.push_back(DVector::from_element(1, randn(&mut rng)));
        if window.len() > params.tau_d {
            window.pop_front();
        }
        if test.lambda(&window).0 == 1.0 {
            closed += 1;
        }
    }
    let closed_frac = closed as f64 / total as f64;
    assert!(closed_frac >= 0.99, "gate opened too often: closed fraction {closed_frac}");

    // A x100 variance step opens the gate within tau_n steps.
    let mut window: VecDeque<DVector<f64>> = VecDeque::new();
    for _ in 0..params.tau_d {
        window.push_back(DVector::from_element(1, randn(&mut rng)));
    }
    let mut opened_at = None;
    for step in 1..=params.tau_n {
        window.push_back(DVector::from_element(1, 10.0 * randn(&mut rng)));
        window.pop_front();
        let (lambda, _) = test.lambda(&window);
        if lambda < 1.0 {
            opened_at = Some((step, lambda));
            break;
        }
    }
    let (step, lambda) = opened_at.expect("variance step was never detected");
    assert!(lambda > 0.0 && lambda < 1.0);

    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 5.0, "runtime {dt}s");
    println!(
        "criterion 10 PASS: stationary gate closed {:.2}% of steps; x100 variance step detected after {step} samples (lambda {lambda:.3}) ({dt:.1}s)",
        100.0 * closed_frac
    );
}
