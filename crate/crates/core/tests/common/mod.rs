//! Independent references shared by the integration tests.
#![allow(dead_code)]

use miura_rc::dynamics::*;
use miura_rc::geometry::Vec3;
use miura_rc::reservoir::{rmse, train_readout, ReadoutWeights, Segment, StateMatrix, TargetSignal};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = Normal::new(0.0, 1.0).unwrap();
    DMatrix::from_fn(rows, cols, |_, _| n.sample(rng))
}

pub fn states(values: DMatrix<f64>) -> StateMatrix {
    let (rows, cols) = values.shape();
    StateMatrix::new(values, (0..cols).collect(), vec![Segment { trajectory: "random".into(), start: 0, end: rows }])
        .unwrap()
}

pub fn targets(values: DMatrix<f64>) -> TargetSignal {
    let labels = (0..values.ncols()).map(|j| format!("y{j}")).collect();
    TargetSignal::new(values, labels).unwrap()
}

/// `[1 S]`, the design matrix with the bias column in front.
pub fn design(s: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = DMatrix::from_element(s.nrows(), s.ncols() + 1, 1.0);
    a.columns_mut(1, s.ncols()).copy_from(s);
    a
}

/// Solves `A'A w = A'y` with a hand-written Cholesky factorisation.
pub fn normal_equations(a: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let n = a.ncols();
    let mut g = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for r in 0..a.nrows() {
        for i in 0..n {
            b[i] += a[(r, i)] * y[r];
            for j in 0..=i {
                g[i][j] += a[(r, i)] * a[(r, j)];
            }
        }
    }
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (g[i][i] - s).sqrt();
            } else {
                l[i][j] = (g[i][j] - s) / l[j][j];
            }
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let mut w = vec![0.0; n];
    for i in (0..n).rev() {
        w[i] = (z[i] - (i + 1..n).map(|k| l[k][i] * w[k]).sum::<f64>()) / l[i][i];
    }
    w
}

pub fn stacked(w: &ReadoutWeights, task: usize) -> Vec<f64> {
    std::iter::once(w.bias[task]).chain(w.weights[task].iter().copied()).collect()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest relative weight error against the oracle and largest
/// `|[1 S]' r| / |S|` over `trials` random 200 x 29 problems.
pub fn pinv_against_oracle(trials: u64) -> (f64, f64) {
    let (mut worst_w, mut worst_orth): (f64, f64) = (0.0, 0.0);
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_matrix(200, 29, &mut rng);
        let y = random_matrix(200, 1, &mut rng);
        let w = train_readout(&states(s.clone()), &targets(y.clone()), 0.0).unwrap();
        let got = stacked(&w, 0);
        let a = design(&s);
        let want = normal_equations(&a, y.as_slice());
        let diff: Vec<f64> = got.iter().zip(&want).map(|(g, o)| g - o).collect();
        worst_w = worst_w.max(norm(&diff) / norm(&want));
        let r = &y - &a * DMatrix::from_column_slice(30, 1, &got);
        let orth = (a.transpose() * r).amax();
        worst_orth = worst_orth.max(orth / s.norm());
    }
    (worst_w, worst_orth)
}

pub fn undamped(p: ModelParams) -> ModelParams {
    ModelParams { rayleigh_alpha: 0.0, rayleigh_beta: 0.0, initial_jitter_mm: 0.0, ..p }
}

pub fn still() -> ExcitationSpec {
    ExcitationSpec::sine(0.0, 1.0, 1000.0)
}

/// A single facet with three corners clamped leaves one free node. Started
/// along its softest eigenvector with a tiny amplitude it is a harmonic
/// oscillator with `x(t) = x0 cos(wt)`. Returns the largest deviation over
/// one period at `dt = T / 1000`, relative to `x0`.
pub fn oscillator_error() -> f64 {
    let p = undamped(ModelParams { rows: 2, cols: 2, gravity: 0.0, ..Default::default() });
    let model = ReservoirModel::from_params(&p).unwrap();
    let free = (0..4).find(|&n| !model.is_clamped[n]).unwrap();
    let k = tangent_stiffness(&model, &vec![Vec3::zeros(); 4]).unwrap();
    let eig = SymmetricEigen::new(k / model.masses[free]);
    let (i, &lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    assert!(lam > 0.0);
    let omega = lam.sqrt();
    let mode = Vec3::new(eig.eigenvectors[(0, i)], eig.eigenvectors[(1, i)], eig.eigenvectors[(2, i)]);

    let x0 = 1e-9;
    let dt = 2.0 * PI / omega / 1000.0;
    let exc = still();
    let mut state = SimState::at_rest(4);
    state.disp[free] = mode * x0;
    // the stored velocity sits half a step behind the positions
    state.vel[free] = mode * (x0 * omega * (0.5 * omega * dt).sin());
    let mut stepper = Stepper::new(&model, &exc).with_terms(ForceTerms::ELASTIC);
    let mut worst: f64 = 0.0;
    for s in 0..1000 {
        let t = s as f64 * dt;
        stepper.advance(&mut state, t, t + dt).unwrap();
        let exact = x0 * (omega * (t + dt)).cos();
        worst = worst.max((state.disp[free].dot(&mode) - exact).abs());
    }
    worst / x0
}

/// Released from the unloaded rest shape under gravity, the undamped sheet
/// swings freely. Returns the largest energy error relative to the peak
/// kinetic energy.
pub fn energy_drift(dt: f64, seconds: f64) -> f64 {
    let model = ReservoirModel::from_params(&undamped(ModelParams { dt, ..Default::default() })).unwrap();
    let exc = still();
    let mut state = SimState::at_rest(model.node_count());
    let mut stepper = Stepper::new(&model, &exc);
    let e0 = synchronized_energy(&model, &state, dt).unwrap();
    let steps = (seconds / dt).round() as usize;
    let (mut drift, mut swing): (f64, f64) = (0.0, 0.0);
    for s in 0..steps {
        let t = s as f64 * dt;
        stepper.advance(&mut state, t, t + dt).unwrap();
        if s % 50 == 0 {
            let e = synchronized_energy(&model, &state, dt).unwrap();
            drift = drift.max((e - e0).abs());
            swing = swing.max(kinetic_energy(&model, &state.vel));
        }
    }
    assert!(swing > 0.0);
    drift / swing
}

/// Largest difference between hinge forces and central differences of the
/// hinge energy, relative to the largest force, at perturbed shapes.
pub fn hinge_gradient_error() -> f64 {
    // bars made negligible so the hinges carry everything
    let p = undamped(ModelParams { gravity: 0.0, bar_stiffness: 1e-9, ..Default::default() });
    let model = ReservoirModel::from_params(&p).unwrap();
    let zero = vec![Vec3::zeros(); model.node_count()];
    let mut worst_rel: f64 = 0.0;
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec3> = model
            .rest_positions()
            .iter()
            .map(|x| x + Vec3::from_fn(|_, _| rng.random_range(-0.8e-3..0.8e-3)))
            .collect();
        let f = internal_forces(&model, &x, &zero).unwrap();
        let scale = f.iter().map(|v| v.amax()).fold(0.0, f64::max);
        assert!(scale > 1e-3);
        let h = 1e-8;
        let mut y = x.clone();
        let mut worst: f64 = 0.0;
        for n in 0..x.len() {
            for d in 0..3 {
                y[n][d] = x[n][d] + h;
                let ep = elastic_energy(&model, &y);
                y[n][d] = x[n][d] - h;
                let em = elastic_energy(&model, &y);
                y[n][d] = x[n][d];
                worst = worst.max((-(ep - em) / (2.0 * h) - f[n][d]).abs());
            }
        }
        worst_rel = worst_rel.max(worst / scale);
    }
    worst_rel
}

/// Largest error over the hand-computed RMSE cases.
pub fn rmse_case_error() -> f64 {
    let cases: [(&[f64], &[f64], f64); 5] = [
        (&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 0.0),
        (&[1.0, 2.0, 3.0], &[3.5, 4.5, 5.5], 2.5),
        (&[-4.0, 7.0], &[-1.0, 4.0], 3.0),
        // squared errors 1, 4, 0, 9 -> mean 3.5
        (&[0.0, 0.0, 0.0, 0.0], &[1.0, -2.0, 0.0, 3.0], 3.5f64.sqrt()),
        (&[10.0], &[7.0], 3.0),
    ];
    cases.iter().map(|(y, yhat, want)| (rmse(y, yhat).unwrap() - want).abs()).fold(0.0, f64::max)
}
