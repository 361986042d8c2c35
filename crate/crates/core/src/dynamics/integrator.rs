//! Semi-implicit Euler time stepping with kinematically driven clamps.
//!
//! The stored velocity lags the positions by half a step, so the scheme is
//! the kick-drift leapfrog. [`synchronized_energy`] uses that to evaluate
//! energy at the position time level.

use super::excitation::ExcitationSpec;
use super::mechanics::{
    accumulate_forces, elastic_energy, gravitational_energy, kinetic_energy, ForceTerms,
};
use super::model::ReservoirModel;
use super::trajectory::{Trajectory, TrajectoryMeta};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Displacements from the rest mesh (m) and velocities (m/s).
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub disp: Vec<Vec3>,
    pub vel: Vec<Vec3>,
}

impl SimState {
    pub fn at_rest(nodes: usize) -> Self {
        Self {
            disp: vec![Vec3::zeros(); nodes],
            vel: vec![Vec3::zeros(); nodes],
        }
    }

    pub fn positions(&self, model: &ReservoirModel) -> Vec<Vec3> {
        model
            .rest_positions()
            .iter()
            .zip(&self.disp)
            .map(|(x, d)| x + d)
            .collect()
    }
}

/// Reusable buffers for repeated steps on one model.
pub struct Stepper<'a> {
    model: &'a ReservoirModel,
    excitation: &'a ExcitationSpec,
    terms: ForceTerms,
    pos: Vec<Vec3>,
    force: Vec<Vec3>,
    inv_mass: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a ReservoirModel, excitation: &'a ExcitationSpec) -> Self {
        let n = model.node_count();
        Self {
            model,
            excitation,
            terms: ForceTerms::ALL,
            pos: vec![Vec3::zeros(); n],
            force: vec![Vec3::zeros(); n],
            inv_mass: model.masses.iter().map(|m| 1.0 / m).collect(),
        }
    }

    pub fn with_terms(mut self, terms: ForceTerms) -> Self {
        self.terms = terms;
        self
    }

    /// Places the clamped nodes on the base trajectory at time `t`.
    pub fn drive_clamps(&self, state: &mut SimState, t: f64) {
        let u = self.excitation.displacement(t) * 1e-3;
        let du = self.excitation.velocity(t) * 1e-3;
        for &c in &self.model.clamped {
            state.disp[c] = Vec3::new(0.0, u, 0.0);
            state.vel[c] = Vec3::new(0.0, du, 0.0);
        }
    }

    /// One step from `t` to `t_next` (the caller passes `t_next` so sample
    /// instants can be hit exactly).
    pub fn advance(&mut self, state: &mut SimState, t: f64, t_next: f64) -> Result<()> {
        let dt = t_next - t;
        for ((p, x), d) in self.pos.iter_mut().zip(self.model.rest_positions()).zip(&state.disp) {
            *p = x + d;
        }
        accumulate_forces(self.model, &self.pos, &state.vel, self.terms, &mut self.force).map_err(
            |e| match e {
                Error::NumericalBlowup { detail, .. } => Error::NumericalBlowup { time: t, detail },
                other => other,
            },
        )?;
        for n in 0..state.disp.len() {
            if self.model.is_clamped[n] {
                continue;
            }
            state.vel[n] += self.force[n] * (dt * self.inv_mass[n]);
            state.disp[n] += state.vel[n] * dt;
        }
        self.drive_clamps(state, t_next);
        Ok(())
    }
}

/// Advances `state` by `dt` from time `t`.
pub fn step(
    model: &ReservoirModel,
    state: &mut SimState,
    excitation: &ExcitationSpec,
    t: f64,
    dt: f64,
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    Stepper::new(model, excitation).advance(state, t, t + dt)
}

/// Kinetic + elastic + gravitational energy with the half-step velocity
/// brought to the position time level. Assumes damping is off.
pub fn synchronized_energy(model: &ReservoirModel, state: &SimState, dt: f64) -> Result<f64> {
    let pos = state.positions(model);
    let mut force = vec![Vec3::zeros(); model.node_count()];
    let terms = ForceTerms { elastic: true, damping: false, gravity: true };
    accumulate_forces(model, &pos, &state.vel, terms, &mut force)?;
    let vel: Vec<Vec3> = (0..model.node_count())
        .map(|n| {
            if model.is_clamped[n] {
                state.vel[n]
            } else {
                state.vel[n] + force[n] * (0.5 * dt / model.masses[n])
            }
        })
        .collect();
    Ok(kinetic_energy(model, &vel) + elastic_energy(model, &pos) + gravitational_energy(model, &pos))
}

/// Integer number of internal steps per output sample.
pub fn steps_per_sample(dt: f64, sample_rate: f64) -> usize {
    let ratio = 1.0 / (sample_rate * dt);
    let r = ratio.round();
    if (ratio - r).abs() < 1e-6 * ratio.max(1.0) {
        (r as usize).max(1)
    } else {
        ratio.ceil() as usize
    }
}

/// Shakes `model` with `excitation` for `duration` seconds and records the
/// vertical displacement of every node at `sample_rate`.
pub fn simulate(
    model: &ReservoirModel,
    excitation: &ExcitationSpec,
    duration: f64,
    sample_rate: f64,
    seed: u64,
) -> Result<Trajectory> {
    excitation.validate()?;
    if !(duration > 0.0 && sample_rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "duration ({duration}) and sample rate ({sample_rate}) must be positive"
        )));
    }
    if sample_rate > 1.0 / model.params.dt + 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "sample rate {sample_rate} Hz exceeds the integrator rate {} Hz",
            1.0 / model.params.dt
        )));
    }
    let n_nodes = model.node_count();
    let n_samples = (duration * sample_rate).round() as usize;
    if n_samples == 0 {
        return Err(Error::InsufficientSamples("run shorter than one sample".into()));
    }
    let sub = steps_per_sample(model.params.dt, sample_rate);
    let dt = 1.0 / (sample_rate * sub as f64);

    let mut state = SimState::at_rest(n_nodes);
    let jitter = model.params.initial_jitter_mm * 1e-3;
    if jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for n in 0..n_nodes {
            if model.is_clamped[n] {
                continue;
            }
            for d in 0..3 {
                state.disp[n][d] = rng.random_range(-jitter..=jitter);
            }
        }
    }

    let mut stepper = Stepper::new(model, excitation);
    stepper.drive_clamps(&mut state, 0.0);
    let mut states = DMatrix::zeros(n_samples, n_nodes);
    let mut times = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let t_k = k as f64 / sample_rate;
        times.push(t_k);
        let u_k = excitation.displacement(t_k);
        for n in 0..n_nodes {
            states[(k, n)] = if model.is_clamped[n] { u_k } else { state.disp[n].y * 1e3 };
        }
        if k + 1 == n_samples {
            break;
        }
        let t_end = (k + 1) as f64 / sample_rate;
        for s in 0..sub {
            let t = t_k + s as f64 * dt;
            let t_next = if s + 1 == sub { t_end } else { t_k + (s + 1) as f64 * dt };
            stepper.advance(&mut state, t, t_next)?;
        }
    }

    let mut meta = TrajectoryMeta {
        id: String::new(),
        sample_rate,
        rows: model.mesh.rows,
        cols: model.mesh.cols,
        samples: n_samples,
        payload: model.payload,
        excitation: excitation.clone(),
        seed,
        model_hash: model.model_hash().to_string(),
        measurement_noise_mm: 0.0,
    };
    meta.id = meta.compute_id();
    let traj = Trajectory { meta, times, states };
    traj.validate()?;
    Ok(traj)
}
