//! Static equilibrium, small-vibration modes and crease-stiffness
//! calibration.

use super::mechanics::{accumulate_forces, ForceTerms};
use super::model::{attach_payload, ModelParams, PayloadSpec, ReservoirModel};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

fn free_dofs(model: &ReservoirModel) -> Vec<(usize, usize)> {
    (0..model.node_count())
        .filter(|&n| !model.is_clamped[n])
        .flat_map(|n| (0..3).map(move |d| (n, d)))
        .collect()
}

/// Residual force on the free DOFs for displacements `disp`, gravity
/// scaled by `load`.
fn residual(model: &ReservoirModel, dofs: &[(usize, usize)], disp: &[Vec3], load: f64) -> Result<DVector<f64>> {
    let pos: Vec<Vec3> = model.rest_positions().iter().zip(disp).map(|(x, d)| x + d).collect();
    let vel = vec![Vec3::zeros(); model.node_count()];
    let mut f = vec![Vec3::zeros(); model.node_count()];
    accumulate_forces(model, &pos, &vel, ForceTerms::ELASTIC, &mut f)?;
    let g = model.params.gravity * load;
    Ok(DVector::from_iterator(
        dofs.len(),
        dofs.iter().map(|&(n, d)| f[n][d] - if d == 1 { model.masses[n] * g } else { 0.0 }),
    ))
}

/// Tangent stiffness on the free DOFs by central differences of the
/// elastic forces, symmetrised.
pub fn tangent_stiffness(model: &ReservoirModel, disp: &[Vec3]) -> Result<DMatrix<f64>> {
    let dofs = free_dofs(model);
    let n = dofs.len();
    let h = 1e-8;
    let mut k = DMatrix::zeros(n, n);
    let mut d = disp.to_vec();
    for (c, &(node, axis)) in dofs.iter().enumerate() {
        d[node][axis] = disp[node][axis] + h;
        let fp = residual(model, &dofs, &d, 0.0)?;
        d[node][axis] = disp[node][axis] - h;
        let fm = residual(model, &dofs, &d, 0.0)?;
        d[node][axis] = disp[node][axis];
        k.set_column(c, &(-(fp - fm) / (2.0 * h)));
    }
    Ok((&k + k.transpose()) * 0.5)
}

/// Newton iteration at a fixed load from `disp`; `None` when it stalls.
fn newton(model: &ReservoirModel, dofs: &[(usize, usize)], mut disp: Vec<Vec3>, load: f64, tol: f64) -> Result<Option<Vec<Vec3>>> {
    for _ in 0..40 {
        let r = residual(model, dofs, &disp, load)?;
        let rn = r.amax();
        if rn < tol {
            return Ok(Some(disp));
        }
        let k = tangent_stiffness(model, &disp)?;
        let Some(delta) = k.lu().solve(&r) else {
            return Ok(None);
        };
        let mut alpha = 1.0;
        loop {
            let mut trial = disp.clone();
            for (i, &(n, d)) in dofs.iter().enumerate() {
                trial[n][d] += alpha * delta[i];
            }
            if residual(model, dofs, &trial, load).map(|r| r.amax() < rn).unwrap_or(false) {
                disp = trial;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-3 {
                return Ok(None);
            }
        }
    }
    Ok(None)
}

/// Displacements (m) of the clamped model at rest under gravity, by
/// Newton iteration with adaptive load stepping.
///
/// The sheet folds along a soft mechanism under its own weight, so the
/// response is far from linear and full-load Newton from the rest shape
/// can stall.
pub fn static_equilibrium(model: &ReservoirModel) -> Result<Vec<Vec3>> {
    let dofs = free_dofs(model);
    let weight: f64 = model.total_mass() * model.params.gravity;
    let tol = 1e-10 * weight.max(1e-6);
    let mut disp = vec![Vec3::zeros(); model.node_count()];
    let (mut load, mut step) = (0.0f64, 0.25f64);
    while load < 1.0 {
        let target = (load + step).min(1.0);
        match newton(model, &dofs, disp.clone(), target, tol)? {
            Some(d) => {
                disp = d;
                load = target;
                step *= 1.5;
            }
            None => {
                step *= 0.5;
                if step < 1e-4 {
                    let rn = residual(model, &dofs, &disp, target)?.amax();
                    return Err(Error::SingularSystem(format!(
                        "static equilibrium did not converge at {:.1} % load (residual {rn:.3e} N)",
                        100.0 * target
                    )));
                }
            }
        }
    }
    Ok(disp)
}

/// Undamped natural frequencies (Hz, ascending) about the gravity-loaded
/// equilibrium.
pub fn natural_frequencies(model: &ReservoirModel) -> Result<Vec<f64>> {
    let disp = static_equilibrium(model)?;
    let k = tangent_stiffness(model, &disp)?;
    let dofs = free_dofs(model);
    let inv_sqrt_m = DVector::from_iterator(dofs.len(), dofs.iter().map(|&(n, _)| 1.0 / model.masses[n].sqrt()));
    let a = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] * inv_sqrt_m[i] * inv_sqrt_m[j]);
    let eig = SymmetricEigen::new(a);
    let mut f: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt() / (2.0 * PI)).collect();
    f.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub crease_hinge_stiffness: f64,
    pub facet_hinge_stiffness: f64,
    pub fundamental_hz: f64,
    pub target_hz: f64,
    pub iterations: usize,
}

fn fundamental(params: &ModelParams, payload: PayloadSpec) -> Result<f64> {
    let model = attach_payload(&ReservoirModel::from_params(params)?, payload)?;
    Ok(natural_frequencies(&model)?[0])
}

/// Bisects (in log space) on the crease stiffness, keeping the facet/crease
/// ratio, until the loaded fundamental frequency hits `target_hz`.
pub fn calibrate_crease_stiffness(
    params: &ModelParams,
    payload: PayloadSpec,
    target_hz: f64,
) -> Result<Calibration> {
    if !(target_hz > 0.0) {
        return Err(Error::InvalidParameter("target frequency must be positive".into()));
    }
    let ratio = params.facet_hinge_stiffness / params.crease_hinge_stiffness;
    let with = |k: f64| ModelParams {
        crease_hinge_stiffness: k,
        facet_hinge_stiffness: k * ratio,
        ..params.clone()
    };
    let eval = |k: f64| fundamental(&with(k), payload);

    let (mut lo, mut hi) = (1e-3f64.ln(), 1e3f64.ln());
    let f_hi = eval(hi.exp())?;
    if f_hi < target_hz {
        return Err(Error::InvalidParameter(format!(
            "target {target_hz} Hz unreachable (stiffest sheet gives {f_hi:.3} Hz)"
        )));
    }
    let mut iterations = 0;
    while hi - lo > 1e-6 && iterations < 200 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        // a sheet too soft to stand is below target
        match eval(mid.exp()) {
            Ok(f) if f >= target_hz => hi = mid,
            _ => lo = mid,
        }
    }
    let k = hi.exp();
    Ok(Calibration {
        crease_hinge_stiffness: k,
        facet_hinge_stiffness: k * ratio,
        fundamental_hz: eval(k)?,
        target_hz,
        iterations,
    })
}
