//! Bar-and-hinge constitutive law: axial bars, rotational hinges,
//! Rayleigh-style damping and gravity. SI units throughout.

use super::model::ReservoirModel;
use crate::error::{Error, Result};
use crate::geometry::{dihedral_angle, dihedral_angle_and_gradient, Vec3};

/// Which force contributions to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForceTerms {
    pub elastic: bool,
    pub damping: bool,
    pub gravity: bool,
}

impl ForceTerms {
    pub const ALL: Self = Self {
        elastic: true,
        damping: true,
        gravity: true,
    };
    pub const ELASTIC: Self = Self {
        elastic: true,
        damping: false,
        gravity: false,
    };
}

/// Nodal forces in N for absolute `positions` (m) and `velocities` (m/s).
///
/// Fails with `NumericalBlowup` (time left at NaN for the caller to fill)
/// when a force exceeds the model's bound or is not finite.
pub fn internal_forces(
    model: &ReservoirModel,
    positions: &[Vec3],
    velocities: &[Vec3],
) -> Result<Vec<Vec3>> {
    let mut out = vec![Vec3::zeros(); model.node_count()];
    accumulate_forces(model, positions, velocities, ForceTerms::ALL, &mut out)?;
    Ok(out)
}

pub(crate) fn accumulate_forces(
    model: &ReservoirModel,
    positions: &[Vec3],
    velocities: &[Vec3],
    terms: ForceTerms,
    out: &mut [Vec3],
) -> Result<()> {
    debug_assert_eq!(positions.len(), model.node_count());
    debug_assert_eq!(velocities.len(), model.node_count());
    for f in out.iter_mut() {
        *f = Vec3::zeros();
    }
    let p = &model.params;
    let k_bar = p.bar_stiffness;
    let c_bar = p.rayleigh_beta * k_bar;

    if terms.elastic || (terms.damping && c_bar > 0.0) {
        for (b, &[i, j]) in model.mesh.bars.iter().enumerate() {
            let d = positions[j] - positions[i];
            let len = d.norm();
            let e = d / len;
            let mut f = 0.0;
            if terms.elastic {
                f += k_bar * (len - model.rest_lengths[b]);
            }
            if terms.damping && c_bar > 0.0 {
                f += c_bar * (velocities[j] - velocities[i]).dot(&e);
            }
            let fv = e * f;
            out[i] += fv;
            out[j] -= fv;
        }
    }

    if terms.elastic {
        for (h, hinge) in model.mesh.hinges.iter().enumerate() {
            let [i, j, k, l] = hinge.nodes();
            let (theta, grad) = dihedral_angle_and_gradient(
                &positions[i],
                &positions[j],
                &positions[k],
                &positions[l],
            );
            let moment = -model.hinge_stiffness[h] * (theta - model.hinge_rest[h]);
            out[i] += grad[0] * moment;
            out[j] += grad[1] * moment;
            out[k] += grad[2] * moment;
            out[l] += grad[3] * moment;
        }
    }

    if terms.damping && p.rayleigh_alpha > 0.0 {
        for (n, f) in out.iter_mut().enumerate() {
            *f -= velocities[n] * (p.rayleigh_alpha * model.masses[n]);
        }
    }

    if terms.gravity && p.gravity > 0.0 {
        for (n, f) in out.iter_mut().enumerate() {
            f.y -= model.masses[n] * p.gravity;
        }
    }

    let bound = p.force_bound;
    for (n, f) in out.iter().enumerate() {
        let mag = f.norm();
        if !mag.is_finite() || mag > bound {
            return Err(Error::NumericalBlowup {
                time: f64::NAN,
                detail: format!("force {mag:.3e} N on node {n} exceeds bound {bound} N"),
            });
        }
    }
    Ok(())
}

/// Strain energy of bars and hinges, J.
pub fn elastic_energy(model: &ReservoirModel, positions: &[Vec3]) -> f64 {
    let k_bar = model.params.bar_stiffness;
    let bars: f64 = model
        .mesh
        .bars
        .iter()
        .enumerate()
        .map(|(b, &[i, j])| {
            let s = (positions[j] - positions[i]).norm() - model.rest_lengths[b];
            0.5 * k_bar * s * s
        })
        .sum();
    let hinges: f64 = model
        .mesh
        .hinges
        .iter()
        .enumerate()
        .map(|(h, hinge)| {
            let [i, j, k, l] = hinge.nodes();
            let t = dihedral_angle(&positions[i], &positions[j], &positions[k], &positions[l]);
            let d = t - model.hinge_rest[h];
            0.5 * model.hinge_stiffness[h] * d * d
        })
        .sum();
    bars + hinges
}

pub fn kinetic_energy(model: &ReservoirModel, velocities: &[Vec3]) -> f64 {
    velocities
        .iter()
        .zip(&model.masses)
        .map(|(v, m)| 0.5 * m * v.norm_squared())
        .sum()
}

/// Gravitational potential relative to `y = 0`, J.
pub fn gravitational_energy(model: &ReservoirModel, positions: &[Vec3]) -> f64 {
    positions
        .iter()
        .zip(&model.masses)
        .map(|(x, m)| m * model.params.gravity * x.y)
        .sum()
}
