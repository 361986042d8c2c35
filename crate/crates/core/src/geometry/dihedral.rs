//! Dihedral angle of a bar-and-hinge element and its gradient.
//!
//! A hinge is described by four nodes `(i, j, k, l)`: `j -> k` is the
//! rotation axis, `i` and `l` are the wing nodes of the two adjacent
//! triangles. The angle is measured from the half-plane of `i` to the
//! half-plane of `l`, right-handed about the axis, and mapped to
//! `[0, 2π)`. A flat pair of panels sits at `π`.

use nalgebra::Vector3;
use std::f64::consts::PI;

pub type Vec3 = Vector3<f64>;

pub fn dihedral_angle(xi: &Vec3, xj: &Vec3, xk: &Vec3, xl: &Vec3) -> f64 {
    let e = xk - xj;
    let a = xi - xj;
    let b = xl - xj;
    let en = e.norm();
    let ehat = e / en;
    let a_perp = a - ehat * a.dot(&ehat);
    let b_perp = b - ehat * b.dot(&ehat);
    let y = ehat.dot(&a_perp.cross(&b_perp));
    let x = a_perp.dot(&b_perp);
    let phi = y.atan2(x);
    if phi < 0.0 {
        phi + 2.0 * PI
    } else {
        phi
    }
}

/// Angle plus `[dθ/dx_i, dθ/dx_j, dθ/dx_k, dθ/dx_l]`.
pub fn dihedral_angle_and_gradient(
    xi: &Vec3,
    xj: &Vec3,
    xk: &Vec3,
    xl: &Vec3,
) -> (f64, [Vec3; 4]) {
    let e = xk - xj;
    let a = xi - xj;
    let b = xl - xj;
    let e2 = e.norm_squared();
    let en = e2.sqrt();
    let ea = e.cross(&a);
    let eb = e.cross(&b);
    let ea2 = ea.norm_squared();
    let eb2 = eb.norm_squared();

    let theta = dihedral_angle(xi, xj, xk, xl);

    // Moving a wing along its half-plane normal rotates that half-plane
    // about the axis; the lever arm is the wing's distance to the axis.
    let gi = ea * (-en / ea2);
    let gl = eb * (en / eb2);
    let ta = a.dot(&e) / e2;
    let tb = b.dot(&e) / e2;
    let gj = gi * (ta - 1.0) + gl * (tb - 1.0);
    let gk = gi * (-ta) + gl * (-tb);
    (theta, [gi, gj, gk, gl])
}
