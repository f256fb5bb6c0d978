use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{FlatState, FlatnessError};
use crate::scene::Vec3;

/// Rigid-body quadrotor: `ẗ = R e₃ f / M − g`, `Ṙ = R Ω̂`,
/// `J Ω̇ = u − Ω × J Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub inertia: Matrix3<f64>,
    /// Gravity in the world frame, pointing up (`ẗ = … − g`).
    pub gravity: Vec3,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 0.5,
            inertia: Matrix3::from_diagonal(&Vec3::new(2.3e-3, 2.3e-3, 4.0e-3)),
            gravity: Vec3::new(0.0, 0.0, 9.81),
        }
    }
}

impl QuadrotorParams {
    pub fn new(mass: f64, inertia: Matrix3<f64>, gravity: Vec3) -> Result<Self, FlatnessError> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(FlatnessError::InvalidParams(format!("mass {mass}")));
        }
        if (inertia - inertia.transpose()).amax() > 1e-12 * inertia.amax() {
            return Err(FlatnessError::InvalidParams("inertia not symmetric".into()));
        }
        if inertia.cholesky().is_none() {
            return Err(FlatnessError::InvalidParams("inertia not positive definite".into()));
        }
        Ok(Self {
            mass,
            inertia,
            gravity,
        })
    }
}

/// Attitude, body rates and control inputs recovered from flat outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullState {
    pub rotation: Matrix3<f64>,
    /// Body-frame angular velocity.
    pub omega: Vec3,
    pub omega_dot: Vec3,
    /// Collective thrust, newtons.
    pub thrust: f64,
    /// Body-frame moments, N·m.
    pub moments: Vec3,
}

/// Unit vector along `v` and its first two time derivatives.
fn normalize_derivs(v: Vec3, dv: Vec3, ddv: Vec3) -> (Vec3, Vec3, Vec3) {
    let n = v.norm();
    let u = v / n;
    let dn = u.dot(&dv);
    let du = (dv - u * dn) / n;
    let ddn = du.dot(&dv) + u.dot(&ddv);
    let ddu = (ddv - du * (2.0 * dn) - u * ddn) / n;
    (u, du, ddu)
}

fn vee(m: &Matrix3<f64>) -> Vec3 {
    // Antisymmetric part, robust to round-off.
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Differential-flatness map from position/yaw derivatives to the full state.
pub fn flat_to_state(flat: &FlatState, params: &QuadrotorParams) -> Result<FullState, FlatnessError> {
    let f = flat.acceleration + params.gravity;
    let scale = params.gravity.norm().max(1.0);
    if f.norm() < 1e-9 * scale {
        return Err(FlatnessError::FreeFall);
    }
    let (z, dz, ddz) = normalize_derivs(f, flat.jerk, flat.snap);

    let (s, c) = flat.yaw.sin_cos();
    let (r, ra) = (flat.yaw_rate, flat.yaw_accel);
    let xc = Vec3::new(c, s, 0.0);
    let dxc = Vec3::new(-s, c, 0.0) * r;
    let ddxc = Vec3::new(-s, c, 0.0) * ra - Vec3::new(c, s, 0.0) * (r * r);

    let w = z.cross(&xc);
    if w.norm() < 1e-9 {
        return Err(FlatnessError::DegenerateHeading);
    }
    let dw = dz.cross(&xc) + z.cross(&dxc);
    let ddw = ddz.cross(&xc) + dz.cross(&dxc) * 2.0 + z.cross(&ddxc);
    let (y, dy, ddy) = normalize_derivs(w, dw, ddw);

    let x = y.cross(&z);
    let dx = dy.cross(&z) + y.cross(&dz);
    let ddx = ddy.cross(&z) + dy.cross(&dz) * 2.0 + y.cross(&ddz);

    let rot = Matrix3::from_columns(&[x, y, z]);
    let drot = Matrix3::from_columns(&[dx, dy, dz]);
    let ddrot = Matrix3::from_columns(&[ddx, ddy, ddz]);
    let omega = vee(&(rot.transpose() * drot));
    let omega_dot = vee(&(drot.transpose() * drot + rot.transpose() * ddrot));
    let j = params.inertia;
    let moments = j * omega_dot + omega.cross(&(j * omega));
    Ok(FullState {
        rotation: rot,
        omega,
        omega_dot,
        thrust: params.mass * f.norm(),
        moments,
    })
}
