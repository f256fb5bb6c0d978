//! Quadrotor flatness: piecewise 7th-order flat-output trajectories, the
//! minimum-snap QP that builds them, and the map back to attitude, body
//! rates, thrust and moments.

mod dynamics;
mod qp;
mod timing;

pub use dynamics::{flat_to_state, FullState, QuadrotorParams};
pub use qp::{min_snap, SnapProblem};
pub use timing::{allocate_times, path_length, unwrap_yaw, CRUISE_SPEED, MAX_ACCEL};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::Vec3;

/// Coefficients per polynomial (degree 7).
pub const COEFFS: usize = 8;

#[derive(Debug, Error)]
pub enum FlatnessError {
    #[error("need at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoint, yaw and time counts differ ({0}, {1}, {2})")]
    LengthMismatch(usize, usize, usize),
    #[error("times must be strictly increasing (segment {0})")]
    NonIncreasingTimes(usize),
    #[error("KKT system is singular")]
    Singular,
    #[error("constraint residual {0:e} exceeds tolerance")]
    Residual(f64),
    #[error("time {t} outside [0, {total}]")]
    TimeOutOfRange { t: f64, total: f64 },
    #[error("thrust vector vanishes (free fall)")]
    FreeFall,
    #[error("heading is parallel to the thrust axis")]
    DegenerateHeading,
    #[error("path has zero length")]
    DegeneratePath,
    #[error("invalid quadrotor parameters: {0}")]
    InvalidParams(String),
}

/// Polynomial in normalized time τ ∈ [0, 1], ascending powers.
pub type Poly = [f64; COEFFS];

/// Value and first `D` derivatives (w.r.t. τ) of `p` at `tau`.
pub fn poly_derivs<const D: usize>(p: &Poly, tau: f64) -> [f64; D] {
    let mut out = [0.0; D];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in (k..COEFFS).rev() {
            acc = acc * tau + p[j] * falling(j, k);
        }
        *o = acc;
    }
    out
}

/// j (j−1) … (j−k+1).
#[inline]
pub(crate) fn falling(j: usize, k: usize) -> f64 {
    ((j + 1 - k)..=j).map(|x| x as f64).product()
}

/// One polynomial piece for x, y, z and yaw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub x: Poly,
    pub y: Poly,
    pub z: Poly,
    pub yaw: Poly,
}

/// Flat outputs and their derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub jerk: Vec3,
    pub snap: Vec3,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub yaw_accel: f64,
}

impl FlatState {
    /// At rest at `position` with heading `yaw`.
    pub fn hover(position: Vec3, yaw: f64) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
            jerk: Vec3::zeros(),
            snap: Vec3::zeros(),
            yaw,
            yaw_rate: 0.0,
            yaw_accel: 0.0,
        }
    }
}

/// Piecewise-polynomial trajectory of the flat outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatTrajectory {
    pub segments: Vec<Segment>,
}

impl FlatTrajectory {
    pub fn durations(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.duration).collect()
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Appends `other`, shifted to start where `self` ends.
    pub fn then(mut self, other: FlatTrajectory) -> FlatTrajectory {
        self.segments.extend(other.segments);
        self
    }

    pub fn evaluate(&self, t: f64) -> Result<FlatState, FlatnessError> {
        let total = self.total_duration();
        if !(t >= 0.0 && t <= total + 1e-12) || self.segments.is_empty() {
            return Err(FlatnessError::TimeOutOfRange { t, total });
        }
        let mut start = 0.0;
        let last = self.segments.len() - 1;
        let mut idx = last;
        for (i, s) in self.segments.iter().enumerate() {
            if t < start + s.duration || i == last {
                idx = i;
                break;
            }
            start += s.duration;
        }
        let seg = &self.segments[idx];
        let tau = ((t - start) / seg.duration).clamp(0.0, 1.0);
        let inv = 1.0 / seg.duration;
        let scale = [1.0, inv, inv * inv, inv.powi(3), inv.powi(4)];
        let [x, y, z] = [&seg.x, &seg.y, &seg.z].map(|p| poly_derivs::<5>(p, tau));
        let v = |k: usize| Vec3::new(x[k], y[k], z[k]) * scale[k];
        let yaw = poly_derivs::<3>(&seg.yaw, tau);
        Ok(FlatState {
            position: v(0),
            velocity: v(1),
            acceleration: v(2),
            jerk: v(3),
            snap: v(4),
            yaw: yaw[0],
            yaw_rate: yaw[1] * scale[1],
            yaw_accel: yaw[2] * scale[2],
        })
    }

    /// States every `dt` seconds from 0 up to and including the end.
    pub fn sample(&self, dt: f64) -> Vec<(f64, FlatState)> {
        let total = self.total_duration();
        let n = (total / dt).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| {
                let t = (i as f64 * dt).min(total);
                (t, self.evaluate(t).expect("t within range"))
            })
            .collect()
    }

    /// Arc length by dense sampling of the position.
    pub fn arc_length(&self, dt: f64) -> f64 {
        let s = self.sample(dt);
        s.windows(2)
            .map(|w| (w[1].1.position - w[0].1.position).norm())
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }

    /// CSV of sampled flat states.
    pub fn states_csv(&self, dt: f64) -> String {
        let mut s = String::from("t,x,y,z,vx,vy,vz,ax,ay,az,yaw,yaw_rate\n");
        for (t, st) in self.sample(dt) {
            let p = st.position;
            let v = st.velocity;
            let a = st.acceleration;
            let _ = writeln!(
                s,
                "{t},{},{},{},{},{},{},{},{},{},{},{}",
                p.x, p.y, p.z, v.x, v.y, v.z, a.x, a.y, a.z, st.yaw, st.yaw_rate
            );
        }
        s
    }
}
