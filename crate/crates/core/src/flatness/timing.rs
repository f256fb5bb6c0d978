use std::f64::consts::{PI, TAU};

use super::FlatnessError;
use crate::scene::Vec3;

/// Acceleration and deceleration magnitude of the speed profile, m/s².
pub const MAX_ACCEL: f64 = 1.0;
/// Cruise speed, m/s.
pub const CRUISE_SPEED: f64 = 0.5;

pub fn path_length(path: &[Vec3]) -> f64 {
    path.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Time at which a rest-to-rest trapezoidal (or triangular) profile of
/// total length `total` has covered `s`, plus the total duration.
fn profile(total: f64) -> (f64, impl Fn(f64) -> f64) {
    let (a, v) = (MAX_ACCEL, CRUISE_SPEED);
    let ramp = v * v / a;
    let (t_acc, d_acc, duration) = if total >= ramp {
        (v / a, 0.5 * ramp, 2.0 * v / a + (total - ramp) / v)
    } else {
        let t = (total / a).sqrt();
        (t, 0.5 * total, 2.0 * t)
    };
    let time_at = move |s: f64| {
        let s = s.clamp(0.0, total);
        if s <= d_acc {
            (2.0 * s / a).sqrt()
        } else if s >= total - d_acc {
            duration - (2.0 * (total - s) / a).sqrt()
        } else {
            t_acc + (s - d_acc) / v
        }
    };
    (duration, time_at)
}

/// Waypoint times along `path` for a ±1 m/s² / 0.5 m/s rest-to-rest speed
/// profile, starting at 0.
pub fn allocate_times(path: &[Vec3]) -> Result<Vec<f64>, FlatnessError> {
    if path.len() < 2 {
        return Err(FlatnessError::TooFewWaypoints(path.len()));
    }
    let total = path_length(path);
    if !(total > 0.0) || path.windows(2).any(|w| (w[1] - w[0]).norm() <= 0.0) {
        return Err(FlatnessError::DegeneratePath);
    }
    let (duration, time_at) = profile(total);
    let mut s = 0.0;
    let mut times = vec![0.0];
    for w in path.windows(2) {
        s += (w[1] - w[0]).norm();
        times.push(time_at(s));
    }
    *times.last_mut().unwrap() = duration;
    Ok(times)
}

/// Shifts each angle by a multiple of 2π so consecutive values differ by at
/// most π.
pub fn unwrap_yaw(yaws: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(yaws.len());
    for &y in yaws {
        match out.last() {
            None => out.push(y),
            Some(&prev) => {
                let mut d = (y - prev) % TAU;
                if d > PI {
                    d -= TAU;
                } else if d < -PI {
                    d += TAU;
                }
                out.push(prev + d);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_kinematics() {
        let t = allocate_times(&[Vec3::zeros(), Vec3::new(2.25, 0.0, 0.0)]).unwrap();
        assert!((t[1] - 5.0).abs() < 1e-12);
        let mid = allocate_times(&[Vec3::zeros(), Vec3::new(0.125, 0.0, 0.0), Vec3::new(2.125, 0.0, 0.0), Vec3::new(2.25, 0.0, 0.0)]).unwrap();
        assert!((mid[1] - 0.5).abs() < 1e-12);
        assert!((mid[2] - 4.5).abs() < 1e-12);
    }

    #[test]
    fn triangle_boundary() {
        let t = allocate_times(&[Vec3::zeros(), Vec3::new(0.0, 0.25, 0.0)]).unwrap();
        assert!((t[1] - 1.0).abs() < 1e-12);
        let half = allocate_times(&[Vec3::zeros(), Vec3::new(0.0, 0.125, 0.0), Vec3::new(0.0, 0.25, 0.0)]).unwrap();
        // Peak speed at the midpoint: a·t = 0.5.
        assert!((MAX_ACCEL * half[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn times_increase() {
        let path: Vec<Vec3> = (0..20).map(|i| Vec3::new((i as f64).sin(), i as f64 * 0.1, 0.0)).collect();
        let t = allocate_times(&path).unwrap();
        assert!(t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn degenerate_paths() {
        assert!(allocate_times(&[Vec3::zeros()]).is_err());
        assert!(allocate_times(&[Vec3::zeros(), Vec3::zeros()]).is_err());
    }

    #[test]
    fn unwrap_removes_jumps() {
        let u = unwrap_yaw(&[3.0, -3.0, -2.0, 2.9]);
        assert!(u.windows(2).all(|w| (w[1] - w[0]).abs() <= PI));
        assert!((u[1] - (-3.0 + TAU)).abs() < 1e-12);
    }
}
