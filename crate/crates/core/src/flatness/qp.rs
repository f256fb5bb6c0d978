use nalgebra::{DMatrix, DVector};

use super::{falling, FlatTrajectory, FlatnessError, Poly, Segment, COEFFS};
use crate::scene::Vec3;

const RESIDUAL_TOL: f64 = 1e-8;

/// Equality-constrained QP `min cᵀQc s.t. Ac = b` for one or more scalar
/// flat outputs sharing the same segment times (one column of `b` each).
///
/// Coefficients are stored per segment in normalized time τ = (t − t₀)/T.
#[derive(Debug, Clone)]
pub struct SnapProblem {
    pub q: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub durations: Vec<f64>,
}

impl SnapProblem {
    /// `values[d][i]` is output `d` at waypoint `i`. The cost integrates the
    /// squared `cost_order`-th derivative; derivatives `1..=continuity` are
    /// continuous at interior waypoints and derivatives `1..=endpoint` vanish
    /// at both ends.
    pub fn new(
        values: &[Vec<f64>],
        durations: &[f64],
        cost_order: usize,
        continuity: usize,
        endpoint: usize,
    ) -> Self {
        let segs = durations.len();
        let n = segs * COEFFS;
        let dims = values.len();
        let r = cost_order;

        let mut q = DMatrix::zeros(n, n);
        for (s, &t) in durations.iter().enumerate() {
            let scale = t.powi(1 - 2 * r as i32);
            for j in r..COEFFS {
                for l in r..COEFFS {
                    let v = falling(j, r) * falling(l, r) / (j + l + 1 - 2 * r) as f64;
                    q[(s * COEFFS + j, s * COEFFS + l)] = scale * v;
                }
            }
        }

        // Row of p^(k)(τ) coefficients.
        let deriv_row = |k: usize, tau: f64| -> Poly {
            let mut row = [0.0; COEFFS];
            for (j, x) in row.iter_mut().enumerate().skip(k) {
                *x = falling(j, k) * tau.powi((j - k) as i32);
            }
            row
        };

        let mut rows: Vec<(Vec<(usize, f64)>, Vec<f64>)> = Vec::new();
        let mut put = |entries: Vec<(usize, f64)>, rhs: Vec<f64>| rows.push((entries, rhs));
        let zeros = vec![0.0; dims];
        for s in 0..segs {
            let base = s * COEFFS;
            let start = deriv_row(0, 0.0);
            let end = deriv_row(0, 1.0);
            put(
                (0..COEFFS).map(|j| (base + j, start[j])).collect(),
                values.iter().map(|v| v[s]).collect(),
            );
            put(
                (0..COEFFS).map(|j| (base + j, end[j])).collect(),
                values.iter().map(|v| v[s + 1]).collect(),
            );
        }
        for k in 1..=endpoint {
            let first = deriv_row(k, 0.0);
            put((0..COEFFS).map(|j| (j, first[j])).collect(), zeros.clone());
            let last = deriv_row(k, 1.0);
            let base = (segs - 1) * COEFFS;
            put((0..COEFFS).map(|j| (base + j, last[j])).collect(), zeros.clone());
        }
        for s in 0..segs.saturating_sub(1) {
            let (t0, t1) = (durations[s], durations[s + 1]);
            for k in 1..=continuity {
                let a = deriv_row(k, 1.0);
                let b = deriv_row(k, 0.0);
                let mut e: Vec<(usize, f64)> =
                    (0..COEFFS).map(|j| (s * COEFFS + j, a[j] / t0.powi(k as i32))).collect();
                e.extend((0..COEFFS).map(|j| ((s + 1) * COEFFS + j, -b[j] / t1.powi(k as i32))));
                put(e, zeros.clone());
            }
        }

        let m = rows.len();
        let mut a = DMatrix::zeros(m, n);
        let mut b = DMatrix::zeros(m, dims);
        for (i, (entries, rhs)) in rows.into_iter().enumerate() {
            for (j, v) in entries {
                a[(i, j)] += v;
            }
            for (d, v) in rhs.into_iter().enumerate() {
                b[(i, d)] = v;
            }
        }
        Self {
            q,
            a,
            b,
            durations: durations.to_vec(),
        }
    }

    pub fn unknowns(&self) -> usize {
        self.q.nrows()
    }

    /// Solves the KKT system; returns coefficients, one column per output.
    pub fn solve(&self) -> Result<DMatrix<f64>, FlatnessError> {
        let n = self.unknowns();
        let m = self.a.nrows();
        let qmax = self.q.amax().max(f64::MIN_POSITIVE);
        let mut kkt = DMatrix::zeros(n + m, n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(&(&self.q / qmax));
        kkt.view_mut((n, 0), (m, n)).copy_from(&self.a);
        kkt.view_mut((0, n), (n, m)).copy_from(&self.a.transpose());
        let mut rhs = DMatrix::zeros(n + m, self.b.ncols());
        rhs.view_mut((n, 0), (m, self.b.ncols())).copy_from(&self.b);

        let lu = kkt.clone().lu();
        let mut x = lu.solve(&rhs).ok_or(FlatnessError::Singular)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FlatnessError::Singular);
        }
        // One step of iterative refinement.
        let r = &rhs - &kkt * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
        let c = x.rows(0, n).into_owned();
        let res = self.residual(&c);
        if res > RESIDUAL_TOL {
            return Err(FlatnessError::Residual(res));
        }
        Ok(c)
    }

    /// ‖Ac − b‖∞.
    pub fn residual(&self, c: &DMatrix<f64>) -> f64 {
        (&self.a * c - &self.b).amax()
    }

    /// cᵀQc for one output column.
    pub fn cost(&self, c: &DVector<f64>) -> f64 {
        c.dot(&(&self.q * c))
    }
}

fn polys(c: &DMatrix<f64>, col: usize, segs: usize) -> Vec<Poly> {
    (0..segs)
        .map(|s| std::array::from_fn(|j| c[(s * COEFFS + j, col)]))
        .collect()
}

/// Minimum-snap position and minimum-acceleration yaw through `waypoints`
/// at absolute `times`, starting and ending at rest. `yaws` are used as
/// given, so callers pass unwrapped angles.
pub fn min_snap(waypoints: &[Vec3], yaws: &[f64], times: &[f64]) -> Result<FlatTrajectory, FlatnessError> {
    let n = waypoints.len();
    if n < 2 {
        return Err(FlatnessError::TooFewWaypoints(n));
    }
    if yaws.len() != n || times.len() != n {
        return Err(FlatnessError::LengthMismatch(n, yaws.len(), times.len()));
    }
    let mut durations = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let d = times[i + 1] - times[i];
        if !(d > 0.0 && d.is_finite()) {
            return Err(FlatnessError::NonIncreasingTimes(i));
        }
        durations.push(d);
    }
    let pos: Vec<Vec<f64>> = (0..3).map(|a| waypoints.iter().map(|w| w[a]).collect()).collect();
    let pc = SnapProblem::new(&pos, &durations, 4, 4, 3).solve()?;
    let yc = SnapProblem::new(&[yaws.to_vec()], &durations, 2, 2, 2).solve()?;
    let segs = n - 1;
    let (px, py, pz, pyaw) = (polys(&pc, 0, segs), polys(&pc, 1, segs), polys(&pc, 2, segs), polys(&yc, 0, segs));
    Ok(FlatTrajectory {
        segments: (0..segs)
            .map(|s| Segment {
                duration: durations[s],
                x: px[s],
                y: py[s],
                z: pz[s],
                yaw: pyaw[s],
            })
            .collect(),
    })
}
