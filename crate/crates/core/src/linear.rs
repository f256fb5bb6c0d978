//! Linear-Gaussian toy system: `x_{t+1} = A x_t + B u_t`,
//! `y_t = ξᵀ x_t + σ ω_t`, with a Kalman belief over the static parameter ξ
//! and the log-variance objective `Σ_s ln(x_sᵀ Σ_ξ x_s)`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinearError {
    #[error("control grid is empty")]
    EmptyGrid,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("noise standard deviation must be positive")]
    BadNoise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    /// d×k input matrix.
    pub b: DMatrix<f64>,
    pub sigma: f64,
    pub xi_true: DVector<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, sigma: f64, xi_true: DVector<f64>) -> Result<Self, LinearError> {
        let d = a.nrows();
        if a.ncols() != d || b.nrows() != d || xi_true.len() != d {
            return Err(LinearError::Dimension(format!(
                "A {}x{}, B {}x{}, xi {}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                xi_true.len()
            )));
        }
        if !(sigma > 0.0) {
            return Err(LinearError::BadNoise);
        }
        Ok(Self { a, b, sigma, xi_true })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    /// Noisy scalar measurement at state `x`.
    pub fn observe<R: Rng>(&self, x: &DVector<f64>, rng: &mut R) -> f64 {
        let w: f64 = StandardNormal.sample(rng);
        self.xi_true.dot(x) + self.sigma * w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov }
    }
}

/// Measurement update for the static parameter with observation row `xᵀ`.
pub fn kalman_update(belief: &GaussianBelief, x: &DVector<f64>, y: f64, sigma: f64) -> GaussianBelief {
    let sx = &belief.cov * x;
    let s = x.dot(&sx) + sigma * sigma;
    let k = &sx / s;
    let innovation = y - x.dot(&belief.mean);
    let mean = &belief.mean + &k * innovation;
    let mut cov = &belief.cov - &k * sx.transpose();
    cov = (&cov + cov.transpose()) * 0.5;
    GaussianBelief { mean, cov }
}

const OBJECTIVE_FLOOR: f64 = 1e-12;

/// `Σ_s ln(max(x_sᵀ Σ x_s, 1e-12))`.
pub fn objective(cov: &DMatrix<f64>, states: &[DVector<f64>]) -> f64 {
    states
        .iter()
        .map(|x| x.dot(&(cov * x)).max(OBJECTIVE_FLOOR).ln())
        .sum()
}

/// Chooses each control in turn to maximize the objective term of the next
/// state, holding the belief fixed. Ties go to the lowest grid index.
pub fn greedy_control(
    system: &LinearSystem,
    belief: &GaussianBelief,
    x0: &DVector<f64>,
    horizon: usize,
    grid: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>, LinearError> {
    if grid.is_empty() {
        return Err(LinearError::EmptyGrid);
    }
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, u) in grid.iter().enumerate() {
            let v = objective(&belief.cov, std::slice::from_ref(&system.step(&x, u)));
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        x = system.step(&x, &grid[best]);
        out.push(grid[best].clone());
    }
    Ok(out)
}

/// States visited by applying `controls` from `x0` (excluding `x0`).
pub fn rollout(system: &LinearSystem, x0: &DVector<f64>, controls: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut x = x0.clone();
    controls
        .iter()
        .map(|u| {
            x = system.step(&x, u);
            x.clone()
        })
        .collect()
}

/// Unit eigenvector of the largest eigenvalue.
pub fn top_eigenvector(cov: &DMatrix<f64>) -> DVector<f64> {
    let e = SymmetricEigen::new(cov.clone());
    let i = e.eigenvalues.imax();
    e.eigenvectors.column(i).into_owned()
}

/// Angle in degrees between the lines spanned by `a` and `b`.
pub fn line_angle_deg(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let c = (a.dot(b).abs() / (a.norm() * b.norm())).min(1.0);
    c.acos().to_degrees()
}

/// `n` unit directions: ±e_i followed by seeded random directions.
pub fn unit_control_grid<R: Rng>(d: usize, n_random: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let mut out = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut e = DVector::zeros(d);
            e[i] = s;
            out.push(e);
        }
    }
    for _ in 0..n_random {
        let v = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        out.push(v.normalize());
    }
    out
}

/// One row of the demo output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoRow {
    pub t: usize,
    pub objective: f64,
    pub angle_deg: f64,
}

/// Greedy exploration of a `d`-dimensional integrator (`A = B = I`) under
/// the diagonal-dominant prior `diag(100, 1, …, 1)`; the belief is refined by
/// Kalman updates after each executed step.
pub fn linear_demo(d: usize, horizon: usize, seed: u64) -> Result<Vec<DemoRow>, LinearError> {
    if d == 0 {
        return Err(LinearError::Dimension("d must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
    let sys = LinearSystem::new(DMatrix::identity(d, d), DMatrix::identity(d, d), 1.0, xi)?;
    let mut prior = DMatrix::identity(d, d);
    prior[(0, 0)] = 100.0;
    let plan_belief = GaussianBelief::new(DVector::zeros(d), prior);
    let grid = unit_control_grid(d, 64, &mut rng);
    let x0 = DVector::from_fn(d, |_, _| 0.1 * rng.random_range(-1.0..1.0));
    let controls = greedy_control(&sys, &plan_belief, &x0, horizon, &grid)?;
    let states = rollout(&sys, &x0, &controls);
    let top = top_eigenvector(&plan_belief.cov);
    let mut belief = plan_belief.clone();
    let mut total = 0.0;
    let mut rows = Vec::with_capacity(horizon);
    for (t, x) in states.iter().enumerate() {
        total += objective(&plan_belief.cov, std::slice::from_ref(x));
        let y = sys.observe(x, &mut rng);
        belief = kalman_update(&belief, x, y, sys.sigma);
        rows.push(DemoRow {
            t: t + 1,
            objective: total,
            angle_deg: line_angle_deg(x, &top),
        });
    }
    Ok(rows)
}

pub fn demo_csv(rows: &[DemoRow]) -> String {
    let mut s = String::from("t,objective,angle_deg\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.t, r.objective, r.angle_deg);
    }
    s
}
