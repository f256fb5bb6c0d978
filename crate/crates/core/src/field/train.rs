use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::FieldGrid;
use super::loss::{loss_into, GradBuffer, LossTerms, LossWeights, RayTarget};
use super::render::RenderOptions;
use super::FieldError;
use crate::scene::Observation;

/// Observations seen so far, split into the most recent batch and the past.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    items: Vec<Arc<Observation>>,
    recent_start: usize,
}

impl ReplayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a batch; it becomes the new "recent" partition and everything
    /// before it moves to "past".
    pub fn push_batch<I: IntoIterator<Item = Arc<Observation>>>(&mut self, batch: I) {
        self.recent_start = self.items.len();
        self.items.extend(batch);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn all(&self) -> &[Arc<Observation>] {
        &self.items
    }

    pub fn recent(&self) -> &[Arc<Observation>] {
        &self.items[self.recent_start..]
    }

    pub fn past(&self) -> &[Arc<Observation>] {
        &self.items[..self.recent_start]
    }

    /// Draws `n` supervised pixels: half from recent observations, half
    /// uniformly from the past. An empty partition hands its share to the
    /// other one.
    pub fn sample_rays<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<RayTarget> {
        let (recent, past) = (self.recent(), self.past());
        let n_recent = match (recent.is_empty(), past.is_empty()) {
            (_, true) => n,
            (true, false) => 0,
            _ => n - n / 2,
        };
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let pool = if i < n_recent { recent } else { past };
            if pool.is_empty() {
                break;
            }
            let obs = &pool[rng.random_range(0..pool.len())];
            let px = rng.random_range(0..obs.pixel_count());
            out.push(RayTarget {
                origin: obs.pose.translation,
                dir: obs.ray_dir(px),
                rgb: obs.rgb[px],
                depth: obs.depth[px],
                category: obs.category[px],
            });
        }
        out
    }
}

/// Adaptive-moment optimizer that only updates vertices with a gradient in
/// the current step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    #[serde(skip)]
    m: Vec<f64>,
    #[serde(skip)]
    v: Vec<f64>,
    #[serde(skip)]
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &GradBuffer) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let k = grad.channels();
        let g = grad.grad();
        for &vtx in grad.touched() {
            for i in vtx * k..(vtx + 1) * k {
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = self.m[i] / c1;
                let vh = self.v[i] / c2;
                params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// A field together with its optimizer state and loss configuration.
#[derive(Debug, Clone)]
pub struct FieldTrainer {
    pub field: FieldGrid,
    pub weights: LossWeights,
    /// Sampling used while training; rays are jittered per bin.
    pub opts: RenderOptions,
    adam: Adam,
    grad: GradBuffer,
}

impl FieldTrainer {
    pub fn new(field: FieldGrid, weights: LossWeights, opts: RenderOptions, lr: f64) -> Self {
        let adam = Adam::new(lr, field.params().len());
        let grad = GradBuffer::new(&field);
        Self {
            field,
            weights,
            opts,
            adam,
            grad,
        }
    }

    /// Evaluates the unweighted terms on one batch from `buffer` and rescales
    /// the depth and category weights to match the color term.
    pub fn balance_weights<R: Rng>(
        &mut self,
        buffer: &ReplayBuffer,
        rays: usize,
        rng: &mut R,
    ) -> Result<LossWeights, FieldError> {
        if buffer.is_empty() {
            return Err(FieldError::EmptyBuffer);
        }
        let batch = buffer.sample_rays(rays, rng);
        let mut g = GradBuffer::new(&self.field);
        let terms = loss_into(&self.field, &batch, &self.weights, &self.opts, None, &mut g)?;
        self.weights = self.weights.balanced(&terms);
        Ok(self.weights)
    }

    /// Runs `steps` optimizer steps and returns the loss of each step.
    pub fn train<R: Rng>(
        &mut self,
        buffer: &ReplayBuffer,
        steps: usize,
        rays_per_step: usize,
        rng: &mut R,
    ) -> Result<Vec<LossTerms>, FieldError> {
        if steps == 0 {
            return Ok(Vec::new());
        }
        if buffer.is_empty() {
            return Err(FieldError::EmptyBuffer);
        }
        let mut trace = Vec::with_capacity(steps);
        let mut jitter = Vec::new();
        for _ in 0..steps {
            let batch = buffer.sample_rays(rays_per_step, rng);
            jitter.clear();
            jitter.extend((0..batch.len() * self.opts.n_samples).map(|_| rng.random::<f64>()));
            self.grad.clear();
            let terms = loss_into(
                &self.field,
                &batch,
                &self.weights,
                &self.opts,
                Some(&jitter),
                &mut self.grad,
            )?;
            self.adam.step(self.field.params_mut(), &self.grad);
            trace.push(terms);
        }
        Ok(trace)
    }
}
