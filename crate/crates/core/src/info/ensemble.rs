use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::InfoError;
use crate::field::{FieldGrid, FieldInit, FieldTrainer, LossTerms, LossWeights, RenderOptions, ReplayBuffer};
use crate::scene::{Aabb, Observation};

/// Immutable snapshot of `m` fields sharing bounds and categories.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<FieldGrid>,
    pub seeds: Vec<u64>,
    /// Sampling used when rendering predictions for information estimates.
    pub render: RenderOptions,
}

impl Ensemble {
    pub fn new(members: Vec<FieldGrid>, seeds: Vec<u64>, render: RenderOptions) -> Result<Self, InfoError> {
        if members.len() < 2 {
            return Err(InfoError::TooFewMembers(members.len()));
        }
        if seeds.len() != members.len() {
            return Err(InfoError::Mismatch("seed count"));
        }
        let first = &members[0];
        if members.iter().any(|m| m.bounds() != first.bounds()) {
            return Err(InfoError::Mismatch("bounds"));
        }
        if members.iter().any(|m| m.num_categories() != first.num_categories()) {
            return Err(InfoError::Mismatch("category count"));
        }
        render.validate()?;
        Ok(Self { members, seeds, render })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Index of the first member with the most vertices.
    pub fn largest_index(&self) -> usize {
        let mut best = 0;
        for (i, m) in self.members.iter().enumerate() {
            if m.vertex_count() > self.members[best].vertex_count() {
                best = i;
            }
        }
        best
    }

    pub fn largest(&self) -> &FieldGrid {
        &self.members[self.largest_index()]
    }
}

/// How each ensemble member is built and trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// One grid resolution per member.
    pub resolutions: Vec<[usize; 3]>,
    /// One seed per member: prior noise, bootstrap resampling and ray
    /// sampling all derive from it.
    pub seeds: Vec<u64>,
    pub init: FieldInit,
    pub loss: LossWeights,
    pub learning_rate: f64,
    pub rays_per_step: usize,
    /// Sampling used while training.
    pub train_render: RenderOptions,
    /// Resample every incoming batch with replacement per member.
    pub bootstrap: bool,
}

impl EnsembleConfig {
    /// Large + small member defaults for a scene with the given far plane.
    pub fn standard(far: f64) -> Self {
        Self {
            resolutions: vec![[64; 3], [32; 3]],
            seeds: vec![1, 2],
            init: FieldInit::default(),
            loss: LossWeights::default(),
            learning_rate: 0.1,
            rays_per_step: 256,
            train_render: RenderOptions {
                near: 0.05,
                far,
                n_samples: 128,
                min_transmittance: 1e-4,
            },
            bootstrap: true,
        }
    }

    pub fn validate(&self) -> Result<(), InfoError> {
        if self.resolutions.len() < 2 {
            return Err(InfoError::TooFewMembers(self.resolutions.len()));
        }
        if self.seeds.len() != self.resolutions.len() {
            return Err(InfoError::Mismatch("seed count"));
        }
        self.train_render.validate()?;
        Ok(())
    }
}

/// Trainers, per-member replay buffers and rngs of a bootstrap ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleTrainer {
    pub trainers: Vec<FieldTrainer>,
    buffers: Vec<ReplayBuffer>,
    rngs: Vec<ChaCha8Rng>,
    seeds: Vec<u64>,
    rays_per_step: usize,
    bootstrap: bool,
}

impl EnsembleTrainer {
    pub fn new(bounds: Aabb, num_categories: usize, cfg: &EnsembleConfig) -> Result<Self, InfoError> {
        cfg.validate()?;
        let mut trainers = Vec::new();
        for (res, &seed) in cfg.resolutions.iter().zip(&cfg.seeds) {
            let field = FieldGrid::new(bounds, *res, num_categories, &cfg.init, seed)?;
            trainers.push(FieldTrainer::new(field, cfg.loss, cfg.train_render, cfg.learning_rate));
        }
        let m = trainers.len();
        Ok(Self {
            trainers,
            buffers: vec![ReplayBuffer::new(); m],
            rngs: cfg
                .seeds
                .iter()
                .map(|&s| ChaCha8Rng::seed_from_u64(s ^ 0x5EED_0F_B007))
                .collect(),
            seeds: cfg.seeds.clone(),
            rays_per_step: cfg.rays_per_step,
            bootstrap: cfg.bootstrap,
        })
    }

    pub fn len(&self) -> usize {
        self.trainers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trainers.is_empty()
    }

    pub fn buffer(&self, member: usize) -> &ReplayBuffer {
        &self.buffers[member]
    }

    /// Adds a batch to every member's buffer, bootstrap-resampled per member.
    pub fn add_observations(&mut self, batch: &[Arc<Observation>]) {
        for (buf, rng) in self.buffers.iter_mut().zip(&mut self.rngs) {
            if self.bootstrap && !batch.is_empty() {
                let n = batch.len();
                let picks: Vec<_> = (0..n).map(|_| batch[rng.random_range(0..n)].clone()).collect();
                buf.push_batch(picks);
            } else {
                buf.push_batch(batch.iter().cloned());
            }
        }
    }

    /// Rescales each member's depth and category loss weights once.
    pub fn balance_weights(&mut self) -> Result<Vec<LossWeights>, InfoError> {
        let mut out = Vec::new();
        for ((t, buf), rng) in self.trainers.iter_mut().zip(&self.buffers).zip(&mut self.rngs) {
            out.push(t.balance_weights(buf, self.rays_per_step, rng)?);
        }
        Ok(out)
    }

    /// Trains every member for `steps` steps; returns each member's trace.
    pub fn train(&mut self, steps: usize) -> Result<Vec<Vec<LossTerms>>, InfoError> {
        let mut traces = Vec::new();
        for ((t, buf), rng) in self.trainers.iter_mut().zip(&self.buffers).zip(&mut self.rngs) {
            traces.push(t.train(buf, steps, self.rays_per_step, rng)?);
        }
        Ok(traces)
    }

    pub fn snapshot(&self, render: RenderOptions) -> Result<Ensemble, InfoError> {
        Ensemble::new(
            self.trainers.iter().map(|t| t.field.clone()).collect(),
            self.seeds.clone(),
            render,
        )
    }
}

/// Builds and trains a bootstrap ensemble on everything in `buffer`.
pub fn bootstrap_ensemble(
    buffer: &ReplayBuffer,
    bounds: Aabb,
    num_categories: usize,
    cfg: &EnsembleConfig,
    steps: usize,
    render: RenderOptions,
) -> Result<Ensemble, InfoError> {
    let mut ens = EnsembleTrainer::new(bounds, num_categories, cfg)?;
    if !buffer.past().is_empty() {
        ens.add_observations(buffer.past());
    }
    ens.add_observations(buffer.recent());
    ens.train(steps)?;
    ens.snapshot(render)
}
