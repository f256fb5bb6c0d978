//! Explicit voxel radiance field with density, color and category heads.

mod grid;
pub mod io;
mod loss;
mod occupancy;
mod render;
mod train;

pub use grid::{
    sigmoid, softmax, softplus, Cell, FieldGrid, FieldInit, FieldSample, MAX_CATEGORIES,
    MAX_CHANNELS,
};
pub use loss::{loss, GradBuffer, LossTerms, LossWeights, RayTarget};
pub use occupancy::{export_occupancy, VoxelGrid, OCCUPANCY_VOXEL};
pub use render::{
    composite, render_image, render_ray, render_ray_jittered, ImageRender, RayRender, RenderOptions,
};
pub use train::{Adam, FieldTrainer, ReplayBuffer};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid resolution {0:?} needs at least 2 vertices per axis")]
    InvalidResolution([usize; 3]),
    #[error("{0} categories not supported (1..={MAX_CATEGORIES})")]
    TooManyCategories(usize),
    #[error("field bounds are empty")]
    EmptyBounds,
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLength { expected: usize, got: usize },
    #[error("empty ray batch")]
    EmptyBatch,
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("invalid render options: {0}")]
    InvalidOptions(String),
    #[error("category {category} out of range for a field with {classes} classes")]
    CategoryOutOfRange { category: u16, classes: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
