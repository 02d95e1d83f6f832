//! Neural implicit field engine that fuses scene geometry with distilled
//! vision-language features.
//!
//! A field maps a 3-D point to density, color and a feature embedding. It is
//! trained by differentiable volume rendering from posed RGB-D frames that
//! carry per-pixel feature maps, and queried for open-vocabulary semantic
//! segmentation by dot product against a catalog of label embeddings.
//!
//! Module map:
//! - [`vlft`], [`camera`], [`dataset`], [`batch`]: data model, file formats,
//!   ray generation and ray batch sampling.
//! - [`hash_grid`]: multi-resolution hash encoding.
//! - [`field`]: MLP trunk plus density/RGB and feature heads.
//! - [`render`]: stratified sampling and quadrature compositing.
//! - [`train`], [`optim`], [`checkpoint`]: loss, optimizer, training loop,
//!   gradient checking and checkpoints.
//! - [`segment`]: classification, heatmaps and mIoU metrics.
//! - [`synth`]: analytic scenes used as ground truth.
//! - [`config`]: flat key-value run configuration.

pub mod batch;
pub mod camera;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod error;
pub mod field;
pub mod hash_grid;
pub mod math;
pub mod optim;
pub mod ppm;
pub mod real;
pub mod render;
pub mod segment;
pub mod synth;
pub mod train;
pub mod vlft;

pub use error::{Error, Result};
pub use real::Real;
