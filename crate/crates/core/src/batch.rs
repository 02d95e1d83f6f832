//! Random ray batches with supervision targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{self, Ray};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Rays drawn uniformly with replacement over all (frame, pixel) pairs.
///
/// Target depth is converted from plane depth to distance along the ray;
/// pixels with sensor depth 0 have `depth_valid = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct RayBatch {
    pub rays: Vec<Ray>,
    pub frames: Vec<usize>,
    pub colors: Vec<[f32; 3]>,
    pub depths: Vec<f32>,
    pub depth_valid: Vec<bool>,
    /// `len x feature_dim`; empty when the dataset carries no features.
    pub features: Vec<f32>,
    pub feature_dim: usize,
}

/// One supervised ray, borrowed from a [`RayBatch`].
#[derive(Debug, Clone, Copy)]
pub struct RayTarget<'a> {
    pub ray: &'a Ray,
    pub color: [f32; 3],
    pub depth: Option<f32>,
    pub feature: Option<&'a [f32]>,
}

impl RayBatch {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn has_features(&self) -> bool {
        self.feature_dim > 0
    }

    pub fn target(&self, i: usize) -> RayTarget<'_> {
        let d = self.feature_dim;
        RayTarget {
            ray: &self.rays[i],
            color: self.colors[i],
            depth: self.depth_valid[i].then_some(self.depths[i]),
            feature: (d > 0).then(|| &self.features[i * d..(i + 1) * d]),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = RayTarget<'_>> + '_ {
        (0..self.len()).map(|i| self.target(i))
    }

    pub fn valid_depth_count(&self) -> usize {
        self.depth_valid.iter().filter(|v| **v).count()
    }

    /// Sub-batch of rays `range`, keeping targets aligned.
    pub fn slice(&self, range: std::ops::Range<usize>) -> RayBatch {
        let d = self.feature_dim;
        RayBatch {
            rays: self.rays[range.clone()].to_vec(),
            frames: self.frames[range.clone()].to_vec(),
            colors: self.colors[range.clone()].to_vec(),
            depths: self.depths[range.clone()].to_vec(),
            depth_valid: self.depth_valid[range.clone()].to_vec(),
            features: if d > 0 { self.features[range.start * d..range.end * d].to_vec() } else { Vec::new() },
            feature_dim: d,
        }
    }
}

pub fn sample_ray_batch(ds: &Dataset, batch_size: usize, seed: u64) -> Result<RayBatch> {
    if batch_size == 0 {
        return Err(Error::pre("batch size must be >= 1"));
    }
    if ds.frames.is_empty() {
        return Err(Error::pre("dataset has no frames"));
    }
    let intr = *ds.intrinsics();
    let per_frame = intr.pixel_count();
    let total = per_frame * ds.frames.len();
    let feature_dim = ds.feature_dim().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch = RayBatch {
        rays: Vec::with_capacity(batch_size),
        frames: Vec::with_capacity(batch_size),
        colors: Vec::with_capacity(batch_size),
        depths: Vec::with_capacity(batch_size),
        depth_valid: Vec::with_capacity(batch_size),
        features: Vec::with_capacity(batch_size * feature_dim),
        feature_dim,
    };
    for _ in 0..batch_size {
        let idx = rng.gen_range(0..total);
        let (fi, pix) = (idx / per_frame, idx % per_frame);
        let (u, v) = (pix % intr.width, pix / intr.width);
        let frame = &ds.frames[fi];
        let ray = camera::pixel_to_ray(&intr, &frame.pose, u, v)?;
        let plane = frame.depth_at(u, v);
        batch.rays.push(ray);
        batch.frames.push(fi);
        batch.colors.push(frame.color_at(u, v));
        batch.depth_valid.push(plane > 0.0);
        batch.depths.push((plane as f64 * camera::plane_to_ray_depth(&intr, u, v)) as f32);
        if let Some(f) = frame.feature_at(u, v) {
            batch.features.extend_from_slice(f);
        }
    }
    Ok(batch)
}
