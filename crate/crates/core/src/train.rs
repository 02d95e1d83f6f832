//! Weighted photometric, geometric and feature loss over ray batches, the
//! training loop, and the end-to-end gradient checker.
//!
//! `L_total = w_P * L_P + w_G * L_G + w_VL * L_VL` where
//! - `L_P` is the mean over rays of `|C_hat - C|^2`,
//! - `L_G` the mean over depth-valid rays of `(D_hat - D)^2`,
//! - `L_VL` the mean over feature-carrying rays of `|F_hat - F|^2 / D`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::batch::{sample_ray_batch, RayBatch};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::field::{Field, FieldParams};
use crate::optim::{Adam, AdamConfig};
use crate::real::Real;
use crate::render::{self, GridSink, MarchSpec, RayWorkspace, RenderGrad, RenderOutput};

/// Rays per reduction chunk. Fixed so the summation order does not depend
/// on the number of worker threads.
const CHUNK_RAYS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub photometric: f64,
    pub geometric: f64,
    pub feature: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            photometric: 1.0,
            geometric: 0.8,
            feature: 0.8,
        }
    }
}

impl LossWeights {
    pub fn total(&self, l_p: f64, l_g: f64, l_vl: f64) -> f64 {
        self.photometric * l_p + self.geometric * l_g + self.feature * l_vl
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub rays_per_iter: usize,
    pub iterations: usize,
    pub samples_per_ray: usize,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub seed: u64,
    /// Stop marching once transmittance drops below this; 0 disables.
    pub early_stop: f64,
    /// Block the feature loss from reaching the density.
    pub detach_features: bool,
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rays_per_iter: 2048,
            iterations: 1000,
            samples_per_ray: 128,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            seed: 0,
            early_stop: 0.0,
            detach_features: false,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rays_per_iter == 0 || self.samples_per_ray < 2 {
            return Err(Error::Config("train.rays must be >= 1 and train.samples >= 2".into()));
        }
        if !(self.adam.lr_grid >= 0.0 && self.adam.lr_mlp >= 0.0) {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        let w = &self.weights;
        if !(w.photometric >= 0.0 && w.geometric >= 0.0 && w.feature >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub iteration: usize,
    pub l_p: f64,
    pub l_g: f64,
    pub l_vl: f64,
    pub l_total: f64,
    pub valid_depth_fraction: f64,
    /// No ray in the batch had valid depth, so `l_g` is 0 by convention.
    pub no_valid_depth: bool,
}

impl LossReport {
    fn from_sums(sums: [f64; 3], batch: &RayBatch, weights: &LossWeights) -> Self {
        let n = batch.len() as f64;
        let valid = batch.valid_depth_count();
        let feat_rays = if batch.has_features() { batch.len() } else { 0 };
        let l_p = sums[0] / n;
        let l_g = if valid > 0 { sums[1] / valid as f64 } else { 0.0 };
        let l_vl = if feat_rays > 0 {
            sums[2] / (feat_rays as f64 * batch.feature_dim as f64)
        } else {
            0.0
        };
        LossReport {
            iteration: 0,
            l_p,
            l_g,
            l_vl,
            l_total: weights.total(l_p, l_g, l_vl),
            valid_depth_fraction: valid as f64 / n,
            no_valid_depth: valid == 0,
        }
    }
}

/// Loss of `renders` against the batch targets.
pub fn compute_loss<T: Real>(batch: &RayBatch, renders: &[RenderOutput<T>], weights: &LossWeights) -> Result<LossReport> {
    if batch.len() != renders.len() || batch.is_empty() {
        return Err(Error::pre(format!("{} rays but {} renders", batch.len(), renders.len())));
    }
    let mut sums = [0.0f64; 3];
    for (target, r) in batch.iter().zip(renders) {
        let [s_p, s_g, s_vl] = ray_residual_sums(&target, r)?;
        sums[0] += s_p;
        sums[1] += s_g;
        sums[2] += s_vl;
    }
    Ok(LossReport::from_sums(sums, batch, weights))
}

fn ray_residual_sums<T: Real>(target: &crate::batch::RayTarget<'_>, r: &RenderOutput<T>) -> Result<[f64; 3]> {
    let s_p: f64 = (0..3).map(|k| (r.color[k].as_f64() - target.color[k] as f64).powi(2)).sum();
    let s_g = target.depth.map_or(0.0, |d| (r.depth.as_f64() - d as f64).powi(2));
    let s_vl = match target.feature {
        Some(f) => {
            if f.len() != r.feature.len() {
                return Err(Error::pre("rendered feature dimension differs from target"));
            }
            f.iter().zip(&r.feature).map(|(t, p)| (p.as_f64() - *t as f64).powi(2)).sum()
        }
        None => 0.0,
    };
    Ok([s_p, s_g, s_vl])
}

/// Settings for one forward/backward pass over a batch.
#[derive(Debug, Clone, Copy)]
pub struct PassOptions {
    pub near: f64,
    pub far: f64,
    pub samples: usize,
    /// Base seed for per-ray stratification; `None` uses bin midpoints.
    pub seed: Option<u64>,
    pub early_stop: f64,
    pub weights: LossWeights,
    pub detach_features: bool,
}

struct ChunkResult<T> {
    sums: [f64; 3],
    mlp_grads: FieldParams<T>,
    grid_records: Vec<T>,
}

/// Renders the batch, evaluates the loss and, when `grads` is given,
/// overwrites it with the full parameter gradient of `L_total`.
pub fn loss_and_grad<T: Real>(
    field: &Field,
    params: &FieldParams<T>,
    batch: &RayBatch,
    opts: &PassOptions,
    grads: Option<&mut FieldParams<T>>,
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::pre("empty ray batch"));
    }
    if batch.has_features() && batch.feature_dim != field.feature_dim() {
        return Err(Error::Config(format!(
            "dataset features have dimension {} but the field's feature head has {}",
            batch.feature_dim,
            field.feature_dim()
        )));
    }
    let want_grad = grads.is_some();
    let n_rays = batch.len() as f64;
    let n_valid = batch.valid_depth_count().max(1) as f64;
    let n_feat = (batch.len() * batch.feature_dim).max(1) as f64;
    let w = opts.weights;
    let scale_p = T::c(2.0 * w.photometric / n_rays);
    let scale_g = T::c(2.0 * w.geometric / n_valid);
    let scale_f = T::c(2.0 * w.feature / n_feat);
    let use_feature_grad = batch.has_features() && w.feature != 0.0;
    let mlp_template = {
        let mut z = params.zeros_like_mlp();
        z.grid.tables.clear();
        z
    };

    let chunks: Vec<usize> = (0..batch.len().div_ceil(CHUNK_RAYS)).collect();
    let results: Vec<Result<ChunkResult<T>>> = chunks
        .par_iter()
        .map(|&c| {
            let mut ws = RayWorkspace::new(field);
            let mut out = ChunkResult {
                sums: [0.0; 3],
                mlp_grads: mlp_template.clone(),
                grid_records: Vec::new(),
            };
            let mut d_feat = vec![T::zero(); field.feature_dim()];
            for i in c * CHUNK_RAYS..((c + 1) * CHUNK_RAYS).min(batch.len()) {
                let target = batch.target(i);
                let spec = MarchSpec {
                    near: opts.near,
                    far: opts.far,
                    samples: opts.samples,
                    seed: opts.seed.map(|s| render::ray_seed(s, i as u64)),
                    early_stop: opts.early_stop,
                };
                let (samples, r) = render::march_ray(field, params, target.ray, &spec, &mut ws)?;
                let sums = ray_residual_sums(&target, &r)?;
                for k in 0..3 {
                    out.sums[k] += sums[k];
                }
                if !want_grad {
                    continue;
                }
                let mut up = RenderGrad {
                    color: [T::zero(); 3],
                    depth: T::zero(),
                    feature: None,
                };
                for k in 0..3 {
                    up.color[k] = scale_p * (r.color[k] - T::from_f32(target.color[k]));
                }
                if let Some(d) = target.depth {
                    up.depth = scale_g * (r.depth - T::from_f32(d));
                }
                if use_feature_grad {
                    let f = target.feature.expect("batch has features");
                    for ((g, p), t) in d_feat.iter_mut().zip(&r.feature).zip(f) {
                        *g = scale_f * (*p - T::from_f32(*t));
                    }
                    up.feature = Some(&d_feat);
                }
                render::backward_ray(
                    field,
                    params,
                    &samples,
                    &up,
                    opts.detach_features,
                    &mut ws,
                    &mut out.mlp_grads,
                    GridSink::Record(&mut out.grid_records),
                );
            }
            Ok(out)
        })
        .collect();

    let mut sums = [0.0f64; 3];
    let mut grads = grads;
    if let Some(g) = grads.as_deref_mut() {
        if g.grid.tables.len() != params.grid.tables.len() {
            *g = params.zeros_like();
        } else {
            g.groups_mut().into_iter().for_each(|(_, v)| v.iter_mut().for_each(|x| *x = T::zero()));
        }
    }
    let stride = 3 + field.grid().output_dim();
    for r in results {
        let r = r?;
        for k in 0..3 {
            sums[k] += r.sums[k];
        }
        if let Some(g) = grads.as_deref_mut() {
            g.add_mlp(&r.mlp_grads);
            for rec in r.grid_records.chunks_exact(stride) {
                field
                    .grid()
                    .accumulate_table_grad([rec[0], rec[1], rec[2]], &rec[3..], &mut g.grid.tables);
            }
        }
    }
    Ok(LossReport::from_sums(sums, batch, &w))
}

impl<T: Real> FieldParams<T> {
    fn zeros_like_mlp(&self) -> FieldParams<T> {
        FieldParams {
            grid: crate::hash_grid::HashGridParams { tables: Vec::new() },
            trunk: self.trunk.iter().map(|l| crate::field::Dense::zeros(l.inputs, l.outputs)).collect(),
            density_rgb: crate::field::Dense::zeros(self.density_rgb.inputs, self.density_rgb.outputs),
            feature: crate::field::Dense::zeros(self.feature.inputs, self.feature.outputs),
        }
    }
}

/// Parameters, optimizer moments and the number of completed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: FieldParams<f32>,
    pub optimizer: Adam<f32>,
    pub iteration: usize,
}

impl TrainState {
    pub fn new(field: &Field, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params: FieldParams<f32> = field.init_params(&mut rng);
        TrainState {
            optimizer: Adam::new(&params),
            params,
            iteration: 0,
        }
    }
}

pub fn check_compatible(field: &Field, ds: &Dataset) -> Result<()> {
    if let Some(d) = ds.feature_dim() {
        if d != field.feature_dim() {
            return Err(Error::Config(format!(
                "dataset feature dimension {d} does not match mlp.feature_dim = {}",
                field.feature_dim()
            )));
        }
    }
    Ok(())
}

fn step_seeds(seed: u64, iteration: usize) -> (u64, u64) {
    let it = iteration as u64;
    (render::ray_seed(seed, 2 * it), render::ray_seed(seed, 2 * it + 1))
}

/// One batch: sample, render, loss, backward, optimizer update.
pub fn train_step(
    field: &Field,
    state: &mut TrainState,
    grads: &mut FieldParams<f32>,
    ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<LossReport> {
    let it = state.iteration;
    let (batch_seed, strat_seed) = step_seeds(cfg.seed, it);
    let batch = sample_ray_batch(ds, cfg.rays_per_iter, batch_seed)?;
    let opts = PassOptions {
        near: ds.near,
        far: ds.far,
        samples: cfg.samples_per_ray,
        seed: Some(strat_seed),
        early_stop: cfg.early_stop,
        weights: cfg.weights,
        detach_features: cfg.detach_features,
    };
    let mut report = loss_and_grad(field, &state.params, &batch, &opts, Some(grads))?;
    report.iteration = it;
    for (name, v) in [("L_P", report.l_p), ("L_G", report.l_g), ("L_VL", report.l_vl), ("L_total", report.l_total)] {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                tensor: name.into(),
                iteration: it,
            });
        }
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFinite {
            tensor: format!("gradient of {name}"),
            iteration: it,
        });
    }
    state.optimizer.update(&cfg.adam, &mut state.params, grads);
    if let Some(name) = state.params.first_non_finite() {
        return Err(Error::NonFinite {
            tensor: name,
            iteration: it,
        });
    }
    state.iteration += 1;
    Ok(report)
}

/// Runs steps until `cfg.iterations` are complete, starting from `resume`
/// or a fresh seeded initialization. `on_step` sees every report, e.g. to
/// log or checkpoint.
pub fn train<F>(
    field: &Field,
    ds: &Dataset,
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    mut on_step: F,
) -> Result<(TrainState, Vec<LossReport>)>
where
    F: FnMut(&TrainState, &LossReport) -> Result<()>,
{
    cfg.validate()?;
    check_compatible(field, ds)?;
    let mut state = resume.unwrap_or_else(|| TrainState::new(field, cfg.seed));
    field.check_params(&state.params)?;
    let mut grads = state.params.zeros_like();
    let mut reports = Vec::with_capacity(cfg.iterations.saturating_sub(state.iteration));
    while state.iteration < cfg.iterations {
        let report = train_step(field, &mut state, &mut grads, ds, cfg)?;
        on_step(&state, &report)?;
        reports.push(report);
    }
    Ok((state, reports))
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub rays: usize,
    pub samples: usize,
    pub weights: LossWeights,
    pub seed: u64,
    pub tolerance: f64,
    pub step: f64,
    /// Relative errors use `max(|analytic|, |numeric|, floor)` as denominator.
    pub floor: f64,
    pub detach_features: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            rays: 10,
            samples: 16,
            weights: LossWeights::default(),
            seed: 1,
            tolerance: 1e-3,
            step: 1e-5,
            floor: 1e-6,
            detach_features: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub name: String,
    pub params: usize,
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
    pub tolerance: f64,
    pub analytic: FieldParams<f64>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel_error <= self.tolerance)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }
}

/// Parameters for gradient checking: the usual initialization with tables
/// and biases spread out so units are active and densities are moderate.
pub fn grad_check_params(field: &Field, seed: u64) -> FieldParams<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params: FieldParams<f64> = field.init_params(&mut rng);
    for (name, g) in params.groups_mut() {
        let spread = if name == "grid" {
            1.0
        } else if name.ends_with("bias") {
            0.2
        } else {
            continue;
        };
        g.iter_mut().for_each(|v| *v = rng.gen_range(-spread..spread));
    }
    params
}

/// Central finite differences of `L_total` against the analytic gradient
/// on every parameter, in double precision.
pub fn grad_check(ds: &Dataset, field: &Field, params: &FieldParams<f64>, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    check_compatible(field, ds)?;
    field.check_params(params)?;
    let batch = sample_ray_batch(ds, cfg.rays, cfg.seed)?;
    let opts = PassOptions {
        near: ds.near,
        far: ds.far,
        samples: cfg.samples,
        seed: Some(render::ray_seed(cfg.seed, u64::MAX)),
        early_stop: 0.0,
        weights: cfg.weights,
        detach_features: cfg.detach_features,
    };
    let mut analytic = params.zeros_like();
    loss_and_grad(field, params, &batch, &opts, Some(&mut analytic))?;
    let mut probe = params.clone();
    let names: Vec<String> = params.groups().into_iter().map(|(n, _)| n).collect();
    let mut groups = Vec::with_capacity(names.len());
    for (gi, name) in names.into_iter().enumerate() {
        let len = params.groups()[gi].1.len();
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for i in 0..len {
            let orig = params.groups()[gi].1[i];
            probe.groups_mut()[gi].1[i] = orig + cfg.step;
            let plus = loss_and_grad(field, &probe, &batch, &opts, None)?.l_total;
            probe.groups_mut()[gi].1[i] = orig - cfg.step;
            let minus = loss_and_grad(field, &probe, &batch, &opts, None)?.l_total;
            probe.groups_mut()[gi].1[i] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = analytic.groups()[gi].1[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            max_rel = max_rel.max(rel);
            max_abs = max_abs.max(a.abs());
        }
        groups.push(GroupCheck {
            name,
            params: len,
            max_rel_error: max_rel,
            max_abs_analytic: max_abs,
        });
    }
    Ok(GradCheckReport {
        groups,
        tolerance: cfg.tolerance,
        analytic,
    })
}

/// The small model used for gradient checks: two levels of two features on
/// 256-entry tables, 16-wide trunk, 8-dimensional features.
pub fn tiny_model(bound: crate::math::Aabb) -> Result<Field> {
    let grid = crate::hash_grid::HashGridConfig::from_finest(2, 2, 8, 4, 8);
    let mlp = crate::field::MlpConfig {
        trunk_layers: 2,
        trunk_width: 16,
        feature_dim: 8,
    };
    Field::new(grid, mlp, bound)
}

/// Three 16 x 12 views of the desk scene with 8-dimensional features.
pub fn tiny_dataset() -> Result<Dataset> {
    let spec = crate::synth::SceneSpec {
        feature_dim: 8,
        ..crate::synth::SceneSpec::desk()
    };
    let intr = crate::camera::CameraIntrinsics {
        fx: 14.0,
        fy: 14.0,
        cx: 8.0,
        cy: 6.0,
        width: 16,
        height: 12,
    };
    Ok(crate::synth::generate_dataset(&spec, 3, 0, &intr)?.train)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::RayTarget;

    fn renders_for(batch: &RayBatch, seed: u64, d: usize) -> Vec<RenderOutput<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..batch.len())
            .map(|_| RenderOutput {
                color: [rng.gen(), rng.gen(), rng.gen()],
                depth: rng.gen_range(0.0..5.0),
                feature: (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                opacity: 1.0,
            })
            .collect()
    }

    fn perfect(t: &RayTarget<'_>) -> RenderOutput<f64> {
        RenderOutput {
            color: t.color.map(|c| c as f64),
            depth: t.depth.unwrap_or(0.0) as f64,
            feature: t.feature.map(|f| f.iter().map(|v| *v as f64).collect()).unwrap_or_default(),
            opacity: 1.0,
        }
    }

    #[test]
    fn default_weights_sum() {
        let w = LossWeights::default();
        assert!((w.total(1.0, 1.0, 1.0) - 2.6).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions_have_zero_loss() {
        let ds = tiny_dataset().unwrap();
        let batch = sample_ray_batch(&ds, 50, 4).unwrap();
        let renders: Vec<_> = batch.iter().map(|t| perfect(&t)).collect();
        let r = compute_loss(&batch, &renders, &LossWeights::default()).unwrap();
        assert_eq!((r.l_p, r.l_g, r.l_vl, r.l_total), (0.0, 0.0, 0.0, 0.0));
        assert!(compute_loss(&batch, &renders[1..], &LossWeights::default()).is_err());
    }

    #[test]
    fn loss_matches_straight_loop() {
        let ds = tiny_dataset().unwrap();
        let batch = sample_ray_batch(&ds, 40, 5).unwrap();
        let renders = renders_for(&batch, 6, 8);
        let w = LossWeights::default();
        let r = compute_loss(&batch, &renders, &w).unwrap();
        let (mut p, mut g, mut f, mut nv) = (0.0, 0.0, 0.0, 0);
        for i in 0..batch.len() {
            for k in 0..3 {
                p += (renders[i].color[k] - batch.colors[i][k] as f64).powi(2);
            }
            if batch.depth_valid[i] {
                g += (renders[i].depth - batch.depths[i] as f64).powi(2);
                nv += 1;
            }
            for k in 0..8 {
                f += (renders[i].feature[k] - batch.features[i * 8 + k] as f64).powi(2);
            }
        }
        let n = batch.len() as f64;
        assert!((r.l_p - p / n).abs() < 1e-12);
        assert!((r.l_g - g / nv as f64).abs() < 1e-12);
        assert!((r.l_vl - f / (n * 8.0)).abs() < 1e-12);
        assert_eq!(r.l_total, w.total(r.l_p, r.l_g, r.l_vl));
    }

    #[test]
    fn all_holes_flags_geometric_term() {
        let mut ds = tiny_dataset().unwrap();
        for f in &mut ds.frames {
            f.depth.data.iter_mut().for_each(|d| *d = 0.0);
        }
        let batch = sample_ray_batch(&ds, 10, 1).unwrap();
        let renders = renders_for(&batch, 2, 8);
        let r = compute_loss(&batch, &renders, &LossWeights::default()).unwrap();
        assert!(r.no_valid_depth);
        assert_eq!(r.l_g, 0.0);
    }

    fn pass(ds: &Dataset, weights: LossWeights) -> PassOptions {
        PassOptions {
            near: ds.near,
            far: ds.far,
            samples: 16,
            seed: Some(3),
            early_stop: 0.0,
            weights,
            detach_features: false,
        }
    }

    #[test]
    fn zero_weights_give_zero_gradients() {
        let ds = tiny_dataset().unwrap();
        let field = tiny_model(ds.scene_bound).unwrap();
        let params = grad_check_params(&field, 1);
        let batch = sample_ray_batch(&ds, 20, 2).unwrap();
        let w = LossWeights {
            photometric: 0.0,
            geometric: 0.0,
            feature: 0.0,
        };
        let mut g = params.zeros_like();
        loss_and_grad(&field, &params, &batch, &pass(&ds, w), Some(&mut g)).unwrap();
        for (name, v) in g.groups() {
            assert!(v.iter().all(|x| *x == 0.0), "{name}");
        }
    }

    #[test]
    fn loss_and_grad_reports_match_compute_loss() {
        let ds = tiny_dataset().unwrap();
        let field = tiny_model(ds.scene_bound).unwrap();
        let params = grad_check_params(&field, 4);
        let batch = sample_ray_batch(&ds, 150, 2).unwrap();
        let opts = pass(&ds, LossWeights::default());
        let a = loss_and_grad(&field, &params, &batch, &opts, None).unwrap();
        let renders: Vec<_> = batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let spec = MarchSpec {
                    near: opts.near,
                    far: opts.far,
                    samples: 16,
                    seed: Some(render::ray_seed(3, i as u64)),
                    early_stop: 0.0,
                };
                render::march_ray(&field, &params, t.ray, &spec, &mut RayWorkspace::new(&field)).unwrap().1
            })
            .collect();
        let b = compute_loss(&batch, &renders, &opts.weights).unwrap();
        assert!((a.l_total - b.l_total).abs() <= 1e-12 * b.l_total);
    }

    fn tiny_grad_check(weights: LossWeights, detach: bool) -> GradCheckReport {
        let ds = tiny_dataset().unwrap();
        let field = tiny_model(ds.scene_bound).unwrap();
        let params = grad_check_params(&field, 2);
        let cfg = GradCheckConfig {
            weights,
            detach_features: detach,
            ..GradCheckConfig::default()
        };
        grad_check(&ds, &field, &params, &cfg).unwrap()
    }

    #[test]
    fn grad_check_photometric_only() {
        let r = tiny_grad_check(
            LossWeights {
                photometric: 1.0,
                geometric: 0.0,
                feature: 0.0,
            },
            false,
        );
        assert!(r.passed(), "{:?}", r.groups);
    }

    #[test]
    fn grad_check_full_loss() {
        let r = tiny_grad_check(LossWeights::default(), false);
        assert!(r.passed(), "{:?}", r.groups);
        assert_eq!(r.groups.len(), 1 + 2 * 2 + 2 + 2);
        for g in &r.groups {
            assert!(g.max_abs_analytic > 0.0, "{} has no gradient", g.name);
        }
    }

    #[test]
    fn detaching_blocks_only_the_density_path() {
        let ds = tiny_dataset().unwrap();
        let field = tiny_model(ds.scene_bound).unwrap();
        let params = grad_check_params(&field, 3);
        let batch = sample_ray_batch(&ds, 30, 7).unwrap();
        let run = |w: LossWeights, detach: bool| {
            let mut g = params.zeros_like();
            let opts = PassOptions {
                detach_features: detach,
                ..pass(&ds, w)
            };
            loss_and_grad(&field, &params, &batch, &opts, Some(&mut g)).unwrap();
            g
        };
        let full = run(LossWeights::default(), false);
        let detached = run(LossWeights::default(), true);
        let no_feature = run(
            LossWeights {
                feature: 0.0,
                ..LossWeights::default()
            },
            false,
        );
        for name in ["density_rgb.weight", "density_rgb.bias"] {
            for (a, b) in group(&detached, name).iter().zip(group(&no_feature, name)) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{name}");
            }
            assert_ne!(group(&detached, name), group(&full, name));
        }
        for name in ["feature.weight", "feature.bias"] {
            assert_eq!(group(&detached, name), group(&full, name));
        }
    }

    fn group<'a>(g: &'a FieldParams<f64>, name: &str) -> &'a [f64] {
        g.groups().into_iter().find(|(n, _)| n == name).unwrap().1
    }

    #[test]
    fn feature_weight_zero_isolates_feature_head() {
        let ds = tiny_dataset().unwrap();
        let field = tiny_model(ds.scene_bound).unwrap();
        let params = grad_check_params(&field, 3);
        let batch = sample_ray_batch(&ds, 30, 7).unwrap();
        let w = LossWeights {
            feature: 0.0,
            ..LossWeights::default()
        };
        let mut g = params.zeros_like();
        loss_and_grad(&field, &params, &batch, &pass(&ds, w), Some(&mut g)).unwrap();
        assert!(group(&g, "feature.weight").iter().all(|v| *v == 0.0));
        assert!(group(&g, "feature.bias").iter().all(|v| *v == 0.0));
        assert!(group(&g, "density_rgb.weight").iter().any(|v| *v != 0.0));
    }

    #[test]
    fn feature_only_loss_leaves_color_head_untouched() {
        let ds = tiny_dataset().unwrap();
        let field = tiny_model(ds.scene_bound).unwrap();
        let params = grad_check_params(&field, 3);
        let batch = sample_ray_batch(&ds, 30, 7).unwrap();
        let w = LossWeights {
            photometric: 0.0,
            geometric: 0.0,
            feature: 0.8,
        };
        let mut g = params.zeros_like();
        loss_and_grad(&field, &params, &batch, &pass(&ds, w), Some(&mut g)).unwrap();
        let dw = group(&g, "density_rgb.weight");
        let db = group(&g, "density_rgb.bias");
        for (i, v) in dw.iter().enumerate() {
            if i % 4 != 0 {
                assert_eq!(*v, 0.0, "color weight {i}");
            }
        }
        assert!(db[1..].iter().all(|v| *v == 0.0));
        assert!(dw.iter().step_by(4).any(|v| *v != 0.0));
        assert!(group(&g, "grid").iter().any(|v| *v != 0.0));
        assert!(group(&g, "trunk.0.weight").iter().any(|v| *v != 0.0));
        assert!(group(&g, "feature.weight").iter().any(|v| *v != 0.0));
    }

    fn small_cfg(iterations: usize) -> TrainConfig {
        TrainConfig {
            rays_per_iter: 64,
            iterations,
            samples_per_ray: 16,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_iterations_return_initial_params() {
        let ds = tiny_dataset().unwrap();
        let field = tiny_model(ds.scene_bound).unwrap();
        let (state, reports) = train(&field, &ds, &small_cfg(0), None, |_, _| Ok(())).unwrap();
        assert!(reports.is_empty());
        assert_eq!(state, TrainState::new(&field, 5));
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let ds = tiny_dataset().unwrap();
        let field = tiny_model(ds.scene_bound).unwrap();
        let mut cfg = small_cfg(3);
        cfg.adam.lr_grid = 0.0;
        cfg.adam.lr_mlp = 0.0;
        let (state, reports) = train(&field, &ds, &cfg, None, |_, _| Ok(())).unwrap();
        assert_eq!(state.params, TrainState::new(&field, 5).params);
        assert_eq!(reports.len(), 3);
        assert!(reports.iter().all(|r| r.l_total > 0.0));
    }

    #[test]
    fn training_is_deterministic_and_resumable() {
        let ds = tiny_dataset().unwrap();
        let field = tiny_model(ds.scene_bound).unwrap();
        let cfg = small_cfg(10);
        let (a, ra) = train(&field, &ds, &cfg, None, |_, _| Ok(())).unwrap();
        let (b, rb) = train(&field, &ds, &cfg, None, |_, _| Ok(())).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        let (half, _) = train(&field, &ds, &small_cfg(4), None, |_, _| Ok(())).unwrap();
        let (resumed, rr) = train(&field, &ds, &cfg, Some(half), |_, _| Ok(())).unwrap();
        assert_eq!(resumed, a);
        assert_eq!(rr[..], ra[4..]);
        assert_ne!(a.params, TrainState::new(&field, 5).params);
    }

    #[test]
    fn reduction_is_independent_of_thread_count() {
        let ds = tiny_dataset().unwrap();
        let field = tiny_model(ds.scene_bound).unwrap();
        let cfg = TrainConfig {
            rays_per_iter: 300,
            ..small_cfg(2)
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| train(&field, &ds, &cfg, None, |_, _| Ok(())).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn non_finite_loss_names_tensor() {
        let ds = tiny_dataset().unwrap();
        let field = tiny_model(ds.scene_bound).unwrap();
        let mut state = TrainState::new(&field, 1);
        state.params.feature.bias[0] = f32::NAN;
        let err = train(&field, &ds, &small_cfg(1), Some(state), |_, _| Ok(())).unwrap_err();
        match err {
            Error::NonFinite { tensor, iteration } => {
                assert_eq!(tensor, "L_VL");
                assert_eq!(iteration, 0);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn mismatched_feature_dim_is_a_config_error() {
        let ds = tiny_dataset().unwrap();
        let grid = crate::hash_grid::HashGridConfig::from_finest(2, 2, 8, 4, 8);
        let mlp = crate::field::MlpConfig {
            trunk_layers: 1,
            trunk_width: 8,
            feature_dim: 4,
        };
        let field = Field::new(grid, mlp, ds.scene_bound).unwrap();
        assert!(matches!(train(&field, &ds, &small_cfg(1), None, |_, _| Ok(())), Err(Error::Config(_))));
    }
}
