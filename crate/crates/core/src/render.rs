//! Stratified ray sampling and quadrature compositing.
//!
//! For samples `t_1 < ... < t_N` with spacings `delta_i` (the last one closed
//! at `far`), transmittance is `T_1 = 1`, `T_{i+1} = T_i exp(-sigma_i delta_i)`
//! and the weights are `w_i = T_i (1 - exp(-sigma_i delta_i))`. Color, depth
//! and feature are the `w`-weighted sums of the per-sample values, with depth
//! measured along the ray.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::Ray;
use crate::error::{Error, Result};
use crate::field::{BackwardScratch, Field, FieldParams, PointGrad, PointOutput, PointTrace};
use crate::real::Real;

/// Ray parameters, one per equal-width bin of `[near, far]`. With `seed =
/// None` each sample sits at its bin midpoint, otherwise one uniform draw
/// per bin.
pub fn stratified_samples(near: f64, far: f64, n: usize, seed: Option<u64>) -> Result<Vec<f64>> {
    if !(near < far) || !near.is_finite() || !far.is_finite() {
        return Err(Error::pre(format!("need near < far, got {near} and {far}")));
    }
    if n < 2 {
        return Err(Error::pre(format!("need at least 2 samples per ray, got {n}")));
    }
    let h = (far - near) / n as f64;
    Ok(match seed {
        None => (0..n).map(|i| near + (i as f64 + 0.5) * h).collect(),
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|i| {
                    let lo = near + i as f64 * h;
                    let hi = if i + 1 == n { far } else { near + (i + 1) as f64 * h };
                    rng.gen_range(lo..hi)
                })
                .collect()
        }
    })
}

/// Per-ray samples and their compositing state.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<T> {
    pub t: Vec<T>,
    pub delta: Vec<T>,
    pub sigma: Vec<T>,
    pub color: Vec<[T; 3]>,
    /// `N x D`, row-major.
    pub feature: Vec<T>,
    pub feature_dim: usize,
    /// `N + 1` entries; the last is the residual transmittance.
    pub transmittance: Vec<T>,
    pub weights: Vec<T>,
    /// Whether sample `i` was evaluated by the field. Skipped samples have
    /// zero density and receive no field gradient.
    pub active: Vec<bool>,
}

impl<T: Real> SampleSet<T> {
    /// Samples at `t` with zeroed field values; `delta_N = far - t_N`.
    pub fn new(t: Vec<T>, far: T, feature_dim: usize) -> Self {
        let n = t.len();
        let delta = (0..n)
            .map(|i| if i + 1 < n { t[i + 1] - t[i] } else { far - t[i] })
            .collect();
        SampleSet {
            delta,
            sigma: vec![T::zero(); n],
            color: vec![[T::zero(); 3]; n],
            feature: vec![T::zero(); n * feature_dim],
            feature_dim,
            transmittance: vec![T::zero(); n + 1],
            weights: vec![T::zero(); n],
            active: vec![false; n],
            t,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn feature_of(&self, i: usize) -> &[T] {
        &self.feature[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn set_output(&mut self, i: usize, out: &PointOutput<T>) {
        self.sigma[i] = out.sigma;
        self.color[i] = out.color;
        let d = self.feature_dim;
        self.feature[i * d..(i + 1) * d].copy_from_slice(&out.feature[..d]);
        self.active[i] = true;
    }

    pub fn residual_transmittance(&self) -> T {
        *self.transmittance.last().unwrap_or(&T::one())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput<T> {
    pub color: [T; 3],
    pub depth: T,
    pub feature: Vec<T>,
    pub opacity: T,
}

/// Upstream gradient on one ray's rendered outputs.
#[derive(Debug, Clone, Copy)]
pub struct RenderGrad<'a, T> {
    pub color: [T; 3],
    pub depth: T,
    pub feature: Option<&'a [T]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrads<T> {
    pub sigma: Vec<T>,
    pub color: Vec<[T; 3]>,
    pub feature: Vec<T>,
}

fn check_samples<T: Real>(s: &SampleSet<T>) -> Result<()> {
    let n = s.len();
    if n == 0 {
        return Err(Error::pre("empty sample set"));
    }
    if s.delta.len() != n || s.sigma.len() != n || s.color.len() != n || s.feature.len() != n * s.feature_dim {
        return Err(Error::pre("sample set arrays have inconsistent lengths"));
    }
    if s.t.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::pre("sample positions are not strictly ascending"));
    }
    if s.delta.iter().any(|d| !(*d >= T::zero())) {
        return Err(Error::pre("negative sample spacing"));
    }
    if s.sigma.iter().any(|v| !(*v >= T::zero())) {
        return Err(Error::pre("negative or NaN density"));
    }
    Ok(())
}

/// Fills transmittances and weights, then accumulates the outputs.
pub fn composite<T: Real>(s: &mut SampleSet<T>) -> Result<RenderOutput<T>> {
    check_samples(s)?;
    s.transmittance.resize(s.len() + 1, T::zero());
    s.weights.resize(s.len(), T::zero());
    Ok(composite_unchecked(s))
}

fn composite_unchecked<T: Real>(s: &mut SampleSet<T>) -> RenderOutput<T> {
    let d = s.feature_dim;
    let mut out = RenderOutput {
        color: [T::zero(); 3],
        depth: T::zero(),
        feature: vec![T::zero(); d],
        opacity: T::zero(),
    };
    let mut trans = T::one();
    for i in 0..s.len() {
        let tau = s.sigma[i] * s.delta[i];
        let alpha = -(-tau).exp_m1();
        let w = trans * alpha;
        s.transmittance[i] = trans;
        s.weights[i] = w;
        trans = trans * (-tau).exp();
        if w == T::zero() {
            continue;
        }
        for k in 0..3 {
            out.color[k] += w * s.color[i][k];
        }
        out.depth += w * s.t[i];
        for (o, f) in out.feature.iter_mut().zip(&s.feature[i * d..(i + 1) * d]) {
            *o += w * *f;
        }
        out.opacity += w;
    }
    let n = s.len();
    s.transmittance[n] = trans;
    out
}

/// Gradients of `<upstream, composite(s)>` with respect to per-sample
/// density, color and feature. `s` must already be composited.
///
/// With `detach_feature` the feature term does not contribute to the
/// density gradient.
pub fn composite_backward<T: Real>(
    s: &SampleSet<T>,
    upstream: &RenderGrad<'_, T>,
    detach_feature: bool,
) -> Result<SampleGrads<T>> {
    check_samples(s)?;
    if s.weights.len() != s.len() || s.transmittance.len() != s.len() + 1 {
        return Err(Error::pre("composite must run before composite_backward"));
    }
    if let Some(f) = upstream.feature {
        if f.len() != s.feature_dim {
            return Err(Error::pre("feature gradient length differs from sample feature dimension"));
        }
    }
    let mut g = SampleGrads {
        sigma: vec![T::zero(); s.len()],
        color: vec![[T::zero(); 3]; s.len()],
        feature: vec![T::zero(); s.feature.len()],
    };
    composite_backward_into(s, upstream, detach_feature, &mut g);
    Ok(g)
}

fn composite_backward_into<T: Real>(
    s: &SampleSet<T>,
    up: &RenderGrad<'_, T>,
    detach_feature: bool,
    g: &mut SampleGrads<T>,
) {
    let n = s.len();
    let d = s.feature_dim;
    // suffix[i] = sum_{j > i} w_j s_j, accumulated back to front
    let mut suffix = T::zero();
    for i in (0..n).rev() {
        let w = s.weights[i];
        let mut value = up.depth * s.t[i];
        for k in 0..3 {
            value += up.color[k] * s.color[i][k];
            g.color[i][k] = w * up.color[k];
        }
        let mut feat_value = T::zero();
        if let Some(uf) = up.feature {
            let fi = &s.feature[i * d..(i + 1) * d];
            for ((gf, u), f) in g.feature[i * d..(i + 1) * d].iter_mut().zip(uf).zip(fi) {
                *gf = w * *u;
                feat_value += *u * *f;
            }
        }
        if !detach_feature {
            value += feat_value;
        }
        let decay = (-(s.sigma[i] * s.delta[i])).exp();
        g.sigma[i] = s.delta[i] * (s.transmittance[i] * decay * value - suffix);
        suffix += w * value;
    }
}

/// How to place and evaluate samples along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarchSpec {
    pub near: f64,
    pub far: f64,
    pub samples: usize,
    /// `None` places samples at bin midpoints.
    pub seed: Option<u64>,
    /// Stop evaluating once transmittance falls below this (0 disables).
    pub early_stop: f64,
}

/// Reusable per-thread buffers for marching and back-propagating rays.
#[derive(Debug, Clone)]
pub struct RayWorkspace<T> {
    traces: Vec<PointTrace<T>>,
    out: PointOutput<T>,
    scratch: BackwardScratch<T>,
    d_encoding: Vec<T>,
    grads: Option<SampleGrads<T>>,
}

impl<T: Real> RayWorkspace<T> {
    pub fn new(field: &Field) -> Self {
        RayWorkspace {
            traces: Vec::new(),
            out: field.new_output(),
            scratch: field.new_scratch(),
            d_encoding: vec![T::zero(); field.grid().output_dim()],
            grads: None,
        }
    }
}

/// Destination for hash-table gradients produced by [`backward_ray`].
pub enum GridSink<'a, T> {
    /// Scatter directly into a table-shaped buffer.
    Dense(&'a mut [T]),
    /// Append `point (3) ++ encoding gradient (L*F)` for a later ordered scatter.
    Record(&'a mut Vec<T>),
}

/// Samples the ray, evaluates the field at samples inside the scene bound
/// and composites. Traces for the backward pass stay in `ws`.
pub fn march_ray<T: Real>(
    field: &Field,
    params: &FieldParams<T>,
    ray: &Ray,
    spec: &MarchSpec,
    ws: &mut RayWorkspace<T>,
) -> Result<(SampleSet<T>, RenderOutput<T>)> {
    let t = stratified_samples(spec.near, spec.far, spec.samples, spec.seed)?;
    let bound = *field.bound();
    let mut s = SampleSet::new(t.iter().map(|v| T::c(*v)).collect(), T::c(spec.far), field.feature_dim());
    while ws.traces.len() < s.len() {
        ws.traces.push(field.new_trace());
    }
    let mut trans = 1.0f64;
    for (i, ti) in t.iter().enumerate() {
        if spec.early_stop > 0.0 && trans < spec.early_stop {
            break;
        }
        let p = ray.at(*ti);
        if !bound.contains(p) {
            continue;
        }
        let pt = [T::c(p[0]), T::c(p[1]), T::c(p[2])];
        field.forward_traced(params, pt, &mut ws.traces[i], &mut ws.out);
        s.set_output(i, &ws.out);
        trans *= (-(s.sigma[i] * s.delta[i]).as_f64()).exp();
    }
    let out = composite_unchecked(&mut s);
    Ok((s, out))
}

/// Back-propagates `upstream` through compositing and the field for a ray
/// marched with [`march_ray`] into the same workspace.
#[allow(clippy::too_many_arguments)]
pub fn backward_ray<T: Real>(
    field: &Field,
    params: &FieldParams<T>,
    samples: &SampleSet<T>,
    upstream: &RenderGrad<'_, T>,
    detach_feature: bool,
    ws: &mut RayWorkspace<T>,
    grads: &mut FieldParams<T>,
    mut grid: GridSink<'_, T>,
) {
    let n = samples.len();
    let mut sg = ws.grads.take().unwrap_or_else(|| SampleGrads {
        sigma: Vec::new(),
        color: Vec::new(),
        feature: Vec::new(),
    });
    sg.sigma.resize(n, T::zero());
    sg.color.resize(n, [T::zero(); 3]);
    sg.feature.resize(samples.feature.len(), T::zero());
    composite_backward_into(samples, upstream, detach_feature, &mut sg);
    let d = samples.feature_dim;
    for i in 0..n {
        if !samples.active[i] {
            continue;
        }
        let pg = PointGrad {
            sigma: sg.sigma[i],
            color: sg.color[i],
            feature: upstream.feature.map(|_| &sg.feature[i * d..(i + 1) * d]),
        };
        if pg.sigma == T::zero() && pg.color == [T::zero(); 3] && pg.feature.is_none_or(|f| f.iter().all(|v| *v == T::zero())) {
            continue;
        }
        let trace = &ws.traces[i];
        field.backward_point(params, trace, &pg, grads, &mut ws.scratch, &mut ws.d_encoding);
        match &mut grid {
            GridSink::Dense(buf) => field.grid().accumulate_table_grad(trace.point, &ws.d_encoding, buf),
            GridSink::Record(rec) => {
                rec.extend_from_slice(&trace.point);
                rec.extend_from_slice(&ws.d_encoding);
            }
        }
    }
    ws.grads = Some(sg);
}

/// Renders one ray: stratified samples, field evaluation, compositing.
#[allow(clippy::too_many_arguments)]
pub fn render_pixel<T: Real>(
    field: &Field,
    params: &FieldParams<T>,
    ray: &Ray,
    near: f64,
    far: f64,
    samples: usize,
    seed: Option<u64>,
) -> Result<RenderOutput<T>> {
    let spec = MarchSpec {
        near,
        far,
        samples,
        seed,
        early_stop: 0.0,
    };
    let mut ws = RayWorkspace::new(field);
    march_ray(field, params, ray, &spec, &mut ws).map(|(_, out)| out)
}

/// Per-ray seed derived from a global seed and the ray's index.
pub fn ray_seed(global: u64, index: u64) -> u64 {
    splitmix64(global ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
