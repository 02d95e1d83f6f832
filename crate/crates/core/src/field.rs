//! The neural field: hash encoding, rectified-linear MLP trunk, and two
//! affine heads. One head gives density (softplus) and RGB (logistic); the
//! other gives the unsquashed feature embedding. No viewing direction enters
//! anywhere, so outputs depend on the point alone.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hash_grid::{HashGrid, HashGridConfig, HashGridParams};
use crate::math::Aabb;
use crate::real::{self, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpConfig {
    pub trunk_layers: usize,
    pub trunk_width: usize,
    pub feature_dim: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            trunk_layers: 2,
            trunk_width: 512,
            feature_dim: 512,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trunk_layers == 0 || self.trunk_width == 0 || self.feature_dim == 0 {
            return Err(Error::Config(format!("MLP sizes must all be >= 1: {self:?}")));
        }
        Ok(())
    }
}

/// Affine layer. `weight` is input-major: `weight[i * outputs + o]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    /// Uniform in `[-sqrt(gain / fan_in), sqrt(gain / fan_in)]`, zero bias.
    fn init<R: Rng>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let bound = (gain / inputs as f64).sqrt();
        Dense {
            inputs,
            outputs,
            weight: (0..inputs * outputs)
                .map(|_| T::c(rng.gen_range(-bound..=bound)))
                .collect(),
            bias: vec![T::zero(); outputs],
        }
    }

    #[inline]
    pub fn at(&self, input: usize, output: usize) -> T {
        self.weight[input * self.outputs + output]
    }

    #[inline]
    fn forward(&self, x: &[T], out: &mut [T]) {
        out.copy_from_slice(&self.bias);
        for (xi, row) in x.iter().zip(self.weight.chunks_exact(self.outputs)) {
            if *xi != T::zero() {
                real::axpy(*xi, row, out);
            }
        }
    }

    /// Accumulates weight/bias gradients for one input/output-gradient pair.
    #[inline]
    fn accumulate(&self, x: &[T], dout: &[T], grad: &mut Dense<T>) {
        for (b, d) in grad.bias.iter_mut().zip(dout) {
            *b += *d;
        }
        for (xi, row) in x.iter().zip(grad.weight.chunks_exact_mut(self.outputs)) {
            if *xi != T::zero() {
                real::axpy(*xi, dout, row);
            }
        }
    }

    /// `dx += W dout`
    #[inline]
    fn backward_input(&self, dout: &[T], dx: &mut [T]) {
        for (d, row) in dx.iter_mut().zip(self.weight.chunks_exact(self.outputs)) {
            *d += real::dot(row, dout);
        }
    }

    fn cast<U: Real>(&self) -> Dense<U> {
        Dense {
            inputs: self.inputs,
            outputs: self.outputs,
            weight: self.weight.iter().map(|v| U::c(v.as_f64())).collect(),
            bias: self.bias.iter().map(|v| U::c(v.as_f64())).collect(),
        }
    }
}

/// All trainable state. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams<T> {
    pub grid: HashGridParams<T>,
    pub trunk: Vec<Dense<T>>,
    /// Output 0 is raw density, outputs 1..4 raw RGB.
    pub density_rgb: Dense<T>,
    pub feature: Dense<T>,
}

impl<T: Real> FieldParams<T> {
    pub fn zeros(grid: &HashGridConfig, mlp: &MlpConfig) -> Self {
        let mut trunk = Vec::with_capacity(mlp.trunk_layers);
        let mut width = grid.output_dim();
        for _ in 0..mlp.trunk_layers {
            trunk.push(Dense::zeros(width, mlp.trunk_width));
            width = mlp.trunk_width;
        }
        FieldParams {
            grid: HashGridParams::zeros(grid),
            trunk,
            density_rgb: Dense::zeros(width, 4),
            feature: Dense::zeros(width, mlp.feature_dim),
        }
    }

    /// Fan-in scaled uniform init for the MLP, small uniform init for tables.
    pub fn init<R: Rng>(grid: &HashGridConfig, mlp: &MlpConfig, rng: &mut R) -> Self {
        let tables = HashGridParams::init(grid, rng);
        let mut trunk = Vec::with_capacity(mlp.trunk_layers);
        let mut width = grid.output_dim();
        for _ in 0..mlp.trunk_layers {
            trunk.push(Dense::init(width, mlp.trunk_width, 6.0, rng));
            width = mlp.trunk_width;
        }
        FieldParams {
            grid: tables,
            trunk,
            density_rgb: Dense::init(width, 4, 3.0, rng),
            feature: Dense::init(width, mlp.feature_dim, 3.0, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.groups_mut().into_iter().for_each(|(_, g)| g.iter_mut().for_each(|v| *v = T::zero()));
        z
    }

    pub fn cast<U: Real>(&self) -> FieldParams<U> {
        FieldParams {
            grid: self.grid.cast(),
            trunk: self.trunk.iter().map(Dense::cast).collect(),
            density_rgb: self.density_rgb.cast(),
            feature: self.feature.cast(),
        }
    }

    /// Named parameter groups in a fixed order.
    pub fn groups(&self) -> Vec<(String, &[T])> {
        let mut out: Vec<(String, &[T])> = vec![("grid".to_string(), &self.grid.tables)];
        for (i, l) in self.trunk.iter().enumerate() {
            out.push((format!("trunk.{i}.weight"), &l.weight));
            out.push((format!("trunk.{i}.bias"), &l.bias));
        }
        out.push(("density_rgb.weight".into(), &self.density_rgb.weight));
        out.push(("density_rgb.bias".into(), &self.density_rgb.bias));
        out.push(("feature.weight".into(), &self.feature.weight));
        out.push(("feature.bias".into(), &self.feature.bias));
        out
    }

    pub fn groups_mut(&mut self) -> Vec<(String, &mut [T])> {
        let mut out: Vec<(String, &mut [T])> = vec![("grid".to_string(), &mut self.grid.tables)];
        for (i, l) in self.trunk.iter_mut().enumerate() {
            out.push((format!("trunk.{i}.weight"), &mut l.weight));
            out.push((format!("trunk.{i}.bias"), &mut l.bias));
        }
        out.push(("density_rgb.weight".into(), &mut self.density_rgb.weight));
        out.push(("density_rgb.bias".into(), &mut self.density_rgb.bias));
        out.push(("feature.weight".into(), &mut self.feature.weight));
        out.push(("feature.bias".into(), &mut self.feature.bias));
        out
    }

    /// Element-wise `self += other` for the MLP groups only.
    pub fn add_mlp(&mut self, other: &FieldParams<T>) {
        for (mine, theirs) in self.groups_mut().into_iter().zip(other.groups()).skip(1) {
            for (a, b) in mine.1.iter_mut().zip(theirs.1) {
                *a += *b;
            }
        }
    }

    pub fn first_non_finite(&self) -> Option<String> {
        self.groups()
            .into_iter()
            .find(|(_, g)| g.iter().any(|v| !v.is_finite()))
            .map(|(n, _)| n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointOutput<T> {
    pub sigma: T,
    pub color: [T; 3],
    pub feature: Vec<T>,
}

/// Intermediate activations of one point, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct PointTrace<T> {
    pub point: [T; 3],
    pub encoding: Vec<T>,
    /// Post-activation output of each trunk layer.
    pub hidden: Vec<Vec<T>>,
    pub raw: [T; 4],
}

/// Upstream gradient on one point's outputs.
#[derive(Debug, Clone, Copy)]
pub struct PointGrad<'a, T> {
    pub sigma: T,
    pub color: [T; 3],
    pub feature: Option<&'a [T]>,
}

/// Architecture: encoding layout plus MLP shape. Parameters live separately.
#[derive(Debug, Clone)]
pub struct Field {
    grid: HashGrid,
    mlp: MlpConfig,
}

impl Field {
    pub fn new(grid: HashGridConfig, mlp: MlpConfig, bound: Aabb) -> Result<Self> {
        mlp.validate()?;
        Ok(Field {
            grid: HashGrid::new(grid, bound)?,
            mlp,
        })
    }

    pub fn grid(&self) -> &HashGrid {
        &self.grid
    }

    pub fn grid_config(&self) -> &HashGridConfig {
        self.grid.config()
    }

    pub fn mlp_config(&self) -> &MlpConfig {
        &self.mlp
    }

    pub fn bound(&self) -> &Aabb {
        self.grid.bound()
    }

    pub fn feature_dim(&self) -> usize {
        self.mlp.feature_dim
    }

    pub fn init_params<T: Real, R: Rng>(&self, rng: &mut R) -> FieldParams<T> {
        FieldParams::init(self.grid.config(), &self.mlp, rng)
    }

    pub fn check_params<T: Real>(&self, params: &FieldParams<T>) -> Result<()> {
        let want = FieldParams::<T>::zeros(self.grid.config(), &self.mlp);
        let ok = params.grid.tables.len() == want.grid.tables.len()
            && params.trunk.len() == want.trunk.len()
            && params.groups().iter().zip(want.groups()).all(|(a, b)| a.1.len() == b.1.len());
        if ok {
            Ok(())
        } else {
            Err(Error::pre("parameter shapes do not match the field configuration"))
        }
    }

    pub fn new_trace<T: Real>(&self) -> PointTrace<T> {
        PointTrace {
            point: [T::zero(); 3],
            encoding: vec![T::zero(); self.grid.output_dim()],
            hidden: vec![vec![T::zero(); self.mlp.trunk_width]; self.mlp.trunk_layers],
            raw: [T::zero(); 4],
        }
    }

    pub fn new_output<T: Real>(&self) -> PointOutput<T> {
        PointOutput {
            sigma: T::zero(),
            color: [T::zero(); 3],
            feature: vec![T::zero(); self.mlp.feature_dim],
        }
    }

    /// Forward pass that records activations. `p` must be inside the bound.
    #[inline]
    pub fn forward_traced<T: Real>(
        &self,
        params: &FieldParams<T>,
        p: [T; 3],
        trace: &mut PointTrace<T>,
        out: &mut PointOutput<T>,
    ) {
        trace.point = p;
        self.grid.encode_unchecked(&params.grid, p, &mut trace.encoding);
        for (l, layer) in params.trunk.iter().enumerate() {
            let (before, after) = trace.hidden.split_at_mut(l);
            let input: &[T] = if l == 0 { &trace.encoding } else { &before[l - 1] };
            let h = &mut after[0];
            layer.forward(input, h);
            h.iter_mut().for_each(|v| {
                if *v < T::zero() {
                    *v = T::zero()
                }
            });
        }
        let last = trace.hidden.last().expect("at least one trunk layer");
        params.density_rgb.forward(last, &mut trace.raw);
        params.feature.forward(last, &mut out.feature);
        out.sigma = real::softplus(trace.raw[0]);
        for k in 0..3 {
            out.color[k] = real::logistic(trace.raw[k + 1]);
        }
    }

    pub fn eval_point<T: Real>(&self, params: &FieldParams<T>, p: [T; 3]) -> Result<PointOutput<T>> {
        let q = [p[0].as_f64(), p[1].as_f64(), p[2].as_f64()];
        if !self.bound().contains(q) {
            return Err(Error::pre(format!("point {q:?} outside scene bound")));
        }
        let mut trace = self.new_trace();
        let mut out = self.new_output();
        self.forward_traced(params, p, &mut trace, &mut out);
        Ok(out)
    }

    /// Element-wise identical to [`eval_point`](Self::eval_point).
    pub fn eval_points_batch<T: Real>(
        &self,
        params: &FieldParams<T>,
        points: &[[T; 3]],
    ) -> Result<Vec<PointOutput<T>>> {
        const PAR_THRESHOLD: usize = 4096;
        if points.len() < PAR_THRESHOLD {
            return points.iter().map(|p| self.eval_point(params, *p)).collect();
        }
        points
            .par_chunks(1024)
            .map(|chunk| {
                let mut trace = self.new_trace();
                chunk
                    .iter()
                    .map(|p| {
                        let q = [p[0].as_f64(), p[1].as_f64(), p[2].as_f64()];
                        if !self.bound().contains(q) {
                            return Err(Error::pre(format!("point {q:?} outside scene bound")));
                        }
                        let mut out = self.new_output();
                        self.forward_traced(params, *p, &mut trace, &mut out);
                        Ok(out)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
            .map(|v| v.into_iter().flatten().collect())
    }

    /// Backward pass for one traced point. Adds MLP gradients into `grads`
    /// and writes the encoding gradient into `d_encoding`; table gradients are
    /// scattered by the caller through the hash grid.
    pub fn backward_point<T: Real>(
        &self,
        params: &FieldParams<T>,
        trace: &PointTrace<T>,
        upstream: &PointGrad<'_, T>,
        grads: &mut FieldParams<T>,
        scratch: &mut BackwardScratch<T>,
        d_encoding: &mut [T],
    ) {
        let s = real::logistic(trace.raw[0]);
        let mut d_raw = [upstream.sigma * s, T::zero(), T::zero(), T::zero()];
        for k in 0..3 {
            let c = real::logistic(trace.raw[k + 1]);
            d_raw[k + 1] = upstream.color[k] * c * (T::one() - c);
        }
        let last = trace.hidden.last().expect("at least one trunk layer");
        let dh = &mut scratch.a;
        dh.iter_mut().for_each(|v| *v = T::zero());
        params.density_rgb.accumulate(last, &d_raw, &mut grads.density_rgb);
        params.density_rgb.backward_input(&d_raw, dh);
        if let Some(df) = upstream.feature {
            params.feature.accumulate(last, df, &mut grads.feature);
            params.feature.backward_input(df, dh);
        }
        for l in (0..params.trunk.len()).rev() {
            // gate through the rectifier
            for (d, h) in scratch.a.iter_mut().zip(&trace.hidden[l]) {
                if *h <= T::zero() {
                    *d = T::zero();
                }
            }
            let input: &[T] = if l == 0 { &trace.encoding } else { &trace.hidden[l - 1] };
            params.trunk[l].accumulate(input, &scratch.a, &mut grads.trunk[l]);
            if l == 0 {
                d_encoding.iter_mut().for_each(|v| *v = T::zero());
                params.trunk[0].backward_input(&scratch.a, d_encoding);
            } else {
                scratch.b.iter_mut().for_each(|v| *v = T::zero());
                params.trunk[l].backward_input(&scratch.a, &mut scratch.b);
                std::mem::swap(&mut scratch.a, &mut scratch.b);
            }
        }
    }

    /// Full parameter gradient of `sum_i <upstream_i, output(points_i)>`.
    pub fn field_backward<T: Real>(
        &self,
        params: &FieldParams<T>,
        points: &[[T; 3]],
        upstream: &[PointGrad<'_, T>],
    ) -> Result<FieldParams<T>> {
        self.check_params(params)?;
        if points.len() != upstream.len() {
            return Err(Error::pre(format!(
                "{} points but {} upstream gradients",
                points.len(),
                upstream.len()
            )));
        }
        if upstream
            .iter()
            .any(|u| u.feature.is_some_and(|f| f.len() != self.mlp.feature_dim))
        {
            return Err(Error::pre("feature gradient length differs from feature_dim"));
        }
        let mut grads = params.zeros_like();
        let mut trace = self.new_trace();
        let mut out = self.new_output();
        let mut scratch = self.new_scratch();
        let mut d_enc = vec![T::zero(); self.grid.output_dim()];
        for (p, up) in points.iter().zip(upstream) {
            let q = [p[0].as_f64(), p[1].as_f64(), p[2].as_f64()];
            if !self.bound().contains(q) {
                return Err(Error::pre(format!("point {q:?} outside scene bound")));
            }
            self.forward_traced(params, *p, &mut trace, &mut out);
            self.backward_point(params, &trace, up, &mut grads, &mut scratch, &mut d_enc);
            self.grid.accumulate_table_grad(*p, &d_enc, &mut grads.grid.tables);
        }
        Ok(grads)
    }

    pub fn new_scratch<T: Real>(&self) -> BackwardScratch<T> {
        BackwardScratch {
            a: vec![T::zero(); self.mlp.trunk_width],
            b: vec![T::zero(); self.mlp.trunk_width],
        }
    }
}

#[derive(Debug, Clone)]
pub struct BackwardScratch<T> {
    a: Vec<T>,
    b: Vec<T>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> (Field, FieldParams<f64>) {
        let field = Field::new(
            HashGridConfig::from_finest(2, 2, 6, 2, 5),
            MlpConfig {
                trunk_layers: 2,
                trunk_width: 4,
                feature_dim: 3,
            },
            Aabb::new([-1.0; 3], [1.0; 3]),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut params: FieldParams<f64> = field.init_params(&mut rng);
        // move away from the near-zero init so every unit is active somewhere
        for (_, g) in params.groups_mut() {
            g.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        }
        (field, params)
    }

    /// Straight-line dense evaluation with row-by-row loops.
    fn oracle(field: &Field, params: &FieldParams<f64>, p: [f64; 3]) -> (f64, [f64; 3], Vec<f64>) {
        let mut x = field.grid().encode_vec(&params.grid, p).unwrap();
        for layer in &params.trunk {
            let mut y = vec![0.0; layer.outputs];
            for o in 0..layer.outputs {
                let mut acc = layer.bias[o];
                for i in 0..layer.inputs {
                    acc += layer.at(i, o) * x[i];
                }
                y[o] = acc.max(0.0);
            }
            x = y;
        }
        let head = |d: &Dense<f64>| -> Vec<f64> {
            (0..d.outputs)
                .map(|o| d.bias[o] + (0..d.inputs).map(|i| d.at(i, o) * x[i]).sum::<f64>())
                .collect()
        };
        let raw = head(&params.density_rgb);
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        ((1.0 + raw[0].exp()).ln(), [sig(raw[1]), sig(raw[2]), sig(raw[3])], head(&params.feature))
    }

    #[test]
    fn zero_heads_give_fixed_outputs() {
        let (field, mut params) = tiny();
        params.density_rgb = Dense::zeros(4, 4);
        params.feature = Dense::zeros(4, 3);
        let out = field.eval_point(&params, [0.1, 0.2, 0.3]).unwrap();
        assert!((out.sigma - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(out.color, [0.5; 3]);
        assert_eq!(out.feature, vec![0.0; 3]);
    }

    #[test]
    fn matches_dense_oracle() {
        let (field, params) = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let out = field.eval_point(&params, p).unwrap();
            let (s, c, f) = oracle(&field, &params, p);
            assert!((out.sigma - s).abs() < 1e-12);
            for k in 0..3 {
                assert!((out.color[k] - c[k]).abs() < 1e-12);
                assert!((out.feature[k] - f[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batch_equals_sequential_bitwise() {
        let (field, params) = tiny();
        let params: FieldParams<f32> = params.cast();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1usize, 64, 5000] {
            let pts: Vec<[f32; 3]> = (0..n)
                .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                .collect();
            let batch = field.eval_points_batch(&params, &pts).unwrap();
            for (p, b) in pts.iter().zip(&batch) {
                let s = field.eval_point(&params, *p).unwrap();
                assert_eq!(s.sigma.to_bits(), b.sigma.to_bits());
                assert_eq!(s.color.map(f32::to_bits), b.color.map(f32::to_bits));
                assert!(s.feature.iter().zip(&b.feature).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }

    #[test]
    fn out_of_bound_point_is_rejected() {
        let (field, params) = tiny();
        assert!(field.eval_point(&params, [0.0, 0.0, 1.5]).is_err());
        assert!(field.eval_points_batch(&params, &[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let (field, params) = tiny();
        let zero = [0.0; 3];
        let up = vec![
            PointGrad {
                sigma: 0.0,
                color: [0.0; 3],
                feature: Some(&zero[..]),
            };
            3
        ];
        let g = field.field_backward(&params, &[[0.1, 0.2, 0.3], [0.5, -0.5, 0.0], [0.9, 0.9, 0.9]], &up).unwrap();
        assert!(g.groups().iter().all(|(_, v)| v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn density_bias_gradient_is_half_at_zero() {
        let (field, mut params) = tiny();
        params.density_rgb = Dense::zeros(4, 4);
        let up = [PointGrad {
            sigma: 1.0,
            color: [0.0; 3],
            feature: None,
        }];
        let g = field.field_backward(&params, &[[0.2, 0.1, -0.3]], &up).unwrap();
        assert_eq!(g.density_rgb.bias[0], 0.5);
        assert_eq!(&g.density_rgb.bias[1..], &[0.0; 3]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (field, params) = tiny();
        let up = [PointGrad {
            sigma: 1.0,
            color: [0.0; 3],
            feature: None,
        }];
        assert!(field.field_backward(&params, &[[0.0; 3], [0.1; 3]], &up).is_err());
        let bad = [0.0; 5];
        let up = [PointGrad {
            sigma: 1.0,
            color: [0.0; 3],
            feature: Some(&bad[..]),
        }];
        assert!(field.field_backward(&params, &[[0.0; 3]], &up).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (field, mut params) = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let pts: Vec<[f64; 3]> = (0..6)
            .map(|_| [rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9)])
            .collect();
        let ups: Vec<(f64, [f64; 3], Vec<f64>)> = (0..6)
            .map(|_| {
                (
                    rng.gen_range(-1.0..1.0),
                    [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        let upstream: Vec<PointGrad<f64>> = ups
            .iter()
            .map(|(s, c, f)| PointGrad {
                sigma: *s,
                color: *c,
                feature: Some(&f[..]),
            })
            .collect();
        let objective = |params: &FieldParams<f64>| -> f64 {
            let outs = field.eval_points_batch(params, &pts).unwrap();
            outs.iter()
                .zip(&ups)
                .map(|(o, (s, c, f))| {
                    o.sigma * s
                        + (0..3).map(|k| o.color[k] * c[k]).sum::<f64>()
                        + o.feature.iter().zip(f).map(|(a, b)| a * b).sum::<f64>()
                })
                .sum()
        };
        let analytic = field.field_backward(&params, &pts, &upstream).unwrap();
        let h = 1e-5;
        let names: Vec<String> = analytic.groups().into_iter().map(|(n, _)| n).collect();
        for (gi, name) in names.iter().enumerate() {
            let len = analytic.groups()[gi].1.len();
            for i in 0..len {
                let orig = params.groups()[gi].1[i];
                params.groups_mut()[gi].1[i] = orig + h;
                let lp = objective(&params);
                params.groups_mut()[gi].1[i] = orig - h;
                let lm = objective(&params);
                params.groups_mut()[gi].1[i] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let a = analytic.groups()[gi].1[i];
                let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-6);
                assert!(rel <= 1e-3, "{name}[{i}]: analytic {a} vs fd {fd}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn activations_stay_in_range(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, scale in 0.1f64..50.0) {
            let (field, mut params) = tiny();
            for (_, g) in params.groups_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
            }
            let out = field.eval_point(&params, [x, y, z]).unwrap();
            proptest::prop_assert!(out.sigma >= 0.0);
            proptest::prop_assert!(out.color.iter().all(|c| (0.0..=1.0).contains(c)));
        }
    }
}
