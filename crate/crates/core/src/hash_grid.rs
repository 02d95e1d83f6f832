//! Multi-resolution hash encoding.
//!
//! Each level `l` has a cubic grid with `N_l = floor(N_min * b^l)` cells per
//! axis over the normalized scene box. The `F`-vectors of the 8 vertices
//! around a point are trilinearly interpolated and the levels concatenated.
//! Coarse levels whose `(N_l + 1)^3` vertices fit in the table are indexed
//! directly; finer levels use the spatial hash
//! `(x * 1) ^ (y * 2654435761) ^ (z * 805459861) mod 2^table_log2`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::Aabb;
use crate::real::Real;

pub const PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];
pub const INIT_RANGE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HashGridConfig {
    pub levels: usize,
    pub table_log2: u32,
    pub features: usize,
    pub base_resolution: usize,
    pub growth_factor: f64,
}

impl Default for HashGridConfig {
    /// 18 levels x 8 features = 144 outputs, 16 to 512 cells per axis.
    fn default() -> Self {
        HashGridConfig::from_finest(18, 8, 19, 16, 512)
    }
}

impl HashGridConfig {
    /// Picks the growth factor so the last level has `finest` cells per axis.
    pub fn from_finest(levels: usize, features: usize, table_log2: u32, base: usize, finest: usize) -> Self {
        let growth_factor = if levels > 1 {
            (finest as f64 / base as f64).powf(1.0 / (levels - 1) as f64)
        } else {
            2.0
        };
        HashGridConfig {
            levels,
            table_log2,
            features,
            base_resolution: base,
            growth_factor,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.levels * self.features
    }

    pub fn table_size(&self) -> usize {
        1usize << self.table_log2
    }

    pub fn param_count(&self) -> usize {
        self.levels * self.table_size() * self.features
    }

    pub fn resolution(&self, level: usize) -> u32 {
        // the epsilon keeps e.g. 16 * 32^(17/17) from flooring to 511
        (self.base_resolution as f64 * self.growth_factor.powi(level as i32) + 1e-9).floor() as u32
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.features == 0 {
            return Err(Error::Config("hash grid needs at least one level and one feature".into()));
        }
        if !(4..=24).contains(&self.table_log2) {
            return Err(Error::Config(format!("hash.table_log2 = {} outside [4, 24]", self.table_log2)));
        }
        if self.base_resolution == 0 {
            return Err(Error::Config("hash.base_res must be >= 1".into()));
        }
        if !(self.growth_factor > 1.0 && self.growth_factor.is_finite()) {
            return Err(Error::Config(format!("growth factor {} must be > 1", self.growth_factor)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Level {
    resolution: u32,
    direct: bool,
    offset: usize,
}

/// Trainable table entries, level-major then row-major (`F` per row).
#[derive(Debug, Clone, PartialEq)]
pub struct HashGridParams<T> {
    pub tables: Vec<T>,
}

impl<T: Real> HashGridParams<T> {
    pub fn zeros(cfg: &HashGridConfig) -> Self {
        HashGridParams {
            tables: vec![T::zero(); cfg.param_count()],
        }
    }

    pub fn init<R: Rng>(cfg: &HashGridConfig, rng: &mut R) -> Self {
        HashGridParams {
            tables: (0..cfg.param_count())
                .map(|_| T::c(rng.gen_range(-INIT_RANGE..=INIT_RANGE)))
                .collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> HashGridParams<U> {
        HashGridParams {
            tables: self.tables.iter().map(|v| U::c(v.as_f64())).collect(),
        }
    }
}

/// Sparse table gradient for one point: `(flat row offset, gradient row)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeGrad<T> {
    pub rows: Vec<(usize, Vec<T>)>,
    pub point: [T; 3],
}

/// Precomputed level layout for a [`HashGridConfig`] over a scene box.
#[derive(Debug, Clone)]
pub struct HashGrid {
    cfg: HashGridConfig,
    bound: Aabb,
    levels: Vec<Level>,
}

#[derive(Clone, Copy)]
struct Corner<T> {
    row: usize,
    weight: T,
}

impl HashGrid {
    pub fn new(cfg: HashGridConfig, bound: Aabb) -> Result<Self> {
        cfg.validate()?;
        if !bound.is_valid() {
            return Err(Error::Config(format!("invalid scene bound {bound:?}")));
        }
        let table = cfg.table_size() as u64;
        let levels = (0..cfg.levels)
            .map(|l| {
                let resolution = cfg.resolution(l).max(1);
                let side = resolution as u64 + 1;
                Level {
                    resolution,
                    direct: side * side * side <= table,
                    offset: l * cfg.table_size() * cfg.features,
                }
            })
            .collect();
        Ok(HashGrid { cfg, bound, levels })
    }

    pub fn config(&self) -> &HashGridConfig {
        &self.cfg
    }

    pub fn bound(&self) -> &Aabb {
        &self.bound
    }

    pub fn output_dim(&self) -> usize {
        self.cfg.output_dim()
    }

    pub fn level_resolution(&self, level: usize) -> u32 {
        self.levels[level].resolution
    }

    pub fn is_direct(&self, level: usize) -> bool {
        self.levels[level].direct
    }

    fn check_point<T: Real>(&self, p: [T; 3]) -> Result<()> {
        let q = [p[0].as_f64(), p[1].as_f64(), p[2].as_f64()];
        if self.bound.contains(q) {
            Ok(())
        } else {
            Err(Error::pre(format!("point {q:?} outside scene bound {:?}", self.bound)))
        }
    }

    #[inline]
    fn vertex_index(&self, level: &Level, v: [u32; 3]) -> usize {
        let idx = if level.direct {
            let side = level.resolution as usize + 1;
            v[0] as usize + side * (v[1] as usize + side * v[2] as usize)
        } else {
            let h = v[0].wrapping_mul(PRIMES[0]) ^ v[1].wrapping_mul(PRIMES[1]) ^ v[2].wrapping_mul(PRIMES[2]);
            (h as usize) & (self.cfg.table_size() - 1)
        };
        level.offset + idx * self.cfg.features
    }

    /// Cell coordinates and fractional offsets of `p` at `level`.
    #[inline]
    fn locate<T: Real>(&self, level: &Level, p: [T; 3]) -> ([u32; 3], [T; 3]) {
        let mut cell = [0u32; 3];
        let mut frac = [T::zero(); 3];
        let n = level.resolution;
        let nf = T::c(n as f64);
        for k in 0..3 {
            let lo = T::c(self.bound.min[k]);
            let ext = T::c(self.bound.max[k] - self.bound.min[k]);
            let x = (p[k] - lo) / ext * nf;
            let c = x.floor().as_f64().clamp(0.0, (n - 1) as f64) as u32;
            cell[k] = c;
            frac[k] = x - T::c(c as f64);
        }
        (cell, frac)
    }

    #[inline]
    fn corners<T: Real>(&self, level: &Level, cell: [u32; 3], frac: [T; 3]) -> [Corner<T>; 8] {
        let mut out = [Corner {
            row: 0,
            weight: T::zero(),
        }; 8];
        for (c, slot) in out.iter_mut().enumerate() {
            let b = [(c & 1) as u32, ((c >> 1) & 1) as u32, ((c >> 2) & 1) as u32];
            let mut w = T::one();
            for k in 0..3 {
                w *= if b[k] == 1 { frac[k] } else { T::one() - frac[k] };
            }
            *slot = Corner {
                row: self.vertex_index(level, [cell[0] + b[0], cell[1] + b[1], cell[2] + b[2]]),
                weight: w,
            };
        }
        out
    }

    /// Encodes `p` into `out` (length `L * F`).
    pub fn encode<T: Real>(&self, params: &HashGridParams<T>, p: [T; 3], out: &mut [T]) -> Result<()> {
        self.check_point(p)?;
        if out.len() != self.output_dim() {
            return Err(Error::pre(format!("encode output has length {}, expected {}", out.len(), self.output_dim())));
        }
        self.encode_unchecked(params, p, out);
        Ok(())
    }

    pub fn encode_vec<T: Real>(&self, params: &HashGridParams<T>, p: [T; 3]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.output_dim()];
        self.encode(params, p, &mut out)?;
        Ok(out)
    }

    /// [`encode`](Self::encode) without the bound check; `p` must be inside.
    #[inline]
    pub fn encode_unchecked<T: Real>(&self, params: &HashGridParams<T>, p: [T; 3], out: &mut [T]) {
        let f = self.cfg.features;
        for (level, dst) in self.levels.iter().zip(out.chunks_exact_mut(f)) {
            dst.iter_mut().for_each(|v| *v = T::zero());
            let (cell, frac) = self.locate(level, p);
            for corner in self.corners(level, cell, frac) {
                let row = &params.tables[corner.row..corner.row + f];
                for (d, r) in dst.iter_mut().zip(row) {
                    *d += corner.weight * *r;
                }
            }
        }
    }

    /// Table gradient rows and point gradient for upstream `d(loss)/d(output)`.
    pub fn encode_backward<T: Real>(
        &self,
        params: &HashGridParams<T>,
        p: [T; 3],
        upstream: &[T],
    ) -> Result<EncodeGrad<T>> {
        self.check_point(p)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::pre("upstream gradient length mismatch"));
        }
        let f = self.cfg.features;
        let mut rows = Vec::with_capacity(8 * self.levels.len());
        let mut dp = [T::zero(); 3];
        for (level, up) in self.levels.iter().zip(upstream.chunks_exact(f)) {
            let (cell, frac) = self.locate(level, p);
            for corner in self.corners(level, cell, frac) {
                rows.push((corner.row, up.iter().map(|g| corner.weight * *g).collect()));
            }
            let g = self.point_gradient_level(params, level, cell, frac, up);
            for k in 0..3 {
                dp[k] += g[k];
            }
        }
        Ok(EncodeGrad { rows, point: dp })
    }

    /// Adds the table gradient for `p` into a dense buffer shaped like the tables.
    #[inline]
    pub fn accumulate_table_grad<T: Real>(&self, p: [T; 3], upstream: &[T], grad: &mut [T]) {
        let f = self.cfg.features;
        for (level, up) in self.levels.iter().zip(upstream.chunks_exact(f)) {
            if up.iter().all(|g| *g == T::zero()) {
                continue;
            }
            let (cell, frac) = self.locate(level, p);
            for corner in self.corners(level, cell, frac) {
                for (d, g) in grad[corner.row..corner.row + f].iter_mut().zip(up) {
                    *d += corner.weight * *g;
                }
            }
        }
    }

    fn point_gradient_level<T: Real>(
        &self,
        params: &HashGridParams<T>,
        level: &Level,
        cell: [u32; 3],
        frac: [T; 3],
        up: &[T],
    ) -> [T; 3] {
        let f = self.cfg.features;
        let mut out = [T::zero(); 3];
        for c in 0..8usize {
            let b = [(c & 1) as u32, ((c >> 1) & 1) as u32, ((c >> 2) & 1) as u32];
            let row = self.vertex_index(level, [cell[0] + b[0], cell[1] + b[1], cell[2] + b[2]]);
            let value: T = params.tables[row..row + f].iter().zip(up).map(|(t, g)| *t * *g).sum();
            let lin = |k: usize| if b[k] == 1 { frac[k] } else { T::one() - frac[k] };
            let sign = |k: usize| if b[k] == 1 { T::one() } else { -T::one() };
            out[0] += value * sign(0) * lin(1) * lin(2);
            out[1] += value * lin(0) * sign(1) * lin(2);
            out[2] += value * lin(0) * lin(1) * sign(2);
        }
        let n = T::c(level.resolution as f64);
        for k in 0..3 {
            out[k] = out[k] * n / T::c(self.bound.max[k] - self.bound.min[k]);
        }
        out
    }
}
