//! VLFC checkpoints: model configuration, scene bound, training progress and
//! every parameter tensor, optionally with the optimizer moments.
//!
//! Layout (little-endian):
//! - magic `VLFC`, `u8` version
//! - `u32` byte length, then `key = value` header text
//! - `u32` tensor count, then per tensor a `u32` name length, the UTF-8 name
//!   and a VLFT blob

use std::fmt::Write as _;
use std::path::Path;

use crate::config;
use crate::error::{Error, Result};
use crate::field::{Field, FieldParams, MlpConfig};
use crate::hash_grid::HashGridConfig;
use crate::math::Aabb;
use crate::optim::Adam;
use crate::train::TrainState;
use crate::vlft::Tensor;

pub const MAGIC: &[u8; 4] = b"VLFC";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub grid: HashGridConfig,
    pub mlp: MlpConfig,
    pub bound: Aabb,
    pub params: FieldParams<f32>,
    pub iteration: usize,
    /// Present when saved for resuming.
    pub optimizer: Option<Adam<f32>>,
}

impl Checkpoint {
    pub fn from_state(field: &Field, state: &TrainState, with_optimizer: bool) -> Self {
        Checkpoint {
            grid: *field.grid_config(),
            mlp: *field.mlp_config(),
            bound: *field.bound(),
            params: state.params.clone(),
            iteration: state.iteration,
            optimizer: with_optimizer.then(|| state.optimizer.clone()),
        }
    }

    pub fn field(&self) -> Result<Field> {
        Field::new(self.grid, self.mlp, self.bound)
    }

    /// Training state for resuming; fresh moments if none were saved.
    pub fn into_state(self) -> TrainState {
        let optimizer = self.optimizer.unwrap_or_else(|| Adam::new(&self.params));
        TrainState {
            params: self.params,
            optimizer,
            iteration: self.iteration,
        }
    }

    /// Errors unless the stored model matches the given configuration.
    pub fn ensure_matches(&self, grid: &HashGridConfig, mlp: &MlpConfig) -> Result<()> {
        if self.grid != *grid {
            return Err(Error::Config(format!(
                "checkpoint hash grid {:?} differs from configured {:?}",
                self.grid, grid
            )));
        }
        if self.mlp != *mlp {
            return Err(Error::Config(format!(
                "checkpoint mlp {:?} differs from configured {:?}",
                self.mlp, mlp
            )));
        }
        Ok(())
    }

    fn header(&self) -> String {
        let g = &self.grid;
        let m = &self.mlp;
        let b = &self.bound;
        let mut s = String::new();
        writeln!(s, "hash.levels = {}", g.levels).unwrap();
        writeln!(s, "hash.features = {}", g.features).unwrap();
        writeln!(s, "hash.table_log2 = {}", g.table_log2).unwrap();
        writeln!(s, "hash.base_res = {}", g.base_resolution).unwrap();
        writeln!(s, "hash.growth = {}", g.growth_factor).unwrap();
        writeln!(s, "mlp.layers = {}", m.trunk_layers).unwrap();
        writeln!(s, "mlp.width = {}", m.trunk_width).unwrap();
        writeln!(s, "mlp.feature_dim = {}", m.feature_dim).unwrap();
        writeln!(
            s,
            "bound = {} {} {} {} {} {}",
            b.min[0], b.min[1], b.min[2], b.max[0], b.max[1], b.max[2]
        )
        .unwrap();
        writeln!(s, "iteration = {}", self.iteration).unwrap();
        if let Some(o) = &self.optimizer {
            writeln!(s, "adam.step = {}", o.step).unwrap();
        }
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        let header = self.header();
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        let mut tensors: Vec<(String, &[f32])> = self.params.groups();
        if let Some(o) = &self.optimizer {
            tensors.extend(o.m.groups().into_iter().map(|(n, v)| (format!("adam.m.{n}"), v)));
            tensors.extend(o.v.groups().into_iter().map(|(n, v)| (format!("adam.v.{n}"), v)));
        }
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, data) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            Tensor {
                shape: vec![data.len()],
                data: data.to_vec(),
            }
            .write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], file: &str) -> Result<Self> {
        let fail = |why: String| Error::format(file, why);
        let mut r = Reader { bytes, pos: 0, file };
        if r.take(4)? != MAGIC {
            return Err(fail("bad magic, not a VLFC checkpoint".into()));
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(fail(format!("unsupported version {version}")));
        }
        let hlen = r.u32()? as usize;
        let header = std::str::from_utf8(r.take(hlen)?).map_err(|e| fail(format!("header: {e}")))?;
        let kv = config::parse_key_values(header, file)?;
        let get = |k: &str| -> Result<&str> {
            kv.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| fail(format!("header missing {k}")))
        };
        fn num<T: std::str::FromStr>(v: &str, k: &str, file: &str) -> Result<T> {
            v.parse().map_err(|_| Error::format(file, format!("header {k}: bad value {v:?}")))
        }
        let grid = HashGridConfig {
            levels: num(get("hash.levels")?, "hash.levels", file)?,
            features: num(get("hash.features")?, "hash.features", file)?,
            table_log2: num(get("hash.table_log2")?, "hash.table_log2", file)?,
            base_resolution: num(get("hash.base_res")?, "hash.base_res", file)?,
            growth_factor: num(get("hash.growth")?, "hash.growth", file)?,
        };
        let mlp = MlpConfig {
            trunk_layers: num(get("mlp.layers")?, "mlp.layers", file)?,
            trunk_width: num(get("mlp.width")?, "mlp.width", file)?,
            feature_dim: num(get("mlp.feature_dim")?, "mlp.feature_dim", file)?,
        };
        let b: Vec<f64> = get("bound")?
            .split_whitespace()
            .map(|t| num(t, "bound", file))
            .collect::<Result<_>>()?;
        if b.len() != 6 {
            return Err(fail("header bound needs 6 values".into()));
        }
        let bound = Aabb::new([b[0], b[1], b[2]], [b[3], b[4], b[5]]);
        let iteration = num(get("iteration")?, "iteration", file)?;
        let adam_step: Option<u64> = match get("adam.step") {
            Ok(v) => Some(num(v, "adam.step", file)?),
            Err(_) => None,
        };
        grid.validate().map_err(|e| fail(e.to_string()))?;
        mlp.validate().map_err(|e| fail(e.to_string()))?;

        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|e| fail(format!("tensor name: {e}")))?
                .to_string();
            let (t, used) = Tensor::from_bytes(&bytes[r.pos..], file)?;
            r.pos += used;
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(fail(format!("{} trailing bytes", bytes.len() - r.pos)));
        }

        let mut params = FieldParams::<f32>::zeros(&grid, &mlp);
        let mut optimizer = adam_step.map(|step| {
            let mut a = Adam::new(&params);
            a.step = step;
            a
        });
        let mut seen = vec![false; tensors.len()];
        let mut fill = |prefix: &str, target: &mut FieldParams<f32>| -> Result<()> {
            for (name, slot) in target.groups_mut() {
                let full = format!("{prefix}{name}");
                let idx = tensors
                    .iter()
                    .position(|(n, _)| *n == full)
                    .ok_or_else(|| fail(format!("missing tensor {full}")))?;
                let t = &tensors[idx].1;
                if t.data.len() != slot.len() {
                    return Err(fail(format!(
                        "tensor {full} has {} values, configuration needs {}",
                        t.data.len(),
                        slot.len()
                    )));
                }
                slot.copy_from_slice(&t.data);
                seen[idx] = true;
            }
            Ok(())
        };
        fill("", &mut params)?;
        if let Some(o) = optimizer.as_mut() {
            fill("adam.m.", &mut o.m)?;
            fill("adam.v.", &mut o.v)?;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(fail(format!("unexpected tensor {}", tensors[i].0)));
        }
        Ok(Checkpoint {
            grid,
            mlp,
            bound,
            params,
            iteration,
            optimizer,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        // Write then rename so an interrupted save never leaves a torn file.
        let tmp = path.with_extension("vlfc.tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.file, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
