use crate::error::{Error, Result};

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_key_values(text: &str, file: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(file, format!("line {}: expected `key = value`", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::format(file, format!("line {}: empty key", n + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Every recognized key with its default and meaning.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("hash.levels", "18", "number of grid levels"),
    ("hash.features", "8", "features per level"),
    ("hash.table_log2", "19", "log2 of entries per level table"),
    ("hash.base_res", "16", "coarsest grid resolution"),
    ("hash.finest_res", "512", "finest grid resolution"),
    ("mlp.layers", "2", "hidden trunk layers"),
    ("mlp.width", "512", "neurons per trunk layer"),
    ("mlp.feature_dim", "512", "feature head output dimension"),
    ("train.rays", "2048", "rays per iteration"),
    ("train.iters", "1000", "total iterations"),
    ("train.samples", "128", "samples per ray"),
    ("train.lr", "0.001", "learning rate of trunk and heads"),
    ("train.lr_grid", "0.01", "learning rate of hash tables"),
    ("train.beta1", "0.9", "first moment decay"),
    ("train.beta2", "0.99", "second moment decay"),
    ("train.eps", "1e-15", "optimizer epsilon"),
    ("train.seed", "0", "seed for initialization and ray sampling"),
    ("train.ckpt_every", "0", "checkpoint period in iterations, 0 for final only"),
    ("train.deterministic", "true", "byte-identical outputs for fixed seeds"),
    ("train.early_stop", "0", "transmittance below which marching stops, 0 disables"),
    ("train.detach_features", "false", "keep the feature loss away from density"),
    ("train.resume", "", "checkpoint to resume from"),
    ("loss.w_p", "1", "photometric weight"),
    ("loss.w_g", "0.8", "geometric weight"),
    ("loss.w_vl", "0.8", "feature weight"),
    ("render.near", "", "near distance, dataset bounds when empty"),
    ("render.far", "", "far distance, dataset bounds when empty"),
    ("render.samples", "128", "samples per ray when rendering"),
    ("render.seed", "", "stratification seed when rendering, bin midpoints when empty"),
    ("segment.similarity", "dot", "dot or cosine"),
    ("data.dir", "data", "dataset directory"),
    ("out.dir", "out", "output directory"),
];

/// Settings merged from defaults, a config file and command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: Vec<(&'static str, String)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v, _)| (*k, v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Sets `key`. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let slot = self
            .values
            .iter_mut()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
        slot.1 = value.trim().to_string();
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, file: &str) -> Result<()> {
        for (k, v) in parse_key_values(text, file)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &std::path::Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {:?} is not key=value", o.as_ref())))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
            .unwrap_or_else(|| panic!("{key} is not a config key"))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse()
            .map_err(|e| Error::Config(format!("{key} = {v:?}: {e}")))
    }

    /// `None` for an empty value.
    pub fn parse_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if self.get(key).is_empty() {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    pub fn grid(&self) -> Result<crate::hash_grid::HashGridConfig> {
        let cfg = crate::hash_grid::HashGridConfig::from_finest(
            self.parse("hash.levels")?,
            self.parse("hash.features")?,
            self.parse("hash.table_log2")?,
            self.parse("hash.base_res")?,
            self.parse("hash.finest_res")?,
        );
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn mlp(&self) -> Result<crate::field::MlpConfig> {
        let cfg = crate::field::MlpConfig {
            trunk_layers: self.parse("mlp.layers")?,
            trunk_width: self.parse("mlp.width")?,
            feature_dim: self.parse("mlp.feature_dim")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train(&self) -> Result<crate::train::TrainConfig> {
        let cfg = crate::train::TrainConfig {
            rays_per_iter: self.parse("train.rays")?,
            iterations: self.parse("train.iters")?,
            samples_per_ray: self.parse("train.samples")?,
            adam: crate::optim::AdamConfig {
                lr_grid: self.parse("train.lr_grid")?,
                lr_mlp: self.parse("train.lr")?,
                beta1: self.parse("train.beta1")?,
                beta2: self.parse("train.beta2")?,
                eps: self.parse("train.eps")?,
            },
            weights: crate::train::LossWeights {
                photometric: self.parse("loss.w_p")?,
                geometric: self.parse("loss.w_g")?,
                feature: self.parse("loss.w_vl")?,
            },
            seed: self.parse("train.seed")?,
            early_stop: self.parse("train.early_stop")?,
            detach_features: self.parse("train.detach_features")?,
            deterministic: self.parse("train.deterministic")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `key = value` lines for every key, in documentation order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }
}

/// Reference text listing every key, its default and its meaning.
pub fn documentation() -> String {
    let mut s = String::new();
    for (k, v, doc) in KEYS {
        let shown = if v.is_empty() { "(empty)" } else { v };
        s.push_str(&format!("{k:<24} {shown:<8} {doc}\n"));
    }
    s
}
