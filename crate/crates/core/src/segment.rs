//! Open-vocabulary classification of rendered feature maps, mIoU metrics and
//! query heatmaps.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::camera::{self, CameraIntrinsics, Pose};
use crate::error::{Error, Result};
use crate::field::{Field, FieldParams};
use crate::real::Real;
use crate::render::{self, MarchSpec, RayWorkspace};
use crate::vlft::Tensor;

pub const LABELS_FILE: &str = "labels.tsv";

/// Ordered label names with one embedding each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelCatalog {
    names: Vec<String>,
    embeddings: Vec<Vec<f32>>,
}

impl LabelCatalog {
    pub fn new(names: Vec<String>, embeddings: Vec<Vec<f32>>) -> Result<Self> {
        if names.is_empty() || names.len() != embeddings.len() {
            return Err(Error::Validation(format!(
                "catalog needs one embedding per label, got {} names and {} embeddings",
                names.len(),
                embeddings.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() || n.contains('\t') || n.contains('\n') {
                return Err(Error::Validation(format!("invalid label name {n:?}")));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::Validation(format!("duplicate label {n:?}")));
            }
        }
        let dim = embeddings[0].len();
        for (n, e) in names.iter().zip(&embeddings) {
            if e.len() != dim || dim == 0 {
                return Err(Error::Validation(format!(
                    "label {n:?} has dimension {}, expected {dim}",
                    e.len()
                )));
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("label {n:?} has non-finite values")));
            }
        }
        Ok(LabelCatalog { names, embeddings })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn embedding(&self, k: usize) -> &[f32] {
        &self.embeddings[k]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Every embedding multiplied by `s`.
    pub fn scaled(&self, s: f32) -> LabelCatalog {
        LabelCatalog {
            names: self.names.clone(),
            embeddings: self
                .embeddings
                .iter()
                .map(|e| e.iter().map(|v| v * s).collect())
                .collect(),
        }
    }

    /// `name<TAB>v0 v1 ...` per line.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut names = Vec::new();
        let mut embeddings = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (name, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(LABELS_FILE, format!("line {}: expected name<TAB>values", n + 1)))?;
            let e = values
                .split_whitespace()
                .map(|t| t.parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format(LABELS_FILE, format!("line {}: {e}", n + 1)))?;
            names.push(name.to_string());
            embeddings.push(e);
        }
        LabelCatalog::new(names, embeddings).map_err(|e| Error::format(LABELS_FILE, e.to_string()))
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (n, e) in self.names.iter().zip(&self.embeddings) {
            s.push_str(n);
            s.push('\t');
            for (i, v) in e.iter().enumerate() {
                if i > 0 {
                    s.push(' ');
                }
                write!(s, "{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Similarity {
    #[default]
    Dot,
    Cosine,
}

impl std::str::FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(Similarity::Dot),
            "cosine" => Ok(Similarity::Cosine),
            _ => Err(Error::Config(format!("similarity must be dot or cosine, got {s:?}"))),
        }
    }
}

/// Per-pixel class indices of an H x W image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    pub height: usize,
    pub width: usize,
    pub classes: Vec<u32>,
}

impl ClassMap {
    pub fn new(height: usize, width: usize, classes: Vec<u32>) -> Result<Self> {
        if classes.len() != height * width {
            return Err(Error::pre(format!(
                "{} classes for a {height}x{width} map",
                classes.len()
            )));
        }
        Ok(ClassMap { height, width, classes })
    }

    pub fn at(&self, u: usize, v: usize) -> u32 {
        self.classes[v * self.width + u]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.height, self.width],
            data: self.classes.iter().map(|&c| c as f32).collect(),
        }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.shape.len() != 2 {
            return Err(Error::pre(format!("class map must be HxW, got shape {:?}", t.shape)));
        }
        let classes = t
            .data
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f32 {
                    Ok(v as u32)
                } else {
                    Err(Error::pre(format!("class map value {v} is not a class index")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        ClassMap::new(t.shape[0], t.shape[1], classes)
    }
}

fn feature_pixels(map: &Tensor, dim: usize) -> Result<(usize, usize)> {
    if map.shape.len() != 3 || map.shape[2] != dim {
        return Err(Error::pre(format!(
            "feature map shape {:?} does not match embedding dimension {dim}",
            map.shape
        )));
    }
    Ok((map.shape[0], map.shape[1]))
}

fn similarity(f: &[f32], e: &[f32], sim: Similarity) -> f64 {
    let d: f64 = f.iter().zip(e).map(|(a, b)| *a as f64 * *b as f64).sum();
    match sim {
        Similarity::Dot => d,
        Similarity::Cosine => {
            let nf = f.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
            let ne = e.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
            if nf == 0.0 || ne == 0.0 {
                0.0
            } else {
                d / (nf * ne)
            }
        }
    }
}

/// Highest-similarity label per pixel; ties go to the lowest index.
pub fn classify_features(map: &Tensor, catalog: &LabelCatalog, sim: Similarity) -> Result<ClassMap> {
    let (h, w) = feature_pixels(map, catalog.dim())?;
    let classes = map
        .data
        .chunks_exact(catalog.dim())
        .map(|f| {
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for k in 0..catalog.len() {
                let s = similarity(f, catalog.embedding(k), sim);
                if s > best_score {
                    best = k;
                    best_score = s;
                }
            }
            best as u32
        })
        .collect();
    ClassMap::new(h, w, classes)
}

/// All per-pixel outputs of rendering one view.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub rgb: Tensor,
    /// Plane depth (camera z), matching the dataset convention.
    pub depth: Tensor,
    pub feature: Tensor,
    pub opacity: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct ViewSpec {
    pub near: f64,
    pub far: f64,
    pub samples: usize,
    /// Stratification seed; `None` samples bin midpoints.
    pub seed: Option<u64>,
}

/// Renders every pixel of a view. Output is independent of thread count.
pub fn render_view<T: Real>(
    field: &Field,
    params: &FieldParams<T>,
    pose: &Pose,
    intr: &CameraIntrinsics,
    spec: &ViewSpec,
) -> Result<RenderedView> {
    intr.validate()?;
    let (h, w, d) = (intr.height, intr.width, field.feature_dim());
    let rows: Vec<Result<(Vec<f32>, Vec<f32>, Vec<f32>, Vec<f32>)>> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut ws = RayWorkspace::new(field);
            let mut rgb = Vec::with_capacity(w * 3);
            let mut depth = Vec::with_capacity(w);
            let mut feat = Vec::with_capacity(w * d);
            let mut opacity = Vec::with_capacity(w);
            for u in 0..w {
                let ray = camera::pixel_to_ray(intr, pose, u, v)?;
                let march = MarchSpec {
                    near: spec.near,
                    far: spec.far,
                    samples: spec.samples,
                    seed: spec.seed.map(|s| render::ray_seed(s, (v * w + u) as u64)),
                    early_stop: 0.0,
                };
                let (_, out) = render::march_ray(field, params, &ray, &march, &mut ws)?;
                rgb.extend(out.color.iter().map(|c| c.as_f32()));
                depth.push((out.depth.as_f64() / camera::plane_to_ray_depth(intr, u, v)) as f32);
                feat.extend(out.feature.iter().map(|c| c.as_f32()));
                opacity.push(out.opacity.as_f32());
            }
            Ok((rgb, depth, feat, opacity))
        })
        .collect();
    let mut view = RenderedView {
        rgb: Tensor::zeros(vec![h, w, 3]),
        depth: Tensor::zeros(vec![h, w]),
        feature: Tensor::zeros(vec![h, w, d]),
        opacity: Tensor::zeros(vec![h, w]),
    };
    view.rgb.data.clear();
    view.depth.data.clear();
    view.feature.data.clear();
    view.opacity.data.clear();
    for row in rows {
        let (rgb, depth, feat, opacity) = row?;
        view.rgb.data.extend(rgb);
        view.depth.data.extend(depth);
        view.feature.data.extend(feat);
        view.opacity.data.extend(opacity);
    }
    Ok(view)
}

/// Renders the feature channel of a view.
pub fn render_feature_map<T: Real>(
    field: &Field,
    params: &FieldParams<T>,
    pose: &Pose,
    intr: &CameraIntrinsics,
    spec: &ViewSpec,
) -> Result<Tensor> {
    render_view(field, params, pose, intr, spec).map(|v| v.feature)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegMetrics {
    pub classes: usize,
    /// Row-major K x K counts, rows are ground truth, columns prediction.
    pub confusion: Vec<u64>,
    /// `None` for classes absent from both truth and prediction.
    pub iou_per_class: Vec<Option<f64>>,
    pub miou_class_mean: f64,
    pub miou_freq_weighted: f64,
    pub pixel_accuracy: f64,
}

impl SegMetrics {
    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.confusion[truth * self.classes + pred]
    }

    /// Metric summary followed by per-class rows, tab separated.
    pub fn to_tsv(&self, names: Option<&[String]>) -> String {
        let mut s = String::from("metric\tvalue\n");
        writeln!(s, "miou_class_mean\t{}", self.miou_class_mean).unwrap();
        writeln!(s, "miou_freq_weighted\t{}", self.miou_freq_weighted).unwrap();
        writeln!(s, "pixel_accuracy\t{}", self.pixel_accuracy).unwrap();
        for (k, iou) in self.iou_per_class.iter().enumerate() {
            let name = names.and_then(|n| n.get(k)).cloned().unwrap_or_else(|| k.to_string());
            match iou {
                Some(v) => writeln!(s, "iou.{name}\t{v}").unwrap(),
                None => writeln!(s, "iou.{name}\tabsent").unwrap(),
            }
        }
        s
    }
}

/// Confusion matrix over all views and the derived IoU summaries.
pub fn compute_metrics(pred: &[ClassMap], truth: &[ClassMap], classes: usize) -> Result<SegMetrics> {
    if pred.len() != truth.len() {
        return Err(Error::pre(format!("{} predicted maps but {} truth maps", pred.len(), truth.len())));
    }
    if classes == 0 {
        return Err(Error::pre("class count must be positive"));
    }
    let mut confusion = vec![0u64; classes * classes];
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        if p.height != t.height || p.width != t.width {
            return Err(Error::pre(format!(
                "view {i}: prediction is {}x{} but truth is {}x{}",
                p.height, p.width, t.height, t.width
            )));
        }
        for (&a, &b) in t.classes.iter().zip(&p.classes) {
            let (a, b) = (a as usize, b as usize);
            if a >= classes || b >= classes {
                return Err(Error::pre(format!("view {i}: class id {} outside [0, {classes})", a.max(b))));
            }
            confusion[a * classes + b] += 1;
        }
    }
    let total: u64 = confusion.iter().sum();
    if total == 0 {
        return Err(Error::pre("no pixels to evaluate"));
    }
    let mut iou_per_class = Vec::with_capacity(classes);
    let mut mean_sum = 0.0;
    let mut present = 0usize;
    let mut freq = 0.0;
    let mut trace = 0u64;
    for k in 0..classes {
        let tp = confusion[k * classes + k];
        let row: u64 = confusion[k * classes..(k + 1) * classes].iter().sum();
        let col: u64 = (0..classes).map(|r| confusion[r * classes + k]).sum();
        trace += tp;
        let union = row + col - tp;
        if union == 0 {
            iou_per_class.push(None);
            continue;
        }
        let iou = tp as f64 / union as f64;
        iou_per_class.push(Some(iou));
        mean_sum += iou;
        present += 1;
        freq += row as f64 / total as f64 * iou;
    }
    Ok(SegMetrics {
        classes,
        confusion,
        iou_per_class,
        miou_class_mean: mean_sum / present as f64,
        miou_freq_weighted: freq,
        pixel_accuracy: trace as f64 / total as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    /// H x W values in [0, 1].
    pub values: Tensor,
    /// The raw similarities were constant, so `values` is all zeros.
    pub constant: bool,
}

/// Per-pixel dot product with `query`, min-max normalized per image.
pub fn query_heatmap(map: &Tensor, query: &[f32]) -> Result<Heatmap> {
    let (h, w) = feature_pixels(map, query.len())?;
    let raw: Vec<f64> = map
        .data
        .chunks_exact(query.len())
        .map(|f| similarity(f, query, Similarity::Dot))
        .collect();
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let constant = !(range > 0.0);
    let data = raw
        .iter()
        .map(|&r| if constant { 0.0 } else { ((r - lo) / range) as f32 })
        .collect();
    Ok(Heatmap {
        values: Tensor::new(vec![h, w], data)?,
        constant,
    })
}
