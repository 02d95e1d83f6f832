//! Held-out view evaluation: segmentation metrics, depth error and PSNR.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::field::{Field, FieldParams};
use crate::segment::{self, ClassMap, LabelCatalog, RenderedView, SegMetrics, Similarity, ViewSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ViewScores {
    pub segmentation: SegMetrics,
    /// Mean absolute plane-depth error over pixels with valid ground truth.
    pub depth_mae: f64,
    pub psnr: f64,
}

/// Renders every frame of `ds` and scores it against the frames and the
/// ground-truth class maps.
pub fn evaluate_views(
    field: &Field,
    params: &FieldParams<f32>,
    ds: &Dataset,
    truth: &[ClassMap],
    catalog: &LabelCatalog,
    spec: &ViewSpec,
) -> Result<(ViewScores, Vec<RenderedView>, Vec<ClassMap>)> {
    if truth.len() != ds.frames.len() {
        return Err(Error::pre(format!("{} frames but {} class maps", ds.frames.len(), truth.len())));
    }
    let mut views = Vec::with_capacity(ds.frames.len());
    let mut preds = Vec::with_capacity(ds.frames.len());
    let (mut sq, mut n_rgb) = (0.0f64, 0usize);
    let (mut abs, mut n_depth) = (0.0f64, 0usize);
    for frame in &ds.frames {
        let view = segment::render_view(field, params, &frame.pose, &frame.intrinsics, spec)?;
        preds.push(segment::classify_features(&view.feature, catalog, Similarity::Dot)?);
        for (a, b) in view.rgb.data.iter().zip(&frame.rgb.data) {
            sq += (*a as f64 - *b as f64).powi(2);
            n_rgb += 1;
        }
        for (a, b) in view.depth.data.iter().zip(&frame.depth.data) {
            if *b > 0.0 {
                abs += (*a as f64 - *b as f64).abs();
                n_depth += 1;
            }
        }
        views.push(view);
    }
    let segmentation = segment::compute_metrics(&preds, truth, catalog.len())?;
    let scores = ViewScores {
        segmentation,
        depth_mae: if n_depth > 0 { abs / n_depth as f64 } else { 0.0 },
        psnr: psnr(sq / n_rgb.max(1) as f64),
    };
    Ok((scores, views, preds))
}

/// Peak signal-to-noise ratio in dB for values in [0, 1].
pub fn psnr(mse: f64) -> f64 {
    -10.0 * mse.log10()
}
