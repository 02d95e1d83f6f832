//! C interface to langfield.
//!
//! Objects are opaque handles created by `*_load` functions and released
//! with the matching `*_free`. Every fallible call returns an [`LfStatus`];
//! on failure [`lf_last_error`] describes the problem. Output buffers are
//! caller-allocated and their lengths are checked.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use langfield::camera::{CameraIntrinsics, Pose};
use langfield::checkpoint::Checkpoint;
use langfield::dataset::{self, Dataset};
use langfield::field::{Field, FieldParams};
use langfield::segment::{self, LabelCatalog, Similarity, ViewSpec};
use langfield::vlft::Tensor;
use langfield::Error;

/// Result codes of all fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    Validation = 5,
    Precondition = 6,
    Config = 7,
    NonFinite = 8,
    Generation = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// A trained field loaded from a checkpoint.
pub struct LfModel {
    field: Field,
    params: FieldParams<f32>,
}

/// A label catalog loaded from `labels.tsv`.
pub struct LfCatalog {
    catalog: LabelCatalog,
}

/// A validated dataset directory.
pub struct LfDataset {
    dataset: Dataset,
}

/// Pinhole intrinsics in pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LfIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LfStatus {
    match e {
        Error::Io { .. } => LfStatus::Io,
        Error::Format { .. } => LfStatus::Format,
        Error::FrameValidation { .. } | Error::Validation(_) => LfStatus::Validation,
        Error::Precondition(_) => LfStatus::Precondition,
        Error::Config(_) => LfStatus::Config,
        Error::NonFinite { .. } => LfStatus::NonFinite,
        Error::Generation(_) => LfStatus::Generation,
    }
}

struct Fail(LfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> LfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LfStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(LfStatus::NullArgument, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(LfStatus::InvalidUtf8, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(Fail(
            LfStatus::BufferTooSmall,
            format!("{what} holds {len} values, {need} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn in_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn lf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Loads a VLFC checkpoint.
#[no_mangle]
pub unsafe extern "C" fn lf_model_load(path: *const c_char, out: *mut *mut LfModel) -> LfStatus {
    guard(|| {
        let ck = Checkpoint::read(&path_arg(path)?)?;
        let field = ck.field()?;
        store(out, LfModel { field, params: ck.params })
    })
}

#[no_mangle]
pub unsafe extern "C" fn lf_model_free(model: *mut LfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Feature dimension of the model, 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn lf_model_feature_dim(model: *const LfModel) -> usize {
    model.as_ref().map_or(0, |m| m.field.feature_dim())
}

/// Evaluates the field at a world point inside the scene bound. `feature`
/// receives `lf_model_feature_dim` values and may be null.
#[no_mangle]
pub unsafe extern "C" fn lf_model_eval_point(
    model: *const LfModel,
    point: *const f32,
    sigma: *mut f32,
    rgb: *mut f32,
    feature: *mut f32,
    feature_len: usize,
) -> LfStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let p = in_slice(point, 3, "point")?;
        let out = m.field.eval_point(&m.params, [p[0], p[1], p[2]])?;
        *sigma.as_mut().ok_or_else(|| null("sigma"))? = out.sigma;
        out_slice(rgb, 3, 3, "rgb")?.copy_from_slice(&out.color);
        if !feature.is_null() {
            out_slice(feature, feature_len, out.feature.len(), "feature")?.copy_from_slice(&out.feature);
        }
        Ok(())
    })
}

/// Renders a view from a row-major camera-to-world `pose` (16 values).
/// `rgb` takes H*W*3 values, `depth` H*W plane depths, `feature` H*W*D and
/// may be null. `seed` < 0 samples bin midpoints.
#[no_mangle]
pub unsafe extern "C" fn lf_model_render(
    model: *const LfModel,
    pose: *const f64,
    intrinsics: *const LfIntrinsics,
    near: f64,
    far: f64,
    samples: usize,
    seed: i64,
    rgb: *mut f32,
    rgb_len: usize,
    depth: *mut f32,
    depth_len: usize,
    feature: *mut f32,
    feature_len: usize,
) -> LfStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let i = handle(intrinsics, "intrinsics")?;
        let p = in_slice(pose, 16, "pose")?;
        let mut transform = [[0.0; 4]; 4];
        for (r, row) in transform.iter_mut().enumerate() {
            row.copy_from_slice(&p[r * 4..r * 4 + 4]);
        }
        let pose = Pose { transform };
        pose.validate().map_err(|e| Fail(LfStatus::Validation, e))?;
        let intr = CameraIntrinsics {
            fx: i.fx,
            fy: i.fy,
            cx: i.cx,
            cy: i.cy,
            width: i.width,
            height: i.height,
        };
        let spec = ViewSpec {
            near,
            far,
            samples,
            seed: u64::try_from(seed).ok(),
        };
        let n = intr.width * intr.height;
        let rgb = out_slice(rgb, rgb_len, n * 3, "rgb")?;
        let depth = out_slice(depth, depth_len, n, "depth")?;
        let view = segment::render_view(&m.field, &m.params, &pose, &intr, &spec)?;
        rgb.copy_from_slice(&view.rgb.data);
        depth.copy_from_slice(&view.depth.data);
        if !feature.is_null() {
            out_slice(feature, feature_len, view.feature.data.len(), "feature")?.copy_from_slice(&view.feature.data);
        }
        Ok(())
    })
}

/// Loads and validates a `labels.tsv` catalog.
#[no_mangle]
pub unsafe extern "C" fn lf_catalog_load(path: *const c_char, out: *mut *mut LfCatalog) -> LfStatus {
    guard(|| {
        let catalog = LabelCatalog::read(&path_arg(path)?)?;
        store(out, LfCatalog { catalog })
    })
}

#[no_mangle]
pub unsafe extern "C" fn lf_catalog_free(catalog: *mut LfCatalog) {
    if !catalog.is_null() {
        drop(Box::from_raw(catalog));
    }
}

/// Number of labels, 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn lf_catalog_len(catalog: *const LfCatalog) -> usize {
    catalog.as_ref().map_or(0, |c| c.catalog.len())
}

/// Embedding dimension, 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn lf_catalog_dim(catalog: *const LfCatalog) -> usize {
    catalog.as_ref().map_or(0, |c| c.catalog.dim())
}

/// Index of a label name, or -1 when absent.
#[no_mangle]
pub unsafe extern "C" fn lf_catalog_index(catalog: *const LfCatalog, name: *const c_char) -> i64 {
    let (Some(c), false) = (catalog.as_ref(), name.is_null()) else {
        return -1;
    };
    match CStr::from_ptr(name).to_str() {
        Ok(n) => c.catalog.index_of(n).map_or(-1, |i| i as i64),
        Err(_) => -1,
    }
}

/// Classifies `pixels` feature vectors of the catalog's dimension (row-major)
/// by highest dot product (`cosine` nonzero for cosine similarity).
#[no_mangle]
pub unsafe extern "C" fn lf_classify(
    catalog: *const LfCatalog,
    features: *const f32,
    pixels: usize,
    cosine: i32,
    classes: *mut u32,
    classes_len: usize,
) -> LfStatus {
    guard(|| {
        let c = &handle(catalog, "catalog")?.catalog;
        let d = c.dim();
        let data = in_slice(features, pixels * d, "features")?.to_vec();
        let out = out_slice(classes, classes_len, pixels, "classes")?;
        let map = Tensor::new(vec![1, pixels, d], data)?;
        let sim = if cosine != 0 { Similarity::Cosine } else { Similarity::Dot };
        let result = segment::classify_features(&map, c, sim)?;
        out.copy_from_slice(&result.classes);
        Ok(())
    })
}

/// Loads and validates a dataset directory.
#[no_mangle]
pub unsafe extern "C" fn lf_dataset_load(path: *const c_char, out: *mut *mut LfDataset) -> LfStatus {
    guard(|| {
        let dataset = dataset::load_dataset(&path_arg(path)?)?;
        store(out, LfDataset { dataset })
    })
}

#[no_mangle]
pub unsafe extern "C" fn lf_dataset_free(ds: *mut LfDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

#[no_mangle]
pub unsafe extern "C" fn lf_dataset_frame_count(ds: *const LfDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.dataset.frames.len())
}

/// Feature dimension of the frames, 0 when they carry no features.
#[no_mangle]
pub unsafe extern "C" fn lf_dataset_feature_dim(ds: *const LfDataset) -> usize {
    ds.as_ref().and_then(|d| d.dataset.feature_dim()).unwrap_or(0)
}

/// Intrinsics shared by all frames.
#[no_mangle]
pub unsafe extern "C" fn lf_dataset_intrinsics(ds: *const LfDataset, out: *mut LfIntrinsics) -> LfStatus {
    guard(|| {
        let i = handle(ds, "dataset")?.dataset.intrinsics();
        *out.as_mut().ok_or_else(|| null("out"))? = LfIntrinsics {
            fx: i.fx,
            fy: i.fy,
            cx: i.cx,
            cy: i.cy,
            width: i.width,
            height: i.height,
        };
        Ok(())
    })
}

/// Row-major camera-to-world pose of frame `index` into 16 values.
#[no_mangle]
pub unsafe extern "C" fn lf_dataset_pose(ds: *const LfDataset, index: usize, pose: *mut f64, pose_len: usize) -> LfStatus {
    guard(|| {
        let d = &handle(ds, "dataset")?.dataset;
        let f = d.frames.get(index).ok_or_else(|| {
            Fail(
                LfStatus::Precondition,
                format!("frame {index} out of range, dataset has {}", d.frames.len()),
            )
        })?;
        let out = out_slice(pose, pose_len, 16, "pose")?;
        for (r, row) in f.pose.transform.iter().enumerate() {
            out[r * 4..r * 4 + 4].copy_from_slice(row);
        }
        Ok(())
    })
}

/// Near and far ray distances of the dataset.
#[no_mangle]
pub unsafe extern "C" fn lf_dataset_bounds(ds: *const LfDataset, near: *mut f64, far: *mut f64) -> LfStatus {
    guard(|| {
        let d = &handle(ds, "dataset")?.dataset;
        *near.as_mut().ok_or_else(|| null("near"))? = d.near;
        *far.as_mut().ok_or_else(|| null("far"))? = d.far;
        Ok(())
    })
}
