use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use langfield::checkpoint::Checkpoint;
use langfield::segment::{self, ViewSpec};
use langfield::synth;
use langfield::train::{self, TrainConfig};
use langfield_ffi::*;

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = lf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Fixture {
    _dir: tempfile::TempDir,
    ckpt: CString,
    labels: CString,
    data: CString,
    ck: Checkpoint,
    scene: synth::GeneratedScene,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let spec = synth::SceneSpec {
        feature_dim: 8,
        ..synth::SceneSpec::desk()
    };
    let intr = langfield::camera::CameraIntrinsics {
        fx: 10.0,
        fy: 10.0,
        cx: 6.0,
        cy: 4.0,
        width: 12,
        height: 8,
    };
    let scene = synth::generate_dataset(&spec, 3, 1, &intr).unwrap();
    synth::write_generated(&scene, dir.path()).unwrap();
    let field = train::tiny_model(scene.train.scene_bound).unwrap();
    let cfg = TrainConfig {
        rays_per_iter: 32,
        iterations: 2,
        samples_per_ray: 8,
        ..TrainConfig::default()
    };
    let (state, _) = train::train(&field, &scene.train, &cfg, None, |_, _| Ok(())).unwrap();
    let ck = Checkpoint::from_state(&field, &state, false);
    let ck_path = dir.path().join("model.vlfc");
    ck.write(&ck_path).unwrap();
    Fixture {
        ckpt: cpath(&ck_path),
        labels: cpath(&dir.path().join("labels.tsv")),
        data: cpath(&dir.path().join("train")),
        _dir: dir,
        ck,
        scene,
    }
}

#[test]
fn model_eval_and_render_match_the_library() {
    let fx = fixture();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(lf_model_load(fx.ckpt.as_ptr(), &mut model), LfStatus::Ok);
        assert_eq!(lf_model_feature_dim(model), 8);

        let field = fx.ck.field().unwrap();
        let p = [0.1f32, -0.3, 1.2];
        let want = field.eval_point(&fx.ck.params, p).unwrap();
        let (mut sigma, mut rgb, mut feat) = (0.0f32, [0.0f32; 3], [0.0f32; 8]);
        let st = lf_model_eval_point(model, p.as_ptr(), &mut sigma, rgb.as_mut_ptr(), feat.as_mut_ptr(), 8);
        assert_eq!(st, LfStatus::Ok);
        assert_eq!((sigma, rgb, feat.to_vec()), (want.sigma, want.color, want.feature));

        let outside = [50.0f32, 0.0, 0.0];
        let st = lf_model_eval_point(model, outside.as_ptr(), &mut sigma, rgb.as_mut_ptr(), ptr::null_mut(), 0);
        assert_eq!(st, LfStatus::Precondition);
        assert!(last_error().contains("outside"));

        let frame = &fx.scene.train.frames[0];
        let mut pose = [0.0f64; 16];
        let mut ds = ptr::null_mut();
        assert_eq!(lf_dataset_load(fx.data.as_ptr(), &mut ds), LfStatus::Ok);
        assert_eq!(lf_dataset_frame_count(ds), 3);
        assert_eq!(lf_dataset_feature_dim(ds), 8);
        assert_eq!(lf_dataset_pose(ds, 0, pose.as_mut_ptr(), 16), LfStatus::Ok);
        assert_eq!(lf_dataset_pose(ds, 9, pose.as_mut_ptr(), 16), LfStatus::Precondition);
        let mut intr = LfIntrinsics {
            fx: 0.0,
            fy: 0.0,
            cx: 0.0,
            cy: 0.0,
            width: 0,
            height: 0,
        };
        assert_eq!(lf_dataset_intrinsics(ds, &mut intr), LfStatus::Ok);
        let (mut near, mut far) = (0.0, 0.0);
        assert_eq!(lf_dataset_bounds(ds, &mut near, &mut far), LfStatus::Ok);
        let n = intr.width * intr.height;
        let mut rgb = vec![0.0f32; n * 3];
        let mut depth = vec![0.0f32; n];
        let mut feat = vec![0.0f32; n * 8];
        let st = lf_model_render(
            model,
            pose.as_ptr(),
            &intr,
            near,
            far,
            16,
            -1,
            rgb.as_mut_ptr(),
            rgb.len(),
            depth.as_mut_ptr(),
            depth.len(),
            feat.as_mut_ptr(),
            feat.len(),
        );
        assert_eq!(st, LfStatus::Ok);
        let spec = ViewSpec {
            near,
            far,
            samples: 16,
            seed: None,
        };
        let view = segment::render_view(&field, &fx.ck.params, &frame.pose, &frame.intrinsics, &spec).unwrap();
        assert_eq!(rgb, view.rgb.data);
        assert_eq!(depth, view.depth.data);
        assert_eq!(feat, view.feature.data);

        let st = lf_model_render(
            model,
            pose.as_ptr(),
            &intr,
            near,
            far,
            16,
            -1,
            rgb.as_mut_ptr(),
            rgb.len() - 1,
            depth.as_mut_ptr(),
            depth.len(),
            ptr::null_mut(),
            0,
        );
        assert_eq!(st, LfStatus::BufferTooSmall);
        lf_dataset_free(ds);
        lf_model_free(model);
    }
}

#[test]
fn catalog_and_classification() {
    let fx = fixture();
    unsafe {
        let mut cat = ptr::null_mut();
        assert_eq!(lf_catalog_load(fx.labels.as_ptr(), &mut cat), LfStatus::Ok);
        assert_eq!(lf_catalog_len(cat), 5);
        assert_eq!(lf_catalog_dim(cat), 8);
        let name = CString::new("ball").unwrap();
        assert_eq!(lf_catalog_index(cat, name.as_ptr()), 2);
        let missing = CString::new("sofa").unwrap();
        assert_eq!(lf_catalog_index(cat, missing.as_ptr()), -1);

        let feats = fx.scene.train.frames[0].feature.as_ref().unwrap();
        let pixels = feats.data.len() / 8;
        let mut classes = vec![0u32; pixels];
        let st = lf_classify(cat, feats.data.as_ptr(), pixels, 0, classes.as_mut_ptr(), classes.len());
        assert_eq!(st, LfStatus::Ok);
        assert_eq!(classes, fx.scene.train_classes[0].classes);
        lf_catalog_free(cat);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(lf_model_load(ptr::null(), &mut model), LfStatus::NullArgument);
        let nowhere = CString::new("/nonexistent/model.vlfc").unwrap();
        assert_eq!(lf_model_load(nowhere.as_ptr(), &mut model), LfStatus::Io);
        assert!(last_error().contains("/nonexistent/model.vlfc"));
        assert!(model.is_null());
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.vlfc");
        std::fs::write(&bad, b"nope").unwrap();
        assert_eq!(lf_model_load(cpath(&bad).as_ptr(), &mut model), LfStatus::Format);
        let mut ds = ptr::null_mut();
        assert_eq!(lf_dataset_load(cpath(dir.path()).as_ptr(), &mut ds), LfStatus::Format);
        assert_eq!(lf_model_feature_dim(ptr::null()), 0);
        lf_model_free(ptr::null_mut());
        let v = CStr::from_ptr(lf_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/langfield.h")).unwrap();
    for sym in [
        "lf_model_load",
        "lf_model_render",
        "lf_model_eval_point",
        "lf_catalog_load",
        "lf_classify",
        "lf_dataset_load",
        "lf_last_error",
        "LF_STATUS_BUFFER_TOO_SMALL",
        "typedef struct LfModel LfModel",
    ] {
        assert!(header.contains(sym), "{sym} missing from header");
    }
}
