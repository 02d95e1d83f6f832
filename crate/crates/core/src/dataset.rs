//! Posed RGB-D frames with optional feature maps, and their on-disk layout.
//!
//! A dataset directory holds:
//! - `intrinsics.txt`: `fx fy cx cy width height`
//! - `poses.txt`: one row-major 4x4 camera-to-world matrix (16 floats) per frame
//! - `frame_%05d.rgb.vlft` (HxWx3), `frame_%05d.depth.vlft` (HxW) and an
//!   optional `frame_%05d.feat.vlft` (HxWxD)
//! - `bounds.txt` (optional): `near`, `far` and `bound` keys; derived from the
//!   data when absent.
//!
//! Depth is plane depth along the camera z axis in meters, 0 marks a hole.

use std::fmt::Write as _;
use std::path::Path;

use crate::camera::{self, CameraIntrinsics, Pose};
use crate::config;
use crate::error::{Error, Result};
use crate::math::{self, Aabb};
use crate::vlft::Tensor;

pub const INTRINSICS_FILE: &str = "intrinsics.txt";
pub const POSES_FILE: &str = "poses.txt";
pub const BOUNDS_FILE: &str = "bounds.txt";
pub const DEFAULT_NEAR: f64 = 0.05;

/// Tolerance (meters) when checking back-projected points against the bound.
const BOUND_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub rgb: Tensor,
    pub depth: Tensor,
    pub feature: Option<Tensor>,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

impl Frame {
    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.feature.as_ref().map(|f| f.shape[2])
    }

    pub fn color_at(&self, u: usize, v: usize) -> [f32; 3] {
        let i = 3 * (v * self.width() + u);
        [self.rgb.data[i], self.rgb.data[i + 1], self.rgb.data[i + 2]]
    }

    pub fn depth_at(&self, u: usize, v: usize) -> f32 {
        self.depth.data[v * self.width() + u]
    }

    pub fn feature_at(&self, u: usize, v: usize) -> Option<&[f32]> {
        self.feature.as_ref().map(|f| {
            let d = f.shape[2];
            let i = d * (v * self.width() + u);
            &f.data[i..i + d]
        })
    }

    fn validate(&self, index: usize, bound: &Aabb) -> Result<()> {
        let fail = |reason: String| Error::FrameValidation {
            frame: index,
            reason,
        };
        self.pose.validate().map_err(fail)?;
        self.intrinsics
            .validate()
            .map_err(|e| fail(e.to_string()))?;
        let (h, w) = (self.height(), self.width());
        if self.rgb.shape != [h, w, 3] {
            return Err(fail(format!("rgb shape {:?}, expected [{h}, {w}, 3]", self.rgb.shape)));
        }
        if self.depth.shape != [h, w] {
            return Err(fail(format!("depth shape {:?}, expected [{h}, {w}]", self.depth.shape)));
        }
        if let Some(f) = &self.feature {
            if f.shape.len() != 3 || f.shape[0] != h || f.shape[1] != w || f.shape[2] == 0 {
                return Err(fail(format!("feature shape {:?}, expected [{h}, {w}, D]", f.shape)));
            }
            if f.data.iter().any(|v| !v.is_finite()) {
                return Err(fail("feature map has non-finite values".into()));
            }
        }
        if let Some(bad) = self.rgb.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(fail(format!("rgb value {bad} outside [0, 1]")));
        }
        if let Some(bad) = self.depth.data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(fail(format!("depth value {bad} is negative or non-finite")));
        }
        let origin = self.pose.translation();
        if !bound.contains(origin) {
            return Err(fail(format!("camera origin {origin:?} outside scene bound")));
        }
        for v in 0..h {
            for u in 0..w {
                let d = self.depth_at(u, v) as f64;
                if d == 0.0 {
                    continue;
                }
                let ray = camera::pixel_to_ray(&self.intrinsics, &self.pose, u, v)?;
                let p = ray.at(d * camera::plane_to_ray_depth(&self.intrinsics, u, v));
                if !bound.contains_with_tolerance(p, BOUND_TOLERANCE) {
                    return Err(fail(format!(
                        "back-projected depth at pixel ({u}, {v}) lands at {p:?}, outside scene bound"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frames: Vec<Frame>,
    pub near: f64,
    pub far: f64,
    pub scene_bound: Aabb,
}

impl Dataset {
    /// Checks every dataset and frame invariant.
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Validation("dataset has no frames".into()));
        }
        if !(self.near >= 0.0 && self.near < self.far && self.far.is_finite()) {
            return Err(Error::Validation(format!(
                "ray bounds need 0 <= near < far, got near={} far={}",
                self.near, self.far
            )));
        }
        if !self.scene_bound.is_valid() {
            return Err(Error::Validation(format!("invalid scene bound {:?}", self.scene_bound)));
        }
        let dim = self.frames[0].feature_dim();
        for (i, f) in self.frames.iter().enumerate() {
            if f.feature_dim() != dim {
                return Err(Error::FrameValidation {
                    frame: i,
                    reason: format!("feature dimension {:?} differs from frame 0 ({dim:?})", f.feature_dim()),
                });
            }
            if f.intrinsics != self.frames[0].intrinsics {
                return Err(Error::FrameValidation {
                    frame: i,
                    reason: "intrinsics differ from frame 0".into(),
                });
            }
            f.validate(i, &self.scene_bound)?;
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.frames.first().and_then(Frame::feature_dim)
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.frames[0].intrinsics
    }

    pub fn total_pixels(&self) -> usize {
        self.frames.iter().map(|f| f.intrinsics.pixel_count()).sum()
    }
}

pub fn frame_file(index: usize, kind: &str) -> String {
    format!("frame_{index:05}.{kind}.vlft")
}

fn read_text(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    std::fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::format(name, format!("missing file {}", path.display())),
        _ => Error::io(path, e),
    })
}

fn parse_floats(line: &str, file: &str, line_no: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::format(file, format!("line {}: bad number {s:?}", line_no + 1)))
        })
        .collect()
}

pub fn parse_intrinsics(text: &str) -> Result<CameraIntrinsics> {
    let line = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::format(INTRINSICS_FILE, "empty file"))?;
    let f = parse_floats(line, INTRINSICS_FILE, 0)?;
    if f.len() != 6 {
        return Err(Error::format(INTRINSICS_FILE, format!("expected 6 values, got {}", f.len())));
    }
    let dim = |v: f64, name: &str| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::format(INTRINSICS_FILE, format!("{name} must be a positive integer, got {v}")))
        }
    };
    Ok(CameraIntrinsics {
        fx: f[0],
        fy: f[1],
        cx: f[2],
        cy: f[3],
        width: dim(f[4], "width")?,
        height: dim(f[5], "height")?,
    })
}

pub fn format_intrinsics(i: &CameraIntrinsics) -> String {
    format!("{} {} {} {} {} {}\n", i.fx, i.fy, i.cx, i.cy, i.width, i.height)
}

pub fn parse_poses(text: &str) -> Result<Vec<Pose>> {
    let mut poses = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = parse_floats(line, POSES_FILE, n)?;
        if f.len() != 16 {
            return Err(Error::format(
                POSES_FILE,
                format!("line {}: expected 16 values, got {}", n + 1, f.len()),
            ));
        }
        let mut transform = [[0.0; 4]; 4];
        for (k, v) in f.into_iter().enumerate() {
            transform[k / 4][k % 4] = v;
        }
        poses.push(Pose { transform });
    }
    Ok(poses)
}

pub fn format_poses(poses: &[Pose]) -> String {
    let mut out = String::new();
    for p in poses {
        let row: Vec<String> = p.transform.iter().flatten().map(|v| v.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn format_bounds(ds: &Dataset) -> String {
    let b = &ds.scene_bound;
    let mut s = String::new();
    writeln!(s, "near = {}", ds.near).unwrap();
    writeln!(s, "far = {}", ds.far).unwrap();
    writeln!(
        s,
        "bound = {} {} {} {} {} {}",
        b.min[0], b.min[1], b.min[2], b.max[0], b.max[1], b.max[2]
    )
    .unwrap();
    s
}

/// Near/far/bound from the data itself: box around camera origins and all
/// back-projected depth, padded by 2%, far at 1.05x the longest ray depth.
fn derive_bounds(frames: &[Frame]) -> Result<(f64, f64, Aabb)> {
    let mut bound = Aabb::empty();
    let mut max_depth: f64 = 0.0;
    for f in frames {
        bound.include(f.pose.translation());
        for v in 0..f.height() {
            for u in 0..f.width() {
                let d = f.depth_at(u, v) as f64;
                if d > 0.0 && d.is_finite() {
                    let t = d * camera::plane_to_ray_depth(&f.intrinsics, u, v);
                    let ray = camera::pixel_to_ray(&f.intrinsics, &f.pose, u, v)?;
                    bound.include(ray.at(t));
                    max_depth = max_depth.max(t);
                }
            }
        }
    }
    if max_depth == 0.0 {
        return Err(Error::Validation(format!(
            "{BOUNDS_FILE} missing and no valid depth to derive bounds from"
        )));
    }
    let pad = 0.02 * bound.diagonal().max(1e-3);
    Ok((DEFAULT_NEAR.min(0.5 * max_depth), 1.05 * max_depth, bound.expanded(pad)))
}

fn parse_bounds(text: &str) -> Result<(f64, f64, Aabb)> {
    let kv = config::parse_key_values(text, BOUNDS_FILE)?;
    let get = |k: &str| {
        kv.iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::format(BOUNDS_FILE, format!("missing key {k}")))
    };
    let near = parse_floats(get("near")?, BOUNDS_FILE, 0)?;
    let far = parse_floats(get("far")?, BOUNDS_FILE, 1)?;
    let b = parse_floats(get("bound")?, BOUNDS_FILE, 2)?;
    if near.len() != 1 || far.len() != 1 || b.len() != 6 {
        return Err(Error::format(BOUNDS_FILE, "near/far need 1 value, bound needs 6"));
    }
    Ok((near[0], far[0], Aabb::new([b[0], b[1], b[2]], [b[3], b[4], b[5]])))
}

fn read_tensor(dir: &Path, name: &str) -> Result<Tensor> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::format(name, format!("missing file {}", path.display())));
    }
    Tensor::read_file(&path)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let intrinsics = parse_intrinsics(&read_text(dir, INTRINSICS_FILE)?)?;
    let poses = parse_poses(&read_text(dir, POSES_FILE)?)?;
    let mut frames = Vec::with_capacity(poses.len());
    for (i, pose) in poses.into_iter().enumerate() {
        let rgb = read_tensor(dir, &frame_file(i, "rgb"))?;
        let depth = read_tensor(dir, &frame_file(i, "depth"))?;
        let feat_name = frame_file(i, "feat");
        let feature = if dir.join(&feat_name).exists() {
            Some(read_tensor(dir, &feat_name)?)
        } else {
            None
        };
        frames.push(Frame {
            rgb,
            depth,
            feature,
            pose,
            intrinsics,
        });
    }
    let extra = frame_file(frames.len(), "rgb");
    if dir.join(&extra).exists() {
        return Err(Error::format(
            POSES_FILE,
            format!("{} poses but {extra} exists; frame count must equal pose count", frames.len()),
        ));
    }
    let (near, far, scene_bound) = if dir.join(BOUNDS_FILE).exists() {
        parse_bounds(&read_text(dir, BOUNDS_FILE)?)?
    } else {
        if frames.is_empty() {
            return Err(Error::Validation("dataset has no frames".into()));
        }
        derive_bounds(&frames)?
    };
    let ds = Dataset {
        frames,
        near,
        far,
        scene_bound,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(p, e))
    };
    write(INTRINSICS_FILE, format_intrinsics(ds.intrinsics()))?;
    let poses: Vec<Pose> = ds.frames.iter().map(|f| f.pose).collect();
    write(POSES_FILE, format_poses(&poses))?;
    write(BOUNDS_FILE, format_bounds(ds))?;
    for (i, f) in ds.frames.iter().enumerate() {
        f.rgb.write_file(&dir.join(frame_file(i, "rgb")))?;
        f.depth.write_file(&dir.join(frame_file(i, "depth")))?;
        if let Some(feat) = &f.feature {
            feat.write_file(&dir.join(frame_file(i, "feat")))?;
        }
    }
    Ok(())
}

/// World-space point seen at pixel `(u, v)` given its plane depth.
pub fn back_project(frame: &Frame, u: usize, v: usize, plane_depth: f64) -> Result<math::Vec3> {
    let ray = camera::pixel_to_ray(&frame.intrinsics, &frame.pose, u, v)?;
    Ok(ray.at(plane_depth * camera::plane_to_ray_depth(&frame.intrinsics, u, v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_dataset(n: usize, with_features: bool) -> Dataset {
        let intrinsics = CameraIntrinsics {
            fx: 4.0,
            fy: 4.0,
            cx: 2.0,
            cy: 1.5,
            width: 4,
            height: 3,
        };
        let frames = (0..n)
            .map(|i| {
                let pix = intrinsics.pixel_count();
                let rgb = (0..pix * 3).map(|k| ((k * 7 + i) % 11) as f32 / 10.0).collect();
                let depth = (0..pix).map(|k| if k == 5 { 0.0 } else { 1.0 + 0.1 * k as f32 }).collect();
                Frame {
                    rgb: Tensor::new(vec![3, 4, 3], rgb).unwrap(),
                    depth: Tensor::new(vec![3, 4], depth).unwrap(),
                    feature: with_features.then(|| {
                        Tensor::new(vec![3, 4, 2], (0..pix * 2).map(|k| k as f32 * 0.25 - 1.0).collect())
                            .unwrap()
                    }),
                    pose: Pose::from_translation([0.1 * i as f64, 0.0, 0.0]),
                    intrinsics,
                }
            })
            .collect();
        Dataset {
            frames,
            near: 0.1,
            far: 4.0,
            scene_bound: Aabb::new([-3.0, -3.0, -1.0], [3.0, 3.0, 3.0]),
        }
    }

    fn file_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut v: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn three_frames_roundtrip() {
        let ds = tiny_dataset(3, true);
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.frames.len(), 3);
        assert_eq!(back, ds);
        let again = tempfile::tempdir().unwrap();
        save_dataset(&back, again.path()).unwrap();
        assert_eq!(file_bytes(dir.path()), file_bytes(again.path()));
    }

    #[test]
    fn non_orthonormal_pose_names_frame() {
        let ds = tiny_dataset(3, false);
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let mut poses = format_poses(&ds.frames.iter().map(|f| f.pose).collect::<Vec<_>>());
        let lines: Vec<&str> = poses.lines().collect();
        let bad = lines[1].replacen("1 ", "1.5 ", 1);
        poses = format!("{}\n{}\n{}\n", lines[0], bad, lines[2]);
        std::fs::write(dir.path().join(POSES_FILE), poses).unwrap();
        match load_dataset(dir.path()) {
            Err(Error::FrameValidation { frame, reason }) => {
                assert_eq!(frame, 1);
                assert!(reason.contains("orthonormal"), "{reason}");
            }
            other => panic!("expected frame validation error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_named() {
        let ds = tiny_dataset(2, false);
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("frame_00001.depth.vlft")).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("frame_00001.depth.vlft"), "{err}");
        std::fs::remove_file(dir.path().join(INTRINSICS_FILE)).unwrap();
        assert!(load_dataset(dir.path()).unwrap_err().to_string().contains(INTRINSICS_FILE));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut ds = tiny_dataset(1, false);
        ds.frames.clear();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(save_dataset(&ds, dir.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn read_only_target_is_io_error() {
        let ds = tiny_dataset(1, false);
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        // a regular file in the path cannot be turned into a directory
        let err = save_dataset(&ds, &blocker.join("sub")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err:?}");
    }

    #[test]
    fn depth_outside_bound_is_rejected() {
        let mut ds = tiny_dataset(2, false);
        ds.frames[1].depth.data[0] = 100.0;
        match ds.validate() {
            Err(Error::FrameValidation { frame: 1, reason }) => assert!(reason.contains("outside")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bounds_are_derived_when_file_missing() {
        let ds = tiny_dataset(2, false);
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join(BOUNDS_FILE)).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert!(back.far > 1.0 && back.near < back.far);
        assert_eq!(back.frames, ds.frames);
    }

    #[test]
    fn mismatched_feature_dims_are_rejected() {
        let mut ds = tiny_dataset(2, true);
        ds.frames[1].feature = None;
        assert!(ds.validate().is_err());
    }
}
