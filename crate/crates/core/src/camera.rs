//! Pinhole intrinsics, camera-to-world poses and pixel ray generation.
//!
//! Camera frame convention: +x right, +y down, +z along the optical axis.
//! Pixel `(u, v)` is sampled at its center `(u + 0.5, v + 0.5)`.

use crate::error::{Error, Result};
use crate::math::{self, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "intrinsics need fx, fy > 0 and the principal point inside the image: {self:?}"
            )))
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Unit direction of the pixel center in the camera frame.
    pub fn camera_direction(&self, u: usize, v: usize) -> Vec3 {
        let x = (u as f64 + 0.5 - self.cx) / self.fx;
        let y = (v as f64 + 0.5 - self.cy) / self.fy;
        math::normalize([x, y, 1.0])
    }
}

/// Camera-to-world rigid transform, row-major 4x4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub transform: [[f64; 4]; 4],
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        transform: [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
    };

    pub fn from_translation(t: Vec3) -> Pose {
        let mut p = Pose::IDENTITY;
        for k in 0..3 {
            p.transform[k][3] = t[k];
        }
        p
    }

    /// Builds a camera at `eye` whose optical axis points at `target`, with
    /// image "up" as close as possible to world `up`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Pose {
        let forward = math::normalize(math::sub(target, eye));
        let right = math::normalize(math::cross(forward, up));
        let down = math::cross(forward, right);
        let mut transform = Pose::IDENTITY.transform;
        for k in 0..3 {
            transform[k][0] = right[k];
            transform[k][1] = down[k];
            transform[k][2] = forward[k];
            transform[k][3] = eye[k];
        }
        Pose { transform }
    }

    pub fn translation(&self) -> Vec3 {
        [self.transform[0][3], self.transform[1][3], self.transform[2][3]]
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let m = &self.transform;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        math::add(self.rotate(p), self.translation())
    }

    /// Checks orthonormality, unit determinant and the homogeneous row.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let m = &self.transform;
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err("pose has non-finite entries".into());
        }
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(format!("bottom row must be [0 0 0 1], got {:?}", m[3]));
        }
        for i in 0..3 {
            for j in 0..3 {
                let rtr: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (rtr - expect).abs() > 1e-6 {
                    return Err(format!(
                        "rotation not orthonormal: (R^T R)[{i}][{j}] = {rtr}"
                    ));
                }
            }
        }
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        if (det - 1.0).abs() > 1e-6 {
            return Err(format!("rotation determinant is {det}, expected 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub pixel: (usize, usize),
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        math::add(self.origin, math::scale(self.direction, t))
    }
}

/// World-space ray through the center of pixel `(u, v)`.
pub fn pixel_to_ray(intr: &CameraIntrinsics, pose: &Pose, u: usize, v: usize) -> Result<Ray> {
    if u >= intr.width || v >= intr.height {
        return Err(Error::pre(format!(
            "pixel ({u}, {v}) outside {}x{} image",
            intr.width, intr.height
        )));
    }
    let dir_cam = intr.camera_direction(u, v);
    let direction = math::normalize(pose.rotate(dir_cam));
    Ok(Ray {
        origin: pose.translation(),
        direction,
        pixel: (u, v),
    })
}

/// Factor converting plane depth (camera z) to distance along the pixel ray.
pub fn plane_to_ray_depth(intr: &CameraIntrinsics, u: usize, v: usize) -> f64 {
    1.0 / intr.camera_direction(u, v)[2]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics {
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            width: 100,
            height: 100,
        }
    }

    #[test]
    fn principal_point_maps_to_optical_axis() {
        let i = CameraIntrinsics {
            cx: 10.5,
            cy: 7.5,
            ..intr()
        };
        let r = pixel_to_ray(&i, &Pose::IDENTITY, 10, 7).unwrap();
        assert_eq!(r.direction, [0.0, 0.0, 1.0]);
        assert_eq!(r.origin, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn translation_moves_origin_only() {
        let t = [1.0, -2.0, 3.5];
        let a = pixel_to_ray(&intr(), &Pose::IDENTITY, 17, 80).unwrap();
        let b = pixel_to_ray(&intr(), &Pose::from_translation(t), 17, 80).unwrap();
        assert_eq!(b.origin, t);
        assert_eq!(a.direction, b.direction);
    }

    #[test]
    fn corner_pixel_matches_hand_computation() {
        // pixel (99, 99): center 99.5, offset (99.5 - 50) / 100 = 0.495
        let r = pixel_to_ray(&intr(), &Pose::IDENTITY, 99, 99).unwrap();
        let n = (0.495f64 * 0.495 * 2.0 + 1.0).sqrt();
        let want = [0.495 / n, 0.495 / n, 1.0 / n];
        for k in 0..3 {
            assert!((r.direction[k] - want[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_bounds_pixel_is_rejected() {
        assert!(matches!(
            pixel_to_ray(&intr(), &Pose::IDENTITY, 100, 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn look_at_is_a_valid_pose() {
        let p = Pose::look_at([1.0, 2.0, 0.5], [0.0, 0.0, 0.3], [0.0, 0.0, 1.0]);
        p.validate().unwrap();
        let axis = p.rotate([0.0, 0.0, 1.0]);
        let want = math::normalize([-1.0, -2.0, -0.2]);
        for k in 0..3 {
            assert!((axis[k] - want[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn skewed_rotation_fails_validation() {
        let mut p = Pose::IDENTITY;
        p.transform[0][1] = 0.1;
        assert!(p.validate().is_err());
        let mut q = Pose::IDENTITY;
        q.transform[0][0] = -1.0;
        assert!(q.validate().unwrap_err().contains("determinant"));
    }

    proptest::proptest! {
        #[test]
        fn directions_are_unit(u in 0usize..100, v in 0usize..100, yaw in -3.0f64..3.0) {
            let pose = Pose::look_at([0.0, 0.0, 0.0], [yaw.cos(), yaw.sin(), 0.2], [0.0, 0.0, 1.0]);
            let r = pixel_to_ray(&intr(), &pose, u, v).unwrap();
            proptest::prop_assert!((math::norm(r.direction) - 1.0).abs() < 1e-12);
        }
    }
}
