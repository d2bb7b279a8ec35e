//! Weak-perspective camera model.
//!
//! A camera is a global rotation (axis-angle), an isotropic pixel scale and
//! a 2D pixel translation. Projection rotates a 3D point, drops z, scales
//! and translates: `x2d = s * (R p).xy + t`. Depth ordering uses the
//! rotated z before the drop; smaller z is nearer to the viewer. Projected
//! coordinates follow the image convention: origin at the top-left pixel
//! corner, x right, y down.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Weak-perspective camera: rotation `r` (axis-angle), scale `s`
/// (pixels per millimeter), translation `t` (pixels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    /// Isotropic scale, strictly positive.
    pub s: f64,
    /// In-image translation, pixels.
    pub t: Vector2<f64>,
    /// Global rotation as an axis-angle vector with norm <= pi.
    pub r: Vector3<f64>,
}

impl CameraParams {
    pub fn new(s: f64, t: Vector2<f64>, r: Vector3<f64>) -> Self {
        Self { s, t, r }
    }

    /// The rotation matrix for `self.r`.
    pub fn rotation(&self) -> Matrix3<f64> {
        rodrigues(&self.r)
    }
}

/// Rotation matrix for an axis-angle vector.
///
/// The angle is the vector norm, the axis its direction. Stable at the
/// origin: the small-angle branch switches to series expansions of
/// sin(t)/t and (1-cos(t))/t^2, so `r = 0` yields the identity exactly
/// and the result stays accurate through the switchover.
pub fn rodrigues(r: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = r.norm_squared();
    // K = skew(r); R = I + a*K + b*K^2 with a = sin(t)/t, b = (1-cos(t))/t^2.
    let (a, b) = if theta2 < 1e-16 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        ((theta.sin()) / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = Matrix3::new(0.0, -r.z, r.y, r.z, 0.0, -r.x, -r.y, r.x, 0.0);
    Matrix3::identity() + k * a + k * k * b
}

/// Projects root-relative 3D points (mm) to pixel coordinates.
///
/// Applies the camera rotation, drops z, then scales and translates.
pub fn project_weak(points: &[Vector3<f64>], cam: &CameraParams) -> Vec<Vector2<f64>> {
    let rot = cam.rotation();
    points
        .iter()
        .map(|p| {
            let q = rot * p;
            Vector2::new(cam.s * q.x + cam.t.x, cam.s * q.y + cam.t.y)
        })
        .collect()
}

/// Rotated-frame depths for the same points `project_weak` maps to 2D.
/// Smaller values are nearer to the viewer.
pub fn depths(points: &[Vector3<f64>], cam: &CameraParams) -> Vec<f64> {
    let rot = cam.rotation();
    points.iter().map(|p| (rot * p).z).collect()
}
