//! Training objectives for pose and shape regression.
//!
//! Every kernel reduces by the mean over the coordinates it touches, so
//! values are comparable across joint counts, mesh resolutions and
//! sequence lengths. The squared-distance kernels come with analytic
//! gradients (2 * residual / coordinate count) that the tests pin
//! against central differences.
//!
//! A weighted total combines the kernels over a frame sequence: data
//! terms are averaged over the frames that carry them, the smoothness
//! term over consecutive frame pairs. Optional supervision (mesh
//! vertices, segmentation masks, camera parameters) simply drops out of
//! the total when the ground truth does not provide it.

use image::GrayImage;
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraParams;
use crate::handmodel::{HandPose, HandShape, JointSet, JOINT_COUNT, POSE_DIM, SHAPE_DIM};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("frame counts differ: {pred} predictions, {truth} truths")]
    FrameCountMismatch { pred: usize, truth: usize },
    #[error("loss over an empty sequence")]
    Empty,
    #[error("vertex counts differ: {pred} predicted, {truth} truth")]
    VertexCountMismatch { pred: usize, truth: usize },
}

// ===== per-frame kernels =====

/// Mean absolute 2D joint error in pixels, averaged over all 42
/// coordinates.
pub fn loss_joints2d(pred: &[Vector2<f64>; JOINT_COUNT], truth: &[Vector2<f64>; JOINT_COUNT]) -> f64 {
    let mut acc = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        acc += (p.x - t.x).abs() + (p.y - t.y).abs();
    }
    acc / (JOINT_COUNT * 2) as f64
}

/// Mean squared 3D joint error in mm^2, averaged over all 63
/// coordinates.
pub fn loss_joints3d(pred: &JointSet, truth: &JointSet) -> f64 {
    let mut acc = 0.0;
    for (p, t) in pred.0.iter().zip(&truth.0) {
        acc += (p - t).norm_squared();
    }
    acc / (JOINT_COUNT * 3) as f64
}

/// Gradient of [`loss_joints3d`] with respect to the prediction.
pub fn grad_loss_joints3d(pred: &JointSet, truth: &JointSet) -> JointSet {
    let scale = 2.0 / (JOINT_COUNT * 3) as f64;
    let mut out = [Vector3::zeros(); JOINT_COUNT];
    for (o, (p, t)) in out.iter_mut().zip(pred.0.iter().zip(&truth.0)) {
        *o = (p - t) * scale;
    }
    JointSet(out)
}

/// Mean squared vertex error in mm^2 over all vertex coordinates.
pub fn loss_mesh3d(pred: &[Vector3<f64>], truth: &[Vector3<f64>]) -> Result<f64, LossError> {
    if pred.len() != truth.len() {
        return Err(LossError::VertexCountMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(LossError::Empty);
    }
    let mut acc = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        acc += (p - t).norm_squared();
    }
    Ok(acc / (pred.len() * 3) as f64)
}

/// Gradient of [`loss_mesh3d`] with respect to the predicted vertices.
pub fn grad_loss_mesh3d(
    pred: &[Vector3<f64>],
    truth: &[Vector3<f64>],
) -> Result<Vec<Vector3<f64>>, LossError> {
    if pred.len() != truth.len() {
        return Err(LossError::VertexCountMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(LossError::Empty);
    }
    let scale = 2.0 / (pred.len() * 3) as f64;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * scale).collect())
}

/// Fraction of predicted 2D joints that miss the segmentation mask.
/// Each joint is read at its rounded pixel; any nonzero mask value
/// counts as a hit and joints outside the frame count as misses, so the
/// value always lies in [0, 1].
pub fn loss_mask(pred: &[Vector2<f64>; JOINT_COUNT], mask: &GrayImage) -> f64 {
    let (w, h) = mask.dimensions();
    let mut hits = 0usize;
    for p in pred {
        let x = p.x.round();
        let y = p.y.round();
        if x < 0.0 || y < 0.0 || !x.is_finite() || !y.is_finite() {
            continue;
        }
        let (xi, yi) = (x as u32, y as u32);
        if xi < w && yi < h && mask.get_pixel(xi, yi).0[0] != 0 {
            hits += 1;
        }
    }
    1.0 - hits as f64 / JOINT_COUNT as f64
}

// ===== smoothness =====

/// Squared parameter velocity between consecutive frames: the mean
/// squared shape change plus `lambda_theta` times the mean squared
/// articulation change.
pub fn loss_temporal(
    beta_prev: &HandShape,
    theta_prev: &HandPose,
    beta_next: &HandShape,
    theta_next: &HandPose,
    lambda_theta: f64,
) -> f64 {
    let mut beta_acc = 0.0;
    for (a, b) in beta_prev.0.iter().zip(&beta_next.0) {
        beta_acc += (b - a) * (b - a);
    }
    let mut theta_acc = 0.0;
    for (a, b) in theta_prev.0.iter().zip(&theta_next.0) {
        theta_acc += (b - a) * (b - a);
    }
    beta_acc / SHAPE_DIM as f64 + lambda_theta * theta_acc / POSE_DIM as f64
}

/// Gradient of [`loss_temporal`] with respect to the later frame's
/// parameters.
pub fn grad_loss_temporal(
    beta_prev: &HandShape,
    theta_prev: &HandPose,
    beta_next: &HandShape,
    theta_next: &HandPose,
    lambda_theta: f64,
) -> ([f64; SHAPE_DIM], [f64; POSE_DIM]) {
    let mut d_beta = [0.0; SHAPE_DIM];
    let bscale = 2.0 / SHAPE_DIM as f64;
    for (d, (a, b)) in d_beta.iter_mut().zip(beta_prev.0.iter().zip(&beta_next.0)) {
        *d = (b - a) * bscale;
    }
    let mut d_theta = [0.0; POSE_DIM];
    let tscale = 2.0 * lambda_theta / POSE_DIM as f64;
    for (d, (a, b)) in d_theta.iter_mut().zip(theta_prev.0.iter().zip(&theta_next.0)) {
        *d = (b - a) * tscale;
    }
    (d_beta, d_theta)
}

// ===== parameter regression =====

/// Full per-frame parameter set a regressor predicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: HandPose,
    pub beta: HandShape,
    pub cam: CameraParams,
}

/// Gradient of [`loss_camera`] split by parameter group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParamsGrad {
    pub theta: [f64; POSE_DIM],
    pub beta: [f64; SHAPE_DIM],
    pub r: Vector3<f64>,
    pub t: Vector2<f64>,
    pub s: f64,
}

/// Squared parameter regression error: the sum over the five groups
/// (articulation, shape, rotation, translation, scale) of that group's
/// mean squared difference. Each group is mean-normalized on its own so
/// no group dominates purely by dimension.
pub fn loss_camera(pred: &ModelParams, truth: &ModelParams) -> f64 {
    let mut theta_acc = 0.0;
    for (p, t) in pred.theta.0.iter().zip(&truth.theta.0) {
        theta_acc += (p - t) * (p - t);
    }
    let mut beta_acc = 0.0;
    for (p, t) in pred.beta.0.iter().zip(&truth.beta.0) {
        beta_acc += (p - t) * (p - t);
    }
    let r_acc = (pred.cam.r - truth.cam.r).norm_squared();
    let t_acc = (pred.cam.t - truth.cam.t).norm_squared();
    let s_acc = (pred.cam.s - truth.cam.s) * (pred.cam.s - truth.cam.s);
    theta_acc / POSE_DIM as f64 + beta_acc / SHAPE_DIM as f64 + r_acc / 3.0 + t_acc / 2.0 + s_acc
}

/// Gradient of [`loss_camera`] with respect to the prediction.
pub fn grad_loss_camera(pred: &ModelParams, truth: &ModelParams) -> ModelParamsGrad {
    let mut theta = [0.0; POSE_DIM];
    let tscale = 2.0 / POSE_DIM as f64;
    for (d, (p, t)) in theta.iter_mut().zip(pred.theta.0.iter().zip(&truth.theta.0)) {
        *d = (p - t) * tscale;
    }
    let mut beta = [0.0; SHAPE_DIM];
    let bscale = 2.0 / SHAPE_DIM as f64;
    for (d, (p, t)) in beta.iter_mut().zip(pred.beta.0.iter().zip(&truth.beta.0)) {
        *d = (p - t) * bscale;
    }
    ModelParamsGrad {
        theta,
        beta,
        r: (pred.cam.r - truth.cam.r) * (2.0 / 3.0),
        t: (pred.cam.t - truth.cam.t),
        s: 2.0 * (pred.cam.s - truth.cam.s),
    }
}

// ===== weighted totals over sequences =====

/// Term weights for the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_2d: f64,
    pub lambda_3d: f64,
    pub lambda_mask: f64,
    pub lambda_temp: f64,
    /// Articulation weight inside the smoothness term.
    pub lambda_temp_theta: f64,
    pub lambda_cam: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_2d: 5.0,
            lambda_3d: 100.0,
            lambda_mask: 10.0,
            lambda_temp: 100.0,
            lambda_temp_theta: 2e-4,
            lambda_cam: 1.0,
        }
    }
}

/// Alternative articulation smoothness weight used by configurations
/// that regularize pose velocity much harder than the default.
pub const LAMBDA_TEMP_THETA_ALT: f64 = 0.01;

/// One frame of network output.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePrediction {
    pub joints2d: [Vector2<f64>; JOINT_COUNT],
    pub joints3d: JointSet,
    pub params: ModelParams,
    /// Skinned mesh vertices, when the model produces them.
    pub vertices: Option<Vec<Vector3<f64>>>,
}

/// One frame of supervision. Optional fields drop their term from the
/// total when absent.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub joints2d: [Vector2<f64>; JOINT_COUNT],
    pub joints3d: JointSet,
    pub params: ModelParams,
    pub vertices: Option<Vec<Vector3<f64>>>,
    pub mask: Option<GrayImage>,
}

/// Per-term values behind a weighted total. Unweighted means; `None`
/// when no frame carried the supervision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub joints2d: f64,
    pub joints3d: f64,
    pub mesh3d: Option<f64>,
    pub mask: Option<f64>,
    pub temporal: f64,
    pub camera: Option<f64>,
    pub total: f64,
}

/// Weighted objective without parameter supervision.
pub fn loss_total(
    pred: &[FramePrediction],
    truth: &[FrameTruth],
    weights: &LossWeights,
) -> Result<LossBreakdown, LossError> {
    compose_total(pred, truth, weights, false)
}

/// Weighted objective including the parameter regression term.
pub fn loss_total_with_camera(
    pred: &[FramePrediction],
    truth: &[FrameTruth],
    weights: &LossWeights,
) -> Result<LossBreakdown, LossError> {
    compose_total(pred, truth, weights, true)
}

fn compose_total(
    pred: &[FramePrediction],
    truth: &[FrameTruth],
    weights: &LossWeights,
    with_camera: bool,
) -> Result<LossBreakdown, LossError> {
    if pred.len() != truth.len() {
        return Err(LossError::FrameCountMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(LossError::Empty);
    }
    let n = pred.len() as f64;

    let mut l2d = 0.0;
    let mut l3d = 0.0;
    let mut mesh_acc = 0.0;
    let mut mesh_frames = 0usize;
    let mut mask_acc = 0.0;
    let mut mask_frames = 0usize;
    let mut cam_acc = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        l2d += loss_joints2d(&p.joints2d, &t.joints2d);
        l3d += loss_joints3d(&p.joints3d, &t.joints3d);
        if let (Some(pv), Some(tv)) = (&p.vertices, &t.vertices) {
            mesh_acc += loss_mesh3d(pv, tv)?;
            mesh_frames += 1;
        }
        if let Some(mask) = &t.mask {
            mask_acc += loss_mask(&p.joints2d, mask);
            mask_frames += 1;
        }
        if with_camera {
            cam_acc += loss_camera(&p.params, &t.params);
        }
    }
    l2d /= n;
    l3d /= n;
    let mesh3d = (mesh_frames > 0).then(|| mesh_acc / mesh_frames as f64);
    let mask = (mask_frames > 0).then(|| mask_acc / mask_frames as f64);
    let camera = with_camera.then(|| cam_acc / n);

    // Smoothness over consecutive prediction pairs; a single frame has
    // none, so the term is zero.
    let mut temporal = 0.0;
    if pred.len() > 1 {
        for pair in pred.windows(2) {
            temporal += loss_temporal(
                &pair[0].params.beta,
                &pair[0].params.theta,
                &pair[1].params.beta,
                &pair[1].params.theta,
                weights.lambda_temp_theta,
            );
        }
        temporal /= (pred.len() - 1) as f64;
    }

    let total = weights.lambda_2d * l2d
        + weights.lambda_3d * l3d
        + weights.lambda_3d * mesh3d.unwrap_or(0.0)
        + weights.lambda_mask * mask.unwrap_or(0.0)
        + weights.lambda_temp * temporal
        + weights.lambda_cam * camera.unwrap_or(0.0);

    Ok(LossBreakdown {
        joints2d: l2d,
        joints3d: l3d,
        mesh3d,
        mask,
        temporal,
        camera,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_joints2d(rng: &mut ChaCha8Rng) -> [Vector2<f64>; JOINT_COUNT] {
        let mut out = [Vector2::zeros(); JOINT_COUNT];
        for p in out.iter_mut() {
            *p = Vector2::new(rng.gen_range(0.0..224.0), rng.gen_range(0.0..224.0));
        }
        out
    }

    fn random_joints3d(rng: &mut ChaCha8Rng) -> JointSet {
        let mut out = [Vector3::zeros(); JOINT_COUNT];
        for p in out.iter_mut().skip(1) {
            *p = Vector3::new(
                rng.gen_range(-90.0..90.0),
                rng.gen_range(-90.0..90.0),
                rng.gen_range(-90.0..90.0),
            );
        }
        JointSet(out)
    }

    fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
        let mut theta = HandPose::default();
        for v in theta.0.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut beta = HandShape::default();
        for v in beta.0.iter_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        ModelParams {
            theta,
            beta,
            cam: CameraParams::new(
                rng.gen_range(0.5..2.0),
                Vector2::new(rng.gen_range(0.0..224.0), rng.gen_range(0.0..224.0)),
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ),
            ),
        }
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6) <= tol
    }

    // ===== zero at the truth =====

    #[test]
    fn every_loss_vanishes_on_identical_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let j2 = random_joints2d(&mut rng);
        let j3 = random_joints3d(&mut rng);
        let params = random_params(&mut rng);
        let verts: Vec<Vector3<f64>> =
            (0..50).map(|_| random_joints3d(&mut rng).0[5]).collect();

        assert_eq!(loss_joints2d(&j2, &j2), 0.0);
        assert_eq!(loss_joints3d(&j3, &j3), 0.0);
        assert_eq!(loss_mesh3d(&verts, &verts).unwrap(), 0.0);
        assert_eq!(
            loss_temporal(&params.beta, &params.theta, &params.beta, &params.theta, 0.3),
            0.0
        );
        assert_eq!(loss_camera(&params, &params), 0.0);

        // A mask that is white everywhere catches every in-frame joint.
        let mask = GrayImage::from_pixel(224, 224, Luma([255]));
        assert_eq!(loss_mask(&j2, &mask), 0.0);
    }

    // ===== hand-computed kernel values =====

    #[test]
    fn joints2d_is_the_mean_absolute_coordinate_error() {
        let a = [Vector2::zeros(); JOINT_COUNT];
        let mut b = a;
        b[0] = Vector2::new(3.0, -4.0);
        b[20] = Vector2::new(-1.0, 0.5);
        let expect = (3.0 + 4.0 + 1.0 + 0.5) / 42.0;
        assert!((loss_joints2d(&a, &b) - expect).abs() < 1e-15);
        assert_eq!(loss_joints2d(&a, &b), loss_joints2d(&b, &a));
    }

    #[test]
    fn joints3d_is_the_mean_squared_coordinate_error() {
        let a = JointSet([Vector3::zeros(); JOINT_COUNT]);
        let mut b = a;
        b.0[7] = Vector3::new(1.0, 2.0, -2.0);
        let expect = (1.0 + 4.0 + 4.0) / 63.0;
        assert!((loss_joints3d(&a, &b) - expect).abs() < 1e-15);
    }

    #[test]
    fn mesh_loss_requires_matching_vertex_counts() {
        let a = vec![Vector3::zeros(); 4];
        let b = vec![Vector3::zeros(); 5];
        assert!(matches!(
            loss_mesh3d(&a, &b),
            Err(LossError::VertexCountMismatch { pred: 4, truth: 5 })
        ));
        let mut c = a.clone();
        c[2] = Vector3::new(0.0, 3.0, 0.0);
        assert!((loss_mesh3d(&a, &c).unwrap() - 9.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn mask_loss_counts_rounded_hits_and_stays_bounded() {
        // White 4x4 block at (10..14, 10..14) in a 32x32 mask.
        let mask = GrayImage::from_fn(32, 32, |x, y| {
            if (10..14).contains(&x) && (10..14).contains(&y) {
                Luma([255])
            } else {
                Luma([0])
            }
        });
        let mut joints = [Vector2::new(-50.0, -50.0); JOINT_COUNT];
        // Rounds to (10, 10): hit.
        joints[0] = Vector2::new(9.5, 10.4);
        // Rounds to (14, 10): just outside the block.
        joints[1] = Vector2::new(13.5, 10.0);
        // Far out of frame: miss, not a panic.
        joints[2] = Vector2::new(1e9, 1e9);
        let expect = 1.0 - 1.0 / 21.0;
        assert!((loss_mask(&joints, &mask) - expect).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let joints = random_joints2d(&mut rng);
            let v = loss_mask(&joints, &mask);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn temporal_loss_combines_group_means() {
        let b0 = HandShape::default();
        let mut b1 = HandShape::default();
        b1.0[0] = 2.0;
        let t0 = HandPose::default();
        let mut t1 = HandPose::default();
        t1.0[44] = 3.0;
        let lambda = 0.5;
        let expect = 4.0 / 10.0 + lambda * 9.0 / 45.0;
        assert!((loss_temporal(&b0, &t0, &b1, &t1, lambda) - expect).abs() < 1e-15);
        // Doubling lambda moves only the articulation part.
        let more = loss_temporal(&b0, &t0, &b1, &t1, 1.0);
        assert!((more - (4.0 / 10.0 + 9.0 / 45.0)).abs() < 1e-15);
    }

    #[test]
    fn camera_loss_sums_per_group_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = random_params(&mut rng);

        let mut scale_off = base;
        scale_off.cam.s += 2.0;
        assert!((loss_camera(&scale_off, &base) - 4.0).abs() < 1e-12);

        let mut t_off = base;
        t_off.cam.t += Vector2::new(3.0, 4.0);
        assert!((loss_camera(&t_off, &base) - 25.0 / 2.0).abs() < 1e-12);

        let mut r_off = base;
        r_off.cam.r += Vector3::new(0.3, 0.0, 0.4);
        assert!((loss_camera(&r_off, &base) - 0.25 / 3.0).abs() < 1e-12);

        let mut theta_off = base;
        theta_off.theta.0[10] += 0.9;
        assert!((loss_camera(&theta_off, &base) - 0.81 / 45.0).abs() < 1e-12);

        let mut beta_off = base;
        beta_off.beta.0[9] += 0.6;
        assert!((loss_camera(&beta_off, &base) - 0.36 / 10.0).abs() < 1e-12);
    }

    // ===== gradient checks against central differences =====

    const FD_STEP: f64 = 1e-5;
    const FD_TOL: f64 = 1e-4;

    #[test]
    fn joints3d_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pred = random_joints3d(&mut rng);
        let truth = random_joints3d(&mut rng);
        let grad = grad_loss_joints3d(&pred, &truth);
        for j in 0..JOINT_COUNT {
            for c in 0..3 {
                let mut hi = pred;
                let mut lo = pred;
                hi.0[j][c] += FD_STEP;
                lo.0[j][c] -= FD_STEP;
                let fd =
                    (loss_joints3d(&hi, &truth) - loss_joints3d(&lo, &truth)) / (2.0 * FD_STEP);
                assert!(
                    rel_close(grad.0[j][c], fd, FD_TOL),
                    "joint {j} coord {c}: {} vs {fd}",
                    grad.0[j][c]
                );
            }
        }
    }

    #[test]
    fn mesh_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pred: Vec<Vector3<f64>> = (0..12).map(|_| random_joints3d(&mut rng).0[3]).collect();
        let truth: Vec<Vector3<f64>> = (0..12).map(|_| random_joints3d(&mut rng).0[3]).collect();
        let grad = grad_loss_mesh3d(&pred, &truth).unwrap();
        for v in 0..pred.len() {
            for c in 0..3 {
                let mut hi = pred.clone();
                let mut lo = pred.clone();
                hi[v][c] += FD_STEP;
                lo[v][c] -= FD_STEP;
                let fd = (loss_mesh3d(&hi, &truth).unwrap() - loss_mesh3d(&lo, &truth).unwrap())
                    / (2.0 * FD_STEP);
                assert!(rel_close(grad[v][c], fd, FD_TOL), "vertex {v} coord {c}");
            }
        }
    }

    #[test]
    fn temporal_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let prev = random_params(&mut rng);
        let next = random_params(&mut rng);
        let lambda = 0.37;
        let (d_beta, d_theta) =
            grad_loss_temporal(&prev.beta, &prev.theta, &next.beta, &next.theta, lambda);
        for (k, &g) in d_beta.iter().enumerate() {
            let mut hi = next.beta;
            let mut lo = next.beta;
            hi.0[k] += FD_STEP;
            lo.0[k] -= FD_STEP;
            let fd = (loss_temporal(&prev.beta, &prev.theta, &hi, &next.theta, lambda)
                - loss_temporal(&prev.beta, &prev.theta, &lo, &next.theta, lambda))
                / (2.0 * FD_STEP);
            assert!(rel_close(g, fd, FD_TOL), "beta {k}");
        }
        for (k, &g) in d_theta.iter().enumerate() {
            let mut hi = next.theta;
            let mut lo = next.theta;
            hi.0[k] += FD_STEP;
            lo.0[k] -= FD_STEP;
            let fd = (loss_temporal(&prev.beta, &prev.theta, &next.beta, &hi, lambda)
                - loss_temporal(&prev.beta, &prev.theta, &next.beta, &lo, lambda))
                / (2.0 * FD_STEP);
            assert!(rel_close(g, fd, FD_TOL), "theta {k}");
        }
    }

    #[test]
    fn camera_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pred = random_params(&mut rng);
        let truth = random_params(&mut rng);
        let grad = grad_loss_camera(&pred, &truth);

        for k in 0..POSE_DIM {
            let mut hi = pred;
            let mut lo = pred;
            hi.theta.0[k] += FD_STEP;
            lo.theta.0[k] -= FD_STEP;
            let fd = (loss_camera(&hi, &truth) - loss_camera(&lo, &truth)) / (2.0 * FD_STEP);
            assert!(rel_close(grad.theta[k], fd, FD_TOL), "theta {k}");
        }
        for k in 0..SHAPE_DIM {
            let mut hi = pred;
            let mut lo = pred;
            hi.beta.0[k] += FD_STEP;
            lo.beta.0[k] -= FD_STEP;
            let fd = (loss_camera(&hi, &truth) - loss_camera(&lo, &truth)) / (2.0 * FD_STEP);
            assert!(rel_close(grad.beta[k], fd, FD_TOL), "beta {k}");
        }
        for c in 0..3 {
            let mut hi = pred;
            let mut lo = pred;
            hi.cam.r[c] += FD_STEP;
            lo.cam.r[c] -= FD_STEP;
            let fd = (loss_camera(&hi, &truth) - loss_camera(&lo, &truth)) / (2.0 * FD_STEP);
            assert!(rel_close(grad.r[c], fd, FD_TOL), "r {c}");
        }
        for c in 0..2 {
            let mut hi = pred;
            let mut lo = pred;
            hi.cam.t[c] += FD_STEP;
            lo.cam.t[c] -= FD_STEP;
            let fd = (loss_camera(&hi, &truth) - loss_camera(&lo, &truth)) / (2.0 * FD_STEP);
            assert!(rel_close(grad.t[c], fd, FD_TOL), "t {c}");
        }
        let mut hi = pred;
        let mut lo = pred;
        hi.cam.s += FD_STEP;
        lo.cam.s -= FD_STEP;
        let fd = (loss_camera(&hi, &truth) - loss_camera(&lo, &truth)) / (2.0 * FD_STEP);
        assert!(rel_close(grad.s, fd, FD_TOL), "s");
    }

    // ===== weighted totals =====

    fn random_frames(
        rng: &mut ChaCha8Rng,
        n: usize,
        with_vertices: bool,
        with_mask: bool,
    ) -> (Vec<FramePrediction>, Vec<FrameTruth>) {
        let mut pred = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..n {
            let verts_p: Vec<Vector3<f64>> =
                (0..30).map(|_| random_joints3d(rng).0[9]).collect();
            let verts_t: Vec<Vector3<f64>> =
                (0..30).map(|_| random_joints3d(rng).0[9]).collect();
            pred.push(FramePrediction {
                joints2d: random_joints2d(rng),
                joints3d: random_joints3d(rng),
                params: random_params(rng),
                vertices: with_vertices.then_some(verts_p),
            });
            truth.push(FrameTruth {
                joints2d: random_joints2d(rng),
                joints3d: random_joints3d(rng),
                params: random_params(rng),
                vertices: with_vertices.then_some(verts_t),
                mask: with_mask.then(|| {
                    GrayImage::from_fn(64, 64, |x, y| {
                        if (x + y) % 3 == 0 {
                            Luma([255])
                        } else {
                            Luma([0])
                        }
                    })
                }),
            });
        }
        (pred, truth)
    }

    #[test]
    fn total_is_the_weighted_sum_of_its_own_breakdown() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (pred, truth) = random_frames(&mut rng, 4, true, true);
        let w = LossWeights::default();
        let out = loss_total_with_camera(&pred, &truth, &w).unwrap();
        let recomposed = w.lambda_2d * out.joints2d
            + w.lambda_3d * out.joints3d
            + w.lambda_3d * out.mesh3d.unwrap()
            + w.lambda_mask * out.mask.unwrap()
            + w.lambda_temp * out.temporal
            + w.lambda_cam * out.camera.unwrap();
        assert!((out.total - recomposed).abs() <= 1e-12 * out.total.abs().max(1.0));
    }

    #[test]
    fn optional_terms_drop_out_when_supervision_is_absent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (pred, truth) = random_frames(&mut rng, 3, false, false);
        let w = LossWeights::default();
        let out = loss_total(&pred, &truth, &w).unwrap();
        assert!(out.mesh3d.is_none());
        assert!(out.mask.is_none());
        assert!(out.camera.is_none());
        let recomposed =
            w.lambda_2d * out.joints2d + w.lambda_3d * out.joints3d + w.lambda_temp * out.temporal;
        assert!((out.total - recomposed).abs() <= 1e-12 * out.total.abs().max(1.0));

        // Mesh term needs both sides: prediction-only vertices are unused.
        let (mut pred2, truth2) = random_frames(&mut rng, 2, false, false);
        pred2[0].vertices = Some(vec![Vector3::zeros(); 5]);
        let out2 = loss_total(&pred2, &truth2, &w).unwrap();
        assert!(out2.mesh3d.is_none());
    }

    #[test]
    fn totals_validate_frame_counts_and_reject_empty_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (pred, truth) = random_frames(&mut rng, 2, false, false);
        let w = LossWeights::default();
        assert!(matches!(
            loss_total(&pred[..1], &truth, &w),
            Err(LossError::FrameCountMismatch { pred: 1, truth: 2 })
        ));
        assert!(matches!(
            loss_total(&pred[..0], &truth[..0], &w),
            Err(LossError::Empty)
        ));
    }

    #[test]
    fn single_frame_sequences_have_zero_smoothness() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (pred, truth) = random_frames(&mut rng, 1, false, false);
        let out = loss_total(&pred, &truth, &LossWeights::default()).unwrap();
        assert_eq!(out.temporal, 0.0);
    }

    #[test]
    fn default_weights_are_the_documented_values() {
        let w = LossWeights::default();
        assert_eq!(w.lambda_2d, 5.0);
        assert_eq!(w.lambda_3d, 100.0);
        assert_eq!(w.lambda_mask, 10.0);
        assert_eq!(w.lambda_temp, 100.0);
        assert_eq!(w.lambda_temp_theta, 2e-4);
        assert_eq!(w.lambda_cam, 1.0);
        assert_eq!(LAMBDA_TEMP_THETA_ALT, 0.01);
    }

    #[test]
    fn identical_sequences_score_zero_without_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (pred, _) = random_frames(&mut rng, 3, true, false);
        let truth: Vec<FrameTruth> = pred
            .iter()
            .map(|p| FrameTruth {
                joints2d: p.joints2d,
                joints3d: p.joints3d,
                params: p.params,
                vertices: p.vertices.clone(),
                mask: None,
            })
            .collect();
        let out = loss_total_with_camera(&pred, &truth, &LossWeights::default()).unwrap();
        assert_eq!(out.joints2d, 0.0);
        assert_eq!(out.joints3d, 0.0);
        assert_eq!(out.mesh3d, Some(0.0));
        assert_eq!(out.camera, Some(0.0));
        // Smoothness penalizes prediction velocity, not error, so it
        // stays positive for a moving sequence.
        assert!(out.temporal > 0.0);
        let expect = 100.0 * out.temporal;
        assert!((out.total - expect).abs() < 1e-12);
    }
}
