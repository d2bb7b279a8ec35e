//! Sequential pose-flow generation.
//!
//! A flow is a short sequence that starts at one database pose and walks
//! toward another: every frame moves the previous joints a fixed
//! fraction of their remaining gap to the final pose, then snaps the
//! intermediate onto the nearest database record, so each frame is a
//! real pose while consecutive frames stay close. Camera parameters and
//! the background crop offset interpolate between their own endpoint
//! samples with the same fractional update (no snapping). Shape and the
//! color template are drawn once per flow and held constant.
//!
//! With zero `noise_sigma` the pipeline is fully deterministic in the
//! RNG: endpoint sampling consumes a documented draw sequence (shape,
//! color template, initial record, final record, initial camera, final
//! camera, initial background offset, final background offset) and the
//! per-frame loop consumes nothing, so one seed reproduces a flow
//! byte for byte. Positive `noise_sigma` adds per-coordinate Gaussian
//! jitter to the pose update (and only to it) before snapping.

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{project_weak, CameraParams};
use crate::handmodel::{HandModel, HandPose, HandShape, JointSet, ModelError, SHAPE_DIM};
use crate::posedb::{PoseDb, PoseIndex};

/// Flow generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Frames per flow, at least 1.
    pub n_frames: usize,
    /// Update step size in (0, n_frames]: each frame closes alpha/n of
    /// the remaining gap to the final pose.
    pub alpha: f64,
    /// Standard deviation of optional per-coordinate pose jitter, mm.
    /// Zero keeps the update deterministic.
    pub noise_sigma: f64,
    /// Output frame width, pixels.
    pub width: u32,
    /// Output frame height, pixels.
    pub height: u32,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            n_frames: 10,
            alpha: 3.0,
            noise_sigma: 0.0,
            width: 224,
            height: 224,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if self.n_frames < 1 {
            return Err(FlowError::BadFrameCount { n: self.n_frames });
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 || self.alpha > self.n_frames as f64 {
            return Err(FlowError::BadAlpha {
                alpha: self.alpha,
                n: self.n_frames,
            });
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(FlowError::BadNoiseSigma {
                sigma: self.noise_sigma,
            });
        }
        if self.width == 0 || self.height == 0 {
            return Err(FlowError::BadFrameSize {
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("flow needs at least one frame, got {n}")]
    BadFrameCount { n: usize },
    #[error("alpha {alpha} outside (0, {n}]")]
    BadAlpha { alpha: f64, n: usize },
    #[error("noise sigma {sigma} must be finite and non-negative")]
    BadNoiseSigma { sigma: f64 },
    #[error("frame size {width}x{height} must be positive")]
    BadFrameSize { width: u32, height: u32 },
    #[error("background source {src_w}x{src_h} smaller than the {width}x{height} frame")]
    BackgroundTooSmall {
        src_w: u32,
        src_h: u32,
        width: u32,
        height: u32,
    },
    #[error("endpoint record position {pos} outside database of {len} records")]
    BadEndpoint { pos: usize, len: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One annotated frame of a flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowFrame {
    /// Database record the frame snapped to.
    pub pose_record_id: u64,
    /// Root-relative joints, mm; always bit-equal to that record.
    pub joints3d: JointSet,
    /// Articulation fitted to `joints3d` (canonical axis-angle form).
    pub theta: HandPose,
    /// Shape, constant across the flow.
    pub beta: HandShape,
    /// Camera for this frame.
    pub cam: CameraParams,
    /// Top-left corner of the background crop in the source image, px.
    pub bg_offset: [u32; 2],
    /// Projection of `joints3d` through `cam`, px.
    pub joints2d: [Vector2<f64>; 21],
    /// RMS joint error of the fitted articulation, mm.
    pub ik_residual_mm: f64,
    /// Distance from the pre-snap interpolant to the snapped record, mm.
    pub snap_distance_mm: f64,
}

/// A generated flow plus everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFlowSeq {
    pub frames: Vec<FlowFrame>,
    /// Palette used for the whole flow.
    pub color_template_id: u32,
    /// Dimensions of the background source image the offsets index into.
    pub background_size: [u32; 2],
    pub config: FlowConfig,
    /// Content hash of the pose database the flow snapped against.
    pub db_fingerprint: String,
}

/// Endpoint draws that define a flow before any frame is built.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowEndpoints {
    pub beta: HandShape,
    pub color_template_id: u32,
    /// Initial and final records as positions in database order.
    pub initial_pos: usize,
    pub final_pos: usize,
    pub cam_initial: CameraParams,
    pub cam_final: CameraParams,
    /// Initial and final background crop corners, px.
    pub bg_initial: [u32; 2],
    pub bg_final: [u32; 2],
}

/// Camera endpoint sampling bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CamSampleBounds {
    /// Scale range relative to the fit-to-frame scale.
    pub scale_rel: (f64, f64),
    /// Translation stays within this central fraction of the frame.
    pub center_frac: f64,
    /// Rotation vectors are volume-uniform in the ball of this radius.
    pub rot_norm_max: f64,
}

impl Default for CamSampleBounds {
    fn default() -> Self {
        CamSampleBounds {
            scale_rel: (0.5, 1.5),
            center_frac: 1.0 / 3.0,
            rot_norm_max: std::f64::consts::PI,
        }
    }
}

/// Scale at which a hand of the given radius fits the frame with a
/// small margin.
pub fn fit_to_frame_scale(width: u32, height: u32, hand_radius_mm: f64) -> f64 {
    0.45 * width.min(height) as f64 / hand_radius_mm
}

/// Draws one camera: scale relative to fit, translation in the central
/// fraction of the frame, rotation volume-uniform over the axis-angle
/// ball. Draw order: s, tx, ty, axis, radius.
pub fn sample_camera<R: Rng + ?Sized>(
    rng: &mut R,
    bounds: &CamSampleBounds,
    width: u32,
    height: u32,
    hand_radius_mm: f64,
) -> CameraParams {
    let fit = fit_to_frame_scale(width, height, hand_radius_mm);
    let s = fit * rng.gen_range(bounds.scale_rel.0..=bounds.scale_rel.1);
    let (w, h) = (width as f64, height as f64);
    let half = bounds.center_frac / 2.0;
    let t = Vector2::new(
        w / 2.0 + w * rng.gen_range(-half..=half),
        h / 2.0 + h * rng.gen_range(-half..=half),
    );
    let axis: [f64; 3] = UnitSphere.sample(rng);
    // Cube-root of a uniform draw makes the radius volume-uniform.
    let radius = bounds.rot_norm_max * rng.gen::<f64>().cbrt();
    let r = Vector3::new(axis[0], axis[1], axis[2]) * radius;
    CameraParams::new(s, t, r)
}

/// Independent camera endpoint pair for one flow.
pub fn sample_endpoint_cams<R: Rng + ?Sized>(
    rng: &mut R,
    bounds: &CamSampleBounds,
    width: u32,
    height: u32,
    hand_radius_mm: f64,
) -> (CameraParams, CameraParams) {
    let a = sample_camera(rng, bounds, width, height, hand_radius_mm);
    let b = sample_camera(rng, bounds, width, height, hand_radius_mm);
    (a, b)
}

/// One interpolation step toward the final pose:
/// `out = final + (1 - alpha/n) * (prev - final)` per coordinate, plus
/// optional Gaussian jitter. This residual form keeps two edge cases
/// exact in floating point: a full step (alpha = n) lands on `final`
/// bit for bit, and `prev == final` is a fixed point.
pub fn update_pose<R: Rng + ?Sized>(
    prev: &JointSet,
    final_pose: &JointSet,
    alpha: f64,
    n_frames: usize,
    noise_sigma: f64,
    rng: &mut R,
) -> JointSet {
    let keep = 1.0 - alpha / n_frames as f64;
    let mut out = [Vector3::zeros(); 21];
    for (o, (p, f)) in out.iter_mut().zip(prev.0.iter().zip(&final_pose.0)) {
        *o = f + (p - f) * keep;
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("validated sigma");
        for o in out.iter_mut() {
            o.x += normal.sample(rng);
            o.y += normal.sample(rng);
            o.z += normal.sample(rng);
        }
    }
    JointSet(out)
}

/// The same fractional update applied to camera parameters. Scale is
/// clamped to stay positive (a convex combination of positive scales
/// already is; the guard is for degenerate endpoint inputs).
pub fn interp_camera(prev: &CameraParams, final_cam: &CameraParams, alpha: f64, n_frames: usize) -> CameraParams {
    let keep = 1.0 - alpha / n_frames as f64;
    CameraParams {
        s: (final_cam.s + (prev.s - final_cam.s) * keep).max(1e-9),
        t: final_cam.t + (prev.t - final_cam.t) * keep,
        r: final_cam.r + (prev.r - final_cam.r) * keep,
    }
}

/// Uniform crop corner over the valid range for a frame inside a source
/// image. Draw order: x, then y.
fn sample_bg_corner<R: Rng + ?Sized>(rng: &mut R, src: [u32; 2], cfg: &FlowConfig) -> [u32; 2] {
    [
        rng.gen_range(0..=(src[0] - cfg.width)),
        rng.gen_range(0..=(src[1] - cfg.height)),
    ]
}

/// Integer per-frame crop corners walking from one endpoint toward the
/// other with the pose update rule. The walk happens in floats and each
/// frame rounds to whole pixels; rounding never leaves the valid range
/// because the float walk is a convex combination of in-range endpoints.
fn background_offsets(initial: [u32; 2], final_: [u32; 2], src: [u32; 2], cfg: &FlowConfig) -> Vec<[u32; 2]> {
    let keep = 1.0 - cfg.alpha / cfg.n_frames as f64;
    let max = [src[0] - cfg.width, src[1] - cfg.height];
    let mut out = Vec::with_capacity(cfg.n_frames);
    out.push(initial);
    let mut state = [initial[0] as f64, initial[1] as f64];
    let target = [final_[0] as f64, final_[1] as f64];
    for _ in 1..cfg.n_frames {
        state[0] = target[0] + (state[0] - target[0]) * keep;
        state[1] = target[1] + (state[1] - target[1]) * keep;
        out.push([
            (state[0].round() as u32).min(max[0]),
            (state[1].round() as u32).min(max[1]),
        ]);
    }
    out
}

/// Samples background endpoints and returns the per-frame crop corners.
/// Errors if the source cannot contain a frame-sized crop.
pub fn background_trajectory<R: Rng + ?Sized>(
    src: [u32; 2],
    cfg: &FlowConfig,
    rng: &mut R,
) -> Result<Vec<[u32; 2]>, FlowError> {
    cfg.validate()?;
    check_bg(src, cfg)?;
    let initial = sample_bg_corner(rng, src, cfg);
    let final_ = sample_bg_corner(rng, src, cfg);
    Ok(background_offsets(initial, final_, src, cfg))
}

fn check_bg(src: [u32; 2], cfg: &FlowConfig) -> Result<(), FlowError> {
    if src[0] < cfg.width || src[1] < cfg.height {
        return Err(FlowError::BackgroundTooSmall {
            src_w: src[0],
            src_h: src[1],
            width: cfg.width,
            height: cfg.height,
        });
    }
    Ok(())
}

/// Draws every per-flow random quantity in the documented order: shape,
/// color template, initial record, final record, initial camera, final
/// camera, initial background corner, final background corner.
pub fn sample_endpoints<R: Rng + ?Sized>(
    db: &PoseDb,
    cfg: &FlowConfig,
    palette_count: u32,
    bg_size: [u32; 2],
    hand_radius_mm: f64,
    rng: &mut R,
) -> Result<FlowEndpoints, FlowError> {
    cfg.validate()?;
    check_bg(bg_size, cfg)?;
    let mut beta = HandShape::default();
    for b in beta.0.iter_mut().take(SHAPE_DIM) {
        *b = rng.gen_range(-2.0..=2.0);
    }
    let color_template_id = rng.gen_range(0..palette_count);
    let initial_pos = rng.gen_range(0..db.len());
    let final_pos = rng.gen_range(0..db.len());
    let bounds = CamSampleBounds::default();
    let (cam_initial, cam_final) =
        sample_endpoint_cams(rng, &bounds, cfg.width, cfg.height, hand_radius_mm);
    let bg_initial = sample_bg_corner(rng, bg_size, cfg);
    let bg_final = sample_bg_corner(rng, bg_size, cfg);
    Ok(FlowEndpoints {
        beta,
        color_template_id,
        initial_pos,
        final_pos,
        cam_initial,
        cam_final,
        bg_initial,
        bg_final,
    })
}

/// Generates a flow from explicit endpoints. The RNG is consumed only
/// when `noise_sigma > 0`.
pub fn generate_flow_between<R: Rng + ?Sized>(
    model: &HandModel,
    db: &PoseDb,
    index: &PoseIndex,
    cfg: &FlowConfig,
    endpoints: &FlowEndpoints,
    bg_size: [u32; 2],
    rng: &mut R,
) -> Result<PoseFlowSeq, FlowError> {
    cfg.validate()?;
    check_bg(bg_size, cfg)?;
    for pos in [endpoints.initial_pos, endpoints.final_pos] {
        if pos >= db.len() {
            return Err(FlowError::BadEndpoint {
                pos,
                len: db.len(),
            });
        }
    }
    endpoints.beta.validate().map_err(FlowError::Model)?;

    let final_joints = db.records()[endpoints.final_pos].joints;
    let bg = background_offsets(endpoints.bg_initial, endpoints.bg_final, bg_size, cfg);

    let mut frames = Vec::with_capacity(cfg.n_frames);
    let mut cur_pos = endpoints.initial_pos;
    let mut cur_snap_distance = 0.0;
    let mut cam = endpoints.cam_initial;
    for (k, &bg_offset) in bg.iter().enumerate() {
        if k > 0 {
            let prev = db.records()[cur_pos].joints;
            let updated = update_pose(
                &prev,
                &final_joints,
                cfg.alpha,
                cfg.n_frames,
                cfg.noise_sigma,
                rng,
            );
            let nb = index.nn_query(&updated);
            cur_pos = nb.pos;
            cur_snap_distance = nb.distance_mm;
            cam = interp_camera(&cam, &endpoints.cam_final, cfg.alpha, cfg.n_frames);
        }
        let rec = &db.records()[cur_pos];
        let fit = model.fit_pose_params(&rec.joints, &endpoints.beta)?;
        let joints2d_vec = project_weak(&rec.joints.0, &cam);
        let mut joints2d = [Vector2::zeros(); 21];
        joints2d.copy_from_slice(&joints2d_vec);
        frames.push(FlowFrame {
            pose_record_id: rec.id,
            joints3d: rec.joints,
            theta: fit.theta,
            beta: endpoints.beta,
            cam,
            bg_offset,
            joints2d,
            ik_residual_mm: fit.residual_rms_mm,
            snap_distance_mm: cur_snap_distance,
        });
    }

    Ok(PoseFlowSeq {
        frames,
        color_template_id: endpoints.color_template_id,
        background_size: bg_size,
        config: cfg.clone(),
        db_fingerprint: db.fingerprint().to_string(),
    })
}

/// Samples endpoints and generates the flow in one call.
pub fn generate_flow<R: Rng + ?Sized>(
    model: &HandModel,
    db: &PoseDb,
    index: &PoseIndex,
    cfg: &FlowConfig,
    palette_count: u32,
    bg_size: [u32; 2],
    rng: &mut R,
) -> Result<PoseFlowSeq, FlowError> {
    let endpoints = sample_endpoints(db, cfg, palette_count, bg_size, model.hand_radius_mm(), rng)?;
    generate_flow_between(model, db, index, cfg, &endpoints, bg_size, rng)
}
