//! Parametric 3D hand model.
//!
//! The skeleton has 21 joints: the wrist root, then five fingers (thumb,
//! index, middle, ring, pinky), each contributing mcp, pip and dip joints
//! plus a fingertip. The 15 non-tip finger joints articulate with one
//! axis-angle rotation each, giving a 45-dimensional pose vector; the
//! wrist carries no rotation, because the global orientation of the hand
//! lives in [`crate::camera::CameraParams`]. Ten shape parameters in
//! [-2, 2] blend bone lengths linearly around an average-adult template.
//!
//! All constants (template offsets, shape-blend table, mesh shell and
//! skinning parameters) come from a versioned plain-text asset file; the
//! file shipped in `assets/hand_model_v1.txt` documents the format field
//! by field and is embedded as the built-in model.
//!
//! Positions are millimeters and root-relative: `joints_fk` always places
//! the wrist at the origin.

mod asset;
mod mesh;
mod pca;

pub use asset::{AssetError, MeshParams, SkinParams};
pub use mesh::{BoneWeights, HandMesh};
pub use pca::{pose_pca_fit, PcaError, PoseBasis};

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::OnceLock;
use thiserror::Error;

use crate::camera::rodrigues;

/// Joints in the skeleton.
pub const JOINT_COUNT: usize = 21;
/// Bones (segments ending at each non-root joint).
pub const BONE_COUNT: usize = 20;
/// Articulated joints (mcp, pip, dip of each finger).
pub const ARTICULATED_COUNT: usize = 15;
/// Pose vector length: one axis-angle triple per articulated joint.
pub const POSE_DIM: usize = 45;
/// Shape vector length.
pub const SHAPE_DIM: usize = 10;

/// Named joint ids. Order: wrist, then per finger (thumb, index, middle,
/// ring, pinky) mcp, pip, dip, tip.
pub mod joint_indices {
    pub const WRIST: usize = 0;
    pub const THUMB_MCP: usize = 1;
    pub const THUMB_PIP: usize = 2;
    pub const THUMB_DIP: usize = 3;
    pub const THUMB_TIP: usize = 4;
    pub const INDEX_MCP: usize = 5;
    pub const INDEX_PIP: usize = 6;
    pub const INDEX_DIP: usize = 7;
    pub const INDEX_TIP: usize = 8;
    pub const MIDDLE_MCP: usize = 9;
    pub const MIDDLE_PIP: usize = 10;
    pub const MIDDLE_DIP: usize = 11;
    pub const MIDDLE_TIP: usize = 12;
    pub const RING_MCP: usize = 13;
    pub const RING_PIP: usize = 14;
    pub const RING_DIP: usize = 15;
    pub const RING_TIP: usize = 16;
    pub const PINKY_MCP: usize = 17;
    pub const PINKY_PIP: usize = 18;
    pub const PINKY_DIP: usize = 19;
    pub const PINKY_TIP: usize = 20;
}

/// The 15 articulated joint ids in pose-vector order.
pub const ARTICULATED_JOINTS: [usize; ARTICULATED_COUNT] =
    [1, 2, 3, 5, 6, 7, 9, 10, 11, 13, 14, 15, 17, 18, 19];

/// Slot of joint `j` in the pose vector, or `None` for the wrist and tips.
pub fn articulated_slot(j: usize) -> Option<usize> {
    if j == 0 || j >= JOINT_COUNT || j.is_multiple_of(4) {
        return None;
    }
    Some((j - 1) / 4 * 3 + (j - 1) % 4)
}

/// 21 root-relative joint positions, millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSet(pub [Vector3<f64>; JOINT_COUNT]);

impl JointSet {
    pub fn zeros() -> Self {
        JointSet([Vector3::zeros(); JOINT_COUNT])
    }

    /// Flat [x0, y0, z0, x1, ...] view, 63 values in joint order.
    pub fn flatten(&self) -> [f64; 63] {
        let mut out = [0.0; 63];
        for (j, p) in self.0.iter().enumerate() {
            out[3 * j] = p.x;
            out[3 * j + 1] = p.y;
            out[3 * j + 2] = p.z;
        }
        out
    }

    pub fn from_flat(flat: &[f64; 63]) -> Self {
        let mut joints = [Vector3::zeros(); JOINT_COUNT];
        for (j, p) in joints.iter_mut().enumerate() {
            *p = Vector3::new(flat[3 * j], flat[3 * j + 1], flat[3 * j + 2]);
        }
        JointSet(joints)
    }

    /// Same joints translated so the wrist sits at the origin.
    pub fn root_centered(&self) -> Self {
        let root = self.0[0];
        let mut joints = self.0;
        for p in joints.iter_mut() {
            *p -= root;
        }
        JointSet(joints)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|p| p.x.is_finite() && p.y.is_finite() && p.z.is_finite())
    }

    /// Euclidean distance in the flattened 63-dimensional space.
    pub fn distance(&self, other: &JointSet) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

/// 45-dimensional articulation vector: axis-angle triples for the joints
/// in [`ARTICULATED_JOINTS`] order. The canonical representative keeps
/// every per-joint angle at or below pi; [`HandPose::canonicalized`]
/// maps any pose onto it without changing the rotations.
///
/// Serializes as a plain sequence of 45 numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandPose(pub [f64; POSE_DIM]);

impl Serialize for HandPose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter())
    }
}

impl<'de> Deserialize<'de> for HandPose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        let arr: [f64; POSE_DIM] = v
            .try_into()
            .map_err(|v: Vec<f64>| serde::de::Error::invalid_length(v.len(), &"45 numbers"))?;
        Ok(HandPose(arr))
    }
}

impl Default for HandPose {
    fn default() -> Self {
        HandPose([0.0; POSE_DIM])
    }
}

impl HandPose {
    /// Axis-angle vector of the articulated joint in slot `slot`.
    pub fn joint_rotation(&self, slot: usize) -> Vector3<f64> {
        Vector3::new(self.0[3 * slot], self.0[3 * slot + 1], self.0[3 * slot + 2])
    }

    pub fn set_joint_rotation(&mut self, slot: usize, aa: Vector3<f64>) {
        self.0[3 * slot] = aa.x;
        self.0[3 * slot + 1] = aa.y;
        self.0[3 * slot + 2] = aa.z;
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Equivalent pose with every per-joint angle wrapped into [0, pi].
    pub fn canonicalized(&self) -> HandPose {
        let mut out = *self;
        for slot in 0..ARTICULATED_COUNT {
            let aa = out.joint_rotation(slot);
            let angle = aa.norm();
            if angle > std::f64::consts::PI {
                let mut wrapped = angle % std::f64::consts::TAU;
                if wrapped > std::f64::consts::PI {
                    wrapped -= std::f64::consts::TAU;
                }
                // wrapped is in (-pi, pi]; negative values flip the axis.
                out.set_joint_rotation(slot, aa * (wrapped / angle));
            }
        }
        out
    }
}

/// 10 shape blend coefficients, each in [-2, 2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HandShape(pub [f64; SHAPE_DIM]);

impl Default for HandShape {
    fn default() -> Self {
        HandShape([0.0; SHAPE_DIM])
    }
}

impl HandShape {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, &v) in self.0.iter().enumerate() {
            if !v.is_finite() || !(-2.0..=2.0).contains(&v) {
                return Err(ModelError::ShapeOutOfRange { index: i, value: v });
            }
        }
        Ok(())
    }
}

/// Skeleton topology and rest geometry.
#[derive(Debug, Clone)]
pub struct KinematicTree {
    /// Parent joint id per joint; `None` only for the wrist.
    pub parent: [Option<usize>; JOINT_COUNT],
    /// Rest offset of each joint from its parent, mm (zero for the wrist).
    pub offsets: [Vector3<f64>; JOINT_COUNT],
    /// Joint names as given in the asset file.
    pub names: Vec<String>,
}

/// Rigid motion of one bone: rotation and translation acting on rest
/// coordinates.
pub type BoneTransform = (Matrix3<f64>, Vector3<f64>);

/// Result of a pose fit: recovered articulation plus the RMS joint
/// position error of re-running forward kinematics with it.
#[derive(Debug, Clone, Copy)]
pub struct PoseFit {
    pub theta: HandPose,
    pub residual_rms_mm: f64,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("shape coefficient {index} = {value} outside [-2, 2]")]
    ShapeOutOfRange { index: usize, value: f64 },
    #[error("target bone ending at joint {joint} has near-zero length")]
    ZeroLengthBone { joint: usize },
    #[error(transparent)]
    Asset(#[from] AssetError),
}

/// A loaded hand model: topology, shape blends and mesh parameters.
#[derive(Debug, Clone)]
pub struct HandModel {
    pub tree: KinematicTree,
    /// Blend coefficients, `blend[mode][bone]`; bone b ends at joint b+1.
    pub blend: Vec<[f64; BONE_COUNT]>,
    pub mesh_params: MeshParams,
    pub skin_params: SkinParams,
    pub version: u32,
}

static BUILTIN: OnceLock<HandModel> = OnceLock::new();

impl HandModel {
    /// The model shipped with the crate (`assets/hand_model_v1.txt`).
    pub fn builtin() -> &'static HandModel {
        BUILTIN.get_or_init(|| {
            asset::parse(include_str!("../../assets/hand_model_v1.txt"))
                .expect("embedded hand model asset must parse")
        })
    }

    pub fn from_asset_str(text: &str) -> Result<HandModel, ModelError> {
        Ok(asset::parse(text)?)
    }

    pub fn from_asset_path(path: &Path) -> Result<HandModel, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| AssetError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(asset::parse(&text)?)
    }

    /// Rest offsets after applying the shape blend: the offset of joint j
    /// scales by `1 + sum_k blend[k][j-1] * beta[k]`.
    pub fn shaped_offsets(&self, beta: &HandShape) -> [Vector3<f64>; JOINT_COUNT] {
        let mut out = self.tree.offsets;
        for (j, off) in out.iter_mut().enumerate().skip(1) {
            let bone = j - 1;
            let mut factor = 1.0;
            for (mode, coeffs) in self.blend.iter().enumerate() {
                factor += coeffs[bone] * beta.0[mode];
            }
            *off *= factor;
        }
        out
    }

    /// Rest-pose skeleton for a shape: forward kinematics at zero pose.
    pub fn shape_skeleton(&self, beta: &HandShape) -> Result<JointSet, ModelError> {
        self.joints_fk(&HandPose::default(), beta)
    }

    /// Root-relative joint positions for a pose and shape.
    pub fn joints_fk(&self, theta: &HandPose, beta: &HandShape) -> Result<JointSet, ModelError> {
        if !theta.is_finite() {
            return Err(ModelError::NonFinite { what: "pose vector" });
        }
        beta.validate()?;
        let (pos, _) = self.fk_frames(theta, beta);
        Ok(JointSet(pos))
    }

    /// Joint positions plus accumulated world rotations. Rotation at a
    /// joint orients the bones leaving it; the joint itself stays where
    /// its parent's frame puts it.
    pub(crate) fn fk_frames(
        &self,
        theta: &HandPose,
        beta: &HandShape,
    ) -> ([Vector3<f64>; JOINT_COUNT], [Matrix3<f64>; JOINT_COUNT]) {
        let offsets = self.shaped_offsets(beta);
        let mut pos = [Vector3::zeros(); JOINT_COUNT];
        let mut rot = [Matrix3::identity(); JOINT_COUNT];
        for j in 1..JOINT_COUNT {
            let p = self.tree.parent[j].expect("non-root joint has a parent");
            pos[j] = pos[p] + rot[p] * offsets[j];
            rot[j] = match articulated_slot(j) {
                Some(slot) => rot[p] * rodrigues(&theta.joint_rotation(slot)),
                None => rot[p],
            };
        }
        (pos, rot)
    }

    /// Rigid transform of each bone under a pose, as `(R, t)` pairs with
    /// `x_posed = R * x_rest + t`. Bone b is the segment ending at joint
    /// b+1 and moves with the accumulated frame of its parent joint.
    pub fn bone_transforms(
        &self,
        theta: &HandPose,
        beta: &HandShape,
    ) -> Result<Vec<BoneTransform>, ModelError> {
        if !theta.is_finite() {
            return Err(ModelError::NonFinite { what: "pose vector" });
        }
        beta.validate()?;
        let rest = self.shaped_rest_positions(beta);
        let (pos, rot) = self.fk_frames(theta, beta);
        let mut out = Vec::with_capacity(BONE_COUNT);
        for bone in 0..BONE_COUNT {
            let child = bone + 1;
            let p = self.tree.parent[child].expect("bone child has a parent");
            let r = rot[p];
            let t = pos[p] - r * rest[p];
            out.push((r, t));
        }
        Ok(out)
    }

    fn shaped_rest_positions(&self, beta: &HandShape) -> [Vector3<f64>; JOINT_COUNT] {
        let offsets = self.shaped_offsets(beta);
        let mut pos = [Vector3::zeros(); JOINT_COUNT];
        for j in 1..JOINT_COUNT {
            let p = self.tree.parent[j].expect("non-root joint has a parent");
            pos[j] = pos[p] + offsets[j];
        }
        pos
    }

    /// Recovers articulation from root-relative joint positions.
    ///
    /// Solves one joint at a time down each finger: the rotation at a
    /// joint is the minimal (twist-free) rotation aiming its outgoing
    /// bone at the target child position, measured from where forward
    /// kinematics has already placed the joint. Twist about a bone axis
    /// does not move any joint, so the minimal rotation is the canonical
    /// choice and the per-joint angles come out in [0, pi].
    ///
    /// Targets are interpreted root-relative (centered on their wrist
    /// sample). When the target's bone lengths match the shaped skeleton
    /// the fit is exact to rounding; otherwise the residual reports the
    /// remaining RMS joint error honestly. Targets with a near-zero bone
    /// are rejected.
    pub fn fit_pose_params(
        &self,
        target: &JointSet,
        beta: &HandShape,
    ) -> Result<PoseFit, ModelError> {
        if !target.is_finite() {
            return Err(ModelError::NonFinite { what: "target joints" });
        }
        beta.validate()?;
        let target = target.root_centered();
        for j in 1..JOINT_COUNT {
            let p = self.tree.parent[j].expect("non-root joint has a parent");
            if (target.0[j] - target.0[p]).norm() < 1e-9 {
                return Err(ModelError::ZeroLengthBone { joint: j });
            }
        }

        let offsets = self.shaped_offsets(beta);
        let mut theta = HandPose::default();
        let mut pos = [Vector3::zeros(); JOINT_COUNT];
        let mut rot = [Matrix3::identity(); JOINT_COUNT];
        for j in 1..JOINT_COUNT {
            let p = self.tree.parent[j].expect("non-root joint has a parent");
            pos[j] = pos[p] + rot[p] * offsets[j];
            rot[j] = match articulated_slot(j) {
                Some(slot) => {
                    // The outgoing bone of joint j ends at the next joint
                    // in the finger chain.
                    let child = j + 1;
                    let u = offsets[child].normalize();
                    let d = target.0[child] - pos[j];
                    let aa = if d.norm() < 1e-9 {
                        // Degenerate aim (already on top of the target);
                        // leave the joint unbent.
                        Vector3::zeros()
                    } else {
                        // The frame entering joint j is its parent's
                        // accumulated rotation.
                        swing_axis_angle(&u, &(rot[p].transpose() * d.normalize()))
                    };
                    theta.set_joint_rotation(slot, aa);
                    rot[p] * rodrigues(&aa)
                }
                None => rot[p],
            };
        }

        let fk = self.joints_fk(&theta, beta)?;
        let sq_sum: f64 = fk
            .0
            .iter()
            .zip(&target.0)
            .map(|(a, b)| (a - b).norm_squared())
            .sum();
        Ok(PoseFit {
            theta,
            residual_rms_mm: (sq_sum / JOINT_COUNT as f64).sqrt(),
        })
    }

    /// Draws a random twist-free pose: each articulated joint bends by a
    /// uniform angle in [0, max_angle] about a random axis perpendicular
    /// to its outgoing bone. Poses built this way round-trip exactly
    /// through [`Self::fit_pose_params`].
    pub fn sample_swing_pose<R: Rng + ?Sized>(&self, rng: &mut R, max_angle: f64) -> HandPose {
        let mut theta = HandPose::default();
        for (slot, &j) in ARTICULATED_JOINTS.iter().enumerate() {
            let u = self.tree.offsets[j + 1].normalize();
            let axis = perpendicular_unit(&u, rng);
            let angle = rng.gen_range(0.0..max_angle);
            theta.set_joint_rotation(slot, axis * angle);
        }
        theta
    }

    /// Largest rest-pose joint distance from the wrist at neutral shape;
    /// a radius bound used to scale cameras so the hand fits a frame.
    pub fn hand_radius_mm(&self) -> f64 {
        let rest = self.shaped_rest_positions(&HandShape::default());
        rest.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

/// Axis-angle of the minimal rotation taking unit vector `u` to unit
/// vector `v`. For antipodal inputs the axis is an arbitrary but
/// deterministic perpendicular of `u` and the angle is pi.
pub fn swing_axis_angle(u: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
    let cross = u.cross(v);
    let s = cross.norm();
    let c = u.dot(v);
    if s < 1e-12 {
        if c >= 0.0 {
            return Vector3::zeros();
        }
        // 180 degrees: any axis perpendicular to u works; pick one from
        // the coordinate axis u leans on least.
        let e = if u.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        return u.cross(&e).normalize() * std::f64::consts::PI;
    }
    (cross / s) * s.atan2(c)
}

fn perpendicular_unit<R: Rng + ?Sized>(u: &Vector3<f64>, rng: &mut R) -> Vector3<f64> {
    loop {
        let raw = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let perp = u.cross(&raw);
        if perp.norm() > 1e-6 {
            return perp.normalize();
        }
    }
}
