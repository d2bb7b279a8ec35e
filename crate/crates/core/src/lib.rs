//! Synthetic sequential hand-pose datasets, end to end.
//!
//! This crate generates short, annotated image sequences ("flows") of a
//! parametric 3D hand. Each flow interpolates between two real poses drawn
//! from a pose database, snapping every intermediate step back onto the
//! database so all frames stay anatomically plausible, then renders the
//! posed hand mesh over a moving background crop. Alongside generation it
//! ships the numerical kernels a sequence-regression trainer needs:
//! differentiable-by-hand losses over joints, vertices, masks, temporal
//! smoothness and camera parameters, plus 3D-PCK / AUC evaluation metrics.
//!
//! Conventions used throughout:
//!
//! * lengths are millimeters, image coordinates are pixels;
//! * 3D joint sets are root-relative (wrist at the origin) and the global
//!   rotation lives exclusively in [`camera::CameraParams`];
//! * image origin is the top-left corner, x grows right, y grows down;
//! * losses and errors reduce by the mean over coordinates, so values are
//!   independent of joint/vertex counts and image resolution.

pub mod camera;
pub mod handmodel;
pub mod metrics;
pub mod objectives;
pub mod posedb;
pub mod poseflow;
pub mod render;

pub use camera::CameraParams;
pub use handmodel::{HandModel, HandPose, HandShape, JointSet};
pub use posedb::PoseDb;
pub use poseflow::{FlowConfig, FlowFrame, PoseFlowSeq};
