//! Consistency audit of a generated run directory.
//!
//! Re-derives every cheap invariant a run promises: the manifest lists
//! directories that exist, annotations agree with the manifest, frame
//! and mask images are present with the configured dimensions, shapes
//! hold constant per sequence, and stored 2D joints reproduce from the
//! stored 3D joints and camera. Each named check aggregates over the
//! whole run and reports the first few offending locations.

use std::path::{Path, PathBuf};

use thiserror::Error;

use handflow_core::camera::project_weak;
use handflow_core::render::COLOR_TEMPLATE_COUNT;

use crate::formats::{
    frame_file_name, manifest_path, mask_file_name, read_annotation, read_manifest, FormatError,
    Manifest,
};
use crate::{Categorized, ErrorCategory};

/// Stored 2D joints must reproduce from 3D joints and camera to within
/// this many pixels.
pub const JOINTS2D_TOL_PX: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct InspectOptions {
    pub run_dir: PathBuf,
    /// Audit only the first N sequences; `None` audits the whole run.
    pub max_sequences: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct InspectReport {
    pub manifest: Manifest,
    pub sequences_checked: usize,
    pub frames_checked: usize,
    /// Largest observed gap between stored and re-derived 2D joints.
    pub max_joints2d_residual_px: f64,
    pub distinct_color_templates: usize,
    pub checks: Vec<CheckResult>,
}

impl InspectReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug, Error)]
pub enum InspectError {
    #[error(transparent)]
    Format(#[from] FormatError),
}

impl Categorized for InspectError {
    fn category(&self) -> ErrorCategory {
        match self {
            InspectError::Format(e) => e.category(),
        }
    }
}

/// One named check accumulating failures across the run.
struct Check {
    name: &'static str,
    failures: Vec<String>,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Check {
            name,
            failures: Vec::new(),
        }
    }

    fn require(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(detail());
        }
    }

    fn finish(self, ok_detail: String) -> CheckResult {
        const SHOWN: usize = 3;
        let pass = self.failures.is_empty();
        let detail = if pass {
            ok_detail
        } else {
            let mut d = self.failures[..self.failures.len().min(SHOWN)].join("; ");
            if self.failures.len() > SHOWN {
                d.push_str(&format!(" (+{} more)", self.failures.len() - SHOWN));
            }
            d
        };
        CheckResult {
            name: self.name,
            pass,
            detail,
        }
    }
}

fn mask_is_binary(img: &image::GrayImage) -> bool {
    img.pixels().all(|p| p.0[0] == 0 || p.0[0] == 255)
}

pub fn run(opts: &InspectOptions) -> Result<InspectReport, InspectError> {
    let manifest = read_manifest(&opts.run_dir)?;
    let limit = opts
        .max_sequences
        .unwrap_or(manifest.sequences.len())
        .min(manifest.sequences.len());

    let mut dirs = Check::new("manifest_dirs");
    let mut readable = Check::new("annotations_readable");
    let mut consistency = Check::new("annotation_matches_manifest");
    let mut frame_files = Check::new("frame_files_complete");
    let mut shape = Check::new("shape_constant_and_bounded");
    let mut projection = Check::new("joints2d_reproject");
    let mut bg_bounds = Check::new("background_crop_in_bounds");
    let mut images = Check::new("image_dimensions_and_masks");
    let mut palettes = Check::new("color_template_ids");
    let mut residuals = Check::new("residuals_finite");

    let mut frames_checked = 0usize;
    let mut max_residual_px = 0.0f64;
    let mut seen_templates = std::collections::BTreeSet::new();

    for entry in manifest.sequences.iter().take(limit) {
        let seq_dir = opts.run_dir.join(&entry.dir);
        if !seq_dir.is_dir() {
            dirs.require(false, || format!("{} missing", entry.dir));
            continue;
        }
        let annot = match read_annotation(&seq_dir) {
            Ok(a) => a,
            Err(e) => {
                readable.require(false, || format!("{}: {e}", entry.dir));
                continue;
            }
        };
        let flow = &annot.flow;
        let cfg = &flow.config;

        consistency.require(*cfg == manifest.config, || {
            format!("{}: annotation config differs from manifest", entry.dir)
        });
        consistency.require(flow.db_fingerprint == manifest.db_fingerprint, || {
            format!("{}: database fingerprint differs from manifest", entry.dir)
        });

        frame_files.require(flow.frames.len() == cfg.n_frames, || {
            format!(
                "{}: {} frames annotated, config says {}",
                entry.dir,
                flow.frames.len(),
                cfg.n_frames
            )
        });

        palettes.require(flow.color_template_id < COLOR_TEMPLATE_COUNT, || {
            format!(
                "{}: color template {} out of range",
                entry.dir, flow.color_template_id
            )
        });
        palettes.require(flow.color_template_id == entry.color_template_id, || {
            format!("{}: color template differs from manifest", entry.dir)
        });
        seen_templates.insert(flow.color_template_id);

        let beta0 = flow.frames.first().map(|f| f.beta);
        if let Some(beta0) = beta0 {
            shape.require(beta0 == entry.beta, || {
                format!("{}: shape differs from manifest", entry.dir)
            });
            shape.require(beta0.validate().is_ok(), || {
                format!("{}: shape outside [-2, 2]", entry.dir)
            });
        }

        for (k, frame) in flow.frames.iter().enumerate() {
            frames_checked += 1;
            let loc = || format!("{}/frame {k}", entry.dir);

            if let Some(beta0) = beta0 {
                shape.require(frame.beta == beta0, || {
                    format!("{}: shape drifts within the sequence", loc())
                });
            }

            let reproj = project_weak(&frame.joints3d.0, &frame.cam);
            let mut worst = 0.0f64;
            for (got, want) in frame.joints2d.iter().zip(&reproj) {
                worst = worst.max((got - want).norm());
            }
            max_residual_px = max_residual_px.max(worst);
            projection.require(worst <= JOINTS2D_TOL_PX, || {
                format!("{}: 2D joints off by {worst:.3e} px", loc())
            });

            bg_bounds.require(
                frame.bg_offset[0] + cfg.width <= flow.background_size[0]
                    && frame.bg_offset[1] + cfg.height <= flow.background_size[1],
                || format!("{}: background crop outside the source", loc()),
            );

            residuals.require(
                frame.ik_residual_mm.is_finite() && frame.snap_distance_mm.is_finite(),
                || format!("{}: non-finite residuals", loc()),
            );

            let frame_path = seq_dir.join(frame_file_name(k));
            match image::open(&frame_path) {
                Ok(img) => images.require(
                    img.width() == cfg.width && img.height() == cfg.height,
                    || {
                        format!(
                            "{}: frame is {}x{}, config says {}x{}",
                            loc(),
                            img.width(),
                            img.height(),
                            cfg.width,
                            cfg.height
                        )
                    },
                ),
                Err(_) => frame_files.require(false, || format!("{}: frame image missing", loc())),
            }
            let mask_path = seq_dir.join(mask_file_name(k));
            match image::open(&mask_path) {
                Ok(img) => {
                    images.require(
                        img.width() == cfg.width && img.height() == cfg.height,
                        || format!("{}: mask dimensions differ from config", loc()),
                    );
                    images.require(mask_is_binary(&img.into_luma8()), || {
                        format!("{}: mask has values other than 0 and 255", loc())
                    });
                }
                Err(_) => frame_files.require(false, || format!("{}: mask image missing", loc())),
            }
        }
    }

    let summary = format!("{limit} sequences, {frames_checked} frames");
    let checks = vec![
        dirs.finish(summary.clone()),
        readable.finish(summary.clone()),
        consistency.finish(summary.clone()),
        frame_files.finish(summary.clone()),
        shape.finish(summary.clone()),
        projection.finish(format!("max residual {max_residual_px:.3e} px")),
        bg_bounds.finish(summary.clone()),
        images.finish(summary.clone()),
        palettes.finish(format!("{} distinct templates", seen_templates.len())),
        residuals.finish(summary),
    ];

    Ok(InspectReport {
        manifest,
        sequences_checked: limit,
        frames_checked,
        max_joints2d_residual_px: max_residual_px,
        distinct_color_templates: seen_templates.len(),
        checks,
    })
}

/// Convenience for tests and callers that only need a yes or no.
pub fn manifest_exists(run_dir: &Path) -> bool {
    manifest_path(run_dir).is_file()
}
