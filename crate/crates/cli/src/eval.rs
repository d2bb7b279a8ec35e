//! Scoring predicted 3D joints against ground truth.
//!
//! Predictions always come from a whitespace joint-sequence file (frame
//! id plus 63 coordinates per line). Truth comes either from the same
//! format or, when the path ends in `.json`, from a sequence annotation
//! whose frame ids are the frame positions. Frames are matched by id,
//! so file order never matters, but the two id sets must be equal.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use handflow_core::handmodel::JointSet;
use handflow_core::metrics::{
    auc, load_joint_sequence, mean_error_3d, pck3d_curve, MetricError,
};

use crate::formats::{read_annotation, FormatError};
use crate::{Categorized, ErrorCategory};

pub const DEFAULT_T_MIN_MM: f64 = 20.0;
pub const DEFAULT_T_MAX_MM: f64 = 50.0;
pub const DEFAULT_T_STEP_MM: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub pred: PathBuf,
    pub truth: PathBuf,
    pub t_min: f64,
    pub t_max: f64,
    pub t_step: f64,
    /// Optional per-threshold CSV dump.
    pub csv: Option<PathBuf>,
}

impl EvalOptions {
    pub fn new(pred: PathBuf, truth: PathBuf) -> Self {
        EvalOptions {
            pred,
            truth,
            t_min: DEFAULT_T_MIN_MM,
            t_max: DEFAULT_T_MAX_MM,
            t_step: DEFAULT_T_STEP_MM,
            csv: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub frames: usize,
    pub mean_error_mm: f64,
    pub auc: f64,
    pub thresholds_mm: Vec<f64>,
    pub fractions: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("threshold grid {min}..{max} step {step} is invalid: {reason}")]
    BadGrid {
        min: f64,
        max: f64,
        step: f64,
        reason: &'static str,
    },
    #[error("frame ids differ between prediction and truth: {detail}")]
    IdMismatch { detail: String },
    #[error("duplicate frame id {id} in {path}")]
    DuplicateId { id: u64, path: String },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("writing {path}: {source}")]
    CsvWrite {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Categorized for EvalError {
    fn category(&self) -> ErrorCategory {
        match self {
            EvalError::BadGrid { .. } => ErrorCategory::Config,
            EvalError::IdMismatch { .. } | EvalError::DuplicateId { .. } => ErrorCategory::Data,
            EvalError::Metric(MetricError::Io { .. }) => ErrorCategory::Io,
            EvalError::Metric(_) => ErrorCategory::Data,
            EvalError::Format(e) => e.category(),
            EvalError::CsvWrite { .. } => ErrorCategory::Io,
        }
    }
}

/// Evenly spaced ascending grid from `min` to `max` inclusive. The
/// step must tile the interval exactly (within a small slack) so the
/// advertised end threshold really is evaluated.
pub fn threshold_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>, EvalError> {
    let bad = |reason: &'static str| EvalError::BadGrid {
        min,
        max,
        step,
        reason,
    };
    if !(min.is_finite() && max.is_finite() && step.is_finite()) {
        return Err(bad("values must be finite"));
    }
    if min <= 0.0 || step <= 0.0 || max <= min {
        return Err(bad("need 0 < min < max and step > 0"));
    }
    let count = ((max - min) / step).round() as usize;
    if count == 0 || (min + count as f64 * step - max).abs() > 1e-9 {
        return Err(bad("step does not tile the interval"));
    }
    Ok((0..=count).map(|k| min + k as f64 * step).collect())
}

fn load_truth(path: &Path) -> Result<Vec<(u64, JointSet)>, EvalError> {
    if path.extension().is_some_and(|e| e == "json") {
        // Annotation files live inside a sequence directory.
        let seq_dir = path.parent().unwrap_or(Path::new("."));
        let annot = read_annotation(seq_dir)?;
        Ok(annot
            .flow
            .frames
            .iter()
            .enumerate()
            .map(|(k, f)| (k as u64, f.joints3d))
            .collect())
    } else {
        Ok(load_joint_sequence(path)?)
    }
}

/// Sorts by frame id, rejecting duplicates; both sides must then carry
/// the same ids.
fn align(
    pred: Vec<(u64, JointSet)>,
    truth: Vec<(u64, JointSet)>,
    pred_path: &Path,
    truth_path: &Path,
) -> Result<(Vec<JointSet>, Vec<JointSet>), EvalError> {
    let sort = |mut v: Vec<(u64, JointSet)>, path: &Path| {
        v.sort_by_key(|(id, _)| *id);
        for pair in v.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(EvalError::DuplicateId {
                    id: pair[0].0,
                    path: path.display().to_string(),
                });
            }
        }
        Ok(v)
    };
    let pred = sort(pred, pred_path)?;
    let truth = sort(truth, truth_path)?;
    if pred.len() != truth.len() {
        return Err(EvalError::IdMismatch {
            detail: format!("{} predicted frames vs {} truth frames", pred.len(), truth.len()),
        });
    }
    for ((pid, _), (tid, _)) in pred.iter().zip(&truth) {
        if pid != tid {
            return Err(EvalError::IdMismatch {
                detail: format!("prediction has frame {pid}, truth has frame {tid}"),
            });
        }
    }
    Ok((
        pred.into_iter().map(|(_, j)| j).collect(),
        truth.into_iter().map(|(_, j)| j).collect(),
    ))
}

pub fn run(opts: &EvalOptions) -> Result<EvalReport, EvalError> {
    let grid = threshold_grid(opts.t_min, opts.t_max, opts.t_step)?;
    let pred = load_joint_sequence(&opts.pred)?;
    let truth = load_truth(&opts.truth)?;
    let (pred, truth) = align(pred, truth, &opts.pred, &opts.truth)?;

    let fractions = pck3d_curve(&pred, &truth, &grid)?;
    let area = auc(&grid, &fractions)?;
    let mean = mean_error_3d(&pred, &truth)?;

    if let Some(csv_path) = &opts.csv {
        let mut text = String::from("threshold_mm,fraction\n");
        for (t, f) in grid.iter().zip(&fractions) {
            text.push_str(&format!("{t},{f}\n"));
        }
        fs::write(csv_path, text).map_err(|source| EvalError::CsvWrite {
            path: csv_path.display().to_string(),
            source,
        })?;
    }

    Ok(EvalReport {
        frames: pred.len(),
        mean_error_mm: mean,
        auc: area,
        thresholds_mm: grid,
        fractions,
    })
}
