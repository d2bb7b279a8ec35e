//! Articulation fitting over a joint-sequence file.
//!
//! Every input frame gets a pose vector fitted under one shape, written
//! as `frame_id residual_mm` followed by the 45 pose coordinates, one
//! frame per line. Residuals are RMS joint position error after
//! re-running forward kinematics with the fitted pose.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use thiserror::Error;

use handflow_core::handmodel::{HandModel, HandShape, ModelError};
use handflow_core::metrics::{load_joint_sequence, MetricError};

use crate::{Categorized, ErrorCategory};

#[derive(Debug, Clone)]
pub struct IkOptions {
    pub input: PathBuf,
    /// Fitted parameters file; omitted means fit and report only.
    pub output: Option<PathBuf>,
    /// Shape to fit under, constant for the whole file.
    pub beta: HandShape,
}

#[derive(Debug, Clone)]
pub struct IkReport {
    pub frames: usize,
    pub mean_residual_mm: f64,
    pub max_residual_mm: f64,
}

#[derive(Debug, Error)]
pub enum IkError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("frame {frame_id}: {source}")]
    Fit {
        frame_id: u64,
        #[source]
        source: ModelError,
    },
    #[error("invalid shape: {source}")]
    Shape {
        #[source]
        source: ModelError,
    },
    #[error("writing {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Categorized for IkError {
    fn category(&self) -> ErrorCategory {
        match self {
            IkError::Metric(MetricError::Io { .. }) => ErrorCategory::Io,
            IkError::Metric(_) | IkError::Fit { .. } => ErrorCategory::Data,
            IkError::Shape { .. } => ErrorCategory::Config,
            IkError::Write { .. } => ErrorCategory::Io,
        }
    }
}

pub fn run(opts: &IkOptions) -> Result<IkReport, IkError> {
    opts.beta
        .validate()
        .map_err(|source| IkError::Shape { source })?;
    let frames = load_joint_sequence(&opts.input)?;
    let model = HandModel::builtin();

    let mut fits = Vec::with_capacity(frames.len());
    for (frame_id, joints) in &frames {
        let fit = model
            .fit_pose_params(joints, &opts.beta)
            .map_err(|source| IkError::Fit {
                frame_id: *frame_id,
                source,
            })?;
        fits.push((*frame_id, fit));
    }

    if let Some(path) = &opts.output {
        let write_err = |source| IkError::Write {
            path: path.display().to_string(),
            source,
        };
        let file = fs::File::create(path).map_err(write_err)?;
        let mut out = BufWriter::new(file);
        for (frame_id, fit) in &fits {
            write!(out, "{frame_id} {}", fit.residual_rms_mm).map_err(write_err)?;
            for v in fit.theta.0.iter() {
                write!(out, " {v}").map_err(write_err)?;
            }
            writeln!(out).map_err(write_err)?;
        }
        out.flush().map_err(write_err)?;
    }

    let mut mean = 0.0;
    let mut max = 0.0f64;
    for (_, fit) in &fits {
        mean += fit.residual_rms_mm;
        max = max.max(fit.residual_rms_mm);
    }
    mean /= fits.len() as f64;

    Ok(IkReport {
        frames: fits.len(),
        mean_residual_mm: mean,
        max_residual_mm: max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fk_generated_frames_fit_back_with_tiny_residuals() {
        let tmp = tempfile::tempdir().unwrap();
        let model = HandModel::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let beta = HandShape([0.5, -1.0, 0.0, 2.0, -2.0, 0.3, 0.0, 1.0, -0.7, 0.2]);

        let input = tmp.path().join("joints.txt");
        let mut file = fs::File::create(&input).unwrap();
        let mut thetas = Vec::new();
        for i in 0..8 {
            let theta = model.sample_swing_pose(&mut rng, 1.3);
            let joints = model.joints_fk(&theta, &beta).unwrap();
            let coords: Vec<String> = joints.flatten().iter().map(|v| v.to_string()).collect();
            writeln!(file, "{i} {}", coords.join(" ")).unwrap();
            thetas.push(theta);
        }
        drop(file);

        let output = tmp.path().join("params.txt");
        let report = run(&IkOptions {
            input,
            output: Some(output.clone()),
            beta,
        })
        .unwrap();
        assert_eq!(report.frames, 8);
        assert!(report.max_residual_mm < 1e-6, "{}", report.max_residual_mm);

        // The written parameters reproduce the sampled articulation.
        let text = fs::read_to_string(output).unwrap();
        for (line, theta) in text.lines().zip(&thetas) {
            let fields: Vec<f64> = line
                .split_whitespace()
                .skip(2)
                .map(|f| f.parse().unwrap())
                .collect();
            assert_eq!(fields.len(), 45);
            for (got, want) in fields.iter().zip(theta.0.iter()) {
                assert!((got - want).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn wrong_shape_raises_residuals_but_still_fits() {
        let tmp = tempfile::tempdir().unwrap();
        let model = HandModel::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let true_beta = HandShape([2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        let input = tmp.path().join("joints.txt");
        let mut file = fs::File::create(&input).unwrap();
        for i in 0..5 {
            let theta = model.sample_swing_pose(&mut rng, 1.0);
            let joints = model.joints_fk(&theta, &true_beta).unwrap();
            let coords: Vec<String> = joints.flatten().iter().map(|v| v.to_string()).collect();
            writeln!(file, "{i} {}", coords.join(" ")).unwrap();
        }
        drop(file);

        // Fitting under the default shape cannot cancel a 20% size
        // difference, so residuals are clearly nonzero.
        let report = run(&IkOptions {
            input,
            output: None,
            beta: HandShape::default(),
        })
        .unwrap();
        assert!(report.mean_residual_mm > 1.0, "{}", report.mean_residual_mm);
    }

    #[test]
    fn out_of_range_shape_is_a_config_error() {
        let err = run(&IkOptions {
            input: PathBuf::from("/nonexistent"),
            output: None,
            beta: HandShape([3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        })
        .unwrap_err();
        assert_eq!(err.category(), ErrorCategory::Config);
    }
}
