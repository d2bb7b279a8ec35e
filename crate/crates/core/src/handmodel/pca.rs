//! Principal-component basis over pose vectors.
//!
//! Fits an orthonormal linear basis to a set of 45-dimensional poses so
//! downstream regressors can predict a handful of coefficients instead
//! of raw joint rotations. Components are eigenvectors of the sample
//! covariance, ordered by non-increasing explained variance, with a
//! deterministic sign convention (the entry of largest magnitude in each
//! component is positive).

use nalgebra::DMatrix;
use thiserror::Error;

use super::{HandPose, POSE_DIM};

#[derive(Debug, Error)]
pub enum PcaError {
    #[error("pca needs at least {need} poses, got {got}")]
    TooFewPoses { got: usize, need: usize },
    #[error("component count {k} outside 1..={max}")]
    BadComponentCount { k: usize, max: usize },
    #[error("pose set has (near) zero variance; no basis to extract")]
    DegenerateCovariance,
    #[error("non-finite value in pose {index}")]
    NonFinite { index: usize },
}

/// Orthonormal pose basis with `k` components.
#[derive(Debug, Clone)]
pub struct PoseBasis {
    /// Mean pose of the fitted set.
    pub mean: [f64; POSE_DIM],
    /// `k` orthonormal components, highest variance first.
    pub components: Vec<[f64; POSE_DIM]>,
    /// Sample variance captured by each component, same order.
    pub explained_variance: Vec<f64>,
    /// Trace of the sample covariance (total variance).
    pub total_variance: f64,
}

/// Fits a `k`-component basis to poses. Needs at least `max(k, 2)`
/// samples and a non-degenerate covariance.
pub fn pose_pca_fit(poses: &[HandPose], k: usize) -> Result<PoseBasis, PcaError> {
    if k == 0 || k > POSE_DIM {
        return Err(PcaError::BadComponentCount { k, max: POSE_DIM });
    }
    let need = k.max(2);
    if poses.len() < need {
        return Err(PcaError::TooFewPoses {
            got: poses.len(),
            need,
        });
    }
    for (i, p) in poses.iter().enumerate() {
        if !p.is_finite() {
            return Err(PcaError::NonFinite { index: i });
        }
    }

    let n = poses.len();
    let mut mean = [0.0; POSE_DIM];
    for p in poses {
        for (m, v) in mean.iter_mut().zip(&p.0) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    let centered = DMatrix::from_fn(n, POSE_DIM, |r, c| poses[r].0[c] - mean[c]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let total_variance = cov.trace();
    if total_variance <= 1e-12 {
        return Err(PcaError::DegenerateCovariance);
    }

    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..POSE_DIM).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let col = eig.eigenvectors.column(idx);
        let mut comp = [0.0; POSE_DIM];
        for (c, v) in comp.iter_mut().zip(col.iter()) {
            *c = *v;
        }
        // Deterministic sign: the largest-magnitude entry points up.
        let lead = comp
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        if comp[lead] < 0.0 {
            for c in comp.iter_mut() {
                *c = -*c;
            }
        }
        components.push(comp);
        // Covariance eigenvalues can round slightly negative at the
        // noise floor; they are variances, so clamp.
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }

    Ok(PoseBasis {
        mean,
        components,
        explained_variance,
        total_variance,
    })
}

impl PoseBasis {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Coefficients of a pose in the basis: `C (pose - mean)`.
    pub fn project(&self, pose: &HandPose) -> Vec<f64> {
        self.components
            .iter()
            .map(|comp| {
                comp.iter()
                    .zip(&pose.0)
                    .zip(&self.mean)
                    .map(|((c, v), m)| c * (v - m))
                    .sum()
            })
            .collect()
    }

    /// Pose for a coefficient vector: `mean + C^T coeffs`. Coefficient
    /// counts other than `k` are a caller bug.
    pub fn reconstruct(&self, coeffs: &[f64]) -> HandPose {
        assert_eq!(
            coeffs.len(),
            self.components.len(),
            "coefficient count must match basis size"
        );
        let mut out = self.mean;
        for (comp, &a) in self.components.iter().zip(coeffs) {
            for (o, c) in out.iter_mut().zip(comp) {
                *o += a * c;
            }
        }
        HandPose(out)
    }

    /// Gram matrix residual of the components; 0 for a perfectly
    /// orthonormal basis.
    pub fn orthonormality_residual(&self) -> f64 {
        let k = self.components.len();
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                let dot: f64 = self.components[i]
                    .iter()
                    .zip(&self.components[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}
