//! Evaluation metrics for 2D and 3D joint predictions.
//!
//! The headline numbers are the fraction of joints within a distance
//! threshold (over every joint of every frame), the area under that
//! fraction's curve across an ascending threshold grid (trapezoidal,
//! normalized by the grid span so a perfect curve scores exactly 1),
//! and plain mean joint distances. Thresholds are millimeters in 3D
//! and pixels in 2D; the within-threshold test is a closed inequality,
//! so an error exactly on the threshold counts as correct.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::Vector2;
use thiserror::Error;

use crate::handmodel::{JointSet, JOINT_COUNT};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("frame counts differ: {pred} predictions, {truth} truths")]
    FrameCountMismatch { pred: usize, truth: usize },
    #[error("no joints to score")]
    Empty,
    #[error("threshold {value} must be positive and finite")]
    BadThreshold { value: f64 },
    #[error("threshold {value} at position {index} breaks strict ascending order")]
    UnorderedThresholds { index: usize, value: f64 },
    #[error("need at least two thresholds for a curve, got {got}")]
    TooFewThresholds { got: usize },
    #[error("curve lengths differ: {thresholds} thresholds, {fractions} fractions")]
    CurveLengthMismatch { thresholds: usize, fractions: usize },
    #[error("fraction {value} at position {index} outside [0, 1]")]
    BadFraction { index: usize, value: f64 },
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn check_lengths<T, U>(pred: &[T], truth: &[U]) -> Result<(), MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::FrameCountMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

fn check_threshold(value: f64) -> Result<(), MetricError> {
    if !value.is_finite() || value <= 0.0 {
        return Err(MetricError::BadThreshold { value });
    }
    Ok(())
}

fn check_ascending(thresholds: &[f64]) -> Result<(), MetricError> {
    if thresholds.len() < 2 {
        return Err(MetricError::TooFewThresholds {
            got: thresholds.len(),
        });
    }
    for (i, &t) in thresholds.iter().enumerate() {
        check_threshold(t)?;
        if i > 0 && t <= thresholds[i - 1] {
            return Err(MetricError::UnorderedThresholds { index: i, value: t });
        }
    }
    Ok(())
}

// ===== correct-joint fractions =====

/// Fraction of 3D joints within `threshold_mm` of the truth, pooled
/// over all joints of all frames.
pub fn pck3d(
    pred: &[JointSet],
    truth: &[JointSet],
    threshold_mm: f64,
) -> Result<f64, MetricError> {
    check_lengths(pred, truth)?;
    check_threshold(threshold_mm)?;
    let mut hits = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        for (pj, tj) in p.0.iter().zip(&t.0) {
            if (pj - tj).norm() <= threshold_mm {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / (pred.len() * JOINT_COUNT) as f64)
}

/// Fraction of 2D joints within `threshold_px` of the truth.
pub fn pck2d(
    pred: &[[Vector2<f64>; JOINT_COUNT]],
    truth: &[[Vector2<f64>; JOINT_COUNT]],
    threshold_px: f64,
) -> Result<f64, MetricError> {
    check_lengths(pred, truth)?;
    check_threshold(threshold_px)?;
    let mut hits = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        for (pj, tj) in p.iter().zip(t) {
            if (pj - tj).norm() <= threshold_px {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / (pred.len() * JOINT_COUNT) as f64)
}

/// Correct-joint fraction at each threshold of a strictly ascending
/// grid.
pub fn pck3d_curve(
    pred: &[JointSet],
    truth: &[JointSet],
    thresholds: &[f64],
) -> Result<Vec<f64>, MetricError> {
    check_ascending(thresholds)?;
    thresholds
        .iter()
        .map(|&t| pck3d(pred, truth, t))
        .collect()
}

/// The standard evaluation grid: 20 mm to 50 mm in 1 mm steps.
pub fn default_thresholds_mm() -> Vec<f64> {
    (20..=50).map(|t| t as f64).collect()
}

// ===== curve summary =====

/// Area under a fraction-vs-threshold curve by the trapezoid rule,
/// normalized by the threshold span. Every fraction at 1 gives exactly
/// 1 because the trapezoid sum then telescopes to the same interval
/// sum as the normalizer.
pub fn auc(thresholds: &[f64], fractions: &[f64]) -> Result<f64, MetricError> {
    check_ascending(thresholds)?;
    if thresholds.len() != fractions.len() {
        return Err(MetricError::CurveLengthMismatch {
            thresholds: thresholds.len(),
            fractions: fractions.len(),
        });
    }
    for (i, &f) in fractions.iter().enumerate() {
        if !f.is_finite() || !(0.0..=1.0).contains(&f) {
            return Err(MetricError::BadFraction { index: i, value: f });
        }
    }
    let mut area = 0.0;
    let mut span = 0.0;
    for i in 0..thresholds.len() - 1 {
        let dt = thresholds[i + 1] - thresholds[i];
        area += 0.5 * (fractions[i] + fractions[i + 1]) * dt;
        span += dt;
    }
    Ok(area / span)
}

// ===== mean distances =====

/// Mean Euclidean 3D joint distance in mm over all joints of all
/// frames.
pub fn mean_error_3d(pred: &[JointSet], truth: &[JointSet]) -> Result<f64, MetricError> {
    check_lengths(pred, truth)?;
    let mut acc = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        for (pj, tj) in p.0.iter().zip(&t.0) {
            acc += (pj - tj).norm();
        }
    }
    Ok(acc / (pred.len() * JOINT_COUNT) as f64)
}

/// Mean Euclidean 2D joint distance in pixels.
pub fn mean_error_2d(
    pred: &[[Vector2<f64>; JOINT_COUNT]],
    truth: &[[Vector2<f64>; JOINT_COUNT]],
) -> Result<f64, MetricError> {
    check_lengths(pred, truth)?;
    let mut acc = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        for (pj, tj) in p.iter().zip(t) {
            acc += (pj - tj).norm();
        }
    }
    Ok(acc / (pred.len() * JOINT_COUNT) as f64)
}

// ===== prediction files =====

/// Loads a whitespace-separated joint sequence: one frame per line, a
/// frame id followed by 63 coordinates (x y z per joint, mm). Unlike a
/// pose database the coordinates are taken as stored, without
/// recentering, and blank lines and `#` comments are skipped.
pub fn load_joint_sequence(path: &Path) -> Result<Vec<(u64, JointSet)>, MetricError> {
    let display = path.display().to_string();
    let file = fs::File::open(path).map_err(|source| MetricError::Io {
        path: display.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| MetricError::Io {
            path: display.clone(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse = |msg: String| MetricError::Parse {
            path: display.clone(),
            line: line_no,
            msg,
        };
        let mut fields = trimmed.split_whitespace();
        let id: u64 = fields
            .next()
            .ok_or_else(|| parse("missing frame id".into()))?
            .parse()
            .map_err(|e| parse(format!("frame id: {e}")))?;
        let mut flat = [0.0f64; JOINT_COUNT * 3];
        for (k, slot) in flat.iter_mut().enumerate() {
            let field = fields
                .next()
                .ok_or_else(|| parse(format!("expected 63 coordinates, found {k}")))?;
            *slot = field
                .parse()
                .map_err(|e| parse(format!("coordinate {k}: {e}")))?;
            if !slot.is_finite() {
                return Err(parse(format!("coordinate {k} is not finite")));
            }
        }
        if let Some(extra) = fields.next() {
            return Err(parse(format!("unexpected trailing field {extra:?}")));
        }
        out.push((id, JointSet::from_flat(&flat)));
    }
    if out.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::io::Write as _;

    fn random_joints3d(rng: &mut ChaCha8Rng) -> JointSet {
        let mut out = [Vector3::zeros(); JOINT_COUNT];
        for p in out.iter_mut() {
            *p = Vector3::new(
                rng.gen_range(-100.0..100.0),
                rng.gen_range(-100.0..100.0),
                rng.gen_range(-100.0..100.0),
            );
        }
        JointSet(out)
    }

    fn perturbed(base: &[JointSet], rng: &mut ChaCha8Rng, scale: f64) -> Vec<JointSet> {
        base.iter()
            .map(|j| {
                let mut out = *j;
                for p in out.0.iter_mut() {
                    *p += Vector3::new(
                        rng.gen_range(-scale..scale),
                        rng.gen_range(-scale..scale),
                        rng.gen_range(-scale..scale),
                    );
                }
                out
            })
            .collect()
    }

    // ===== fraction-correct against a naive oracle =====

    #[test]
    fn pck3d_matches_a_naive_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth: Vec<JointSet> = (0..12).map(|_| random_joints3d(&mut rng)).collect();
        let pred = perturbed(&truth, &mut rng, 40.0);
        for threshold in [5.0, 20.0, 35.0, 80.0] {
            let got = pck3d(&pred, &truth, threshold).unwrap();
            let mut hits = 0;
            let mut total = 0;
            for f in 0..truth.len() {
                for j in 0..JOINT_COUNT {
                    let d = (pred[f].0[j] - truth[f].0[j]).norm();
                    if d <= threshold {
                        hits += 1;
                    }
                    total += 1;
                }
            }
            assert_eq!(got, hits as f64 / total as f64, "threshold {threshold}");
        }
    }

    #[test]
    fn threshold_boundary_counts_as_correct() {
        // One joint displaced by a 3-4-0 triangle: error exactly 5.
        let truth = vec![JointSet([Vector3::zeros(); JOINT_COUNT])];
        let mut moved = truth[0];
        moved.0[4] = Vector3::new(3.0, 4.0, 0.0);
        let pred = vec![moved];
        assert_eq!(pck3d(&pred, &truth, 5.0).unwrap(), 1.0);
        let just_under = pck3d(&pred, &truth, 5.0 - 1e-9).unwrap();
        assert!((just_under - 20.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn curve_is_monotone_on_an_ascending_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth: Vec<JointSet> = (0..8).map(|_| random_joints3d(&mut rng)).collect();
        let pred = perturbed(&truth, &mut rng, 60.0);
        let grid = default_thresholds_mm();
        assert_eq!(grid.len(), 31);
        assert_eq!(grid[0], 20.0);
        assert_eq!(grid[30], 50.0);
        let curve = pck3d_curve(&pred, &truth, &grid).unwrap();
        for w in curve.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn pck2d_pools_joints_across_frames() {
        let a = [Vector2::zeros(); JOINT_COUNT];
        let mut b = a;
        b[0] = Vector2::new(6.0, 8.0);
        // Two frames, one displaced joint of 42: fraction 41/42 at 10 px.
        let truth = vec![a, a];
        let pred = vec![b, a];
        assert_eq!(pck2d(&pred, &truth, 10.0).unwrap(), 1.0);
        let under = pck2d(&pred, &truth, 9.0).unwrap();
        assert!((under - 41.0 / 42.0).abs() < 1e-15);
    }

    // ===== curve summary =====

    #[test]
    fn auc_matches_a_hand_trapezoid_on_uneven_spacing() {
        let thresholds = [1.0, 2.0, 4.0, 8.0];
        let fractions = [0.0, 0.5, 0.75, 1.0];
        // Hand trapezoids: 0.25*1 + 0.625*2 + 0.875*4 = 5.0 over span 7.
        let got = auc(&thresholds, &fractions).unwrap();
        assert!((got - 5.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_curve_scores_exactly_one() {
        let grid = default_thresholds_mm();
        let ones = vec![1.0; grid.len()];
        assert_eq!(auc(&grid, &ones).unwrap(), 1.0);
        // Uneven spacing keeps the identity because the same interval
        // widths appear in the numerator and the normalizer.
        let uneven = [0.5, 0.7, 3.0, 11.0, 12.5];
        assert_eq!(auc(&uneven, &[1.0; 5]).unwrap(), 1.0);
    }

    #[test]
    fn auc_and_curve_inputs_are_validated() {
        assert!(matches!(
            auc(&[1.0], &[1.0]),
            Err(MetricError::TooFewThresholds { got: 1 })
        ));
        assert!(matches!(
            auc(&[1.0, 1.0], &[0.5, 0.5]),
            Err(MetricError::UnorderedThresholds { index: 1, .. })
        ));
        assert!(matches!(
            auc(&[1.0, 2.0], &[0.5]),
            Err(MetricError::CurveLengthMismatch { .. })
        ));
        assert!(matches!(
            auc(&[1.0, 2.0], &[0.5, 1.5]),
            Err(MetricError::BadFraction { index: 1, .. })
        ));
        assert!(matches!(
            auc(&[-1.0, 2.0], &[0.5, 0.5]),
            Err(MetricError::BadThreshold { .. })
        ));
        let truth = vec![JointSet([Vector3::zeros(); JOINT_COUNT])];
        assert!(matches!(
            pck3d(&truth, &truth, 0.0),
            Err(MetricError::BadThreshold { .. })
        ));
        assert!(matches!(
            pck3d(&truth, &[], 5.0),
            Err(MetricError::FrameCountMismatch { .. })
        ));
        assert!(matches!(pck3d(&[], &[], 5.0), Err(MetricError::Empty)));
    }

    // ===== mean distances =====

    #[test]
    fn mean_errors_match_hand_sums() {
        let zero3 = JointSet([Vector3::zeros(); JOINT_COUNT]);
        let mut off3 = zero3;
        off3.0[0] = Vector3::new(0.0, 0.0, 7.0);
        off3.0[1] = Vector3::new(3.0, 4.0, 0.0);
        let got = mean_error_3d(&[off3], &[zero3]).unwrap();
        assert!((got - (7.0 + 5.0) / 21.0).abs() < 1e-15);

        let zero2 = [Vector2::zeros(); JOINT_COUNT];
        let mut off2 = zero2;
        off2[20] = Vector2::new(6.0, 8.0);
        let got = mean_error_2d(&[off2, zero2], &[zero2, zero2]).unwrap();
        assert!((got - 10.0 / 42.0).abs() < 1e-15);
    }

    // ===== prediction files =====

    #[test]
    fn joint_sequence_round_trips_through_a_file() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frames: Vec<(u64, JointSet)> = (0..5)
            .map(|i| (i * 10 + 3, random_joints3d(&mut rng)))
            .collect();
        let dir = std::env::temp_dir().join("handflow_metrics_roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pred.txt");
        let mut file = std::fs::File::create(&path).unwrap();
        writeln!(file, "# prediction dump").unwrap();
        for (id, joints) in &frames {
            let coords: Vec<String> = joints.flatten().iter().map(|v| format!("{v}")).collect();
            writeln!(file, "{id} {}", coords.join(" ")).unwrap();
        }
        drop(file);

        let loaded = load_joint_sequence(&path).unwrap();
        assert_eq!(loaded.len(), frames.len());
        for ((id_a, j_a), (id_b, j_b)) in loaded.iter().zip(&frames) {
            assert_eq!(id_a, id_b);
            assert_eq!(j_a, j_b);
        }
    }

    #[test]
    fn joint_sequence_parser_reports_the_failing_line() {
        let dir = std::env::temp_dir().join("handflow_metrics_badfile");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.txt");
        let zeros = vec!["0"; 63].join(" ");
        std::fs::write(&path, format!("1 {zeros}\n2 1.0 2.0\n")).unwrap();
        match load_joint_sequence(&path) {
            Err(MetricError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other:?}"),
        }

        let trailing = dir.join("trailing.txt");
        std::fs::write(&trailing, format!("1 {zeros} 9.9\n")).unwrap();
        assert!(matches!(
            load_joint_sequence(&trailing),
            Err(MetricError::Parse { line: 1, .. })
        ));
    }
}
