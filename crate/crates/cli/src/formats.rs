//! On-disk formats of a generated dataset.
//!
//! A run directory holds one `manifest.json` and one directory per
//! sequence. Each sequence directory holds `annot.json` plus a pair of
//! images per frame: `frame_000.png` (composited color) and
//! `frame_000_mask.png` (hand coverage, 0 or 255). Both JSON files
//! carry a format version so readers can refuse layouts they do not
//! understand.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use handflow_core::handmodel::HandShape;
use handflow_core::poseflow::{FlowConfig, PoseFlowSeq};

use crate::{Categorized, ErrorCategory};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("writing {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("reading {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: format version {found}, this build reads {expected}")]
    Version {
        path: String,
        found: u32,
        expected: u32,
    },
}

impl Categorized for FormatError {
    fn category(&self) -> ErrorCategory {
        match self {
            FormatError::Write { .. } | FormatError::Read { .. } => ErrorCategory::Io,
            FormatError::Json { .. } | FormatError::Version { .. } => ErrorCategory::Data,
        }
    }
}

/// Per-sequence annotation file: the full flow, wrapped with a format
/// version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceAnnotation {
    pub format_version: u32,
    pub flow: PoseFlowSeq,
}

/// Per-run manifest entry describing one sequence directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Directory name relative to the run root, e.g. `seq_000042`.
    pub dir: String,
    /// Seed of the sequence's private RNG.
    pub seed: u64,
    pub color_template_id: u32,
    /// Shape held constant over the sequence.
    pub beta: HandShape,
    /// Background name the sequence crops from.
    pub background: String,
}

/// Run-level manifest: enough to reproduce or audit the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub master_seed: u64,
    pub config: FlowConfig,
    /// Content hash of the pose database every sequence snapped to.
    pub db_fingerprint: String,
    pub sequences: Vec<ManifestEntry>,
}

/// `seq_%06d`, the one place the pattern is spelled.
pub fn sequence_dir_name(index: usize) -> String {
    format!("seq_{index:06}")
}

/// `frame_%03d.png`.
pub fn frame_file_name(frame: usize) -> String {
    format!("frame_{frame:03}.png")
}

/// `frame_%03d_mask.png`.
pub fn mask_file_name(frame: usize) -> String {
    format!("frame_{frame:03}_mask.png")
}

pub fn manifest_path(run_dir: &Path) -> PathBuf {
    run_dir.join("manifest.json")
}

pub fn annotation_path(seq_dir: &Path) -> PathBuf {
    seq_dir.join("annot.json")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| FormatError::Json {
        path: path.display().to_string(),
        source,
    })?;
    fs::write(path, text).map_err(|source| FormatError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(|source| FormatError::Read {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| FormatError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn check_version(path: &Path, found: u32) -> Result<(), FormatError> {
    if found != FORMAT_VERSION {
        return Err(FormatError::Version {
            path: path.display().to_string(),
            found,
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

pub fn write_annotation(seq_dir: &Path, flow: &PoseFlowSeq) -> Result<(), FormatError> {
    let annot = SequenceAnnotation {
        format_version: FORMAT_VERSION,
        flow: flow.clone(),
    };
    write_json(&annotation_path(seq_dir), &annot)
}

pub fn read_annotation(seq_dir: &Path) -> Result<SequenceAnnotation, FormatError> {
    let path = annotation_path(seq_dir);
    let annot: SequenceAnnotation = read_json(&path)?;
    check_version(&path, annot.format_version)?;
    Ok(annot)
}

pub fn write_manifest(run_dir: &Path, manifest: &Manifest) -> Result<(), FormatError> {
    write_json(&manifest_path(run_dir), manifest)
}

pub fn read_manifest(run_dir: &Path) -> Result<Manifest, FormatError> {
    let path = manifest_path(run_dir);
    let manifest: Manifest = read_json(&path)?;
    check_version(&path, manifest.format_version)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use handflow_core::handmodel::HandModel;
    use handflow_core::posedb::{PoseDb, PoseRecord};
    use handflow_core::poseflow::generate_flow;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_flow() -> PoseFlowSeq {
        let model = HandModel::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let records = (0..20)
            .map(|i| {
                let theta = model.sample_swing_pose(&mut rng, 1.2);
                PoseRecord {
                    id: i,
                    joints: model.joints_fk(&theta, &Default::default()).unwrap(),
                }
            })
            .collect();
        let db = PoseDb::from_records(records).unwrap();
        let index = db.build_index();
        generate_flow(
            model,
            &db,
            &index,
            &FlowConfig::default(),
            8,
            [640, 480],
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn annotation_and_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let flow = tiny_flow();
        write_annotation(dir.path(), &flow).unwrap();
        let back = read_annotation(dir.path()).unwrap();
        assert_eq!(back.format_version, FORMAT_VERSION);
        assert_eq!(back.flow, flow);

        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            master_seed: 99,
            config: FlowConfig::default(),
            db_fingerprint: flow.db_fingerprint.clone(),
            sequences: vec![ManifestEntry {
                dir: sequence_dir_name(0),
                seed: 1234,
                color_template_id: flow.color_template_id,
                beta: flow.frames[0].beta,
                background: "procedural_0".into(),
            }],
        };
        write_manifest(dir.path(), &manifest).unwrap();
        let back = read_manifest(dir.path()).unwrap();
        assert_eq!(back, manifest);
    }

    #[test]
    fn unknown_versions_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let flow = tiny_flow();
        let annot = SequenceAnnotation {
            format_version: 977,
            flow,
        };
        let path = annotation_path(dir.path());
        fs::write(&path, serde_json::to_string(&annot).unwrap()).unwrap();
        assert!(matches!(
            read_annotation(dir.path()),
            Err(FormatError::Version { found: 977, .. })
        ));
    }

    #[test]
    fn name_patterns_are_zero_padded() {
        assert_eq!(sequence_dir_name(7), "seq_000007");
        assert_eq!(sequence_dir_name(123_456), "seq_123456");
        assert_eq!(frame_file_name(3), "frame_003.png");
        assert_eq!(mask_file_name(10), "frame_010_mask.png");
    }
}
