//! Parser for the plain-text hand model constants file.
//!
//! The format is documented field by field inside the shipped asset
//! (`assets/hand_model_v1.txt`): sections `version`, `joints`, `blend`,
//! `mesh`, `skin` in that order, one whitespace-separated record per
//! line, `#` comments and blank lines ignored.

use nalgebra::Vector3;
use thiserror::Error;

use super::{HandModel, KinematicTree, BONE_COUNT, JOINT_COUNT, SHAPE_DIM};

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("failed to read hand model asset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("hand model asset line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported hand model asset version {version}")]
    Version { version: u32 },
}

/// Capsule shell tessellation parameters.
#[derive(Debug, Clone)]
pub struct MeshParams {
    /// Vertex rings per bone along the segment.
    pub rings: usize,
    /// Vertices per ring.
    pub sectors: usize,
    /// Shell radius at the parent end and child end of each bone, mm.
    pub radii: [[f64; 2]; BONE_COUNT],
}

/// Distance-falloff skinning parameters.
#[derive(Debug, Clone, Copy)]
pub struct SkinParams {
    /// Softening constant added to the squared distance, mm^2.
    pub eps_mm2: f64,
    /// Falloff exponent applied to (eps + d^2).
    pub power: u32,
    /// Bones kept per vertex after ranking by raw weight.
    pub max_bones: usize,
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
        }
    }

    /// Next non-empty, non-comment line with its 1-based number.
    fn next_record(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (idx, raw) in self.inner.by_ref() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            return Some((idx + 1, line.split_whitespace().collect()));
        }
        None
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> AssetError {
    AssetError::Parse {
        line,
        msg: msg.into(),
    }
}

fn field<T: std::str::FromStr>(fields: &[&str], i: usize, line: usize, what: &str) -> Result<T, AssetError> {
    fields
        .get(i)
        .ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse::<T>()
        .map_err(|_| parse_err(line, format!("bad {what} {:?}", fields.get(i).copied().unwrap_or(""))))
}

pub(super) fn parse(text: &str) -> Result<HandModel, AssetError> {
    let mut lines = Lines::new(text);

    let (ln, rec) = lines
        .next_record()
        .ok_or_else(|| parse_err(0, "empty asset"))?;
    if rec.first() != Some(&"version") {
        return Err(parse_err(ln, "expected `version <n>`"));
    }
    let version: u32 = field(&rec, 1, ln, "version number")?;
    if version != 1 {
        return Err(AssetError::Version { version });
    }

    // joints section
    let (ln, rec) = lines
        .next_record()
        .ok_or_else(|| parse_err(0, "missing joints section"))?;
    if rec.first() != Some(&"joints") {
        return Err(parse_err(ln, "expected `joints <count>`"));
    }
    let count: usize = field(&rec, 1, ln, "joint count")?;
    if count != JOINT_COUNT {
        return Err(parse_err(ln, format!("expected {JOINT_COUNT} joints, asset declares {count}")));
    }
    let mut parent = [None; JOINT_COUNT];
    let mut offsets = [Vector3::zeros(); JOINT_COUNT];
    let mut names = vec![String::new(); JOINT_COUNT];
    for expect_id in 0..JOINT_COUNT {
        let (ln, rec) = lines
            .next_record()
            .ok_or_else(|| parse_err(0, "truncated joints section"))?;
        let id: usize = field(&rec, 0, ln, "joint id")?;
        if id != expect_id {
            return Err(parse_err(ln, format!("joint ids must be dense ascending; expected {expect_id}, found {id}")));
        }
        let name: String = field(&rec, 1, ln, "joint name")?;
        let parent_id: i64 = field(&rec, 2, ln, "parent id")?;
        let off = Vector3::new(
            field::<f64>(&rec, 3, ln, "offset x")?,
            field::<f64>(&rec, 4, ln, "offset y")?,
            field::<f64>(&rec, 5, ln, "offset z")?,
        );
        if id == 0 {
            if parent_id != -1 {
                return Err(parse_err(ln, "joint 0 must be the root (parent -1)"));
            }
            if off != Vector3::zeros() {
                return Err(parse_err(ln, "root offset must be zero"));
            }
        } else {
            if parent_id < 0 || parent_id as usize >= id {
                return Err(parse_err(ln, format!("parent of joint {id} must be a smaller joint id")));
            }
            if off.norm() < 1e-9 {
                return Err(parse_err(ln, format!("joint {id} has a zero-length rest offset")));
            }
            parent[id] = Some(parent_id as usize);
        }
        offsets[id] = off;
        names[id] = name;
    }

    // blend section
    let (ln, rec) = lines
        .next_record()
        .ok_or_else(|| parse_err(0, "missing blend section"))?;
    if rec.first() != Some(&"blend") {
        return Err(parse_err(ln, "expected `blend <modes> <bones>`"));
    }
    let modes: usize = field(&rec, 1, ln, "blend mode count")?;
    let bones: usize = field(&rec, 2, ln, "blend bone count")?;
    if modes != SHAPE_DIM || bones != BONE_COUNT {
        return Err(parse_err(ln, format!("expected blend {SHAPE_DIM} {BONE_COUNT}")));
    }
    let mut blend = vec![[0.0f64; BONE_COUNT]; SHAPE_DIM];
    for expect_mode in 0..SHAPE_DIM {
        let (ln, rec) = lines
            .next_record()
            .ok_or_else(|| parse_err(0, "truncated blend section"))?;
        let mode: usize = field(&rec, 0, ln, "mode id")?;
        if mode != expect_mode {
            return Err(parse_err(ln, format!("blend modes must be dense ascending; expected {expect_mode}, found {mode}")));
        }
        if rec.len() != 2 + BONE_COUNT {
            return Err(parse_err(ln, format!("mode {mode} must list {BONE_COUNT} coefficients")));
        }
        for (b, slot) in blend[mode].iter_mut().enumerate() {
            *slot = field(&rec, 2 + b, ln, "blend coefficient")?;
        }
    }
    // Factors must stay positive over the whole shape box [-2, 2]^modes,
    // otherwise a shape could collapse or mirror a bone.
    for b in 0..BONE_COUNT {
        let worst: f64 = blend.iter().map(|m| m[b].abs() * 2.0).sum();
        if worst >= 1.0 {
            return Err(parse_err(0, format!("bone {b} blend coefficients allow a non-positive length factor")));
        }
    }

    // mesh section
    let (ln, rec) = lines
        .next_record()
        .ok_or_else(|| parse_err(0, "missing mesh section"))?;
    if rec.first() != Some(&"mesh") {
        return Err(parse_err(ln, "expected `mesh <rings> <sectors>`"));
    }
    let rings: usize = field(&rec, 1, ln, "ring count")?;
    let sectors: usize = field(&rec, 2, ln, "sector count")?;
    if rings < 2 || sectors < 3 {
        return Err(parse_err(ln, "mesh needs at least 2 rings and 3 sectors"));
    }
    let mut radii = [[0.0; 2]; BONE_COUNT];
    let mut seen = [false; BONE_COUNT];
    for _ in 0..BONE_COUNT {
        let (ln, rec) = lines
            .next_record()
            .ok_or_else(|| parse_err(0, "truncated mesh section"))?;
        let child: usize = field(&rec, 0, ln, "bone child joint id")?;
        if child == 0 || child >= JOINT_COUNT {
            return Err(parse_err(ln, format!("bone child joint {child} out of range")));
        }
        let base: f64 = field(&rec, 1, ln, "base radius")?;
        let tip: f64 = field(&rec, 2, ln, "tip radius")?;
        if base <= 0.0 || tip <= 0.0 {
            return Err(parse_err(ln, "bone radii must be positive"));
        }
        if seen[child - 1] {
            return Err(parse_err(ln, format!("duplicate radii for bone ending at joint {child}")));
        }
        seen[child - 1] = true;
        radii[child - 1] = [base, tip];
    }

    // skin section
    let (ln, rec) = lines
        .next_record()
        .ok_or_else(|| parse_err(0, "missing skin section"))?;
    if rec.first() != Some(&"skin") {
        return Err(parse_err(ln, "expected `skin <eps_mm2> <power> <max_bones>`"));
    }
    let eps_mm2: f64 = field(&rec, 1, ln, "skin eps")?;
    let power: u32 = field(&rec, 2, ln, "skin power")?;
    let max_bones: usize = field(&rec, 3, ln, "skin max bones")?;
    if eps_mm2 <= 0.0 || power == 0 || max_bones == 0 || max_bones > 8 {
        return Err(parse_err(ln, "skin parameters out of range"));
    }

    if let Some((ln, _)) = lines.next_record() {
        return Err(parse_err(ln, "unexpected content after skin section"));
    }

    Ok(HandModel {
        tree: KinematicTree {
            parent,
            offsets,
            names,
        },
        blend,
        mesh_params: MeshParams {
            rings,
            sectors,
            radii,
        },
        skin_params: SkinParams {
            eps_mm2,
            power,
            max_bones,
        },
        version,
    })
}
