//! Pose database: real hand poses and exact nearest-neighbour lookup.
//!
//! A database is a list of records, each an id plus 21 root-relative 3D
//! joint positions, loaded from a plain-text file with one record per
//! line (64 whitespace-separated fields: `id x0 y0 z0 ... x20 y20 z20`,
//! millimeters). Joint order matches the skeleton: wrist, then thumb,
//! index, middle, ring, pinky, each as mcp, pip, dip, tip. Records are
//! re-centered on their wrist sample at load time, so lookups never see
//! a stray global translation.
//!
//! Nearest-neighbour queries treat a record as a point in flattened
//! 63-dimensional space and must be exact: the k-d tree prunes with a
//! lower bound on the true distance, so it always returns the same
//! answer a full scan would, including the tie rule (equidistant records
//! resolve to the lowest id).

use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

use crate::handmodel::JointSet;

#[derive(Debug, Error)]
pub enum DbError {
    #[error("failed to access pose db {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("pose db line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("pose db line {line}: record {id} contains a non-finite coordinate")]
    NonFinite { line: usize, id: u64 },
    #[error("pose db line {line}: duplicate record id {id}")]
    DuplicateId { line: usize, id: u64 },
    #[error("pose db holds {got} records; at least 2 are required")]
    TooFewRecords { got: usize },
}

/// One database entry: a stable id and a root-relative joint set.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord {
    pub id: u64,
    pub joints: JointSet,
}

/// An in-memory pose database. Construction guarantees at least two
/// records, unique ids, finite coordinates and wrist-at-origin joints.
#[derive(Debug, Clone)]
pub struct PoseDb {
    records: Vec<PoseRecord>,
    fingerprint: String,
}

impl PoseDb {
    /// Loads a database from its text format. Lines are 1-based in
    /// errors; blank lines and `#` comments are ignored.
    pub fn load(path: &Path) -> Result<PoseDb, DbError> {
        let io_err = |source| DbError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = std::fs::File::open(path).map_err(io_err)?;
        let mut records = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err)?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            records.push(Self::parse_record(trimmed, idx + 1)?);
        }
        Self::from_records_at_lines(records)
    }

    /// Builds a database from records already in memory. Applies the
    /// same validation and wrist-centering as [`PoseDb::load`].
    pub fn from_records(records: Vec<PoseRecord>) -> Result<PoseDb, DbError> {
        Self::from_records_at_lines(records.into_iter().map(|r| (0, r)).collect())
    }

    fn from_records_at_lines(tagged: Vec<(usize, PoseRecord)>) -> Result<PoseDb, DbError> {
        if tagged.len() < 2 {
            return Err(DbError::TooFewRecords { got: tagged.len() });
        }
        let mut seen = std::collections::HashSet::with_capacity(tagged.len());
        let mut records = Vec::with_capacity(tagged.len());
        for (line, rec) in tagged {
            if !rec.joints.is_finite() {
                return Err(DbError::NonFinite { line, id: rec.id });
            }
            if !seen.insert(rec.id) {
                return Err(DbError::DuplicateId { line, id: rec.id });
            }
            records.push(PoseRecord {
                id: rec.id,
                joints: rec.joints.root_centered(),
            });
        }
        let fingerprint = fingerprint_records(&records);
        Ok(PoseDb {
            records,
            fingerprint,
        })
    }

    fn parse_record(line: &str, line_no: usize) -> Result<(usize, PoseRecord), DbError> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 64 {
            return Err(DbError::Malformed {
                line: line_no,
                msg: format!("expected 64 fields (id + 63 coordinates), found {}", fields.len()),
            });
        }
        let id: u64 = fields[0].parse().map_err(|_| DbError::Malformed {
            line: line_no,
            msg: format!("bad record id {:?}", fields[0]),
        })?;
        let mut flat = [0.0; 63];
        for (i, out) in flat.iter_mut().enumerate() {
            *out = fields[i + 1].parse().map_err(|_| DbError::Malformed {
                line: line_no,
                msg: format!("bad coordinate {:?} in field {}", fields[i + 1], i + 2),
            })?;
        }
        Ok((
            line_no,
            PoseRecord {
                id,
                joints: JointSet::from_flat(&flat),
            },
        ))
    }

    /// Writes the text format back out. Floats print in shortest
    /// round-trip form, so load -> save -> load reproduces the records
    /// exactly.
    pub fn save(&self, path: &Path) -> Result<(), DbError> {
        let io_err = |source| DbError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
        for rec in &self.records {
            let mut line = rec.id.to_string();
            for v in rec.joints.flatten() {
                write!(line, " {v}").expect("writing to a string cannot fail");
            }
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }

    pub fn records(&self) -> &[PoseRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Content hash over ids and coordinates (not file bytes), so any
    /// formatting of the same records fingerprints identically.
    /// Computed once at construction.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Builds the nearest-neighbour index over all records.
    pub fn build_index(&self) -> PoseIndex {
        PoseIndex::build(self)
    }
}

fn fingerprint_records(records: &[PoseRecord]) -> String {
    let mut hasher = Sha256::new();
    for rec in records {
        hasher.update(rec.id.to_le_bytes());
        for v in rec.joints.flatten() {
            hasher.update(v.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        write!(hex, "{b:02x}").expect("writing to a string cannot fail");
    }
    hex
}

/// Result of a nearest-neighbour query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Position of the record in [`PoseDb::records`] order.
    pub pos: usize,
    /// The record's id.
    pub id: u64,
    /// Euclidean distance in flattened 63-dimensional space, mm.
    pub distance_mm: f64,
}

enum Node {
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        start: usize,
        end: usize,
    },
}

/// Exact k-d tree over flattened pose vectors.
pub struct PoseIndex {
    points: Vec<[f64; 63]>,
    ids: Vec<u64>,
    /// Permutation of record positions; leaves own ranges of it.
    order: Vec<usize>,
    nodes: Vec<Node>,
    root: usize,
}

const LEAF_SIZE: usize = 16;

impl PoseIndex {
    fn build(db: &PoseDb) -> PoseIndex {
        let points: Vec<[f64; 63]> = db.records.iter().map(|r| r.joints.flatten()).collect();
        let ids: Vec<u64> = db.records.iter().map(|r| r.id).collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut index = PoseIndex {
            points,
            ids,
            order: Vec::new(),
            nodes: Vec::new(),
            root: 0,
        };
        let n = order.len();
        index.root = index.build_node(&mut order, 0, n);
        index.order = order;
        index
    }

    fn build_node(&mut self, order: &mut [usize], start: usize, end: usize) -> usize {
        let span = &mut order[start..end];
        if span.len() <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        // Split on the dimension with the largest spread; the median
        // element goes right so both sides stay non-empty.
        let mut dim = 0;
        let mut best_spread = -1.0;
        for d in 0..63 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &p in span.iter() {
                let v = self.points[p][d];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                dim = d;
            }
        }
        if best_spread <= 0.0 {
            // All points identical along every axis; a leaf (possibly
            // oversized) keeps the scan exact.
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        let mid = span.len() / 2;
        let points = &self.points;
        span.select_nth_unstable_by(mid, |&a, &b| {
            points[a][dim]
                .partial_cmp(&points[b][dim])
                .expect("finite coordinates")
                .then(a.cmp(&b))
        });
        let value = self.points[span[mid]][dim];
        let left = self.build_node(order, start, start + mid);
        let right = self.build_node(order, start + mid, end);
        self.nodes.push(Node::Split {
            dim,
            value,
            left,
            right,
        });
        self.nodes.len() - 1
    }

    /// Exact nearest neighbour of a joint set. Equidistant records
    /// resolve to the lowest id, matching a full scan.
    pub fn nn_query(&self, query: &JointSet) -> Neighbor {
        let q = query.flatten();
        let mut best = Neighbor {
            pos: usize::MAX,
            id: u64::MAX,
            distance_mm: f64::INFINITY,
        };
        let mut best_d2 = f64::INFINITY;
        self.search(self.root, &q, &mut best, &mut best_d2);
        best.distance_mm = best_d2.sqrt();
        best
    }

    fn search(&self, node: usize, q: &[f64; 63], best: &mut Neighbor, best_d2: &mut f64) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &pos in &self.order[start..end] {
                    let d2 = dist2(q, &self.points[pos]);
                    let id = self.ids[pos];
                    if d2 < *best_d2 || (d2 == *best_d2 && id < best.id) {
                        *best_d2 = d2;
                        best.pos = pos;
                        best.id = id;
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let delta = q[dim] - value;
                let (near, far) = if delta < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best, best_d2);
                // Descend on equality too: the far side may hold an
                // equidistant record with a lower id.
                if delta * delta <= *best_d2 {
                    self.search(far, q, best, best_d2);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn dist2(a: &[f64; 63], b: &[f64; 63]) -> f64 {
    let mut acc = 0.0;
    for i in 0..63 {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}
