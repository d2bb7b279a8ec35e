//! Capsule-shell hand mesh and linear blend skinning.
//!
//! Each bone contributes a tapered tube of vertex rings around its rest
//! segment plus a cap vertex at both ends, so the whole hand is a union
//! of capsules. Skinning weights fall off with the rest distance to each
//! bone segment; a vertex keeps at most `max_bones` weights, which are
//! non-negative and normalized to sum to one. Posing applies the convex
//! combination of per-bone rigid transforms to every vertex, so a skinned
//! vertex always stays inside the convex hull of its rigid images.

use nalgebra::Vector3;

use super::{HandModel, HandPose, HandShape, ModelError, BONE_COUNT, JOINT_COUNT};

/// Sparse per-vertex skinning weights, padded with zero entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoneWeights {
    pub bones: [u16; 4],
    pub weights: [f64; 4],
}

impl BoneWeights {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.bones
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&b, &w)| (b as usize, w))
    }
}

/// Triangle mesh bound to the hand skeleton.
#[derive(Debug, Clone)]
pub struct HandMesh {
    /// Vertex positions, mm, root-relative.
    pub vertices: Vec<Vector3<f64>>,
    /// Counter-clockwise triangles as vertex indices.
    pub faces: Vec<[u32; 3]>,
    /// Skinning weights per vertex.
    pub weights: Vec<BoneWeights>,
    /// Bone whose shell generated each vertex (coloring zones).
    pub vertex_bone: Vec<u16>,
    /// Shape the rest geometry was built for.
    pub shape: HandShape,
}

impl HandMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }
}

impl HandModel {
    /// Builds the rest-pose mesh for a shape: capsule shells around every
    /// bone of the shaped skeleton, with skinning weights precomputed.
    pub fn rest_mesh(&self, beta: &HandShape) -> Result<HandMesh, ModelError> {
        beta.validate()?;
        let skel = self.shaped_rest_positions(beta);
        let rings = self.mesh_params.rings;
        let sectors = self.mesh_params.sectors;
        let per_bone = rings * sectors + 2;

        let mut vertices = Vec::with_capacity(BONE_COUNT * per_bone);
        let mut faces = Vec::new();
        let mut vertex_bone = Vec::with_capacity(BONE_COUNT * per_bone);

        for bone in 0..BONE_COUNT {
            let child = bone + 1;
            let p = self.tree.parent[child].expect("bone child has a parent");
            let a = skel[p];
            let b = skel[child];
            let axis = (b - a).normalize();
            let (n1, n2) = orthonormal_basis(&axis);
            let [base_r, tip_r] = self.mesh_params.radii[bone];

            let start = vertices.len() as u32;
            for ring in 0..rings {
                let t = ring as f64 / (rings - 1) as f64;
                let center = a + (b - a) * t;
                let radius = base_r + (tip_r - base_r) * t;
                for s in 0..sectors {
                    let phi = std::f64::consts::TAU * s as f64 / sectors as f64;
                    vertices.push(center + (n1 * phi.cos() + n2 * phi.sin()) * radius);
                    vertex_bone.push(bone as u16);
                }
            }
            // End caps: a flat apex at the parent joint, a bulged apex
            // past the child joint (rounds the fingertips).
            let cap_base = vertices.len() as u32;
            vertices.push(a);
            vertex_bone.push(bone as u16);
            let cap_tip = vertices.len() as u32;
            vertices.push(b + axis * (tip_r * 0.8));
            vertex_bone.push(bone as u16);

            let ring_at = |ring: u32, s: u32| start + ring * sectors as u32 + (s % sectors as u32);
            for ring in 0..(rings as u32 - 1) {
                for s in 0..sectors as u32 {
                    let a0 = ring_at(ring, s);
                    let a1 = ring_at(ring, s + 1);
                    let b0 = ring_at(ring + 1, s);
                    let b1 = ring_at(ring + 1, s + 1);
                    faces.push([a0, b0, a1]);
                    faces.push([a1, b0, b1]);
                }
            }
            for s in 0..sectors as u32 {
                faces.push([cap_base, ring_at(0, s + 1), ring_at(0, s)]);
                faces.push([cap_tip, ring_at(rings as u32 - 1, s), ring_at(rings as u32 - 1, s + 1)]);
            }
        }

        let weights = self.skin_weights(&vertices, &skel);
        Ok(HandMesh {
            vertices,
            faces,
            weights,
            vertex_bone,
            shape: *beta,
        })
    }

    /// Distance-falloff weights: raw weight (eps + d^2)^(-power) against
    /// every bone segment, top `max_bones` kept, normalized to sum 1.
    fn skin_weights(
        &self,
        vertices: &[Vector3<f64>],
        skel: &[Vector3<f64>; JOINT_COUNT],
    ) -> Vec<BoneWeights> {
        let sp = self.skin_params;
        let keep = sp.max_bones.min(4);
        vertices
            .iter()
            .map(|v| {
                let mut raw: Vec<(usize, f64)> = (0..BONE_COUNT)
                    .map(|bone| {
                        let child = bone + 1;
                        let p = self.tree.parent[child].expect("bone child has a parent");
                        let d2 = point_segment_dist2(v, &skel[p], &skel[child]);
                        (bone, (sp.eps_mm2 + d2).powi(-(sp.power as i32)))
                    })
                    .collect();
                // Ties resolve toward the lower bone id so weights are
                // reproducible across runs.
                raw.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                raw.truncate(keep);
                let total: f64 = raw.iter().map(|(_, w)| w).sum();
                let mut bw = BoneWeights {
                    bones: [0; 4],
                    weights: [0.0; 4],
                };
                for (i, (bone, w)) in raw.iter().enumerate() {
                    bw.bones[i] = *bone as u16;
                    bw.weights[i] = w / total;
                }
                bw
            })
            .collect()
    }

    /// Poses a rest mesh by linear blend skinning. The rest mesh must
    /// have been built by [`Self::rest_mesh`]; its stored shape selects
    /// the skeleton the bone transforms are measured against.
    pub fn skin_mesh(&self, rest: &HandMesh, theta: &HandPose) -> Result<HandMesh, ModelError> {
        let transforms = self.bone_transforms(theta, &rest.shape)?;
        let vertices = rest
            .vertices
            .iter()
            .zip(&rest.weights)
            .map(|(v, bw)| {
                let mut out = Vector3::zeros();
                for (bone, w) in bw.iter() {
                    let (r, t) = &transforms[bone];
                    out += (r * v + t) * w;
                }
                out
            })
            .collect();
        Ok(HandMesh {
            vertices,
            faces: rest.faces.clone(),
            weights: rest.weights.clone(),
            vertex_bone: rest.vertex_bone.clone(),
            shape: rest.shape,
        })
    }

    /// Rest mesh plus skinning in one call.
    pub fn mesh_lbs(&self, theta: &HandPose, beta: &HandShape) -> Result<HandMesh, ModelError> {
        let rest = self.rest_mesh(beta)?;
        self.skin_mesh(&rest, theta)
    }
}

/// Deterministic right-handed basis completion of a unit axis.
fn orthonormal_basis(axis: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if axis.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let n1 = axis.cross(&helper).normalize();
    let n2 = axis.cross(&n1);
    (n1, n2)
}

/// Squared distance from a point to the segment [a, b].
fn point_segment_dist2(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm_squared()
}
