//! Software rasterization of skinned hand meshes.
//!
//! The renderer is deliberately small and exact: flat-shaded triangles,
//! a float depth buffer, and a boolean coverage mask, all filled in a
//! fixed face order so the same inputs produce the same bytes on any
//! machine. Color comes from one of a handful of skin palettes with a
//! per-phalanx shade step so fingers read as segmented.
//!
//! Conventions: image origin at the top-left corner, x right, y down,
//! pixel (x, y) sampled at its center (x + 0.5, y + 0.5). Depth is the
//! camera-rotated z coordinate; smaller values are closer.

use image::{GrayImage, Luma, Rgb, RgbImage};
use nalgebra::Vector2;
use thiserror::Error;

use crate::camera::{depths, project_weak, CameraParams};
use crate::handmodel::{HandModel, HandMesh, HandPose, HandShape, ModelError};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("vertex attribute lengths differ: {points} points, {depths} depths, {colors} colors")]
    MismatchedAttributes {
        points: usize,
        depths: usize,
        colors: usize,
    },
    #[error("face {face} references vertex {index} outside {len} vertices")]
    FaceOutOfRange { face: usize, index: u32, len: usize },
    #[error("palette id {id} outside 0..{count}")]
    BadPalette { id: u32, count: u32 },
    #[error("frame size {width}x{height} must be positive")]
    EmptyFrame { width: u32, height: u32 },
    #[error(
        "crop corner ({x}, {y}) does not leave room for a {w}x{h} frame in a {bg_w}x{bg_h} background"
    )]
    CropOutOfBounds {
        x: u32,
        y: u32,
        bg_w: u32,
        bg_h: u32,
        w: u32,
        h: u32,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

// ===== color templates =====

/// A named base skin tone. Channels are linear fractions in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorTemplate {
    pub id: u32,
    pub name: &'static str,
    pub base_rgb: [f64; 3],
}

pub const COLOR_TEMPLATE_COUNT: u32 = 8;

static COLOR_TEMPLATES: [ColorTemplate; COLOR_TEMPLATE_COUNT as usize] = [
    ColorTemplate { id: 0, name: "porcelain", base_rgb: [0.96, 0.87, 0.80] },
    ColorTemplate { id: 1, name: "fair", base_rgb: [0.93, 0.80, 0.69] },
    ColorTemplate { id: 2, name: "light_olive", base_rgb: [0.87, 0.72, 0.58] },
    ColorTemplate { id: 3, name: "tan", base_rgb: [0.80, 0.62, 0.47] },
    ColorTemplate { id: 4, name: "bronze", base_rgb: [0.70, 0.52, 0.38] },
    ColorTemplate { id: 5, name: "brown", base_rgb: [0.58, 0.41, 0.29] },
    ColorTemplate { id: 6, name: "deep", base_rgb: [0.45, 0.30, 0.21] },
    ColorTemplate { id: 7, name: "ebony", base_rgb: [0.34, 0.22, 0.16] },
];

pub fn color_templates() -> &'static [ColorTemplate] {
    &COLOR_TEMPLATES
}

pub fn color_template(id: u32) -> Result<&'static ColorTemplate, RenderError> {
    COLOR_TEMPLATES
        .get(id as usize)
        .ok_or(RenderError::BadPalette {
            id,
            count: COLOR_TEMPLATE_COUNT,
        })
}

/// Shade multiplier per bone: each step out along a finger darkens a
/// little, so phalanges are visually separable under flat shading.
fn bone_shade(bone: u16) -> f64 {
    1.0 - 0.07 * (bone % 4) as f64
}

/// Per-vertex colors for a mesh under one palette.
pub fn vertex_colors(mesh: &HandMesh, template: &ColorTemplate) -> Vec<[f64; 3]> {
    mesh.vertex_bone
        .iter()
        .map(|&bone| {
            let shade = bone_shade(bone);
            [
                (template.base_rgb[0] * shade).clamp(0.0, 1.0),
                (template.base_rgb[1] * shade).clamp(0.0, 1.0),
                (template.base_rgb[2] * shade).clamp(0.0, 1.0),
            ]
        })
        .collect()
}

// ===== rasterization =====

/// Color, coverage and depth planes of one rendered frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub color: Vec<[u8; 3]>,
    pub mask: Vec<bool>,
    pub depth: Vec<f64>,
}

impl Raster {
    fn idx(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    pub fn mask_at(&self, x: u32, y: u32) -> bool {
        self.mask[self.idx(x, y)]
    }

    pub fn color_at(&self, x: u32, y: u32) -> [u8; 3] {
        self.color[self.idx(x, y)]
    }

    /// Fraction of pixels covered by the mask.
    pub fn coverage(&self) -> f64 {
        let hit = self.mask.iter().filter(|&&m| m).count();
        hit as f64 / self.mask.len() as f64
    }
}

fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Fills triangles into a fresh raster. Faces are flat-shaded with the
/// mean of their vertex colors; a pixel belongs to a face when its
/// center lies inside or on the boundary (either winding). The depth
/// test is strict, so with equal depth the earlier face keeps the
/// pixel, and the coverage mask records every covered pixel whether or
/// not the fragment won the depth test. Faces with near-zero area or a
/// non-finite attribute are skipped.
pub fn rasterize(
    points: &[Vector2<f64>],
    zs: &[f64],
    faces: &[[u32; 3]],
    colors: &[[f64; 3]],
    width: u32,
    height: u32,
) -> Result<Raster, RenderError> {
    if width == 0 || height == 0 {
        return Err(RenderError::EmptyFrame { width, height });
    }
    if points.len() != zs.len() || points.len() != colors.len() {
        return Err(RenderError::MismatchedAttributes {
            points: points.len(),
            depths: zs.len(),
            colors: colors.len(),
        });
    }
    let n = (width * height) as usize;
    let mut raster = Raster {
        width,
        height,
        color: vec![[0, 0, 0]; n],
        mask: vec![false; n],
        depth: vec![f64::INFINITY; n],
    };

    for (face_idx, face) in faces.iter().enumerate() {
        for &i in face {
            if (i as usize) >= points.len() {
                return Err(RenderError::FaceOutOfRange {
                    face: face_idx,
                    index: i,
                    len: points.len(),
                });
            }
        }
        let [i0, i1, i2] = [face[0] as usize, face[1] as usize, face[2] as usize];
        let (p0, p1, p2) = (points[i0], points[i1], points[i2]);
        let (z0, z1, z2) = (zs[i0], zs[i1], zs[i2]);
        let finite = p0.x.is_finite()
            && p0.y.is_finite()
            && p1.x.is_finite()
            && p1.y.is_finite()
            && p2.x.is_finite()
            && p2.y.is_finite()
            && z0.is_finite()
            && z1.is_finite()
            && z2.is_finite();
        if !finite {
            continue;
        }

        let area2 = edge(&p0, &p1, &p2);
        if area2.abs() < 1e-12 {
            continue;
        }
        // Normalizing by the area sign makes inside mean all-non-negative
        // for both windings.
        let sign = if area2 > 0.0 { 1.0 } else { -1.0 };
        let inv_area = 1.0 / (area2 * sign);

        let c = face_color(&colors[i0], &colors[i1], &colors[i2]);

        let min_x = p0.x.min(p1.x).min(p2.x);
        let max_x = p0.x.max(p1.x).max(p2.x);
        let min_y = p0.y.min(p1.y).min(p2.y);
        let max_y = p0.y.max(p1.y).max(p2.y);
        let x_lo = ((min_x - 0.5).floor().max(0.0)) as i64;
        let x_hi = ((max_x - 0.5).ceil().min(width as f64 - 1.0)) as i64;
        let y_lo = ((min_y - 0.5).floor().max(0.0)) as i64;
        let y_hi = ((max_y - 0.5).ceil().min(height as f64 - 1.0)) as i64;
        if x_lo > x_hi || y_lo > y_hi || max_x < 0.0 || max_y < 0.0 {
            continue;
        }

        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let p = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                let w0 = edge(&p1, &p2, &p) * sign;
                let w1 = edge(&p2, &p0, &p) * sign;
                let w2 = edge(&p0, &p1, &p) * sign;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let i = (y as u32 * width + x as u32) as usize;
                raster.mask[i] = true;
                let z = (w0 * z0 + w1 * z1 + w2 * z2) * inv_area;
                if z < raster.depth[i] {
                    raster.depth[i] = z;
                    raster.color[i] = c;
                }
            }
        }
    }
    Ok(raster)
}

fn face_color(c0: &[f64; 3], c1: &[f64; 3], c2: &[f64; 3]) -> [u8; 3] {
    let mut out = [0u8; 3];
    for ch in 0..3 {
        let mean = (c0[ch] + c1[ch] + c2[ch]) / 3.0;
        out[ch] = (mean * 255.0).round().clamp(0.0, 255.0) as u8;
    }
    out
}

// ===== compositing and export =====

/// Lays the rendered hand over a window of the background image whose
/// top-left corner sits at `offset` in background coordinates.
pub fn composite_over(
    raster: &Raster,
    background: &RgbImage,
    offset: [u32; 2],
) -> Result<RgbImage, RenderError> {
    let (bg_w, bg_h) = background.dimensions();
    if offset[0] + raster.width > bg_w || offset[1] + raster.height > bg_h {
        return Err(RenderError::CropOutOfBounds {
            x: offset[0],
            y: offset[1],
            bg_w,
            bg_h,
            w: raster.width,
            h: raster.height,
        });
    }
    let mut out = RgbImage::new(raster.width, raster.height);
    for y in 0..raster.height {
        for x in 0..raster.width {
            let i = raster.idx(x, y);
            let px = if raster.mask[i] {
                Rgb(raster.color[i])
            } else {
                *background.get_pixel(offset[0] + x, offset[1] + y)
            };
            out.put_pixel(x, y, px);
        }
    }
    Ok(out)
}

/// Coverage mask as an 8-bit image holding only 0 and 255.
pub fn mask_image(raster: &Raster) -> GrayImage {
    let mut out = GrayImage::new(raster.width, raster.height);
    for y in 0..raster.height {
        for x in 0..raster.width {
            let v = if raster.mask[raster.idx(x, y)] { 255 } else { 0 };
            out.put_pixel(x, y, Luma([v]));
        }
    }
    out
}

/// Skins the model for one pose and shape, projects it through the
/// camera and rasterizes it.
pub fn render_hand(
    model: &HandModel,
    theta: &HandPose,
    beta: &HandShape,
    cam: &CameraParams,
    template: &ColorTemplate,
    width: u32,
    height: u32,
) -> Result<Raster, RenderError> {
    let mesh = model.mesh_lbs(theta, beta)?;
    let points = project_weak(&mesh.vertices, cam);
    let zs = depths(&mesh.vertices, cam);
    let colors = vertex_colors(&mesh, template);
    rasterize(&points, &zs, &mesh.faces, &colors, width, height)
}

// ===== detector-style crop =====

/// Axis-aligned square in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropSquare {
    pub center: Vector2<f64>,
    pub side: f64,
}

/// Square window a downstream detector would cut around the hand: it
/// centers on the 2D bounding box of the joints and spans 2.2 times the
/// box's larger half-extent on each side of the center. Returns `None`
/// for empty or non-finite input.
pub fn detector_crop_square(joints2d: &[Vector2<f64>]) -> Option<CropSquare> {
    if joints2d.is_empty() || joints2d.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return None;
    }
    let mut min = joints2d[0];
    let mut max = joints2d[0];
    for p in joints2d {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    let center = (min + max) / 2.0;
    let half_extent = ((max.x - min.x) / 2.0).max((max.y - min.y) / 2.0);
    Some(CropSquare {
        center,
        side: 2.2 * half_extent,
    })
}
