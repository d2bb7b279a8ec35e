//! Background image pool for composited frames.
//!
//! A pool comes either from a directory of images, listed in sorted
//! name order so the index-to-file mapping is stable, or from a small
//! procedural set of smooth gradients for runs that ship no imagery.
//! All images decode up front; generation then only crops.

use std::fs;
use std::path::Path;

use image::RgbImage;
use thiserror::Error;

use crate::{Categorized, ErrorCategory};

#[derive(Debug, Error)]
pub enum BackgroundError {
    #[error("reading background directory {path}: {source}")]
    Dir {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("decoding background {path}: {source}")]
    Decode {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("no usable background images in {path}")]
    EmptyPool { path: String },
    #[error("background {name} is {w}x{h}, smaller than the {need_w}x{need_h} frame")]
    TooSmall {
        name: String,
        w: u32,
        h: u32,
        need_w: u32,
        need_h: u32,
    },
}

impl Categorized for BackgroundError {
    fn category(&self) -> ErrorCategory {
        match self {
            BackgroundError::Dir { .. } | BackgroundError::Decode { .. } => ErrorCategory::Io,
            BackgroundError::EmptyPool { .. } | BackgroundError::TooSmall { .. } => {
                ErrorCategory::Data
            }
        }
    }
}

/// One background: its stable name (file name or procedural tag) and
/// pixels.
pub struct Background {
    pub name: String,
    pub image: RgbImage,
}

impl Background {
    pub fn size(&self) -> [u32; 2] {
        let (w, h) = self.image.dimensions();
        [w, h]
    }
}

pub struct BackgroundPool {
    pub entries: Vec<Background>,
}

impl BackgroundPool {
    /// Loads every decodable png/jpg in a directory, sorted by file
    /// name. Images smaller than the frame are rejected rather than
    /// skipped so a bad pool is loud.
    pub fn from_dir(dir: &Path, frame_w: u32, frame_h: u32) -> Result<Self, BackgroundError> {
        let display = dir.display().to_string();
        let mut names: Vec<String> = fs::read_dir(dir)
            .map_err(|source| BackgroundError::Dir {
                path: display.clone(),
                source,
            })?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                let lower = name.to_lowercase();
                (lower.ends_with(".png") || lower.ends_with(".jpg") || lower.ends_with(".jpeg"))
                    .then_some(name)
            })
            .collect();
        names.sort();
        let mut entries = Vec::with_capacity(names.len());
        for name in names {
            let path = dir.join(&name);
            let image = image::open(&path)
                .map_err(|source| BackgroundError::Decode {
                    path: path.display().to_string(),
                    source,
                })?
                .to_rgb8();
            let (w, h) = image.dimensions();
            if w < frame_w || h < frame_h {
                return Err(BackgroundError::TooSmall {
                    name,
                    w,
                    h,
                    need_w: frame_w,
                    need_h: frame_h,
                });
            }
            entries.push(Background { name, image });
        }
        if entries.is_empty() {
            return Err(BackgroundError::EmptyPool { path: display });
        }
        Ok(BackgroundPool { entries })
    }

    /// Built-in pool of `count` deterministic gradient images, each
    /// `w` x `h`. Index `i` always produces the same pixels.
    pub fn procedural(count: usize, w: u32, h: u32) -> Self {
        let entries = (0..count)
            .map(|i| Background {
                name: format!("procedural_{i}"),
                image: procedural_background(i as u32, w, h),
            })
            .collect();
        BackgroundPool { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Smooth two-tone diagonal gradient with a mild wave, parametrized by
/// the pool index. Pure in (index, x, y).
pub fn procedural_background(index: u32, w: u32, h: u32) -> RgbImage {
    // Distinct endpoint colors per index from a fixed table walk.
    let pick = |k: u32| -> [f64; 3] {
        let hue = (index.wrapping_mul(7).wrapping_add(k * 3) % 12) as f64 / 12.0;
        let lift = 0.35 + 0.4 * ((index / 12 + k) % 2) as f64;
        [
            lift + 0.3 * (std::f64::consts::TAU * hue).sin().abs(),
            lift + 0.3 * (std::f64::consts::TAU * (hue + 1.0 / 3.0)).sin().abs(),
            lift + 0.3 * (std::f64::consts::TAU * (hue + 2.0 / 3.0)).sin().abs(),
        ]
    };
    let a = pick(0);
    let b = pick(1);
    RgbImage::from_fn(w, h, |x, y| {
        let fx = x as f64 / (w.max(2) - 1) as f64;
        let fy = y as f64 / (h.max(2) - 1) as f64;
        let t = ((fx + fy) / 2.0 + 0.08 * (fx * 9.0 + index as f64).sin()).clamp(0.0, 1.0);
        let mut px = [0u8; 3];
        for c in 0..3 {
            px[c] = ((a[c] + (b[c] - a[c]) * t) * 255.0).round().clamp(0.0, 255.0) as u8;
        }
        image::Rgb(px)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn procedural_pool_is_deterministic_and_distinct() {
        let a = BackgroundPool::procedural(8, 64, 48);
        let b = BackgroundPool::procedural(8, 64, 48);
        assert_eq!(a.len(), 8);
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.image.as_raw(), y.image.as_raw());
            assert_eq!(x.size(), [64, 48]);
        }
        // At least the first few differ pairwise.
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                assert_ne!(
                    a.entries[i].image.as_raw(),
                    a.entries[j].image.as_raw(),
                    "pool entries {i} and {j} are identical"
                );
            }
        }
    }

    #[test]
    fn directory_pool_sorts_names_and_rejects_small_images() {
        let dir = std::env::temp_dir().join("handflow_bg_pool");
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        procedural_background(0, 300, 300)
            .save(dir.join("b_second.png"))
            .unwrap();
        procedural_background(1, 280, 260)
            .save(dir.join("a_first.png"))
            .unwrap();
        fs::write(dir.join("notes.txt"), "ignored").unwrap();

        let pool = BackgroundPool::from_dir(&dir, 224, 224).unwrap();
        assert_eq!(pool.len(), 2);
        assert_eq!(pool.entries[0].name, "a_first.png");
        assert_eq!(pool.entries[1].name, "b_second.png");

        assert!(matches!(
            BackgroundPool::from_dir(&dir, 290, 224),
            Err(BackgroundError::TooSmall { .. })
        ));

        let empty = dir.join("empty");
        fs::create_dir_all(&empty).unwrap();
        assert!(matches!(
            BackgroundPool::from_dir(&empty, 10, 10),
            Err(BackgroundError::EmptyPool { .. })
        ));
    }
}
