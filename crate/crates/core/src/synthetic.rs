//! Generated stained-slide scenes with known ground truth, for tests, demos
//! and desk-scale fixtures.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::imaging::{self, BinaryMask, RasterImage, Rgb};

#[derive(Clone, Debug)]
pub struct SceneParams {
    pub width: u32,
    pub height: u32,
    pub background: Rgb,
    pub stain: Rgb,
    pub artifact: Rgb,
    /// Per-channel uniform noise amplitude.
    pub noise: u8,
    pub blobs: usize,
    /// Semi-axis ranges of the elliptical bacteria.
    pub major_axis: (f64, f64),
    pub minor_axis: (f64, f64),
    /// Stain-colored debris, excluded from the ground truth.
    pub specks: usize,
    /// Speck diameters are odd and strictly below this.
    pub speck_diameter_below: u32,
    /// Large debris in the artifact color, excluded from the ground truth.
    pub artifacts: usize,
    pub artifact_radius: (f64, f64),
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            background: [225, 215, 205],
            stain: [95, 45, 125],
            artifact: [150, 95, 70],
            noise: 10,
            blobs: 10,
            major_axis: (25.0, 40.0),
            minor_axis: (12.0, 18.0),
            specks: 30,
            speck_diameter_below: 9,
            artifacts: 0,
            artifact_radius: (16.0, 24.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub image: RasterImage,
    /// Bacteria pixels only.
    pub truth: BinaryMask,
    pub specks: BinaryMask,
    pub artifacts: BinaryMask,
}

fn near(mask: &BinaryMask, cx: f64, cy: f64, radius: f64) -> bool {
    let r = radius.ceil() as i64;
    let (cx, cy) = (cx.round() as i64, cy.round() as i64);
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            let (dx, dy) = ((x - cx) as f64, (y - cy) as f64);
            if dx * dx + dy * dy <= radius * radius && mask.get_or_background(x, y) {
                return true;
            }
        }
    }
    false
}

fn stamp_disk(mask: &mut BinaryMask, cx: i64, cy: i64, radius: f64) {
    let r = radius.floor() as i64;
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            let (dx, dy) = ((x - cx) as f64, (y - cy) as f64);
            if dx * dx + dy * dy <= radius * radius
                && x >= 0
                && y >= 0
                && (x as u32) < mask.width()
                && (y as u32) < mask.height()
            {
                mask.set(x as u32, y as u32, true);
            }
        }
    }
}

/// Draws a scene. Bacteria are rotated ellipses; specks and artifacts are
/// disks placed clear of the bacteria. The result is a pure function of
/// `(params, seed)`.
pub fn generate(params: &SceneParams, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (params.width, params.height);
    let mut truth = BinaryMask::empty(w, h).expect("non-empty scene");

    let margin = params.major_axis.1 + 2.0;
    for _ in 0..params.blobs {
        let cx = rng.random_range(margin..(w as f64 - margin).max(margin + 1.0));
        let cy = rng.random_range(margin..(h as f64 - margin).max(margin + 1.0));
        let a = rng.random_range(params.major_axis.0..=params.major_axis.1);
        let b = rng.random_range(params.minor_axis.0..=params.minor_axis.1);
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let (s, c) = theta.sin_cos();
        let r = a.ceil() as i64 + 1;
        for y in (cy as i64 - r).max(0)..(cy as i64 + r).min(h as i64) {
            for x in (cx as i64 - r).max(0)..(cx as i64 + r).min(w as i64) {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let u = (dx * c + dy * s) / a;
                let v = (-dx * s + dy * c) / b;
                if u * u + v * v <= 1.0 {
                    truth.set(x as u32, y as u32, true);
                }
            }
        }
    }

    let mut artifacts = BinaryMask::empty(w, h).expect("non-empty scene");
    let mut placed = 0;
    for _ in 0..params.artifacts * 200 {
        if placed == params.artifacts {
            break;
        }
        let radius = rng.random_range(params.artifact_radius.0..=params.artifact_radius.1);
        let cx = rng.random_range(radius..w as f64 - radius);
        let cy = rng.random_range(radius..h as f64 - radius);
        if near(&truth, cx, cy, radius + 12.0) || near(&artifacts, cx, cy, radius + 4.0) {
            continue;
        }
        stamp_disk(&mut artifacts, cx.round() as i64, cy.round() as i64, radius);
        placed += 1;
    }

    let mut specks = BinaryMask::empty(w, h).expect("non-empty scene");
    let max_radius = (params.speck_diameter_below.saturating_sub(2) / 2) as i64;
    let mut placed = 0;
    for _ in 0..params.specks * 200 {
        if placed == params.specks {
            break;
        }
        let radius = rng.random_range(0..=max_radius) as f64;
        let cx = rng.random_range(8.0..w as f64 - 8.0);
        let cy = rng.random_range(8.0..h as f64 - 8.0);
        let clearance = radius + params.speck_diameter_below as f64 + 4.0;
        if near(&truth, cx, cy, clearance) || near(&artifacts, cx, cy, clearance) || near(&specks, cx, cy, clearance) {
            continue;
        }
        stamp_disk(&mut specks, cx.round() as i64, cy.round() as i64, radius);
        placed += 1;
    }

    let noise = params.noise as i32;
    let jitter = |rng: &mut ChaCha8Rng, c: Rgb| -> Rgb {
        let mut out = [0u8; 3];
        for ch in 0..3 {
            let n = if noise > 0 { rng.random_range(-noise..=noise) } else { 0 };
            out[ch] = (c[ch] as i32 + n).clamp(0, 255) as u8;
        }
        out
    };
    let image = RasterImage::from_fn(w, h, |x, y| {
        let base = if truth.get(x, y) || specks.get(x, y) {
            params.stain
        } else if artifacts.get(x, y) {
            params.artifact
        } else {
            params.background
        };
        jitter(&mut rng, base)
    })
    .expect("non-empty scene");

    Scene {
        image,
        truth,
        specks,
        artifacts,
    }
}

/// Writes a small DIBaS-shaped tree: one directory per species name holding
/// `per_species` PNG scenes. Returns the written relative paths.
pub fn write_mini_dataset(
    root: &Path,
    species: &[&str],
    per_species: usize,
    params: &SceneParams,
    seed: u64,
) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for (si, name) in species.iter().enumerate() {
        for i in 0..per_species {
            let scene = generate(params, seed.wrapping_add((si * 1000 + i) as u64));
            let rel = Path::new(name).join(format!("{}_{:04}.png", name.replace(' ', "_"), i + 1));
            imaging::save_png(&scene.image, root.join(&rel))?;
            written.push(rel);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_deterministic() {
        let p = SceneParams {
            width: 128,
            height: 96,
            blobs: 3,
            specks: 5,
            major_axis: (12.0, 16.0),
            minor_axis: (5.0, 8.0),
            ..SceneParams::default()
        };
        let a = generate(&p, 5);
        let b = generate(&p, 5);
        assert_eq!(a.image, b.image);
        assert_eq!(a.truth, b.truth);
        assert!(a.truth.count_ones() > 0);
        assert!(a.specks.count_ones() > 0);
        assert_ne!(generate(&p, 6).image, a.image);
    }

    #[test]
    fn debris_is_clear_of_bacteria() {
        let p = SceneParams {
            artifacts: 6,
            ..SceneParams::default()
        };
        let s = generate(&p, 1);
        assert_eq!(s.truth.iou(&s.specks).unwrap(), 0.0);
        assert_eq!(s.truth.iou(&s.artifacts).unwrap(), 0.0);
        assert!(s.artifacts.count_ones() > 0);
    }
}
