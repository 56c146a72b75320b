//! Fixed-size patch extraction and label-exact geometric augmentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{RasterImage, Rgb};
use crate::label::LabelMap;

pub const DEFAULT_PATCH_SIZE: u32 = 512;
pub const DEFAULT_TRAIN_STRIDE: u32 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOp {
    /// Counter-clockwise quarter turns.
    Rotate90 { turns: u8 },
    HorizontalFlip,
    VerticalFlip,
    /// Content moves by `(dx, dy)`; vacated pixels become background.
    Shift { dx: i32, dy: i32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub origin: (u32, u32),
    pub image: RasterImage,
    pub label: LabelMap,
    pub augmentation: Vec<AugmentOp>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet {
    pub patch_size: u32,
    pub stride: u32,
    pub patches: Vec<Patch>,
}

/// Window origins along one axis: multiples of `stride`, plus one flush with
/// the far edge when the grid falls short of it.
pub fn axis_origins(len: u32, size: u32, stride: u32) -> Vec<u32> {
    let mut out: Vec<u32> = (0..)
        .map(|i| i * stride)
        .take_while(|&p| p + size <= len)
        .collect();
    if let Some(&last) = out.last() {
        if last + size < len {
            out.push(len - size);
        }
    }
    out
}

pub fn patch_origins(width: u32, height: u32, size: u32, stride: u32) -> Result<Vec<(u32, u32)>> {
    if size == 0 || size > width.min(height) {
        return Err(Error::PatchLargerThanImage { size, width, height });
    }
    if stride == 0 || stride > size {
        return Err(Error::InvalidParameter(format!(
            "stride must be in 1..={size}, got {stride}"
        )));
    }
    let xs = axis_origins(width, size, stride);
    let ys = axis_origins(height, size, stride);
    Ok(ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect())
}

fn crop_label(label: &LabelMap, x: u32, y: u32, size: u32) -> LabelMap {
    let mut classes = Vec::with_capacity((size * size) as usize);
    for row in y..y + size {
        let start = (row * label.width() + x) as usize;
        classes.extend_from_slice(&label.classes()[start..start + size as usize]);
    }
    LabelMap::new(size, size, classes).expect("valid crop")
}

/// Cuts `img` and `label` into `size`×`size` windows, row by row.
/// `stride == size` gives non-overlapping patches.
pub fn extract_patches(img: &RasterImage, label: &LabelMap, size: u32, stride: u32) -> Result<PatchSet> {
    if img.dimensions() != label.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: img.dimensions(),
            found: label.dimensions(),
        });
    }
    let patches = patch_origins(img.width(), img.height(), size, stride)?
        .into_iter()
        .map(|(x, y)| {
            Ok(Patch {
                origin: (x, y),
                image: img.crop(x, y, size, size)?,
                label: crop_label(label, x, y, size),
                augmentation: Vec::new(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(PatchSet {
        patch_size: size,
        stride,
        patches,
    })
}

/// Applies a source-coordinate mapping to a raster, filling unmapped pixels.
fn remap<T: Copy>(
    data: &[T],
    width: u32,
    height: u32,
    op: AugmentOp,
    fill: T,
) -> (Vec<T>, u32, u32) {
    let (w, h) = (width as i64, height as i64);
    let (out_w, out_h) = match op {
        AugmentOp::Rotate90 { turns } if turns % 2 == 1 => (h, w),
        _ => (w, h),
    };
    let mut out = Vec::with_capacity((out_w * out_h) as usize);
    for y in 0..out_h {
        for x in 0..out_w {
            let src = match op {
                AugmentOp::Rotate90 { turns } => match turns % 4 {
                    0 => Some((x, y)),
                    // counter-clockwise: out(x, y) = in(w-1-y, x)
                    1 => Some((w - 1 - y, x)),
                    2 => Some((w - 1 - x, h - 1 - y)),
                    _ => Some((y, h - 1 - x)),
                },
                AugmentOp::HorizontalFlip => Some((w - 1 - x, y)),
                AugmentOp::VerticalFlip => Some((x, h - 1 - y)),
                AugmentOp::Shift { dx, dy } => {
                    let (sx, sy) = (x - dx as i64, y - dy as i64);
                    (sx >= 0 && sy >= 0 && sx < w && sy < h).then_some((sx, sy))
                }
            };
            out.push(src.map_or(fill, |(sx, sy)| data[(sy * w + sx) as usize]));
        }
    }
    (out, out_w as u32, out_h as u32)
}

fn apply_op(patch: &Patch, op: AugmentOp) -> Result<Patch> {
    let (w, h) = patch.image.dimensions();
    if let AugmentOp::Shift { dx, dy } = op {
        if dx.unsigned_abs() >= w || dy.unsigned_abs() >= h {
            return Err(Error::ShiftTooLarge {
                dx,
                dy,
                width: w,
                height: h,
            });
        }
    }
    let (pixels, nw, nh) = remap::<Rgb>(patch.image.pixels(), w, h, op, [0, 0, 0]);
    let (classes, _, _) = remap::<u8>(patch.label.classes(), w, h, op, 0);
    let mut augmentation = patch.augmentation.clone();
    augmentation.push(op);
    Ok(Patch {
        origin: patch.origin,
        image: RasterImage::new(nw, nh, pixels)?,
        label: LabelMap::new(nw, nh, classes)?,
        augmentation,
    })
}

/// Applies `ops` in order to image and label alike, appending them to the
/// patch's augmentation record.
pub fn augment(patch: &Patch, ops: &[AugmentOp]) -> Result<Patch> {
    ops.iter().try_fold(patch.clone(), |p, &op| apply_op(&p, op))
}

/// Ranges for randomly drawn augmentations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub rotate: bool,
    pub flip_probability: f64,
    /// Shifts are drawn uniformly from `-max_shift..=max_shift` per axis.
    pub max_shift: u32,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotate: true,
            flip_probability: 0.5,
            max_shift: 32,
        }
    }
}

/// Draws rotation, flips and shift from a seeded RNG. The returned list is
/// exactly what [`augment`] records.
pub fn random_ops(cfg: &AugmentConfig, seed: u64) -> Vec<AugmentOp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ops = Vec::new();
    if cfg.rotate {
        let turns = rng.random_range(0..4u8);
        if turns > 0 {
            ops.push(AugmentOp::Rotate90 { turns });
        }
    }
    if rng.random_bool(cfg.flip_probability.clamp(0.0, 1.0)) {
        ops.push(AugmentOp::HorizontalFlip);
    }
    if rng.random_bool(cfg.flip_probability.clamp(0.0, 1.0)) {
        ops.push(AugmentOp::VerticalFlip);
    }
    if cfg.max_shift > 0 {
        let m = cfg.max_shift as i32;
        let (dx, dy) = (rng.random_range(-m..=m), rng.random_range(-m..=m));
        if (dx, dy) != (0, 0) {
            ops.push(AugmentOp::Shift { dx, dy });
        }
    }
    ops
}

pub fn augment_random(patch: &Patch, cfg: &AugmentConfig, seed: u64) -> Result<Patch> {
    augment(patch, &random_ops(cfg, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank(w: u32, h: u32) -> (RasterImage, LabelMap) {
        (
            RasterImage::from_fn(w, h, |x, y| [(x % 251) as u8, (y % 241) as u8, 3]).unwrap(),
            LabelMap::new(w, h, vec![0; (w * h) as usize]).unwrap(),
        )
    }

    #[test]
    fn origin_arithmetic() {
        assert_eq!(axis_origins(2048, 512, 512), vec![0, 512, 1024, 1536]);
        assert_eq!(axis_origins(1532, 512, 512), vec![0, 512, 1020]);
        assert_eq!(axis_origins(1024, 512, 256), vec![0, 256, 512]);
        assert_eq!(axis_origins(512, 512, 512), vec![0]);
    }

    #[test]
    fn extraction_counts() {
        let (img, label) = blank(512, 512);
        let set = extract_patches(&img, &label, 512, 512).unwrap();
        assert_eq!(set.patches.len(), 1);
        assert_eq!(set.patches[0].origin, (0, 0));
        let (img, label) = blank(1024, 1024);
        assert_eq!(extract_patches(&img, &label, 512, 256).unwrap().patches.len(), 9);
        let (img, label) = blank(100, 60);
        assert!(matches!(
            extract_patches(&img, &label, 64, 64),
            Err(Error::PatchLargerThanImage { .. })
        ));
        assert!(extract_patches(&img, &label, 32, 0).is_err());
        assert!(extract_patches(&img, &label, 32, 33).is_err());
    }

    #[test]
    fn crops_match_source() {
        let (img, _) = blank(70, 50);
        let label = LabelMap::new(70, 50, (0..3500).map(|i| (i % 34) as u8).collect()).unwrap();
        let set = extract_patches(&img, &label, 20, 15).unwrap();
        for p in &set.patches {
            let (ox, oy) = p.origin;
            assert!(ox + 20 <= 70 && oy + 20 <= 50);
            assert_eq!(p.image.get(3, 5), img.get(ox + 3, oy + 5));
            assert_eq!(p.label.get(19, 19), label.get(ox + 19, oy + 19));
        }
    }

    fn single_pixel_patch(x: u32, y: u32) -> Patch {
        let mut classes = vec![0u8; 32 * 32];
        classes[(y * 32 + x) as usize] = 5;
        Patch {
            origin: (0, 0),
            image: RasterImage::from_fn(32, 32, |px, py| if (px, py) == (x, y) { [255; 3] } else { [9, 9, 9] }).unwrap(),
            label: LabelMap::new(32, 32, classes).unwrap(),
            augmentation: vec![],
        }
    }

    #[test]
    fn shift_moves_content() {
        let p = single_pixel_patch(10, 10);
        let s = augment(&p, &[AugmentOp::Shift { dx: 5, dy: 0 }]).unwrap();
        assert_eq!(s.label.get(15, 10), 5);
        assert_eq!(s.label.classes().iter().filter(|&&c| c != 0).count(), 1);
        assert_eq!(s.image.get(15, 10), [255; 3]);
        assert_eq!(s.image.get(0, 0), [0, 0, 0]);
        assert_eq!(s.augmentation, vec![AugmentOp::Shift { dx: 5, dy: 0 }]);
        assert!(matches!(
            augment(&p, &[AugmentOp::Shift { dx: 32, dy: 0 }]),
            Err(Error::ShiftTooLarge { .. })
        ));
    }

    #[test]
    fn rotation_direction() {
        let p = single_pixel_patch(31, 0);
        // top-right corner goes to top-left under a counter-clockwise turn
        let r = augment(&p, &[AugmentOp::Rotate90 { turns: 1 }]).unwrap();
        assert_eq!(r.label.get(0, 0), 5);
    }

    #[test]
    fn group_identities() {
        let p = single_pixel_patch(3, 7);
        let r4 = augment(&p, &[AugmentOp::Rotate90 { turns: 1 }; 4]).unwrap();
        assert_eq!((r4.image.clone(), r4.label.clone()), (p.image.clone(), p.label.clone()));
        let f2 = augment(&p, &[AugmentOp::HorizontalFlip; 2]).unwrap();
        assert_eq!(f2.image, p.image);
        let v2 = augment(&p, &[AugmentOp::VerticalFlip; 2]).unwrap();
        assert_eq!(v2.label, p.label);
    }

    #[test]
    fn non_square_rotation() {
        let img = RasterImage::from_fn(4, 2, |x, y| [x as u8, y as u8, 0]).unwrap();
        let label = LabelMap::new(4, 2, vec![1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        let p = Patch {
            origin: (0, 0),
            image: img,
            label,
            augmentation: vec![],
        };
        let r = augment(&p, &[AugmentOp::Rotate90 { turns: 1 }]).unwrap();
        assert_eq!(r.label.dimensions(), (2, 4));
        assert_eq!(r.label.classes(), &[4, 8, 3, 7, 2, 6, 1, 5]);
    }

    #[test]
    fn random_ops_are_seeded() {
        let cfg = AugmentConfig::default();
        assert_eq!(random_ops(&cfg, 9), random_ops(&cfg, 9));
        let distinct: std::collections::HashSet<String> =
            (0..50).map(|s| format!("{:?}", random_ops(&cfg, s))).collect();
        assert!(distinct.len() > 10);
        let p = single_pixel_patch(16, 16);
        let a = augment_random(&p, &cfg, 4).unwrap();
        assert_eq!(a.augmentation, random_ops(&cfg, 4));
    }
}
