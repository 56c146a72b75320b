//! Binary morphology with discrete disk structuring elements.
//!
//! Both dilation and erosion read pixels outside the raster as background.
//! A disk decomposes into one horizontal run per row offset, so each operator
//! is evaluated with per-row prefix sums in O(diameter) per pixel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::BinaryMask;

/// Disk of integer offsets `(dx, dy)` with `dx² + dy² <= r²`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuringElement {
    diameter: u32,
    offsets: Vec<(i32, i32)>,
    /// half-width of the run at each dy in `-r..=r`
    runs: Vec<i32>,
}

impl StructuringElement {
    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    pub fn radius(&self) -> i32 {
        (self.diameter as i32 - 1) / 2
    }

    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    pub fn contains(&self, dx: i32, dy: i32) -> bool {
        let r = self.radius();
        dy.abs() <= r && dx.abs() <= self.runs[(dy + r) as usize]
    }
}

pub fn disk_kernel(diameter: i64) -> Result<StructuringElement> {
    if diameter < 1 || diameter % 2 == 0 || diameter > i32::MAX as i64 {
        return Err(Error::EvenOrNonPositiveDiameter(diameter));
    }
    let r = ((diameter - 1) / 2) as i32;
    let r2 = r as i64 * r as i64;
    let mut offsets = Vec::new();
    let mut runs = Vec::with_capacity(2 * r as usize + 1);
    for dy in -r..=r {
        let mut half = 0;
        for dx in -r..=r {
            if (dx as i64).pow(2) + (dy as i64).pow(2) <= r2 {
                offsets.push((dx, dy));
                half = half.max(dx);
            }
        }
        runs.push(half);
    }
    Ok(StructuringElement {
        diameter: diameter as u32,
        offsets,
        runs,
    })
}

/// Which cleanup operator the pipeline applies after segmentation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cleanup {
    #[default]
    Close,
    Open,
    None,
}

fn prefix_rows(m: &BinaryMask) -> Vec<Vec<u32>> {
    let w = m.width() as usize;
    m.bits()
        .par_chunks(w)
        .map(|row| {
            let mut p = Vec::with_capacity(w + 1);
            p.push(0);
            let mut acc = 0;
            for &b in row {
                acc += b as u32;
                p.push(acc);
            }
            p
        })
        .collect()
}

fn run_op(m: &BinaryMask, se: &StructuringElement, erode: bool) -> BinaryMask {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let r = se.radius() as i64;
    let prefix = prefix_rows(m);
    let bits: Vec<bool> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let prefix = &prefix;
            (0..w).map(move |x| {
                for dy in -r..=r {
                    let half = se.runs[(dy + r) as usize] as i64;
                    // erosion probes (x+dx, y+dy); dilation probes (x-dx, y-dy),
                    // which is the same run for a point-symmetric disk
                    let sy = if erode { y + dy } else { y - dy };
                    let (lo, hi) = (x - half, x + half);
                    if erode {
                        if sy < 0 || sy >= h || lo < 0 || hi >= w {
                            return false;
                        }
                        let row = &prefix[sy as usize];
                        if row[hi as usize + 1] - row[lo as usize] != (hi - lo + 1) as u32 {
                            return false;
                        }
                    } else {
                        if sy < 0 || sy >= h {
                            continue;
                        }
                        let row = &prefix[sy as usize];
                        let (lo, hi) = (lo.max(0) as usize, hi.min(w - 1) as usize);
                        if row[hi + 1] > row[lo] {
                            return true;
                        }
                    }
                }
                erode
            })
        })
        .collect();
    BinaryMask::new(m.width(), m.height(), bits).expect("same dimensions")
}

pub fn dilate(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    run_op(m, se, false)
}

pub fn erode(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    run_op(m, se, true)
}

/// Dilation followed by erosion. The intermediate dilation is kept on a
/// canvas grown by the kernel radius, so foreground touching the raster edge
/// is not eroded away and `m ⊆ close(m)` holds everywhere.
pub fn close(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let r = se.radius() as u32;
    if r == 0 {
        return m.clone();
    }
    let (w, h) = m.dimensions();
    let padded = BinaryMask::from_fn(w + 2 * r, h + 2 * r, |x, y| {
        m.get_or_background(x as i64 - r as i64, y as i64 - r as i64)
    })
    .expect("non-empty canvas");
    let closed = erode(&dilate(&padded, se), se);
    BinaryMask::from_fn(w, h, |x, y| closed.get(x + r, y + r)).expect("same dimensions")
}

pub fn open(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    dilate(&erode(m, se), se)
}

pub fn apply_cleanup(m: &BinaryMask, cleanup: Cleanup, se: &StructuringElement) -> BinaryMask {
    match cleanup {
        Cleanup::Close => close(m, se),
        Cleanup::Open => open(m, se),
        Cleanup::None => m.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice_count(r: i64) -> usize {
        let mut n = 0;
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn disk_sizes() {
        assert_eq!(disk_kernel(1).unwrap().offsets(), &[(0, 0)]);
        let d3 = disk_kernel(3).unwrap();
        assert_eq!(d3.offsets().len(), 5);
        assert!(!d3.contains(1, 1));
        assert_eq!(disk_kernel(13).unwrap().offsets().len(), 113);
        for d in (1..40).step_by(2) {
            assert_eq!(disk_kernel(d).unwrap().offsets().len(), lattice_count((d - 1) / 2));
        }
        for bad in [0, 2, -3, 14] {
            assert!(matches!(disk_kernel(bad), Err(Error::EvenOrNonPositiveDiameter(_))));
        }
    }

    #[test]
    fn disk_is_point_symmetric() {
        for d in [1, 3, 5, 9, 13, 21] {
            let se = disk_kernel(d).unwrap();
            for &(dx, dy) in se.offsets() {
                assert!(se.contains(-dx, -dy));
            }
        }
    }

    fn center_pixel(n: u32) -> BinaryMask {
        BinaryMask::from_fn(n, n, |x, y| x == n / 2 && y == n / 2).unwrap()
    }

    fn plus(n: u32) -> BinaryMask {
        let c = (n / 2) as i64;
        BinaryMask::from_fn(n, n, |x, y| (x as i64 - c).abs() + (y as i64 - c).abs() <= 1).unwrap()
    }

    #[test]
    fn dilation_examples() {
        let d3 = disk_kernel(3).unwrap();
        let empty = BinaryMask::empty(6, 4).unwrap();
        assert_eq!(dilate(&empty, &d3), empty);
        assert_eq!(dilate(&center_pixel(5), &d3), plus(5));
        let m = BinaryMask::from_fn(7, 5, |x, y| (x * 3 + y) % 4 == 0).unwrap();
        assert_eq!(dilate(&m, &disk_kernel(1).unwrap()), m);
    }

    #[test]
    fn erosion_examples() {
        let d3 = disk_kernel(3).unwrap();
        let full = BinaryMask::full(5, 5).unwrap();
        assert_eq!(erode(&full, &disk_kernel(1).unwrap()), full);
        assert_eq!(erode(&plus(5), &d3), center_pixel(5));
        // border reads as background
        let eroded_full = erode(&full, &d3);
        assert!(!eroded_full.get(0, 2) && eroded_full.get(1, 1));
    }

    #[test]
    fn closing_fills_hole() {
        let mut m = BinaryMask::from_fn(20, 20, |x, y| (4..16).contains(&x) && (4..16).contains(&y)).unwrap();
        m.set(9, 9, false);
        let closed = close(&m, &disk_kernel(3).unwrap());
        assert!(closed.get(9, 9));
        let empty = BinaryMask::empty(8, 8).unwrap();
        assert_eq!(close(&empty, &disk_kernel(3).unwrap()), empty);
    }

    #[test]
    fn closing_bridges_gap() {
        // two blobs separated by a 2-pixel gap, narrower than the 5-disk
        let m = BinaryMask::from_fn(30, 20, |x, y| {
            (5..20).contains(&y) && ((3..12).contains(&x) || (14..26).contains(&x))
        })
        .unwrap();
        let closed = close(&m, &disk_kernel(5).unwrap());
        assert!(closed.get(12, 10) && closed.get(13, 10));
    }

    #[test]
    fn opening_examples() {
        let d3 = disk_kernel(3).unwrap();
        assert_eq!(open(&center_pixel(7), &d3).count_ones(), 0);
        let m = BinaryMask::from_fn(9, 6, |x, y| (x + y) % 3 != 0).unwrap();
        assert_eq!(open(&m, &disk_kernel(1).unwrap()), m);
        let blob = BinaryMask::from_fn(64, 64, |x, y| {
            let (dx, dy) = (x as i64 - 32, y as i64 - 32);
            dx * dx + dy * dy <= 20 * 20
        })
        .unwrap();
        let opened = open(&blob, &d3);
        assert!(opened.is_subset_of(&blob));
        assert!(opened.count_ones() as f64 >= 0.97 * blob.count_ones() as f64);
        assert!(opened.get(32, 32));
    }
}
