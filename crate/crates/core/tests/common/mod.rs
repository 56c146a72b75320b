//! Independent reference implementations used as test oracles. None of these
//! call into the code paths they check.

#![allow(dead_code)]

use gramseg::imaging::{BinaryMask, Histogram256, RasterImage, Rgb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Otsu by exhaustive scan with exact rational comparison. Returns the
/// smallest maximizing threshold and sigma_b² from the textbook
/// ω0·ω1·(μ0 − μ1)² formula evaluated on float class statistics.
pub fn otsu_brute_force(bins: &[u64; 256]) -> (u8, f64) {
    let total: u64 = bins.iter().sum();
    // (numerator, denominator) of sigma_b2 * total², as exact integers
    let score = |t: usize| -> (u128, u128) {
        let n0: u64 = bins[..=t].iter().sum();
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            return (0, 1);
        }
        let s0: u64 = bins[..=t].iter().enumerate().map(|(v, &c)| v as u64 * c).sum();
        let s1: u64 = bins[t + 1..].iter().enumerate().map(|(v, &c)| (v + t + 1) as u64 * c).sum();
        let d = (n1 as i128 * s0 as i128 - n0 as i128 * s1 as i128).unsigned_abs();
        (d * d, n0 as u128 * n1 as u128)
    };
    let mut best_t = 0;
    let mut best = score(0);
    for t in 1..256 {
        let s = score(t);
        let lhs = s.0.checked_mul(best.1).expect("oracle overflow");
        let rhs = best.0.checked_mul(s.1).expect("oracle overflow");
        if lhs > rhs {
            best = s;
            best_t = t;
        }
    }
    (best_t as u8, sigma_b2_float(bins, best_t))
}

pub fn sigma_b2_float(bins: &[u64; 256], t: usize) -> f64 {
    let total: f64 = bins.iter().map(|&c| c as f64).sum();
    let w0: f64 = bins[..=t].iter().map(|&c| c as f64).sum::<f64>() / total;
    let w1 = 1.0 - w0;
    if bins[..=t].iter().all(|&c| c == 0) || bins[t + 1..].iter().all(|&c| c == 0) {
        return 0.0;
    }
    let m0 = bins[..=t].iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum::<f64>()
        / bins[..=t].iter().map(|&c| c as f64).sum::<f64>();
    let m1 = bins[t + 1..].iter().enumerate().map(|(v, &c)| (v + t + 1) as f64 * c as f64).sum::<f64>()
        / bins[t + 1..].iter().map(|&c| c as f64).sum::<f64>();
    w0 * w1 * (m0 - m1) * (m0 - m1)
}

pub fn random_histogram(rng: &mut ChaCha8Rng) -> Histogram256 {
    let mut bins = [0u64; 256];
    let shape = rng.random_range(0..4);
    match shape {
        // sparse spikes
        0 => {
            for _ in 0..rng.random_range(1..6) {
                bins[rng.random_range(0..256)] += rng.random_range(1..400);
            }
        }
        // dense noise
        1 => {
            for b in bins.iter_mut() {
                *b = rng.random_range(0..300);
            }
        }
        // bimodal bumps
        2 => {
            for _ in 0..2 {
                let c: i32 = rng.random_range(20..236);
                let w: i32 = rng.random_range(2..20);
                let h = rng.random_range(10..300);
                for v in (c - w).max(0)..=(c + w).min(255) {
                    bins[v as usize] += h;
                }
            }
        }
        // random support with gaps
        _ => {
            for b in bins.iter_mut() {
                if rng.random_bool(0.2) {
                    *b = rng.random_range(1..400);
                }
            }
        }
    }
    if bins.iter().all(|&b| b == 0) {
        bins[rng.random_range(0..256)] = 1;
    }
    Histogram256::from_bins(bins)
}

fn wcss_of_partition(points: &[[f64; 3]], labels: &[usize], k: usize) -> Option<f64> {
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&[f64; 3]> = points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
        if members.is_empty() {
            return None;
        }
        let n = members.len() as f64;
        let mean = [0, 1, 2].map(|ch| members.iter().map(|p| p[ch]).sum::<f64>() / n);
        total += members
            .iter()
            .map(|p| (0..3).map(|ch| (p[ch] - mean[ch]).powi(2)).sum::<f64>())
            .sum::<f64>();
    }
    Some(total)
}

/// Minimal WCSS over every partition of `points` into exactly `k` non-empty
/// groups, by enumerating all k^n labelings.
pub fn brute_force_min_wcss(points: &[Rgb], k: usize) -> f64 {
    let pts: Vec<[f64; 3]> = points.iter().map(|p| p.map(|c| c as f64)).collect();
    let n = pts.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        if let Some(w) = wcss_of_partition(&pts, &labels, k) {
            best = best.min(w);
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

pub fn row_image(points: &[Rgb]) -> RasterImage {
    RasterImage::new(points.len() as u32, 1, points.to_vec()).unwrap()
}

/// Dilation straight from the set definition.
pub fn dilate_oracle(m: &BinaryMask, offsets: &[(i32, i32)]) -> BinaryMask {
    BinaryMask::from_fn(m.width(), m.height(), |x, y| {
        offsets
            .iter()
            .any(|&(dx, dy)| m.get_or_background(x as i64 - dx as i64, y as i64 - dy as i64))
    })
    .unwrap()
}

/// Erosion straight from the set definition.
pub fn erode_oracle(m: &BinaryMask, offsets: &[(i32, i32)]) -> BinaryMask {
    BinaryMask::from_fn(m.width(), m.height(), |x, y| {
        offsets
            .iter()
            .all(|&(dx, dy)| m.get_or_background(x as i64 + dx as i64, y as i64 + dy as i64))
    })
    .unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BinaryMask {
    let density = rng.random_range(0.05..0.9);
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density)).unwrap()
}

/// Embeds `m` in a background border of `margin` pixels.
pub fn pad(m: &BinaryMask, margin: u32) -> BinaryMask {
    BinaryMask::from_fn(m.width() + 2 * margin, m.height() + 2 * margin, |x, y| {
        m.get_or_background(x as i64 - margin as i64, y as i64 - margin as i64)
    })
    .unwrap()
}

pub fn unpad(m: &BinaryMask, margin: u32) -> BinaryMask {
    BinaryMask::from_fn(m.width() - 2 * margin, m.height() - 2 * margin, |x, y| {
        m.get(x + margin, y + margin)
    })
    .unwrap()
}
