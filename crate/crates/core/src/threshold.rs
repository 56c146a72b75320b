//! Otsu's method over a 256-bin histogram, and threshold application.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, GrayImage, Histogram256};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtsuResult {
    /// Bins `0..=threshold` form class 0.
    pub threshold: u8,
    pub sigma_b2: f64,
    pub omega0: f64,
    pub omega1: f64,
    pub mu0: f64,
    pub mu1: f64,
}

/// Which side of the threshold is foreground.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// value <= t
    #[default]
    DarkForeground,
    /// value > t
    BrightForeground,
}

/// Exhaustive search for the threshold maximizing between-class variance.
/// Splits that leave a class empty score 0; ties go to the smallest threshold.
pub fn otsu_threshold(h: &Histogram256) -> Result<OtsuResult> {
    let total = h.total();
    if total == 0 {
        return Err(Error::EmptyHistogram);
    }
    let sum_all: u64 = h.bins().iter().enumerate().map(|(v, &n)| v as u64 * n).sum();
    let n = total as f64;

    let stats = |count0: u64, sum0: u64| {
        let count1 = total - count0;
        let sum1 = sum_all - sum0;
        if count0 == 0 || count1 == 0 {
            let omega0 = count0 as f64 / n;
            let mu = sum_all as f64 / n;
            return (0.0, omega0, 1.0 - omega0, mu, mu);
        }
        let (c0, c1) = (count0 as f64, count1 as f64);
        let omega0 = c0 / n;
        let omega1 = c1 / n;
        let mu0 = sum0 as f64 / c0;
        let mu1 = sum1 as f64 / c1;
        // (mu0 - mu1) = (c1*sum0 - c0*sum1) / (c0*c1), formed from exact integers
        let diff = (count1 as i128 * sum0 as i128 - count0 as i128 * sum1 as i128) as f64 / (c0 * c1);
        (omega0 * omega1 * diff * diff, omega0, omega1, mu0, mu1)
    };

    let mut best = None::<OtsuResult>;
    let (mut count0, mut sum0) = (0u64, 0u64);
    for t in 0..=255usize {
        count0 += h.bins()[t];
        sum0 += t as u64 * h.bins()[t];
        let (sigma_b2, omega0, omega1, mu0, mu1) = stats(count0, sum0);
        if best.is_none_or(|b| sigma_b2 > b.sigma_b2) {
            best = Some(OtsuResult {
                threshold: t as u8,
                sigma_b2,
                omega0,
                omega1,
                mu0,
                mu1,
            });
        }
    }
    Ok(best.expect("256 candidates scanned"))
}

pub fn apply_threshold(g: &GrayImage, t: u8, polarity: Polarity) -> BinaryMask {
    let bits = g
        .values()
        .iter()
        .map(|&v| match polarity {
            Polarity::DarkForeground => v <= t,
            Polarity::BrightForeground => v > t,
        })
        .collect();
    BinaryMask::new(g.width(), g.height(), bits).expect("same dimensions as source")
}
