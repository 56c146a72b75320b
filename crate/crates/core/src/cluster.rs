//! k-means clustering of RGB pixels (Lloyd iterations from a seeded
//! k-means++ start) and conversion of cluster assignments to masks.
//!
//! The pixels are first collapsed into a palette of distinct colors with
//! multiplicities. Lloyd's algorithm on the weighted palette is the same
//! optimization as on the raw pixels, but centroid sums become exact integer
//! sums and the per-iteration cost scales with the palette size.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, RasterImage, Rgb};

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 0.5;

pub type Centroid = [f64; 3];

/// Result of clustering an image. Centroids are ordered by ascending luma, so
/// index 0 is always the darkest cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    pub width: u32,
    pub height: u32,
    pub centroids: Vec<Centroid>,
    /// Cluster index of every pixel, row-major.
    pub assignment: Vec<u32>,
    pub wcss: f64,
    pub iterations: usize,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroid_lumas(&self) -> Vec<f64> {
        self.centroids.iter().map(centroid_luma).collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignment {
            sizes[a as usize] += 1;
        }
        sizes
    }
}

pub fn centroid_luma(c: &Centroid) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

#[inline]
fn dist2(c: &Centroid, p: Rgb) -> f64 {
    let dr = c[0] - p[0] as f64;
    let dg = c[1] - p[1] as f64;
    let db = c[2] - p[2] as f64;
    dr * dr + dg * dg + db * db
}

/// Index of the nearest centroid, lowest index on ties.
#[inline]
fn nearest(centroids: &[Centroid], p: Rgb) -> usize {
    let mut best = 0;
    let mut best_d = dist2(&centroids[0], p);
    for (i, c) in centroids.iter().enumerate().skip(1) {
        let d = dist2(c, p);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

struct Palette {
    colors: Vec<Rgb>,
    counts: Vec<u64>,
    /// palette index of every pixel
    index: Vec<u32>,
}

impl Palette {
    fn build(img: &RasterImage) -> Self {
        let mut lookup: HashMap<Rgb, u32> = HashMap::new();
        let mut colors = Vec::new();
        let mut counts = Vec::new();
        let index = img
            .pixels()
            .iter()
            .map(|&p| {
                let next = colors.len() as u32;
                let i = *lookup.entry(p).or_insert_with(|| {
                    colors.push(p);
                    counts.push(0);
                    next
                });
                counts[i as usize] += 1;
                i
            })
            .collect();
        Self {
            colors,
            counts,
            index,
        }
    }

    fn assign(&self, centroids: &[Centroid]) -> Vec<usize> {
        self.colors.par_iter().map(|&c| nearest(centroids, c)).collect()
    }

    fn wcss(&self, centroids: &[Centroid], assign: &[usize]) -> f64 {
        self.colors
            .iter()
            .zip(&self.counts)
            .zip(assign)
            .map(|((&c, &n), &a)| n as f64 * dist2(&centroids[a], c))
            .sum()
    }

    /// Exact means of each cluster. Clusters without members keep their
    /// previous centroid.
    fn means(&self, assign: &[usize], previous: &[Centroid]) -> Vec<Centroid> {
        let k = previous.len();
        let mut sums = vec![[0u64; 3]; k];
        let mut sizes = vec![0u64; k];
        for ((&c, &n), &a) in self.colors.iter().zip(&self.counts).zip(assign) {
            sizes[a] += n;
            for ch in 0..3 {
                sums[a][ch] += n * c[ch] as u64;
            }
        }
        (0..k)
            .map(|j| {
                if sizes[j] == 0 {
                    previous[j]
                } else {
                    let n = sizes[j] as f64;
                    [sums[j][0] as f64 / n, sums[j][1] as f64 / n, sums[j][2] as f64 / n]
                }
            })
            .collect()
    }

    fn seed_plus_plus(&self, k: usize, rng: &mut ChaCha8Rng) -> Vec<Centroid> {
        let total: u64 = self.counts.iter().sum();
        let mut pick = rng.random_range(0..total);
        let mut first = 0;
        for (i, &n) in self.counts.iter().enumerate() {
            if pick < n {
                first = i;
                break;
            }
            pick -= n;
        }
        let to_centroid = |c: Rgb| [c[0] as f64, c[1] as f64, c[2] as f64];
        let mut centroids = vec![to_centroid(self.colors[first])];
        let mut d2: Vec<f64> = self
            .colors
            .iter()
            .map(|&c| dist2(&centroids[0], c))
            .collect();
        while centroids.len() < k {
            let weights: Vec<f64> = d2.iter().zip(&self.counts).map(|(&d, &n)| d * n as f64).collect();
            let total: f64 = weights.iter().sum();
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in weights.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                chosen = Some(i);
                if acc > target {
                    break;
                }
            }
            // k <= distinct colors guarantees some color at positive distance
            let chosen = chosen.expect("positive k-means++ weight");
            let c = to_centroid(self.colors[chosen]);
            for (d, &col) in d2.iter_mut().zip(&self.colors) {
                *d = d.min(dist2(&c, col));
            }
            centroids.push(c);
        }
        centroids
    }

    /// Moves each empty cluster onto the color farthest from its own
    /// centroid, and hands that color to the reseeded cluster.
    fn reseed_empty(&self, centroids: &mut [Centroid], assign: &mut [usize]) {
        let k = centroids.len();
        // each pass strictly lowers the WCSS; the bound only guards float oddities
        for _ in 0..(k * k + 1) {
            let mut sizes = vec![0u64; k];
            for (&a, &n) in assign.iter().zip(&self.counts) {
                sizes[a] += n;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                return;
            };
            let mut far = 0;
            let mut far_d = -1.0;
            for (i, (&c, &a)) in self.colors.iter().zip(assign.iter()).enumerate() {
                let d = dist2(&centroids[a], c);
                if d > far_d {
                    far = i;
                    far_d = d;
                }
            }
            if far_d <= 0.0 {
                return;
            }
            let c = self.colors[far];
            centroids[empty] = [c[0] as f64, c[1] as f64, c[2] as f64];
            assign[far] = empty;
        }
    }
}

/// Lloyd's k-means over RGB pixels.
#[derive(Clone, Debug)]
pub struct KMeans {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl KMeans {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            seed: 0,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn fit(&self, img: &RasterImage) -> Result<ClusterModel> {
        self.fit_traced(img).map(|(model, _)| model)
    }

    /// Like [`fit`](Self::fit), also returning the WCSS observed after every
    /// assignment step. The last entry is the WCSS of the returned model.
    pub fn fit_traced(&self, img: &RasterImage) -> Result<(ClusterModel, Vec<f64>)> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::InvalidParameter("tol must be non-negative".into()));
        }
        let palette = Palette::build(img);
        if palette.colors.len() < self.k {
            return Err(Error::TooFewDistinctColors {
                k: self.k,
                distinct: palette.colors.len(),
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut centroids = palette.seed_plus_plus(self.k, &mut rng);
        let mut trace = Vec::new();
        let mut iterations = 0;
        while iterations < self.max_iter {
            iterations += 1;
            let mut assign = palette.assign(&centroids);
            palette.reseed_empty(&mut centroids, &mut assign);
            trace.push(palette.wcss(&centroids, &assign));
            let updated = palette.means(&assign, &centroids);
            let shift = centroids
                .iter()
                .zip(&updated)
                .map(|(a, b)| {
                    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
                    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
                })
                .fold(0.0, f64::max);
            centroids = updated;
            if shift < self.tol {
                break;
            }
        }

        centroids.sort_by(|a, b| {
            centroid_luma(a)
                .total_cmp(&centroid_luma(b))
                .then(a[0].total_cmp(&b[0]))
                .then(a[1].total_cmp(&b[1]))
                .then(a[2].total_cmp(&b[2]))
        });
        let assign = palette.assign(&centroids);
        let wcss = palette.wcss(&centroids, &assign);
        trace.push(wcss);

        let assignment = palette.index.iter().map(|&i| assign[i as usize] as u32).collect();
        Ok((
            ClusterModel {
                width: img.width(),
                height: img.height(),
                centroids,
                assignment,
                wcss,
                iterations,
            },
            trace,
        ))
    }
}

pub fn kmeans_rgb(img: &RasterImage, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<ClusterModel> {
    KMeans {
        k,
        seed,
        max_iter,
        tol,
    }
    .fit(img)
}

/// How the bacteria cluster(s) are picked among the k clusters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSelection {
    /// The single cluster with the lowest-luma centroid.
    #[default]
    Darkest,
    /// An explicit set of cluster indices (indices follow luma order).
    Manual(BTreeSet<usize>),
}

pub fn select_foreground_clusters(model: &ClusterModel, strategy: &ClusterSelection) -> Result<BTreeSet<usize>> {
    match strategy {
        ClusterSelection::Darkest => {
            let lumas = model.centroid_lumas();
            let mut best = 0;
            for (i, &l) in lumas.iter().enumerate() {
                if l < lumas[best] {
                    best = i;
                }
            }
            Ok(BTreeSet::from([best]))
        }
        ClusterSelection::Manual(set) => {
            if let Some(&bad) = set.iter().find(|&&i| i >= model.k()) {
                return Err(Error::InvalidClusterIndex {
                    index: bad,
                    k: model.k(),
                });
            }
            Ok(set.clone())
        }
    }
}

pub fn assignment_to_mask(model: &ClusterModel, fg: &BTreeSet<usize>) -> Result<BinaryMask> {
    if fg.is_empty() {
        return Err(Error::EmptyForeground);
    }
    if let Some(&bad) = fg.iter().find(|&&i| i >= model.k()) {
        return Err(Error::InvalidClusterIndex {
            index: bad,
            k: model.k(),
        });
    }
    let mut lut = vec![false; model.k()];
    for &i in fg {
        lut[i] = true;
    }
    BinaryMask::new(
        model.width,
        model.height,
        model.assignment.iter().map(|&a| lut[a as usize]).collect(),
    )
}

/// Sum of squared RGB distances from each pixel to its assigned centroid.
pub fn wcss_of(img: &RasterImage, centroids: &[Centroid], assignment: &[u32]) -> f64 {
    img.pixels()
        .iter()
        .zip(assignment)
        .map(|(&p, &a)| dist2(&centroids[a as usize], p))
        .sum()
}
