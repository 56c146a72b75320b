//! The labeling recipe: segment (k-means or Otsu), clean up with a disk
//! kernel, export as a label map. Also per-species configuration files and
//! batch annotation of a whole manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{self, Centroid, ClusterSelection, KMeans};
use crate::dataset::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::imaging::{self, BinaryMask, RasterImage};
use crate::label::{LabelMap, MAX_CLASS};
use crate::morphology::{self, Cleanup};
use crate::species;
use crate::threshold::{self, OtsuResult, Polarity};

pub const SCHEMA_VERSION: u32 = 1;

fn default_max_iter() -> usize {
    cluster::DEFAULT_MAX_ITER
}

fn default_tol() -> f64 {
    cluster::DEFAULT_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Kmeans {
        k: usize,
        #[serde(default)]
        foreground: ClusterSelection,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    Otsu {
        #[serde(default)]
        polarity: Polarity,
    },
}

impl Method {
    pub fn kmeans(k: usize, foreground: ClusterSelection) -> Self {
        Method::Kmeans {
            k,
            foreground,
            max_iter: cluster::DEFAULT_MAX_ITER,
            tol: cluster::DEFAULT_TOL,
        }
    }

    pub fn otsu(polarity: Polarity) -> Self {
        Method::Otsu { polarity }
    }
}

/// The operator's recipe for one species.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeciesConfig {
    pub species_id: u8,
    pub method: Method,
    #[serde(default)]
    pub cleanup: Cleanup,
    pub kernel_diameter: u32,
    #[serde(default)]
    pub seed: u64,
}

impl SpeciesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.species_id == 0 || self.species_id > MAX_CLASS {
            return Err(Error::InvalidSpecies(self.species_id as u32));
        }
        if self.kernel_diameter.is_multiple_of(2) {
            return Err(Error::EvenOrNonPositiveDiameter(self.kernel_diameter as i64));
        }
        if let Method::Kmeans {
            k,
            foreground,
            max_iter,
            tol,
        } = &self.method
        {
            if !matches!(k, 2 | 3) {
                return Err(Error::InvalidParameter(format!("k must be 2 or 3, got {k}")));
            }
            if *max_iter == 0 || tol.is_nan() || *tol < 0.0 {
                return Err(Error::InvalidParameter("max_iter must be >= 1 and tol >= 0".into()));
            }
            if let ClusterSelection::Manual(set) = foreground {
                if set.is_empty() {
                    return Err(Error::EmptyForeground);
                }
                if let Some(&bad) = set.iter().find(|&&i| i >= *k) {
                    return Err(Error::InvalidClusterIndex { index: bad, k: *k });
                }
            }
        }
        Ok(())
    }

    /// Starting point offered for a species nobody has configured yet.
    pub fn default_for(species_id: u8) -> Self {
        Self {
            species_id,
            method: Method::kmeans(2, ClusterSelection::Darkest),
            cleanup: Cleanup::Close,
            kernel_diameter: 5,
            seed: 0,
        }
    }
}

/// Intermediate values behind a mask, for a human judging the parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SegmentationStats {
    Kmeans {
        centroids: Vec<Centroid>,
        centroid_lumas: Vec<f64>,
        cluster_sizes: Vec<usize>,
        foreground_clusters: BTreeSet<usize>,
        wcss: f64,
        iterations: usize,
    },
    Otsu(OtsuResult),
}

#[derive(Clone, Debug)]
pub struct Annotation {
    /// Mask straight out of segmentation.
    pub segmented: BinaryMask,
    /// Mask after cleanup.
    pub mask: BinaryMask,
    pub stats: SegmentationStats,
}

pub fn annotate_detailed(img: &RasterImage, cfg: &SpeciesConfig) -> Result<Annotation> {
    cfg.validate()?;
    let (segmented, stats) = match &cfg.method {
        Method::Kmeans {
            k,
            foreground,
            max_iter,
            tol,
        } => {
            let model = KMeans::new(*k).seed(cfg.seed).max_iter(*max_iter).tol(*tol).fit(img)?;
            let fg = cluster::select_foreground_clusters(&model, foreground)?;
            let mask = cluster::assignment_to_mask(&model, &fg)?;
            let stats = SegmentationStats::Kmeans {
                centroid_lumas: model.centroid_lumas(),
                cluster_sizes: model.cluster_sizes(),
                centroids: model.centroids,
                foreground_clusters: fg,
                wcss: model.wcss,
                iterations: model.iterations,
            };
            (mask, stats)
        }
        Method::Otsu { polarity } => {
            let gray = imaging::to_grayscale(img);
            let otsu = threshold::otsu_threshold(&imaging::histogram(&gray))?;
            (
                threshold::apply_threshold(&gray, otsu.threshold, *polarity),
                SegmentationStats::Otsu(otsu),
            )
        }
    };
    let se = morphology::disk_kernel(cfg.kernel_diameter as i64)?;
    let mask = morphology::apply_cleanup(&segmented, cfg.cleanup, &se);
    Ok(Annotation {
        segmented,
        mask,
        stats,
    })
}

pub fn annotate_image(img: &RasterImage, cfg: &SpeciesConfig) -> Result<BinaryMask> {
    annotate_detailed(img, cfg).map(|a| a.mask)
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&parent).map_err(|e| Error::io(&parent, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Writes the mask as an 8-bit grayscale PNG holding 0 and `species_id`.
pub fn export_label(mask: &BinaryMask, species_id: u8, path: impl AsRef<Path>) -> Result<LabelMap> {
    let label = LabelMap::from_mask(mask, species_id)?;
    write_atomic(path.as_ref(), &label.encode_png()?)?;
    Ok(label)
}

/// Label file location, relative to the output directory.
pub fn label_relpath(entry: &ManifestEntry) -> PathBuf {
    entry.image_path.with_extension("png")
}

/// Persisted per-species recipes, keyed by species directory name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub species: BTreeMap<String, SpeciesConfig>,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            species: BTreeMap::new(),
        }
    }
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion(file.schema_version));
        }
        for cfg in file.species.values() {
            cfg.validate()?;
        }
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path.as_ref(), text.as_bytes())
    }

    /// Maps each species in the manifest to its recipe. Names are compared
    /// after normalization; the recipe's species id must agree with the
    /// manifest.
    pub fn resolve(&self, manifest: &DatasetManifest) -> Result<BTreeMap<u8, SpeciesConfig>> {
        let by_name: BTreeMap<String, &SpeciesConfig> = self
            .species
            .iter()
            .map(|(name, cfg)| (species::normalize_name(name), cfg))
            .collect();
        let mut out = BTreeMap::new();
        for s in manifest.species() {
            if let Some(cfg) = by_name.get(&species::normalize_name(&s.species_name)) {
                if cfg.species_id != s.species_id {
                    return Err(Error::InvalidParameter(format!(
                        "config for {} has species_id {}, manifest assigns {}",
                        s.species_name, cfg.species_id, s.species_id
                    )));
                }
                out.insert(s.species_id, (*cfg).clone());
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub image_path: PathBuf,
    pub label_path: PathBuf,
    pub species_id: u8,
    pub foreground_fraction: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub images: Vec<ImageReport>,
    pub failures: usize,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

pub const REPORT_FILE: &str = "report.json";

/// Loads one manifest image, annotates it and writes its label under
/// `out_dir`. Returns the label and the foreground fraction.
pub fn annotate_entry(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    cfg: &SpeciesConfig,
    out_dir: &Path,
) -> Result<(LabelMap, f64)> {
    let img = imaging::load_image(manifest.absolute_path(entry))?;
    let mask = annotate_image(&img, cfg)?;
    let label = export_label(&mask, entry.species_id, out_dir.join(label_relpath(entry)))?;
    Ok((label, mask.foreground_fraction()))
}

/// Annotates every manifest entry (optionally only `only_species`) and writes
/// labels plus `report.json` under `out_dir`. Per-image failures are recorded
/// in the report; a missing recipe aborts before any work.
pub fn batch_annotate(
    manifest: &DatasetManifest,
    configs: &BTreeMap<u8, SpeciesConfig>,
    out_dir: &Path,
    only_species: Option<u8>,
) -> Result<RunReport> {
    let entries: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| only_species.is_none_or(|s| e.species_id == s))
        .collect();
    for e in &entries {
        if !configs.contains_key(&e.species_id) {
            return Err(Error::MissingConfig(e.species_name.clone()));
        }
    }
    for cfg in configs.values() {
        cfg.validate()?;
    }
    let images: Vec<ImageReport> = entries
        .par_iter()
        .map(|entry| {
            let cfg = &configs[&entry.species_id];
            let result = annotate_entry(manifest, entry, cfg, out_dir);
            let (foreground_fraction, error) = match result {
                Ok((_, frac)) => (Some(frac), None),
                Err(e) => {
                    log::error!("{}: {e}", entry.image_path.display());
                    (None, Some(e.to_string()))
                }
            };
            ImageReport {
                image_path: entry.image_path.clone(),
                label_path: label_relpath(entry),
                species_id: entry.species_id,
                foreground_fraction,
                error,
            }
        })
        .collect();
    let failures = images.iter().filter(|r| r.error.is_some()).count();
    let report = RunReport { images, failures };
    write_atomic(&out_dir.join(REPORT_FILE), report.to_json()?.as_bytes())?;
    Ok(report)
}
