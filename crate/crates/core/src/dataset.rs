//! Discovery of a DIBaS-style directory tree and stratified splitting.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging;
use crate::species::{self, SPECIES_COUNT};

pub const IMAGES_PER_SPECIES: usize = 20;
pub const DIBAS_DIMENSIONS: (u32, u32) = (2048, 1532);
pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.6, 0.2, 0.2);

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "tif", "tiff"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub species_id: u8,
    /// Name of the species directory, as found on disk.
    pub species_name: String,
    /// Relative to the manifest root.
    pub image_path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub split: Option<Split>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SpeciesSummary {
    pub species_id: u8,
    pub species_name: String,
    pub image_count: usize,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        crate::pipeline::write_atomic(path.as_ref(), text.as_bytes())
    }

    pub fn absolute_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.image_path)
    }

    /// Species present, ordered by id.
    pub fn species(&self) -> Vec<SpeciesSummary> {
        let mut map: BTreeMap<u8, SpeciesSummary> = BTreeMap::new();
        for e in &self.entries {
            map.entry(e.species_id)
                .or_insert_with(|| SpeciesSummary {
                    species_id: e.species_id,
                    species_name: e.species_name.clone(),
                    image_count: 0,
                })
                .image_count += 1;
        }
        map.into_values().collect()
    }

    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut counts = BTreeMap::new();
        for s in self.entries.iter().filter_map(|e| e.split) {
            *counts.entry(s).or_insert(0) += 1;
        }
        counts
    }
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn collect_images(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut children: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    children.sort();
    for child in children {
        if child.is_dir() {
            collect_images(&child, out)?;
        } else if is_image_file(&child) {
            out.push(child);
        }
    }
    Ok(())
}

/// Scans `root` for one subdirectory per species. Species ids follow the
/// canonical 33-species order when every directory name matches a known
/// species; otherwise they follow sorted directory order. Count and
/// dimension irregularities become warnings.
pub fn ingest_dibas(root: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::RootNotFound(root.into()));
    }
    let mut warnings = Vec::new();
    let mut dirs: Vec<(String, PathBuf)> = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.is_dir() {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            dirs.push((name, path));
        } else if is_image_file(&path) {
            warnings.push(format!("ignoring image outside a species directory: {}", path.display()));
        }
    }
    dirs.sort();

    let mut species_dirs = Vec::new();
    for (name, path) in dirs {
        let mut images = Vec::new();
        collect_images(&path, &mut images)?;
        if !images.is_empty() {
            species_dirs.push((name, images));
        }
    }
    if species_dirs.is_empty() {
        return Err(Error::NoImagesFound(root.into()));
    }
    if species_dirs.len() > SPECIES_COUNT {
        return Err(Error::InvalidParameter(format!(
            "{} species directories found, at most {SPECIES_COUNT} supported",
            species_dirs.len()
        )));
    }

    let canonical: Option<Vec<u8>> = species_dirs
        .iter()
        .map(|(name, _)| species::species_index(name))
        .collect();
    let ids = match canonical {
        Some(ids) if {
            let mut sorted = ids.clone();
            sorted.sort();
            sorted.dedup();
            sorted.len() == ids.len()
        } =>
        {
            ids
        }
        _ => {
            warnings.push("species directory names do not all match the known species list; ids follow sorted directory order".into());
            (1..=species_dirs.len() as u8).collect()
        }
    };

    let mut entries = Vec::new();
    for ((name, images), id) in species_dirs.into_iter().zip(ids) {
        let mut accepted = 0;
        let mut off_size = 0;
        for path in images {
            match imaging::probe_dimensions(&path) {
                Ok((width, height)) => {
                    accepted += 1;
                    if (width, height) != DIBAS_DIMENSIONS {
                        off_size += 1;
                    }
                    entries.push(ManifestEntry {
                        species_id: id,
                        species_name: name.clone(),
                        image_path: path.strip_prefix(root).expect("under root").to_path_buf(),
                        width,
                        height,
                        split: None,
                    });
                }
                Err(e) => warnings.push(format!("skipping undecodable image: {e}")),
            }
        }
        if accepted != IMAGES_PER_SPECIES {
            warnings.push(format!(
                "species {name}: {accepted} images, expected {IMAGES_PER_SPECIES}"
            ));
        }
        if off_size > 0 {
            warnings.push(format!(
                "species {name}: {off_size} images not {}x{}",
                DIBAS_DIMENSIONS.0, DIBAS_DIMENSIONS.1
            ));
        }
    }
    if entries.is_empty() {
        return Err(Error::NoImagesFound(root.into()));
    }
    entries.sort_by(|a, b| (a.species_id, &a.image_path).cmp(&(b.species_id, &b.image_path)));
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        entries,
        warnings,
    })
}

fn species_rng(seed: u64, species_id: u8) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (species_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Stratified split: each species is shuffled independently and cut into
/// train/val/test, with val and test rounded down so remainders go to train.
pub fn split_dataset(manifest: &DatasetManifest, ratios: (f64, f64, f64), seed: u64) -> Result<DatasetManifest> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| r.is_nan() || *r < 0.0) || ((tr + va + te) - 1.0).abs() > 1e-6 {
        return Err(Error::BadRatios(ratios));
    }
    let mut out = manifest.clone();
    let mut by_species: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, e) in out.entries.iter().enumerate() {
        by_species.entry(e.species_id).or_default().push(i);
    }
    for (species_id, mut idx) in by_species {
        idx.sort_by(|&a, &b| out.entries[a].image_path.cmp(&out.entries[b].image_path));
        idx.shuffle(&mut species_rng(seed, species_id));
        let n = idx.len() as f64;
        let n_val = (n * va + 1e-9).floor() as usize;
        let n_test = (n * te + 1e-9).floor() as usize;
        let n_train = idx.len() - n_val - n_test;
        for (pos, &i) in idx.iter().enumerate() {
            out.entries[i].split = Some(if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            });
        }
    }
    Ok(out)
}
