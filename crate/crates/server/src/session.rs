//! Review session: the dataset, per-species recipes and accepted labels.
//!
//! All methods are blocking; the HTTP layer runs them on the blocking pool.
//! Anything that changes persisted state holds the session lock for its whole
//! duration, so label files and the state document never disagree.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use gramseg::dataset::{self, DatasetManifest, ManifestEntry, Split};
use gramseg::imaging;
use gramseg::pipeline::{self, SegmentationStats, SCHEMA_VERSION};
use gramseg::{LabelMap, Rgb, SpeciesConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ServiceError};

/// Longest side of preview mask and overlay images.
pub const PREVIEW_MAX_DIM: u32 = 1024;
pub const OVERLAY_COLOR: Rgb = [0, 230, 90];
pub const OVERLAY_ALPHA: f64 = 0.45;

/// Persisted session document. It is a superset of the batch config file,
/// so the same file can be handed to `annotate --config`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub schema_version: u32,
    #[serde(default)]
    pub species: BTreeMap<String, SpeciesConfig>,
    /// Accepted images keyed by their path relative to the dataset root.
    #[serde(default)]
    pub progress: BTreeMap<String, AcceptedLabel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptedLabel {
    pub config: SpeciesConfig,
    /// Relative to the labels directory.
    pub label_path: PathBuf,
    pub label_sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpeciesView {
    pub species_id: u8,
    pub species_name: String,
    pub image_count: usize,
    pub accepted: usize,
    pub config: SpeciesConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct ImageView {
    pub image_id: u32,
    pub species_id: u8,
    pub image_path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub split: Option<Split>,
    pub accepted: bool,
}

#[derive(Clone, Debug, Deserialize)]
pub struct ImageRequest {
    pub image_id: u32,
    pub config: SpeciesConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct PreviewStats {
    pub foreground_fraction: f64,
    /// Fraction before morphological cleanup.
    pub segmented_fraction: f64,
    /// SHA-256 of the label PNG that accepting this config would write.
    pub label_sha256: String,
    #[serde(flatten)]
    pub segmentation: SegmentationStats,
}

#[derive(Clone, Debug, Serialize)]
pub struct PreviewResponse {
    pub image_id: u32,
    pub width: u32,
    pub height: u32,
    pub preview_width: u32,
    pub preview_height: u32,
    /// Base64 PNG, 255 = foreground.
    pub mask: String,
    /// Base64 PNG of the image with the mask blended in.
    pub overlay: String,
    pub stats: PreviewStats,
}

#[derive(Clone, Debug, Serialize)]
pub struct AcceptResponse {
    pub image_id: u32,
    pub label_path: PathBuf,
    pub label_sha256: String,
    pub foreground_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpeciesProgress {
    pub species_id: u8,
    pub species_name: String,
    pub accepted: usize,
    pub total: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProgressView {
    pub accepted: usize,
    pub total: usize,
    pub species: Vec<SpeciesProgress>,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct ApplyRequest {
    /// Recipe to store and apply; the stored one (or default) when absent.
    pub config: Option<SpeciesConfig>,
    /// Re-annotate images that were already accepted.
    #[serde(default)]
    pub overwrite_accepted: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ApplyResponse {
    pub species_id: u8,
    pub annotated: Vec<u32>,
    pub skipped: Vec<u32>,
    pub failed: Vec<ApplyFailure>,
    pub accepted: usize,
    pub total: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ApplyFailure {
    pub image_id: u32,
    pub error: String,
}

pub struct Session {
    manifest: DatasetManifest,
    state_path: PathBuf,
    labels_dir: PathBuf,
    state: Mutex<SessionState>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn progress_key(entry: &ManifestEntry) -> String {
    entry.image_path.to_string_lossy().replace('\\', "/")
}

impl Session {
    /// Ingests `root` and restores state from `state_path` if it exists.
    /// Labels go to `labels_dir`, or `labels/` next to the state file.
    pub fn open(root: impl AsRef<Path>, state_path: impl AsRef<Path>, labels_dir: Option<PathBuf>) -> Result<Self> {
        let root = root.as_ref();
        if !root.is_dir() {
            return Err(ServiceError::RootNotFound(root.to_path_buf()));
        }
        let manifest = dataset::ingest_dibas(root)?;
        let state_path = state_path.as_ref().to_path_buf();
        let labels_dir = labels_dir.unwrap_or_else(|| match state_path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.join("labels"),
            _ => PathBuf::from("labels"),
        });
        let mut state = if state_path.exists() {
            let text = std::fs::read_to_string(&state_path).map_err(|e| gramseg::Error::Io {
                path: state_path.clone(),
                source: e,
            })?;
            let state: SessionState = serde_json::from_str(&text).map_err(gramseg::Error::from)?;
            if state.schema_version != SCHEMA_VERSION {
                return Err(gramseg::Error::SchemaVersion(state.schema_version).into());
            }
            state
        } else {
            SessionState {
                schema_version: SCHEMA_VERSION,
                ..SessionState::default()
            }
        };
        for cfg in state.species.values() {
            cfg.validate()?;
        }
        // an accepted image must still have its label on disk
        state.progress.retain(|key, accepted| {
            let present = labels_dir.join(&accepted.label_path).is_file();
            if !present {
                log::warn!("label for {key} is missing, marking it pending");
            }
            present
        });
        let session = Self {
            manifest,
            state_path,
            labels_dir,
            state: Mutex::new(state),
        };
        // configs stored under names that no longer resolve are an error now,
        // not at the first accept
        session.resolved_configs(&session.lock())?;
        Ok(session)
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn labels_dir(&self) -> &Path {
        &self.labels_dir
    }

    pub fn state_path(&self) -> &Path {
        &self.state_path
    }

    pub fn snapshot(&self) -> SessionState {
        self.lock().clone()
    }

    fn lock(&self) -> MutexGuard<'_, SessionState> {
        // a panic while holding the lock leaves the in-memory state at the
        // last persisted point or just past it; keep serving
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn persist(&self, state: &SessionState) -> Result<()> {
        let mut text = serde_json::to_string_pretty(state).map_err(gramseg::Error::from)?;
        text.push('\n');
        pipeline::write_atomic(&self.state_path, text.as_bytes())?;
        Ok(())
    }

    fn resolved_configs(&self, state: &SessionState) -> Result<BTreeMap<u8, SpeciesConfig>> {
        let file = gramseg::ConfigFile {
            schema_version: SCHEMA_VERSION,
            species: state.species.clone(),
        };
        Ok(file.resolve(&self.manifest)?)
    }

    pub fn entry(&self, image_id: u32) -> Result<&ManifestEntry> {
        self.manifest
            .entries
            .get(image_id as usize)
            .ok_or(ServiceError::UnknownImage(image_id))
    }

    fn species_name(&self, species_id: u32) -> Result<String> {
        self.manifest
            .entries
            .iter()
            .find(|e| e.species_id as u32 == species_id)
            .map(|e| e.species_name.clone())
            .ok_or(ServiceError::UnknownSpecies(species_id))
    }

    fn species_entries(&self, species_id: u8) -> impl Iterator<Item = (u32, &ManifestEntry)> {
        self.manifest
            .entries
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.species_id == species_id)
            .map(|(i, e)| (i as u32, e))
    }

    fn check_config(&self, species_id: u8, cfg: &SpeciesConfig) -> Result<()> {
        if cfg.species_id != species_id {
            return Err(ServiceError::InvalidConfig(format!(
                "config is for species {}, image belongs to species {species_id}",
                cfg.species_id
            )));
        }
        cfg.validate()?;
        Ok(())
    }

    pub fn config_for(&self, species_id: u32) -> Result<SpeciesConfig> {
        let name = self.species_name(species_id)?;
        Ok(self
            .lock()
            .species
            .get(&name)
            .cloned()
            .unwrap_or_else(|| SpeciesConfig::default_for(species_id as u8)))
    }

    pub fn species(&self) -> Vec<SpeciesView> {
        let state = self.lock();
        self.manifest
            .species()
            .into_iter()
            .map(|s| {
                let accepted = self
                    .species_entries(s.species_id)
                    .filter(|(_, e)| state.progress.contains_key(&progress_key(e)))
                    .count();
                SpeciesView {
                    config: state
                        .species
                        .get(&s.species_name)
                        .cloned()
                        .unwrap_or_else(|| SpeciesConfig::default_for(s.species_id)),
                    species_id: s.species_id,
                    species_name: s.species_name,
                    image_count: s.image_count,
                    accepted,
                }
            })
            .collect()
    }

    pub fn images(&self, species_id: u32) -> Result<Vec<ImageView>> {
        self.species_name(species_id)?;
        let state = self.lock();
        Ok(self
            .species_entries(species_id as u8)
            .map(|(id, e)| ImageView {
                image_id: id,
                species_id: e.species_id,
                image_path: e.image_path.clone(),
                width: e.width,
                height: e.height,
                split: e.split,
                accepted: state.progress.contains_key(&progress_key(e)),
            })
            .collect())
    }

    /// Full-resolution source image re-encoded as PNG.
    pub fn source_png(&self, image_id: u32) -> Result<Vec<u8>> {
        let entry = self.entry(image_id)?;
        let path = self.manifest.absolute_path(entry);
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            return std::fs::read(&path).map_err(|e| gramseg::Error::Io { path, source: e }.into());
        }
        Ok(imaging::encode_png(&imaging::load_image(path)?)?)
    }

    /// Runs the annotation pipeline without touching any state.
    pub fn preview(&self, req: &ImageRequest) -> Result<PreviewResponse> {
        let entry = self.entry(req.image_id)?;
        self.check_config(entry.species_id, &req.config)?;
        let img = imaging::load_image(self.manifest.absolute_path(entry))?;
        let a = pipeline::annotate_detailed(&img, &req.config)?;
        let label = LabelMap::from_mask(&a.mask, entry.species_id)?;
        let label_sha256 = sha256_hex(&label.encode_png()?);

        let small = imaging::downscale_to_fit(&img, PREVIEW_MAX_DIM);
        let small_mask = imaging::downscale_mask_to_fit(&a.mask, PREVIEW_MAX_DIM);
        let blended = imaging::overlay(&small, &small_mask, OVERLAY_COLOR, OVERLAY_ALPHA)?;
        Ok(PreviewResponse {
            image_id: req.image_id,
            width: img.width(),
            height: img.height(),
            preview_width: small.width(),
            preview_height: small.height(),
            mask: BASE64.encode(imaging::encode_gray_png(&small_mask.to_gray())?),
            overlay: BASE64.encode(imaging::encode_png(&blended)?),
            stats: PreviewStats {
                foreground_fraction: a.mask.foreground_fraction(),
                segmented_fraction: a.segmented.foreground_fraction(),
                label_sha256,
                segmentation: a.stats,
            },
        })
    }

    /// Writes one label; caller holds the lock and persists.
    fn accept_locked(
        &self,
        state: &mut SessionState,
        image_id: u32,
        cfg: &SpeciesConfig,
    ) -> Result<AcceptResponse> {
        let entry = self.entry(image_id)?;
        let (label, fraction) = pipeline::annotate_entry(&self.manifest, entry, cfg, &self.labels_dir)?;
        let label_path = pipeline::label_relpath(entry);
        let label_sha256 = sha256_hex(&label.encode_png()?);
        state.progress.insert(
            progress_key(entry),
            AcceptedLabel {
                config: cfg.clone(),
                label_path: label_path.clone(),
                label_sha256: label_sha256.clone(),
            },
        );
        Ok(AcceptResponse {
            image_id,
            label_path,
            label_sha256,
            foreground_fraction: fraction,
        })
    }

    pub fn accept(&self, req: &ImageRequest) -> Result<AcceptResponse> {
        let entry = self.entry(req.image_id)?;
        self.check_config(entry.species_id, &req.config)?;
        let mut state = self.lock();
        let mut next = state.clone();
        let response = self.accept_locked(&mut next, req.image_id, &req.config)?;
        if next != *state {
            self.persist(&next)?;
            *state = next;
        }
        Ok(response)
    }

    pub fn set_config(&self, species_id: u32, cfg: SpeciesConfig) -> Result<SpeciesConfig> {
        let name = self.species_name(species_id)?;
        self.check_config(species_id as u8, &cfg)?;
        let mut state = self.lock();
        let mut next = state.clone();
        next.species.insert(name, cfg.clone());
        self.persist(&next)?;
        *state = next;
        Ok(cfg)
    }

    /// Stores the species recipe and annotates its remaining images.
    pub fn apply_species(&self, species_id: u32, req: &ApplyRequest) -> Result<ApplyResponse> {
        let name = self.species_name(species_id)?;
        let sid = species_id as u8;
        if let Some(cfg) = &req.config {
            self.check_config(sid, cfg)?;
        }
        let mut state = self.lock();
        let cfg = match &req.config {
            Some(cfg) => cfg.clone(),
            None => state
                .species
                .get(&name)
                .cloned()
                .unwrap_or_else(|| SpeciesConfig::default_for(sid)),
        };
        let mut next = state.clone();
        next.species.insert(name, cfg.clone());
        let (mut annotated, mut skipped, mut failed) = (Vec::new(), Vec::new(), Vec::new());
        let ids: Vec<(u32, bool)> = self
            .species_entries(sid)
            .map(|(id, e)| (id, next.progress.contains_key(&progress_key(e))))
            .collect();
        for (id, done) in ids {
            if done && !req.overwrite_accepted {
                skipped.push(id);
                continue;
            }
            match self.accept_locked(&mut next, id, &cfg) {
                Ok(_) => annotated.push(id),
                Err(e) => failed.push(ApplyFailure {
                    image_id: id,
                    error: e.to_string(),
                }),
            }
        }
        self.persist(&next)?;
        *state = next;
        let total = annotated.len() + skipped.len() + failed.len();
        let accepted = self
            .species_entries(sid)
            .filter(|(_, e)| state.progress.contains_key(&progress_key(e)))
            .count();
        Ok(ApplyResponse {
            species_id: sid,
            annotated,
            skipped,
            failed,
            accepted,
            total,
        })
    }

    pub fn progress(&self) -> ProgressView {
        let species: Vec<SpeciesProgress> = self
            .species()
            .into_iter()
            .map(|s| SpeciesProgress {
                species_id: s.species_id,
                species_name: s.species_name,
                accepted: s.accepted,
                total: s.image_count,
            })
            .collect();
        ProgressView {
            accepted: species.iter().map(|s| s.accepted).sum(),
            total: species.iter().map(|s| s.total).sum(),
            species,
        }
    }
}
