//! Writes train/val/test patches as paired PNGs plus an index document.

use std::path::{Path, PathBuf};

use gramseg::dataset::{DatasetManifest, ManifestEntry, Split};
use gramseg::patching::{self, AugmentConfig, AugmentOp, Patch};
use gramseg::{imaging, pipeline, LabelMap};
use rayon::prelude::*;
use serde::Serialize;

use crate::CliError;

pub const INDEX_FILE: &str = "index.json";

pub struct PatchOptions {
    pub size: u32,
    pub train_stride: u32,
    /// Augmented copies per training patch.
    pub augment: u32,
    pub seed: u64,
    pub augment_config: AugmentConfig,
}

#[derive(Debug, Serialize)]
pub struct PatchRecord {
    pub split: Split,
    pub species_id: u8,
    pub source: PathBuf,
    pub origin: (u32, u32),
    pub image: PathBuf,
    pub label: PathBuf,
    pub augmentation: Vec<AugmentOp>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub augmentation_seed: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct PatchIndex {
    pub patch_size: u32,
    pub train_stride: u32,
    pub eval_stride: u32,
    pub patches: Vec<PatchRecord>,
}

fn split_dir(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

// splitmix64 finalizer; spreads (seed, image, patch, copy) over distinct streams
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(a << 6).wrapping_add(a >> 2);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn write_pair(out: &Path, image_rel: &Path, label_rel: &Path, patch: &Patch) -> Result<(), CliError> {
    pipeline::write_atomic(&out.join(image_rel), &imaging::encode_png(&patch.image)?)?;
    pipeline::write_atomic(&out.join(label_rel), &patch.label.encode_png()?)?;
    Ok(())
}

fn entry_patches(
    manifest: &DatasetManifest,
    index: usize,
    entry: &ManifestEntry,
    labels: &Path,
    out: &Path,
    opts: &PatchOptions,
) -> Result<Vec<PatchRecord>, CliError> {
    let split = entry.split.ok_or_else(|| {
        CliError::Usage(format!(
            "{} has no split assignment; create the manifest with `gramseg split`",
            entry.image_path.display()
        ))
    })?;
    let img = imaging::load_image(manifest.absolute_path(entry))?;
    let label = LabelMap::load(labels.join(pipeline::label_relpath(entry)))?;
    let stride = if split == Split::Train { opts.train_stride } else { opts.size };
    let set = patching::extract_patches(&img, &label, opts.size, stride)?;

    let stem = entry.image_path.with_extension("");
    let mut records = Vec::new();
    for (pi, patch) in set.patches.iter().enumerate() {
        let (x, y) = patch.origin;
        let name = |suffix: &str| {
            let mut s = stem.clone().into_os_string();
            s.push(format!("_x{x}_y{y}{suffix}.png"));
            PathBuf::from(s)
        };
        let mut emit = |p: &Patch, file: PathBuf, seed: Option<u64>| -> Result<(), CliError> {
            let image_rel = Path::new(split_dir(split)).join("images").join(&file);
            let label_rel = Path::new(split_dir(split)).join("labels").join(&file);
            write_pair(out, &image_rel, &label_rel, p)?;
            records.push(PatchRecord {
                split,
                species_id: entry.species_id,
                source: entry.image_path.clone(),
                origin: p.origin,
                image: image_rel,
                label: label_rel,
                augmentation: p.augmentation.clone(),
                augmentation_seed: seed,
            });
            Ok(())
        };
        emit(patch, name(""), None)?;
        if split == Split::Train {
            for copy in 0..opts.augment {
                let seed = mix(mix(mix(opts.seed, index as u64), pi as u64), copy as u64);
                let augmented = patching::augment_random(patch, &opts.augment_config, seed)?;
                emit(&augmented, name(&format!("_aug{copy}")), Some(seed))?;
            }
        }
    }
    Ok(records)
}

/// Cuts every manifest image and its label into patches under `out`.
pub fn write_patches(
    manifest: &DatasetManifest,
    labels: &Path,
    out: &Path,
    opts: &PatchOptions,
) -> Result<PatchIndex, CliError> {
    if opts.augment > 0 && opts.augment_config.max_shift >= opts.size {
        return Err(CliError::Usage(format!(
            "--max-shift {} must be smaller than the patch size {}",
            opts.augment_config.max_shift, opts.size
        )));
    }
    let per_entry: Vec<Vec<PatchRecord>> = manifest
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| entry_patches(manifest, i, e, labels, out, opts))
        .collect::<Result<_, _>>()?;
    let index = PatchIndex {
        patch_size: opts.size,
        train_stride: opts.train_stride,
        eval_stride: opts.size,
        patches: per_entry.into_iter().flatten().collect(),
    };
    let mut text = serde_json::to_string_pretty(&index).map_err(gramseg::Error::from)?;
    text.push('\n');
    pipeline::write_atomic(&out.join(INDEX_FILE), text.as_bytes())?;
    Ok(index)
}
