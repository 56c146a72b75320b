use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gramseg::dataset::{self, DatasetManifest};
use gramseg::metrics::{self, ReportFormat};
use gramseg::patching::{AugmentConfig, DEFAULT_PATCH_SIZE, DEFAULT_TRAIN_STRIDE};
use gramseg::pipeline::{self, ConfigFile};
use gramseg::species;
use gramseg::synthetic::{self, SceneParams};
use gramseg_server::{ServeOptions, ServiceError};

mod patches;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gramseg::Error),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("{0}")]
    Usage(String),
    #[error("{0} image(s) failed; see the report for details")]
    Failures(usize),
}

#[derive(Parser)]
#[command(name = "gramseg", version, about = "Semi-automatic labeling of gram-stained bacteria images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment every image with its species recipe and write label PNGs.
    Annotate {
        #[arg(long)]
        root: PathBuf,
        /// JSON file mapping species directory name to recipe.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Only annotate this species (directory name).
        #[arg(long)]
        species: Option<String>,
    },
    /// Assign a stratified train/val/test split and write the manifest.
    Split {
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Train, validation and test fractions.
        #[arg(long, value_delimiter = ',', default_values_t = [0.6, 0.2, 0.2])]
        ratios: Vec<f64>,
    },
    /// Score predicted label maps against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// csv or md
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
    /// Cut images and labels into training patches.
    Patch {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
        size: u32,
        #[arg(long, default_value_t = DEFAULT_TRAIN_STRIDE)]
        train_stride: u32,
        #[arg(long)]
        out: PathBuf,
        /// Augmented copies written per training patch.
        #[arg(long, default_value_t = 0)]
        augment: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest shift per axis for augmented copies.
        #[arg(long, default_value_t = 32)]
        max_shift: u32,
    },
    /// Run the local review service.
    Serve {
        #[arg(long)]
        root: PathBuf,
        /// Session state file; created on first change.
        #[arg(long)]
        state: PathBuf,
        /// Defaults to $GRAMSEG_PORT, then 8610.
        #[arg(long)]
        port: Option<u16>,
        /// Where accepted labels go (default: `labels/` beside the state file).
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Write a small synthetic dataset for trying the tools out.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "Proteus,Veionella")]
        species: Vec<String>,
        #[arg(long, default_value_t = 5)]
        per_species: usize,
        #[arg(long, default_value_t = 512)]
        width: u32,
        #[arg(long, default_value_t = 384)]
        height: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn annotate(root: PathBuf, config: PathBuf, out: PathBuf, only: Option<String>) -> Result<(), CliError> {
    let manifest = dataset::ingest_dibas(&root)?;
    let file = ConfigFile::load(&config)?;
    let configs = file.resolve(&manifest)?;
    let only_id = match &only {
        None => None,
        Some(name) => {
            let key = species::normalize_name(name);
            let found = manifest
                .species()
                .into_iter()
                .find(|s| species::normalize_name(&s.species_name) == key)
                .ok_or_else(|| CliError::Usage(format!("species {name:?} is not in {}", root.display())))?;
            Some(found.species_id)
        }
    };
    let report = pipeline::batch_annotate(&manifest, &configs, &out, only_id)?;
    // keep the recipes next to the labels they produced
    let used = ConfigFile {
        species: file
            .species
            .into_iter()
            .filter(|(_, c)| only_id.is_none_or(|id| c.species_id == id))
            .collect(),
        ..ConfigFile::default()
    };
    used.save(out.join("configs.json"))?;
    println!(
        "annotated {} image(s) into {} ({} failed)",
        report.images.len() - report.failures,
        out.display(),
        report.failures
    );
    if report.failures > 0 {
        return Err(CliError::Failures(report.failures));
    }
    Ok(())
}

fn split(root: PathBuf, seed: u64, out: PathBuf, ratios: Vec<f64>) -> Result<(), CliError> {
    let [train, val, test] = ratios[..] else {
        return Err(CliError::Usage(format!("--ratios takes three values, got {}", ratios.len())));
    };
    let manifest = dataset::ingest_dibas(&root)?;
    let split = dataset::split_dataset(&manifest, (train, val, test), seed)?;
    split.save(&out)?;
    let counts: BTreeMap<_, _> = split.split_counts();
    let summary: Vec<String> = counts.iter().map(|(s, n)| format!("{s:?}={n}").to_lowercase()).collect();
    println!("{} image(s), {} species: {}", split.entries.len(), split.species().len(), summary.join(" "));
    Ok(())
}

fn evaluate(pred: PathBuf, gt: PathBuf, out: PathBuf, format: ReportFormat) -> Result<(), CliError> {
    let rows = metrics::evaluate_label_dirs(&pred, &gt)?;
    let report = metrics::table_report(&rows, format);
    pipeline::write_atomic(&out, report.as_bytes())?;
    print!("{report}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Annotate {
            root,
            config,
            out,
            species,
        } => annotate(root, config, out, species),
        Command::Split { root, seed, out, ratios } => split(root, seed, out, ratios),
        Command::Evaluate { pred, gt, out, format } => evaluate(pred, gt, out, format),
        Command::Patch {
            manifest,
            labels,
            size,
            train_stride,
            out,
            augment,
            seed,
            max_shift,
        } => {
            let manifest = DatasetManifest::load(&manifest)?;
            let opts = patches::PatchOptions {
                size,
                train_stride,
                augment,
                seed,
                augment_config: AugmentConfig {
                    max_shift,
                    ..AugmentConfig::default()
                },
            };
            let index = patches::write_patches(&manifest, &labels, &out, &opts)?;
            println!("wrote {} patch pair(s) to {}", index.patches.len(), out.display());
            Ok(())
        }
        Command::Serve {
            root,
            state,
            port,
            labels,
        } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Usage(format!("cannot start runtime: {e}")))?;
            rt.block_on(gramseg_server::serve(ServeOptions {
                root,
                state,
                labels,
                port,
            }))?;
            Ok(())
        }
        Command::Synth {
            out,
            species,
            per_species,
            width,
            height,
            seed,
        } => {
            let params = SceneParams {
                width,
                height,
                ..SceneParams::default()
            };
            let names: Vec<&str> = species.iter().map(String::as_str).collect();
            let written = synthetic::write_mini_dataset(&out, &names, per_species, &params, seed)?;
            println!("wrote {} image(s) to {}", written.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
