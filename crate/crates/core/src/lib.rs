//! Semi-automatic labeling of gram-stained bacteria micrographs.
//!
//! Images are segmented either by k-means over RGB pixels or by Otsu
//! thresholding of luma, cleaned up with a disk-shaped morphological
//! operator chosen per species, and exported as 8-bit label maps. The crate
//! also covers dataset discovery and splitting, patch extraction with
//! label-exact augmentation, and pixel-level evaluation scores.

pub mod cluster;
pub mod dataset;
pub mod error;
pub mod imaging;
pub mod label;
pub mod metrics;
pub mod morphology;
pub mod patching;
pub mod pipeline;
pub mod species;
pub mod synthetic;
pub mod threshold;

pub use cluster::{ClusterModel, ClusterSelection, KMeans};
pub use dataset::{DatasetManifest, ManifestEntry, Split};
pub use error::{Error, Result};
pub use imaging::{BinaryMask, GrayImage, Histogram256, RasterImage, Rgb};
pub use label::LabelMap;
pub use metrics::{ConfusionCounts, MetricsRow};
pub use morphology::{Cleanup, StructuringElement};
pub use pipeline::{ConfigFile, Method, SpeciesConfig};
pub use threshold::{OtsuResult, Polarity};
