//! Dataset ingestion: decoding, colour filtering, resampling, manifests and
//! batch assembly.

mod batch;
mod filter;
mod manifest;
mod raster;

pub use batch::{filter_manifest, make_batches, preprocess, BatchIter, Dataset, FilterStats, Sample, SampleBatch};
pub use filter::{classify, is_colorful, FilterPolicy, FilterVerdict};
pub use manifest::{build_manifest, DatasetManifest, Label, LabelMode, ManifestEntry, Split, ATTRIBUTE_FILE};
pub use raster::{load_image, resize_bilinear, resize_to_training, save_png, TRAINING_SIZE};
