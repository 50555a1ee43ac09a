//! Synthetic data generation, gradient images, augmentation and on-disk datasets.

mod augment;
mod dataset;
mod gradient;
pub mod lst;
mod sample;
mod synth;

pub use augment::{augment, flip_cols, flip_rows, AugmentPolicy};
pub use dataset::{
    dataset_read, dataset_write, split_dataset, split_indices, synth_splits, Dataset, DatasetManifest, ManifestEntry, SplitTag,
    SynthSplits, MANIFEST_FILE,
};
pub use gradient::sst_gradient;
pub use sample::{pad_to, Normalization, Sample};
pub use synth::{
    polyline_distance, sample_id, synth_generate, synth_range, synth_sample, FrontCurve, FrontSpec, SynthConfig,
};
