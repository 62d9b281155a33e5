//! Patient journeys, dataset files, normalization and the train/val/test
//! split.

mod dataset;
mod journey;
mod normalize;
mod split;

pub use dataset::{default_feature_names, load_dataset, metadata_path, save_dataset, Dataset, DatasetMeta};
pub(crate) use dataset::save_with_imputed;
pub use journey::{Mask, PatientJourney};
pub use normalize::{NormMode, Normalizer, STAT_FLOOR};
pub use split::{split_dataset, split_indices, DEFAULT_RATIOS, MIN_SPLIT_SIZE};
