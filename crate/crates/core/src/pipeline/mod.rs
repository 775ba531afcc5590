//! Dataset handling, preprocessing and batch feature extraction.

mod dataset;
mod extract;
mod preprocess;

pub use dataset::{
    holdout_count, ingest, min_class_filter, stratified_split, ImageRecord, IngestReport,
    LabeledDataset,
};
pub use extract::{
    load_features, run_extraction, ExtractionConfig, ExtractionReport, LoadedFeatures,
};
pub use preprocess::{
    preprocess, preprocess_image, rgb_to_tensor, save_png, tensor_to_rgb, PreprocessConfig,
};

use rayon::prelude::*;

use crate::error::Result;
use crate::tensor::Tensor;

/// Preprocesses every image of a dataset, in record order.
pub fn load_images(ds: &LabeledDataset, cfg: &PreprocessConfig) -> Result<Vec<Tensor<f32>>> {
    ds.records
        .par_iter()
        .map(|r| preprocess(&r.path, cfg))
        .collect()
}
