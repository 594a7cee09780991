//! Datasets with label-contamination bookkeeping.
//!
//! A [`ContaminatedDataset`] keeps both the observed (possibly corrupted)
//! labels used for training and the hidden clean labels, plus the index set
//! of corrupted samples. `i` is in the contaminated set exactly when its
//! observed label differs from its clean label.

mod cache;
mod contamination;
mod dataset;
mod idx;
mod split;
mod synthetic;

pub use cache::{load_cache, read_cache, save_cache, write_cache};
pub use contamination::{
    contamination_count, inject_kernel, inject_ncar, ContaminationKernel, KERNEL_ROW_TOL,
};
pub use dataset::{ContaminatedDataset, Provenance};
pub use idx::{
    load_idx, load_idx_dataset, parse_idx_images, parse_idx_labels, write_idx_images,
    write_idx_labels, IMAGE_MAGIC, LABEL_MAGIC,
};
pub use split::{split, Splits};
pub use synthetic::make_synthetic_blobs;
