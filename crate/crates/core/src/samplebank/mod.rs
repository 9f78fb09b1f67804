//! Synthetic shapes data, the label-aware oracle generator and the offline
//! variant bank.

mod bank;
mod codec;
mod dataset;
mod shapes;

pub use bank::{
    audit_oracle_bank, build_bank, build_bank_with, import_bank, load_png, oracle_variant_latents, sample_variant,
    save_png, variant_rng, Generator, ImportManifest, ImportSource, SampleBank, BANK_MAGIC, BANK_VERSION, DEFAULT_K,
};
pub use dataset::{
    make_shapes_dataset, make_shapes_split, short_hash, source_rng, LabeledDataset, Split, DATASET_MAGIC,
    MIN_DATASET_SIZE,
};
pub use shapes::{inside, oracle_regenerate, render, ShapeLatent, FAMILIES, MAX_CLASSES};
