//! Linear probing of frozen representations and the CKA / Procrustes
//! dissimilarities with bootstrap intervals.

mod dissimilarity;
mod probe;
mod repr;

pub use dissimilarity::{
    bootstrap_ci, cka_dissimilarity, opd_dissimilarity, percentile, write_comparison_csv, ComparisonRow,
    DissimilarityReport, Measure, DEFAULT_LEVEL, DEFAULT_RESAMPLES, MIN_BOOTSTRAP_EXAMPLES,
};
pub use probe::{
    linear_probe, topk_accuracy, train_linear_probe, LinearProbe, ProbeConfig, ProbeResult, PROBE_EPOCHS,
    PROBE_LARS_TRUST,
};
pub use repr::{
    extract_representations, Encoder, FrozenEncoder, IdentityEncoder, LatentEncoder, Provenance, ReprMatrix,
};
