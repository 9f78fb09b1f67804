//! Image transforms, their per-view composition and the generative slot.

mod image;
mod pipeline;
mod presets;
mod rng;
pub mod transforms;

pub use image::{Image, MIN_SIDE};
pub use pipeline::{
    apply_generative_slot, apply_pipeline, apply_view, generative_slot_traced, GenerativeSlot, PipelineSpec,
    VariantSource, ViewRegime,
};
pub use presets::{
    preset, standard_preset_for, strategy_pipeline, Strategy, EXPERIMENT_MIN_SCALE, PRESET_MIN_SCALE, PRESET_NAMES,
};
pub use rng::{derive_seed, mix64, SampleRng};
pub use transforms::{
    apply_simple_transform, apply_transform, color_jitter, gaussian_blur, random_resized_crop, SimpleTransform,
    TransformSpec,
};
