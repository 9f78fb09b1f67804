//! Named augmentation presets and the strategy variants built from them.

use serde::{Deserialize, Serialize};

use super::pipeline::{GenerativeSlot, PipelineSpec, ViewRegime};
use super::transforms::TransformSpec;
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 6] = [
    "simclr_standard",
    "simclr_random_crop",
    "moco_standard",
    "byol_standard",
    "simsiam_standard",
    "barlow_standard",
];

/// Crop lower bound used by the preset tables.
pub const PRESET_MIN_SCALE: f64 = 0.08;
/// Crop lower bound of the reproduction experiments.
pub const EXPERIMENT_MIN_SCALE: f64 = 0.2;

#[derive(Clone, Copy)]
struct ViewParams {
    jitter_prob: f64,
    jitter: [f64; 4],
    gray: f64,
    blur: f64,
    solarize: f64,
    flip: f64,
}

fn view_list(p: ViewParams, min_scale: f64) -> Vec<TransformSpec> {
    let [brightness, contrast, saturation, hue] = p.jitter;
    vec![
        TransformSpec::crop(min_scale, 1.0),
        TransformSpec::ColorJitter {
            prob: p.jitter_prob,
            brightness,
            contrast,
            saturation,
            hue,
        },
        TransformSpec::Grayscale { prob: p.gray },
        TransformSpec::GaussianBlur {
            prob: p.blur,
            sigma_min: 0.1,
            sigma_max: 2.0,
        },
        TransformSpec::Solarize {
            prob: p.solarize,
            threshold: 128,
        },
        TransformSpec::HorizontalFlip { prob: p.flip },
    ]
}

fn symmetric(p: ViewParams, output_size: usize) -> PipelineSpec {
    PipelineSpec {
        output_size,
        generative: GenerativeSlot::default(),
        view1: view_list(p, PRESET_MIN_SCALE),
        view2: view_list(p, PRESET_MIN_SCALE),
    }
}

fn asymmetric(output_size: usize) -> PipelineSpec {
    let base = ViewParams {
        jitter_prob: 0.8,
        jitter: [0.4, 0.4, 0.2, 0.1],
        gray: 0.2,
        blur: 1.0,
        solarize: 0.0,
        flip: 0.5,
    };
    let second = ViewParams {
        blur: 0.1,
        solarize: 0.2,
        ..base
    };
    PipelineSpec {
        output_size,
        generative: GenerativeSlot::default(),
        view1: view_list(base, PRESET_MIN_SCALE),
        view2: view_list(second, PRESET_MIN_SCALE),
    }
}

/// Looks up a named preset. The generative slot is closed (`p0 = 0`).
pub fn preset(name: &str, output_size: usize) -> Result<PipelineSpec> {
    let simclr = ViewParams {
        jitter_prob: 0.8,
        jitter: [0.8, 0.8, 0.8, 0.2],
        gray: 0.2,
        blur: 0.5,
        solarize: 0.0,
        flip: 0.5,
    };
    let spec = match name {
        "simclr_standard" => symmetric(simclr, output_size),
        "simclr_random_crop" => symmetric(
            ViewParams {
                jitter_prob: 0.0,
                jitter: [0.0; 4],
                gray: 0.0,
                blur: 0.0,
                solarize: 0.0,
                flip: 0.5,
            },
            output_size,
        ),
        "moco_standard" => symmetric(
            ViewParams {
                jitter: [0.4, 0.4, 0.4, 0.1],
                ..simclr
            },
            output_size,
        ),
        "byol_standard" | "simsiam_standard" | "barlow_standard" => asymmetric(output_size),
        other => {
            return Err(Error::Config(format!(
                "unknown augmentation preset {other:?}; expected one of {PRESET_NAMES:?}"
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// The standard preset paired with each method.
pub fn standard_preset_for(method: &str) -> Result<&'static str> {
    Ok(match method {
        "simclr" => "simclr_standard",
        "moco" => "moco_standard",
        "byol" => "byol_standard",
        "simsiam" => "simsiam_standard",
        "barlow_twins" => "barlow_standard",
        other => return Err(Error::Config(format!("unknown method {other:?}"))),
    })
}

/// How the generative slot is combined with the standard transforms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Standard transforms only; the slot is closed whatever `p0` says.
    Baseline,
    /// Generative slot followed by a plain resize.
    OnlyGenerative,
    /// Generative slot, random crop and flip.
    GenRandomCrop,
    /// Generative slot in front of the full standard preset.
    GenStandard,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Baseline,
        Strategy::OnlyGenerative,
        Strategy::GenRandomCrop,
        Strategy::GenStandard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::OnlyGenerative => "only_generative",
            Strategy::GenRandomCrop => "gen_random_crop",
            Strategy::GenStandard => "gen_standard",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

/// Builds the pipeline for `method` under `strategy`.
///
/// `min_scale` overrides the crop lower bound of every crop in the result.
pub fn strategy_pipeline(
    method: &str,
    strategy: Strategy,
    p0: f64,
    on_view: ViewRegime,
    output_size: usize,
    min_scale: Option<f64>,
) -> Result<PipelineSpec> {
    let mut spec = match strategy {
        Strategy::Baseline | Strategy::GenStandard => preset(standard_preset_for(method)?, output_size)?,
        Strategy::GenRandomCrop => preset("simclr_random_crop", output_size)?,
        Strategy::OnlyGenerative => {
            let resize = vec![TransformSpec::RandomResizedCrop {
                min_scale: 1.0,
                max_scale: 1.0,
                min_ratio: 1.0,
                max_ratio: 1.0,
            }];
            PipelineSpec {
                output_size,
                generative: GenerativeSlot::default(),
                view1: resize.clone(),
                view2: resize,
            }
        }
    };
    if let (Some(m), false) = (min_scale, strategy == Strategy::OnlyGenerative) {
        for t in spec.view1.iter_mut().chain(spec.view2.iter_mut()) {
            if let TransformSpec::RandomResizedCrop { min_scale, .. } = t {
                *min_scale = m;
            }
        }
    }
    spec.generative = GenerativeSlot {
        p0: if strategy == Strategy::Baseline { 0.0 } else { p0 },
        on_view,
    };
    spec.validate()?;
    Ok(spec)
}
