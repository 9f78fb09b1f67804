use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::EncoderSpec;
use super::optim::OptimizerSpec;
use crate::augmentation::{strategy_pipeline, PipelineSpec, Strategy, TransformSpec, ViewRegime};
use crate::error::{Error, Result};
use crate::samplebank::short_hash;
use crate::ssl_objectives::{Heads, Method, BARLOW_LAMBDA, BARLOW_SCALE, DEFAULT_TEMPERATURE};

pub const DESK_EPOCHS: usize = 50;
pub const DESK_BATCH: usize = 64;
pub const DESK_WARMUP: usize = 5;
pub const DESK_QUEUE: usize = 512;
/// LARS trust coefficient used by the desk presets.
pub const DESK_LARS_TRUST: f64 = 0.02;
/// Crop lower bound of the desk presets; at 32 px smaller crops mostly lose the shape.
pub const DESK_MIN_SCALE: f64 = 0.5;
/// Image side the blur sigma range of the presets is calibrated for.
pub const BLUR_REFERENCE_SIDE: f64 = 224.0;

/// Multiplies every blur sigma range in `spec` by `factor`.
pub fn scale_blur(spec: &mut PipelineSpec, factor: f64) {
    for t in spec.view1.iter_mut().chain(spec.view2.iter_mut()) {
        if let TransformSpec::GaussianBlur {
            sigma_min, sigma_max, ..
        } = t
        {
            *sigma_min *= factor;
            *sigma_max *= factor;
        }
    }
}

fn blur_scale_of(spec: &PipelineSpec) -> Option<f64> {
    spec.view1.iter().chain(&spec.view2).find_map(|t| match t {
        TransformSpec::GaussianBlur { sigma_max, .. } => Some(*sigma_max / 2.0),
        _ => None,
    })
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn default_lambda() -> f64 {
    BARLOW_LAMBDA
}
fn default_loss_scale() -> f64 {
    BARLOW_SCALE
}
fn default_barlow_eps() -> f64 {
    1e-5
}

/// Cosine ramp of the target-network momentum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentumSchedule {
    pub base: f64,
    pub end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub encoder: EncoderSpec,
    pub heads: Heads,
    pub epochs: usize,
    pub batch_size: usize,
    /// Scaled by `batch_size / 256` before use.
    pub base_lr: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    pub optimizer: OptimizerSpec,
    pub seed: u64,
    pub augmentation: PipelineSpec,
    #[serde(default)]
    pub bank: Option<PathBuf>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub momentum: Option<MomentumSchedule>,
    #[serde(default)]
    pub queue_size: Option<usize>,
    #[serde(default = "default_lambda")]
    pub barlow_lambda: f64,
    #[serde(default = "default_loss_scale")]
    pub barlow_scale: f64,
    #[serde(default = "default_barlow_eps")]
    pub barlow_eps: f64,
    /// Global gradient-norm clip; off when absent.
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

struct Published {
    optimizer_lars: bool,
    base_lr: f64,
    weight_decay: f64,
    batch: usize,
    momentum: Option<MomentumSchedule>,
    queue: Option<usize>,
}

fn published_settings(method: Method) -> Published {
    let p = |optimizer_lars, base_lr, weight_decay, batch| Published {
        optimizer_lars,
        base_lr,
        weight_decay,
        batch,
        momentum: None,
        queue: None,
    };
    match method {
        Method::Simclr => p(true, 0.3, 1e-6, 256),
        Method::Moco => Published {
            momentum: Some(MomentumSchedule { base: 0.99, end: 0.999 }),
            queue: Some(65536),
            ..p(false, 0.3, 3e-5, 64)
        },
        Method::Byol => Published {
            momentum: Some(MomentumSchedule { base: 0.99, end: 1.0 }),
            ..p(true, 0.2, 1.5e-6, 256)
        },
        Method::Simsiam => p(false, 0.5, 1e-5, 64),
        Method::BarlowTwins => p(true, 0.8, 1.5e-6, 64),
    }
}

impl TrainConfig {
    /// Published pretraining settings (100 epochs, full-width heads) on the
    /// method's standard augmentation.
    pub fn published(method: Method, input_size: usize) -> Result<Self> {
        let p = published_settings(method);
        Ok(TrainConfig {
            method,
            encoder: EncoderSpec::default(),
            heads: Heads::published(method),
            epochs: 100,
            batch_size: p.batch,
            base_lr: p.base_lr,
            weight_decay: p.weight_decay,
            warmup_epochs: 10,
            optimizer: if p.optimizer_lars {
                OptimizerSpec::lars()
            } else {
                OptimizerSpec::sgd()
            },
            seed: 0,
            augmentation: strategy_pipeline(
                method.name(),
                Strategy::Baseline,
                0.0,
                ViewRegime::BothViews,
                input_size,
                None,
            )?,
            bank: None,
            temperature: DEFAULT_TEMPERATURE,
            momentum: p.momentum,
            queue_size: p.queue,
            barlow_lambda: BARLOW_LAMBDA,
            barlow_scale: BARLOW_SCALE,
            barlow_eps: default_barlow_eps(),
            grad_clip: None,
        })
    }

    /// Desk-scale variant: narrow heads, batch 64, 50 epochs, a 512-key queue,
    /// a larger LARS trust coefficient, crops of at least half the image and blur
    /// sigmas scaled to the image side.
    pub fn desk(method: Method, input_size: usize) -> Result<Self> {
        let mut c = TrainConfig::published(method, input_size)?;
        c.heads = Heads::desk(method);
        c.epochs = DESK_EPOCHS;
        c.batch_size = DESK_BATCH;
        c.warmup_epochs = DESK_WARMUP;
        c.queue_size = c.queue_size.map(|_| DESK_QUEUE);
        if let OptimizerSpec::Lars { trust, .. } = &mut c.optimizer {
            *trust = DESK_LARS_TRUST;
        }
        c.augmentation = strategy_pipeline(
            method.name(),
            Strategy::Baseline,
            0.0,
            ViewRegime::BothViews,
            input_size,
            Some(DESK_MIN_SCALE),
        )?;
        scale_blur(&mut c.augmentation, input_size as f64 / BLUR_REFERENCE_SIDE);
        Ok(c)
    }

    /// Replaces the augmentation with `strategy` at generative probability `p0`,
    /// keeping the current crop lower bound and blur scaling.
    pub fn with_strategy(mut self, strategy: Strategy, p0: f64, on_view: ViewRegime) -> Result<Self> {
        let min_scale = self.augmentation.view1.iter().find_map(|t| match t {
            TransformSpec::RandomResizedCrop { min_scale, .. } => Some(*min_scale),
            _ => None,
        });
        let blur = blur_scale_of(&self.augmentation);
        self.augmentation = strategy_pipeline(
            self.method.name(),
            strategy,
            p0,
            on_view,
            self.augmentation.output_size,
            min_scale.filter(|&m| m < 1.0),
        )?;
        if let Some(f) = blur.filter(|&f| f != 1.0) {
            scale_blur(&mut self.augmentation, f);
        }
        Ok(self)
    }

    /// Sets the epoch count, keeping warmup at a tenth of it.
    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self.warmup_epochs = (epochs / 10).min(epochs.saturating_sub(1));
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.batch_size < 2 {
            return bad(format!("batch size {} < 2", self.batch_size));
        }
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.warmup_epochs >= self.epochs {
            return bad(format!(
                "warmup {} must be below epochs {}",
                self.warmup_epochs, self.epochs
            ));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad(format!("base lr {} must be positive", self.base_lr));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight decay {} < 0", self.weight_decay));
        }
        if !(self.temperature > 0.0) {
            return bad(format!("temperature {} must be positive", self.temperature));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad(format!("grad clip {c} must be positive"));
            }
        }
        self.optimizer.validate()?;
        self.heads.validate(self.method)?;
        self.encoder.validate(self.augmentation.output_size)?;
        self.augmentation.validate()?;
        if self.method.uses_target_network() && self.momentum.is_none() {
            return bad(format!("{} needs a momentum schedule", self.method.name()));
        }
        if let Some(m) = self.momentum {
            if !(0.0..=1.0).contains(&m.base) || !(0.0..=1.0).contains(&m.end) {
                return bad("momentum outside [0,1]".into());
            }
        }
        if self.method == Method::Moco && !self.queue_size.is_some_and(|q| q > 0) {
            return bad("moco needs a positive queue size".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: TrainConfig = serde_json::from_str(s).map_err(|e| Error::Config(format!("bad train config: {e}")))?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// Short SHA-256 fingerprint of the compact JSON form.
    pub fn config_hash(&self) -> Result<String> {
        Ok(short_hash(serde_json::to_string(self)?.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_tables() {
        let c = TrainConfig::published(Method::Simclr, 32).unwrap();
        assert_eq!(
            (c.base_lr, c.weight_decay, c.batch_size, c.warmup_epochs),
            (0.3, 1e-6, 256, 10)
        );
        assert!(matches!(c.optimizer, OptimizerSpec::Lars { .. }));
        assert_eq!(c.temperature, 0.2);
        assert_eq!((c.heads.projector.hidden, c.heads.projector.out), (4096, 512));

        let m = TrainConfig::published(Method::Moco, 32).unwrap();
        assert!(matches!(m.optimizer, OptimizerSpec::Sgd { .. }));
        assert_eq!((m.base_lr, m.weight_decay, m.batch_size), (0.3, 3e-5, 64));
        assert_eq!(m.momentum, Some(MomentumSchedule { base: 0.99, end: 0.999 }));
        assert_eq!(m.queue_size, Some(65536));

        let b = TrainConfig::published(Method::Byol, 32).unwrap();
        assert_eq!((b.base_lr, b.weight_decay, b.batch_size), (0.2, 15e-7, 256));
        assert_eq!(b.momentum, Some(MomentumSchedule { base: 0.99, end: 1.0 }));
        assert_eq!(b.heads.predictor.unwrap().hidden, 4096);

        let s = TrainConfig::published(Method::Simsiam, 32).unwrap();
        assert!(matches!(s.optimizer, OptimizerSpec::Sgd { .. }));
        assert_eq!((s.base_lr, s.weight_decay, s.batch_size), (0.5, 1e-5, 64));
        assert_eq!(s.heads.predictor.unwrap().hidden, 512);

        let bt = TrainConfig::published(Method::BarlowTwins, 32).unwrap();
        assert_eq!((bt.base_lr, bt.weight_decay, bt.batch_size), (0.8, 1.5e-6, 64));
        assert_eq!((bt.barlow_lambda, bt.barlow_scale), (0.0051, 0.048));
        for m in Method::ALL {
            TrainConfig::published(m, 32).unwrap().validate().unwrap();
            TrainConfig::desk(m, 32).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn invariants_rejected() {
        let ok = TrainConfig::desk(Method::Simclr, 32).unwrap();
        let cases: Vec<Box<dyn Fn(&mut TrainConfig)>> = vec![
            Box::new(|c| c.batch_size = 1),
            Box::new(|c| c.epochs = 0),
            Box::new(|c| c.warmup_epochs = c.epochs),
            Box::new(|c| c.base_lr = 0.0),
            Box::new(|c| c.augmentation.generative.p0 = 1.5),
        ];
        for f in cases {
            let mut c = ok.clone();
            f(&mut c);
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn json_round_trip_and_hash() {
        let c = TrainConfig::desk(Method::Byol, 32)
            .unwrap()
            .with_strategy(Strategy::GenStandard, 0.5, ViewRegime::BothViews)
            .unwrap();
        assert_eq!(c.augmentation.generative.p0, 0.5);
        let back = TrainConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.config_hash().unwrap(), c.config_hash().unwrap());
        let mut d = c.clone();
        d.seed = 1;
        assert_ne!(d.config_hash().unwrap(), c.config_hash().unwrap());
        assert!(TrainConfig::from_json("{\"method\": \"simclr\"}").is_err());
    }

    #[test]
    fn desk_blur_follows_image_side() {
        let c = TrainConfig::desk(Method::Simclr, 32)
            .unwrap()
            .with_strategy(Strategy::GenStandard, 0.5, ViewRegime::BothViews)
            .unwrap();
        let blur = c.augmentation.view2.iter().find_map(|t| match t {
            TransformSpec::GaussianBlur {
                sigma_min, sigma_max, ..
            } => Some((*sigma_min, *sigma_max)),
            _ => None,
        });
        let (lo, hi) = blur.unwrap();
        assert!((lo - 0.1 * 32.0 / 224.0).abs() < 1e-15 && (hi - 2.0 * 32.0 / 224.0).abs() < 1e-15);
        let p = TrainConfig::published(Method::Simclr, 32).unwrap();
        assert!(p.augmentation.view1.contains(&TransformSpec::GaussianBlur {
            prob: 0.5,
            sigma_min: 0.1,
            sigma_max: 2.0
        }));
    }
}
