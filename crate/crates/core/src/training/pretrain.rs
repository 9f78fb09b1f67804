use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::model::Network;
use super::optim::Optimizer;
use super::schedule::{cosine_lr, scaled_lr};
use crate::augmentation::{apply_pipeline, derive_seed, Image, SampleRng, VariantSource};
use crate::error::{Error, Result};
use crate::numerics::{write_atomic, Gradients, Graph, ParamStore, Tensor};
use crate::parallel;
use crate::samplebank::LabeledDataset;
use crate::ssl_objectives::{
    barlow_twins_loss, byol_loss, infonce_loss, ntxent_loss, simsiam_loss, EmaState, KeyQueue, Method,
};

const SHUFFLE_TAG: u64 = 0x5348_5546;
const QUEUE_TAG: u64 = 0x5155_4555;
const TRACE_LEN: usize = 10;

/// Everything that changes while training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: ParamStore,
    pub optimizer: Optimizer,
    pub target: Option<EmaState>,
    pub queue: Option<KeyQueue>,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: usize,
}

/// One row of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub next_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    epoch: usize,
    step: usize,
    config_hash: String,
    rng_state: RngState,
    queue_head: Option<usize>,
    config: TrainConfig,
}

/// Saved training state plus the config that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub config_hash: String,
    pub state: TrainState,
}

/// Sidecar path for a weights file: `run.gwts` → `run.json`.
pub fn sidecar_path(weights: &Path) -> PathBuf {
    weights.with_extension("json")
}

impl Checkpoint {
    pub fn network(&self) -> Result<Network> {
        network_for(&self.config)
    }

    /// Encoder-only parameters, as the probe consumes them.
    pub fn encoder_params(&self) -> ParamStore {
        let mut out = ParamStore::new();
        for (name, t) in self.state.params.iter() {
            if name.starts_with("encoder.") {
                out.push(name, t.clone());
            }
        }
        out
    }

    /// Writes the weights to `path` and the JSON sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let s = &self.state;
        let mut parts: Vec<(&str, &ParamStore)> = vec![("online", &s.params), ("velocity", &s.optimizer.velocity)];
        if let Some(t) = &s.target {
            parts.push(("target", &t.target));
        }
        let mut store = ParamStore::merged(&parts);
        if let Some(q) = &s.queue {
            store.push("queue.keys", q.as_tensor());
        }
        store.save(path)?;
        let side = Sidecar {
            epoch: s.epoch,
            step: s.step,
            config_hash: self.config_hash.clone(),
            rng_state: RngState {
                seed: self.config.seed,
                next_epoch: s.epoch,
            },
            queue_head: s.queue.as_ref().map(KeyQueue::head),
            config: self.config.clone(),
        };
        write_atomic(&sidecar_path(path), serde_json::to_string_pretty(&side)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side_path = sidecar_path(path);
        let text = std::fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let side: Sidecar = serde_json::from_str(&text).map_err(|e| Error::format(&side_path, e.to_string()))?;
        if side.config.config_hash()? != side.config_hash {
            return Err(Error::format(
                &side_path,
                "config hash does not match the stored config",
            ));
        }
        let store = ParamStore::load(path)?;
        let params = store.extract("online");
        let velocity = store.extract("velocity");
        let cfg = &side.config;
        let target = match cfg.momentum {
            Some(m) if cfg.method.uses_target_network() => Some(EmaState {
                target: store.extract("target"),
                m_base: m.base,
                m_final: m.end,
            }),
            _ => None,
        };
        let queue = match (store.find("queue.keys"), side.queue_head) {
            (Some(id), Some(head)) => {
                let t = store.get(id);
                let (cap, dim) = t.dims2()?;
                Some(KeyQueue::from_parts(cap, dim, t.data().to_vec(), head)?)
            }
            (None, None) => None,
            _ => return Err(Error::format(path, "queue keys and sidecar head disagree")),
        };
        let network = network_for(cfg)?;
        network.check(&params)?;
        let mut optimizer = Optimizer::new(cfg.optimizer, cfg.weight_decay, &params)?;
        if velocity.len() != params.len() {
            return Err(Error::format(path, "velocity does not match parameters"));
        }
        optimizer.velocity = velocity;
        Ok(Checkpoint {
            config: side.config,
            config_hash: side.config_hash,
            state: TrainState {
                params,
                optimizer,
                target,
                queue,
                epoch: side.epoch,
                step: side.step,
            },
        })
    }
}

pub fn network_for(cfg: &TrainConfig) -> Result<Network> {
    Network::new(cfg.encoder.clone(), Some(cfg.heads), cfg.augmentation.output_size)
}

/// Steps per epoch: full batches plus a trailing one if it holds at least two images.
pub fn steps_per_epoch(n: usize, batch: usize) -> usize {
    n / batch + usize::from(n % batch >= 2)
}

/// Data order for `epoch`, derived only from the run seed and the epoch.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, epoch as u64, SHUFFLE_TAG]));
    order.shuffle(&mut rng);
    order
}

pub fn write_metrics_csv(path: &Path, rows: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<EpochMetrics>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Result of a complete run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
    pub step_losses: Vec<f64>,
}

/// Stepwise driver of the pretraining loop.
pub struct Trainer<'a> {
    config: TrainConfig,
    config_hash: String,
    network: Network,
    dataset: &'a LabeledDataset,
    bank: Option<&'a dyn VariantSource>,
    state: TrainState,
    steps_per_epoch: usize,
    /// Replaces the schedule with a constant rate when set.
    pub fixed_lr: Option<f64>,
    pub step_losses: Vec<f64>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: &TrainConfig, dataset: &'a LabeledDataset, bank: Option<&'a dyn VariantSource>) -> Result<Self> {
        config.validate()?;
        let network = network_for(config)?;
        let params = network.init(config.seed)?;
        let optimizer = Optimizer::new(config.optimizer, config.weight_decay, &params)?;
        let target = match config.momentum {
            Some(m) if config.method.uses_target_network() => Some(EmaState::new(&params, m.base, m.end)?),
            _ => None,
        };
        let queue = match (config.method, config.queue_size) {
            (Method::Moco, Some(cap)) => {
                let mut rng = SampleRng::from_parts(&[config.seed, QUEUE_TAG]);
                Some(KeyQueue::random(cap, config.heads.projector.out, &mut rng)?)
            }
            _ => None,
        };
        let state = TrainState {
            params,
            optimizer,
            target,
            queue,
            epoch: 0,
            step: 0,
        };
        Self::with_state(config, dataset, bank, state)
    }

    /// Continues from `checkpoint`; the config must hash identically.
    pub fn resume(
        config: &TrainConfig,
        dataset: &'a LabeledDataset,
        bank: Option<&'a dyn VariantSource>,
        checkpoint: Checkpoint,
    ) -> Result<Self> {
        config.validate()?;
        let hash = config.config_hash()?;
        if hash != checkpoint.config_hash {
            return Err(Error::Config(format!(
                "checkpoint was written by config {} but this run is {hash}",
                checkpoint.config_hash
            )));
        }
        Self::with_state(config, dataset, bank, checkpoint.state)
    }

    fn with_state(
        config: &TrainConfig,
        dataset: &'a LabeledDataset,
        bank: Option<&'a dyn VariantSource>,
        state: TrainState,
    ) -> Result<Self> {
        dataset.validate()?;
        if config.augmentation.generative.p0 > 0.0 && bank.is_none() {
            return Err(Error::Config("generative p0 > 0 needs a sample bank".into()));
        }
        let steps_per_epoch = steps_per_epoch(dataset.len(), config.batch_size);
        if steps_per_epoch == 0 {
            return Err(Error::InsufficientData(format!(
                "{} images cannot form a batch",
                dataset.len()
            )));
        }
        Ok(Trainer {
            config: config.clone(),
            config_hash: config.config_hash()?,
            network: network_for(config)?,
            dataset,
            bank,
            state,
            steps_per_epoch,
            fixed_lr: None,
            step_losses: Vec::new(),
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_epoch * self.config.epochs
    }

    pub fn is_done(&self) -> bool {
        self.state.epoch >= self.config.epochs
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if let Some(lr) = self.fixed_lr {
            return lr;
        }
        let peak = scaled_lr(self.config.base_lr, self.config.batch_size);
        cosine_lr(
            step,
            self.total_steps(),
            self.config.warmup_epochs * self.steps_per_epoch,
            peak,
        )
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            config_hash: self.config_hash.clone(),
            state: self.state.clone(),
        }
    }

    fn views(&self, ids: &[usize], epoch: usize) -> Result<(Vec<Image>, Vec<Image>)> {
        let seed = self.config.seed;
        let spec = &self.config.augmentation;
        let pairs: Vec<(Image, Image)> = parallel::install(|| {
            ids.par_iter()
                .map(|&i| {
                    let mut r1 = SampleRng::new(seed, epoch as u64, i as u64, 0);
                    let mut r2 = SampleRng::new(seed, epoch as u64, i as u64, 1);
                    apply_pipeline(spec, i as u64, &self.dataset.images[i], self.bank, [&mut r1, &mut r2])
                })
                .collect::<Result<_>>()
        })?;
        Ok(pairs.into_iter().unzip())
    }

    fn loss_and_grads(&mut self, x1: &Tensor, x2: &Tensor) -> Result<(f64, Gradients)> {
        let net = &self.network;
        let cfg = &self.config;
        let mut g = Graph::new();
        let vars = self.state.params.bind(&mut g, true);
        let online = |g: &mut Graph, x: &Tensor| -> Result<_> {
            let xv = g.constant(x.clone());
            let h = net.encode(g, &vars, xv)?;
            net.project(g, &vars, h)
        };
        let z1 = online(&mut g, x1)?;
        let z2 = online(&mut g, x2)?;
        let target_keys = |x: &Tensor| -> Result<Tensor> {
            let t = self
                .state
                .target
                .as_ref()
                .ok_or_else(|| Error::Contract("missing target network".into()))?;
            net.embed(&t.target, x)
        };
        let loss = match cfg.method {
            Method::Simclr => ntxent_loss(&mut g, z1, z2, cfg.temperature)?,
            Method::Moco => {
                let k1 = target_keys(x1)?;
                let k2 = target_keys(x2)?;
                let queue = self
                    .state
                    .queue
                    .as_mut()
                    .ok_or_else(|| Error::Contract("missing key queue".into()))?;
                let negatives = queue.as_tensor();
                let a = infonce_loss(&mut g, z1, &k2, &negatives, cfg.temperature)?;
                let b = infonce_loss(&mut g, z2, &k1, &negatives, cfg.temperature)?;
                queue.enqueue(&k1)?;
                queue.enqueue(&k2)?;
                let s = g.add(a, b)?;
                g.scale(s, 0.5)?
            }
            Method::Byol => {
                let t1 = g.constant(target_keys(x1)?);
                let t2 = g.constant(target_keys(x2)?);
                let p1 = net.predict(&mut g, &vars, z1)?;
                let p2 = net.predict(&mut g, &vars, z2)?;
                byol_loss(&mut g, p1, t2, p2, t1)?
            }
            Method::Simsiam => {
                let p1 = net.predict(&mut g, &vars, z1)?;
                let p2 = net.predict(&mut g, &vars, z2)?;
                simsiam_loss(&mut g, p1, z2, p2, z1)?
            }
            Method::BarlowTwins => {
                barlow_twins_loss(&mut g, z1, z2, cfg.barlow_lambda, cfg.barlow_scale, cfg.barlow_eps)?
            }
        };
        let value = g.value(loss).item()?;
        if !value.is_finite() {
            return Ok((value, Gradients::new()));
        }
        let mut grads = g.backward(loss)?;
        if let Some(clip) = cfg.grad_clip {
            clip_global_norm(&mut grads, clip)?;
        }
        Ok((value, grads))
    }

    fn abort(&self, step: usize, lr: f64, loss: f64) -> Error {
        let from = self.step_losses.len().saturating_sub(TRACE_LEN);
        Error::NumericalAbort {
            step,
            lr,
            loss,
            trace: self.step_losses[from..].to_vec(),
        }
    }

    /// Runs the next epoch and returns its metrics row.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        if self.is_done() {
            return Err(Error::Contract("training already finished".into()));
        }
        let started = Instant::now();
        let epoch = self.state.epoch;
        let order = epoch_order(self.config.seed, epoch, self.dataset.len());
        let mut sum = 0.0;
        let mut last_lr = 0.0;
        for ids in order.chunks(self.config.batch_size).take(self.steps_per_epoch) {
            let step = self.state.step;
            let lr = self.lr_at(step);
            let (v1, v2) = self.views(ids, epoch)?;
            let x1 = self.network.input_tensor(&v1)?;
            let x2 = self.network.input_tensor(&v2)?;
            let (loss, grads) = match self.loss_and_grads(&x1, &x2) {
                Err(Error::NonFinite(_)) => (f64::NAN, Gradients::new()),
                other => other?,
            };
            if !loss.is_finite() {
                return Err(self.abort(step, lr, loss));
            }
            self.state.optimizer.step(&mut self.state.params, &grads, lr)?;
            self.state.step += 1;
            let progress = self.state.step as f64 / self.total_steps() as f64;
            if let Some(t) = &mut self.state.target {
                t.update(&self.state.params, progress)?;
            }
            self.step_losses.push(loss);
            sum += loss;
            last_lr = lr;
        }
        self.state.epoch += 1;
        Ok(EpochMetrics {
            epoch,
            step: self.state.step,
            lr: last_lr,
            loss: sum / self.steps_per_epoch as f64,
            wall_ms: started.elapsed().as_millis() as u64,
        })
    }

    /// Runs the remaining epochs, calling `on_epoch` after each.
    pub fn run_with(
        &mut self,
        mut on_epoch: impl FnMut(&Self, &EpochMetrics) -> Result<()>,
    ) -> Result<Vec<EpochMetrics>> {
        let mut rows = Vec::new();
        while !self.is_done() {
            let m = self.run_epoch()?;
            on_epoch(self, &m)?;
            rows.push(m);
        }
        Ok(rows)
    }
}

fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> Result<()> {
    let norm = grads.values().flat_map(|t| t.data()).map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm {
        let f = max_norm / norm;
        for t in grads.values_mut() {
            *t = t.map(|v| v * f)?;
        }
    }
    Ok(())
}

/// Trains `config` from scratch to completion.
pub fn pretrain(
    config: &TrainConfig,
    dataset: &LabeledDataset,
    bank: Option<&dyn VariantSource>,
) -> Result<TrainOutcome> {
    let mut t = Trainer::new(config, dataset, bank)?;
    let metrics = t.run_with(|_, _| Ok(()))?;
    Ok(TrainOutcome {
        checkpoint: t.checkpoint(),
        metrics,
        step_losses: t.step_losses,
    })
}
