use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::repr::ReprMatrix;
use crate::augmentation::derive_seed;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, Tensor};
use crate::training::{cosine_lr, scaled_lr, Optimizer, OptimizerSpec, DEFAULT_MOMENTUM, LARS_EPS, LARS_TRUST};

/// Trust coefficient of the probe's LARS optimizer.
pub const PROBE_LARS_TRUST: f64 = LARS_TRUST;
pub const PROBE_EPOCHS: usize = 100;

fn default_standardize() -> bool {
    true
}

/// Linear-probe training settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub optimizer: OptimizerSpec,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub warmup_epochs: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Standardize each feature with training-split statistics before the linear layer.
    #[serde(default = "default_standardize")]
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            optimizer: OptimizerSpec::Lars {
                momentum: DEFAULT_MOMENTUM,
                trust: PROBE_LARS_TRUST,
                eps: LARS_EPS,
            },
            base_lr: 0.1,
            weight_decay: 0.0,
            batch_size: 512,
            warmup_epochs: 0,
            epochs: PROBE_EPOCHS,
            seed: 0,
            standardize: true,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size < 1 || self.epochs < 1 || self.warmup_epochs >= self.epochs {
            return Err(Error::Config(format!("invalid probe schedule {self:?}")));
        }
        if !(self.base_lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("invalid probe rates {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub top1: f64,
    /// Only reported with at least five classes.
    pub top5: Option<f64>,
    pub n_eval: usize,
    pub n_classes: usize,
}

/// Fraction of rows whose label is among the `k` highest scores; equal scores rank
/// the lower class index first.
pub fn topk_accuracy(scores: &Tensor, labels: &[u32], k: usize) -> Result<f64> {
    let (n, c) = scores.dims2()?;
    if k == 0 || k > c {
        return Err(Error::Config(format!("k = {k} with {c} classes")));
    }
    if labels.len() != n || n == 0 {
        return Err(Error::Shape(format!("{} labels for {n} score rows", labels.len())));
    }
    let mut hits = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        let y = y as usize;
        if y >= c {
            return Err(Error::Config(format!("label {y} with {c} classes")));
        }
        let row = scores.row(i);
        let s = row[y];
        let ahead = row
            .iter()
            .enumerate()
            .filter(|&(j, &v)| v > s || (v == s && j < y))
            .count();
        hits += usize::from(ahead < k);
    }
    Ok(hits as f64 / n as f64)
}

fn class_count(labels: &[u32], split: &str) -> Result<usize> {
    labels
        .iter()
        .max()
        .map(|&m| m as usize + 1)
        .ok_or_else(|| Error::InsufficientData(format!("empty {split} split")))
}

fn standardizer(rows: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, p) = (rows.rows(), rows.cols());
    let mut mean = vec![0.0; p];
    let mut var = vec![0.0; p];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(rows.row(i)) {
            *m += v / n as f64;
        }
    }
    for i in 0..n {
        for ((s, v), m) in var.iter_mut().zip(rows.row(i)).zip(&mean) {
            *s += (v - m).powi(2) / n as f64;
        }
    }
    let inv_std = var
        .iter()
        .map(|&v| if v > 1e-12 { 1.0 / v.sqrt() } else { 0.0 })
        .collect();
    (mean, inv_std)
}

fn apply_standardizer(rows: &Tensor, (mean, inv_std): &(Vec<f64>, Vec<f64>)) -> Result<Tensor> {
    let p = rows.cols();
    let data = rows
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| (v - mean[i % p]) * inv_std[i % p])
        .collect();
    Tensor::matrix(rows.rows(), p, data)
}

fn gather_rows(x: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let p = x.cols();
    let mut out = Vec::with_capacity(idx.len() * p);
    for &i in idx {
        out.extend_from_slice(x.row(i));
    }
    Tensor::matrix(idx.len(), p, out)
}

/// Trained linear classifier over (optionally standardized) representations.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbe {
    pub weights: ParamStore,
    standardizer: Option<(Vec<f64>, Vec<f64>)>,
}

impl LinearProbe {
    /// Class scores, one row per example column of `reps`.
    pub fn scores(&self, reps: &ReprMatrix) -> Result<Tensor> {
        let mut x = reps.example_rows();
        if let Some(s) = &self.standardizer {
            x = apply_standardizer(&x, s)?;
        }
        let w = self.weights.get(crate::numerics::ParamId(0));
        let b = self.weights.get(crate::numerics::ParamId(1));
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.constant(x), g.constant(w.clone()), g.constant(b.clone()));
        let z = g.matmul(xv, wv)?;
        let z = g.add_bias(z, bv)?;
        Ok(g.value(z).clone())
    }
}

/// Fits a softmax linear classifier on frozen training representations.
pub fn train_linear_probe(
    train: &ReprMatrix,
    labels: &[u32],
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<LinearProbe> {
    cfg.validate()?;
    let n = train.examples();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} examples", labels.len())));
    }
    let mut x = train.example_rows();
    let standardizer = cfg.standardize.then(|| standardizer(&x));
    if let Some(s) = &standardizer {
        x = apply_standardizer(&x, s)?;
    }
    let p = train.features();
    let mut weights = ParamStore::new();
    weights.push("probe.weight", Tensor::zeros(&[p, n_classes]));
    weights.push("probe.bias", Tensor::zeros(&[n_classes]));
    let mut opt = Optimizer::new(cfg.optimizer, cfg.weight_decay, &weights)?;
    let batch = cfg.batch_size.min(n);
    let steps = n.div_ceil(batch);
    let total = steps * cfg.epochs;
    let peak = scaled_lr(cfg.base_lr, cfg.batch_size);
    let targets: Vec<usize> = labels.iter().map(|&y| y as usize).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, epoch as u64]));
        order.shuffle(&mut rng);
        for idx in order.chunks(batch) {
            let xb = gather_rows(&x, idx)?;
            let yb: Vec<usize> = idx.iter().map(|&i| targets[i]).collect();
            let mut g = Graph::new();
            let vars = weights.bind(&mut g, true);
            let xv = g.constant(xb);
            let z = g.matmul(xv, vars[0])?;
            let z = g.add_bias(z, vars[1])?;
            let loss = g.cross_entropy(z, &yb)?;
            let grads = g.backward(loss)?;
            let lr = cosine_lr(step, total, cfg.warmup_epochs * steps, peak);
            opt.step(&mut weights, &grads, lr)?;
            step += 1;
        }
    }
    Ok(LinearProbe { weights, standardizer })
}

/// Trains on `train` and reports Top-1 (and Top-5 with five or more classes) on `eval`.
pub fn linear_probe(
    train: &ReprMatrix,
    train_labels: &[u32],
    eval: &ReprMatrix,
    eval_labels: &[u32],
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    let c_train = class_count(train_labels, "train")?;
    let c_eval = class_count(eval_labels, "eval")?;
    if c_train != c_eval {
        return Err(Error::Config(format!(
            "train split has {c_train} classes, eval split {c_eval}"
        )));
    }
    if c_train < 2 {
        return Err(Error::Config("linear probe needs at least 2 classes".into()));
    }
    if train.features() != eval.features() {
        return Err(Error::Shape(format!(
            "train features {} vs eval features {}",
            train.features(),
            eval.features()
        )));
    }
    if eval_labels.len() != eval.examples() {
        return Err(Error::Shape(format!(
            "{} labels for {} eval examples",
            eval_labels.len(),
            eval.examples()
        )));
    }
    let probe = train_linear_probe(train, train_labels, c_train, cfg)?;
    let scores = probe.scores(eval)?;
    Ok(ProbeResult {
        top1: topk_accuracy(&scores, eval_labels, 1)?,
        top5: if c_train >= 5 {
            Some(topk_accuracy(&scores, eval_labels, 5)?)
        } else {
            None
        },
        n_eval: eval.examples(),
        n_classes: c_train,
    })
}
