use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::augmentation::{derive_seed, Image};
use crate::error::{Error, Result};
use crate::numerics::{ConvGeometry, Graph, ParamStore, Tensor, Var};
use crate::ssl_objectives::{Heads, MlpSpec};

/// Every conv layer is 3×3, stride 2, padding 1, so each halves the side length.
pub const CONV: ConvGeometry = ConvGeometry {
    kernel: 3,
    stride: 2,
    padding: 1,
};

/// Backbone architecture.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EncoderSpec {
    /// Stride-2 conv stack with ReLU, flattened into one ReLU dense layer of width `fc`.
    Conv { channels: Vec<usize>, fc: usize },
    /// Dense ReLU layers over the flattened pixels.
    Mlp { hidden: Vec<usize>, out: usize },
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec::Conv {
            channels: vec![8, 16, 32],
            fc: 64,
        }
    }
}

impl EncoderSpec {
    /// Representation width.
    pub fn output_dim(&self) -> usize {
        match self {
            EncoderSpec::Conv { fc, .. } => *fc,
            EncoderSpec::Mlp { out, .. } => *out,
        }
    }

    fn conv_side(input: usize, layers: usize) -> usize {
        (0..layers).fold(input, |s, _| CONV.output_size(s))
    }

    pub fn validate(&self, input_size: usize) -> Result<()> {
        let widths: Vec<usize> = match self {
            EncoderSpec::Conv { channels, fc } => channels.iter().copied().chain([*fc]).collect(),
            EncoderSpec::Mlp { hidden, out } => hidden.iter().copied().chain([*out]).collect(),
        };
        if widths.contains(&0) {
            return Err(Error::Config("encoder widths must be positive".into()));
        }
        if let EncoderSpec::Conv { channels, .. } = self {
            if channels.is_empty() {
                return Err(Error::Config("conv encoder needs at least one conv layer".into()));
            }
            if input_size >> channels.len() == 0 {
                return Err(Error::Config(format!(
                    "{} stride-2 layers do not fit a {input_size}px input",
                    channels.len()
                )));
            }
        }
        Ok(())
    }
}

/// Encoder plus heads for a fixed square input size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    pub encoder: EncoderSpec,
    pub heads: Option<Heads>,
    pub input_size: usize,
}

fn he_normal(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect()).expect("shape")
}

fn push_dense(store: &mut ParamStore, prefix: &str, fan_in: usize, out: usize, rng: &mut ChaCha8Rng) {
    store.push(format!("{prefix}.weight"), he_normal(&[fan_in, out], fan_in, rng));
    store.push(format!("{prefix}.bias"), Tensor::zeros(&[out]));
}

fn dense(g: &mut Graph, vars: &[Var], at: usize, x: Var, relu: bool) -> Result<Var> {
    let z = g.matmul(x, vars[at])?;
    let z = g.add_bias(z, vars[at + 1])?;
    if relu {
        g.relu(z)
    } else {
        Ok(z)
    }
}

fn mlp_head(g: &mut Graph, vars: &[Var], at: usize, x: Var) -> Result<Var> {
    let h = dense(g, vars, at, x, true)?;
    dense(g, vars, at + 2, h, false)
}

impl Network {
    pub fn new(encoder: EncoderSpec, heads: Option<Heads>, input_size: usize) -> Result<Self> {
        encoder.validate(input_size)?;
        Ok(Network {
            encoder,
            heads,
            input_size,
        })
    }

    fn encoder_tensors(&self) -> usize {
        match &self.encoder {
            EncoderSpec::Conv { channels, .. } => 2 * (channels.len() + 1),
            EncoderSpec::Mlp { hidden, .. } => 2 * (hidden.len() + 1),
        }
    }

    fn input_dim(&self) -> usize {
        self.input_size * self.input_size * 3
    }

    /// Freshly initialized parameters: He-normal weights, zero biases.
    pub fn init(&self, seed: u64) -> Result<ParamStore> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x1417]));
        let mut s = ParamStore::new();
        match &self.encoder {
            EncoderSpec::Conv { channels, fc } => {
                let mut cin = 3;
                for (i, &c) in channels.iter().enumerate() {
                    let k = CONV.kernel;
                    s.push(
                        format!("encoder.conv{i}.weight"),
                        he_normal(&[k, k, cin, c], k * k * cin, &mut rng),
                    );
                    s.push(format!("encoder.conv{i}.bias"), Tensor::zeros(&[c]));
                    cin = c;
                }
                let side = EncoderSpec::conv_side(self.input_size, channels.len());
                push_dense(&mut s, "encoder.fc", side * side * cin, *fc, &mut rng);
            }
            EncoderSpec::Mlp { hidden, out } => {
                let mut fan_in = self.input_dim();
                for (i, &h) in hidden.iter().chain([out]).enumerate() {
                    push_dense(&mut s, &format!("encoder.mlp{i}"), fan_in, h, &mut rng);
                    fan_in = h;
                }
            }
        }
        if let Some(heads) = &self.heads {
            let mut head = |name: &str, fan_in: usize, m: MlpSpec| {
                push_dense(&mut s, &format!("{name}.0"), fan_in, m.hidden, &mut rng);
                push_dense(&mut s, &format!("{name}.1"), m.hidden, m.out, &mut rng);
            };
            head("projector", self.encoder.output_dim(), heads.projector);
            if let Some(p) = heads.predictor {
                head("predictor", heads.projector.out, p);
            }
        }
        Ok(s)
    }

    /// Number of tensors [`init`](Self::init) produces.
    pub fn tensor_count(&self) -> usize {
        let heads = self.heads.map_or(0, |h| 4 + if h.predictor.is_some() { 4 } else { 0 });
        self.encoder_tensors() + heads
    }

    pub fn check(&self, params: &ParamStore) -> Result<()> {
        let expected = self.tensor_count();
        if params.len() < self.encoder_tensors() || (self.heads.is_some() && params.len() != expected) {
            return Err(Error::Shape(format!(
                "network expects {expected} tensors, store has {}",
                params.len()
            )));
        }
        Ok(())
    }

    /// Pixels scaled to [-1, 1]; NHWC for conv encoders, flat rows for MLP ones.
    pub fn input_tensor(&self, images: &[Image]) -> Result<Tensor> {
        let s = self.input_size;
        let mut data = Vec::with_capacity(images.len() * self.input_dim());
        for img in images {
            if img.height() != s || img.width() != s {
                return Err(Error::Shape(format!(
                    "network expects {s}x{s} images, got {}x{}",
                    img.height(),
                    img.width()
                )));
            }
            data.extend(img.pixels().iter().map(|&v| v as f64 / 127.5 - 1.0));
        }
        let shape = match self.encoder {
            EncoderSpec::Conv { .. } => vec![images.len(), s, s, 3],
            EncoderSpec::Mlp { .. } => vec![images.len(), self.input_dim()],
        };
        Tensor::new(shape, data)
    }

    /// Encoder forward; `vars` are the bound parameters in store order.
    pub fn encode(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        match &self.encoder {
            EncoderSpec::Conv { channels, .. } => {
                let mut h = x;
                for i in 0..channels.len() {
                    h = g.conv2d(h, vars[2 * i], vars[2 * i + 1], CONV)?;
                    h = g.relu(h)?;
                }
                let shape = g.value(h).shape().to_vec();
                let flat = shape[1..].iter().product();
                h = g.reshape(h, vec![shape[0], flat])?;
                dense(g, vars, 2 * channels.len(), h, true)
            }
            EncoderSpec::Mlp { hidden, .. } => {
                let mut h = x;
                for i in 0..=hidden.len() {
                    h = dense(g, vars, 2 * i, h, true)?;
                }
                Ok(h)
            }
        }
    }

    pub fn project(&self, g: &mut Graph, vars: &[Var], h: Var) -> Result<Var> {
        if self.heads.is_none() {
            return Err(Error::Config("network has no projector".into()));
        }
        mlp_head(g, vars, self.encoder_tensors(), h)
    }

    pub fn predict(&self, g: &mut Graph, vars: &[Var], z: Var) -> Result<Var> {
        match self.heads {
            Some(Heads { predictor: Some(_), .. }) => mlp_head(g, vars, self.encoder_tensors() + 4, z),
            _ => Err(Error::Config("network has no predictor".into())),
        }
    }

    /// Gradient-free encoder outputs, one row per image, in chunks of `chunk`.
    pub fn represent(&self, params: &ParamStore, images: &[Image], chunk: usize) -> Result<Tensor> {
        self.check(params)?;
        let d = self.encoder.output_dim();
        let mut out = Vec::with_capacity(images.len() * d);
        for part in images.chunks(chunk.max(1)) {
            let mut g = Graph::new();
            let vars = params.bind(&mut g, false);
            let x = g.constant(self.input_tensor(part)?);
            let h = self.encode(&mut g, &vars, x)?;
            out.extend_from_slice(g.value(h).data());
        }
        Tensor::matrix(images.len(), d, out)
    }

    /// Gradient-free projector outputs (target-network keys).
    pub fn embed(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = params.bind(&mut g, false);
        let x = g.constant(x.clone());
        let h = self.encode(&mut g, &vars, x)?;
        let z = self.project(&mut g, &vars, h)?;
        Ok(g.value(z).clone())
    }
}
