use serde::{Deserialize, Serialize};

use crate::augmentation::Image;
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};
use crate::samplebank::{short_hash, LabeledDataset};
use crate::training::{EncoderSpec, Network};

/// Where a representation matrix came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub encoder_id: String,
    pub dataset_id: String,
}

/// Representations stored `features × examples`, one column per example.
#[derive(Clone, Debug, PartialEq)]
pub struct ReprMatrix {
    data: Tensor,
    pub provenance: Provenance,
}

impl ReprMatrix {
    pub fn new(data: Tensor, provenance: Provenance) -> Result<Self> {
        let (_, n) = data.dims2()?;
        if n < 2 {
            return Err(Error::InsufficientData(format!("need at least 2 examples, got {n}")));
        }
        if data.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("representation"));
        }
        Ok(ReprMatrix { data, provenance })
    }

    /// From one row per example.
    pub fn from_examples(rows: &Tensor, provenance: Provenance) -> Result<Self> {
        Self::new(rows.transpose()?, provenance)
    }

    /// Unlabelled matrix, handy for synthetic inputs.
    pub fn anonymous(data: Tensor) -> Result<Self> {
        Self::new(
            data,
            Provenance {
                encoder_id: "anonymous".into(),
                dataset_id: "anonymous".into(),
            },
        )
    }

    pub fn features(&self) -> usize {
        self.data.rows()
    }

    pub fn examples(&self) -> usize {
        self.data.cols()
    }

    pub fn matrix(&self) -> &Tensor {
        &self.data
    }

    /// One row per example.
    pub fn example_rows(&self) -> Tensor {
        self.data.transpose().expect("2-D")
    }

    /// Keeps the listed example columns, repeats allowed.
    pub fn select(&self, columns: &[usize]) -> Result<ReprMatrix> {
        let (p, n) = (self.features(), self.examples());
        if let Some(&c) = columns.iter().find(|&&c| c >= n) {
            return Err(Error::Shape(format!("column {c} out of {n}")));
        }
        let mut out = Vec::with_capacity(p * columns.len());
        for r in 0..p {
            let row = self.data.row(r);
            out.extend(columns.iter().map(|&c| row[c]));
        }
        ReprMatrix::new(Tensor::matrix(p, columns.len(), out)?, self.provenance.clone())
    }
}

/// A frozen image-to-vector map.
pub trait Encoder: Sync {
    fn id(&self) -> String;
    fn output_dim(&self) -> usize;
    /// One output row per image.
    fn encode(&self, images: &[Image]) -> Result<Tensor>;
}

/// Raw pixel values, flattened row-major.
pub struct IdentityEncoder {
    pub height: usize,
    pub width: usize,
}

impl Encoder for IdentityEncoder {
    fn id(&self) -> String {
        format!("identity-{}x{}", self.height, self.width)
    }

    fn output_dim(&self) -> usize {
        self.height * self.width * 3
    }

    fn encode(&self, images: &[Image]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(images.len() * self.output_dim());
        for img in images {
            if (img.height(), img.width()) != (self.height, self.width) {
                return Err(Error::Shape(format!(
                    "expected {}x{} image, got {}x{}",
                    self.height,
                    self.width,
                    img.height(),
                    img.width()
                )));
            }
            data.extend(img.pixels().iter().map(|&v| v as f64));
        }
        Tensor::matrix(images.len(), self.output_dim(), data)
    }
}

/// Encoder part of a trained (or freshly initialized) network.
pub struct FrozenEncoder {
    network: Network,
    params: ParamStore,
    id: String,
}

impl FrozenEncoder {
    pub fn new(encoder: EncoderSpec, input_size: usize, params: ParamStore) -> Result<Self> {
        let network = Network::new(encoder, None, input_size)?;
        let params = {
            let mut only = ParamStore::new();
            for (name, t) in params.iter().filter(|(n, _)| n.starts_with("encoder.")) {
                only.push(name, t.clone());
            }
            only
        };
        network.check(&params)?;
        let id = short_hash(&params.to_bytes()?);
        Ok(FrozenEncoder { network, params, id })
    }

    /// Seeded random initialization, the untrained reference.
    pub fn random(encoder: EncoderSpec, input_size: usize, seed: u64) -> Result<Self> {
        let network = Network::new(encoder.clone(), None, input_size)?;
        let params = network.init(seed)?;
        Self::new(encoder, input_size, params)
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }
}

impl Encoder for FrozenEncoder {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn output_dim(&self) -> usize {
        self.network.encoder.output_dim()
    }

    fn encode(&self, images: &[Image]) -> Result<Tensor> {
        self.network.represent(&self.params, images, 256)
    }
}

/// Latent parameters of the oracle renderer as features: class one-hot, pose and
/// colours. Only available for datasets that carry latents.
pub struct LatentEncoder;

impl LatentEncoder {
    pub fn extract(dataset: &LabeledDataset) -> Result<ReprMatrix> {
        let latents = dataset
            .latents
            .as_ref()
            .ok_or_else(|| Error::Config("dataset has no oracle latents".into()))?;
        let c = dataset.n_classes;
        let width = c + 6 + 6;
        let mut rows = Vec::with_capacity(latents.len() * width);
        for l in latents {
            let mut one_hot = vec![0.0; c];
            one_hot[l.class_id as usize % c] = 1.0;
            rows.extend(one_hot);
            rows.extend([
                l.angle.cos(),
                l.angle.sin(),
                l.scale,
                l.tx,
                l.ty,
                (l.texture_seed % 1000) as f64 / 1000.0,
            ]);
            rows.extend(l.foreground.iter().chain(&l.background).map(|&v| v as f64 / 255.0));
        }
        let t = Tensor::matrix(latents.len(), width, rows)?;
        ReprMatrix::from_examples(
            &t,
            Provenance {
                encoder_id: "oracle-latent".into(),
                dataset_id: dataset.dataset_id()?,
            },
        )
    }
}

/// Deterministic forward pass over the dataset, no augmentation; column `i` is image `i`.
pub fn extract_representations(encoder: &dyn Encoder, dataset: &LabeledDataset) -> Result<ReprMatrix> {
    let rows = encoder.encode(&dataset.images)?;
    ReprMatrix::from_examples(
        &rows,
        Provenance {
            encoder_id: encoder.id(),
            dataset_id: dataset.dataset_id()?,
        },
    )
}
