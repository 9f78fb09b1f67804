use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::codec::{put_f64, put_u16, put_u32, put_u64, ByteReader};
use super::shapes::{render, ShapeLatent, MAX_CLASSES};
use crate::augmentation::{Image, SampleRng};
use crate::error::{Error, Result};
use crate::numerics::write_atomic;

pub const DATASET_MAGIC: &[u8; 4] = b"GDST";
pub const DATASET_VERSION: u32 = 1;
pub const MIN_DATASET_SIZE: usize = 16;

const SHAPES_TAG: u64 = 0x5348_4150; // "SHAP"

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Eval => 1,
        }
    }
}

/// Images with class labels; synthetic sets also carry their latents.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub images: Vec<Image>,
    pub labels: Vec<u32>,
    pub latents: Option<Vec<ShapeLatent>>,
    pub split: Split,
    pub n_classes: usize,
}

/// The rng that draws the latent of sample `index` of a shapes split.
pub fn source_rng(seed: u64, split: Split, index: usize) -> SampleRng {
    SampleRng::from_parts(&[SHAPES_TAG, seed, split.code() as u64, index as u64])
}

/// Training split of the shapes benchmark.
pub fn make_shapes_dataset(n_classes: usize, n_per_class: usize, size: usize, seed: u64) -> Result<LabeledDataset> {
    make_shapes_split(n_classes, n_per_class, size, seed, Split::Train)
}

/// Labels cycle through `0..n_classes`, so sample `i` has class `i % n_classes`.
pub fn make_shapes_split(
    n_classes: usize,
    n_per_class: usize,
    size: usize,
    seed: u64,
    split: Split,
) -> Result<LabeledDataset> {
    if !(2..=MAX_CLASSES).contains(&n_classes) {
        return Err(Error::Config(format!(
            "shapes dataset needs 2..={MAX_CLASSES} classes, got {n_classes}"
        )));
    }
    if n_per_class < 2 {
        return Err(Error::Config(format!(
            "need at least 2 images per class, got {n_per_class}"
        )));
    }
    if !(MIN_DATASET_SIZE..=u16::MAX as usize).contains(&size) {
        return Err(Error::Config(format!(
            "image size {size} outside {MIN_DATASET_SIZE}..=65535"
        )));
    }
    let n = n_classes * n_per_class;
    let latents: Vec<ShapeLatent> = (0..n)
        .map(|i| ShapeLatent::draw((i % n_classes) as u32, &mut source_rng(seed, split, i)))
        .collect();
    let images = crate::parallel::install(|| {
        use rayon::prelude::*;
        latents.par_iter().map(|l| render(l, size)).collect()
    });
    Ok(LabeledDataset {
        labels: latents.iter().map(|l| l.class_id).collect(),
        images,
        latents: Some(latents),
        split,
        n_classes,
    })
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image_size(&self) -> (usize, usize) {
        self.images.first().map(|i| (i.height(), i.width())).unwrap_or((0, 0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.images.len() {
            return Err(Error::Shape("labels and images differ in length".into()));
        }
        if let Some(l) = &self.latents {
            if l.len() != self.images.len() {
                return Err(Error::Shape("latents and images differ in length".into()));
            }
            if l.iter().zip(&self.labels).any(|(l, &y)| l.class_id != y) {
                return Err(Error::Contract("latent class disagrees with label".into()));
            }
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y as usize >= self.n_classes) {
            return Err(Error::Config(format!("label {y} outside 0..{}", self.n_classes)));
        }
        let dims = self.image_size();
        if self.images.iter().any(|i| (i.height(), i.width()) != dims) {
            return Err(Error::Shape("images differ in size".into()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let (h, w) = self.image_size();
        let mut buf = Vec::with_capacity(32 + self.len() * (h * w * 3 + 64));
        buf.extend_from_slice(DATASET_MAGIC);
        put_u32(&mut buf, DATASET_VERSION);
        buf.push(self.split.code());
        put_u32(&mut buf, self.len() as u32);
        put_u32(&mut buf, self.n_classes as u32);
        put_u16(&mut buf, h as u16);
        put_u16(&mut buf, w as u16);
        buf.push(self.latents.is_some() as u8);
        for &y in &self.labels {
            put_u32(&mut buf, y);
        }
        for l in self.latents.iter().flatten() {
            put_u32(&mut buf, l.class_id);
            for v in [l.angle, l.scale, l.tx, l.ty] {
                put_f64(&mut buf, v);
            }
            buf.extend_from_slice(&l.foreground);
            buf.extend_from_slice(&l.background);
            put_u64(&mut buf, l.texture_seed);
        }
        for img in &self.images {
            buf.extend_from_slice(img.pixels());
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = ByteReader::new(bytes, origin);
        r.magic(DATASET_MAGIC)?;
        let version = r.u32("header")?;
        if version != DATASET_VERSION {
            return Err(r.bad(format!("unsupported version {version}")));
        }
        let split = match r.u8("header")? {
            0 => Split::Train,
            1 => Split::Eval,
            s => return Err(r.bad(format!("unknown split code {s}"))),
        };
        let n = r.u32("header")? as usize;
        let n_classes = r.u32("header")? as usize;
        let h = r.u16("header")? as usize;
        let w = r.u16("header")? as usize;
        let has_latents = r.u8("header")? != 0;
        let labels = (0..n).map(|_| r.u32("labels")).collect::<Result<Vec<_>>>()?;
        let latents = if has_latents {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let class_id = r.u32("latents")?;
                let angle = r.f64("latents")?;
                let scale = r.f64("latents")?;
                let tx = r.f64("latents")?;
                let ty = r.f64("latents")?;
                let fg = r.take(3, "latents")?;
                let bg = r.take(3, "latents")?;
                out.push(ShapeLatent {
                    class_id,
                    angle,
                    scale,
                    tx,
                    ty,
                    foreground: [fg[0], fg[1], fg[2]],
                    background: [bg[0], bg[1], bg[2]],
                    texture_seed: r.u64("latents")?,
                });
            }
            Some(out)
        } else {
            None
        };
        let mut images = Vec::with_capacity(n);
        for _ in 0..n {
            let px = r.take(h * w * 3, "pixels")?;
            images.push(Image::new(h, w, px.to_vec()).map_err(|e| r.bad(e.to_string()))?);
        }
        r.finish()?;
        let ds = LabeledDataset {
            images,
            labels,
            latents,
            split,
            n_classes,
        };
        ds.validate().map_err(|e| r.bad(e.to_string()))?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Content hash of the serialized dataset (first 16 hex digits of SHA-256).
    pub fn dataset_id(&self) -> Result<String> {
        Ok(short_hash(&self.to_bytes()?))
    }
}

pub fn short_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_and_labels() {
        let ds = make_shapes_dataset(10, 20, 16, 7).unwrap();
        assert_eq!(ds.len(), 200);
        for c in 0..10u32 {
            assert_eq!(ds.labels.iter().filter(|&&y| y == c).count(), 20);
        }
        ds.validate().unwrap();
    }

    #[test]
    fn same_class_samples_differ_but_share_label() {
        let ds = make_shapes_dataset(4, 12, 16, 3).unwrap();
        let lat = ds.latents.as_ref().unwrap();
        for i in 0..ds.len() {
            assert_eq!(lat[i].class_id, ds.labels[i]);
            for j in i + 1..ds.len() {
                if ds.labels[i] == ds.labels[j] {
                    assert_ne!(lat[i], lat[j]);
                    assert_ne!(ds.images[i], ds.images[j]);
                }
            }
        }
    }

    #[test]
    fn preconditions() {
        assert!(matches!(make_shapes_dataset(1, 10, 32, 0), Err(Error::Config(_))));
        assert!(matches!(make_shapes_dataset(3, 1, 32, 0), Err(Error::Config(_))));
        assert!(matches!(make_shapes_dataset(3, 10, 15, 0), Err(Error::Config(_))));
    }

    #[test]
    fn file_roundtrip_and_determinism() {
        let a = make_shapes_split(3, 4, 16, 11, Split::Eval).unwrap();
        let b = make_shapes_split(3, 4, 16, 11, Split::Eval).unwrap();
        let t = make_shapes_split(3, 4, 16, 11, Split::Train).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.images, t.images);
        let bytes = a.to_bytes().unwrap();
        let back = LabeledDataset::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, a);
        assert!(LabeledDataset::from_bytes(&bytes[..bytes.len() - 1], Path::new("mem")).is_err());
        assert_eq!(a.dataset_id().unwrap(), b.dataset_id().unwrap());
    }
}
