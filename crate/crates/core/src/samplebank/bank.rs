use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::codec::{put_u16, put_u32, put_u64, ByteReader};
use super::dataset::LabeledDataset;
use super::shapes::{oracle_regenerate, render, ShapeLatent};
use crate::augmentation::{Image, SampleRng, VariantSource};
use crate::error::{Error, Result};
use crate::numerics::write_atomic;

pub const BANK_MAGIC: &[u8; 4] = b"GBNK";
pub const BANK_VERSION: u32 = 1;
pub const DEFAULT_K: usize = 10;

const BANK_TAG: u64 = 0x424E_4B56; // "BNKV"
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 2 + 2 + 1;
const ENTRY_LEN: usize = 16;

/// K pre-generated variants for each of N source ids, all at one resolution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleBank {
    k: usize,
    height: usize,
    width: usize,
    ids: Vec<u64>,
    offsets: Vec<u64>,
    lookup: HashMap<u64, usize>,
    payload: Vec<u8>,
}

/// How bank variants are produced from a synthetic source.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    /// Same class, pose and appearance redrawn per variant.
    Oracle,
    /// Re-renders the stored latent unchanged (every variant equals its source).
    Replay,
}

/// The rng for variant `variant` of `source_id`; keyed by id, never by position.
pub fn variant_rng(seed: u64, source_id: u64, variant: usize) -> SampleRng {
    SampleRng::from_parts(&[BANK_TAG, seed, source_id, variant as u64])
}

fn latents_of(dataset: &LabeledDataset) -> Result<&[ShapeLatent]> {
    dataset
        .latents
        .as_deref()
        .ok_or_else(|| Error::Config("the oracle generator needs a synthetic dataset with latents".into()))
}

/// The latents the oracle draws for every (source, variant), in bank order.
pub fn oracle_variant_latents(dataset: &LabeledDataset, k: usize, seed: u64) -> Result<Vec<Vec<ShapeLatent>>> {
    let latents = latents_of(dataset)?;
    let (size, _) = dataset.image_size();
    Ok(latents
        .iter()
        .enumerate()
        .map(|(i, l)| {
            (0..k)
                .map(|v| oracle_regenerate(l, size, &mut variant_rng(seed, i as u64, v)).0)
                .collect()
        })
        .collect())
}

/// Builds a bank over `dataset` (source id = dataset index) with `k` variants each.
pub fn build_bank(dataset: &LabeledDataset, generator: Generator, k: usize, seed: u64) -> Result<SampleBank> {
    let latents = latents_of(dataset)?;
    let (size, w) = dataset.image_size();
    if size != w {
        return Err(Error::Shape("shapes datasets are square".into()));
    }
    build_bank_with(dataset.len(), k, |i, v| {
        Ok(match generator {
            Generator::Oracle => oracle_regenerate(&latents[i], size, &mut variant_rng(seed, i as u64, v)).1,
            Generator::Replay => render(&latents[i], size),
        })
    })
}

/// Builds a bank from an arbitrary per-(source, variant) generator, in parallel
/// over sources. Source ids are `0..n`.
pub fn build_bank_with(
    n: usize,
    k: usize,
    generate: impl Fn(usize, usize) -> Result<Image> + Sync,
) -> Result<SampleBank> {
    if k == 0 {
        return Err(Error::Config("bank needs k >= 1 variants per source".into()));
    }
    let variants: Vec<Vec<Image>> = crate::parallel::install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| (0..k).map(|v| generate(i, v)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()
    })?;
    SampleBank::from_variants((0..n as u64).zip(variants).collect())
}

impl SampleBank {
    /// Assembles a bank from `(source id, variants)` pairs, in the given order.
    pub fn from_variants(sources: Vec<(u64, Vec<Image>)>) -> Result<Self> {
        let k = sources.first().map_or(0, |(_, v)| v.len());
        if k == 0 {
            return Err(Error::Config(
                "bank needs at least one source with k >= 1 variants".into(),
            ));
        }
        let first = &sources[0].1[0];
        let (height, width) = (first.height(), first.width());
        if height > u16::MAX as usize || width > u16::MAX as usize {
            return Err(Error::Config("bank images larger than 65535 pixels per side".into()));
        }
        let img_bytes = height * width * 3;
        let mut bank = SampleBank {
            k,
            height,
            width,
            ids: Vec::with_capacity(sources.len()),
            offsets: Vec::with_capacity(sources.len()),
            lookup: HashMap::with_capacity(sources.len()),
            payload: Vec::with_capacity(sources.len() * k * img_bytes),
        };
        for (id, variants) in sources {
            if variants.len() != k {
                return Err(Error::Config(format!(
                    "source {id} has {} variants, expected {k}",
                    variants.len()
                )));
            }
            if bank.lookup.insert(id, bank.ids.len()).is_some() {
                return Err(Error::Config(format!("duplicate source id {id}")));
            }
            bank.ids.push(id);
            bank.offsets.push(bank.payload.len() as u64);
            for v in variants {
                if (v.height(), v.width()) != (height, width) {
                    return Err(Error::Shape(format!(
                        "variant of source {id} is {}x{}, bank is {height}x{width}",
                        v.height(),
                        v.width()
                    )));
                }
                bank.payload.extend_from_slice(v.pixels());
            }
        }
        Ok(bank)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn total_variants(&self) -> usize {
        self.len() * self.k
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn contains(&self, id: u64) -> bool {
        self.lookup.contains_key(&id)
    }

    pub fn get(&self, id: u64, variant: usize) -> Result<Image> {
        let pos = *self.lookup.get(&id).ok_or(Error::MissingVariant(id))?;
        if variant >= self.k {
            return Err(Error::Contract(format!("variant {variant} >= k = {}", self.k)));
        }
        let img_bytes = self.height * self.width * 3;
        let start = self.offsets[pos] as usize + variant * img_bytes;
        Image::new(self.height, self.width, self.payload[start..start + img_bytes].to_vec())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.len() * ENTRY_LEN + self.payload.len());
        buf.extend_from_slice(BANK_MAGIC);
        put_u32(&mut buf, BANK_VERSION);
        put_u32(&mut buf, self.len() as u32);
        put_u32(&mut buf, self.k as u32);
        put_u16(&mut buf, self.height as u16);
        put_u16(&mut buf, self.width as u16);
        buf.push(3);
        for (&id, &off) in self.ids.iter().zip(&self.offsets) {
            put_u64(&mut buf, id);
            put_u64(&mut buf, off);
        }
        buf.extend_from_slice(&self.payload);
        buf
    }

    /// Parses a bank file. Entry offsets are relative to the start of the payload.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = ByteReader::new(bytes, origin);
        r.magic(BANK_MAGIC)?;
        let version = r.u32("header")?;
        if version != BANK_VERSION {
            return Err(r.bad(format!("unsupported version {version}")));
        }
        let n = r.u32("header")? as usize;
        let k = r.u32("header")? as usize;
        let height = r.u16("header")? as usize;
        let width = r.u16("header")? as usize;
        let channels = r.u8("header")?;
        if channels != 3 {
            return Err(r.bad(format!("expected 3 channels, found {channels}")));
        }
        if k == 0 {
            return Err(r.bad("k = 0"));
        }
        let mut ids = Vec::with_capacity(n);
        let mut offsets = Vec::with_capacity(n);
        let mut lookup = HashMap::with_capacity(n);
        for pos in 0..n {
            let id = r.u64("index")?;
            let off = r.u64("index")?;
            if lookup.insert(id, pos).is_some() {
                return Err(r.bad(format!("duplicate source id {id}")));
            }
            ids.push(id);
            offsets.push(off);
        }
        let payload = r.rest();
        let expected = n * k * height * width * 3;
        if payload.len() != expected {
            return Err(r.bad(format!(
                "payload has {} bytes, header implies {expected}",
                payload.len()
            )));
        }
        let block = (k * height * width * 3) as u64;
        if offsets
            .iter()
            .any(|&o| o.checked_add(block).is_none_or(|end| end > expected as u64))
        {
            return Err(r.bad("entry offset outside payload"));
        }
        Ok(SampleBank {
            k,
            height,
            width,
            ids,
            offsets,
            lookup,
            payload: payload.to_vec(),
        })
    }

    /// Atomic write; no partial file survives a failure.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

impl VariantSource for SampleBank {
    fn variant_count(&self, source_id: u64) -> Option<usize> {
        self.contains(source_id).then_some(self.k)
    }

    fn variant(&self, source_id: u64, index: usize) -> Result<Image> {
        self.get(source_id, index)
    }
}

/// One of the K variants of `source_id`, uniformly at random.
pub fn sample_variant(bank: &SampleBank, source_id: u64, rng: &mut SampleRng) -> Result<Image> {
    if !bank.contains(source_id) {
        return Err(Error::MissingVariant(source_id));
    }
    bank.get(source_id, rng.below(bank.k))
}

/// External-bank manifest: variant image paths per source id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportManifest {
    pub k: usize,
    pub sources: Vec<ImportSource>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportSource {
    pub id: u64,
    pub variants: Vec<PathBuf>,
}

/// Builds a bank from a JSON manifest of PNG files. Relative paths resolve
/// against the manifest's directory.
pub fn import_bank(manifest_path: &Path) -> Result<SampleBank> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: ImportManifest = serde_json::from_str(&text)?;
    if manifest.k == 0 {
        return Err(Error::Config("manifest k must be >= 1".into()));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut sources = Vec::with_capacity(manifest.sources.len());
    for s in &manifest.sources {
        if s.variants.len() != manifest.k {
            return Err(Error::Config(format!(
                "source {} lists {} variants, manifest k is {}",
                s.id,
                s.variants.len(),
                manifest.k
            )));
        }
        let imgs = s
            .variants
            .iter()
            .map(|p| load_png(&base.join(p)))
            .collect::<Result<Vec<_>>>()?;
        sources.push((s.id, imgs));
    }
    SampleBank::from_variants(sources)
}

pub fn load_png(path: &Path) -> Result<Image> {
    let decoded = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    Image::new(h as usize, w as usize, rgb.into_raw())
}

pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    image::save_buffer(
        path,
        img.pixels(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Label audit of an oracle bank: every stored variant must be the rendering of
/// a latent whose class equals the source label.
pub fn audit_oracle_bank(dataset: &LabeledDataset, bank: &SampleBank, seed: u64) -> Result<usize> {
    let latents = oracle_variant_latents(dataset, bank.k(), seed)?;
    let (size, _) = dataset.image_size();
    let mut checked = 0;
    for (i, per_source) in latents.iter().enumerate() {
        for (v, l) in per_source.iter().enumerate() {
            if l.class_id != dataset.labels[i] {
                return Err(Error::Contract(format!("variant {v} of source {i} changed class")));
            }
            if render(l, size) != bank.get(i as u64, v)? {
                return Err(Error::Contract(format!(
                    "variant {v} of source {i} is not the rendering of its latent"
                )));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplebank::make_shapes_dataset;

    fn small() -> LabeledDataset {
        make_shapes_dataset(3, 4, 16, 2).unwrap()
    }

    #[test]
    fn counts_and_replay() {
        let ds = small();
        let bank = build_bank(&ds, Generator::Oracle, 5, 9).unwrap();
        assert_eq!(bank.total_variants(), 60);
        let replay = build_bank(&ds, Generator::Replay, 1, 9).unwrap();
        for i in 0..ds.len() {
            assert_eq!(replay.get(i as u64, 0).unwrap(), ds.images[i]);
        }
        assert!(matches!(
            build_bank(&ds, Generator::Oracle, 0, 9),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn roundtrip_and_rebuild_identical() {
        let ds = small();
        let a = build_bank(&ds, Generator::Oracle, 3, 4).unwrap();
        let b = build_bank(&ds, Generator::Oracle, 3, 4).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let back = SampleBank::from_bytes(&a.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back, a);
        let bytes = a.to_bytes();
        assert!(SampleBank::from_bytes(&bytes[..bytes.len() - 3], Path::new("mem")).is_err());
        assert_eq!(&bytes[..4], b"GBNK");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 12);
        assert_eq!(bytes[20], 3);
    }

    #[test]
    fn variant_seeds_ignore_source_order() {
        let ds = small();
        let forward = build_bank(&ds, Generator::Oracle, 2, 1).unwrap();
        // build in reverse order and look up by id
        let latents = ds.latents.as_ref().unwrap();
        let reversed: Vec<(u64, Vec<Image>)> = (0..ds.len())
            .rev()
            .map(|i| {
                let v = (0..2)
                    .map(|v| oracle_regenerate(&latents[i], 16, &mut variant_rng(1, i as u64, v)).1)
                    .collect();
                (i as u64, v)
            })
            .collect();
        let rev = SampleBank::from_variants(reversed).unwrap();
        for i in 0..ds.len() as u64 {
            for v in 0..2 {
                assert_eq!(rev.get(i, v).unwrap(), forward.get(i, v).unwrap());
            }
        }
    }

    #[test]
    fn label_audit_passes() {
        let ds = small();
        let bank = build_bank(&ds, Generator::Oracle, 4, 5).unwrap();
        assert_eq!(audit_oracle_bank(&ds, &bank, 5).unwrap(), 48);
        assert!(audit_oracle_bank(&ds, &bank, 6).is_err());
    }

    #[test]
    fn sampling_contract() {
        let ds = small();
        let bank = build_bank(&ds, Generator::Oracle, 1, 0).unwrap();
        let mut rng = SampleRng::from_parts(&[0]);
        for _ in 0..20 {
            assert_eq!(sample_variant(&bank, 2, &mut rng).unwrap(), bank.get(2, 0).unwrap());
        }
        assert!(matches!(
            sample_variant(&bank, 99, &mut rng),
            Err(Error::MissingVariant(99))
        ));
    }

    #[test]
    fn png_import() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small();
        let mut sources = Vec::new();
        for i in 0..2u64 {
            let mut paths = Vec::new();
            for v in 0..2 {
                let name = format!("s{i}_v{v}.png");
                save_png(&ds.images[(i as usize + v) % ds.len()], &dir.path().join(&name)).unwrap();
                paths.push(PathBuf::from(name));
            }
            sources.push(ImportSource {
                id: 100 + i,
                variants: paths,
            });
        }
        let manifest = ImportManifest { k: 2, sources };
        let mpath = dir.path().join("manifest.json");
        std::fs::write(&mpath, serde_json::to_string(&manifest).unwrap()).unwrap();
        let bank = import_bank(&mpath).unwrap();
        assert_eq!(bank.get(101, 1).unwrap(), ds.images[2]);
        assert_eq!(bank.ids(), [100, 101]);
    }
}
