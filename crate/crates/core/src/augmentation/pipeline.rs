use serde::{Deserialize, Serialize};

use super::image::{Image, MIN_SIDE};
use super::rng::SampleRng;
use super::transforms::{apply_transform, TransformSpec};
use crate::error::{Error, Result};

/// Anything that can hand out pre-generated variants of a source image.
pub trait VariantSource: Sync {
    /// Number of variants stored for `source_id`, or `None` if it is unknown.
    fn variant_count(&self, source_id: u64) -> Option<usize>;
    fn variant(&self, source_id: u64, index: usize) -> Result<Image>;
}

/// Which views pass through the generative slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ViewRegime {
    #[serde(alias = "one")]
    View1Only,
    #[default]
    #[serde(alias = "both")]
    BothViews,
}

impl ViewRegime {
    pub fn applies_to(self, view: usize) -> bool {
        match self {
            ViewRegime::View1Only => view == 0,
            ViewRegime::BothViews => true,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ViewRegime::View1Only => "one",
            ViewRegime::BothViews => "both",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "one" | "view1_only" => Ok(ViewRegime::View1Only),
            "both" | "both_views" => Ok(ViewRegime::BothViews),
            other => Err(Error::Config(format!("unknown view regime {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GenerativeSlot {
    pub p0: f64,
    #[serde(default)]
    pub on_view: ViewRegime,
}

/// Two per-view transform lists plus the generative slot in front of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub output_size: usize,
    #[serde(default)]
    pub generative: GenerativeSlot,
    pub view1: Vec<TransformSpec>,
    pub view2: Vec<TransformSpec>,
}

impl PipelineSpec {
    pub fn view(&self, index: usize) -> &[TransformSpec] {
        if index == 0 {
            &self.view1
        } else {
            &self.view2
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p0 = self.generative.p0;
        if !(0.0..=1.0).contains(&p0) {
            return Err(Error::Config(format!("generative p0 {p0} outside [0,1]")));
        }
        if self.output_size < MIN_SIDE {
            return Err(Error::Config(format!(
                "output_size {} below {MIN_SIDE}",
                self.output_size
            )));
        }
        for (v, list) in [&self.view1, &self.view2].into_iter().enumerate() {
            let crops = list
                .iter()
                .filter(|t| matches!(t, TransformSpec::RandomResizedCrop { .. }))
                .count();
            if crops != 1 {
                return Err(Error::Config(format!(
                    "view {} needs exactly one random_resized_crop (it sets the output size), found {crops}",
                    v + 1
                )));
            }
            for t in list {
                t.validate()?;
            }
        }
        Ok(())
    }
}

/// Generative slot: with probability `p0` swaps `img` for a uniformly chosen bank
/// variant. Returns the image and the chosen variant index, if any.
pub fn generative_slot_traced(
    source_id: u64,
    img: &Image,
    bank: Option<&dyn VariantSource>,
    p0: f64,
    rng: &mut SampleRng,
) -> Result<(Image, Option<usize>)> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::Config(format!("generative p0 {p0} outside [0,1]")));
    }
    if p0 == 0.0 {
        return Ok((img.clone(), None));
    }
    let k = bank
        .and_then(|b| b.variant_count(source_id))
        .filter(|&k| k > 0)
        .ok_or(Error::MissingVariant(source_id))?;
    let bank = bank.expect("checked above");
    if !rng.bernoulli(p0) {
        return Ok((img.clone(), None));
    }
    let index = rng.below(k);
    Ok((bank.variant(source_id, index)?, Some(index)))
}

pub fn apply_generative_slot(
    source_id: u64,
    img: &Image,
    bank: Option<&dyn VariantSource>,
    p0: f64,
    rng: &mut SampleRng,
) -> Result<Image> {
    generative_slot_traced(source_id, img, bank, p0, rng).map(|(img, _)| img)
}

/// Runs one view: generative slot (if the regime covers this view), then the
/// view's transforms in order.
pub fn apply_view(
    spec: &PipelineSpec,
    view: usize,
    source_id: u64,
    img: &Image,
    bank: Option<&dyn VariantSource>,
    rng: &mut SampleRng,
) -> Result<Image> {
    let mut out = if spec.generative.on_view.applies_to(view) {
        apply_generative_slot(source_id, img, bank, spec.generative.p0, rng)?
    } else {
        img.clone()
    };
    for t in spec.view(view) {
        out = apply_transform(t, &out, rng, spec.output_size)?.0;
    }
    Ok(out)
}

/// Both views of one source image, each from its own rng stream.
pub fn apply_pipeline(
    spec: &PipelineSpec,
    source_id: u64,
    img: &Image,
    bank: Option<&dyn VariantSource>,
    rngs: [&mut SampleRng; 2],
) -> Result<(Image, Image)> {
    let [r1, r2] = rngs;
    let v1 = apply_view(spec, 0, source_id, img, bank, r1)?;
    let v2 = apply_view(spec, 1, source_id, img, bank, r2)?;
    Ok((v1, v2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    struct MapBank(HashMap<u64, Vec<Image>>);

    impl VariantSource for MapBank {
        fn variant_count(&self, id: u64) -> Option<usize> {
            self.0.get(&id).map(Vec::len)
        }
        fn variant(&self, id: u64, index: usize) -> Result<Image> {
            self.0
                .get(&id)
                .and_then(|v| v.get(index).cloned())
                .ok_or(Error::MissingVariant(id))
        }
    }

    fn tagged(v: u8) -> Image {
        Image::filled(8, 8, [v, v, v]).unwrap()
    }

    fn bank_k(k: usize) -> MapBank {
        MapBank(HashMap::from([(7, (0..k).map(|i| tagged(100 + i as u8)).collect())]))
    }

    fn gated_spec(p0: f64, on_view: ViewRegime) -> PipelineSpec {
        let off = vec![
            TransformSpec::RandomResizedCrop {
                min_scale: 1.0,
                max_scale: 1.0,
                min_ratio: 1.0,
                max_ratio: 1.0,
            },
            TransformSpec::ColorJitter {
                prob: 0.0,
                brightness: 0.4,
                contrast: 0.4,
                saturation: 0.4,
                hue: 0.1,
            },
            TransformSpec::Grayscale { prob: 0.0 },
            TransformSpec::GaussianBlur {
                prob: 0.0,
                sigma_min: 0.1,
                sigma_max: 2.0,
            },
            TransformSpec::Solarize {
                prob: 0.0,
                threshold: 128,
            },
            TransformSpec::HorizontalFlip { prob: 0.0 },
        ];
        PipelineSpec {
            output_size: 8,
            generative: GenerativeSlot { p0, on_view },
            view1: off.clone(),
            view2: off,
        }
    }

    #[test]
    fn gate_closed_and_forced() {
        let src = tagged(1);
        let bank = bank_k(1);
        let mut rng = SampleRng::new(0, 0, 7, 0);
        for _ in 0..100 {
            assert_eq!(apply_generative_slot(7, &src, Some(&bank), 0.0, &mut rng).unwrap(), src);
            assert_eq!(
                apply_generative_slot(7, &src, Some(&bank), 1.0, &mut rng).unwrap(),
                tagged(100)
            );
        }
        // p0 = 0 never consults the bank
        assert_eq!(apply_generative_slot(9, &src, None, 0.0, &mut rng).unwrap(), src);
    }

    #[test]
    fn missing_source_is_an_error() {
        let mut rng = SampleRng::new(0, 0, 0, 0);
        let err = apply_generative_slot(3, &tagged(1), Some(&bank_k(2)), 0.5, &mut rng);
        assert!(matches!(err, Err(Error::MissingVariant(3))));
        let err = apply_generative_slot(3, &tagged(1), None, 0.5, &mut rng);
        assert!(matches!(err, Err(Error::MissingVariant(3))));
    }

    #[test]
    fn fully_gated_pipeline_is_identity() {
        let mut src = tagged(9);
        src.set(2, 5, [200, 10, 30]);
        let spec = gated_spec(0.0, ViewRegime::BothViews);
        spec.validate().unwrap();
        let mut r1 = SampleRng::new(1, 0, 7, 0);
        let mut r2 = SampleRng::new(1, 0, 7, 1);
        let (a, b) = apply_pipeline(&spec, 7, &src, None, [&mut r1, &mut r2]).unwrap();
        assert_eq!(a, src);
        assert_eq!(b, src);
    }

    #[test]
    fn view1_only_never_touches_view2() {
        let src = tagged(1);
        let bank = bank_k(3);
        let spec = gated_spec(1.0, ViewRegime::View1Only);
        for i in 0..1000 {
            let mut r1 = SampleRng::new(4, 0, i, 0);
            let mut r2 = SampleRng::new(4, 0, i, 1);
            let (a, b) = apply_pipeline(&spec, 7, &src, Some(&bank), [&mut r1, &mut r2]).unwrap();
            assert_ne!(a, src);
            assert_eq!(b, src);
        }
    }

    #[test]
    fn validation_catches_bad_specs() {
        let mut spec = gated_spec(1.5, ViewRegime::BothViews);
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        spec.generative.p0 = 0.5;
        spec.view2.remove(0);
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn json_keys() {
        let spec = gated_spec(0.25, ViewRegime::View1Only);
        let v = serde_json::to_value(&spec).unwrap();
        assert_eq!(v["generative"]["p0"], 0.25);
        assert_eq!(v["generative"]["on_view"], "view1_only");
        assert_eq!(v["view1"][0]["kind"], "random_resized_crop");
        let back: PipelineSpec = serde_json::from_value(v).unwrap();
        assert_eq!(back, spec);
    }
}
