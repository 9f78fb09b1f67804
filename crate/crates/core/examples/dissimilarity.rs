//! CKA and OPD with bootstrap intervals between a random encoder, the raw pixels
//! and the oracle latents of the same images.

use genaug::evaluation::{
    bootstrap_ci, extract_representations, FrozenEncoder, IdentityEncoder, LatentEncoder, Measure,
};
use genaug::samplebank::make_shapes_dataset;
use genaug::training::EncoderSpec;

fn main() -> genaug::Result<()> {
    let data = make_shapes_dataset(10, 10, 32, 3)?;
    let random = extract_representations(&FrozenEncoder::random(EncoderSpec::default(), 32, 0)?, &data)?;
    let pixels = extract_representations(&IdentityEncoder { height: 32, width: 32 }, &data)?;
    let latents = LatentEncoder::extract(&data)?;

    for (name, other) in [("pixels", &pixels), ("latents", &latents)] {
        for m in [Measure::Cka, Measure::Opd] {
            let r = bootstrap_ci(&random, other, m, 100, 0.95, 1)?;
            println!(
                "(random, {name}) {}: {:.4} [{:.4}, {:.4}]",
                m.name(),
                r.mean,
                r.ci[0],
                r.ci[1]
            );
        }
    }
    Ok(())
}
