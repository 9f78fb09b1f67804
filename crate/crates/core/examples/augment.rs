//! Two augmented views of one shapes image through the SimCLR pipeline with the
//! generative slot open, written as PNGs.

use genaug::augmentation::{apply_pipeline, strategy_pipeline, SampleRng, Strategy, ViewRegime};
use genaug::samplebank::{build_bank, make_shapes_dataset, save_png, Generator};

fn main() -> genaug::Result<()> {
    let out = std::env::temp_dir().join("genaug-augment");
    std::fs::create_dir_all(&out).map_err(|e| genaug::Error::io(&out, e))?;
    let data = make_shapes_dataset(4, 4, 64, 1)?;
    let bank = build_bank(&data, Generator::Oracle, 10, 1)?;
    let spec = strategy_pipeline(
        "simclr",
        Strategy::GenStandard,
        0.5,
        ViewRegime::BothViews,
        64,
        Some(0.2),
    )?;

    save_png(&data.images[0], &out.join("source.png"))?;
    for epoch in 0..3u64 {
        let mut r1 = SampleRng::new(7, epoch, 0, 0);
        let mut r2 = SampleRng::new(7, epoch, 0, 1);
        let (a, b) = apply_pipeline(&spec, 0, &data.images[0], Some(&bank), [&mut r1, &mut r2])?;
        save_png(&a, &out.join(format!("epoch{epoch}_view1.png")))?;
        save_png(&b, &out.join(format!("epoch{epoch}_view2.png")))?;
    }
    println!("views written to {}", out.display());
    Ok(())
}
