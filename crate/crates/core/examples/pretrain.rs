//! A 50-epoch SimCLR run with the generative slot, then a linear probe of the encoder.

use genaug::augmentation::{Strategy, ViewRegime};
use genaug::cli::{probe_checkpoint, Benchmark};
use genaug::evaluation::ProbeConfig;
use genaug::ssl_objectives::Method;
use genaug::training::{TrainConfig, Trainer};

fn main() -> genaug::Result<()> {
    let bench = Benchmark::shapes(10, 200, 50, 32, 7, 10)?;
    let cfg =
        TrainConfig::desk(Method::Simclr, 32)?.with_strategy(Strategy::GenStandard, 0.5, ViewRegime::BothViews)?;
    let mut t = Trainer::new(&cfg, &bench.train, bench.bank_source())?;
    t.run_with(|_, m| {
        if m.epoch % 10 == 9 {
            println!("epoch {} loss {:.4} lr {:.4} {} ms", m.epoch, m.loss, m.lr, m.wall_ms);
        }
        Ok(())
    })?;
    let r = probe_checkpoint(&t.checkpoint(), &bench, &ProbeConfig::default())?;
    println!("top-1 {:.3} top-5 {:?}", r.top1, r.top5);
    Ok(())
}
