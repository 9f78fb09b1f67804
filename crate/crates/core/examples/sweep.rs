//! A small strategy sweep run in-process: one row per cell, failures kept.

use genaug::augmentation::{Strategy, ViewRegime};
use genaug::cli::{cross_product, plot_points, run_sweep, Benchmark, CellSettings};
use genaug::evaluation::ProbeConfig;
use genaug::ssl_objectives::Method;

fn main() -> genaug::Result<()> {
    let bench = Benchmark::shapes(10, 30, 10, 32, 7, 10)?;
    let cells = cross_product(
        &[Method::Simclr],
        &Strategy::ALL,
        &[0.5],
        &[ViewRegime::BothViews],
        &[0],
    );
    let settings = CellSettings {
        epochs: Some(3),
        probe: ProbeConfig {
            epochs: 30,
            ..ProbeConfig::default()
        },
    };
    let rows = run_sweep(&cells, &bench, &settings, false);
    for row in &rows {
        println!(
            "{:<16} p={} {} top1={:?} {}",
            row.strategy, row.p, row.status, row.top1, row.error
        );
    }
    for p in plot_points(&rows) {
        println!(
            "{} {} mean top1 {:?} over {} ok",
            p.method, p.strategy, p.mean_top1, p.n_ok
        );
    }
    Ok(())
}
