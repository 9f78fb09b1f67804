use serde::{Deserialize, Serialize};

use crate::augmentation::{Strategy, VariantSource, ViewRegime};
use crate::error::{Error, Result};
use crate::evaluation::{
    bootstrap_ci, extract_representations, linear_probe, ComparisonRow, DissimilarityReport, FrozenEncoder, Measure,
    ProbeConfig, ProbeResult, ReprMatrix,
};
use crate::samplebank::{build_bank, make_shapes_split, Generator, LabeledDataset, SampleBank, Split};
use crate::ssl_objectives::Method;
use crate::training::{pretrain, Checkpoint, TrainConfig, TrainOutcome};

/// Train and eval splits plus the variant bank of the training split.
pub struct Benchmark {
    pub train: LabeledDataset,
    pub eval: LabeledDataset,
    pub bank: Option<SampleBank>,
}

impl Benchmark {
    /// The synthetic shapes benchmark with an oracle bank of `k` variants per image.
    pub fn shapes(
        classes: usize,
        per_class: usize,
        eval_per_class: usize,
        size: usize,
        seed: u64,
        k: usize,
    ) -> Result<Self> {
        let train = make_shapes_split(classes, per_class, size, seed, Split::Train)?;
        let eval = make_shapes_split(classes, eval_per_class, size, seed, Split::Eval)?;
        let bank = if k > 0 {
            Some(build_bank(&train, Generator::Oracle, k, seed)?)
        } else {
            None
        };
        Ok(Benchmark { train, eval, bank })
    }

    pub fn bank_source(&self) -> Option<&dyn VariantSource> {
        self.bank.as_ref().map(|b| b as &dyn VariantSource)
    }

    pub fn input_size(&self) -> usize {
        self.train.image_size().0
    }
}

/// One pretrain-then-probe run of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    pub strategy: Strategy,
    pub p0: f64,
    pub view_regime: ViewRegime,
    pub seed: u64,
}

impl Cell {
    /// Generative probability the pipeline actually uses.
    pub fn effective_p0(&self) -> f64 {
        if self.strategy == Strategy::Baseline {
            0.0
        } else {
            self.p0
        }
    }
}

/// Settings shared by every cell of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct CellSettings {
    /// Overrides the preset's epoch count when set.
    pub epochs: Option<usize>,
    pub probe: ProbeConfig,
}

/// Desk preset of the cell's method under its strategy, seed and epoch count.
pub fn cell_config(cell: &Cell, input_size: usize, epochs: Option<usize>) -> Result<TrainConfig> {
    let mut cfg =
        TrainConfig::desk(cell.method, input_size)?.with_strategy(cell.strategy, cell.p0, cell.view_regime)?;
    cfg.seed = cell.seed;
    if let Some(e) = epochs {
        cfg = cfg.with_epochs(e);
    }
    Ok(cfg)
}

/// Top-1/Top-5 of a linear probe on the frozen encoder of `checkpoint`.
pub fn probe_checkpoint(checkpoint: &Checkpoint, bench: &Benchmark, probe: &ProbeConfig) -> Result<ProbeResult> {
    let cfg = &checkpoint.config;
    let enc = FrozenEncoder::new(
        cfg.encoder.clone(),
        cfg.augmentation.output_size,
        checkpoint.state.params.clone(),
    )?;
    let train = extract_representations(&enc, &bench.train)?;
    let eval = extract_representations(&enc, &bench.eval)?;
    linear_probe(&train, &bench.train.labels, &eval, &bench.eval.labels, probe)
}

pub fn run_cell(cell: &Cell, bench: &Benchmark, settings: &CellSettings) -> Result<(ProbeResult, TrainOutcome)> {
    let cfg = cell_config(cell, bench.input_size(), settings.epochs)?;
    let bank = if cfg.augmentation.generative.p0 > 0.0 {
        bench.bank_source()
    } else {
        None
    };
    let outcome = pretrain(&cfg, &bench.train, bank)?;
    let probe = ProbeConfig {
        seed: cell.seed,
        ..settings.probe
    };
    let result = probe_checkpoint(&outcome.checkpoint, bench, &probe)?;
    Ok((result, outcome))
}

/// One line of the sweep table; failed cells keep their row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub strategy: String,
    pub p: f64,
    pub view_regime: String,
    pub seed: u64,
    pub top1: Option<f64>,
    pub top5: Option<f64>,
    pub status: String,
    pub error: String,
}

impl SweepRow {
    pub fn new(cell: &Cell, result: &Result<ProbeResult>) -> Self {
        let (top1, top5, status, error) = match result {
            Ok(r) => (Some(r.top1), r.top5, "ok", String::new()),
            Err(e) => (None, None, "failed", e.to_string()),
        };
        SweepRow {
            method: cell.method.name().into(),
            strategy: cell.strategy.name().into(),
            p: cell.effective_p0(),
            view_regime: cell.view_regime.short_name().into(),
            seed: cell.seed,
            top1,
            top5,
            status: status.into(),
            error,
        }
    }
}

/// Runs every cell, sequentially unless `parallel` is set; the row order is the
/// cell order either way.
pub fn run_sweep(cells: &[Cell], bench: &Benchmark, settings: &CellSettings, parallel: bool) -> Vec<SweepRow> {
    let one = |c: &Cell| SweepRow::new(c, &run_cell(c, bench, settings).map(|(r, _)| r));
    if parallel {
        use rayon::prelude::*;
        crate::parallel::install(|| cells.par_iter().map(one).collect())
    } else {
        cells.iter().map(one).collect()
    }
}

/// Cross product in the order methods × strategies × p × views × seeds.
pub fn cross_product(
    methods: &[Method],
    strategies: &[Strategy],
    ps: &[f64],
    views: &[ViewRegime],
    seeds: &[u64],
) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &method in methods {
        for &strategy in strategies {
            for &p0 in ps {
                for &view_regime in views {
                    for &seed in seeds {
                        cells.push(Cell {
                            method,
                            strategy,
                            p0,
                            view_regime,
                            seed,
                        });
                    }
                }
            }
        }
    }
    cells
}

/// Seed-averaged accuracy of one (method, strategy, p, views) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub method: String,
    pub strategy: String,
    pub view_regime: String,
    pub p: f64,
    pub mean_top1: Option<f64>,
    pub mean_top5: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
}

pub fn plot_points(rows: &[SweepRow]) -> Vec<PlotPoint> {
    let mut out: Vec<PlotPoint> = Vec::new();
    let mut sums: Vec<(f64, f64, usize)> = Vec::new();
    for r in rows {
        let key = |p: &PlotPoint| {
            p.method == r.method && p.strategy == r.strategy && p.view_regime == r.view_regime && p.p == r.p
        };
        let i = match out.iter().position(key) {
            Some(i) => i,
            None => {
                out.push(PlotPoint {
                    method: r.method.clone(),
                    strategy: r.strategy.clone(),
                    view_regime: r.view_regime.clone(),
                    p: r.p,
                    mean_top1: None,
                    mean_top5: None,
                    n_ok: 0,
                    n_failed: 0,
                });
                sums.push((0.0, 0.0, 0));
                out.len() - 1
            }
        };
        match r.top1 {
            Some(t1) => {
                out[i].n_ok += 1;
                sums[i].0 += t1;
                if let Some(t5) = r.top5 {
                    sums[i].1 += t5;
                    sums[i].2 += 1;
                }
            }
            None => out[i].n_failed += 1,
        }
    }
    for (p, (s1, s5, n5)) in out.iter_mut().zip(sums) {
        if p.n_ok > 0 {
            p.mean_top1 = Some(s1 / p.n_ok as f64);
        }
        if n5 > 0 {
            p.mean_top5 = Some(s5 / n5 as f64);
        }
    }
    out
}

/// Mean Top-1 of the rows matching `pred`, over successful rows only.
pub fn mean_top1(rows: &[SweepRow], pred: impl Fn(&SweepRow) -> bool) -> Option<f64> {
    let v: Vec<f64> = rows.iter().filter(|r| pred(r)).filter_map(|r| r.top1).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// CKA and OPD reports for one pair; both matrices must come from the same dataset.
pub fn compare_representations(
    a: &ReprMatrix,
    b: &ReprMatrix,
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(DissimilarityReport, DissimilarityReport)> {
    if a.provenance.dataset_id != b.provenance.dataset_id {
        return Err(Error::Config(format!(
            "representations come from different datasets ({} vs {})",
            a.provenance.dataset_id, b.provenance.dataset_id
        )));
    }
    let cka = bootstrap_ci(a, b, Measure::Cka, n_resamples, level, seed)?;
    let opd = bootstrap_ci(a, b, Measure::Opd, n_resamples, level, seed)?;
    Ok((cka, opd))
}

/// Pairwise comparison table over named representations: every pair in order.
pub fn comparison_table(
    named: &[(String, ReprMatrix)],
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for i in 0..named.len() {
        for j in i + 1..named.len() {
            let (cka, opd) = compare_representations(&named[i].1, &named[j].1, n_resamples, level, seed)?;
            rows.push(ComparisonRow::new(
                format!("({}, {})", named[i].0, named[j].0),
                &cka,
                &opd,
            ));
        }
    }
    Ok(rows)
}
