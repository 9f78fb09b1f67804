//! Batch front-end behind the `genaug` binary.
//!
//! Every command resolves its settings as defaults < `--config` file < flags,
//! hashes the merged result and records it in a `manifest-<command>.json` next
//! to its outputs.

mod experiment;
mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::augmentation::{Strategy, VariantSource, ViewRegime};
use crate::error::{Error, Result};
use crate::evaluation::{
    extract_representations, linear_probe, write_comparison_csv, FrozenEncoder, LatentEncoder, ProbeConfig, ReprMatrix,
    DEFAULT_LEVEL, DEFAULT_RESAMPLES,
};
use crate::numerics::write_atomic;
use crate::samplebank::{build_bank, import_bank, make_shapes_split, Generator, LabeledDataset, SampleBank, Split};
use crate::ssl_objectives::Method;
use crate::training::{write_metrics_csv, Checkpoint, EncoderSpec, TrainConfig, Trainer};

pub use experiment::{
    cell_config, compare_representations, comparison_table, cross_product, mean_top1, plot_points, probe_checkpoint,
    run_cell, run_sweep, Benchmark, Cell, CellSettings, PlotPoint, SweepRow,
};
pub use manifest::{artifact_versions, hash_config, merge_json, now_ms, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "genaug",
    version,
    about = "Self-supervised pretraining with generative augmentation at desk scale"
)]
pub struct Cli {
    /// JSON settings file, overlaid on the command's defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic shapes train and eval splits.
    SynthData(SynthArgs),
    /// Build a variant bank with the oracle generator, or import one from PNGs.
    GenBank(BankArgs),
    /// Pretrain an encoder and write its checkpoint and per-epoch metrics.
    Pretrain(PretrainArgs),
    /// Linear probe on a frozen encoder.
    Probe(ProbeArgs),
    /// Pretrain-and-probe over a grid of cells.
    Sweep(SweepArgs),
    /// CKA and OPD between two encoders, or one encoder and a reference.
    Compare(CompareArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SynthData(_) => "synth-data",
            Command::GenBank(_) => "gen-bank",
            Command::Pretrain(_) => "pretrain",
            Command::Probe(_) => "probe",
            Command::Sweep(_) => "sweep",
            Command::Compare(_) => "compare",
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub eval_per_class: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BankArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// `oracle` or `replay`.
    #[arg(long)]
    pub generator: Option<String>,
    /// Import manifest listing PNG variants per source id.
    #[arg(long)]
    pub import: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<String>,
    /// Strategy: baseline, only_generative, gen_random_crop or gen_standard.
    #[arg(long)]
    pub augmentation: Option<String>,
    #[arg(long)]
    pub p0: Option<f64>,
    /// `one` or `both`.
    #[arg(long)]
    pub on_view: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub base_lr: Option<f64>,
    /// Start from the published settings instead of the desk preset.
    #[arg(long)]
    pub published: bool,
    /// Continue from a checkpoint written by the same config.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Also write the checkpoint every N epochs.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Probe a freshly initialized encoder (seeded by --seed) instead of a checkpoint.
    #[arg(long)]
    pub random_encoder: bool,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub eval: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub eval: PathBuf,
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Preset grid: 1 (p sweep), 2 (method matrix), 3 (dissimilarity table), 4 (strategies).
    #[arg(long)]
    pub rq: Option<u8>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub views: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Run independent cells concurrently.
    #[arg(long)]
    pub parallel_cells: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// One or two checkpoints.
    #[arg(long, num_args = 1..=2)]
    pub checkpoint: Vec<PathBuf>,
    /// `random-frozen` or `oracle-latent`, used when only one checkpoint is given.
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Dataset for the second representation; defaults to --dataset.
    #[arg(long)]
    pub dataset_b: Option<PathBuf>,
    #[arg(long)]
    pub resamples: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command; returns the path of the manifest it wrote.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let file = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| Error::format(p, e.to_string()))?;
            if !v.is_object() {
                return Err(Error::Config(format!("{} must hold a JSON object", p.display())));
            }
            Some(v)
        }
        None => None,
    };
    let ctx = Ctx {
        out: &cli.out,
        force: cli.force,
        seed: cli.seed,
        file,
    };
    match &cli.command {
        Command::SynthData(a) => synth_data(&ctx, a),
        Command::GenBank(a) => gen_bank(&ctx, a),
        Command::Pretrain(a) => pretrain_cmd(&ctx, a),
        Command::Probe(a) => probe_cmd(&ctx, a),
        Command::Sweep(a) => sweep_cmd(&ctx, a),
        Command::Compare(a) => compare_cmd(&ctx, a),
    }
}

struct Ctx<'a> {
    out: &'a Path,
    force: bool,
    seed: Option<u64>,
    file: Option<Value>,
}

impl Ctx<'_> {
    /// Output paths under `--out`, refusing to clobber existing files without `--force`.
    fn outputs(&self, command: &str, names: &[&str]) -> Result<Vec<PathBuf>> {
        let mut paths: Vec<PathBuf> = names.iter().map(|n| self.out.join(n)).collect();
        paths.push(RunManifest::path_in(self.out, command));
        if !self.force {
            if let Some(p) = paths.iter().find(|p| p.exists()) {
                return Err(Error::Config(format!(
                    "{} already exists; pass --force to overwrite",
                    p.display()
                )));
            }
        }
        paths.pop();
        Ok(paths)
    }

    /// defaults < config file < flags; null flags are ignored.
    fn resolve<T: Serialize + DeserializeOwned>(&self, defaults: &T, flags: Value) -> Result<(T, Value)> {
        let mut v = serde_json::to_value(defaults)?;
        if let Some(f) = &self.file {
            merge_json(&mut v, f);
        }
        merge_json(&mut v, &strip_nulls(flags));
        let t: T = serde_json::from_value(v).map_err(|e| Error::Config(format!("bad settings: {e}")))?;
        let canonical = serde_json::to_value(&t)?;
        Ok((t, canonical))
    }
}

fn strip_nulls(v: Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(
            m.into_iter()
                .filter(|(_, v)| !v.is_null())
                .map(|(k, v)| (k, strip_nulls(v)))
                .collect(),
        ),
        other => other,
    }
}

fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    LabeledDataset::load(path)
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(v)?.as_bytes())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthSettings {
    classes: usize,
    per_class: usize,
    eval_per_class: usize,
    size: usize,
    seed: u64,
}

fn synth_data(ctx: &Ctx, a: &SynthArgs) -> Result<PathBuf> {
    let defaults = SynthSettings {
        classes: 10,
        per_class: 200,
        eval_per_class: 50,
        size: 32,
        seed: 0,
    };
    let flags = json!({"classes": a.classes, "per_class": a.per_class, "eval_per_class": a.eval_per_class,
                       "size": a.size, "seed": ctx.seed});
    let (s, config) = ctx.resolve(&defaults, flags)?;
    let outs = ctx.outputs("synth-data", &["train.gdst", "eval.gdst"])?;
    let mut m = RunManifest::begin("synth-data", s.seed, config);
    let train = make_shapes_split(s.classes, s.per_class, s.size, s.seed, Split::Train)?;
    let eval = make_shapes_split(s.classes, s.eval_per_class, s.size, s.seed, Split::Eval)?;
    train.save(&outs[0])?;
    eval.save(&outs[1])?;
    m.outputs = outs;
    m.finish(ctx.out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankSettings {
    dataset: Option<PathBuf>,
    import: Option<PathBuf>,
    k: usize,
    generator: String,
    seed: u64,
}

fn gen_bank(ctx: &Ctx, a: &BankArgs) -> Result<PathBuf> {
    let defaults = BankSettings {
        dataset: None,
        import: None,
        k: crate::samplebank::DEFAULT_K,
        generator: "oracle".into(),
        seed: 0,
    };
    let flags = json!({"dataset": a.dataset, "import": a.import, "k": a.k, "generator": a.generator, "seed": ctx.seed});
    let (s, config) = ctx.resolve(&defaults, flags)?;
    let generator = match s.generator.as_str() {
        "oracle" => Generator::Oracle,
        "replay" => Generator::Replay,
        other => {
            return Err(Error::Config(format!(
                "unknown generator {other:?}; expected oracle or replay"
            )))
        }
    };
    if s.k == 0 {
        return Err(Error::Config("--k must be at least 1".into()));
    }
    let outs = ctx.outputs("gen-bank", &["bank.gbnk"])?;
    let mut m = RunManifest::begin("gen-bank", s.seed, config);
    let bank = match (&s.import, &s.dataset) {
        (Some(manifest), _) => {
            m.inputs.push(manifest.clone());
            import_bank(manifest)?
        }
        (None, Some(path)) => {
            m.inputs.push(path.clone());
            build_bank(&load_dataset(path)?, generator, s.k, s.seed)?
        }
        (None, None) => return Err(Error::Config("gen-bank needs --dataset or --import".into())),
    };
    bank.save(&outs[0])?;
    m.outputs = outs;
    m.finish(ctx.out)
}

fn pretrain_config(ctx: &Ctx, a: &PretrainArgs, input_size: usize) -> Result<TrainConfig> {
    let file_method = ctx
        .file
        .as_ref()
        .and_then(|f| f.get("method"))
        .and_then(Value::as_str)
        .map(str::to_owned);
    let method = Method::parse(a.method.as_deref().or(file_method.as_deref()).unwrap_or("simclr"))?;
    let defaults = if a.published {
        TrainConfig::published(method, input_size)?
    } else {
        TrainConfig::desk(method, input_size)?
    };
    let flags = json!({"seed": ctx.seed, "batch_size": a.batch_size, "base_lr": a.base_lr, "bank": a.bank});
    let (mut cfg, _) = ctx.resolve(&defaults, flags)?;
    if let Some(e) = a.epochs {
        cfg = cfg.with_epochs(e);
    }
    if a.augmentation.is_some() || a.p0.is_some() || a.on_view.is_some() {
        let p0 = a.p0.unwrap_or(cfg.augmentation.generative.p0);
        let strategy = match &a.augmentation {
            Some(s) => Strategy::parse(s)?,
            None if p0 > 0.0 => Strategy::GenStandard,
            None => Strategy::Baseline,
        };
        let views = match &a.on_view {
            Some(v) => ViewRegime::parse(v)?,
            None => cfg.augmentation.generative.on_view,
        };
        cfg = cfg.with_strategy(strategy, p0, views)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pretrain_cmd(ctx: &Ctx, a: &PretrainArgs) -> Result<PathBuf> {
    let dataset = load_dataset(&a.dataset)?;
    let cfg = pretrain_config(ctx, a, dataset.image_size().0)?;
    let outs = ctx.outputs("pretrain", &["checkpoint.gwts", "checkpoint.json", "metrics.csv"])?;
    let mut m = RunManifest::begin("pretrain", cfg.seed, serde_json::to_value(&cfg)?);
    m.config_hash = cfg.config_hash()?;
    m.inputs.push(a.dataset.clone());
    let bank = match &cfg.bank {
        Some(p) if cfg.augmentation.generative.p0 > 0.0 => {
            m.inputs.push(p.clone());
            Some(SampleBank::load(p)?)
        }
        _ => None,
    };
    let source = bank.as_ref().map(|b| b as &dyn VariantSource);
    let mut trainer = match &a.resume {
        Some(p) => {
            m.inputs.push(p.clone());
            Trainer::resume(&cfg, &dataset, source, Checkpoint::load(p)?)?
        }
        None => Trainer::new(&cfg, &dataset, source)?,
    };
    let every = a.checkpoint_every.filter(|&n| n > 0);
    let ckpt = &outs[0];
    let metrics = trainer.run_with(|t, row| {
        eprintln!("epoch {} loss {:.5} lr {:.5}", row.epoch, row.loss, row.lr);
        if every.is_some_and(|n| (row.epoch + 1) % n == 0) {
            t.checkpoint().save(ckpt)?;
        }
        Ok(())
    })?;
    trainer.checkpoint().save(ckpt)?;
    write_metrics_csv(&outs[2], &metrics)?;
    m.outputs = outs;
    m.finish(ctx.out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeSettings {
    checkpoint: Option<PathBuf>,
    random_encoder: bool,
    train: PathBuf,
    eval: PathBuf,
    probe: ProbeConfig,
}

#[derive(Debug, Serialize)]
struct ProbeReport {
    top1: f64,
    top5: Option<f64>,
    n_eval: usize,
    config_hash: String,
}

fn probe_cmd(ctx: &Ctx, a: &ProbeArgs) -> Result<PathBuf> {
    let defaults = ProbeSettings {
        checkpoint: None,
        random_encoder: false,
        train: a.train.clone(),
        eval: a.eval.clone(),
        probe: ProbeConfig::default(),
    };
    let flags = json!({"checkpoint": a.checkpoint, "random_encoder": a.random_encoder.then_some(true),
                       "probe": {"seed": ctx.seed, "epochs": a.epochs}});
    let (s, config) = ctx.resolve(&defaults, flags)?;
    s.probe.validate()?;
    let outs = ctx.outputs("probe", &["probe.json"])?;
    let mut m = RunManifest::begin("probe", s.probe.seed, config);
    let train = load_dataset(&s.train)?;
    let eval = load_dataset(&s.eval)?;
    m.inputs.extend([s.train.clone(), s.eval.clone()]);
    let size = train.image_size().0;
    let encoder = match (&s.checkpoint, s.random_encoder) {
        (Some(_), true) => return Err(Error::Config("--checkpoint and --random-encoder are exclusive".into())),
        (Some(p), false) => {
            m.inputs.push(p.clone());
            let c = Checkpoint::load(p)?;
            FrozenEncoder::new(
                c.config.encoder.clone(),
                c.config.augmentation.output_size,
                c.state.params,
            )?
        }
        (None, true) => FrozenEncoder::random(EncoderSpec::default(), size, s.probe.seed)?,
        (None, false) => return Err(Error::Config("probe needs --checkpoint or --random-encoder".into())),
    };
    let r = linear_probe(
        &extract_representations(&encoder, &train)?,
        &train.labels,
        &extract_representations(&encoder, &eval)?,
        &eval.labels,
        &s.probe,
    )?;
    write_json(
        &outs[0],
        &ProbeReport {
            top1: r.top1,
            top5: r.top5,
            n_eval: r.n_eval,
            config_hash: m.config_hash.clone(),
        },
    )?;
    m.outputs = outs;
    m.finish(ctx.out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSettings {
    rq: Option<u8>,
    methods: Vec<Method>,
    strategies: Vec<Strategy>,
    p: Vec<f64>,
    views: Vec<ViewRegime>,
    seeds: Vec<u64>,
    epochs: Option<usize>,
    probe: ProbeConfig,
    parallel_cells: bool,
    resamples: usize,
    level: f64,
    reference: String,
}

fn rq_defaults(rq: Option<u8>, seed: u64) -> Result<SweepSettings> {
    let mut s = SweepSettings {
        rq,
        methods: vec![Method::Simclr],
        strategies: vec![Strategy::GenStandard],
        p: vec![0.5],
        views: vec![ViewRegime::BothViews],
        seeds: vec![seed],
        epochs: None,
        probe: ProbeConfig::default(),
        parallel_cells: false,
        resamples: DEFAULT_RESAMPLES,
        level: DEFAULT_LEVEL,
        reference: "oracle-latent".into(),
    };
    match rq {
        Some(1) => {
            s.p = vec![0.0, 0.25, 0.5, 0.75, 1.0];
            s.views = vec![ViewRegime::View1Only, ViewRegime::BothViews];
        }
        Some(2) => {
            s.methods = vec![Method::Simclr, Method::Moco];
            s.strategies = vec![Strategy::Baseline, Strategy::GenStandard];
        }
        Some(3) => {
            s.strategies = vec![Strategy::Baseline];
            s.p = vec![0.0];
            s.seeds = vec![seed, seed + 1];
        }
        Some(4) => s.strategies = Strategy::ALL.to_vec(),
        Some(other) => return Err(Error::Config(format!("unknown --rq {other}; expected 1, 2, 3 or 4"))),
        None => {}
    }
    Ok(s)
}

fn parse_list<T>(v: &Option<Vec<String>>, f: impl Fn(&str) -> Result<T>) -> Result<Option<Vec<T>>> {
    v.as_ref().map(|l| l.iter().map(|s| f(s)).collect()).transpose()
}

fn sweep_cmd(ctx: &Ctx, a: &SweepArgs) -> Result<PathBuf> {
    let file_rq = ctx
        .file
        .as_ref()
        .and_then(|f| f.get("rq"))
        .and_then(Value::as_u64)
        .map(|v| v as u8);
    let defaults = rq_defaults(a.rq.or(file_rq), ctx.seed.unwrap_or(0))?;
    let flags = json!({
        "methods": parse_list(&a.methods, Method::parse)?,
        "strategies": parse_list(&a.strategies, Strategy::parse)?,
        "p": a.p,
        "views": parse_list(&a.views, ViewRegime::parse)?,
        "seeds": a.seeds,
        "epochs": a.epochs,
        "parallel_cells": a.parallel_cells.then_some(true),
    });
    let (s, config) = ctx.resolve(&defaults, flags)?;
    s.probe.validate()?;
    let rq3 = s.rq == Some(3);
    let names: &[&str] = if rq3 {
        &["sweep.csv", "plot.json", "table2.csv", "table2.json"]
    } else {
        &["sweep.csv", "plot.json"]
    };
    let outs = ctx.outputs("sweep", names)?;
    let mut m = RunManifest::begin("sweep", s.seeds.first().copied().unwrap_or(0), config);
    let train = load_dataset(&a.train)?;
    let eval = load_dataset(&a.eval)?;
    m.inputs.extend([a.train.clone(), a.eval.clone()]);
    let bank = match &a.bank {
        Some(p) => {
            m.inputs.push(p.clone());
            Some(SampleBank::load(p)?)
        }
        None => None,
    };
    let bench = Benchmark { train, eval, bank };
    let cells = cross_product(&s.methods, &s.strategies, &s.p, &s.views, &s.seeds);
    let settings = CellSettings {
        epochs: s.epochs,
        probe: s.probe,
    };
    let rows = if rq3 {
        rq3_rows(&cells, &bench, &settings, &s, &outs[2..])?
    } else {
        run_sweep(&cells, &bench, &settings, s.parallel_cells)
    };
    write_sweep_csv(&outs[0], &rows)?;
    write_json(&outs[1], &json!({"points": plot_points(&rows)}))?;
    m.outputs = outs;
    m.finish(ctx.out)
}

/// Trains every cell, then tabulates CKA/OPD between the encoders and the reference.
fn rq3_rows(
    cells: &[Cell],
    bench: &Benchmark,
    settings: &CellSettings,
    s: &SweepSettings,
    outs: &[PathBuf],
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    let mut named: Vec<(String, ReprMatrix)> = Vec::new();
    for c in cells {
        let r = run_cell(c, bench, settings);
        if let Ok((_, outcome)) = &r {
            let cfg = &outcome.checkpoint.config;
            let enc = FrozenEncoder::new(
                cfg.encoder.clone(),
                cfg.augmentation.output_size,
                outcome.checkpoint.state.params.clone(),
            )?;
            named.push((
                format!("{}_{}", c.method.name(), c.seed),
                extract_representations(&enc, &bench.eval)?,
            ));
        }
        rows.push(SweepRow::new(c, &r.map(|(p, _)| p)));
    }
    let reference = reference_repr(&s.reference, &bench.eval, s.seeds.first().copied().unwrap_or(0))?;
    named.push((s.reference.clone(), reference));
    let table = comparison_table(&named, s.resamples, s.level, s.seeds.first().copied().unwrap_or(0))?;
    write_comparison_csv(&outs[0], &table)?;
    write_json(&outs[1], &table)?;
    Ok(rows)
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

fn reference_repr(name: &str, dataset: &LabeledDataset, seed: u64) -> Result<ReprMatrix> {
    match name {
        "oracle-latent" => LatentEncoder::extract(dataset),
        "random-frozen" => {
            let enc = FrozenEncoder::random(EncoderSpec::default(), dataset.image_size().0, seed)?;
            extract_representations(&enc, dataset)
        }
        other => Err(Error::Config(format!(
            "unknown reference {other:?}; expected random-frozen or oracle-latent"
        ))),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareSettings {
    checkpoints: Vec<PathBuf>,
    reference: Option<String>,
    dataset: PathBuf,
    dataset_b: Option<PathBuf>,
    resamples: usize,
    level: f64,
    seed: u64,
}

fn checkpoint_repr(path: &Path, dataset: &LabeledDataset) -> Result<ReprMatrix> {
    let c = Checkpoint::load(path)?;
    let enc = FrozenEncoder::new(
        c.config.encoder.clone(),
        c.config.augmentation.output_size,
        c.state.params,
    )?;
    extract_representations(&enc, dataset)
}

fn compare_cmd(ctx: &Ctx, a: &CompareArgs) -> Result<PathBuf> {
    let defaults = CompareSettings {
        checkpoints: a.checkpoint.clone(),
        reference: None,
        dataset: a.dataset.clone(),
        dataset_b: None,
        resamples: DEFAULT_RESAMPLES,
        level: DEFAULT_LEVEL,
        seed: 0,
    };
    let flags = json!({"reference": a.reference, "dataset_b": a.dataset_b, "resamples": a.resamples,
                       "level": a.level, "seed": ctx.seed});
    let (s, config) = ctx.resolve(&defaults, flags)?;
    let outs = ctx.outputs("compare", &["compare.json", "compare.csv"])?;
    let mut m = RunManifest::begin("compare", s.seed, config);
    let data_a = load_dataset(&s.dataset)?;
    m.inputs.push(s.dataset.clone());
    let data_b = match &s.dataset_b {
        Some(p) => {
            m.inputs.push(p.clone());
            load_dataset(p)?
        }
        None => data_a.clone(),
    };
    m.inputs.extend(s.checkpoints.iter().cloned());
    let ((name_a, ra), (name_b, rb)) = match (s.checkpoints.as_slice(), &s.reference) {
        ([one, two], None) => (
            ("a".to_string(), checkpoint_repr(one, &data_a)?),
            ("b".to_string(), checkpoint_repr(two, &data_b)?),
        ),
        ([one], Some(r)) => (
            ("a".to_string(), checkpoint_repr(one, &data_a)?),
            (r.clone(), reference_repr(r, &data_b, s.seed)?),
        ),
        _ => {
            return Err(Error::Config(
                "compare needs two --checkpoint values, or one plus --reference".into(),
            ))
        }
    };
    let (cka, opd) = compare_representations(&ra, &rb, s.resamples, s.level, s.seed)?;
    let pair = format!("({name_a}, {name_b})");
    write_json(&outs[0], &json!({"pair": pair, "cka": cka, "opd": opd}))?;
    write_comparison_csv(&outs[1], &[crate::evaluation::ComparisonRow::new(pair, &cka, &opd)])?;
    m.outputs = outs;
    m.finish(ctx.out)
}
