//! The `callscale` command line: one subcommand per pipeline stage.
//!
//! Every option can also come from a flat `key = value` config file passed
//! with `--config`; keys are the long flag names (dashes or underscores).
//! Flags override the file. A path of `-` means stdin or stdout.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 model error.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::features::{extract, ms_to_seconds, pearson};
use crate::gbr::GbrHyperParams;
use crate::mlp::{Activation, MlpHyperParams};
use crate::model::{fit, predict, predict_batch, Hyper, ModelKind, TrainedModel};
use crate::replica::{emit_plan, plan_replicas, replica_error, write_plan_csv, Dataflow, Workload};
use crate::svg::{render, Chart, Series};
use crate::trace::{
    filter_ranges, generate_piecewise, generate_synthetic, ingest_csv, split, write_csv, Bounds,
    Dataset, PiecewiseSpec, Provenance, Schema, SyntheticSpec, DEFAULT_MCR_BOUNDS,
    DEFAULT_MT_BOUNDS,
};
use crate::tuning::{grid_search, learning_curve, ParamGrid, DEFAULT_VAL_FRACTION};

#[derive(Debug, Parser)]
#[command(name = "callscale", version, about = "Microservice call-rate prediction and replica planning")]
pub struct Cli {
    /// Flat key = value file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and range-filter a raw trace into canonical CSV.
    Ingest(IngestArgs),
    /// Generate a synthetic trace.
    Synth(SynthArgs),
    /// Fit one model on a trace and write it as JSON.
    Train(TrainArgs),
    /// Compare models over a list of seeds (MAE, MAPE, fit time).
    Eval(EvalArgs),
    /// Exhaustive grid search plus learning curve of the best configuration.
    Tune(TuneArgs),
    /// Predict call rates for a column of microservice times.
    Predict(PredictArgs),
    /// Turn a workload into a replica plan.
    Plan(PlanArgs),
    /// Render an emitted CSV as an SVG chart.
    Plot(PlotArgs),
}

#[derive(Debug, Args, Default)]
pub struct SchemaArgs {
    #[arg(long)]
    pub timestamp_column: Option<String>,
    #[arg(long)]
    pub microservice_column: Option<String>,
    #[arg(long)]
    pub container_column: Option<String>,
    #[arg(long)]
    pub mt_column: Option<String>,
    #[arg(long)]
    pub mcr_column: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct BoundsArgs {
    /// Lower MT bound, ms/call.
    #[arg(long)]
    pub mt_min: Option<f64>,
    #[arg(long)]
    pub mt_max: Option<f64>,
    /// Lower MCR bound, calls/s.
    #[arg(long)]
    pub mcr_min: Option<f64>,
    #[arg(long)]
    pub mcr_max: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct HyperArgs {
    #[arg(long)]
    pub n_estimators: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub subsample: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_samples_split: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long)]
    pub hidden_neurons: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// identity or relu.
    #[arg(long)]
    pub activation: Option<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write the `mt_s,mcr` feature pairs.
    #[arg(long)]
    pub features_out: Option<PathBuf>,
    /// Skip range filtering.
    #[arg(long)]
    pub no_filter: bool,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub bounds: BoundsArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// linear (correlated line plus noise) or piecewise (banded rates).
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub mt_low: Option<f64>,
    #[arg(long)]
    pub mt_high: Option<f64>,
    #[arg(long)]
    pub pearson: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Comma-separated band rates for the piecewise shape.
    #[arg(long)]
    pub levels: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma-separated model kinds; defaults to lr,mlp,gbr.
    #[arg(long)]
    pub kinds: Option<String>,
    /// Comma-separated seeds; one train/test split and fit per seed.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub report_out: Option<PathBuf>,
    /// Aligned text table of the min-max summary.
    #[arg(long)]
    pub table_out: Option<PathBuf>,
    /// Replica-count MAPE per model and seed.
    #[arg(long)]
    pub replica_out: Option<PathBuf>,
    /// Leave wall-time columns empty for reproducible files.
    #[arg(long)]
    pub omit_timing: bool,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub kind: Option<String>,
    /// `name=v1,v2;name2=v3` candidate lists.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Use k-fold cross-validation instead of a hold-out split.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub result_out: Option<PathBuf>,
    /// Learning curve (train/validation loss per iteration) of the best config.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Column holding microservice times.
    #[arg(long)]
    pub mt_column: Option<String>,
    /// ms (trace convention) or s.
    #[arg(long)]
    pub mt_unit: Option<String>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// CSV with producer,microservice,resource,mt_s and optional mcr.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Predict rates with this model instead of using observed ones.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub plan_out: Option<PathBuf>,
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
    /// Replica MAPE of predicted against observed rates (needs --model and mcr).
    #[arg(long)]
    pub error_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// scatter or curve.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub x_column: Option<String>,
    #[arg(long)]
    pub y_column: Option<String>,
    /// Second CSV drawn as a line over the scatter (e.g. `predict` output).
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    #[arg(long)]
    pub overlay_x: Option<String>,
    #[arg(long)]
    pub overlay_y: Option<String>,
    #[arg(long)]
    pub title: Option<String>,
}

/// Parsed `key = value` config file.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::usage(format!("config line {}: expected `key = value`", n + 1)))?;
            values.insert(normalize_key(k.trim()), v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(&normalize_key(key)).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::usage(format!("config key `{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    /// The flag value if given, else the config value.
    fn pick<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    fn pick_path(&self, key: &str, flag: Option<PathBuf>) -> Option<PathBuf> {
        flag.or_else(|| self.raw(key).map(PathBuf::from))
    }

    fn pick_flag(&self, key: &str, flag: bool) -> Result<bool> {
        Ok(flag || self.get::<bool>(key)?.unwrap_or(false))
    }
}

fn normalize_key(k: &str) -> String {
    k.replace('-', "_").to_ascii_lowercase()
}

/// Settings shared by the pipeline commands after merging flags and file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub paths: Vec<(&'static str, PathBuf)>,
    pub kind: Option<ModelKind>,
    pub hyper: Option<Hyper>,
    pub train_fraction: f64,
    pub seeds: Vec<u64>,
    pub mt_bounds: Bounds,
    pub mcr_bounds: Bounds,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Vec::new(),
            kind: None,
            hyper: None,
            train_fraction: 0.8,
            seeds: vec![1],
            mt_bounds: DEFAULT_MT_BOUNDS,
            mcr_bounds: DEFAULT_MCR_BOUNDS,
        }
    }
}

impl RunConfig {
    /// Referenced files must be distinct (stdio `-` excepted) and at least
    /// one seed must be given.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::usage("seed list is empty"));
        }
        for (i, (na, a)) in self.paths.iter().enumerate() {
            if a.as_os_str() == "-" {
                continue;
            }
            if let Some((nb, _)) = self.paths[i + 1..].iter().find(|(_, b)| b == a) {
                return Err(Error::usage(format!(
                    "--{na} and --{nb} both refer to {}",
                    a.display()
                )));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::usage(format!(
                "train fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

fn require(name: &str, v: Option<PathBuf>) -> Result<PathBuf> {
    v.ok_or_else(|| Error::usage(format!("missing required --{name}")))
}

fn open_input(path: &Path) -> Result<Box<dyn Read>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(io::stdin().lock()));
    }
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(Box::new(BufReader::new(f)))
}

fn create_output(path: &Path) -> Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(io::stdout().lock()));
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn read_text(path: &Path) -> Result<String> {
    let mut s = String::new();
    open_input(path)?
        .read_to_string(&mut s)
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut out = create_output(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

fn provenance(path: &Path) -> Provenance {
    Provenance::File(path.display().to_string())
}

fn parse_list<T: FromStr>(what: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| Error::usage(format!("{what}: cannot parse `{t}`")))
        })
        .collect()
}

/// Reads a trace CSV written by `ingest` or `synth` (default schema).
pub fn load_trace(path: &Path) -> Result<Dataset> {
    let ingested = ingest_csv(open_input(path)?, &Schema::default(), provenance(path))?;
    if ingested.skipped > 0 {
        eprintln!("{}: skipped {} invalid row(s)", path.display(), ingested.skipped);
    }
    Ok(ingested.dataset)
}

fn resolve_hyper(kind: ModelKind, args: &HyperArgs, cfg: &ConfigFile) -> Result<Hyper> {
    Ok(match kind {
        ModelKind::Lr => Hyper::Lr,
        ModelKind::Mlp => {
            let d = MlpHyperParams::default();
            let activation = match cfg.pick::<String>("activation", args.activation.clone())? {
                None => d.activation,
                Some(a) => match a.to_ascii_lowercase().as_str() {
                    "identity" | "linear" => Activation::Identity,
                    "relu" => Activation::Relu,
                    other => return Err(Error::usage(format!("unknown activation `{other}`"))),
                },
            };
            Hyper::Mlp(MlpHyperParams {
                hidden_neurons: cfg.pick("hidden_neurons", args.hidden_neurons)?.unwrap_or(d.hidden_neurons),
                epochs: cfg.pick("epochs", args.epochs)?.unwrap_or(d.epochs),
                learning_rate: cfg.pick("learning_rate", args.learning_rate)?.unwrap_or(d.learning_rate),
                batch_size: cfg.pick("batch_size", args.batch_size)?.unwrap_or(d.batch_size),
                init_scale: cfg.pick("init_scale", args.init_scale)?.unwrap_or(d.init_scale),
                activation,
            })
        }
        ModelKind::Gbr => {
            let d = GbrHyperParams::default();
            Hyper::Gbr(GbrHyperParams {
                n_estimators: cfg.pick("n_estimators", args.n_estimators)?.unwrap_or(d.n_estimators),
                learning_rate: cfg.pick("learning_rate", args.learning_rate)?.unwrap_or(d.learning_rate),
                subsample: cfg.pick("subsample", args.subsample)?.unwrap_or(d.subsample),
                max_depth: cfg.pick("max_depth", args.max_depth)?.unwrap_or(d.max_depth),
                min_samples_split: cfg
                    .pick("min_samples_split", args.min_samples_split)?
                    .unwrap_or(d.min_samples_split),
                min_samples_leaf: cfg
                    .pick("min_samples_leaf", args.min_samples_leaf)?
                    .unwrap_or(d.min_samples_leaf),
                seed: d.seed,
            })
        }
    })
}

fn resolve_kind(cfg: &ConfigFile, flag: Option<String>) -> Result<ModelKind> {
    cfg.pick::<String>("kind", flag)?
        .ok_or_else(|| Error::usage("missing required --kind"))?
        .parse()
}

fn cmd_ingest(a: IngestArgs, cfg: &ConfigFile) -> Result<()> {
    let input = require("input", cfg.pick_path("input", a.input))?;
    let output = require("output", cfg.pick_path("output", a.output))?;
    let features_out = cfg.pick_path("features_out", a.features_out);
    let d = Schema::default();
    let schema = Schema {
        timestamp: cfg.pick("timestamp_column", a.schema.timestamp_column)?.unwrap_or(d.timestamp),
        microservice: cfg
            .pick("microservice_column", a.schema.microservice_column)?
            .unwrap_or(d.microservice),
        container: cfg.pick("container_column", a.schema.container_column)?.unwrap_or(d.container),
        mt: cfg.pick("mt_column", a.schema.mt_column)?.unwrap_or(d.mt),
        mcr: cfg.pick("mcr_column", a.schema.mcr_column)?.unwrap_or(d.mcr),
    };
    let mut run = RunConfig {
        mt_bounds: Bounds::new(
            cfg.pick("mt_min", a.bounds.mt_min)?.unwrap_or(DEFAULT_MT_BOUNDS.low),
            cfg.pick("mt_max", a.bounds.mt_max)?.unwrap_or(DEFAULT_MT_BOUNDS.high),
        )?,
        mcr_bounds: Bounds::new(
            cfg.pick("mcr_min", a.bounds.mcr_min)?.unwrap_or(DEFAULT_MCR_BOUNDS.low),
            cfg.pick("mcr_max", a.bounds.mcr_max)?.unwrap_or(DEFAULT_MCR_BOUNDS.high),
        )?,
        ..Default::default()
    };
    run.paths = vec![("input", input.clone()), ("output", output.clone())];
    if let Some(f) = &features_out {
        run.paths.push(("features-out", f.clone()));
    }
    run.validate()?;

    let ingested = ingest_csv(open_input(&input)?, &schema, provenance(&input))?;
    let n_valid = ingested.dataset.len();
    let ds = if cfg.pick_flag("no_filter", a.no_filter)? {
        ingested.dataset
    } else {
        filter_ranges(&ingested.dataset, run.mt_bounds, run.mcr_bounds)?
    };
    eprintln!(
        "ingested {} row(s), skipped {}, kept {} after filtering",
        n_valid,
        ingested.skipped,
        ds.len()
    );
    write_csv(&ds, create_output(&output)?, &Schema::default())?;
    if let Some(path) = features_out {
        let fs = extract(&ds)?;
        if let Ok(r) = pearson(&fs) {
            eprintln!("pearson(mt, mcr) = {r:.4}");
        }
        fs.write_csv(create_output(&path)?)?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs, cfg: &ConfigFile) -> Result<()> {
    let output = require("output", cfg.pick_path("output", a.output))?;
    let shape = cfg.pick::<String>("shape", a.shape)?.unwrap_or_else(|| "linear".into());
    let seed = cfg.pick("seed", a.seed)?;
    let rows = cfg.pick("rows", a.rows)?;
    let mt_low = cfg.pick("mt_low", a.mt_low)?;
    let mt_high = cfg.pick("mt_high", a.mt_high)?;
    let noise = cfg.pick("noise", a.noise)?;
    let ds = match shape.as_str() {
        "linear" => {
            let d = SyntheticSpec::default();
            generate_synthetic(&SyntheticSpec {
                n_rows: rows.unwrap_or(d.n_rows),
                mt_range: (mt_low.unwrap_or(d.mt_range.0), mt_high.unwrap_or(d.mt_range.1)),
                target_pearson: cfg.pick("pearson", a.pearson)?.unwrap_or(d.target_pearson),
                noise_scale: noise.unwrap_or(d.noise_scale),
                seed: seed.unwrap_or(d.seed),
            })?
        }
        "piecewise" => {
            let d = PiecewiseSpec::default();
            let levels = match cfg.pick::<String>("levels", a.levels)? {
                Some(s) => parse_list("levels", &s)?,
                None => d.levels,
            };
            generate_piecewise(&PiecewiseSpec {
                n_rows: rows.unwrap_or(d.n_rows),
                mt_range: (mt_low.unwrap_or(d.mt_range.0), mt_high.unwrap_or(d.mt_range.1)),
                levels,
                noise_scale: noise.unwrap_or(d.noise_scale),
                seed: seed.unwrap_or(d.seed),
            })?
        }
        other => return Err(Error::usage(format!("unknown synthetic shape `{other}`"))),
    };
    write_csv(&ds, create_output(&output)?, &Schema::default())
}

fn cmd_train(a: TrainArgs, cfg: &ConfigFile) -> Result<()> {
    let input = require("input", cfg.pick_path("input", a.input))?;
    let model_out = require("model-out", cfg.pick_path("model_out", a.model_out))?;
    let kind = resolve_kind(cfg, a.kind)?;
    let hyper = resolve_hyper(kind, &a.hyper, cfg)?;
    let seed = cfg.pick("seed", a.seed)?.unwrap_or(1);
    let run = RunConfig {
        paths: vec![("input", input.clone()), ("model-out", model_out.clone())],
        kind: Some(kind),
        hyper: Some(hyper),
        seeds: vec![seed],
        ..Default::default()
    };
    run.validate()?;

    let fs = extract(&load_trace(&input)?)?;
    let model = fit(&fs, &hyper, seed)?;
    eprintln!(
        "trained {kind} on {} point(s) in {:.3} s",
        fs.len(),
        model.meta().fit_wall_time
    );
    write_text(&model_out, &model.to_json()?)
}

fn cmd_eval(a: EvalArgs, cfg: &ConfigFile) -> Result<()> {
    let input = require("input", cfg.pick_path("input", a.input))?;
    let report_out = require("report-out", cfg.pick_path("report_out", a.report_out))?;
    let table_out = cfg.pick_path("table_out", a.table_out);
    let replica_out = cfg.pick_path("replica_out", a.replica_out);
    let omit_timing = cfg.pick_flag("omit_timing", a.omit_timing)?;
    let kinds: Vec<ModelKind> = match cfg.pick::<String>("kinds", a.kinds)? {
        Some(s) => parse_list("kinds", &s)?,
        None => ModelKind::ALL.to_vec(),
    };
    let seeds: Vec<u64> = match cfg.pick::<String>("seeds", a.seeds)? {
        Some(s) => parse_list("seeds", &s)?,
        None => vec![1],
    };
    let mut run = RunConfig {
        paths: vec![("input", input.clone()), ("report-out", report_out.clone())],
        train_fraction: cfg.pick("train_fraction", a.train_fraction)?.unwrap_or(0.8),
        seeds,
        ..Default::default()
    };
    for (name, p) in [("table-out", &table_out), ("replica-out", &replica_out)] {
        if let Some(p) = p {
            run.paths.push((name, p.clone()));
        }
    }
    run.validate()?;
    if kinds.is_empty() {
        return Err(Error::usage("no model kinds selected"));
    }

    let ds = load_trace(&input)?;
    let mut report = EvalReport::default();
    let mut replica_rows = Vec::new();
    for &seed in &run.seeds {
        let (train, test) = split(&ds, run.train_fraction, seed)?;
        let train = extract(&train)?;
        let test = extract(&test)?;
        for &kind in &kinds {
            let hyper = resolve_hyper(kind, &a.hyper, cfg)?;
            let model = fit(&train, &hyper, seed)?;
            report.extend(evaluate(std::slice::from_ref(&model), &test)?);
            if replica_out.is_some() {
                let pred = predict_batch(&model, test.x())?;
                let err = replica_error(test.y(), &pred, test.x())?;
                replica_rows.push((kind, seed, err));
            }
        }
    }
    if omit_timing {
        for r in &mut report.rows {
            r.fit_time = 0.0;
        }
    }
    report.write_csv(create_output(&report_out)?)?;
    let table = report.to_text_table();
    match &table_out {
        Some(p) => write_text(p, &table)?,
        None => eprint!("{table}"),
    }
    if let Some(p) = replica_out {
        let mut w = csv::Writer::from_writer(create_output(&p)?);
        w.write_record(["model", "seed", "replica_mape_percent", "n_excluded"])?;
        for (kind, seed, err) in replica_rows {
            w.write_record([
                kind.to_string(),
                seed.to_string(),
                err.percent.to_string(),
                err.excluded.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// Parses `name=v1,v2;name2=v3`.
pub fn parse_grid(kind: ModelKind, spec: &str) -> Result<ParamGrid> {
    let mut grid = ParamGrid::new(kind);
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, values) = part
            .split_once('=')
            .ok_or_else(|| Error::usage(format!("grid entry `{part}` is not name=v1,v2")))?;
        let values: Vec<f64> = parse_list(name.trim(), values)?;
        grid = grid.with(name.trim(), &values)?;
    }
    Ok(grid)
}

fn cmd_tune(a: TuneArgs, cfg: &ConfigFile) -> Result<()> {
    let input = require("input", cfg.pick_path("input", a.input))?;
    let result_out = require("result-out", cfg.pick_path("result_out", a.result_out))?;
    let curve_out = cfg.pick_path("curve_out", a.curve_out);
    let kind = resolve_kind(cfg, a.kind)?;
    let mut grid = parse_grid(kind, &cfg.pick::<String>("grid", a.grid)?.unwrap_or_default())?;
    if let Some(k) = cfg.pick("folds", a.folds)? {
        grid = grid.with_folds(k)?;
    }
    let val_fraction = cfg.pick("val_fraction", a.val_fraction)?.unwrap_or(DEFAULT_VAL_FRACTION);
    let seed = cfg.pick("seed", a.seed)?.unwrap_or(1);
    let omit_timing = cfg.pick_flag("omit_timing", a.omit_timing)?;
    let mut run = RunConfig {
        paths: vec![("input", input.clone()), ("result-out", result_out.clone())],
        kind: Some(kind),
        seeds: vec![seed],
        ..Default::default()
    };
    if let Some(c) = &curve_out {
        run.paths.push(("curve-out", c.clone()));
    }
    run.validate()?;

    let fs = extract(&load_trace(&input)?)?;
    let result = grid_search(&fs, &grid, val_fraction, seed)?;
    eprintln!(
        "evaluated {} configuration(s); best #{}: {:?}",
        result.rows.len(),
        result.best,
        result.best_config()
    );
    result.write_csv(create_output(&result_out)?, !omit_timing)?;
    if let Some(path) = curve_out {
        let hyper = result.best_hyper()?;
        if !kind.is_iterative() {
            return Err(Error::usage(format!("{kind} has no learning curve; drop --curve-out")));
        }
        learning_curve(&fs, &hyper, seed, val_fraction)?.write_csv(create_output(&path)?)?;
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs, cfg: &ConfigFile) -> Result<()> {
    let model_path = require("model", cfg.pick_path("model", a.model))?;
    let input = require("input", cfg.pick_path("input", a.input))?;
    let output = require("output", cfg.pick_path("output", a.output))?;
    let column = cfg.pick::<String>("mt_column", a.mt_column)?.unwrap_or_else(|| "mt".into());
    let to_seconds: fn(f64) -> f64 = match cfg.pick::<String>("mt_unit", a.mt_unit)?.as_deref().unwrap_or("ms") {
        "ms" => ms_to_seconds,
        "s" => |v| v,
        other => return Err(Error::usage(format!("unknown --mt-unit `{other}` (ms or s)"))),
    };
    RunConfig {
        paths: vec![
            ("model", model_path.clone()),
            ("input", input.clone()),
            ("output", output.clone()),
        ],
        ..Default::default()
    }
    .validate()?;

    let model = TrainedModel::from_json(&read_text(&model_path)?)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open_input(&input)?);
    let col = reader
        .headers()?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::data(format!("{}: missing column `{column}`", input.display())))?;
    let mut w = csv::Writer::from_writer(create_output(&output)?);
    w.write_record([column.as_str(), "mcr_pred"])?;
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let raw = row.get(col).unwrap_or("");
        let mt: f64 = raw
            .parse()
            .map_err(|_| Error::data(format!("{} row {}: bad `{column}` value `{raw}`", input.display(), i + 1)))?;
        let rate = predict(&model, to_seconds(mt))
            .map_err(|e| Error::data(format!("{} row {}: {e}", input.display(), i + 1)))?;
        w.write_record([raw.to_string(), rate.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&output, e))?;
    Ok(())
}

#[derive(Debug, serde::Deserialize)]
struct WorkloadRow {
    producer: String,
    microservice: String,
    resource: String,
    mt_s: f64,
    #[serde(default)]
    mcr: Option<f64>,
}

fn cmd_plan(a: PlanArgs, cfg: &ConfigFile) -> Result<()> {
    let input = require("input", cfg.pick_path("input", a.input))?;
    let plan_out = require("plan-out", cfg.pick_path("plan_out", a.plan_out))?;
    let model_path = cfg.pick_path("model", a.model);
    let csv_out = cfg.pick_path("csv_out", a.csv_out);
    let error_out = cfg.pick_path("error_out", a.error_out);
    let mut run = RunConfig {
        paths: vec![("input", input.clone()), ("plan-out", plan_out.clone())],
        ..Default::default()
    };
    for (name, p) in [("model", &model_path), ("csv-out", &csv_out), ("error-out", &error_out)] {
        if let Some(p) = p {
            run.paths.push((name, p.clone()));
        }
    }
    run.validate()?;

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open_input(&input)?);
    let rows: Vec<WorkloadRow> = reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::data(format!("{} row {}: {e}", input.display(), i + 1))))
        .collect::<Result<_>>()?;
    let model = model_path
        .as_deref()
        .map(|p| read_text(p).and_then(|t| TrainedModel::from_json(&t)))
        .transpose()?;
    if model.is_none() {
        if let Some(r) = rows.iter().find(|r| r.mcr.is_none()) {
            return Err(Error::data(format!(
                "microservice `{}` has no observed mcr and no --model was given",
                r.microservice
            )));
        }
    }

    let mut placements = HashMap::new();
    let mut mts = HashMap::new();
    for r in &rows {
        for (map, value, what) in [(&mut placements, r.resource.clone(), "resource")] {
            if let Some(prev) = map.insert(r.microservice.clone(), value.clone()) {
                if prev != value {
                    return Err(Error::data(format!(
                        "microservice `{}` has conflicting {what} `{prev}` and `{value}`",
                        r.microservice
                    )));
                }
            }
        }
        if let Some(prev) = mts.insert(r.microservice.clone(), r.mt_s) {
            if prev != r.mt_s {
                return Err(Error::data(format!(
                    "microservice `{}` has conflicting times {prev} and {}",
                    r.microservice, r.mt_s
                )));
            }
        }
    }
    let workload = Workload::new(
        rows.iter()
            .map(|r| Dataflow {
                producer: r.producer.clone(),
                microservice: r.microservice.clone(),
                rate: r.mcr.unwrap_or(0.0),
            })
            .collect(),
    )?;
    let plan = plan_replicas(&workload, &placements, &mts, model.as_ref())?;
    emit_plan(&plan, create_output(&plan_out)?)?;
    if let Some(p) = csv_out {
        write_plan_csv(&plan, create_output(&p)?)?;
    }

    if error_out.is_some() && model.is_none() {
        return Err(Error::usage("--error-out needs --model"));
    }
    let actual: Option<Vec<f64>> = rows.iter().map(|r| r.mcr).collect();
    if let (Some(model), Some(actual)) = (&model, &actual) {
        let predicted: Vec<f64> = plan.rows.iter().map(|r| r.mcr_pred).collect();
        let times: Vec<f64> = plan.rows.iter().map(|r| r.mt_s).collect();
        let err = replica_error(actual, &predicted, &times)?;
        eprintln!(
            "replica MAPE ({}): {:.2} % ({} excluded)",
            model.kind(),
            err.percent,
            err.excluded
        );
        if let Some(p) = error_out {
            let mut w = csv::Writer::from_writer(create_output(&p)?);
            w.write_record(["model", "replica_mape_percent", "n_excluded"])?;
            w.write_record([
                model.kind().to_string(),
                err.percent.to_string(),
                err.excluded.to_string(),
            ])?;
            w.flush().map_err(|e| Error::io(&p, e))?;
        }
    } else if error_out.is_some() {
        return Err(Error::data("--error-out needs an observed mcr for every row"));
    }
    Ok(())
}

fn read_columns(path: &Path, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open_input(path)?);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("{}: missing column `{name}`", path.display())))
    };
    let (xi, yi) = (find(x)?, find(y)?);
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let parse = |i: usize| row.get(i).and_then(|v| v.parse::<f64>().ok());
        if let (Some(a), Some(b)) = (parse(xi), parse(yi)) {
            out.push((a, b));
        }
    }
    Ok(out)
}

fn cmd_plot(a: PlotArgs, cfg: &ConfigFile) -> Result<()> {
    let input = require("input", cfg.pick_path("input", a.input))?;
    let output = require("output", cfg.pick_path("output", a.output))?;
    let overlay = cfg.pick_path("overlay", a.overlay);
    let kind = cfg.pick::<String>("plot_kind", a.kind)?.unwrap_or_else(|| "scatter".into());
    let mut run = RunConfig {
        paths: vec![("input", input.clone()), ("output", output.clone())],
        ..Default::default()
    };
    if let Some(o) = &overlay {
        run.paths.push(("overlay", o.clone()));
    }
    run.validate()?;

    let chart = match kind.as_str() {
        "scatter" => {
            let x = cfg.pick::<String>("x_column", a.x_column)?.unwrap_or_else(|| "mt".into());
            let y = cfg.pick::<String>("y_column", a.y_column)?.unwrap_or_else(|| "mcr".into());
            let mut series = vec![Series::points("observed", read_columns(&input, &x, &y)?)];
            if let Some(o) = overlay {
                let ox = cfg.pick::<String>("overlay_x", a.overlay_x)?.unwrap_or_else(|| x.clone());
                let oy = cfg
                    .pick::<String>("overlay_y", a.overlay_y)?
                    .unwrap_or_else(|| "mcr_pred".into());
                let mut pts = read_columns(&o, &ox, &oy)?;
                pts.sort_by(|p, q| p.0.total_cmp(&q.0));
                series.push(Series::line("predicted", pts));
            }
            Chart {
                title: cfg.pick("title", a.title)?.unwrap_or_else(|| "Call rate vs. microservice time".into()),
                x_label: x,
                y_label: y,
                series,
            }
        }
        "curve" => Chart {
            title: cfg.pick("title", a.title)?.unwrap_or_else(|| "Learning curve".into()),
            x_label: "iteration".into(),
            y_label: "MAE [calls/s]".into(),
            series: vec![
                Series::line("train", read_columns(&input, "iteration", "train_loss")?),
                Series::line("validation", read_columns(&input, "iteration", "val_loss")?),
            ],
        },
        other => return Err(Error::usage(format!("unknown plot kind `{other}` (scatter or curve)"))),
    };
    write_text(&output, &render(&chart))
}

/// Parses arguments and runs the selected command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::usage(e.to_string()))?;
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a, &cfg),
        Command::Synth(a) => cmd_synth(a, &cfg),
        Command::Train(a) => cmd_train(a, &cfg),
        Command::Eval(a) => cmd_eval(a, &cfg),
        Command::Tune(a) => cmd_tune(a, &cfg),
        Command::Predict(a) => cmd_predict(a, &cfg),
        Command::Plan(a) => cmd_plan(a, &cfg),
        Command::Plot(a) => cmd_plot(a, &cfg),
    }
}

/// Entry point for the binary: runs and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<T> = args.into_iter().collect();
    match Cli::try_parse_from(args.clone()) {
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        _ => {}
    }
    match run(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("callscale: {e}");
            e.exit_code()
        }
    }
}
