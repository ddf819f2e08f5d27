//! Trace ingestion, filtering, splitting and synthesis.
//!
//! A trace is a CSV file with one row per monitoring interval and container:
//! timestamp, microservice name, container instance, microservice time
//! (ms/call) and call rate (calls/s). Units are fixed at this boundary;
//! conversion to seconds happens once, in [`crate::features::extract`].

use std::fmt;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Inclusive microservice-time bounds (ms/call) used when filtering raw traces.
pub const DEFAULT_MT_BOUNDS: Bounds = Bounds {
    low: 0.01,
    high: 5859.0,
};

/// Inclusive call-rate bounds (calls/s) used when filtering raw traces.
pub const DEFAULT_MCR_BOUNDS: Bounds = Bounds {
    low: 0.025,
    high: 4874.0,
};

/// Slope of the noiseless line behind [`generate_synthetic`], in calls/s per ms/call.
pub const SYNTHETIC_SLOPE: f64 = 0.05;
/// Intercept of the noiseless line behind [`generate_synthetic`], in calls/s.
pub const SYNTHETIC_INTERCEPT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Seconds since epoch.
    pub timestamp: u64,
    pub microservice_id: String,
    pub container_id: String,
    /// Microservice time, ms/call. Always > 0.
    pub mt: f64,
    /// Call rate, calls/s. Always >= 0.
    pub mcr: f64,
}

impl TraceRecord {
    pub fn is_valid(&self) -> bool {
        self.mt.is_finite() && self.mt > 0.0 && self.mcr.is_finite() && self.mcr >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    File(String),
    Synthetic,
    Derived(String),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::File(p) => write!(f, "{p}"),
            Provenance::Synthetic => write!(f, "synthetic"),
            Provenance::Derived(s) => write!(f, "{s}"),
        }
    }
}

/// An ordered, immutable collection of trace records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<TraceRecord>,
    provenance: Provenance,
}

impl Dataset {
    /// Builds a dataset, rejecting any record that violates `mt > 0`, `mcr >= 0`.
    pub fn new(records: Vec<TraceRecord>, provenance: Provenance) -> Result<Self> {
        if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| !r.is_valid()) {
            return Err(Error::data(format!(
                "record {i} is invalid (mt={}, mcr={})",
                r.mt, r.mcr
            )));
        }
        Ok(Dataset {
            records,
            provenance,
        })
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<TraceRecord> {
        self.records
    }
}

/// Maps header names of a CSV file onto the five record fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub timestamp: String,
    pub microservice: String,
    pub container: String,
    pub mt: String,
    pub mcr: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            timestamp: "timestamp".into(),
            microservice: "msname".into(),
            container: "msinstanceid".into(),
            mt: "mt".into(),
            mcr: "mcr".into(),
        }
    }
}

/// Result of [`ingest_csv`]: the valid rows plus how many were dropped.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    pub skipped: usize,
}

/// Inclusive interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: f64,
    pub high: f64,
}

impl Bounds {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if low.is_nan() || high.is_nan() || low > high {
            return Err(Error::usage(format!("inverted bounds [{low}, {high}]")));
        }
        Ok(Bounds { low, high })
    }

    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }
}

/// Reads a headered CSV trace. Rows whose metrics are missing, non-numeric,
/// non-finite, `mt <= 0` or `mcr < 0` are skipped and counted; a mapped
/// column absent from the header is a hard error.
pub fn ingest_csv<R: Read>(source: R, schema: &Schema, provenance: Provenance) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("missing column `{name}` in trace header")))
    };
    let ts_col = column(&schema.timestamp)?;
    let ms_col = column(&schema.microservice)?;
    let ct_col = column(&schema.container)?;
    let mt_col = column(&schema.mt)?;
    let mcr_col = column(&schema.mcr)?;

    let mut records = Vec::new();
    let mut skipped = 0;
    for row in reader.records() {
        let row = row?;
        let parsed = (|| {
            let timestamp = parse_timestamp(row.get(ts_col)?)?;
            let mt = parse_metric(row.get(mt_col)?)?;
            let mcr = parse_metric(row.get(mcr_col)?)?;
            let rec = TraceRecord {
                timestamp,
                microservice_id: row.get(ms_col)?.to_string(),
                container_id: row.get(ct_col)?.to_string(),
                mt,
                mcr,
            };
            rec.is_valid().then_some(rec)
        })();
        match parsed {
            Some(rec) => records.push(rec),
            None => skipped += 1,
        }
    }
    Ok(Ingested {
        dataset: Dataset {
            records,
            provenance,
        },
        skipped,
    })
}

fn parse_metric(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_timestamp(s: &str) -> Option<u64> {
    if let Ok(v) = s.parse::<u64>() {
        return Some(v);
    }
    let v = s.parse::<f64>().ok()?;
    (v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64).then_some(v as u64)
}

/// Writes the dataset in the same dialect [`ingest_csv`] reads.
pub fn write_csv<W: Write>(ds: &Dataset, sink: W, schema: &Schema) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        &schema.timestamp,
        &schema.microservice,
        &schema.container,
        &schema.mt,
        &schema.mcr,
    ])?;
    for r in &ds.records {
        w.write_record([
            r.timestamp.to_string(),
            r.microservice_id.clone(),
            r.container_id.clone(),
            r.mt.to_string(),
            r.mcr.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv sink>", e))?;
    Ok(())
}

/// Keeps exactly the records whose `mt` and `mcr` fall inside the closed
/// intervals, preserving order.
pub fn filter_ranges(ds: &Dataset, mt_bounds: Bounds, mcr_bounds: Bounds) -> Result<Dataset> {
    let mt_bounds = Bounds::new(mt_bounds.low, mt_bounds.high)?;
    let mcr_bounds = Bounds::new(mcr_bounds.low, mcr_bounds.high)?;
    let records = ds
        .records
        .iter()
        .filter(|r| mt_bounds.contains(r.mt) && mcr_bounds.contains(r.mcr))
        .cloned()
        .collect();
    Ok(Dataset {
        records,
        provenance: ds.provenance.clone(),
    })
}

/// Uniformly shuffles record indices with a seeded RNG and assigns the first
/// `round(train_fraction * n)` to train. Both halves keep input order.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::usage(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = ds.len();
    if n < 2 {
        return Err(Error::data(format!("cannot split {n} record(s); need at least 2")));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::SPLIT));
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let (train, test): (Vec<_>, Vec<_>) = ds
        .records
        .iter()
        .cloned()
        .zip(in_train)
        .partition(|(_, t)| *t);
    let wrap = |recs: Vec<(TraceRecord, bool)>, part: &str| Dataset {
        records: recs.into_iter().map(|(r, _)| r).collect(),
        provenance: Provenance::Derived(format!("{} [{part} seed={seed}]", ds.provenance)),
    };
    Ok((wrap(train, "train"), wrap(test, "test")))
}

/// Parameters for a linearly correlated synthetic trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    /// (low, high) microservice time in ms/call; sampled log-uniformly.
    pub mt_range: (f64, f64),
    /// Desired MT/MCR Pearson coefficient, in (0, 1].
    pub target_pearson: f64,
    /// Initial noise standard deviation relative to the signal's. Zero gives a
    /// noiseless line regardless of `target_pearson`.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_rows: 10_000,
            mt_range: (1.0, 1000.0),
            target_pearson: 0.75,
            noise_scale: 1.0,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.mt_range;
        if self.n_rows < 3 {
            return Err(Error::usage(format!("n_rows must be >= 3, got {}", self.n_rows)));
        }
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::usage(format!("invalid mt range ({lo}, {hi})")));
        }
        if !(self.target_pearson > 0.0 && self.target_pearson <= 1.0) {
            return Err(Error::usage(format!(
                "target pearson must be in (0, 1], got {}",
                self.target_pearson
            )));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::usage(format!("invalid noise scale {}", self.noise_scale)));
        }
        Ok(())
    }
}

const PEARSON_TOLERANCE: f64 = 0.05;

/// Generates `mcr = SYNTHETIC_SLOPE * mt + b + noise` with Gaussian noise.
///
/// If the requested `noise_scale` already lands within ±0.05 of the target
/// correlation it is kept; otherwise the noise amplitude is bisected until
/// the empirical coefficient hits the target. The intercept is raised when
/// needed so that no rate is negative, which leaves the coefficient
/// unchanged.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, rng::SYNTH);
    let mts = log_uniform(&mut rng, spec.n_rows, spec.mt_range);
    let signal: Vec<f64> = mts.iter().map(|m| SYNTHETIC_SLOPE * m).collect();

    let mut offset = vec![0.0; spec.n_rows];
    if spec.noise_scale > 0.0 {
        let z: Vec<f64> = (0..spec.n_rows).map(|_| rng.sample(StandardNormal)).collect();
        let signal_sd = population_sd(&signal);
        let corr_at = |sigma: f64| {
            let y: Vec<f64> = signal.iter().zip(&z).map(|(s, e)| s + sigma * e).collect();
            raw_pearson(&mts, &y)
        };
        let mut sigma = spec.noise_scale * signal_sd;
        let target = spec.target_pearson;
        if (corr_at(sigma) - target).abs() > PEARSON_TOLERANCE {
            sigma = bisect_noise(&corr_at, target, signal_sd)?;
        }
        offset = z.iter().map(|e| sigma * e).collect();
    }

    let raw: Vec<f64> = signal.iter().zip(&offset).map(|(s, e)| s + e).collect();
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let intercept = SYNTHETIC_INTERCEPT + (-(min + SYNTHETIC_INTERCEPT)).max(0.0);
    let records = mts
        .iter()
        .zip(&raw)
        .enumerate()
        .map(|(i, (&mt, &r))| synthetic_record(i, mt, r + intercept))
        .collect();
    Ok(Dataset {
        records,
        provenance: Provenance::Synthetic,
    })
}

fn bisect_noise(corr_at: &dyn Fn(f64) -> f64, target: f64, signal_sd: f64) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = signal_sd.max(f64::MIN_POSITIVE);
    let mut grow = 0;
    while corr_at(hi) > target {
        hi *= 4.0;
        grow += 1;
        if grow > 40 {
            return Err(Error::data(format!(
                "target pearson {target} unreachable; achieved {:.4} at maximum noise",
                corr_at(hi)
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if corr_at(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sigma = 0.5 * (lo + hi);
    let achieved = corr_at(sigma);
    if (achieved - target).abs() > PEARSON_TOLERANCE {
        return Err(Error::data(format!(
            "target pearson {target} unreachable; achieved {achieved:.4}"
        )));
    }
    Ok(sigma)
}

/// Parameters for a nonlinear, piecewise-constant rate trace: the log-MT axis
/// is cut into `levels.len()` equal-width bands, each with its own base rate,
/// and every rate carries multiplicative log-normal noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSpec {
    pub n_rows: usize,
    pub mt_range: (f64, f64),
    /// Base call rate (calls/s) per band, in increasing-MT order.
    pub levels: Vec<f64>,
    /// Standard deviation of the log-normal noise factor.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for PiecewiseSpec {
    fn default() -> Self {
        PiecewiseSpec {
            n_rows: 50_000,
            mt_range: (50.0, 2000.0),
            levels: vec![6.0, 40.0, 12.0, 70.0, 25.0, 90.0],
            noise_scale: 0.1,
            seed: 1,
        }
    }
}

pub fn generate_piecewise(spec: &PiecewiseSpec) -> Result<Dataset> {
    let (lo, hi) = spec.mt_range;
    if spec.n_rows < 1 || !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::usage("invalid piecewise spec: need n_rows >= 1 and 0 < low < high"));
    }
    if spec.levels.is_empty() || spec.levels.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::usage("piecewise levels must be non-empty and non-negative"));
    }
    if !(spec.noise_scale >= 0.0 && spec.noise_scale.is_finite()) {
        return Err(Error::usage(format!("invalid noise scale {}", spec.noise_scale)));
    }
    let mut rng = rng::stream(spec.seed, rng::SYNTH);
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    let bands = spec.levels.len();
    let records = (0..spec.n_rows)
        .map(|i| {
            let u: f64 = rng.random();
            let mt = (ln_lo + u * (ln_hi - ln_lo)).exp();
            let band = ((u * bands as f64) as usize).min(bands - 1);
            let z: f64 = rng.sample(StandardNormal);
            let mcr = spec.levels[band] * (spec.noise_scale * z).exp();
            synthetic_record(i, mt, mcr)
        })
        .collect();
    Ok(Dataset {
        records,
        provenance: Provenance::Synthetic,
    })
}

fn synthetic_record(i: usize, mt: f64, mcr: f64) -> TraceRecord {
    TraceRecord {
        timestamp: (i as u64) * 30,
        microservice_id: format!("ms_{}", i % 97),
        container_id: format!("ct_{i}"),
        mt,
        mcr,
    }
}

fn log_uniform<R: Rng>(rng: &mut R, n: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            (ln_lo + u * (ln_hi - ln_lo)).exp().clamp(lo, hi)
        })
        .collect()
}

fn population_sd(v: &[f64]) -> f64 {
    let m = crate::stats::mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn raw_pearson(x: &[f64], y: &[f64]) -> f64 {
    let mx = crate::stats::mean(x);
    let my = crate::stats::mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}
