//! Exhaustive hyperparameter search and learning curves.

use std::io::Write;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::eval::mae;
use crate::features::{standardize_both, FeatureSet};
use crate::gbr::gbr_fit;
use crate::mlp::{mlp_fit_observed, mlp_forward};
use crate::model::{fit, predict_batch, Hyper, ModelKind};
use crate::rng;

pub const DEFAULT_VAL_FRACTION: f64 = 0.2;

/// Candidate values per hyperparameter for one model kind. Configurations
/// are enumerated as the Cartesian product with the last parameter varying
/// fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    kind: ModelKind,
    params: Vec<(String, Vec<f64>)>,
    folds: Option<usize>,
}

const MLP_PARAMS: &[&str] = &[
    "hidden_neurons",
    "epochs",
    "learning_rate",
    "batch_size",
    "init_scale",
];
const GBR_PARAMS: &[&str] = &[
    "n_estimators",
    "learning_rate",
    "subsample",
    "max_depth",
    "min_samples_split",
    "min_samples_leaf",
];
const INTEGER_PARAMS: &[&str] = &[
    "hidden_neurons",
    "epochs",
    "batch_size",
    "n_estimators",
    "max_depth",
    "min_samples_split",
    "min_samples_leaf",
];

impl ParamGrid {
    pub fn new(kind: ModelKind) -> Self {
        ParamGrid {
            kind,
            params: Vec::new(),
            folds: None,
        }
    }

    /// Adds (or replaces) the candidate list for `name`.
    pub fn with(mut self, name: &str, values: &[f64]) -> Result<Self> {
        let known = match self.kind {
            ModelKind::Lr => &[][..],
            ModelKind::Mlp => MLP_PARAMS,
            ModelKind::Gbr => GBR_PARAMS,
        };
        if !known.contains(&name) {
            return Err(Error::usage(format!(
                "`{name}` is not a {} hyperparameter (known: {})",
                self.kind,
                known.join(", ")
            )));
        }
        if values.is_empty() {
            return Err(Error::usage(format!("no candidate values for `{name}`")));
        }
        if INTEGER_PARAMS.contains(&name) {
            if let Some(v) = values.iter().find(|v| !(v.fract() == 0.0 && **v >= 0.0)) {
                return Err(Error::usage(format!("`{name}` needs non-negative integers, got {v}")));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::usage(format!("`{name}` has non-finite value {v}")));
        }
        match self.params.iter_mut().find(|(n, _)| n == name) {
            Some((_, vals)) => *vals = values.to_vec(),
            None => self.params.push((name.to_string(), values.to_vec())),
        }
        Ok(self)
    }

    /// Score by k-fold cross-validation instead of a single hold-out split.
    pub fn with_folds(mut self, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::usage(format!("k-fold needs k >= 2, got {k}")));
        }
        self.folds = Some(k);
        Ok(self)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn param_names(&self) -> Vec<&str> {
        self.params.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn size(&self) -> usize {
        self.params.iter().map(|(_, v)| v.len()).product()
    }

    /// All configurations in grid order.
    pub fn configs(&self) -> Vec<Config> {
        let mut out: Vec<Config> = vec![Vec::new()];
        for (name, values) in &self.params {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut c = prefix.clone();
                        c.push((name.clone(), *v));
                        c
                    })
                })
                .collect();
        }
        out
    }
}

/// One grid point: `(name, value)` pairs in grid parameter order.
pub type Config = Vec<(String, f64)>;

/// Applies `config` on top of the kind's default hyperparameters.
pub fn apply_config(kind: ModelKind, config: &Config) -> Result<Hyper> {
    let mut hyper = Hyper::default_for(kind);
    for (name, v) in config {
        let v = *v;
        match &mut hyper {
            Hyper::Lr => return Err(Error::usage(format!("LR has no hyperparameter `{name}`"))),
            Hyper::Mlp(hp) => match name.as_str() {
                "hidden_neurons" => hp.hidden_neurons = v as usize,
                "epochs" => hp.epochs = v as usize,
                "learning_rate" => hp.learning_rate = v,
                "batch_size" => hp.batch_size = v as usize,
                "init_scale" => hp.init_scale = v,
                _ => return Err(Error::usage(format!("MLP has no hyperparameter `{name}`"))),
            },
            Hyper::Gbr(hp) => match name.as_str() {
                "n_estimators" => hp.n_estimators = v as usize,
                "learning_rate" => hp.learning_rate = v,
                "subsample" => hp.subsample = v,
                "max_depth" => hp.max_depth = v as usize,
                "min_samples_split" => hp.min_samples_split = v as usize,
                "min_samples_leaf" => hp.min_samples_leaf = v as usize,
                _ => return Err(Error::usage(format!("GBR has no hyperparameter `{name}`"))),
            },
        }
    }
    Ok(hyper)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigScore {
    pub val_mae: f64,
    /// Seconds, summed over folds.
    pub fit_time: f64,
    /// Training loss curve of the (first) fit.
    pub loss_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigOutcome {
    pub index: usize,
    pub config: Config,
    pub seed: u64,
    /// Failure message when the configuration could not be fitted.
    pub outcome: std::result::Result<ConfigScore, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub kind: ModelKind,
    pub param_names: Vec<String>,
    pub rows: Vec<ConfigOutcome>,
    pub best: usize,
}

impl TuneResult {
    pub fn best_config(&self) -> &Config {
        &self.rows[self.best].config
    }

    pub fn best_hyper(&self) -> Result<Hyper> {
        apply_config(self.kind, self.best_config())
    }

    /// One row per configuration. `include_timing = false` blanks the
    /// wall-time column so the file is reproducible byte for byte.
    pub fn write_csv<W: Write>(&self, sink: W, include_timing: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["index".to_string()];
        header.extend(self.param_names.iter().cloned());
        header.extend(
            ["seed", "status", "val_mae", "fit_time_s", "best", "loss_curve"].map(String::from),
        );
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.index.to_string()];
            rec.extend(row.config.iter().map(|(_, v)| v.to_string()));
            rec.push(row.seed.to_string());
            match &row.outcome {
                Ok(s) => {
                    rec.push("ok".into());
                    rec.push(s.val_mae.to_string());
                    rec.push(if include_timing {
                        s.fit_time.to_string()
                    } else {
                        String::new()
                    });
                    rec.push((row.index == self.best).to_string());
                    rec.push(
                        s.loss_curve
                            .iter()
                            .map(|l| l.to_string())
                            .collect::<Vec<_>>()
                            .join(";"),
                    );
                }
                Err(msg) => {
                    rec.push(format!("failed: {msg}"));
                    rec.extend([String::new(), String::new(), "false".into(), String::new()]);
                }
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv sink>", e))?;
        Ok(())
    }
}

/// Shuffled index order used for hold-out and k-fold splits.
fn shuffled(n: usize, seed: u64, label: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, label));
    order
}

/// Train/validation index pairs for hold-out or k-fold scoring.
fn folds(n: usize, val_fraction: f64, k: Option<usize>, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    match k {
        None => {
            if !(val_fraction > 0.0 && val_fraction < 1.0) {
                return Err(Error::usage(format!(
                    "validation fraction must be in (0, 1), got {val_fraction}"
                )));
            }
            let n_val = (val_fraction * n as f64).round() as usize;
            if n_val == 0 || n_val >= n {
                return Err(Error::data(format!(
                    "cannot hold out {val_fraction} of {n} points for validation"
                )));
            }
            let order = shuffled(n, seed, rng::SPLIT);
            let mut val = order[..n_val].to_vec();
            let mut train = order[n_val..].to_vec();
            val.sort_unstable();
            train.sort_unstable();
            Ok(vec![(train, val)])
        }
        Some(k) => {
            if n < k {
                return Err(Error::data(format!("cannot make {k} folds from {n} points")));
            }
            let order = shuffled(n, seed, rng::FOLDS);
            Ok((0..k)
                .map(|f| {
                    let lo = f * n / k;
                    let hi = (f + 1) * n / k;
                    let mut val = order[lo..hi].to_vec();
                    let mut train: Vec<usize> =
                        order[..lo].iter().chain(&order[hi..]).copied().collect();
                    val.sort_unstable();
                    train.sort_unstable();
                    (train, val)
                })
                .collect())
        }
    }
}

fn score(
    fs: &FeatureSet,
    hyper: &Hyper,
    seed: u64,
    splits: &[(Vec<usize>, Vec<usize>)],
) -> Result<ConfigScore> {
    let mut total_mae = 0.0;
    let mut fit_time = 0.0;
    let mut loss_curve = None;
    for (train_idx, val_idx) in splits {
        let train = fs.select(train_idx)?;
        let val = fs.select(val_idx)?;
        let model = fit(&train, hyper, seed)?;
        let pred = predict_batch(&model, val.x())?;
        total_mae += mae(val.y(), &pred)?;
        fit_time += model.meta().fit_wall_time;
        loss_curve.get_or_insert_with(|| model.meta().loss_curve.clone());
    }
    Ok(ConfigScore {
        val_mae: total_mae / splits.len() as f64,
        fit_time,
        loss_curve: loss_curve.unwrap_or_default(),
    })
}

/// Fits every grid configuration on the same deterministic split(s) and
/// scores validation MAE. Per-config seeds derive from `(seed, index)`.
/// The best configuration minimizes validation MAE, then fit time, then grid
/// position. Failing configurations are reported rather than fatal.
pub fn grid_search(fs: &FeatureSet, grid: &ParamGrid, val_fraction: f64, seed: u64) -> Result<TuneResult> {
    let splits = folds(fs.len(), val_fraction, grid.folds, seed)?;
    let rows: Vec<ConfigOutcome> = grid
        .configs()
        .into_iter()
        .enumerate()
        .map(|(index, config)| {
            let config_seed = rng::mix(seed, index as u64);
            let outcome = apply_config(grid.kind, &config)
                .and_then(|h| h.validate().map(|_| h))
                .and_then(|h| score(fs, &h, config_seed, &splits))
                .map_err(|e| e.to_string());
            ConfigOutcome {
                index,
                config,
                seed: config_seed,
                outcome,
            }
        })
        .collect();

    let best = rows
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|s| (r.index, s)))
        .min_by(|(ia, a), (ib, b)| {
            a.val_mae
                .total_cmp(&b.val_mae)
                .then(a.fit_time.total_cmp(&b.fit_time))
                .then(ia.cmp(ib))
        })
        .map(|(i, _)| i)
        .ok_or_else(|| {
            let first = rows
                .iter()
                .find_map(|r| r.outcome.as_ref().err().cloned())
                .unwrap_or_default();
            Error::model(format!("every grid configuration failed (first: {first})"))
        })?;

    Ok(TuneResult {
        kind: grid.kind,
        param_names: grid.param_names().into_iter().map(String::from).collect(),
        rows,
        best,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    /// Training MAE (calls/s) per epoch or stage.
    pub train: Vec<f64>,
    /// Validation MAE (calls/s) per epoch or stage.
    pub validation: Vec<f64>,
}

impl LearningCurve {
    /// `iteration,train_loss,val_loss` with 1-based iterations.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["iteration", "train_loss", "val_loss"])?;
        for (i, (t, v)) in self.train.iter().zip(&self.validation).enumerate() {
            w.write_record([(i + 1).to_string(), t.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv sink>", e))?;
        Ok(())
    }
}

/// Per-epoch (MLP) or per-stage (GBR) train and validation MAE on a
/// deterministic hold-out split.
pub fn learning_curve(fs: &FeatureSet, hyper: &Hyper, seed: u64, val_fraction: f64) -> Result<LearningCurve> {
    let kind = hyper.kind();
    if !kind.is_iterative() {
        return Err(Error::usage(format!("{kind} is not iterative; no learning curve")));
    }
    hyper.validate()?;
    let splits = folds(fs.len(), val_fraction, None, seed)?;
    let (train_idx, val_idx) = &splits[0];
    let train = fs.select(train_idx)?;
    let val = fs.select(val_idx)?;
    match *hyper {
        Hyper::Gbr(mut hp) => {
            hp.seed = seed;
            let (model, train_curve) = gbr_fit(&train, &hp)?;
            Ok(LearningCurve {
                train: train_curve,
                validation: model.staged_mae(val.x(), val.y()),
            })
        }
        Hyper::Mlp(hp) => {
            let (scaled, scaling) = standardize_both(&train)?;
            let mut curve = LearningCurve {
                train: Vec::with_capacity(hp.epochs),
                validation: Vec::with_capacity(hp.epochs),
            };
            let raw_mae = |p: &crate::mlp::MlpParams, set: &FeatureSet| {
                set.x()
                    .iter()
                    .zip(set.y())
                    .map(|(x, y)| (y - scaling.unscale_y(mlp_forward(p, scaling.scale_x(*x)))).abs())
                    .sum::<f64>()
                    / set.len() as f64
            };
            mlp_fit_observed(&scaled, &hp, seed, |_, p| {
                curve.train.push(raw_mae(p, &train));
                curve.validation.push(raw_mae(p, &val));
            })?;
            Ok(curve)
        }
        Hyper::Lr => unreachable!("checked above"),
    }
}
