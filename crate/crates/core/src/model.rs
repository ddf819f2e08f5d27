//! Uniform fit / predict contract over the three call-rate models.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{standardize_both, FeatureSet, ScalingParams};
use crate::gbr::{gbr_fit, gbr_predict, GbrHyperParams, GbrModel};
use crate::linreg::{fit_ols, lr_predict, LinRegParams};
use crate::mlp::{mlp_fit, mlp_forward, MlpHyperParams, MlpParams};

/// Version of the JSON model document written by [`TrainedModel::to_json`].
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "MLP")]
    Mlp,
    #[serde(rename = "GBR")]
    Gbr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Lr, ModelKind::Mlp, ModelKind::Gbr];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lr => "LR",
            ModelKind::Mlp => "MLP",
            ModelKind::Gbr => "GBR",
        }
    }

    pub fn is_iterative(self) -> bool {
        !matches!(self, ModelKind::Lr)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" | "linear" => Ok(ModelKind::Lr),
            "mlp" => Ok(ModelKind::Mlp),
            "gbr" => Ok(ModelKind::Gbr),
            other => Err(Error::usage(format!(
                "unknown model kind `{other}` (expected lr, mlp or gbr)"
            ))),
        }
    }
}

/// Hyperparameters for one model kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Hyper {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "MLP")]
    Mlp(MlpHyperParams),
    #[serde(rename = "GBR")]
    Gbr(GbrHyperParams),
}

impl Hyper {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Lr => Hyper::Lr,
            ModelKind::Mlp => Hyper::Mlp(MlpHyperParams::default()),
            ModelKind::Gbr => Hyper::Gbr(GbrHyperParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Hyper::Lr => ModelKind::Lr,
            Hyper::Mlp(_) => ModelKind::Mlp,
            Hyper::Gbr(_) => ModelKind::Gbr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Hyper::Lr => Ok(()),
            Hyper::Mlp(hp) => hp.validate(),
            Hyper::Gbr(hp) => hp.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Lr(LinRegParams),
    Mlp(MlpParams),
    Gbr(GbrModel),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Lr(_) => ModelKind::Lr,
            ModelParams::Mlp(_) => ModelKind::Mlp,
            ModelParams::Gbr(_) => ModelKind::Gbr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    /// Seconds spent inside the fit, measured with a monotonic clock.
    pub fit_wall_time: f64,
    /// Training loss after each epoch (MLP) or stage (GBR), calls/s. Empty
    /// for LR.
    pub loss_curve: Vec<f64>,
}

/// A fitted model. Immutable; prediction never mutates it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    params: ModelParams,
    hyper: Hyper,
    scaling: Option<ScalingParams>,
    meta: TrainingMeta,
}

impl TrainedModel {
    /// Assembles a model, enforcing that scaling is present exactly for MLPs
    /// and that the hyperparameters match the parameter block.
    pub fn from_parts(
        params: ModelParams,
        hyper: Hyper,
        scaling: Option<ScalingParams>,
        meta: TrainingMeta,
    ) -> Result<Self> {
        if params.kind() != hyper.kind() {
            return Err(Error::model(format!(
                "{} parameters paired with {} hyperparameters",
                params.kind(),
                hyper.kind()
            )));
        }
        if scaling.is_some() != (params.kind() == ModelKind::Mlp) {
            return Err(Error::model("feature scaling must be present for MLP models only"));
        }
        if let Some(s) = &scaling {
            if !(s.x_std > 0.0 && s.y_std > 0.0) {
                return Err(Error::model("scaling standard deviations must be positive"));
            }
        }
        Ok(TrainedModel {
            params,
            hyper,
            scaling,
            meta,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub fn scaling(&self) -> Option<&ScalingParams> {
        self.scaling.as_ref()
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    /// Unclamped model output in calls/s. `mt` is not validated.
    pub fn raw_output(&self, mt: f64) -> f64 {
        match (&self.params, &self.scaling) {
            (ModelParams::Lr(p), _) => lr_predict(p, mt),
            (ModelParams::Gbr(m), _) => gbr_predict(m, mt),
            (ModelParams::Mlp(p), Some(s)) => s.unscale_y(mlp_forward(p, s.scale_x(mt))),
            (ModelParams::Mlp(p), None) => mlp_forward(p, mt),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            kind: self.kind(),
            hyper: self.hyper,
            params: match &self.params {
                ModelParams::Lr(p) => serde_json::to_value(p),
                ModelParams::Mlp(p) => serde_json::to_value(p),
                ModelParams::Gbr(m) => serde_json::to_value(m),
            }
            .map_err(|e| Error::model(format!("serializing parameters: {e}")))?,
            scaling: self.scaling,
            meta: self.meta.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc)
            .map_err(|e| Error::model(format!("serializing model: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let malformed = |e: serde_json::Error| Error::model(format!("malformed model document: {e}"));
        let value: serde_json::Value = serde_json::from_str(text).map_err(malformed)?;
        match value.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(MODEL_FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::model(format!(
                    "unsupported model format version {v} (expected {MODEL_FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::model("model document has no format_version")),
        }
        let doc: ModelDocument = serde_json::from_value(value).map_err(malformed)?;
        let bad = |e: serde_json::Error| Error::model(format!("malformed {} parameters: {e}", doc.kind));
        let params = match doc.kind {
            ModelKind::Lr => ModelParams::Lr(serde_json::from_value(doc.params).map_err(bad)?),
            ModelKind::Mlp => ModelParams::Mlp(serde_json::from_value(doc.params).map_err(bad)?),
            ModelKind::Gbr => ModelParams::Gbr(serde_json::from_value(doc.params).map_err(bad)?),
        };
        TrainedModel::from_parts(params, doc.hyper, doc.scaling, doc.meta)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    kind: ModelKind,
    hyper: Hyper,
    params: serde_json::Value,
    scaling: Option<ScalingParams>,
    meta: TrainingMeta,
}

/// Fits the model selected by `hyper`. Deterministic in `(fs, hyper, seed)`;
/// the seed overrides any seed stored in the hyperparameters. Wall time
/// covers preprocessing and training only.
pub fn fit(fs: &FeatureSet, hyper: &Hyper, seed: u64) -> Result<TrainedModel> {
    hyper.validate()?;
    let start = Instant::now();
    let (params, hyper, scaling, loss_curve) = match *hyper {
        Hyper::Lr => (ModelParams::Lr(fit_ols(fs)?), Hyper::Lr, None, Vec::new()),
        Hyper::Mlp(hp) => {
            let (scaled, scaling) = standardize_both(fs)?;
            let (p, curve) = mlp_fit(&scaled, &hp, seed)?;
            let curve = curve.into_iter().map(|l| l * scaling.y_std).collect();
            (ModelParams::Mlp(p), Hyper::Mlp(hp), Some(scaling), curve)
        }
        Hyper::Gbr(mut hp) => {
            hp.seed = seed;
            let (m, curve) = gbr_fit(fs, &hp)?;
            (ModelParams::Gbr(m), Hyper::Gbr(hp), None, curve)
        }
    };
    let fit_wall_time = start.elapsed().as_secs_f64();
    TrainedModel::from_parts(params, hyper, scaling, TrainingMeta {
        seed,
        fit_wall_time,
        loss_curve,
    })
}

/// Predicted call rate (calls/s) for a microservice time in s/call, clamped
/// at zero from below.
pub fn predict(model: &TrainedModel, mt: f64) -> Result<f64> {
    if !(mt > 0.0 && mt.is_finite()) {
        return Err(Error::data(format!(
            "microservice time must be positive and finite, got {mt}"
        )));
    }
    Ok(model.raw_output(mt).max(0.0))
}

pub fn predict_batch(model: &TrainedModel, mts: &[f64]) -> Result<Vec<f64>> {
    mts.iter()
        .enumerate()
        .map(|(i, &mt)| {
            predict(model, mt).map_err(|e| Error::data(format!("element {i}: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lr_model(w: f64, b: f64) -> TrainedModel {
        TrainedModel::from_parts(
            ModelParams::Lr(LinRegParams { w, b }),
            Hyper::Lr,
            None,
            TrainingMeta {
                seed: 0,
                fit_wall_time: 0.0,
                loss_curve: vec![],
            },
        )
        .unwrap()
    }

    #[test]
    fn lr_fit_exact_line() {
        let fs = FeatureSet::new(vec![0.5, 1.0, 2.0], vec![2.0, 3.0, 5.0]).unwrap();
        let m = fit(&fs, &Hyper::Lr, 0).unwrap();
        let ModelParams::Lr(p) = m.params() else { panic!() };
        assert!((p.w - 2.0).abs() < 1e-12 && (p.b - 1.0).abs() < 1e-12);
        assert!(m.meta().loss_curve.is_empty());
        assert!(m.scaling().is_none());
    }

    #[test]
    fn predict_and_clamp() {
        assert_eq!(predict(&lr_model(2.0, 1.0), 0.5).unwrap(), 2.0);
        assert_eq!(predict(&lr_model(2.0, -10.0), 0.5).unwrap(), 0.0);
        assert!(predict(&lr_model(2.0, 1.0), 0.0).is_err());
        assert!(predict(&lr_model(2.0, 1.0), -1.0).is_err());
    }

    #[test]
    fn batch_prediction() {
        let m = lr_model(2.0, 0.0);
        assert!(predict_batch(&m, &[]).unwrap().is_empty());
        assert_eq!(predict_batch(&m, &[0.7, 1.5]).unwrap(), vec![1.4, 3.0]);
        let err = predict_batch(&m, &[0.7, -1.0]).unwrap_err();
        assert!(err.to_string().contains("element 1"), "{err}");
    }

    #[test]
    fn constant_gbr_predicts_init() {
        let m = TrainedModel::from_parts(
            ModelParams::Gbr(GbrModel::constant(4.25)),
            Hyper::default_for(ModelKind::Gbr),
            None,
            TrainingMeta {
                seed: 0,
                fit_wall_time: 0.0,
                loss_curve: vec![],
            },
        )
        .unwrap();
        for mt in [0.01, 1.0, 100.0] {
            assert_eq!(predict(&m, mt).unwrap(), 4.25);
        }
    }

    #[test]
    fn scaling_invariant_enforced() {
        let meta = TrainingMeta {
            seed: 0,
            fit_wall_time: 0.0,
            loss_curve: vec![],
        };
        let s = ScalingParams {
            x_mean: 0.0,
            x_std: 1.0,
            y_mean: 0.0,
            y_std: 1.0,
        };
        assert!(TrainedModel::from_parts(
            ModelParams::Lr(LinRegParams { w: 1.0, b: 0.0 }),
            Hyper::Lr,
            Some(s),
            meta.clone()
        )
        .is_err());
        assert!(TrainedModel::from_parts(
            ModelParams::Lr(LinRegParams { w: 1.0, b: 0.0 }),
            Hyper::default_for(ModelKind::Gbr),
            None,
            meta
        )
        .is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("GBR".parse::<ModelKind>().unwrap(), ModelKind::Gbr);
        assert_eq!("lr".parse::<ModelKind>().unwrap(), ModelKind::Lr);
        assert!("svm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn json_round_trip_all_kinds() {
        let x: Vec<f64> = (1..=400).map(|i| i as f64 / 200.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 + 2.0 * v + (v * 9.0).sin()).collect();
        let fs = FeatureSet::new(x.clone(), y).unwrap();
        for kind in ModelKind::ALL {
            let m = fit(&fs, &Hyper::default_for(kind), 11).unwrap();
            let text = m.to_json().unwrap();
            let back = TrainedModel::from_json(&text).unwrap();
            assert_eq!(back, m, "{kind}");
            assert_eq!(back.to_json().unwrap(), text);
            for xi in &x {
                assert_eq!(predict(&back, *xi).unwrap(), predict(&m, *xi).unwrap());
            }
        }
    }

    #[test]
    fn json_rejects_wrong_version() {
        let text = lr_model(1.0, 1.0).to_json().unwrap().replace(
            "\"format_version\": 1",
            "\"format_version\": 99",
        );
        assert!(matches!(TrainedModel::from_json(&text), Err(Error::Model(_))));
    }

    #[test]
    fn fits_are_deterministic() {
        let x: Vec<f64> = (1..=300).map(|i| i as f64 / 100.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 10.0 * (v * 2.0).cos().abs()).collect();
        let fs = FeatureSet::new(x, y).unwrap();
        for kind in ModelKind::ALL {
            let a = fit(&fs, &Hyper::default_for(kind), 5).unwrap();
            let b = fit(&fs, &Hyper::default_for(kind), 5).unwrap();
            assert_eq!(a.params(), b.params());
            assert_eq!(a.meta().loss_curve, b.meta().loss_curve);
        }
    }
}
