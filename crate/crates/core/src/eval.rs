//! Error metrics and model-comparison reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::model::{predict_batch, ModelKind, TrainedModel};

fn check_pair(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::data(format!(
            "metric length mismatch: {} actual vs {} predicted",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::data("metric over zero points"));
    }
    Ok(())
}

/// Mean absolute error, in the units of the inputs.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    Ok(actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p).abs())
        .sum::<f64>()
        / actual.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mape {
    /// Mean absolute percentage error, in percent.
    pub percent: f64,
    /// Points skipped because their actual value is zero.
    pub excluded: usize,
}

/// MAPE over the points with non-zero actual value; the rest are counted in
/// [`Mape::excluded`].
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<Mape> {
    check_pair(actual, predicted)?;
    let (sum, used) = actual
        .iter()
        .zip(predicted)
        .filter(|(a, _)| **a != 0.0)
        .fold((0.0, 0usize), |(s, n), (a, p)| (s + ((a - p) / a).abs(), n + 1));
    if used == 0 {
        return Err(Error::data("MAPE undefined: every actual value is zero"));
    }
    Ok(Mape {
        percent: 100.0 * sum / used as f64,
        excluded: actual.len() - used,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub kind: ModelKind,
    /// Seed of the run that produced the model, when known.
    pub seed: Option<u64>,
    pub mae: f64,
    pub mape: f64,
    pub fit_time: f64,
    pub n_test: usize,
    pub n_mape_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

/// Scores every model on the same test set.
pub fn evaluate(models: &[TrainedModel], test: &FeatureSet) -> Result<EvalReport> {
    if models.is_empty() {
        return Err(Error::usage("no models to evaluate"));
    }
    let rows = models
        .iter()
        .map(|m| {
            let pred = predict_batch(m, test.x())?;
            let e = mae(test.y(), &pred)?;
            let p = mape(test.y(), &pred)?;
            Ok(EvalRow {
                kind: m.kind(),
                seed: Some(m.meta().seed),
                mae: e,
                mape: p.percent,
                fit_time: m.meta().fit_wall_time,
                n_test: test.len(),
                n_mape_excluded: p.excluded,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport { rows })
}

/// Closed range over a set of runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Range {
        values.fold(
            Range {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            },
            |r, v| Range {
                min: r.min.min(v),
                max: r.max.max(v),
            },
        )
    }

    fn render(&self, decimals: usize) -> String {
        format!("{:.*}-{:.*}", decimals, self.min, decimals, self.max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub kind: ModelKind,
    pub runs: usize,
    pub mae: Range,
    pub mape: Range,
    pub fit_time: Range,
}

impl EvalReport {
    pub fn extend(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
    }

    /// Min–max of every metric per model kind, in kind order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut by_kind: BTreeMap<ModelKind, Vec<&EvalRow>> = BTreeMap::new();
        for r in &self.rows {
            by_kind.entry(r.kind).or_default().push(r);
        }
        by_kind
            .into_iter()
            .map(|(kind, rows)| SummaryRow {
                kind,
                runs: rows.len(),
                mae: Range::of(rows.iter().map(|r| r.mae)),
                mape: Range::of(rows.iter().map(|r| r.mape)),
                fit_time: Range::of(rows.iter().map(|r| r.fit_time)),
            })
            .collect()
    }

    /// One row per run, then one `min-max` summary row per model kind.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "model",
            "seed",
            "mae",
            "mape_percent",
            "fit_time_s",
            "n_test",
            "n_mape_excluded",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.kind.to_string(),
                r.seed.map(|s| s.to_string()).unwrap_or_default(),
                r.mae.to_string(),
                r.mape.to_string(),
                r.fit_time.to_string(),
                r.n_test.to_string(),
                r.n_mape_excluded.to_string(),
            ])?;
        }
        for s in self.summary() {
            w.write_record([
                s.kind.to_string(),
                "min-max".to_string(),
                format!("{}-{}", s.mae.min, s.mae.max),
                format!("{}-{}", s.mape.min, s.mape.max),
                format!("{}-{}", s.fit_time.min, s.fit_time.max),
                String::new(),
                String::new(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv sink>", e))?;
        Ok(())
    }

    /// Aligned text table: model, MAE, MAPE and training-time ranges.
    pub fn to_text_table(&self) -> String {
        let header = ["Prediction model", "MAE", "MAPE [%]", "Training time [s]"];
        let mut rows: Vec<[String; 4]> = vec![header.map(String::from)];
        for s in self.summary() {
            rows.push([
                s.kind.to_string(),
                s.mae.render(2),
                s.mape.render(1),
                s.fit_time.render(3),
            ]);
        }
        let widths: Vec<usize> = (0..4)
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, r) in rows.iter().enumerate() {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                let _ = writeln!(out, "|-{}-|", rule.join("-|-"));
            }
        }
        out
    }
}
