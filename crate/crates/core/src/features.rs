//! Model-ready `(MT, MCR)` pairs and the correlation diagnostic.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::mean;
use crate::trace::Dataset;

/// Paired microservice times (s/call) and call rates (calls/s).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl FeatureSet {
    /// Validated constructor: equal, non-zero lengths, finite values, `x > 0`, `y >= 0`.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let fs = Self::new_unchecked_domain(x, y)?;
        if let Some(i) = fs.x.iter().position(|v| *v <= 0.0) {
            return Err(Error::data(format!("x[{i}] = {} is not positive", fs.x[i])));
        }
        if let Some(i) = fs.y.iter().position(|v| *v < 0.0) {
            return Err(Error::data(format!("y[{i}] = {} is negative", fs.y[i])));
        }
        Ok(fs)
    }

    /// Like [`FeatureSet::new`] but allows any finite `x`, which standardized
    /// features need.
    pub(crate) fn new_unchecked_domain(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::data(format!(
                "feature length mismatch: |x| = {}, |y| = {}",
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::data("feature set is empty"));
        }
        if let Some(i) = x.iter().zip(&y).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::data(format!("non-finite feature at index {i}")));
        }
        Ok(FeatureSet { x, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Subset by indices, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<FeatureSet> {
        let x = idx.iter().map(|&i| self.x[i]).collect();
        let y = idx.iter().map(|&i| self.y[i]).collect();
        FeatureSet::new_unchecked_domain(x, y)
    }

    /// Writes `mt_s,mcr` rows.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["mt_s", "mcr"])?;
        for (x, y) in self.x.iter().zip(&self.y) {
            w.write_record([x.to_string(), y.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv sink>", e))?;
        Ok(())
    }
}

/// Affine maps used to condition MLP training. `x' = (x - x_mean) / x_std`,
/// and likewise for the target when it is scaled (identity otherwise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub x_mean: f64,
    pub x_std: f64,
    #[serde(default)]
    pub y_mean: f64,
    #[serde(default = "one")]
    pub y_std: f64,
}

fn one() -> f64 {
    1.0
}

impl ScalingParams {
    pub fn scale_x(&self, x: f64) -> f64 {
        (x - self.x_mean) / self.x_std
    }

    pub fn unscale_x(&self, x: f64) -> f64 {
        x * self.x_std + self.x_mean
    }

    pub fn scale_y(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }

    pub fn unscale_y(&self, y: f64) -> f64 {
        y * self.y_std + self.y_mean
    }
}

/// Trace microservice times are in ms/call, model inputs in s/call.
pub fn ms_to_seconds(mt_ms: f64) -> f64 {
    mt_ms / 1000.0
}

/// Converts each record's `mt` from ms/call to s/call and pairs it with its
/// call rate, preserving order.
pub fn extract(ds: &Dataset) -> Result<FeatureSet> {
    if ds.is_empty() {
        return Err(Error::data("cannot extract features from an empty dataset"));
    }
    let x = ds.records().iter().map(|r| ms_to_seconds(r.mt)).collect();
    let y = ds.records().iter().map(|r| r.mcr).collect();
    FeatureSet::new(x, y)
}

fn mean_and_population_std(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

/// Standardizes `x` to mean 0 and population standard deviation 1; `y` is
/// untouched.
pub fn standardize(fs: &FeatureSet) -> Result<(FeatureSet, ScalingParams)> {
    if fs.len() < 2 {
        return Err(Error::data("standardization needs at least 2 points"));
    }
    let (x_mean, x_std) = mean_and_population_std(&fs.x);
    if x_std.is_nan() || x_std <= 0.0 {
        return Err(Error::data("constant microservice time; feature is degenerate"));
    }
    let params = ScalingParams {
        x_mean,
        x_std,
        y_mean: 0.0,
        y_std: 1.0,
    };
    let x = fs.x.iter().map(|&v| params.scale_x(v)).collect();
    Ok((FeatureSet::new_unchecked_domain(x, fs.y.clone())?, params))
}

/// Standardizes both coordinates. A constant target keeps unit scale.
pub(crate) fn standardize_both(fs: &FeatureSet) -> Result<(FeatureSet, ScalingParams)> {
    let (xs, mut params) = standardize(fs)?;
    let (y_mean, y_std) = mean_and_population_std(&fs.y);
    params.y_mean = y_mean;
    params.y_std = if y_std > 0.0 { y_std } else { 1.0 };
    let y = fs.y.iter().map(|&v| params.scale_y(v)).collect();
    Ok((FeatureSet::new_unchecked_domain(xs.x, y)?, params))
}

/// Sample Pearson correlation of `x` and `y` (squared deviations under each
/// root).
pub fn pearson(fs: &FeatureSet) -> Result<f64> {
    pearson_slices(&fs.x, &fs.y)
}

pub(crate) fn pearson_slices(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(Error::data("pearson needs at least 2 paired points"));
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::data("pearson undefined: x is constant"));
    }
    if syy == 0.0 {
        return Err(Error::data("pearson undefined: y is constant"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Provenance, TraceRecord};
    use proptest::prelude::*;

    fn three_services() -> Dataset {
        let rows = [(700.0, 2.0), (1500.0, 2.0), (2000.0, 3.0)];
        let recs = rows
            .iter()
            .enumerate()
            .map(|(i, &(mt, mcr))| TraceRecord {
                timestamp: 0,
                microservice_id: format!("m{i}"),
                container_id: format!("c{i}"),
                mt,
                mcr,
            })
            .collect();
        Dataset::new(recs, Provenance::Synthetic).unwrap()
    }

    #[test]
    fn extract_converts_ms_to_s() {
        let fs = extract(&three_services()).unwrap();
        assert_eq!(fs.x(), &[0.7, 1.5, 2.0]);
        assert_eq!(fs.y(), &[2.0, 2.0, 3.0]);
    }

    #[test]
    fn extract_zero_rate() {
        let d = Dataset::new(
            vec![TraceRecord {
                timestamp: 0,
                microservice_id: "m".into(),
                container_id: "c".into(),
                mt: 1000.0,
                mcr: 0.0,
            }],
            Provenance::Synthetic,
        )
        .unwrap();
        let fs = extract(&d).unwrap();
        assert_eq!((fs.x(), fs.y()), (&[1.0][..], &[0.0][..]));
    }

    #[test]
    fn extract_empty_is_error() {
        let d = Dataset::new(vec![], Provenance::Synthetic).unwrap();
        assert!(extract(&d).is_err());
    }

    #[test]
    fn standardize_two_points() {
        let fs = FeatureSet::new(vec![1.0, 3.0], vec![0.0, 1.0]).unwrap();
        let (s, p) = standardize(&fs).unwrap();
        assert_eq!(s.x(), &[-1.0, 1.0]);
        assert_eq!((p.x_mean, p.x_std), (2.0, 1.0));
        assert_eq!(s.y(), fs.y());
    }

    #[test]
    fn standardize_three_service_stats() {
        let fs = extract(&three_services()).unwrap();
        let (s, p) = standardize(&fs).unwrap();
        assert!((p.x_mean - 1.4).abs() < 1e-12);
        // sqrt(((0.7)^2 + (0.1)^2 + (0.6)^2) / 3) = sqrt(0.86 / 3)
        assert!((p.x_std - (0.86f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((p.x_std - 0.535).abs() < 1e-3);
        for (orig, scaled) in fs.x().iter().zip(s.x()) {
            assert!((p.unscale_x(*scaled) - orig).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_constant_is_error() {
        let fs = FeatureSet::new(vec![2.0, 2.0, 2.0], vec![1.0, 2.0, 3.0]).unwrap();
        assert!(standardize(&fs).is_err());
    }

    #[test]
    fn pearson_exact_relations() {
        let x = vec![0.5, 1.0, 2.5, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let fs = FeatureSet::new(x.clone(), y).unwrap();
        assert!((pearson(&fs).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_slices(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_constant_is_error() {
        assert!(pearson_slices(&[1.0, 2.0], &[3.0, 3.0]).is_err());
        assert!(pearson_slices(&[1.0, 1.0], &[3.0, 4.0]).is_err());
    }

    proptest! {
        #[test]
        fn pearson_affine_invariance(
            pts in prop::collection::vec((0.01f64..100.0, 0.0f64..100.0), 3..40),
            a in 0.1f64..10.0,
            b in -50.0f64..50.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let Ok(r) = pearson_slices(&x, &y) else { return Ok(()); };
            prop_assume!(r.abs() < 0.999_999);
            let x2: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let y2: Vec<f64> = y.iter().map(|v| a * v - b).collect();
            prop_assert!((pearson_slices(&x2, &y).unwrap() - r).abs() < 1e-9);
            prop_assert!((pearson_slices(&x, &y2).unwrap() - r).abs() < 1e-9);
            let neg: Vec<f64> = x.iter().map(|v| -a * v).collect();
            prop_assert!((pearson_slices(&neg, &y).unwrap() + r).abs() < 1e-9);
            prop_assert!((pearson_slices(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
