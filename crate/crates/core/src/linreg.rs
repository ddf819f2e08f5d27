//! Closed-form ordinary least squares for `MCR' = MT * w + b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinRegParams {
    /// Slope, calls/s per s/call.
    pub w: f64,
    /// Intercept, calls/s.
    pub b: f64,
}

/// Two-pass OLS: means first, then centered cross products, so large traces
/// with a big common offset do not cancel catastrophically.
pub fn fit_ols(fs: &FeatureSet) -> Result<LinRegParams> {
    let (x, y) = (fs.x(), fs.y());
    if x.len() < 2 {
        return Err(Error::data("OLS needs at least 2 points"));
    }
    let n = x.len() as f64;
    let x_mean = x.iter().sum::<f64>() / n;
    let y_mean = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - x_mean;
        sxx += dx * dx;
        sxy += dx * (b - y_mean);
    }
    if sxx == 0.0 {
        return Err(Error::data(
            "OLS is singular: microservice time is constant across the feature set",
        ));
    }
    let w = sxy / sxx;
    let b = y_mean - w * x_mean;
    if !(w.is_finite() && b.is_finite()) {
        return Err(Error::model("OLS produced non-finite coefficients"));
    }
    Ok(LinRegParams { w, b })
}

/// Unclamped line evaluation.
pub fn lr_predict(p: &LinRegParams, mt: f64) -> f64 {
    mt * p.w + p.b
}
