//! One-hidden-layer perceptron regressor trained with Adam on L1 loss.
//!
//! The default activation is the identity, so the network computes
//! `sum_h (x * w1[h] + b1[h]) * w2[h] + b2`, an affine function of `x` with
//! an over-parameterized factorization. ReLU is available for experiments.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::rng;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpHyperParams {
    pub hidden_neurons: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub init_scale: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for MlpHyperParams {
    fn default() -> Self {
        MlpHyperParams {
            hidden_neurons: 2,
            epochs: 2,
            learning_rate: 0.003,
            batch_size: 32,
            init_scale: 0.5,
            activation: Activation::Identity,
        }
    }
}

impl MlpHyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_neurons == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::usage(
                "mlp hidden_neurons, epochs and batch_size must be positive",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::usage(format!(
                "mlp learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::usage(format!(
                "mlp init_scale must be non-negative, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// Input-to-hidden weights.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// Hidden-to-output weights.
    pub w2: Vec<f64>,
    pub b2: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpParams {
    pub fn hidden(&self) -> usize {
        self.w1.len()
    }

    /// Number of scalar parameters, `3H + 1`.
    pub fn len(&self) -> usize {
        3 * self.hidden() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flattened as `[w1.., b1.., w2.., b2]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let h = self.hidden();
        assert_eq!(flat.len(), 3 * h + 1);
        self.w1.copy_from_slice(&flat[..h]);
        self.b1.copy_from_slice(&flat[h..2 * h]);
        self.w2.copy_from_slice(&flat[2 * h..3 * h]);
        self.b2 = flat[3 * h];
    }

    fn zeros_like(&self) -> MlpParams {
        let h = self.hidden();
        MlpParams {
            w1: vec![0.0; h],
            b1: vec![0.0; h],
            w2: vec![0.0; h],
            b2: 0.0,
            activation: self.activation,
        }
    }
}

/// Uniform weights in `±init_scale / sqrt(fan_in)`, zero biases.
pub fn mlp_init(hp: &MlpHyperParams, seed: u64) -> MlpParams {
    let h = hp.hidden_neurons;
    let mut rng = rng::stream(seed, rng::MLP_INIT);
    let mut draw = |bound: f64| {
        if bound > 0.0 {
            rng.random_range(-bound..=bound)
        } else {
            0.0
        }
    };
    let w1 = (0..h).map(|_| draw(hp.init_scale)).collect();
    let out_bound = hp.init_scale / (h as f64).sqrt();
    let w2 = (0..h).map(|_| draw(out_bound)).collect();
    MlpParams {
        w1,
        b1: vec![0.0; h],
        w2,
        b2: 0.0,
        activation: hp.activation,
    }
}

pub fn mlp_forward(p: &MlpParams, x: f64) -> f64 {
    let mut out = p.b2;
    for h in 0..p.hidden() {
        out += p.activation.apply(x * p.w1[h] + p.b1[h]) * p.w2[h];
    }
    out
}

/// Mean L1 loss over the points and its gradient. The subgradient of `|r|`
/// at `r = 0` is taken as 0.
pub fn mlp_loss_and_grad(p: &MlpParams, x: &[f64], y: &[f64]) -> (f64, MlpParams) {
    let mut grad = p.zeros_like();
    let loss = accumulate(p, x.iter().copied().zip(y.iter().copied()), &mut grad);
    (loss, grad)
}

fn accumulate(p: &MlpParams, points: impl Iterator<Item = (f64, f64)>, grad: &mut MlpParams) -> f64 {
    let h_count = p.hidden();
    let mut loss = 0.0;
    let mut n = 0usize;
    for (x, y) in points {
        n += 1;
        let mut out = p.b2;
        for h in 0..h_count {
            out += p.activation.apply(x * p.w1[h] + p.b1[h]) * p.w2[h];
        }
        let r = y - out;
        loss += r.abs();
        // d|y - out| / d out
        let d_out = if r > 0.0 {
            -1.0
        } else if r < 0.0 {
            1.0
        } else {
            0.0
        };
        if d_out == 0.0 {
            continue;
        }
        grad.b2 += d_out;
        for h in 0..h_count {
            let z = x * p.w1[h] + p.b1[h];
            grad.w2[h] += d_out * p.activation.apply(z);
            let d_z = d_out * p.w2[h] * p.activation.derivative(z);
            grad.w1[h] += d_z * x;
            grad.b1[h] += d_z;
        }
    }
    let scale = 1.0 / n.max(1) as f64;
    grad.b2 *= scale;
    for h in 0..h_count {
        grad.w1[h] *= scale;
        grad.b1[h] *= scale;
        grad.w2[h] *= scale;
    }
    loss * scale
}

pub fn mean_l1(p: &MlpParams, x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (b - mlp_forward(p, *a)).abs())
        .sum::<f64>()
        / x.len() as f64
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(lr: f64, len: usize) -> Self {
        Adam {
            lr,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grad[i];
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= self.lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
}

/// Trains on already-standardized features. Returns the fitted parameters and
/// the mean training L1 loss after each epoch (in the units of `fs.y`).
pub fn mlp_fit(fs: &FeatureSet, hp: &MlpHyperParams, seed: u64) -> Result<(MlpParams, Vec<f64>)> {
    mlp_fit_observed(fs, hp, seed, |_, _| {})
}

/// [`mlp_fit`] with a callback invoked after every epoch with the epoch
/// index and the current parameters.
pub fn mlp_fit_observed(
    fs: &FeatureSet,
    hp: &MlpHyperParams,
    seed: u64,
    mut on_epoch: impl FnMut(usize, &MlpParams),
) -> Result<(MlpParams, Vec<f64>)> {
    hp.validate()?;
    if fs.is_empty() {
        return Err(Error::data("cannot train an MLP on an empty feature set"));
    }
    let (x, y) = (fs.x(), fs.y());
    let mut params = mlp_init(hp, seed);
    let mut theta = params.to_flat();
    let mut adam = Adam::new(hp.learning_rate, theta.len());
    let mut shuffle_rng = rng::stream(seed, rng::MLP_SHUFFLE);
    let mut order: Vec<usize> = (0..fs.len()).collect();
    let mut grad = params.zeros_like();
    let mut curve = Vec::with_capacity(hp.epochs);

    for epoch in 0..hp.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(hp.batch_size) {
            grad = grad.zeros_like();
            accumulate(&params, batch.iter().map(|&i| (x[i], y[i])), &mut grad);
            adam.step(&mut theta, &grad.to_flat());
            params.set_flat(&theta);
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::model(format!("MLP diverged in epoch {epoch}")));
        }
        curve.push(mean_l1(&params, x, y));
        on_epoch(epoch, &params);
    }
    Ok((params, curve))
}
