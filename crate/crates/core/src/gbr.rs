//! Gradient-boosted regression trees under absolute-error (LAD) loss.
//!
//! Each stage fits a tree to the signs of the current residuals using a
//! squared-error split criterion, then replaces every leaf value by the
//! median raw residual of the samples that reached it. The ensemble is
//! `F(x) = F_0 + learning_rate * sum_e h_e(x)` with `F_0 = median(y)`.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::rng;
use crate::stats::{median, median_in_place};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbrHyperParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for GbrHyperParams {
    fn default() -> Self {
        GbrHyperParams {
            n_estimators: 15,
            learning_rate: 0.4,
            subsample: 0.8,
            max_depth: 8,
            min_samples_split: 200,
            min_samples_leaf: 40,
            seed: 0,
        }
    }
}

impl GbrHyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::usage("gbr n_estimators must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::usage(format!(
                "gbr learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::usage(format!(
                "gbr subsample must be in (0, 1], got {}",
                self.subsample
            )));
        }
        self.limits().validate()
    }

    pub fn limits(&self) -> TreeLimits {
        TreeLimits {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
        }
    }
}

/// Growth limits for a single tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeLimits {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl TreeLimits {
    /// No effective limits beyond `max_depth`.
    pub fn unconstrained(max_depth: usize) -> Self {
        TreeLimits {
            max_depth,
            min_samples_split: 1,
            min_samples_leaf: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.min_samples_split == 0 || self.min_samples_leaf == 0 {
            return Err(Error::usage(
                "tree max_depth, min_samples_split and min_samples_leaf must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        /// Samples with `x <= threshold` go left.
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
    },
}

impl TreeNode {
    fn eval(&self, x: f64) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    threshold,
                    left,
                    right,
                } => node = if x <= *threshold { left } else { right },
            }
        }
    }

    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn collect_thresholds(&self, out: &mut Vec<f64>) {
        if let TreeNode::Split {
            threshold,
            left,
            right,
        } = self
        {
            out.push(*threshold);
            left.collect_thresholds(out);
            right.collect_thresholds(out);
        }
    }

    fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegressionTree {
    pub root: TreeNode,
}

impl RegressionTree {
    pub fn eval(&self, x: f64) -> f64 {
        self.root.eval(x)
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    /// Split thresholds in pre-order.
    pub fn thresholds(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.root.collect_thresholds(&mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrModel {
    /// `F_0`, calls/s.
    pub init_value: f64,
    pub trees: Vec<RegressionTree>,
    pub learning_rate: f64,
}

impl GbrModel {
    /// An ensemble with no trees.
    pub fn constant(value: f64) -> Self {
        GbrModel {
            init_value: value,
            trees: Vec::new(),
            learning_rate: 1.0,
        }
    }

    /// MAE of the ensemble truncated after each stage.
    pub fn staged_mae(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut pred = vec![self.init_value; x.len()];
        self.trees
            .iter()
            .map(|tree| {
                for (p, xi) in pred.iter_mut().zip(x) {
                    *p += self.learning_rate * tree.eval(*xi);
                }
                mae(y, &pred)
            })
            .collect()
    }
}

fn mae(y: &[f64], pred: &[f64]) -> f64 {
    y.iter().zip(pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64
}

/// Grows a tree on `targets` with squared-error splits and sets each leaf to
/// the median of `leaf_targets` over its samples. Candidate thresholds are
/// midpoints between adjacent distinct `x`; among equally good splits the
/// smallest threshold wins.
pub fn tree_fit(
    x: &[f64],
    targets: &[f64],
    leaf_targets: &[f64],
    limits: &TreeLimits,
) -> Result<RegressionTree> {
    if x.is_empty() {
        return Err(Error::data("cannot fit a tree on zero samples"));
    }
    if x.len() != targets.len() || x.len() != leaf_targets.len() {
        return Err(Error::data("tree inputs must have equal lengths"));
    }
    limits.validate()?;
    let order = argsort(x);
    let builder = TreeBuilder {
        x,
        targets,
        leaf_targets,
        limits,
    };
    Ok(RegressionTree {
        root: builder.build(&order, 0),
    })
}

fn argsort(x: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    order
}

struct TreeBuilder<'a> {
    x: &'a [f64],
    targets: &'a [f64],
    leaf_targets: &'a [f64],
    limits: &'a TreeLimits,
}

impl TreeBuilder<'_> {
    /// `idx` holds the node's samples sorted by `x`, so every candidate split
    /// is a prefix/suffix cut of it.
    fn build(&self, idx: &[usize], depth: usize) -> TreeNode {
        match self.best_split(idx, depth) {
            Some(cut) => {
                let (a, b) = (self.x[idx[cut - 1]], self.x[idx[cut]]);
                let mid = 0.5 * (a + b);
                let threshold = if mid < b { mid } else { a };
                TreeNode::Split {
                    threshold,
                    left: Box::new(self.build(&idx[..cut], depth + 1)),
                    right: Box::new(self.build(&idx[cut..], depth + 1)),
                }
            }
            None => {
                let mut vals: Vec<f64> = idx.iter().map(|&i| self.leaf_targets[i]).collect();
                TreeNode::Leaf {
                    value: median_in_place(&mut vals),
                }
            }
        }
    }

    /// Size of the left child of the best split, if any split reduces the
    /// squared error.
    ///
    /// With targets centered on the node mean and `c_k` the sum of the first
    /// `k`, the reduction in squared error from cutting after `k` samples is
    /// `n * c_k^2 / (k * (n - k))`.
    fn best_split(&self, idx: &[usize], depth: usize) -> Option<usize> {
        let n = idx.len();
        let lim = self.limits;
        if depth >= lim.max_depth || n < lim.min_samples_split || n < 2 * lim.min_samples_leaf {
            return None;
        }
        let node_mean = idx.iter().map(|&i| self.targets[i]).sum::<f64>() / n as f64;
        let spread = idx
            .iter()
            .map(|&i| (self.targets[i] - node_mean).powi(2))
            .sum::<f64>();
        let tol = 1e-12 * spread.max(f64::MIN_POSITIVE);
        let nf = n as f64;

        let mut best: Option<(usize, f64)> = None;
        let mut prefix = 0.0;
        for k in 1..n {
            prefix += self.targets[idx[k - 1]] - node_mean;
            if k < lim.min_samples_leaf || n - k < lim.min_samples_leaf {
                continue;
            }
            if self.x[idx[k - 1]] >= self.x[idx[k]] {
                continue;
            }
            let kf = k as f64;
            let gain = nf * prefix * prefix / (kf * (nf - kf));
            if gain <= tol {
                continue;
            }
            match best {
                Some((_, g)) if gain <= g + tol => {}
                _ => best = Some((k, gain)),
            }
        }
        best.map(|(k, _)| k)
    }
}

/// Fits the LAD boosting ensemble. The returned curve holds the full
/// training-set MAE after each of the `n_estimators` stages.
pub fn gbr_fit(fs: &FeatureSet, hp: &GbrHyperParams) -> Result<(GbrModel, Vec<f64>)> {
    hp.validate()?;
    if fs.is_empty() {
        return Err(Error::data("cannot fit GBR on an empty feature set"));
    }
    let (x, y) = (fs.x(), fs.y());
    let n = x.len();
    let limits = hp.limits();
    let init_value = median(y);
    let mut pred = vec![init_value; n];
    let order = argsort(x);
    let sample_size = ((hp.subsample * n as f64).ceil() as usize).clamp(1, n);

    let mut signs = vec![0.0; n];
    let mut residuals = vec![0.0; n];
    let mut in_sample = vec![true; n];
    let mut trees = Vec::with_capacity(hp.n_estimators);
    let mut curve = Vec::with_capacity(hp.n_estimators);

    for stage in 0..hp.n_estimators {
        for i in 0..n {
            let r = y[i] - pred[i];
            residuals[i] = r;
            signs[i] = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
        let stage_order: Vec<usize> = if sample_size < n {
            let mut stream = rng::stream(rng::mix(hp.seed, stage as u64), rng::GBR_SUBSAMPLE);
            in_sample.fill(false);
            for i in index::sample(&mut stream, n, sample_size) {
                in_sample[i] = true;
            }
            order.iter().copied().filter(|&i| in_sample[i]).collect()
        } else {
            order.clone()
        };
        let builder = TreeBuilder {
            x,
            targets: &signs,
            leaf_targets: &residuals,
            limits: &limits,
        };
        let tree = RegressionTree {
            root: builder.build(&stage_order, 0),
        };
        for (p, xi) in pred.iter_mut().zip(x) {
            *p += hp.learning_rate * tree.eval(*xi);
        }
        curve.push(mae(y, &pred));
        trees.push(tree);
    }

    Ok((
        GbrModel {
            init_value,
            trees,
            learning_rate: hp.learning_rate,
        },
        curve,
    ))
}

pub fn gbr_predict(m: &GbrModel, mt: f64) -> f64 {
    m.init_value + m.learning_rate * m.trees.iter().map(|t| t.eval(mt)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fs(x: &[f64], y: &[f64]) -> FeatureSet {
        FeatureSet::new(x.to_vec(), y.to_vec()).unwrap()
    }

    fn leaf(value: f64) -> TreeNode {
        TreeNode::Leaf { value }
    }

    #[test]
    fn equal_targets_give_single_leaf() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let t = [0.5; 4];
        let tree = tree_fit(&x, &t, &t, &TreeLimits::unconstrained(10)).unwrap();
        assert_eq!(tree.root, leaf(0.5));
    }

    #[test]
    fn step_splits_at_midpoint() {
        // Candidate cuts after 1, 2, 3 samples: SSE 66.7, 0, 66.7; the
        // middle one is the unique minimizer.
        let x = [1.0, 2.0, 3.0, 4.0];
        let t = [0.0, 0.0, 10.0, 10.0];
        let lt = [1.0, 3.0, 8.0, 12.0];
        let tree = tree_fit(&x, &t, &lt, &TreeLimits::unconstrained(1)).unwrap();
        assert_eq!(tree.root, TreeNode::Split {
            threshold: 2.5,
            left: Box::new(leaf(2.0)),
            right: Box::new(leaf(10.0)),
        });
    }

    #[test]
    fn equal_gain_prefers_smallest_threshold() {
        // Cutting after 1 or after 3 gives the same reduction.
        let x = [1.0, 2.0, 3.0, 4.0];
        let t = [1.0, 0.0, 0.0, 1.0];
        let tree = tree_fit(&x, &t, &t, &TreeLimits::unconstrained(1)).unwrap();
        assert_eq!(tree.thresholds(), vec![1.5]);
    }

    #[test]
    fn duplicate_x_never_separated() {
        let x = [1.0, 1.0, 1.0, 2.0];
        let t = [0.0, 5.0, 0.0, 5.0];
        let tree = tree_fit(&x, &t, &t, &TreeLimits::unconstrained(5)).unwrap();
        assert_eq!(tree.thresholds(), vec![1.5]);
    }

    #[test]
    fn tree_rejects_empty_and_mismatched() {
        let lim = TreeLimits::unconstrained(3);
        assert!(tree_fit(&[], &[], &[], &lim).is_err());
        assert!(tree_fit(&[1.0], &[1.0, 2.0], &[1.0], &lim).is_err());
    }

    #[test]
    fn min_samples_constraints() {
        let x: Vec<f64> = (0..100).map(f64::from).collect();
        let t: Vec<f64> = x.iter().map(|v| (v / 7.0).sin()).collect();
        let lim = TreeLimits {
            max_depth: 6,
            min_samples_split: 30,
            min_samples_leaf: 12,
        };
        let tree = tree_fit(&x, &t, &t, &lim).unwrap();
        assert!(tree.depth() <= 6);
        // Every leaf region holds at least 12 samples.
        let mut bounds = tree.thresholds();
        bounds.sort_by(f64::total_cmp);
        let mut edges = vec![f64::NEG_INFINITY];
        edges.extend(bounds);
        edges.push(f64::INFINITY);
        for w in edges.windows(2) {
            let count = x.iter().filter(|v| **v > w[0] && **v <= w[1]).count();
            assert!(count >= 12, "leaf region {w:?} has {count}");
        }
    }

    #[test]
    fn constant_target_model() {
        let f = fs(&[0.1, 0.2, 0.3, 0.4, 0.5], &[7.0; 5]);
        let hp = GbrHyperParams {
            n_estimators: 4,
            min_samples_split: 2,
            min_samples_leaf: 1,
            ..Default::default()
        };
        let (m, curve) = gbr_fit(&f, &hp).unwrap();
        assert_eq!(m.init_value, 7.0);
        assert!(m.trees.iter().all(|t| t.root == leaf(0.0)));
        assert_eq!(curve, vec![0.0; 4]);
    }

    #[test]
    fn empty_model_predicts_init() {
        let m = GbrModel::constant(3.5);
        assert_eq!(gbr_predict(&m, 0.2), 3.5);
        let m = GbrModel {
            init_value: 1.0,
            trees: vec![RegressionTree { root: leaf(2.5) }],
            learning_rate: 0.4,
        };
        assert!((gbr_predict(&m, 9.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn alternating_signs_isolate_every_point() {
        // Residual signs around the median alternate, so with lr = 1 one
        // unconstrained stage puts each point in its own leaf. The greedy
        // search peels one point per level here, hence the generous depth.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let y = [10.0, 1.0, 12.0, 2.0, 9.0, 0.5, 11.0, 3.0];
        let hp = GbrHyperParams {
            n_estimators: 1,
            learning_rate: 1.0,
            subsample: 1.0,
            max_depth: 10,
            min_samples_split: 1,
            min_samples_leaf: 1,
            seed: 0,
        };
        let (m, curve) = gbr_fit(&fs(&x, &y), &hp).unwrap();
        assert_eq!(m.trees[0].leaf_count(), 8);
        assert!(curve[0].abs() < 1e-12);
    }

    #[test]
    fn piecewise_constant_between_thresholds() {
        let x: Vec<f64> = (1..=300).map(|i| i as f64 / 100.0).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 3.0).sin().abs() * 10.0).collect();
        let hp = GbrHyperParams {
            min_samples_split: 10,
            min_samples_leaf: 4,
            ..Default::default()
        };
        let (m, _) = gbr_fit(&fs(&x, &y), &hp).unwrap();
        let mut cuts: Vec<f64> = m.trees.iter().flat_map(|t| t.thresholds()).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        for w in x.windows(2) {
            let (a, b) = (w[0], w[1]);
            if cuts.iter().any(|c| *c >= a && *c < b) {
                continue;
            }
            assert_eq!(gbr_predict(&m, a), gbr_predict(&m, 0.5 * (a + b)));
        }
    }

    #[test]
    fn default_hyperparameters_bound_depth_and_count() {
        let x: Vec<f64> = (0..5000).map(|i| 0.001 + i as f64 * 1e-3).collect();
        let y: Vec<f64> = x.iter().map(|v| 20.0 + 10.0 * (v * 2.0).sin()).collect();
        let (m, curve) = gbr_fit(&fs(&x, &y), &GbrHyperParams::default()).unwrap();
        assert_eq!(m.trees.len(), 15);
        assert_eq!(curve.len(), 15);
        assert!(m.trees.iter().all(|t| t.depth() <= 8));
    }

    #[test]
    fn tree_json_shape() {
        let tree = RegressionTree {
            root: TreeNode::Split {
                threshold: 0.5,
                left: Box::new(leaf(1.0)),
                right: Box::new(leaf(2.0)),
            },
        };
        let s = serde_json::to_string(&tree).unwrap();
        assert_eq!(
            s,
            r#"{"threshold":0.5,"left":{"value":1.0},"right":{"value":2.0}}"#
        );
        assert_eq!(serde_json::from_str::<RegressionTree>(&s).unwrap(), tree);
    }

    proptest! {
        #[test]
        // Only with the full sample: a midpoint between two sampled neighbours
        // can move relative to an unsampled point under a nonlinear transform.
        fn monotone_x_transform_keeps_predictions(
            ys in prop::collection::vec(0.0f64..50.0, 8..60),
        ) {
            let x: Vec<f64> = (0..ys.len()).map(|i| 0.05 * (i as f64 + 1.0)).collect();
            let tx: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0 * v).collect();
            let hp = GbrHyperParams {
                n_estimators: 3,
                min_samples_split: 4,
                min_samples_leaf: 2,
                subsample: 1.0,
                ..Default::default()
            };
            let (a, _) = gbr_fit(&fs(&x, &ys), &hp).unwrap();
            let (b, _) = gbr_fit(&fs(&tx, &ys), &hp).unwrap();
            for (xi, ti) in x.iter().zip(&tx) {
                prop_assert_eq!(gbr_predict(&a, *xi), gbr_predict(&b, *ti));
            }
        }

        #[test]
        fn full_sample_training_mae_never_increases(
            ys in prop::collection::vec(0.0f64..100.0, 5..80),
            lr in 0.05f64..=1.0,
        ) {
            let x: Vec<f64> = (0..ys.len()).map(|i| 0.01 * (i as f64 + 1.0)).collect();
            let hp = GbrHyperParams {
                n_estimators: 6,
                learning_rate: lr,
                subsample: 1.0,
                max_depth: 3,
                min_samples_split: 2,
                min_samples_leaf: 1,
                seed: 0,
            };
            let f = fs(&x, &ys);
            let (_, curve) = gbr_fit(&f, &hp).unwrap();
            let start = mae(&ys, &vec![median(&ys); ys.len()]);
            prop_assert!(curve[0] <= start + 1e-9);
            for w in curve.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9, "{:?}", curve);
            }
        }
    }
}
