use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::tree::{Builder, CandidateFeatures, Newton, Tree, TreeParams};
use super::{check_xy, ModelState, TrainedModel};
use crate::determinism::{derive_seed, rng_from_seed};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_estimators: 50,
            max_depth: 10,
            learning_rate: 0.01,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::param("gbt n_estimators must be >= 1"));
        }
        if self.max_depth == 0 {
            return Err(Error::param("gbt max_depth must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::param(format!(
                "learning_rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Softmax boosting: one regression tree per class per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    /// Log class priors; `-inf` for classes absent from training.
    pub init: Vec<f64>,
    /// `stages[s][c]` is `None` for absent classes.
    pub stages: Vec<Vec<Option<Tree>>>,
    pub learning_rate: f64,
    /// Training log-loss after the prior and after each stage.
    pub train_loss: Vec<f64>,
}

impl GbtModel {
    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    pub(crate) fn max_depth_reached(&self) -> usize {
        self.trees().map(Tree::depth).max().unwrap_or(0)
    }

    pub(crate) fn n_leaves(&self) -> usize {
        self.trees().map(Tree::n_leaves).sum()
    }

    fn trees(&self) -> impl Iterator<Item = &Tree> {
        self.stages.iter().flatten().flatten()
    }

    fn raw_scores(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let k = self.init.len();
        let mut f = Array2::from_shape_fn((x.nrows(), k), |(_, c)| self.init[c]);
        for stage in &self.stages {
            for (c, tree) in stage.iter().enumerate() {
                let Some(tree) = tree else { continue };
                for (i, row) in x.outer_iter().enumerate() {
                    f[[i, c]] += self.learning_rate * tree.leaf_value(row)[0];
                }
            }
        }
        f
    }

    pub(crate) fn predict_proba_into(&self, x: ArrayView2<f64>, out: &mut Array2<f64>) {
        let scores = self.raw_scores(x);
        for (s, mut o) in scores.outer_iter().zip(out.outer_iter_mut()) {
            softmax_into(s.iter().copied(), o.as_slice_mut().expect("row-major output"));
        }
    }
}

fn softmax_into(scores: impl Iterator<Item = f64> + Clone, out: &mut [f64]) {
    let max = scores.clone().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

fn log_loss(proba: &Array2<f64>, y: &[usize]) -> f64 {
    let n = y.len() as f64;
    -y.iter()
        .enumerate()
        .map(|(i, &c)| proba[[i, c]].max(1e-300).ln())
        .sum::<f64>()
        / n
}

/// Each stage fits, for every class present in training, a squared-error
/// tree to the residual `1[y=c] - p_c` and sets leaf values by one Newton
/// step `(K-1)/K * sum(r) / sum(|r|(1-|r|))`.
pub fn train_gbt(
    x: ArrayView2<f64>,
    y: &[usize],
    n_classes: usize,
    params: &GbtParams,
    seed: u64,
) -> Result<TrainedModel> {
    params.validate()?;
    check_xy(x, y, n_classes)?;
    let n = y.len();
    let k = n_classes;

    let mut counts = vec![0usize; k];
    for &c in y {
        counts[c] += 1;
    }
    let init: Vec<f64> = counts
        .iter()
        .map(|&c| {
            if c == 0 {
                f64::NEG_INFINITY
            } else {
                (c as f64 / n as f64).ln()
            }
        })
        .collect();

    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: 1,
        n_candidate_features: CandidateFeatures::All,
    };
    let scale = (k as f64 - 1.0) / k as f64;
    let mut scores = Array2::from_shape_fn((n, k), |(_, c)| init[c]);
    let mut proba = Array2::zeros((n, k));
    let refresh = |scores: &Array2<f64>, proba: &mut Array2<f64>| {
        for (s, mut o) in scores.outer_iter().zip(proba.outer_iter_mut()) {
            softmax_into(s.iter().copied(), o.as_slice_mut().expect("row-major"));
        }
    };
    refresh(&scores, &mut proba);

    let mut model = GbtModel {
        init,
        stages: Vec::with_capacity(params.n_estimators),
        learning_rate: params.learning_rate,
        train_loss: vec![log_loss(&proba, y)],
    };
    let all: Vec<usize> = (0..n).collect();
    for s in 0..params.n_estimators {
        let mut stage = Vec::with_capacity(k);
        for c in 0..k {
            if counts[c] == 0 {
                stage.push(None);
                continue;
            }
            let residual: Vec<f64> = (0..n).map(|i| f64::from(u8::from(y[i] == c)) - proba[[i, c]]).collect();
            let hessian: Vec<f64> = residual.iter().map(|r| r.abs() * (1.0 - r.abs())).collect();
            let criterion = Newton {
                targets: &residual,
                hessians: &hessian,
                scale,
            };
            let mut rng = rng_from_seed(derive_seed(seed, &format!("gbt/stage={s}/class={c}")));
            let tree = Builder::new(x, &criterion, tree_params, &mut rng).build(all.clone());
            stage.push(Some(tree));
        }
        for (c, tree) in stage.iter().enumerate() {
            if let Some(tree) = tree {
                for (i, row) in x.outer_iter().enumerate() {
                    scores[[i, c]] += params.learning_rate * tree.leaf_value(row)[0];
                }
            }
        }
        refresh(&scores, &mut proba);
        model.train_loss.push(log_loss(&proba, y));
        model.stages.push(stage);
    }

    Ok(TrainedModel {
        state: ModelState::Gbt(model),
        n_classes,
        n_features: x.ncols(),
    })
}
