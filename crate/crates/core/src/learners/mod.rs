//! Classifiers: CART trees, random forests with impurity importances, and
//! softmax gradient boosting.

mod gbt;
mod tree;

pub use gbt::{train_gbt, GbtModel, GbtParams};
pub use tree::{gini, CandidateFeatures, Tree, TreeParams};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::determinism::{derive_seed, rng_from_seed};
use crate::error::{Error, Result};
use tree::{Builder, Gini};

/// Anything LIME can treat as a black box.
pub trait Classifier: Sync {
    fn n_features(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 200,
            tree: TreeParams::default(),
            bootstrap: true,
            seed: 42,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::param("n_estimators must be >= 1"));
        }
        self.tree.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelState {
    Tree(Tree),
    Forest(Forest),
    Gbt(GbtModel),
}

/// A fitted classifier. Immutable; prediction is pure.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub state: ModelState,
    pub n_classes: usize,
    pub n_features: usize,
}

/// Per-feature mean decrease in impurity, normalized to sum to 1 unless no
/// split ever happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScores(pub Vec<f64>);

impl ImportanceScores {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub kind: String,
    pub n_estimators: usize,
    pub max_depth: usize,
    pub n_leaves: usize,
    pub n_features: usize,
    pub n_classes: usize,
}

fn check_xy(x: ArrayView2<f64>, y: &[usize], n_classes: usize) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if x.nrows() == 0 {
        return Err(Error::Shape("no training samples".into()));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Shape(format!("label {bad} outside {n_classes} classes")));
    }
    Ok(())
}

fn fit_tree(x: ArrayView2<f64>, y: &[usize], n_classes: usize, params: TreeParams, seed: u64, bootstrap: bool) -> Tree {
    let mut rng = rng_from_seed(seed);
    let n = y.len();
    let samples: Vec<usize> = if bootstrap {
        use rand::Rng;
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let criterion = Gini { labels: y, n_classes };
    Builder::new(x, &criterion, params, &mut rng).build(samples)
}

pub fn train_tree(
    x: ArrayView2<f64>,
    y: &[usize],
    n_classes: usize,
    params: TreeParams,
    seed: u64,
) -> Result<TrainedModel> {
    params.validate()?;
    check_xy(x, y, n_classes)?;
    Ok(TrainedModel {
        state: ModelState::Tree(fit_tree(x, y, n_classes, params, seed, false)),
        n_classes,
        n_features: x.ncols(),
    })
}

/// Trees are trained in parallel; tree `t` uses the stream `tree=t` of
/// `params.seed`, so the result does not depend on the thread count.
pub fn train_forest(x: ArrayView2<f64>, y: &[usize], n_classes: usize, params: &ForestParams) -> Result<TrainedModel> {
    params.validate()?;
    check_xy(x, y, n_classes)?;
    let trees: Vec<Tree> = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let seed = derive_seed(params.seed, &format!("tree={t}"));
            fit_tree(x, y, n_classes, params.tree, seed, params.bootstrap)
        })
        .collect();
    Ok(TrainedModel {
        state: ModelState::Forest(Forest { trees }),
        n_classes,
        n_features: x.ncols(),
    })
}

/// Per tree, impurity decreases are summed per feature; trees are averaged
/// and the result normalized to sum 1.
pub fn feature_importances(model: &TrainedModel) -> Result<ImportanceScores> {
    let ModelState::Forest(forest) = &model.state else {
        return Err(Error::NotAForest(model.kind()));
    };
    let mut total = vec![0.0; model.n_features];
    for tree in &forest.trees {
        for (t, v) in total.iter_mut().zip(&tree.importance) {
            *t += v;
        }
    }
    let n_trees = forest.trees.len() as f64;
    total.iter_mut().for_each(|v| *v /= n_trees);
    let sum: f64 = total.iter().sum();
    if sum > 0.0 {
        total.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(ImportanceScores(total))
}

/// Index of the row maximum; ties go to the lower index.
pub fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in row.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

impl TrainedModel {
    pub fn kind(&self) -> &'static str {
        match self.state {
            ModelState::Tree(_) => "tree",
            ModelState::Forest(_) => "forest",
            ModelState::Gbt(_) => "gbt",
        }
    }

    fn check_features(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.n_features {
            return Err(Error::Shape(format!(
                "model trained on {} features, got {}",
                self.n_features,
                x.ncols()
            )));
        }
        Ok(())
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_features(x)?;
        let k = self.n_classes;
        let mut out = Array2::zeros((x.nrows(), k));
        match &self.state {
            ModelState::Tree(tree) => {
                for (row, mut o) in x.outer_iter().zip(out.outer_iter_mut()) {
                    for (c, v) in tree.leaf_value(row).iter().enumerate() {
                        o[c] = *v;
                    }
                }
            }
            ModelState::Forest(forest) => {
                let n_trees = forest.trees.len() as f64;
                for (row, mut o) in x.outer_iter().zip(out.outer_iter_mut()) {
                    for tree in &forest.trees {
                        o[argmax(tree.leaf_value(row).iter().copied())] += 1.0;
                    }
                    o.mapv_inplace(|v| v / n_trees);
                }
            }
            ModelState::Gbt(gbt) => gbt.predict_proba_into(x, &mut out),
        }
        Ok(out)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let proba = self.predict_proba(x)?;
        Ok(proba.outer_iter().map(|r| argmax(r.iter().copied())).collect())
    }

    pub fn summary(&self) -> ModelSummary {
        let (n_estimators, max_depth, n_leaves) = match &self.state {
            ModelState::Tree(t) => (1, t.depth(), t.n_leaves()),
            ModelState::Forest(f) => (
                f.trees.len(),
                f.trees.iter().map(Tree::depth).max().unwrap_or(0),
                f.trees.iter().map(Tree::n_leaves).sum(),
            ),
            ModelState::Gbt(g) => (g.n_stages(), g.max_depth_reached(), g.n_leaves()),
        };
        ModelSummary {
            kind: self.kind().to_string(),
            n_estimators,
            max_depth,
            n_leaves,
            n_features: self.n_features,
            n_classes: self.n_classes,
        }
    }
}

impl Classifier for TrainedModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        TrainedModel::predict_proba(self, x)
    }
}
