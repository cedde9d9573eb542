//! Boruta filter, LIME ranking and top-k sweep, end to end.
//!
//! Every stage is a public function so the CLI can run them separately and
//! chain them through files; [`run_bolimes`] composes the same calls.

use std::time::Instant;

use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boruta::{boruta_run, BorutaParams, BorutaResult};
use crate::data::{stratified_kfold_indices, stratified_split_indices, Dataset, SplitIndices, Standardizer};
use crate::determinism::derive_seed;
use crate::error::{Error, Result};
use crate::evaluation::{confusion, pool, weighted_metrics, MetricsReport};
use crate::learners::{train_forest, train_gbt, ForestParams, GbtParams, TrainedModel, TreeParams};
use crate::lime::{explain_all, global_ranking, LimeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvalClassifier {
    Forest(ForestParams),
    Gbt(GbtParams),
}

impl EvalClassifier {
    /// Short method tag used in result tables.
    pub fn method(&self) -> &'static str {
        match self {
            EvalClassifier::Forest(_) => "RF",
            EvalClassifier::Gbt(_) => "GB",
        }
    }

    pub fn train(&self, ds: &Dataset, seed: u64) -> Result<TrainedModel> {
        match self {
            EvalClassifier::Forest(p) => {
                let params = ForestParams { seed, ..*p };
                train_forest(ds.matrix.view(), &ds.labels, ds.n_classes(), &params)
            }
            EvalClassifier::Gbt(p) => train_gbt(ds.matrix.view(), &ds.labels, ds.n_classes(), p, seed),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            EvalClassifier::Forest(p) => p.validate(),
            EvalClassifier::Gbt(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Protocol {
    Holdout { test_fraction: f64 },
    KFold { folds: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub boruta: BorutaParams,
    pub lime: LimeParams,
    pub eval_classifier: EvalClassifier,
    pub k_min: usize,
    pub k_step: usize,
    pub protocol: Protocol,
    /// Run Boruta on the training rows only instead of the whole dataset.
    pub selection_on_train_only: bool,
    /// Z-score features (training statistics) before the tree-based stages.
    pub standardize: bool,
}

impl PipelineConfig {
    /// Defaults with every stage seeded from `seed`.
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            boruta: BorutaParams {
                seed,
                ..Default::default()
            },
            lime: LimeParams {
                seed,
                ..Default::default()
            },
            eval_classifier: EvalClassifier::Forest(ForestParams {
                n_estimators: 200,
                tree: TreeParams::default(),
                bootstrap: true,
                seed,
            }),
            k_min: 10,
            k_step: 1,
            protocol: Protocol::Holdout { test_fraction: 0.2 },
            selection_on_train_only: false,
            standardize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.boruta.validate()?;
        self.lime.validate()?;
        self.eval_classifier.validate()?;
        if self.k_min == 0 || self.k_step == 0 {
            return Err(Error::param("k_min and k_step must be >= 1"));
        }
        match self.protocol {
            Protocol::Holdout { test_fraction } if !(test_fraction > 0.0 && test_fraction < 0.5) => Err(Error::param(
                format!("test fraction must lie in (0, 0.5), got {test_fraction}"),
            )),
            Protocol::KFold { folds } if folds < 2 => Err(Error::param("need at least 2 folds")),
            _ => Ok(()),
        }
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, "split")
    }

    /// Seed of every classifier trained in the sweep, and of `f_opt`.
    pub fn eval_seed(&self) -> u64 {
        derive_seed(self.seed, "sweep/classifier")
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::new(42)
    }
}

/// Holdout gives one split; k-fold gives one per fold.
pub fn partition(ds: &Dataset, config: &PipelineConfig) -> Result<Vec<SplitIndices>> {
    match config.protocol {
        Protocol::Holdout { test_fraction } => Ok(vec![stratified_split_indices(
            &ds.labels,
            ds.n_classes(),
            test_fraction,
            config.split_seed(),
        )?]),
        Protocol::KFold { folds } => stratified_kfold_indices(&ds.labels, ds.n_classes(), folds, config.split_seed()),
    }
}

/// Rows the selection stages may learn from: the holdout training part, or
/// every row under cross-validation.
pub fn training_rows(ds: &Dataset, parts: &[SplitIndices]) -> Vec<usize> {
    match parts {
        [single] => single.train.clone(),
        _ => (0..ds.n_samples()).collect(),
    }
}

/// Applies the `standardize` option; statistics come from the training rows.
pub fn prepare(ds: &Dataset, config: &PipelineConfig, parts: &[SplitIndices]) -> Result<Dataset> {
    if !config.standardize {
        return Ok(ds.clone());
    }
    let rows = training_rows(ds, parts);
    let st = Standardizer::fit(ds.matrix.select(Axis(0), &rows).view());
    let mut out = ds.clone();
    out.matrix = st.transform(ds.matrix.view())?;
    Ok(out)
}

/// Boruta on the whole dataset, or on the training rows when configured.
pub fn select_relevant(ds: &Dataset, config: &PipelineConfig, parts: &[SplitIndices]) -> Result<BorutaResult> {
    if config.selection_on_train_only {
        boruta_run(&ds.select_rows(&training_rows(ds, parts)), &config.boruta)
    } else {
        boruta_run(ds, &config.boruta)
    }
}

/// Relevant features in descending order of aggregated local importance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    /// Original feature indices, best first.
    pub features: Vec<usize>,
    /// Score of `features[i]`.
    pub scores: Vec<f64>,
}

impl FeatureRanking {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Fits the black box (a forest with Boruta's settings) on the training rows
/// restricted to `relevant`, explains every training row and ranks.
pub fn rank_features(
    ds: &Dataset,
    config: &PipelineConfig,
    parts: &[SplitIndices],
    relevant: &[usize],
) -> Result<FeatureRanking> {
    if relevant.is_empty() {
        return Err(Error::param("cannot rank an empty feature set"));
    }
    let train = ds.select_rows(&training_rows(ds, parts)).select_features(relevant);
    let forest = config.boruta.forest("lime/black-box");
    let black_box = train_forest(train.matrix.view(), &train.labels, train.n_classes(), &forest)?;
    let explanations = explain_all(&black_box, train.matrix.view(), &config.lime)?;
    let ranking = global_ranking(&explanations, config.lime.aggregation)?;
    Ok(FeatureRanking {
        features: ranking.order.iter().map(|&j| relevant[j]).collect(),
        scores: ranking.order.iter().map(|&j| ranking.scores[j]).collect(),
    })
}

/// `min(k_min, n)`, then every `k_step`, always ending at `n`.
pub fn k_range(n_ranked: usize, k_min: usize, k_step: usize) -> Vec<usize> {
    if n_ranked == 0 {
        return Vec::new();
    }
    let start = k_min.min(n_ranked);
    let mut ks: Vec<usize> = (start..=n_ranked).step_by(k_step.max(1)).collect();
    if ks.last() != Some(&n_ranked) {
        ks.push(n_ranked);
    }
    ks
}

/// Trains on the training rows and scores on the held-out rows of every
/// part using only `features`. Confusions are pooled across folds.
pub fn evaluate_subset(
    ds: &Dataset,
    parts: &[SplitIndices],
    features: &[usize],
    classifier: &EvalClassifier,
    seed: u64,
) -> Result<MetricsReport> {
    let sub = ds.select_features(features);
    let confusions = parts
        .iter()
        .map(|part| {
            let model = classifier.train(&sub.select_rows(&part.train), seed)?;
            let test = sub.select_rows(&part.test);
            let pred = model.predict(test.matrix.view())?;
            confusion(&test.labels, &pred, ds.n_classes())
        })
        .collect::<Result<Vec<_>>>()?;
    weighted_metrics(&pool(&confusions)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub metrics: MetricsReport,
}

/// One report per `k`, all on the same partition; only the feature columns
/// change between points.
pub fn sweep_curve(
    ds: &Dataset,
    parts: &[SplitIndices],
    ranking: &[usize],
    classifier: &EvalClassifier,
    ks: &[usize],
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    if ks.is_empty() {
        return Err(Error::param("empty k range"));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > ranking.len()) {
        return Err(Error::param(format!(
            "k = {k} outside 1..={} ranked features",
            ranking.len()
        )));
    }
    ks.par_iter()
        .map(|&k| {
            let metrics = evaluate_subset(ds, parts, &ranking[..k], classifier, seed)?;
            Ok(CurvePoint { k, metrics })
        })
        .collect()
}

/// Arg-max accuracy with ties going to the smaller `k` (a strict `>` scan).
pub fn best_point(curve: &[CurvePoint]) -> Option<&CurvePoint> {
    let mut best: Option<&CurvePoint> = None;
    for p in curve {
        let better = match best {
            None => true,
            Some(b) => {
                p.metrics.accuracy > b.metrics.accuracy || (p.metrics.accuracy == b.metrics.accuracy && p.k < b.k)
            }
        };
        if better {
            best = Some(p);
        }
    }
    best
}

/// Wall-clock seconds per stage. Not part of the deterministic report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub boruta_s: f64,
    pub lime_s: f64,
    pub sweep_s: f64,
    /// Training time of the final classifier on the selected features.
    pub train_s: f64,
}

impl Timing {
    pub fn selection_s(&self) -> f64 {
        self.boruta_s + self.lime_s
    }
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    /// Boruta-confirmed features, ascending.
    pub relevant: Vec<usize>,
    pub ranking: FeatureRanking,
    pub curve: Vec<CurvePoint>,
    pub k_star: usize,
    pub best_accuracy: f64,
    /// The first `k_star` ranked features.
    pub selected: Vec<usize>,
    pub selected_names: Vec<String>,
    /// Trained on exactly `selected`, with `eval_seed`.
    pub model: TrainedModel,
    pub eval_seed: u64,
    pub partition: Vec<SplitIndices>,
    pub timing: Timing,
}

impl SelectionResult {
    pub fn best_metrics(&self) -> &MetricsReport {
        &self
            .curve
            .iter()
            .find(|p| p.k == self.k_star)
            .expect("k_star comes from the curve")
            .metrics
    }
}

/// Output of a full run: the Boruta record and the selection.
#[derive(Debug, Clone)]
pub struct BolimesRun {
    pub boruta: BorutaResult,
    pub selection: SelectionResult,
}

/// Sweep over a finished ranking and pick `k*`. `f_opt` is retrained on the
/// selected columns with the sweep seed, which reproduces the sweep's model
/// at `k*` exactly. Under k-fold it is trained on all rows.
pub fn select_top_k(
    ds: &Dataset,
    config: &PipelineConfig,
    parts: &[SplitIndices],
    relevant: Vec<usize>,
    ranking: FeatureRanking,
) -> Result<SelectionResult> {
    let start = Instant::now();
    let ks = k_range(ranking.len(), config.k_min, config.k_step);
    let seed = config.eval_seed();
    let curve = sweep_curve(ds, parts, &ranking.features, &config.eval_classifier, &ks, seed)?;
    let best = best_point(&curve).expect("non-empty curve");
    let (k_star, best_accuracy) = (best.k, best.metrics.accuracy);
    let sweep_s = start.elapsed().as_secs_f64();

    let selected = ranking.features[..k_star].to_vec();
    let fit_rows = match parts {
        [single] => single.train.clone(),
        _ => (0..ds.n_samples()).collect(),
    };
    let start = Instant::now();
    let model = config
        .eval_classifier
        .train(&ds.select_rows(&fit_rows).select_features(&selected), seed)?;
    let train_s = start.elapsed().as_secs_f64();

    Ok(SelectionResult {
        relevant,
        selected_names: selected.iter().map(|&i| ds.feature_names[i].clone()).collect(),
        selected,
        ranking,
        curve,
        k_star,
        best_accuracy,
        model,
        eval_seed: seed,
        partition: parts.to_vec(),
        timing: Timing {
            sweep_s,
            train_s,
            ..Default::default()
        },
    })
}

pub fn run_bolimes(ds: &Dataset, config: &PipelineConfig) -> Result<BolimesRun> {
    config.validate()?;
    let parts = partition(ds, config)?;
    let work = prepare(ds, config, &parts)?;

    let boruta = select_relevant(&work, config, &parts)?;
    let relevant = boruta.confirmed();
    if relevant.is_empty() {
        return Err(Error::NoRelevantFeatures(Box::new(boruta)));
    }
    log::info!(
        "boruta: {} confirmed of {} after {} iterations",
        relevant.len(),
        ds.n_features(),
        boruta.iterations_run
    );

    let start = Instant::now();
    let ranking = rank_features(&work, config, &parts, &relevant)?;
    let lime_s = start.elapsed().as_secs_f64();

    let mut selection = select_top_k(&work, config, &parts, relevant, ranking)?;
    selection.timing.boruta_s = boruta.elapsed_s;
    selection.timing.lime_s = lime_s;
    log::info!("k* = {} with accuracy {:.3}", selection.k_star, selection.best_accuracy);
    Ok(BolimesRun { boruta, selection })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::MetricsReport;

    fn point(k: usize, acc: f64) -> CurvePoint {
        CurvePoint {
            k,
            metrics: MetricsReport {
                accuracy: acc,
                precision: acc,
                recall: acc,
                f1: acc,
                confusion: vec![],
                n_test: 1,
            },
        }
    }

    #[test]
    fn k_ranges() {
        assert_eq!(k_range(7, 10, 1), vec![7]);
        assert_eq!(k_range(12, 10, 1), vec![10, 11, 12]);
        assert_eq!(k_range(20, 10, 4), vec![10, 14, 18, 20]);
        assert_eq!(k_range(10, 3, 7), vec![3, 10]);
        assert!(k_range(0, 10, 1).is_empty());
    }

    #[test]
    fn ties_resolve_to_smaller_k() {
        let curve = vec![point(10, 0.8), point(11, 0.9), point(12, 0.9), point(13, 0.85)];
        assert_eq!(best_point(&curve).unwrap().k, 11);
        let curve = vec![point(12, 0.9), point(10, 0.9)];
        assert_eq!(best_point(&curve).unwrap().k, 10);
    }

    #[test]
    fn config_validation() {
        let c = PipelineConfig::default();
        assert!(c.validate().is_ok());
        assert!(PipelineConfig { k_min: 0, ..c.clone() }.validate().is_err());
        assert!(PipelineConfig {
            protocol: Protocol::Holdout { test_fraction: 0.6 },
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(PipelineConfig {
            protocol: Protocol::KFold { folds: 1 },
            ..c
        }
        .validate()
        .is_err());
    }

    #[test]
    fn sweep_rejects_oversized_k() {
        let s = crate::synth::synthesize(&crate::synth::SyntheticSpec {
            n_samples: 20,
            n_informative: 2,
            n_noise: 1,
            n_classes: 2,
            class_separation: 2.0,
            seed: 1,
        })
        .unwrap();
        let parts = partition(&s.dataset, &PipelineConfig::default()).unwrap();
        let clf = PipelineConfig::default().eval_classifier;
        assert!(sweep_curve(&s.dataset, &parts, &[0, 1], &clf, &[3], 1).is_err());
        assert!(sweep_curve(&s.dataset, &parts, &[0, 1], &clf, &[], 1).is_err());
    }
}
