//! All-relevant feature filtering.
//!
//! Each iteration appends permuted copies ("shadows") of the features, fits a random forest on the augmented matrix and records a hit for every
//! real feature whose importance strictly exceeds the shadow threshold. Hit
//! counts are tested against Binomial(trials, 1/2); rejected features leave
//! the active set, confirmed ones stay in it.
//!
//! By default only active features are shadowed, as in BorutaPy. That
//! shrinks the reference set as features are rejected, and on small samples
//! the few survivors then beat it on chance association alone;
//! [`ShadowPool::All`] keeps the full shadow set at a cost of `p` extra
//! columns in every forest.

mod stats;

pub use stats::{bh_adjust, decide, hit_decision, lower_tail, upper_tail, Decision, HitRecord};

use std::time::Instant;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::determinism::{derive_seed, permute};
use crate::error::{Error, Result};
use crate::learners::{feature_importances, train_forest, ForestParams, TreeParams};

/// BorutaPy pads the shadow block to at least this many columns.
const MIN_SHADOWS: usize = 5;

/// Which features get a shadow copy in each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShadowPool {
    /// Every original feature, rejected or not.
    All,
    /// Only features not yet rejected.
    Active,
}

impl std::str::FromStr for ShadowPool {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "all" => Ok(Self::All),
            "active" => Ok(Self::Active),
            other => Err(format!("shadow pool must be all or active, got '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BorutaParams {
    pub n_estimators: usize,
    pub max_iter: usize,
    pub alpha: f64,
    pub percentile: f64,
    pub two_step: bool,
    pub shadow_pool: ShadowPool,
    pub seed: u64,
    pub tree: TreeParams,
}

impl Default for BorutaParams {
    fn default() -> Self {
        Self {
            n_estimators: 300,
            max_iter: 200,
            alpha: 0.01,
            percentile: 100.0,
            two_step: true,
            shadow_pool: ShadowPool::Active,
            seed: 42,
            tree: TreeParams::default(),
        }
    }
}

impl BorutaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.percentile >= 1.0 && self.percentile <= 100.0) {
            return Err(Error::param(format!(
                "percentile must lie in [1, 100], got {}",
                self.percentile
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter must be >= 1"));
        }
        if self.n_estimators == 0 {
            return Err(Error::param("boruta n_estimators must be >= 1"));
        }
        self.tree.validate()
    }

    /// The forest used in iteration `iter`, or by LIME when `stream` differs.
    pub fn forest(&self, stream: &str) -> ForestParams {
        ForestParams {
            n_estimators: self.n_estimators,
            tree: self.tree,
            bootstrap: true,
            seed: derive_seed(self.seed, stream),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureStatus {
    Confirmed,
    Tentative,
    Rejected,
}

impl FeatureStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureStatus::Confirmed => "Confirmed",
            FeatureStatus::Tentative => "Tentative",
            FeatureStatus::Rejected => "Rejected",
        }
    }
}

impl std::str::FromStr for FeatureStatus {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "Confirmed" => Ok(Self::Confirmed),
            "Tentative" => Ok(Self::Tentative),
            "Rejected" => Ok(Self::Rejected),
            other => Err(format!("unknown feature status '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorutaResult {
    /// One entry per original feature.
    pub status: Vec<FeatureStatus>,
    pub hits: Vec<u64>,
    pub trials: Vec<u64>,
    pub iterations_run: usize,
    /// Shadow threshold used in each iteration.
    pub shadow_thresholds: Vec<f64>,
    pub elapsed_s: f64,
}

/// Confirmed/Tentative/Rejected counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub confirmed: usize,
    pub tentative: usize,
    pub rejected: usize,
}

impl BorutaResult {
    /// Indices of confirmed features, ascending. This is the selected set.
    pub fn confirmed(&self) -> Vec<usize> {
        self.with_status(FeatureStatus::Confirmed)
    }

    pub fn with_status(&self, s: FeatureStatus) -> Vec<usize> {
        (0..self.status.len()).filter(|&i| self.status[i] == s).collect()
    }

    pub fn counts(&self) -> StatusCounts {
        StatusCounts {
            confirmed: self.with_status(FeatureStatus::Confirmed).len(),
            tentative: self.with_status(FeatureStatus::Tentative).len(),
            rejected: self.with_status(FeatureStatus::Rejected).len(),
        }
    }
}

/// Appends a seeded permutation of every column; column `p + i` shadows
/// column `i`.
pub fn make_shadow(x: ArrayView2<f64>, seed: u64) -> Array2<f64> {
    shadow_block(x, x.ncols(), seed).map_or_else(
        || x.to_owned(),
        |s| concatenate(Axis(1), &[x, s.view()]).expect("same row count"),
    )
}

/// `count` shadow columns cycling over the columns of `x`, each an
/// independent permutation.
fn shadow_block(x: ArrayView2<f64>, count: usize, seed: u64) -> Option<Array2<f64>> {
    let p = x.ncols();
    if p == 0 || count == 0 {
        return None;
    }
    let mut out = Array2::zeros((x.nrows(), count));
    for s in 0..count {
        let src = x.column(s % p).to_vec();
        let perm = permute(&src, derive_seed(seed, &format!("shadow={s}")));
        out.column_mut(s).assign(&ndarray::Array1::from(perm));
    }
    Some(out)
}

/// Nearest-rank percentile: the `ceil(q/100 * n)`-th smallest value.
pub fn shadow_threshold(shadow_importances: &[f64], percentile: f64) -> Result<f64> {
    if shadow_importances.is_empty() {
        return Err(Error::param("no shadow importances"));
    }
    let mut sorted = shadow_importances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((percentile / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    Ok(sorted[rank - 1])
}

pub fn boruta_run(ds: &Dataset, params: &BorutaParams) -> Result<BorutaResult> {
    params.validate()?;
    let start = Instant::now();
    let p = ds.n_features();
    let mut status: Vec<Option<FeatureStatus>> = vec![None; p];
    let mut hits = vec![0u64; p];
    let mut trials = vec![0u64; p];
    let mut thresholds = Vec::new();
    let mut iterations_run = 0;

    for iter in 1..=params.max_iter {
        if status.iter().all(Option::is_some) {
            break;
        }
        iterations_run = iter;
        let active: Vec<usize> = (0..p).filter(|&i| status[i] != Some(FeatureStatus::Rejected)).collect();
        let x_cur = ds.matrix.select(Axis(1), &active);
        let shadow_seed = derive_seed(params.seed, &format!("boruta/iter={iter}/shadow"));
        let shadows = match params.shadow_pool {
            ShadowPool::All => shadow_block(ds.matrix.view(), p.max(MIN_SHADOWS), shadow_seed),
            ShadowPool::Active => shadow_block(x_cur.view(), active.len().max(MIN_SHADOWS), shadow_seed),
        }
        .expect("active set is non-empty while features are undecided");
        let augmented = concatenate(Axis(1), &[x_cur.view(), shadows.view()]).expect("same rows");

        let forest = train_forest(
            augmented.view(),
            &ds.labels,
            ds.n_classes(),
            &params.forest(&format!("boruta/iter={iter}/forest")),
        )?;
        let imp = feature_importances(&forest)?;
        let (real, shadow) = imp.values().split_at(active.len());
        let threshold = shadow_threshold(shadow, params.percentile)?;
        thresholds.push(threshold);
        for (pos, &f) in active.iter().enumerate() {
            trials[f] += 1;
            if real[pos] > threshold {
                hits[f] += 1;
            }
        }

        let undecided: Vec<usize> = (0..p).filter(|&i| status[i].is_none()).collect();
        let records: Vec<HitRecord> = undecided
            .iter()
            .map(|&f| HitRecord {
                hits: hits[f],
                trials: trials[f],
            })
            .collect();
        for (&f, d) in undecided.iter().zip(decide(&records, params.alpha, params.two_step, p)) {
            status[f] = match d {
                Decision::Confirmed => Some(FeatureStatus::Confirmed),
                Decision::Rejected => Some(FeatureStatus::Rejected),
                Decision::Tentative => None,
            };
        }
        log::debug!(
            "boruta iter {iter}: threshold {threshold:.5}, confirmed {}, rejected {}, undecided {}",
            status.iter().filter(|s| **s == Some(FeatureStatus::Confirmed)).count(),
            status.iter().filter(|s| **s == Some(FeatureStatus::Rejected)).count(),
            status.iter().filter(|s| s.is_none()).count(),
        );
    }

    Ok(BorutaResult {
        status: status
            .into_iter()
            .map(|s| s.unwrap_or(FeatureStatus::Tentative))
            .collect(),
        hits,
        trials,
        iterations_run,
        shadow_thresholds: thresholds,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}
