//! Local linear surrogates around individual instances and their aggregation
//! into a global feature ranking.
//!
//! Perturbations are drawn i.i.d. standard normal in the standardized feature
//! space of the training data. Each sample is weighted by
//! `exp(-d^2 / width^2)` where `d` is its Euclidean distance to the explained
//! instance, and a ridge-penalized weighted least-squares line is fitted to
//! the black box's probability for the instance's predicted class.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Standardizer;
use crate::determinism::{derive_seed, rng_from_seed, GaussianSampler};
use crate::error::{Error, Result};
use crate::learners::{argmax, Classifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
    Sum,
    Median,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            "median" => Ok(Self::Median),
            other => Err(format!("aggregation must be mean, sum or median, got '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimeParams {
    pub n_perturbations: usize,
    /// `None` means `0.75 * sqrt(p)`.
    pub kernel_width: Option<f64>,
    pub ridge_penalty: f64,
    pub aggregation: Aggregation,
    pub seed: u64,
}

impl Default for LimeParams {
    fn default() -> Self {
        Self {
            n_perturbations: 5000,
            kernel_width: None,
            ridge_penalty: 1.0,
            aggregation: Aggregation::Mean,
            seed: 42,
        }
    }
}

impl LimeParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_perturbations < 10 {
            return Err(Error::param("LIME needs at least 10 perturbations"));
        }
        if let Some(w) = self.kernel_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::param(format!("kernel width must be > 0, got {w}")));
            }
        }
        if !(self.ridge_penalty >= 0.0 && self.ridge_penalty.is_finite()) {
            return Err(Error::param(format!(
                "ridge penalty must be >= 0, got {}",
                self.ridge_penalty
            )));
        }
        Ok(())
    }

    pub fn width_for(&self, n_features: usize) -> f64 {
        self.kernel_width.unwrap_or_else(|| 0.75 * (n_features as f64).sqrt())
    }
}

/// Neighbourhood of one instance in standardized space.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSet {
    pub samples: Array2<f64>,
    pub outputs: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeExplanation {
    pub instance: usize,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub weighted_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalRanking {
    /// Feature indices, highest score first; equal scores keep ascending
    /// index order.
    pub order: Vec<usize>,
    /// Aggregated score per feature index.
    pub scores: Vec<f64>,
}

/// `m` rows of i.i.d. standard normal coordinates; row 0 is `instance`.
pub fn perturb(instance: ArrayView1<f64>, m: usize, seed: u64) -> Array2<f64> {
    let p = instance.len();
    let mut gauss = GaussianSampler::new(rng_from_seed(seed));
    let mut z = Array2::from_shape_simple_fn((m, p), || gauss.next_standard());
    if m > 0 {
        z.row_mut(0).assign(&instance);
    }
    z
}

pub fn proximity(distances: &[f64], kernel_width: f64) -> Result<Vec<f64>> {
    if kernel_width.is_nan() || kernel_width <= 0.0 {
        return Err(Error::param(format!("kernel width must be > 0, got {kernel_width}")));
    }
    if let Some(d) = distances.iter().find(|d| d.is_nan() || **d < 0.0) {
        return Err(Error::param(format!("distance must be >= 0, got {d}")));
    }
    let w2 = kernel_width * kernel_width;
    Ok(distances.iter().map(|d| (-(d * d) / w2).exp()).collect())
}

/// Intercept, coefficients and weighted R² of a surrogate fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub weighted_r2: f64,
}

/// Minimizes `sum_i w_i (f_i - b - z_i . c)^2 + lambda * |c|^2` by solving
/// `(A^T W A + lambda * I') x = A^T W f` with `A = [1 | Z]` and `I'` the
/// identity with its intercept entry zeroed.
pub fn fit_surrogate(z: ArrayView2<f64>, f_out: &[f64], weights: &[f64], lambda: f64) -> Result<SurrogateFit> {
    let (m, p) = z.dim();
    if f_out.len() != m || weights.len() != m {
        return Err(Error::Shape(format!(
            "{m} samples but {} outputs and {} weights",
            f_out.len(),
            weights.len()
        )));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::param(format!("ridge penalty must be >= 0, got {lambda}")));
    }
    if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
        return Err(Error::param("proximity weights must be >= 0"));
    }

    let mut scaled = Array2::<f64>::zeros((m, p + 1));
    let mut target = Array1::<f64>::zeros(m);
    for i in 0..m {
        let sw = weights[i].sqrt();
        scaled[[i, 0]] = sw;
        for j in 0..p {
            scaled[[i, j + 1]] = sw * z[[i, j]];
        }
        target[i] = sw * f_out[i];
    }
    let mut gram = scaled.t().dot(&scaled);
    for j in 1..=p {
        gram[[j, j]] += lambda;
    }
    let rhs = scaled.t().dot(&target);
    let x = cholesky_solve(gram, rhs)?;

    let intercept = x[0];
    let coefficients = x.slice(s![1..]).to_vec();
    let fitted = z.dot(&x.slice(s![1..])) + intercept;
    let wsum: f64 = weights.iter().sum();
    let wmean = weights.iter().zip(f_out).map(|(w, f)| w * f).sum::<f64>() / wsum;
    let ss_tot: f64 = weights.iter().zip(f_out).map(|(w, f)| w * (f - wmean).powi(2)).sum();
    let ss_res: f64 = (0..m).map(|i| weights[i] * (f_out[i] - fitted[i]).powi(2)).sum();
    let weighted_r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= f64::EPSILON * f64::EPSILON {
        1.0
    } else {
        0.0
    };
    Ok(SurrogateFit {
        intercept,
        coefficients,
        weighted_r2,
    })
}

// pivots below this fraction of the largest diagonal entry count as zero
const PIVOT_TOLERANCE: f64 = 1e-12;

/// Solves `a x = b` for symmetric positive definite `a` in place.
fn cholesky_solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max);
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= a[[j, k]] * a[[j, k]];
        }
        if d.is_nan() || d <= PIVOT_TOLERANCE * scale {
            return Err(Error::Singular { column: j, pivot: d });
        }
        let d = d.sqrt();
        a[[j, j]] = d;
        for i in j + 1..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = v / d;
        }
    }
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[[i, k]] * b[k];
        }
        b[i] = v / a[[i, i]];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= a[[k, i]] * b[k];
        }
        b[i] = v / a[[i, i]];
    }
    Ok(b)
}

/// Builds the neighbourhood of `instance` (raw feature scale) and queries
/// the black box for the probability of the instance's predicted class.
pub fn neighbourhood<C: Classifier + ?Sized>(
    model: &C,
    standardizer: &Standardizer,
    instance: ArrayView1<f64>,
    params: &LimeParams,
    seed: u64,
) -> Result<PerturbationSet> {
    let row = instance.insert_axis(Axis(0));
    let centre = standardizer.transform(row)?;
    let samples = perturb(centre.row(0), params.n_perturbations, seed);
    let raw = standardizer.inverse_transform(samples.view())?;
    let proba = model.predict_proba(raw.view())?;
    let class = argmax(proba.row(0).iter().copied());
    let outputs = proba.column(class).to_vec();
    let distances: Vec<f64> = samples
        .outer_iter()
        .map(|r| {
            r.iter()
                .zip(centre.row(0))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let weights = proximity(&distances, params.width_for(instance.len()))?;
    Ok(PerturbationSet {
        samples,
        outputs,
        weights,
    })
}

/// One explanation per row of `x` (raw scale, same columns the model was
/// trained on). Standardization statistics come from `x` itself; instance
/// `i` uses the seed stream `lime/instance=i`.
pub fn explain_all<C: Classifier + ?Sized>(
    model: &C,
    x: ArrayView2<f64>,
    params: &LimeParams,
) -> Result<Vec<LimeExplanation>> {
    params.validate()?;
    if x.ncols() != model.n_features() {
        return Err(Error::Shape(format!(
            "black box expects {} features, got {}",
            model.n_features(),
            x.ncols()
        )));
    }
    let standardizer = Standardizer::fit(x);
    (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(params.seed, &format!("lime/instance={i}"));
            let set = neighbourhood(model, &standardizer, x.row(i), params, seed)?;
            let fit = fit_surrogate(set.samples.view(), &set.outputs, &set.weights, params.ridge_penalty)?;
            Ok(LimeExplanation {
                instance: i,
                intercept: fit.intercept,
                coefficients: fit.coefficients,
                weighted_r2: fit.weighted_r2,
            })
        })
        .collect()
}

pub fn global_ranking(explanations: &[LimeExplanation], aggregation: Aggregation) -> Result<GlobalRanking> {
    let first = explanations
        .first()
        .ok_or_else(|| Error::param("cannot rank features from zero explanations"))?;
    let p = first.coefficients.len();
    if explanations.iter().any(|e| e.coefficients.len() != p) {
        return Err(Error::Shape("explanations disagree on feature count".into()));
    }
    let n = explanations.len() as f64;
    let scores: Vec<f64> = (0..p)
        .map(|j| {
            let mut col: Vec<f64> = explanations.iter().map(|e| e.coefficients[j].abs()).collect();
            match aggregation {
                Aggregation::Sum => col.iter().sum(),
                Aggregation::Mean => col.iter().sum::<f64>() / n,
                Aggregation::Median => {
                    col.sort_by(f64::total_cmp);
                    let mid = col.len() / 2;
                    if col.len() % 2 == 1 {
                        col[mid]
                    } else {
                        (col[mid - 1] + col[mid]) / 2.0
                    }
                }
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(GlobalRanking { order, scores })
}
