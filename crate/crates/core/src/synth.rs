//! Planted-signal generator used to check the selection stages against a
//! known ground truth.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::determinism::{derive_seed, permute, rng_from_seed, GaussianSampler};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_informative: usize,
    pub n_noise: usize,
    pub n_classes: usize,
    /// Gap between consecutive class means of an informative feature, in
    /// units of the within-class standard deviation.
    pub class_separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn n_features(&self) -> usize {
        self.n_informative + self.n_noise
    }

    fn validate(&self) -> Result<()> {
        if self.n_informative == 0 {
            return Err(Error::param("n_informative must be >= 1"));
        }
        if self.n_classes < 2 {
            return Err(Error::param("n_classes must be >= 2"));
        }
        if self.n_samples < self.n_classes {
            return Err(Error::param("n_samples must be >= n_classes"));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return Err(Error::param("class_separation must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// Column indices of the informative features, ascending.
    pub informative: Vec<usize>,
}

/// Labels are balanced (round-robin, then shuffled). Informative column j
/// draws `N(mu_{c,j}, 1)` where the class means are `separation * (rank -
/// (K-1)/2)` under a per-feature random class order. Noise columns are
/// i.i.d. `N(0, 1)`. Informative columns sit at random positions.
pub fn synthesize(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let (n, k, p) = (spec.n_samples, spec.n_classes, spec.n_features());

    let ordered: Vec<usize> = (0..n).map(|i| i % k).collect();
    let labels = permute(&ordered, derive_seed(spec.seed, "synth/labels"));

    let columns: Vec<usize> = (0..p).collect();
    let placement = permute(&columns, derive_seed(spec.seed, "synth/placement"));
    let mut informative: Vec<usize> = placement[..spec.n_informative].to_vec();
    informative.sort_unstable();
    let mut is_informative = vec![false; p];
    for &j in &informative {
        is_informative[j] = true;
    }

    let centre = (k as f64 - 1.0) / 2.0;
    let classes: Vec<usize> = (0..k).collect();
    let mut matrix = Array2::<f64>::zeros((n, p));
    for j in 0..p {
        let mut gauss = GaussianSampler::new(rng_from_seed(derive_seed(spec.seed, &format!("synth/col={j}"))));
        let means: Vec<f64> = if is_informative[j] {
            let order = permute(&classes, derive_seed(spec.seed, &format!("synth/order={j}")));
            let mut m = vec![0.0; k];
            for (rank, &c) in order.iter().enumerate() {
                m[c] = spec.class_separation * (rank as f64 - centre);
            }
            m
        } else {
            vec![0.0; k]
        };
        for i in 0..n {
            matrix[[i, j]] = means[labels[i]] + gauss.next_standard();
        }
    }

    let feature_names = (0..p).map(|j| format!("f{j}")).collect();
    let class_names = (0..k).map(|c| format!("c{c}")).collect();
    let dataset = Dataset::new(
        format!("synthetic-s{}", spec.seed),
        matrix,
        labels,
        feature_names,
        class_names,
    )?;
    Ok(SyntheticData { dataset, informative })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sep: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_samples: 200,
            n_informative: 10,
            n_noise: 490,
            n_classes: 3,
            class_separation: sep,
            seed,
        }
    }

    #[test]
    fn shape_and_ground_truth() {
        let s = synthesize(&spec(2.0, 7)).unwrap();
        assert_eq!(s.dataset.n_features(), 500);
        assert_eq!(s.dataset.n_samples(), 200);
        assert_eq!(s.informative.len(), 10);
        assert!(s.informative.windows(2).all(|w| w[0] < w[1]));
        let counts = s.dataset.class_counts();
        assert!(counts.iter().all(|&c| c == 66 || c == 67));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synthesize(&spec(2.0, 7)).unwrap();
        let b = synthesize(&spec(2.0, 7)).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.informative, b.informative);
        let c = synthesize(&spec(2.0, 8)).unwrap();
        assert_ne!(a.dataset.matrix, c.dataset.matrix);
    }

    #[test]
    fn zero_separation_has_no_class_shift() {
        let s = synthesize(&SyntheticSpec {
            n_samples: 3000,
            n_noise: 5,
            ..spec(0.0, 1)
        })
        .unwrap();
        let ds = &s.dataset;
        for &j in &s.informative {
            for c in 0..3 {
                let vals: Vec<f64> = (0..ds.n_samples())
                    .filter(|&i| ds.labels[i] == c)
                    .map(|i| ds.matrix[[i, j]])
                    .collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                assert!(m.abs() < 0.1, "class {c} mean {m}");
            }
        }
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(synthesize(&SyntheticSpec {
            n_informative: 0,
            ..spec(1.0, 1)
        })
        .is_err());
        assert!(synthesize(&SyntheticSpec {
            n_classes: 1,
            ..spec(1.0, 1)
        })
        .is_err());
    }

    /// Plug-in mutual information with equal-width bins.
    fn binned_mi(x: &[f64], y: &[usize], k: usize, bins: usize) -> f64 {
        let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / bins as f64;
        let mut joint = vec![vec![0.0; k]; bins];
        for (&v, &c) in x.iter().zip(y) {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            joint[b][c] += 1.0;
        }
        let n = x.len() as f64;
        let px: Vec<f64> = joint.iter().map(|r| r.iter().sum::<f64>() / n).collect();
        let py: Vec<f64> = (0..k).map(|c| joint.iter().map(|r| r[c]).sum::<f64>() / n).collect();
        let mut mi = 0.0;
        for b in 0..bins {
            for c in 0..k {
                let pxy = joint[b][c] / n;
                if pxy > 0.0 {
                    mi += pxy * (pxy / (px[b] * py[c])).ln();
                }
            }
        }
        mi
    }

    #[test]
    fn strong_separation_orders_mutual_information() {
        let s = synthesize(&SyntheticSpec {
            n_noise: 90,
            ..spec(3.0, 11)
        })
        .unwrap();
        let ds = &s.dataset;
        let mi: Vec<f64> = (0..ds.n_features())
            .map(|j| binned_mi(&ds.matrix.column(j).to_vec(), &ds.labels, 3, 10))
            .collect();
        let min_inf = s.informative.iter().map(|&j| mi[j]).fold(f64::INFINITY, f64::min);
        let max_noise = (0..ds.n_features())
            .filter(|j| !s.informative.contains(j))
            .map(|j| mi[j])
            .fold(0.0, f64::max);
        assert!(max_noise < min_inf, "noise {max_noise} vs informative {min_inf}");
    }
}
