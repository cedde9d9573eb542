//! CART trees. One builder serves both the Gini classification tree and the
//! squared-error regression tree used by boosting.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack for rounding when accepting a split that leaves impurity unchanged.
const GAIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl CandidateFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let m = match self {
            CandidateFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            CandidateFeatures::All => n_features,
            CandidateFeatures::Count(m) => m,
        };
        m.clamp(1, n_features.max(1))
    }
}

impl std::str::FromStr for CandidateFeatures {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sqrt" => Ok(Self::Sqrt),
            "all" => Ok(Self::All),
            other => match other.parse::<usize>() {
                Ok(m) if m >= 1 => Ok(Self::Count(m)),
                _ => Err(format!("expected 'sqrt', 'all' or a positive integer, got '{other}'")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub n_candidate_features: CandidateFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 10,
            min_samples_leaf: 1,
            n_candidate_features: CandidateFeatures::Sqrt,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::param("max_depth must be >= 1"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::param("min_samples_leaf must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Leaf {
        value: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A fitted tree. Leaves hold a class distribution (classification) or a
/// single value (regression).
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
    pub(crate) n_features: usize,
    pub(crate) depth: usize,
    /// Unnormalized impurity decrease per feature, weighted by node size
    /// relative to the root.
    pub(crate) importance: Vec<f64>,
}

impl Tree {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.len() - self.n_leaves()
    }

    pub fn leaf_value(&self, row: ArrayView1<f64>) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

pub(crate) trait Criterion {
    type Stats: Clone;

    fn empty(&self) -> Self::Stats;
    fn push(&self, stats: &mut Self::Stats, sample: usize);
    fn pop(&self, stats: &mut Self::Stats, sample: usize);
    fn impurity(&self, stats: &Self::Stats) -> f64;
    fn leaf_value(&self, samples: &[usize]) -> Vec<f64>;
}

pub(crate) struct Gini<'a> {
    pub labels: &'a [usize],
    pub n_classes: usize,
}

impl Criterion for Gini<'_> {
    // class counts followed by the total
    type Stats = Vec<f64>;

    fn empty(&self) -> Vec<f64> {
        vec![0.0; self.n_classes + 1]
    }

    fn push(&self, s: &mut Vec<f64>, i: usize) {
        s[self.labels[i]] += 1.0;
        s[self.n_classes] += 1.0;
    }

    fn pop(&self, s: &mut Vec<f64>, i: usize) {
        s[self.labels[i]] -= 1.0;
        s[self.n_classes] -= 1.0;
    }

    fn impurity(&self, s: &Vec<f64>) -> f64 {
        gini(&s[..self.n_classes], s[self.n_classes])
    }

    fn leaf_value(&self, samples: &[usize]) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_classes];
        for &i in samples {
            counts[self.labels[i]] += 1.0;
        }
        let n = samples.len() as f64;
        counts.iter_mut().for_each(|c| *c /= n);
        counts
    }
}

pub fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>()
}

/// Squared-error splits on `targets`; leaves take a Newton step
/// `scale * sum(targets) / sum(hessians)`.
pub(crate) struct Newton<'a> {
    pub targets: &'a [f64],
    pub hessians: &'a [f64],
    pub scale: f64,
}

impl Criterion for Newton<'_> {
    // (count, sum, sum of squares)
    type Stats = (f64, f64, f64);

    fn empty(&self) -> Self::Stats {
        (0.0, 0.0, 0.0)
    }

    fn push(&self, s: &mut Self::Stats, i: usize) {
        let t = self.targets[i];
        s.0 += 1.0;
        s.1 += t;
        s.2 += t * t;
    }

    fn pop(&self, s: &mut Self::Stats, i: usize) {
        let t = self.targets[i];
        s.0 -= 1.0;
        s.1 -= t;
        s.2 -= t * t;
    }

    fn impurity(&self, s: &Self::Stats) -> f64 {
        if s.0 <= 0.0 {
            return 0.0;
        }
        let m = s.1 / s.0;
        (s.2 / s.0 - m * m).max(0.0)
    }

    fn leaf_value(&self, samples: &[usize]) -> Vec<f64> {
        let num: f64 = samples.iter().map(|&i| self.targets[i]).sum();
        let den: f64 = samples.iter().map(|&i| self.hessians[i]).sum();
        if den.abs() < 1e-150 {
            vec![0.0]
        } else {
            vec![self.scale * num / den]
        }
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
    left_impurity: f64,
    right_impurity: f64,
    n_left: usize,
}

pub(crate) struct Builder<'a, C: Criterion, R: Rng> {
    x: ArrayView2<'a, f64>,
    criterion: &'a C,
    params: TreeParams,
    n_candidates: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    root_weight: f64,
    depth: usize,
    pairs: Vec<(f64, usize)>,
}

impl<'a, C: Criterion, R: Rng> Builder<'a, C, R> {
    pub fn new(x: ArrayView2<'a, f64>, criterion: &'a C, params: TreeParams, rng: &'a mut R) -> Self {
        let p = x.ncols();
        Self {
            x,
            criterion,
            params,
            n_candidates: params.n_candidate_features.resolve(p),
            rng,
            nodes: Vec::new(),
            importance: vec![0.0; p],
            root_weight: 1.0,
            depth: 0,
            pairs: Vec::new(),
        }
    }

    /// `samples` may contain repeats (bootstrap draws).
    pub fn build(mut self, samples: Vec<usize>) -> Tree {
        self.root_weight = samples.len().max(1) as f64;
        self.grow(samples, 0);
        Tree {
            nodes: self.nodes,
            n_features: self.x.ncols(),
            depth: self.depth,
            importance: self.importance,
        }
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        self.depth = self.depth.max(depth);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: Vec::new() });

        let mut stats = self.criterion.empty();
        for &i in &samples {
            self.criterion.push(&mut stats, i);
        }
        let impurity = self.criterion.impurity(&stats);
        let can_split =
            depth < self.params.max_depth && samples.len() >= 2 * self.params.min_samples_leaf && impurity > 0.0;

        let best = if can_split {
            self.best_split(&samples, &stats, impurity)
        } else {
            None
        };
        let Some(best) = best else {
            self.nodes[id] = Node::Leaf {
                value: self.criterion.leaf_value(&samples),
            };
            return id;
        };

        let n = samples.len() as f64;
        let nl = best.n_left as f64;
        self.importance[best.feature] +=
            (n * impurity - nl * best.left_impurity - (n - nl) * best.right_impurity) / self.root_weight;

        let (left_s, right_s): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&i| self.x[[i, best.feature]] <= best.threshold);
        let left = self.grow(left_s, depth + 1);
        let right = self.grow(right_s, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn candidates(&mut self) -> Vec<usize> {
        let p = self.x.ncols();
        if self.n_candidates >= p {
            return (0..p).collect();
        }
        let mut c = index::sample(self.rng, p, self.n_candidates).into_vec();
        c.sort_unstable();
        c
    }

    /// An impure node always splits when any valid threshold exists, even at
    /// zero gain (XOR-like structure only pays off one level down).
    /// Highest gain wins; ties keep the lower feature index, then the lower
    /// threshold, because candidates and thresholds are scanned in ascending
    /// order and only strictly better splits replace the incumbent.
    fn best_split(&mut self, samples: &[usize], parent: &C::Stats, impurity: f64) -> Option<BestSplit> {
        let n = samples.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<BestSplit> = None;
        let mut pairs = std::mem::take(&mut self.pairs);
        for f in self.candidates() {
            pairs.clear();
            pairs.extend(samples.iter().map(|&i| (self.x[[i, f]], i)));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }
            let mut left = self.criterion.empty();
            let mut right = parent.clone();
            for pos in 0..n - 1 {
                let (v, i) = pairs[pos];
                self.criterion.push(&mut left, i);
                self.criterion.pop(&mut right, i);
                let n_left = pos + 1;
                let next = pairs[pos + 1].0;
                if v == next || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let li = self.criterion.impurity(&left);
                let ri = self.criterion.impurity(&right);
                let weighted = (n_left as f64 * li + (n - n_left) as f64 * ri) / n as f64;
                let gain = impurity - weighted;
                if gain > -GAIN_TOLERANCE && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                        left_impurity: li,
                        right_impurity: ri,
                        n_left,
                    });
                }
            }
        }
        self.pairs = pairs;
        best
    }
}
