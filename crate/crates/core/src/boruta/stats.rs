//! Binomial hit tests and multiple-testing corrections for the Boruta
//! decision step.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Confirmed,
    Tentative,
    Rejected,
}

/// Natural log of the Binomial(trials, 1/2) pmf at 0..=trials.
fn log_pmf_half(trials: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(trials as usize + 1);
    let mut lp = -(trials as f64) * std::f64::consts::LN_2;
    out.push(lp);
    for i in 0..trials {
        lp += ((trials - i) as f64).ln() - ((i + 1) as f64).ln();
        out.push(lp);
    }
    out
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `P[H >= hits]` for `H ~ Binomial(trials, 1/2)`.
pub fn upper_tail(hits: u64, trials: u64) -> f64 {
    if hits == 0 {
        return 1.0;
    }
    if hits > trials {
        return 0.0;
    }
    let lp = log_pmf_half(trials);
    log_sum_exp(&lp[hits as usize..]).exp().min(1.0)
}

/// `P[H <= hits]` for `H ~ Binomial(trials, 1/2)`.
pub fn lower_tail(hits: u64, trials: u64) -> f64 {
    if hits >= trials {
        return 1.0;
    }
    let lp = log_pmf_half(trials);
    log_sum_exp(&lp[..=hits as usize]).exp().min(1.0)
}

/// Benjamini–Hochberg adjusted p-values, in input order.
pub fn bh_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        adjusted[i] = running;
    }
    adjusted
}

/// One undecided feature's evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HitRecord {
    pub hits: u64,
    pub trials: u64,
}

/// Decides a batch of undecided features.
///
/// With `two_step`, a feature is confirmed when its BH-adjusted upper-tail
/// p-value across the batch is below `alpha` and its raw p-value is below
/// `alpha / trials`; rejection mirrors this on the lower tail. Without it,
/// raw p-values are compared with `alpha / n_features`.
pub fn decide(records: &[HitRecord], alpha: f64, two_step: bool, n_features: usize) -> Vec<Decision> {
    let up: Vec<f64> = records.iter().map(|r| upper_tail(r.hits, r.trials)).collect();
    let low: Vec<f64> = records.iter().map(|r| lower_tail(r.hits, r.trials)).collect();
    let (accept, reject): (Vec<bool>, Vec<bool>) = if two_step {
        let up_adj = bh_adjust(&up);
        let low_adj = bh_adjust(&low);
        records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let bonf = alpha / r.trials as f64;
                (up_adj[i] < alpha && up[i] < bonf, low_adj[i] < alpha && low[i] < bonf)
            })
            .unzip()
    } else {
        let bonf = alpha / n_features.max(1) as f64;
        up.iter().zip(&low).map(|(&u, &l)| (u < bonf, l < bonf)).unzip()
    };
    accept
        .into_iter()
        .zip(reject)
        .map(|(a, r)| match (a, r) {
            (true, _) => Decision::Confirmed,
            (false, true) => Decision::Rejected,
            _ => Decision::Tentative,
        })
        .collect()
}

/// Single-feature form of [`decide`].
pub fn hit_decision(hits: u64, trials: u64, alpha: f64, two_step: bool) -> Decision {
    assert!(trials >= 1 && hits <= trials, "need 0 <= hits <= trials, trials >= 1");
    decide(&[HitRecord { hits, trials }], alpha, two_step, 1)[0]
}
