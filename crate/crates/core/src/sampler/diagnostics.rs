//! Convergence diagnostics: split R-hat on rank-normalized draws, bulk and
//! tail effective sample sizes.

use serde::{Deserialize, Serialize};

use super::PosteriorDraws;
use crate::error::{Error, Result};
use crate::math::{norm_inv_cdf, quantile_type7};

/// Per-parameter convergence diagnostics.
///
/// `rhat` is NaN when every chain is constant at the same value (degenerate)
/// and infinite when chains are constant at different values; otherwise it is
/// floored at `1 - 1e-3` to absorb estimator noise. ESS values are capped at
/// the total number of draws and NaN for degenerate parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rhat: Vec<f64>,
    pub ess_bulk: Vec<f64>,
    pub ess_tail: Vec<f64>,
}

impl Diagnostics {
    /// Largest finite R-hat, if any parameter is non-degenerate.
    pub fn max_rhat(&self) -> Option<f64> {
        self.rhat
            .iter()
            .copied()
            .filter(|r| r.is_finite())
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    }

    /// True when any parameter is degenerate, diverged, or above the cutoff.
    pub fn any_rhat_above(&self, cutoff: f64) -> bool {
        self.rhat.iter().any(|r| r.is_nan() || *r > cutoff)
    }
}

/// Computes split-R-hat and bulk/tail ESS for every parameter.
///
/// Requires at least 2 chains of at least 4 draws each.
pub fn diagnostics(draws: &PosteriorDraws) -> Result<Diagnostics> {
    if draws.n_chains < 2 {
        return Err(Error::Unsupported(format!(
            "diagnostics need >= 2 chains, got {}",
            draws.n_chains
        )));
    }
    if draws.n_samples < 4 {
        return Err(Error::Unsupported(format!(
            "diagnostics need >= 4 draws per chain, got {}",
            draws.n_samples
        )));
    }
    let mut rhat = Vec::with_capacity(draws.dim);
    let mut ess_bulk = Vec::with_capacity(draws.dim);
    let mut ess_tail = Vec::with_capacity(draws.dim);
    for p in 0..draws.dim {
        let chains: Vec<Vec<f64>> =
            (0..draws.n_chains).map(|c| draws.param_chain(c, p)).collect();
        let split = split_chains(&chains);
        let first = split[0][0];
        if split.iter().flatten().all(|&x| x == first) {
            rhat.push(f64::NAN);
            ess_bulk.push(f64::NAN);
            ess_tail.push(f64::NAN);
            continue;
        }
        let normalized = rank_normalize(&split);
        rhat.push(split_rhat(&normalized));
        ess_bulk.push(combined_ess(&normalized));
        ess_tail.push(tail_ess(&split));
    }
    Ok(Diagnostics { rhat, ess_bulk, ess_tail })
}

/// Splits each chain in half; odd trailing draws are dropped so all halves
/// share one length.
fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let half = chains[0].len() / 2;
    let mut out = Vec::with_capacity(chains.len() * 2);
    for chain in chains {
        out.push(chain[..half].to_vec());
        out.push(chain[half..half * 2].to_vec());
    }
    out
}

/// Replaces values by normal scores of their pooled fractional ranks
/// (average ranks on ties).
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n_chains = chains.len();
    let len = chains[0].len();
    let total = n_chains * len;
    let mut order: Vec<usize> = (0..total).collect();
    let value = |k: usize| chains[k / len][k % len];
    order.sort_by(|&a, &b| value(a).partial_cmp(&value(b)).expect("finite draws"));

    let mut ranks = vec![0.0; total];
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j + 1 < total && value(order[j + 1]) == value(order[i]) {
            j += 1;
        }
        // 1-based average rank of the tied run [i, j].
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let n = total as f64;
    (0..n_chains)
        .map(|c| {
            (0..len)
                .map(|t| norm_inv_cdf((ranks[c * len + t] - 0.375) / (n + 0.25)))
                .collect()
        })
        .collect()
}

/// Classic split-R-hat on the prepared (already split) chains.
fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = means.iter().map(|&x| (x - grand).powi(2)).sum::<f64>() * n / (m - 1.0);
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, &mean)| c.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w <= f64::EPSILON * grand.abs().max(1.0) {
        return if b > 0.0 { f64::INFINITY } else { f64::NAN };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    ((var_plus / w).sqrt()).max(1.0 - 1e-3)
}

/// Combined-chain ESS with Geyer's initial monotone sequence over the
/// chain-averaged autocorrelations, capped at the total draw count.
fn combined_ess(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len();
    let nf = n as f64;
    let total = m * nf;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let vars: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(c, &mean)| c.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0))
        .collect();
    let w = vars.iter().sum::<f64>() / m;
    let grand = means.iter().sum::<f64>() / m;
    let b_over_n = means.iter().map(|&x| (x - grand).powi(2)).sum::<f64>() / (m - 1.0);
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if !(var_plus > 0.0) {
        return f64::NAN;
    }

    // Biased (1/n) autocovariances averaged across chains.
    let acov = |t: usize| -> f64 {
        let mut sum = 0.0;
        for (c, &mean) in chains.iter().zip(&means) {
            let mut s = 0.0;
            for i in 0..n - t {
                s += (c[i] - mean) * (c[i + t] - mean);
            }
            sum += s / nf;
        }
        sum / m
    };
    let rho = |t: usize| 1.0 - (w - acov(t)) / var_plus;

    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0usize;
    while t + 1 < n {
        let pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        prev_pair = pair;
        tau += 2.0 * pair;
        t += 2;
    }
    if tau <= 0.0 {
        return total;
    }
    (total / tau).min(total)
}

/// Tail ESS: minimum ESS of the 5% and 95% quantile indicator series.
fn tail_ess(chains: &[Vec<f64>]) -> f64 {
    let mut pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
    let q05 = quantile_type7(&pooled, 0.05);
    let q95 = quantile_type7(&pooled, 0.95);
    let indicator = |cut: f64, lower: bool| -> Vec<Vec<f64>> {
        chains
            .iter()
            .map(|c| {
                c.iter()
                    .map(|&x| f64::from(if lower { x <= cut } else { x >= cut }))
                    .collect()
            })
            .collect()
    };
    let low = indicator(q05, true);
    let high = indicator(q95, false);
    let constant = |cs: &[Vec<f64>]| cs.iter().flatten().all(|&x| x == cs[0][0]);
    let ess_low = if constant(&low) { f64::NAN } else { combined_ess(&low) };
    let ess_high = if constant(&high) { f64::NAN } else { combined_ess(&high) };
    match (ess_low.is_nan(), ess_high.is_nan()) {
        (true, true) => f64::NAN,
        (true, false) => ess_high,
        (false, true) => ess_low,
        (false, false) => ess_low.min(ess_high),
    }
}

/// Kolmogorov-Smirnov distance between sorted samples and a reference CDF.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!sorted.is_empty(), "KS statistic of empty sample");
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max((f - (i as f64 + 1.0) / n).abs());
    }
    d
}
