//! Posterior summaries of draws pooled across chains.

use serde::{Deserialize, Serialize};

use super::PosteriorDraws;
use crate::error::{Error, Result};
use crate::math::quantile_type7;

/// Moments, type-7 quantiles, and the central-95% width of one parameter.
/// Decay parameters (names starting with `lambda`) also report the mean
/// half-life `ln(0.5) / ln(lambda)` over draws, in days.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q97_5: f64,
    pub width95: f64,
    pub half_life: Option<f64>,
}

/// Summarizes every parameter over all chains.
pub fn summarize(draws: &PosteriorDraws) -> Result<Vec<ParamSummary>> {
    if draws.total_draws() == 0 {
        return Err(Error::EmptyDataset("no draws to summarize".into()));
    }
    let n = draws.total_draws() as f64;
    let mut out = Vec::with_capacity(draws.dim);
    for p in 0..draws.dim {
        let values = draws.param_pooled(p);
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
        let q2_5 = quantile_type7(&sorted, 0.025);
        let q97_5 = quantile_type7(&sorted, 0.975);
        let name = draws.names[p].clone();
        let half_life = name.starts_with("lambda").then(|| {
            values.iter().map(|&l| 0.5f64.ln() / l.ln()).sum::<f64>() / n
        });
        out.push(ParamSummary {
            name,
            mean,
            sd,
            q2_5,
            q25: quantile_type7(&sorted, 0.25),
            median: quantile_type7(&sorted, 0.5),
            q75: quantile_type7(&sorted, 0.75),
            q97_5,
            width95: q97_5 - q2_5,
            half_life,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single_param(name: &str, chains: Vec<Vec<f64>>) -> PosteriorDraws {
        let n_chains = chains.len();
        let n_samples = chains[0].len();
        let flat: Vec<f64> = chains.into_iter().flatten().collect();
        PosteriorDraws::from_values(vec![name.into()], n_chains, n_samples, flat).unwrap()
    }

    #[test]
    fn constant_draws_have_zero_spread() {
        let d = single_param("mu", vec![vec![1.5; 20], vec![1.5; 20]]);
        let s = &summarize(&d).unwrap()[0];
        assert_eq!(s.sd, 0.0);
        assert_eq!(s.width95, 0.0);
        assert_eq!(s.mean, 1.5);
        assert!(s.half_life.is_none());
    }

    #[test]
    fn lambda_half_draws_give_unit_half_life() {
        let d = single_param("lambda[email]", vec![vec![0.5; 10]]);
        let s = &summarize(&d).unwrap()[0];
        assert_abs_diff_eq!(s.half_life.unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn uniform_grid_median_follows_interpolation() {
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let d = single_param("x", vec![grid]);
        let s = &summarize(&d).unwrap()[0];
        assert_abs_diff_eq!(s.median, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.q2_5, 0.025, epsilon = 1e-12);
        assert_abs_diff_eq!(s.q97_5, 0.975, epsilon = 1e-12);
        assert_abs_diff_eq!(s.width95, 0.95, epsilon = 1e-12);
    }
}
