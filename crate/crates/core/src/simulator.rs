//! Synthetic journey generation with known ground-truth parameters.
//!
//! Journeys are generated independently per index from the stream-split RNG
//! (`stream 0` draws the true parameters, `stream 1 + j` drives journey `j`),
//! so a given `SimConfig` yields a bit-identical dataset regardless of
//! parallelism.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{predict, Journey, Link, ModelParams, ModelSpec, Touch};
use crate::rng::stream_rng;

/// Synthetic dataset shape and generation knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_journeys: usize,
    pub n_channels: usize,
    /// Every journey gets exactly this many touches.
    pub touches_per_journey: usize,
    /// Rate of the exponential inter-event time, in 1/days.
    pub inter_event_rate: f64,
    pub link: Link,
    pub seed: u64,
    /// Observation noise under the identity link. Zero disables the noise
    /// term entirely (outcomes equal the predictor exactly).
    pub sigma_y: f64,
    /// Replaces the sampled structural parameters (`mu`, `gamma`, `beta`,
    /// `lambda`, `b`, `sigma_b`) when present. The noise level always comes
    /// from `sigma_y` above.
    pub param_overrides: Option<ModelParams>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_journeys: 10_000,
            n_channels: 5,
            touches_per_journey: 10,
            inter_event_rate: 1.0,
            link: Link::Identity,
            seed: 0,
            sigma_y: 0.1,
            param_overrides: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_journeys == 0 {
            return Err(Error::InvalidInput("n_journeys must be >= 1".into()));
        }
        if self.n_channels == 0 {
            return Err(Error::InvalidInput("n_channels must be >= 1".into()));
        }
        if self.touches_per_journey == 0 {
            return Err(Error::InvalidInput("touches_per_journey must be >= 1".into()));
        }
        if !(self.inter_event_rate > 0.0) {
            return Err(Error::InvalidInput("inter_event_rate must be > 0".into()));
        }
        if !(self.sigma_y >= 0.0) || !self.sigma_y.is_finite() {
            return Err(Error::InvalidInput("sigma_y must be finite and >= 0".into()));
        }
        if let Some(p) = &self.param_overrides {
            p.validate(&self.model_spec())?;
        }
        Ok(())
    }

    /// Model structure the generated data follows: interaction on, no random
    /// effects or baseline (mu = 0, b = 0).
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec::new(self.n_channels, self.link)
    }
}

/// Default channel names used for simulated data: `ch0`, `ch1`, ...
pub fn default_channel_names(n_channels: usize) -> Vec<String> {
    (0..n_channels).map(|c| format!("ch{c}")).collect()
}

/// Draws ground-truth parameters: `beta_c ~ U(0,1)`, `lambda_c ~ U(0,1)`
/// (open interval), `gamma ~ N(0,1)`; baseline and random effects are zero.
pub fn sample_true_params(config: &SimConfig, rng: &mut impl Rng) -> ModelParams {
    let open_unit = |rng: &mut dyn rand::RngCore| loop {
        let v: f64 = rng.random();
        if v > 0.0 && v < 1.0 {
            return v;
        }
    };
    let beta: Vec<f64> = (0..config.n_channels).map(|_| rng.random::<f64>()).collect();
    let lambda: Vec<f64> = (0..config.n_channels).map(|_| open_unit(rng)).collect();
    let gamma: f64 = StandardNormal.sample(rng);
    ModelParams {
        mu: 0.0,
        gamma,
        beta,
        lambda,
        b: Vec::new(),
        sigma_b: 1.0,
        sigma_y: config.sigma_y.max(f64::MIN_POSITIVE),
    }
}

/// Generates the dataset and returns it along with the true parameters.
///
/// The first touch of every journey is at time 0; later gaps are exponential
/// with rate `inter_event_rate`; channels are uniform with replacement; the
/// outcome is evaluated at the last touch time.
pub fn simulate_dataset(config: &SimConfig) -> Result<(Vec<Journey>, ModelParams)> {
    config.validate()?;
    let params = match &config.param_overrides {
        Some(p) => {
            let mut p = p.clone();
            p.sigma_y = config.sigma_y.max(f64::MIN_POSITIVE);
            p
        }
        None => sample_true_params(config, &mut stream_rng(config.seed, 0)),
    };
    let spec = config.model_spec();
    let journeys: Vec<Journey> = (0..config.n_journeys)
        .into_par_iter()
        .map(|j| generate_journey(config, &params, &spec, j))
        .collect::<Result<_>>()?;
    Ok((journeys, params))
}

fn generate_journey(
    config: &SimConfig,
    params: &ModelParams,
    spec: &ModelSpec,
    index: usize,
) -> Result<Journey> {
    let mut rng = stream_rng(config.seed, 1 + index as u64);
    let gap = Exp::new(config.inter_event_rate)
        .map_err(|e| Error::InvalidInput(format!("inter_event_rate: {e}")))?;
    let mut time = 0.0;
    let mut touches = Vec::with_capacity(config.touches_per_journey);
    for k in 0..config.touches_per_journey {
        if k > 0 {
            time += gap.sample(&mut rng);
        }
        touches.push(Touch { channel: rng.random_range(0..config.n_channels), time });
    }
    let journey = Journey::new(format!("c{index}"), index, touches, 0.0, None)?;
    let p = predict(&journey, params, spec)?;
    let outcome = match config.link {
        Link::Identity => {
            if config.sigma_y > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                p + config.sigma_y * z
            } else {
                p
            }
        }
        Link::Logit => f64::from(rng.random::<f64>() < p),
    };
    journey.with_outcome(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn fixed_seed_reproduces_params_and_dataset() {
        let config = SimConfig {
            n_journeys: 50,
            n_channels: 4,
            touches_per_journey: 6,
            seed: 99,
            ..SimConfig::default()
        };
        let (a, pa) = simulate_dataset(&config).unwrap();
        let (b, pb) = simulate_dataset(&config).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(a, b);

        let p1 = sample_true_params(&config, &mut stream_rng(99, 0));
        let p2 = sample_true_params(&config, &mut stream_rng(99, 0));
        assert_eq!(p1, p2);
    }

    #[test]
    fn sampled_betas_average_near_half() {
        let config = SimConfig { n_channels: 10_000, ..SimConfig::default() };
        let params = sample_true_params(&config, &mut stream_rng(7, 0));
        let mean = params.beta.iter().sum::<f64>() / params.beta.len() as f64;
        assert!((0.47..=0.53).contains(&mean), "mean beta {mean}");
        assert!(params.lambda.iter().all(|&l| l > 0.0 && l < 1.0));
    }

    #[test]
    fn degenerate_model_gives_exactly_zero_outcomes() {
        let mut zeroed = ModelParams::neutral(2, 0);
        zeroed.beta = vec![0.0, 0.0];
        let config = SimConfig {
            n_journeys: 20,
            n_channels: 2,
            touches_per_journey: 1,
            link: Link::Identity,
            sigma_y: 0.0,
            param_overrides: Some(zeroed),
            ..SimConfig::default()
        };
        let (journeys, _) = simulate_dataset(&config).unwrap();
        assert!(journeys.iter().all(|j| j.outcome() == 0.0));
    }

    #[test]
    fn inter_event_gaps_match_exponential_mean() {
        let config = SimConfig {
            n_journeys: 10_000,
            n_channels: 3,
            touches_per_journey: 11,
            inter_event_rate: 1.0,
            seed: 3,
            ..SimConfig::default()
        };
        let (journeys, _) = simulate_dataset(&config).unwrap();
        let mut total = 0.0;
        let mut count = 0usize;
        for j in &journeys {
            for w in j.touches().windows(2) {
                total += w[1].time - w[0].time;
                count += 1;
            }
        }
        let mean = total / count as f64;
        assert!(count >= 100_000);
        assert!((0.99..=1.01).contains(&mean), "mean gap {mean}");
    }

    #[test]
    fn journeys_satisfy_invariants_and_have_fixed_length() {
        let config = SimConfig {
            n_journeys: 200,
            n_channels: 5,
            touches_per_journey: 10,
            seed: 17,
            ..SimConfig::default()
        };
        let (journeys, _) = simulate_dataset(&config).unwrap();
        for j in &journeys {
            assert_eq!(j.touches().len(), 10);
            assert_eq!(j.touches()[0].time, 0.0);
            assert_eq!(j.eval_time(), j.touches().last().unwrap().time);
        }
    }

    #[test]
    fn logit_outcome_rate_tracks_mean_probability() {
        let config = SimConfig {
            n_journeys: 10_000,
            n_channels: 5,
            touches_per_journey: 5,
            link: Link::Logit,
            seed: 21,
            ..SimConfig::default()
        };
        let (journeys, params) = simulate_dataset(&config).unwrap();
        let spec = config.model_spec();
        let mut expected = 0.0;
        let mut observed = 0.0;
        for j in &journeys {
            expected += predict(j, &params, &spec).unwrap();
            observed += j.outcome();
        }
        let n = journeys.len() as f64;
        let p = expected / n;
        let se = (p * (1.0 - p) / n).sqrt();
        assert!(
            (observed / n - p).abs() <= 3.0 * se,
            "rate {} vs mean prob {p}",
            observed / n
        );
    }
}
