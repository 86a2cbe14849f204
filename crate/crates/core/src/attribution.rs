//! Per-channel attribution as posterior removal effects.
//!
//! The removal effect of channel `c` on one journey is the change in the
//! predicted outcome when every touch of `c` is deleted (the channel-level
//! counterfactual); a channel's attribution is the sum of its removal
//! effects over all journeys, computed per posterior draw so the credit is
//! itself a posterior distribution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::ParamLayout;
use crate::math::quantile_type7;
use crate::model::{apply_link, effect_sums, predictor_from_sums, Journey, Link, ModelParams, ModelSpec};
use crate::sampler::PosteriorDraws;

/// Draws kept for attribution by default; see [`attribute`].
pub const DEFAULT_MAX_DRAWS: usize = 500;

/// Posterior attribution of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelAttribution {
    pub channel: String,
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub q97_5: f64,
    /// Total removal effect per kept posterior draw.
    pub draws: Vec<f64>,
}

/// Per-channel posterior distributions of summed removal effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub link: Link,
    pub n_journeys: usize,
    pub n_draws_used: usize,
    pub channels: Vec<ChannelAttribution>,
}

/// Change in the predicted outcome when every touch of `channel` is removed
/// from the journey. Exactly 0 when the journey has no touch of the channel
/// or when the channel's base magnitude is 0; with an emptied journey the
/// counterfactual predictor falls back to `mu + b_i`.
pub fn removal_effect(
    journey: &Journey,
    params: &ModelParams,
    spec: &ModelSpec,
    channel: usize,
) -> Result<f64> {
    if channel >= spec.n_channels {
        return Err(Error::ChannelOutOfRange { id: channel, n_channels: spec.n_channels });
    }
    if !journey.touches().iter().any(|t| t.channel == channel) {
        return Ok(0.0);
    }
    let (s, q) = effect_sums(journey, params, spec, None)?;
    let (s_without, q_without) = effect_sums(journey, params, spec, Some(channel))?;
    if params.beta[channel] == 0.0 {
        // Every removed term carries a factor beta = 0.
        return Ok(0.0);
    }
    let with = predictor_from_sums(journey, params, spec, s, q)?;
    let without = predictor_from_sums(journey, params, spec, s_without, q_without)?;
    Ok(apply_link(with, spec.link) - apply_link(without, spec.link))
}

/// Sums removal effects over the dataset for every channel and posterior
/// draw. When the posterior holds more than `max_draws` draws they are
/// thinned to an even stride for cost control.
pub fn attribute(
    journeys: &[Journey],
    draws: &PosteriorDraws,
    spec: &ModelSpec,
    channel_names: &[String],
    max_draws: usize,
) -> Result<AttributionReport> {
    spec.validate()?;
    if draws.total_draws() == 0 {
        return Err(Error::EmptyDataset("no posterior draws".into()));
    }
    if max_draws == 0 {
        return Err(Error::InvalidInput("max_draws must be >= 1".into()));
    }
    if channel_names.len() != spec.n_channels {
        return Err(Error::InvalidInput(format!(
            "{} channel names for {} channels",
            channel_names.len(),
            spec.n_channels
        )));
    }
    let layout = ParamLayout::infer(spec, draws.dim)?;

    let total = draws.total_draws();
    let stride = total.div_ceil(max_draws);
    let kept: Vec<usize> = (0..total).step_by(stride).collect();

    let per_draw: Vec<Vec<f64>> = kept
        .par_iter()
        .map(|&flat| -> Result<Vec<f64>> {
            let params = layout.unflatten(draws.row(flat))?;
            let mut sums = vec![0.0; spec.n_channels];
            for journey in journeys {
                for (c, sum) in sums.iter_mut().enumerate() {
                    *sum += removal_effect(journey, &params, spec, c)?;
                }
            }
            Ok(sums)
        })
        .collect::<Result<_>>()?;

    let channels = (0..spec.n_channels)
        .map(|c| {
            let values: Vec<f64> = per_draw.iter().map(|row| row[c]).collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let sd = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite attribution"));
            ChannelAttribution {
                channel: channel_names[c].clone(),
                mean,
                sd,
                q2_5: quantile_type7(&sorted, 0.025),
                q97_5: quantile_type7(&sorted, 0.975),
                draws: values,
            }
        })
        .collect();

    Ok(AttributionReport {
        link: spec.link,
        n_journeys: journeys.len(),
        n_draws_used: kept.len(),
        channels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Touch;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn journey(touches: Vec<Touch>, eval: Option<f64>) -> Journey {
        Journey::new("c0", 0, touches, 0.0, eval).unwrap()
    }

    fn params3(rng: &mut impl Rng) -> ModelParams {
        ModelParams {
            mu: rng.random_range(-0.5..0.5),
            gamma: rng.random_range(-0.8..0.8),
            beta: (0..3).map(|_| rng.random_range(0.1..1.0)).collect(),
            lambda: (0..3).map(|_| rng.random_range(0.1..0.9)).collect(),
            b: Vec::new(),
            sigma_b: 1.0,
            sigma_y: 0.5,
        }
    }

    #[test]
    fn absent_channel_removes_nothing() {
        let spec = ModelSpec::new(3, Link::Logit);
        let params = params3(&mut crate::rng::stream_rng(1, 0));
        let j = journey(
            vec![Touch { channel: 0, time: 0.0 }, Touch { channel: 1, time: 0.5 }],
            None,
        );
        assert_eq!(removal_effect(&j, &params, &spec, 2).unwrap(), 0.0);
    }

    #[test]
    fn zero_magnitude_channel_removes_nothing() {
        let spec = ModelSpec::new(3, Link::Logit);
        let mut params = params3(&mut crate::rng::stream_rng(2, 0));
        params.beta[1] = 0.0;
        let j = journey(
            vec![Touch { channel: 1, time: 0.0 }, Touch { channel: 0, time: 1.0 }],
            None,
        );
        assert_eq!(removal_effect(&j, &params, &spec, 1).unwrap(), 0.0);
    }

    #[test]
    fn single_touch_sigmoid_hand_value() {
        // g(1) - g(0) with one touch at delta 0 and beta 1.
        let spec = ModelSpec::new(1, Link::Logit);
        let mut params = ModelParams::neutral(1, 0);
        params.beta[0] = 1.0;
        let j = journey(vec![Touch { channel: 0, time: 0.0 }], None);
        let effect = removal_effect(&j, &params, &spec, 0).unwrap();
        assert_abs_diff_eq!(effect, 1.0 / (1.0 + (-1.0f64).exp()) - 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(effect, 0.2311, epsilon = 1e-4);
    }

    #[test]
    fn logit_removal_effects_are_bounded() {
        let spec = ModelSpec::new(3, Link::Logit);
        let mut rng = crate::rng::stream_rng(3, 0);
        for _ in 0..50 {
            let params = params3(&mut rng);
            let j = journey(
                (0..4)
                    .map(|k| Touch { channel: rng.random_range(0..3), time: k as f64 * 0.5 })
                    .collect(),
                None,
            );
            for c in 0..3 {
                let e = removal_effect(&j, &params, &spec, c).unwrap();
                assert!(e > -1.0 && e < 1.0);
            }
        }
    }

    #[test]
    fn additive_channel_effects_without_interaction() {
        // gamma = 0 and identity link: removal effect of c equals c's own
        // decayed mass, regardless of other channels' touches.
        let spec = ModelSpec::new(3, Link::Identity);
        let mut rng = crate::rng::stream_rng(4, 0);
        let mut params = params3(&mut rng);
        params.gamma = 0.0;
        let mine = vec![Touch { channel: 0, time: 0.0 }, Touch { channel: 0, time: 1.0 }];
        let mut with_others = mine.clone();
        with_others.push(Touch { channel: 1, time: 1.5 });
        with_others.push(Touch { channel: 2, time: 2.0 });
        let eval = Some(3.0);
        let alone = journey(mine, eval);
        let crowded = journey(with_others, eval);
        let a = removal_effect(&alone, &params, &spec, 0).unwrap();
        let b = removal_effect(&crowded, &params, &spec, 0).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        let expected: f64 = (0..2)
            .map(|k| params.beta[0] * params.lambda[0].powf(3.0 - k as f64))
            .sum();
        assert_abs_diff_eq!(a, expected, epsilon = 1e-12);
    }

    fn draws_with_rows(names: Vec<String>, rows: Vec<Vec<f64>>) -> PosteriorDraws {
        let n_samples = rows.len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        PosteriorDraws::from_values(names, 1, n_samples, flat).unwrap()
    }

    #[test]
    fn report_on_single_draw_equals_removal_effect() {
        let spec = ModelSpec::new(2, Link::Logit);
        let layout = ParamLayout::new(&spec, 0);
        let mut params = ModelParams::neutral(2, 0);
        params.beta = vec![0.8, 0.3];
        params.lambda = vec![0.5, 0.5];
        let names = layout.names(&["a".to_string(), "b".to_string()], &[]);
        let draws = draws_with_rows(names, vec![layout.flatten(&params)]);
        let journeys = vec![journey(vec![Touch { channel: 0, time: 0.0 }], None)];
        let report = attribute(
            &journeys,
            &draws,
            &spec,
            &["a".to_string(), "b".to_string()],
            DEFAULT_MAX_DRAWS,
        )
        .unwrap();
        let direct = removal_effect(&journeys[0], &params, &spec, 0).unwrap();
        assert_eq!(report.n_draws_used, 1);
        assert_abs_diff_eq!(report.channels[0].mean, direct, epsilon = 1e-15);
        assert_eq!(report.channels[1].draws, vec![0.0]);
    }

    #[test]
    fn attribution_matches_closed_form_additive_oracle() {
        // 3 channels, gamma = 0, identity link: attribution of c is the sum
        // of beta_c * lambda_c^delta over c's touches.
        let spec = ModelSpec::new(3, Link::Identity).with_interaction(false);
        let layout = ParamLayout::new(&spec, 0);
        let mut rng = crate::rng::stream_rng(6, 0);
        let sim = crate::simulator::SimConfig {
            n_journeys: 40,
            n_channels: 3,
            touches_per_journey: 4,
            link: Link::Identity,
            seed: 12,
            ..crate::simulator::SimConfig::default()
        };
        let (journeys, _) = crate::simulator::simulate_dataset(&sim).unwrap();
        let names = layout.names(&crate::simulator::default_channel_names(3), &[]);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                let mut p = params3(&mut rng);
                p.gamma = 0.0;
                layout.flatten(&p)
            })
            .collect();
        let draws = draws_with_rows(names, rows.clone());
        let report = attribute(
            &journeys,
            &draws,
            &spec,
            &crate::simulator::default_channel_names(3),
            DEFAULT_MAX_DRAWS,
        )
        .unwrap();
        for (d, row) in rows.iter().enumerate() {
            let params = layout.unflatten(row).unwrap();
            for c in 0..3 {
                let mut oracle = 0.0;
                for j in &journeys {
                    for t in j.touches().iter().filter(|t| t.channel == c) {
                        oracle += params.beta[c] * params.lambda[c].powf(j.eval_time() - t.time);
                    }
                }
                assert_abs_diff_eq!(report.channels[c].draws[d], oracle, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn thinning_keeps_an_even_stride() {
        let spec = ModelSpec::new(1, Link::Logit);
        let layout = ParamLayout::new(&spec, 0);
        let names = layout.names(&["a".to_string()], &[]);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let mut p = ModelParams::neutral(1, 0);
                p.beta[0] = 0.1 + i as f64 * 0.01;
                layout.flatten(&p)
            })
            .collect();
        let draws = draws_with_rows(names, rows);
        let journeys = vec![journey(vec![Touch { channel: 0, time: 0.0 }], None)];
        let report =
            attribute(&journeys, &draws, &spec, &["a".to_string()], 5).unwrap();
        assert_eq!(report.n_draws_used, 5);
    }
}
