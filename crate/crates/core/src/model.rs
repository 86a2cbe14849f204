//! Domain types and the customer-behavior predictor.
//!
//! A journey is an ordered sequence of channel touches ending in one observed
//! outcome. The linear predictor combines a baseline, an optional per-customer
//! random effect, exponentially decaying per-touch main effects, and a
//! symmetric pairwise interaction between decayed effects:
//!
//! `eta = mu + b_i + sum_t beta[c_t] * lambda[c_t]^Delta_t
//!      + gamma * sum_{t != t'} (beta[c_t] lambda[c_t]^Delta_t)(beta[c_t'] lambda[c_t']^Delta_t')`
//!
//! where `Delta_t = eval_time - time_t` is the elapsed time since the touch,
//! in days. The pair sum runs over ordered pairs, so each unordered pair
//! contributes twice. It is evaluated as `S^2 - Q` with `S` the sum of decayed
//! effects and `Q` the sum of their squares, which is algebraically identical
//! to the double loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::sigmoid;

/// A marketing channel: dense id plus display name.
///
/// Ids are contiguous from 0 and names unique within a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub id: usize,
    pub name: String,
}

/// Validates a channel vocabulary: ids contiguous from 0, names unique.
pub fn validate_channel_vocab(channels: &[Channel]) -> Result<()> {
    for (i, ch) in channels.iter().enumerate() {
        if ch.id != i {
            return Err(Error::InvalidInput(format!(
                "channel ids must be contiguous from 0: position {i} has id {}",
                ch.id
            )));
        }
        if channels[..i].iter().any(|c| c.name == ch.name) {
            return Err(Error::InvalidInput(format!(
                "duplicate channel name {:?}",
                ch.name
            )));
        }
    }
    Ok(())
}

/// One interaction between a customer and a channel, at `time` days since
/// journey start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Touch {
    pub channel: usize,
    pub time: f64,
}

/// One customer's ordered touch sequence plus the terminal outcome.
///
/// Construction enforces the invariants: at least one touch, finite
/// non-negative times sorted non-decreasingly, and an evaluation time no
/// earlier than the last touch. `customer_index` is the dense index into the
/// random-effect vector, assigned by whichever loader built the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Journey {
    customer_id: String,
    customer_index: usize,
    touches: Vec<Touch>,
    outcome: f64,
    eval_time: f64,
}

impl Journey {
    /// Builds a journey, validating all invariants.
    ///
    /// `eval_time = None` defaults to the last touch time, so the most recent
    /// touch contributes its full base magnitude.
    pub fn new(
        customer_id: impl Into<String>,
        customer_index: usize,
        touches: Vec<Touch>,
        outcome: f64,
        eval_time: Option<f64>,
    ) -> Result<Self> {
        let customer_id = customer_id.into();
        if touches.is_empty() {
            return Err(Error::InvalidInput(format!(
                "journey {customer_id:?} has no touches"
            )));
        }
        let mut prev = 0.0f64;
        for (i, t) in touches.iter().enumerate() {
            if !t.time.is_finite() || t.time < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "journey {customer_id:?}: touch {i} has invalid time {}",
                    t.time
                )));
            }
            if t.time < prev {
                return Err(Error::InvalidInput(format!(
                    "journey {customer_id:?}: touch times not sorted at position {i}"
                )));
            }
            prev = t.time;
        }
        let last = touches.last().expect("non-empty").time;
        let eval_time = eval_time.unwrap_or(last);
        if !eval_time.is_finite() || eval_time < last {
            return Err(Error::InvalidInput(format!(
                "journey {customer_id:?}: eval_time {eval_time} earlier than last touch {last}"
            )));
        }
        if !outcome.is_finite() {
            return Err(Error::InvalidInput(format!(
                "journey {customer_id:?}: non-finite outcome"
            )));
        }
        Ok(Self {
            customer_id,
            customer_index,
            touches,
            outcome,
            eval_time,
        })
    }

    pub fn customer_id(&self) -> &str {
        &self.customer_id
    }

    pub fn customer_index(&self) -> usize {
        self.customer_index
    }

    pub fn touches(&self) -> &[Touch] {
        &self.touches
    }

    pub fn outcome(&self) -> f64 {
        self.outcome
    }

    pub fn eval_time(&self) -> f64 {
        self.eval_time
    }

    /// Same journey with a replaced outcome (used by the simulator once the
    /// predictor is known).
    pub fn with_outcome(mut self, outcome: f64) -> Result<Self> {
        if !outcome.is_finite() {
            return Err(Error::InvalidInput(format!(
                "journey {:?}: non-finite outcome",
                self.customer_id
            )));
        }
        self.outcome = outcome;
        Ok(self)
    }

    /// Same journey with a re-assigned dense customer index (used after
    /// preprocessing drops customers).
    pub fn with_customer_index(mut self, index: usize) -> Self {
        self.customer_index = index;
        self
    }
}

/// Link function mapping the predictor to the outcome scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    /// Regression on a real-valued outcome with Gaussian noise.
    Identity,
    /// Sigmoid link for a binary conversion outcome.
    Logit,
}

impl std::fmt::Display for Link {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Link::Identity => write!(f, "identity"),
            Link::Logit => write!(f, "logit"),
        }
    }
}

impl std::str::FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Link::Identity),
            "logit" => Ok(Link::Logit),
            other => Err(Error::InvalidInput(format!(
                "unknown link {other:?} (expected \"identity\" or \"logit\")"
            ))),
        }
    }
}

/// Structural switches of the behavior model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_channels: usize,
    pub link: Link,
    pub include_random_effects: bool,
    pub include_interaction: bool,
}

impl ModelSpec {
    pub fn new(n_channels: usize, link: Link) -> Self {
        Self {
            n_channels,
            link,
            include_random_effects: false,
            include_interaction: true,
        }
    }

    pub fn with_random_effects(mut self, on: bool) -> Self {
        self.include_random_effects = on;
        self
    }

    pub fn with_interaction(mut self, on: bool) -> Self {
        self.include_interaction = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 {
            return Err(Error::InvalidInput("model needs at least 1 channel".into()));
        }
        Ok(())
    }
}

/// Full parameter vector of the behavior model, in constrained space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Baseline propensity shared by all customers.
    pub mu: f64,
    /// Strength and sign of the pairwise interaction between decayed effects.
    pub gamma: f64,
    /// Per-channel base magnitudes, each >= 0.
    pub beta: Vec<f64>,
    /// Per-channel decay retained per day, each strictly in (0, 1).
    pub lambda: Vec<f64>,
    /// Per-customer random effects (empty when the model excludes them).
    pub b: Vec<f64>,
    /// Scale of the random effects, > 0.
    pub sigma_b: f64,
    /// Observation noise scale under the identity link, > 0.
    pub sigma_y: f64,
}

impl ModelParams {
    /// Neutral parameters: zero effects, lambda 0.5, unit scales.
    pub fn neutral(n_channels: usize, n_customers: usize) -> Self {
        Self {
            mu: 0.0,
            gamma: 0.0,
            beta: vec![0.0; n_channels],
            lambda: vec![0.5; n_channels],
            b: vec![0.0; n_customers],
            sigma_b: 1.0,
            sigma_y: 1.0,
        }
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.beta.len() != spec.n_channels || self.lambda.len() != spec.n_channels {
            return Err(Error::InvalidInput(format!(
                "parameter vectors sized {}/{} but model has {} channels",
                self.beta.len(),
                self.lambda.len(),
                spec.n_channels
            )));
        }
        for (c, &b) in self.beta.iter().enumerate() {
            if !b.is_finite() || b < 0.0 {
                return Err(Error::InvalidInput(format!("beta[{c}] = {b} must be >= 0")));
            }
        }
        for (c, &l) in self.lambda.iter().enumerate() {
            if !(l > 0.0 && l < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "lambda[{c}] = {l} must be in (0,1)"
                )));
            }
        }
        if !(self.sigma_b > 0.0) || !self.sigma_b.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sigma_b = {} must be > 0",
                self.sigma_b
            )));
        }
        if !(self.sigma_y > 0.0) || !self.sigma_y.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sigma_y = {} must be > 0",
                self.sigma_y
            )));
        }
        Ok(())
    }
}

/// Decay weight `lambda^delta`, computed as `exp(delta * ln(lambda))`.
///
/// For lambda in (0,1) and delta >= 0 the result is in (0, 1].
#[inline]
pub(crate) fn decay_weight(ln_lambda: f64, delta: f64) -> f64 {
    (delta * ln_lambda).exp()
}

/// Sum `S` and square-sum `Q` of decayed touch effects, optionally skipping
/// every touch of one channel (the removal counterfactual).
pub(crate) fn effect_sums(
    journey: &Journey,
    params: &ModelParams,
    spec: &ModelSpec,
    skip_channel: Option<usize>,
) -> Result<(f64, f64)> {
    let mut s = 0.0;
    let mut q = 0.0;
    for touch in journey.touches() {
        let c = touch.channel;
        if c >= spec.n_channels || c >= params.beta.len() {
            return Err(Error::ChannelOutOfRange {
                id: c,
                n_channels: spec.n_channels.min(params.beta.len()),
            });
        }
        if skip_channel == Some(c) {
            continue;
        }
        let delta = journey.eval_time() - touch.time;
        let u = params.beta[c] * decay_weight(params.lambda[c].ln(), delta);
        s += u;
        q += u * u;
    }
    Ok((s, q))
}

pub(crate) fn predictor_from_sums(
    journey: &Journey,
    params: &ModelParams,
    spec: &ModelSpec,
    s: f64,
    q: f64,
) -> Result<f64> {
    let mut eta = params.mu + s;
    if spec.include_interaction {
        eta += params.gamma * (s * s - q);
    }
    if spec.include_random_effects {
        let i = journey.customer_index();
        let b = *params.b.get(i).ok_or(Error::CustomerOutOfRange {
            index: i,
            n_customers: params.b.len(),
        })?;
        eta += b;
    }
    if !eta.is_finite() {
        return Err(Error::NonFinite {
            context: format!(
                "linear predictor for customer {:?} (mu={}, gamma={}, S={s}, Q={q})",
                journey.customer_id(),
                params.mu,
                params.gamma
            ),
        });
    }
    Ok(eta)
}

/// The argument of the link function for one journey.
pub fn linear_predictor(journey: &Journey, params: &ModelParams, spec: &ModelSpec) -> Result<f64> {
    let (s, q) = effect_sums(journey, params, spec, None)?;
    predictor_from_sums(journey, params, spec, s, q)
}

/// Maps a finite predictor through the link. Total on finite input.
#[inline]
pub fn apply_link(eta: f64, link: Link) -> f64 {
    match link {
        Link::Identity => eta,
        Link::Logit => sigmoid(eta),
    }
}

/// Predicted outcome for one journey: a probability in (0,1) under the logit
/// link, the raw predictor under identity.
pub fn predict(journey: &Journey, params: &ModelParams, spec: &ModelSpec) -> Result<f64> {
    Ok(apply_link(linear_predictor(journey, params, spec)?, spec.link))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn one_channel_spec() -> ModelSpec {
        ModelSpec::new(1, Link::Identity).with_random_effects(true)
    }

    fn journey(touches: Vec<Touch>, eval: Option<f64>) -> Journey {
        Journey::new("c0", 0, touches, 0.0, eval).unwrap()
    }

    /// Direct double-loop evaluation over ordered pairs, used as the oracle
    /// for the S^2 - Q form.
    fn naive_predictor(journey: &Journey, params: &ModelParams, spec: &ModelSpec) -> f64 {
        let w: Vec<f64> = journey
            .touches()
            .iter()
            .map(|t| {
                params.beta[t.channel]
                    * params.lambda[t.channel].powf(journey.eval_time() - t.time)
            })
            .collect();
        let mut eta = params.mu;
        if spec.include_random_effects {
            eta += params.b[journey.customer_index()];
        }
        for &wi in &w {
            eta += wi;
        }
        if spec.include_interaction {
            for (i, &wi) in w.iter().enumerate() {
                for (j, &wj) in w.iter().enumerate() {
                    if i != j {
                        eta += params.gamma * wi * wj;
                    }
                }
            }
        }
        eta
    }

    #[test]
    fn single_touch_hand_value() {
        // One touch at delta 1 with beta 0.5, lambda 0.5: 0.5 * 0.5^1 = 0.25.
        let spec = one_channel_spec();
        let mut params = ModelParams::neutral(1, 1);
        params.beta[0] = 0.5;
        params.lambda[0] = 0.5;
        let j = journey(vec![Touch { channel: 0, time: 0.0 }], Some(1.0));
        assert_abs_diff_eq!(
            linear_predictor(&j, &params, &spec).unwrap(),
            0.25,
            epsilon = 1e-15
        );
    }

    #[test]
    fn baseline_terms_survive_zero_betas() {
        let spec = one_channel_spec();
        let mut params = ModelParams::neutral(1, 1);
        params.mu = 2.0;
        params.b[0] = -0.5;
        let j = journey(vec![Touch { channel: 0, time: 0.0 }], Some(3.0));
        assert_abs_diff_eq!(
            linear_predictor(&j, &params, &spec).unwrap(),
            1.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn two_touch_interaction_matches_ordered_pair_oracle() {
        // A at t=0, B at t=1, eval at 1: main 0.65, pair term 2 * 0.25 * 0.4.
        let spec = ModelSpec::new(2, Link::Identity);
        let mut params = ModelParams::neutral(2, 0);
        params.beta = vec![0.5, 0.4];
        params.lambda = vec![0.5, 0.8];
        params.gamma = 1.0;
        let j = journey(
            vec![Touch { channel: 0, time: 0.0 }, Touch { channel: 1, time: 1.0 }],
            Some(1.0),
        );
        let eta = linear_predictor(&j, &params, &spec).unwrap();
        assert_abs_diff_eq!(eta, 0.85, epsilon = 1e-12);
        assert_abs_diff_eq!(eta, naive_predictor(&j, &params, &spec), epsilon = 1e-12);
    }

    #[test]
    fn channel_out_of_range_is_rejected() {
        let spec = ModelSpec::new(1, Link::Identity);
        let params = ModelParams::neutral(1, 0);
        let j = journey(vec![Touch { channel: 3, time: 0.0 }], None);
        assert!(matches!(
            linear_predictor(&j, &params, &spec),
            Err(Error::ChannelOutOfRange { id: 3, .. })
        ));
    }

    #[test]
    fn apply_link_examples() {
        assert_abs_diff_eq!(apply_link(0.0, Link::Logit), 0.5, epsilon = 1e-15);
        assert_eq!(apply_link(3.7, Link::Identity), 3.7);
        let tail = apply_link(-40.0, Link::Logit);
        assert!(tail > 0.0 && tail <= 1e-17, "got {tail}");
    }

    #[test]
    fn predict_composes_predictor_and_link() {
        let spec = ModelSpec::new(1, Link::Logit).with_random_effects(true);
        let mut params = ModelParams::neutral(1, 1);
        params.beta[0] = 0.5;
        params.lambda[0] = 0.5;
        let j = journey(vec![Touch { channel: 0, time: 0.0 }], Some(1.0));
        assert_abs_diff_eq!(
            predict(&j, &params, &spec).unwrap(),
            1.0 / (1.0 + (-0.25f64).exp()),
            epsilon = 1e-12
        );

        let zero = ModelParams::neutral(1, 1);
        assert_abs_diff_eq!(predict(&j, &zero, &spec).unwrap(), 0.5, epsilon = 1e-15);

        let ident = ModelSpec::new(1, Link::Identity).with_random_effects(true);
        assert_abs_diff_eq!(
            predict(&j, &params, &ident).unwrap(),
            linear_predictor(&j, &params, &ident).unwrap(),
            epsilon = 0.0
        );
    }

    #[test]
    fn journey_invariants_enforced() {
        assert!(Journey::new("x", 0, vec![], 0.0, None).is_err());
        assert!(Journey::new("x", 0, vec![Touch { channel: 0, time: -1.0 }], 0.0, None).is_err());
        assert!(Journey::new(
            "x",
            0,
            vec![Touch { channel: 0, time: 2.0 }, Touch { channel: 0, time: 1.0 }],
            0.0,
            None
        )
        .is_err());
        assert!(
            Journey::new("x", 0, vec![Touch { channel: 0, time: 2.0 }], 0.0, Some(1.0)).is_err()
        );
    }

    #[test]
    fn predictor_decays_to_baseline_at_infinity() {
        let spec = ModelSpec::new(2, Link::Identity).with_random_effects(true);
        let mut params = ModelParams::neutral(2, 1);
        params.mu = 0.3;
        params.b[0] = -0.1;
        params.gamma = 0.7;
        params.beta = vec![0.9, 0.4];
        params.lambda = vec![0.6, 0.2];
        let touches = vec![Touch { channel: 0, time: 0.0 }, Touch { channel: 1, time: 1.0 }];
        let far = journey(touches, Some(1e4));
        assert_abs_diff_eq!(
            linear_predictor(&far, &params, &spec).unwrap(),
            0.2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn validate_channel_vocab_rejects_bad_vocabs() {
        let ok = vec![
            Channel { id: 0, name: "a".into() },
            Channel { id: 1, name: "b".into() },
        ];
        assert!(validate_channel_vocab(&ok).is_ok());
        let dup = vec![
            Channel { id: 0, name: "a".into() },
            Channel { id: 1, name: "a".into() },
        ];
        assert!(validate_channel_vocab(&dup).is_err());
        let gap = vec![Channel { id: 1, name: "a".into() }];
        assert!(validate_channel_vocab(&gap).is_err());
    }

    prop_compose! {
        fn arb_params_and_touches()(
            betas in proptest::collection::vec(0.0f64..2.0, 3),
            lambdas in proptest::collection::vec(0.01f64..0.99, 3),
            gamma in -1.5f64..1.5,
            mu in -1.0f64..1.0,
            raw_times in proptest::collection::vec(0.0f64..5.0, 1..8),
            channels in proptest::collection::vec(0usize..3, 8),
        ) -> (ModelParams, Vec<Touch>) {
            let mut params = ModelParams::neutral(3, 0);
            params.beta = betas;
            params.lambda = lambdas;
            params.gamma = gamma;
            params.mu = mu;
            let mut times = raw_times;
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let touches: Vec<Touch> = times
                .iter()
                .zip(channels.iter())
                .map(|(&time, &channel)| Touch { channel, time })
                .collect();
            (params, touches)
        }
    }

    proptest! {
        #[test]
        fn matches_naive_double_loop((params, touches) in arb_params_and_touches()) {
            let spec = ModelSpec::new(3, Link::Identity);
            let j = Journey::new("p", 0, touches, 0.0, Some(6.0)).unwrap();
            let fast = linear_predictor(&j, &params, &spec).unwrap();
            let slow = naive_predictor(&j, &params, &spec);
            prop_assert!((fast - slow).abs() <= 1e-10 * (1.0 + slow.abs()));
        }

        #[test]
        fn touch_order_within_equal_times_is_irrelevant(
            (params, touches) in arb_params_and_touches()
        ) {
            // Collapse all times to one value so any permutation stays sorted.
            let spec = ModelSpec::new(3, Link::Identity);
            let flat: Vec<Touch> = touches
                .iter()
                .map(|t| Touch { channel: t.channel, time: 1.0 })
                .collect();
            let mut reversed = flat.clone();
            reversed.reverse();
            let a = Journey::new("p", 0, flat, 0.0, Some(2.0)).unwrap();
            let b = Journey::new("p", 0, reversed, 0.0, Some(2.0)).unwrap();
            let ea = linear_predictor(&a, &params, &spec).unwrap();
            let eb = linear_predictor(&b, &params, &spec).unwrap();
            prop_assert!((ea - eb).abs() <= 1e-12 * (1.0 + ea.abs()));
        }

        #[test]
        fn monotone_in_beta_for_nonnegative_gamma(
            (mut params, touches) in arb_params_and_touches()
        ) {
            params.gamma = params.gamma.abs();
            let spec = ModelSpec::new(3, Link::Identity);
            let j = Journey::new("p", 0, touches, 0.0, Some(6.0)).unwrap();
            let base = linear_predictor(&j, &params, &spec).unwrap();
            let mut bumped = params.clone();
            bumped.beta[0] += 0.5;
            let more = linear_predictor(&j, &bumped, &spec).unwrap();
            prop_assert!(more >= base - 1e-12);
        }

        #[test]
        fn additive_without_interaction((mut params, touches) in arb_params_and_touches()) {
            params.gamma = 0.0;
            let spec = ModelSpec::new(3, Link::Identity).with_interaction(false);
            prop_assume!(touches.len() >= 2);
            let split = touches.len() / 2;
            // Give both halves the same eval_time so per-touch deltas agree.
            let eval = Some(7.0);
            let whole = Journey::new("p", 0, touches.clone(), 0.0, eval).unwrap();
            let left = Journey::new("p", 0, touches[..split].to_vec(), 0.0, eval).unwrap();
            let right = Journey::new("p", 0, touches[split..].to_vec(), 0.0, eval).unwrap();
            let ew = linear_predictor(&whole, &params, &spec).unwrap();
            let el = linear_predictor(&left, &params, &spec).unwrap();
            let er = linear_predictor(&right, &params, &spec).unwrap();
            prop_assert!((ew - (el + er - params.mu)).abs() <= 1e-10 * (1.0 + ew.abs()));
        }

        #[test]
        fn decay_weight_in_unit_interval(lambda in 1e-6f64..0.999_999, delta in 0.0f64..50.0) {
            let w = decay_weight(lambda.ln(), delta);
            prop_assert!(w > 0.0 && w <= 1.0);
        }
    }
}
