//! Log-likelihood, log-prior, and log-posterior with analytic gradients over
//! an unconstrained reparameterization.
//!
//! Sampling happens in an unconstrained vector `theta` with fixed layout
//! (see [`ParamLayout`]): positivity constraints map through `exp`, the decay
//! parameters through the sigmoid, and random effects are non-centered
//! (`b_i = sigma_b * raw_i`). The log-posterior in `theta` space is the exact
//! sum `log_likelihood + log_prior + log_jacobian`, and
//! [`grad_log_posterior`] returns its analytic chain-rule gradient.
//!
//! All dataset sums are evaluated sequentially in journey order, so results
//! are deterministic for a fixed dataset order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log1pexp, log_sigmoid, logit, sigmoid, LN_2PI};
use crate::model::{Journey, Link, ModelParams, ModelSpec};

/// Distributional hyperparameters for every parameter block.
///
/// `sigma_b_rate` is the rate of the exponential prior on the random-effect
/// scale (mean `1/rate`), while `beta_scale` is the scale of the exponential
/// prior on each base magnitude (mean `scale`); the decay parameters carry a
/// flat Uniform(0,1) prior and contribute nothing to the log density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub sigma_b_rate: f64,
    pub beta_scale: f64,
    pub gamma_sd: f64,
    pub mu_sd: f64,
    /// Half-normal scale on the observation noise (identity link only).
    pub sigma_y_scale: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            sigma_b_rate: 0.5,
            beta_scale: 10.0,
            gamma_sd: 10.0,
            mu_sd: 10.0,
            sigma_y_scale: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_b_rate", self.sigma_b_rate),
            ("beta_scale", self.beta_scale),
            ("gamma_sd", self.gamma_sd),
            ("mu_sd", self.mu_sd),
            ("sigma_y_scale", self.sigma_y_scale),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "prior hyperparameter {name} = {v} must be > 0"
                )));
            }
        }
        Ok(())
    }
}

/// Fixed layout of the unconstrained vector:
///
/// `[mu, gamma, log beta (C), logit lambda (C), log sigma_b, raw b (N), log sigma_y]`
///
/// The `sigma_b`/`b` block is present only with random effects, `log sigma_y`
/// only under the identity link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub n_channels: usize,
    pub n_customers: usize,
    pub include_random_effects: bool,
    pub has_sigma_y: bool,
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec, n_customers: usize) -> Self {
        Self {
            n_channels: spec.n_channels,
            n_customers: if spec.include_random_effects { n_customers } else { 0 },
            include_random_effects: spec.include_random_effects,
            has_sigma_y: spec.link == Link::Identity,
        }
    }

    /// Recovers the layout from a spec and a vector dimension.
    pub fn infer(spec: &ModelSpec, dim: usize) -> Result<Self> {
        let fixed = 2 + 2 * spec.n_channels
            + usize::from(spec.link == Link::Identity)
            + usize::from(spec.include_random_effects);
        if dim < fixed || (!spec.include_random_effects && dim != fixed) {
            return Err(Error::InvalidInput(format!(
                "vector dimension {dim} inconsistent with model ({fixed} structural slots)"
            )));
        }
        let n_customers = if spec.include_random_effects { dim - fixed } else { 0 };
        Ok(Self::new(spec, n_customers))
    }

    pub fn dim(&self) -> usize {
        2 + 2 * self.n_channels
            + if self.include_random_effects { self.n_customers + 1 } else { 0 }
            + usize::from(self.has_sigma_y)
    }

    pub fn idx_mu(&self) -> usize {
        0
    }

    pub fn idx_gamma(&self) -> usize {
        1
    }

    pub fn beta_start(&self) -> usize {
        2
    }

    pub fn lambda_start(&self) -> usize {
        2 + self.n_channels
    }

    pub fn idx_sigma_b(&self) -> Option<usize> {
        self.include_random_effects.then(|| 2 + 2 * self.n_channels)
    }

    pub fn b_start(&self) -> Option<usize> {
        self.include_random_effects.then(|| 3 + 2 * self.n_channels)
    }

    pub fn idx_sigma_y(&self) -> Option<usize> {
        self.has_sigma_y.then(|| self.dim() - 1)
    }

    /// Column names in layout order, using channel and customer display names.
    pub fn names(&self, channel_names: &[String], customer_ids: &[String]) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        out.push("mu".into());
        out.push("gamma".into());
        let ch = |c: usize| {
            channel_names
                .get(c)
                .cloned()
                .unwrap_or_else(|| format!("ch{c}"))
        };
        for c in 0..self.n_channels {
            out.push(format!("beta[{}]", ch(c)));
        }
        for c in 0..self.n_channels {
            out.push(format!("lambda[{}]", ch(c)));
        }
        if self.include_random_effects {
            out.push("sigma_b".into());
            for i in 0..self.n_customers {
                let id = customer_ids
                    .get(i)
                    .cloned()
                    .unwrap_or_else(|| format!("{i}"));
                out.push(format!("b[{id}]"));
            }
        }
        if self.has_sigma_y {
            out.push("sigma_y".into());
        }
        out
    }

    /// Parses column names back into a layout plus the channel and customer
    /// display names. Inverse of [`ParamLayout::names`]; the link is inferred
    /// from the presence of `sigma_y`.
    pub fn from_names(names: &[String]) -> Result<(Self, Vec<String>, Vec<String>)> {
        let bad = |msg: String| Error::InvalidInput(format!("parameter columns: {msg}"));
        let inner = |name: &str, prefix: &str| -> Option<String> {
            name.strip_prefix(prefix)
                .and_then(|rest| rest.strip_suffix(']'))
                .map(str::to_owned)
        };
        let mut it = names.iter().peekable();
        if it.next().map(String::as_str) != Some("mu") {
            return Err(bad("expected leading \"mu\"".into()));
        }
        if it.next().map(String::as_str) != Some("gamma") {
            return Err(bad("expected \"gamma\" second".into()));
        }
        let mut channels = Vec::new();
        while let Some(name) = it.peek() {
            match inner(name, "beta[") {
                Some(ch) => {
                    channels.push(ch);
                    it.next();
                }
                None => break,
            }
        }
        if channels.is_empty() {
            return Err(bad("no beta[...] columns".into()));
        }
        for ch in &channels {
            let expect = format!("lambda[{ch}]");
            if it.next() != Some(&expect) {
                return Err(bad(format!("expected column {expect:?}")));
            }
        }
        let mut customers = Vec::new();
        let mut include_random_effects = false;
        if it.peek().map(|s| s.as_str()) == Some("sigma_b") {
            include_random_effects = true;
            it.next();
            while let Some(name) = it.peek() {
                match inner(name, "b[") {
                    Some(id) => {
                        customers.push(id);
                        it.next();
                    }
                    None => break,
                }
            }
        }
        let mut has_sigma_y = false;
        if it.peek().map(|s| s.as_str()) == Some("sigma_y") {
            has_sigma_y = true;
            it.next();
        }
        if let Some(extra) = it.next() {
            return Err(bad(format!("unexpected column {extra:?}")));
        }
        let layout = Self {
            n_channels: channels.len(),
            n_customers: customers.len(),
            include_random_effects,
            has_sigma_y,
        };
        Ok((layout, channels, customers))
    }

    /// Flattens constrained parameters into layout order.
    pub fn flatten(&self, params: &ModelParams) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.push(params.mu);
        out.push(params.gamma);
        out.extend_from_slice(&params.beta);
        out.extend_from_slice(&params.lambda);
        if self.include_random_effects {
            out.push(params.sigma_b);
            out.extend_from_slice(&params.b);
        }
        if self.has_sigma_y {
            out.push(params.sigma_y);
        }
        out
    }

    /// Rebuilds constrained parameters from a flattened row in layout order.
    pub fn unflatten(&self, row: &[f64]) -> Result<ModelParams> {
        if row.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "row has {} values, layout expects {}",
                row.len(),
                self.dim()
            )));
        }
        let c = self.n_channels;
        let mut params = ModelParams {
            mu: row[0],
            gamma: row[1],
            beta: row[2..2 + c].to_vec(),
            lambda: row[2 + c..2 + 2 * c].to_vec(),
            b: Vec::new(),
            sigma_b: 1.0,
            sigma_y: 1.0,
        };
        if let Some(i) = self.idx_sigma_b() {
            params.sigma_b = row[i];
            let start = self.b_start().expect("random effects present");
            params.b = row[start..start + self.n_customers].to_vec();
        }
        if let Some(i) = self.idx_sigma_y() {
            params.sigma_y = row[i];
        }
        Ok(params)
    }
}

/// Maps constrained parameters into the unconstrained vector.
///
/// Boundary values (`beta = 0`, `lambda` in {0,1}) are not representable and
/// are rejected.
pub fn to_unconstrained(params: &ModelParams, spec: &ModelSpec) -> Result<Vec<f64>> {
    params.validate(spec)?;
    let layout = ParamLayout::new(spec, params.b.len());
    let mut theta = Vec::with_capacity(layout.dim());
    theta.push(params.mu);
    theta.push(params.gamma);
    for (c, &b) in params.beta.iter().enumerate() {
        if b <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "beta[{c}] = {b}: boundary value not representable in log space"
            )));
        }
        theta.push(b.ln());
    }
    for &l in &params.lambda {
        theta.push(logit(l));
    }
    if spec.include_random_effects {
        theta.push(params.sigma_b.ln());
        for &b in &params.b {
            theta.push(b / params.sigma_b);
        }
    }
    if spec.link == Link::Identity {
        theta.push(params.sigma_y.ln());
    }
    Ok(theta)
}

/// Maps an unconstrained vector back to constrained parameters.
///
/// The image always satisfies the `ModelParams` invariants (up to floating
/// overflow for extreme inputs).
pub fn to_constrained(theta: &[f64], layout: &ParamLayout) -> Result<ModelParams> {
    if theta.len() != layout.dim() {
        return Err(Error::InvalidInput(format!(
            "theta has {} entries, layout expects {}",
            theta.len(),
            layout.dim()
        )));
    }
    let c = layout.n_channels;
    let mut params = ModelParams {
        mu: theta[0],
        gamma: theta[1],
        beta: theta[2..2 + c].iter().map(|&x| x.exp()).collect(),
        lambda: theta[2 + c..2 + 2 * c].iter().map(|&x| sigmoid(x)).collect(),
        b: Vec::new(),
        sigma_b: 1.0,
        sigma_y: 1.0,
    };
    if let Some(i) = layout.idx_sigma_b() {
        params.sigma_b = theta[i].exp();
        let start = layout.b_start().expect("random effects present");
        params.b = theta[start..start + layout.n_customers]
            .iter()
            .map(|&raw| params.sigma_b * raw)
            .collect();
    }
    if let Some(i) = layout.idx_sigma_y() {
        params.sigma_y = theta[i].exp();
    }
    Ok(params)
}

#[inline]
fn normal_lpdf(x: f64, sd: f64) -> f64 {
    -0.5 * LN_2PI - sd.ln() - x * x / (2.0 * sd * sd)
}

/// Log-likelihood of the dataset under the behavior model.
///
/// Under the logit link the Bernoulli term is evaluated directly from the
/// linear predictor (`-log(1+exp(±eta))`), never by materializing the
/// probability; under identity it is the Gaussian log-density with scale
/// `sigma_y`.
pub fn log_likelihood(journeys: &[Journey], params: &ModelParams, spec: &ModelSpec) -> Result<f64> {
    let mut ll = 0.0;
    for journey in journeys {
        let eta = crate::model::linear_predictor(journey, params, spec)?;
        ll += journey_loglik(journey.outcome(), eta, params.sigma_y, spec.link, journey)?;
    }
    Ok(ll)
}

#[inline]
fn journey_loglik(y: f64, eta: f64, sigma_y: f64, link: Link, journey: &Journey) -> Result<f64> {
    match link {
        Link::Logit => {
            if y != 0.0 && y != 1.0 {
                return Err(Error::InvalidInput(format!(
                    "journey {:?}: outcome {y} not in {{0,1}} under logit link",
                    journey.customer_id()
                )));
            }
            Ok(-log1pexp((1.0 - 2.0 * y) * eta))
        }
        Link::Identity => {
            let r = y - eta;
            Ok(-0.5 * LN_2PI - sigma_y.ln() - r * r / (2.0 * sigma_y * sigma_y))
        }
    }
}

/// Log-prior density of the constrained parameters.
pub fn log_prior(params: &ModelParams, priors: &PriorConfig, spec: &ModelSpec) -> Result<f64> {
    priors.validate()?;
    let mut lp = normal_lpdf(params.mu, priors.mu_sd) + normal_lpdf(params.gamma, priors.gamma_sd);
    for &b in &params.beta {
        // Exponential with scale `beta_scale`.
        lp += -priors.beta_scale.ln() - b / priors.beta_scale;
    }
    // lambda ~ Uniform(0,1): density 1, contributes exactly 0.
    if spec.include_random_effects {
        // sigma_b ~ Exponential(rate), b_i ~ Normal(0, sigma_b).
        lp += priors.sigma_b_rate.ln() - priors.sigma_b_rate * params.sigma_b;
        for &b in &params.b {
            lp += normal_lpdf(b, params.sigma_b);
        }
    }
    if spec.link == Link::Identity {
        // Half-normal on sigma_y.
        lp += 0.5 * (2.0 / std::f64::consts::PI).ln() - priors.sigma_y_scale.ln()
            - params.sigma_y * params.sigma_y / (2.0 * priors.sigma_y_scale * priors.sigma_y_scale);
    }
    Ok(lp)
}

/// Log |det J| of the unconstrained-to-constrained map at `theta`.
///
/// This includes the `(N+1) * log sigma_b` factor from the joint
/// `(log sigma_b, raw b) -> (sigma_b, b)` map of the non-centered
/// parameterization.
pub fn log_jacobian(theta: &[f64], layout: &ParamLayout) -> Result<f64> {
    if theta.len() != layout.dim() {
        return Err(Error::InvalidInput(format!(
            "theta has {} entries, layout expects {}",
            theta.len(),
            layout.dim()
        )));
    }
    let c = layout.n_channels;
    let mut lj = 0.0;
    for &lb in &theta[2..2 + c] {
        lj += lb;
    }
    for &ll in &theta[2 + c..2 + 2 * c] {
        lj += log_sigmoid(ll) + log_sigmoid(-ll);
    }
    if let Some(i) = layout.idx_sigma_b() {
        lj += (layout.n_customers as f64 + 1.0) * theta[i];
    }
    if let Some(i) = layout.idx_sigma_y() {
        lj += theta[i];
    }
    Ok(lj)
}

/// Unnormalized log-posterior density over the unconstrained vector:
/// exactly `log_likelihood + log_prior + log_jacobian`.
pub fn log_posterior_unconstrained(
    theta: &[f64],
    journeys: &[Journey],
    priors: &PriorConfig,
    spec: &ModelSpec,
) -> Result<f64> {
    let layout = ParamLayout::infer(spec, theta.len())?;
    let params = to_constrained(theta, &layout)?;
    Ok(log_likelihood(journeys, &params, spec)?
        + log_prior(&params, priors, spec)?
        + log_jacobian(theta, &layout)?)
}

/// Analytic gradient of [`log_posterior_unconstrained`] with respect to
/// `theta`. Matches central finite differences to the tolerances enforced by
/// [`check_gradients`].
pub fn grad_log_posterior(
    theta: &[f64],
    journeys: &[Journey],
    priors: &PriorConfig,
    spec: &ModelSpec,
) -> Result<Vec<f64>> {
    let layout = ParamLayout::infer(spec, theta.len())?;
    let prepared = PreparedDataset::new(journeys, spec)?;
    let mut grad = vec![0.0; theta.len()];
    prepared.log_posterior_and_grad(theta, &layout, priors, spec, &mut grad)?;
    Ok(grad)
}

/// Dataset flattened for repeated posterior evaluation: per-touch channel ids
/// and elapsed times, per-journey outcomes and customer indices.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    outcomes: Vec<f64>,
    customer_index: Vec<usize>,
    offsets: Vec<usize>,
    touch_channel: Vec<usize>,
    touch_delta: Vec<f64>,
    max_customer_index: Option<usize>,
    max_touches: usize,
}

impl PreparedDataset {
    pub fn new(journeys: &[Journey], spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut prepared = Self {
            outcomes: Vec::with_capacity(journeys.len()),
            customer_index: Vec::with_capacity(journeys.len()),
            offsets: Vec::with_capacity(journeys.len() + 1),
            touch_channel: Vec::new(),
            touch_delta: Vec::new(),
            max_customer_index: None,
            max_touches: 0,
        };
        prepared.offsets.push(0);
        for journey in journeys {
            let y = journey.outcome();
            if spec.link == Link::Logit && y != 0.0 && y != 1.0 {
                return Err(Error::InvalidInput(format!(
                    "journey {:?}: outcome {y} not in {{0,1}} under logit link",
                    journey.customer_id()
                )));
            }
            for touch in journey.touches() {
                if touch.channel >= spec.n_channels {
                    return Err(Error::ChannelOutOfRange {
                        id: touch.channel,
                        n_channels: spec.n_channels,
                    });
                }
                prepared.touch_channel.push(touch.channel);
                prepared.touch_delta.push(journey.eval_time() - touch.time);
            }
            prepared.max_touches = prepared.max_touches.max(journey.touches().len());
            prepared.outcomes.push(y);
            prepared.customer_index.push(journey.customer_index());
            if spec.include_random_effects {
                prepared.max_customer_index = Some(
                    prepared
                        .max_customer_index
                        .map_or(journey.customer_index(), |m| m.max(journey.customer_index())),
                );
            }
            prepared.offsets.push(prepared.touch_channel.len());
        }
        Ok(prepared)
    }

    pub fn n_journeys(&self) -> usize {
        self.outcomes.len()
    }

    /// Number of random-effect slots this dataset requires.
    pub fn required_customers(&self) -> usize {
        self.max_customer_index.map_or(0, |m| m + 1)
    }

    /// Fused log-posterior value and gradient, the sampler's hot path.
    ///
    /// Returns the log density (possibly `-inf`/NaN for extreme `theta`;
    /// callers treat non-finite values as rejections) and fills `grad`.
    pub fn log_posterior_and_grad(
        &self,
        theta: &[f64],
        layout: &ParamLayout,
        priors: &PriorConfig,
        spec: &ModelSpec,
        grad: &mut [f64],
    ) -> Result<f64> {
        if theta.len() != layout.dim() || grad.len() != theta.len() {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: theta {}, grad {}, layout {}",
                theta.len(),
                grad.len(),
                layout.dim()
            )));
        }
        if layout.include_random_effects && self.required_customers() > layout.n_customers {
            return Err(Error::CustomerOutOfRange {
                index: self.required_customers() - 1,
                n_customers: layout.n_customers,
            });
        }
        let params = to_constrained(theta, layout)?;
        let c = layout.n_channels;
        let ln_lambda: Vec<f64> = params.lambda.iter().map(|&l| l.ln()).collect();
        let beta_start = layout.beta_start();
        let lambda_start = layout.lambda_start();
        let idx_sb = layout.idx_sigma_b();
        let b_start = layout.b_start();
        let idx_sy = layout.idx_sigma_y();
        let sigma_y2 = params.sigma_y * params.sigma_y;
        let ln_sigma_y = idx_sy.map_or(0.0, |i| theta[i]);
        let two_gamma = if spec.include_interaction { 2.0 * params.gamma } else { 0.0 };

        grad.fill(0.0);
        let mut ll = 0.0;
        let mut scratch: Vec<(usize, f64, f64)> = Vec::with_capacity(self.max_touches);
        for j in 0..self.outcomes.len() {
            let (lo, hi) = (self.offsets[j], self.offsets[j + 1]);
            let mut s = 0.0;
            let mut q = 0.0;
            scratch.clear();
            for t in lo..hi {
                let ch = self.touch_channel[t];
                let u = params.beta[ch] * (self.touch_delta[t] * ln_lambda[ch]).exp();
                s += u;
                q += u * u;
                scratch.push((ch, u, self.touch_delta[t]));
            }
            let mut eta = params.mu + s;
            if spec.include_interaction {
                eta += params.gamma * (s * s - q);
            }
            if layout.include_random_effects {
                eta += params.b[self.customer_index[j]];
            }
            let y = self.outcomes[j];
            // g = d(log-lik term)/d(eta)
            let g = match spec.link {
                Link::Logit => {
                    ll += -log1pexp((1.0 - 2.0 * y) * eta);
                    y - sigmoid(eta)
                }
                Link::Identity => {
                    let r = y - eta;
                    ll += -0.5 * LN_2PI - ln_sigma_y - r * r / (2.0 * sigma_y2);
                    if let Some(i) = idx_sy {
                        grad[i] += r * r / sigma_y2 - 1.0;
                    }
                    r / sigma_y2
                }
            };
            grad[0] += g;
            if spec.include_interaction {
                grad[1] += g * (s * s - q);
            }
            if layout.include_random_effects {
                let i = self.customer_index[j];
                grad[b_start.expect("random effects") + i] += g;
                grad[idx_sb.expect("random effects")] += g * params.b[i];
            }
            for &(ch, u, delta) in &scratch {
                let f = g * (1.0 + two_gamma * (s - u));
                grad[beta_start + ch] += f * u;
                grad[lambda_start + ch] += f * u * delta * (1.0 - params.lambda[ch]);
            }
        }

        // Prior and Jacobian terms, in unconstrained coordinates. In the
        // non-centered parameterization the b-prior and its Jacobian collapse
        // to a standard normal on the raw coordinates.
        grad[0] += -params.mu / (priors.mu_sd * priors.mu_sd);
        grad[1] += -params.gamma / (priors.gamma_sd * priors.gamma_sd);
        for ch in 0..c {
            grad[beta_start + ch] += 1.0 - params.beta[ch] / priors.beta_scale;
            grad[lambda_start + ch] += 1.0 - 2.0 * params.lambda[ch];
        }
        if layout.include_random_effects {
            let sb = idx_sb.expect("random effects");
            let bs = b_start.expect("random effects");
            // Scale the accumulated likelihood part d/db into d/draw.
            for i in 0..layout.n_customers {
                grad[bs + i] = params.sigma_b * grad[bs + i] - theta[bs + i];
            }
            grad[sb] += 1.0 - priors.sigma_b_rate * params.sigma_b;
        }
        if let Some(i) = idx_sy {
            grad[i] += 1.0 - sigma_y2 / (priors.sigma_y_scale * priors.sigma_y_scale);
        }

        let lp = ll + log_prior(&params, priors, spec)? + log_jacobian(theta, layout)?;
        Ok(lp)
    }
}

/// Settings for the finite-difference gradient check.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GradientCheckConfig {
    /// Random (theta, dataset) points, alternating identity and logit links.
    pub points: usize,
    pub seed: u64,
    pub n_channels: usize,
    pub n_journeys: usize,
    pub touches_per_journey: usize,
    /// Central-difference step applied per coordinate of theta.
    pub fd_step: f64,
    /// Relative tolerance where |gradient| > 1e-8.
    pub rel_tol: f64,
    /// Absolute tolerance near zero.
    pub abs_tol: f64,
}

impl Default for GradientCheckConfig {
    fn default() -> Self {
        Self {
            points: 100,
            seed: 0,
            n_channels: 3,
            n_journeys: 50,
            touches_per_journey: 5,
            fd_step: 1e-5,
            rel_tol: 1e-6,
            abs_tol: 1e-8,
        }
    }
}

/// One coordinate that failed the finite-difference comparison.
#[derive(Debug, Clone, Serialize)]
pub struct GradientCheckFailure {
    pub point: usize,
    pub link: Link,
    pub name: String,
    pub analytic: f64,
    pub finite_difference: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientCheckReport {
    pub points: usize,
    pub coords_checked: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub failures: Vec<GradientCheckFailure>,
}

impl GradientCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares the analytic gradient against central finite differences of
/// [`log_posterior_unconstrained`] at random (theta, dataset) points, both
/// links, random effects on.
pub fn check_gradients(cfg: &GradientCheckConfig) -> Result<GradientCheckReport> {
    use rand::Rng;

    let priors = PriorConfig::default();
    let mut report = GradientCheckReport {
        points: cfg.points,
        coords_checked: 0,
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        failures: Vec::new(),
    };
    for point in 0..cfg.points {
        let link = if point % 2 == 0 { Link::Identity } else { Link::Logit };
        let sim = crate::simulator::SimConfig {
            n_journeys: cfg.n_journeys,
            n_channels: cfg.n_channels,
            touches_per_journey: cfg.touches_per_journey,
            inter_event_rate: 1.0,
            link,
            seed: cfg.seed.wrapping_add(7_919 * point as u64),
            sigma_y: 0.3,
            param_overrides: None,
        };
        let (journeys, _) = crate::simulator::simulate_dataset(&sim)?;
        let spec = ModelSpec::new(cfg.n_channels, link).with_random_effects(true);
        let layout = ParamLayout::new(&spec, cfg.n_journeys);
        let mut rng = crate::rng::stream_rng(cfg.seed, 10_000 + point as u64);
        let theta: Vec<f64> = (0..layout.dim()).map(|_| rng.random_range(-1.2..1.2)).collect();

        let analytic = grad_log_posterior(&theta, &journeys, &priors, &spec)?;
        let names = layout.names(&[], &[]);
        let mut probe = theta.clone();
        for k in 0..theta.len() {
            let h = cfg.fd_step;
            probe[k] = theta[k] + h;
            let up = log_posterior_unconstrained(&probe, &journeys, &priors, &spec)?;
            probe[k] = theta[k] - h;
            let down = log_posterior_unconstrained(&probe, &journeys, &priors, &spec)?;
            probe[k] = theta[k];
            let fd = (up - down) / (2.0 * h);
            let a = analytic[k];
            report.coords_checked += 1;
            let abs_err = (a - fd).abs();
            if a.abs() > 1e-8 {
                let rel = abs_err / a.abs().max(fd.abs());
                report.max_rel_err = report.max_rel_err.max(rel);
                if rel > cfg.rel_tol {
                    report.failures.push(GradientCheckFailure {
                        point,
                        link,
                        name: names[k].clone(),
                        analytic: a,
                        finite_difference: fd,
                    });
                }
            } else {
                report.max_abs_err = report.max_abs_err.max(abs_err);
                if abs_err > cfg.abs_tol {
                    report.failures.push(GradientCheckFailure {
                        point,
                        link,
                        name: names[k].clone(),
                        analytic: a,
                        finite_difference: fd,
                    });
                }
            }
        }
    }
    Ok(report)
}
