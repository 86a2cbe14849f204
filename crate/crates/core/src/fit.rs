//! Wires a journey dataset into the sampler and returns constrained draws
//! with diagnostics and summaries.

use crate::error::{Error, Result};
use crate::likelihood::{to_constrained, ParamLayout, PreparedDataset, PriorConfig};
use crate::model::{Journey, ModelSpec};
use crate::sampler::{self, Diagnostics, ParamSummary, PosteriorDraws, SamplerConfig, Target};

/// Posterior of the behavior model over the unconstrained vector, exposed to
/// the sampler. Draws are emitted in constrained space.
pub struct PosteriorTarget {
    prepared: PreparedDataset,
    layout: ParamLayout,
    priors: PriorConfig,
    spec: ModelSpec,
    names: Vec<String>,
}

impl PosteriorTarget {
    pub fn new(
        journeys: &[Journey],
        spec: &ModelSpec,
        priors: &PriorConfig,
        channel_names: &[String],
    ) -> Result<Self> {
        if journeys.is_empty() {
            return Err(Error::EmptyDataset("cannot fit an empty dataset".into()));
        }
        priors.validate()?;
        let prepared = PreparedDataset::new(journeys, spec)?;
        let (n_customers, customer_ids) = if spec.include_random_effects {
            resolve_customers(journeys)?
        } else {
            (0, Vec::new())
        };
        let layout = ParamLayout::new(spec, n_customers);
        let names = layout.names(channel_names, &customer_ids);
        Ok(Self { prepared, layout, priors: *priors, spec: *spec, names })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }
}

/// Checks customer indices are dense in `[0, N)` and returns ids in index
/// order.
fn resolve_customers(journeys: &[Journey]) -> Result<(usize, Vec<String>)> {
    let n = journeys.iter().map(|j| j.customer_index() + 1).max().unwrap_or(0);
    let mut ids: Vec<Option<String>> = vec![None; n];
    for j in journeys {
        let slot = &mut ids[j.customer_index()];
        match slot {
            None => *slot = Some(j.customer_id().to_string()),
            Some(existing) if existing != j.customer_id() => {
                return Err(Error::InvalidInput(format!(
                    "customer index {} bound to both {:?} and {:?}",
                    j.customer_index(),
                    existing,
                    j.customer_id()
                )));
            }
            _ => {}
        }
    }
    let ids: Vec<String> = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            id.ok_or_else(|| {
                Error::InvalidInput(format!("customer index {i} unused: indices must be dense"))
            })
        })
        .collect::<Result<_>>()?;
    Ok((n, ids))
}

impl Target for PosteriorTarget {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        match self
            .prepared
            .log_posterior_and_grad(theta, &self.layout, &self.priors, &self.spec, grad)
        {
            Ok(lp) => lp,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn to_constrained(&self, theta: &[f64]) -> Vec<f64> {
        match to_constrained(theta, &self.layout) {
            Ok(params) => self.layout.flatten(&params),
            Err(_) => vec![f64::NAN; self.layout.dim()],
        }
    }

    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }
}

/// Fitted posterior: constrained draws, convergence diagnostics, summaries.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub draws: PosteriorDraws,
    pub diagnostics: Diagnostics,
    pub summary: Vec<ParamSummary>,
    pub layout: ParamLayout,
}

/// Runs the sampler against the model posterior.
///
/// Diagnostics are skipped (empty) for single-chain runs, where split-R-hat
/// is undefined.
pub fn fit(
    journeys: &[Journey],
    spec: &ModelSpec,
    priors: &PriorConfig,
    config: &SamplerConfig,
    channel_names: &[String],
) -> Result<FitResult> {
    let target = PosteriorTarget::new(journeys, spec, priors, channel_names)?;
    let draws = sampler::run(&target, config)?;
    let diagnostics = if config.n_chains >= 2 && config.n_samples >= 4 {
        sampler::diagnostics(&draws)?
    } else {
        Diagnostics { rhat: Vec::new(), ess_bulk: Vec::new(), ess_tail: Vec::new() }
    };
    let summary = sampler::summarize(&draws)?;
    Ok(FitResult { draws, diagnostics, summary, layout: target.layout().clone() })
}
