//! Adaptive Hamiltonian Monte Carlo over an arbitrary differentiable target.
//!
//! Warmup adapts the step size by dual averaging toward `target_accept` and
//! estimates a diagonal mass matrix over expanding windows; the sampling
//! phase runs with frozen tuning. Trajectories use a jittered fixed-length
//! regime: each transition integrates a uniform number of leapfrog steps in
//! `[1, L]`, with `L` chosen so the mean jittered trajectory
//! (`step_size * L / 2`) is about 1.5 in mass-rescaled coordinates. A
//! proposal whose energy error exceeds 1000 is recorded as a divergence and
//! rejected.
//!
//! Chains are independent and may run concurrently; chain `c` draws from RNG
//! stream `(seed, c)`, so results do not depend on the number of worker
//! threads.

mod diagnostics;
mod hmc;
mod summary;

pub use diagnostics::{diagnostics, ks_statistic, Diagnostics};
pub use summary::{summarize, ParamSummary};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A log-density with gradient, sampled in unconstrained coordinates.
///
/// `to_constrained` maps a sampled point into the space stored in
/// [`PosteriorDraws`]; the default is the identity, which suits targets that
/// need no transform (e.g. a standard normal).
pub trait Target: Sync {
    fn dim(&self) -> usize;

    /// Log density at `theta`; fills `grad` with its gradient. Non-finite
    /// return values are treated as rejections by the sampler.
    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64;

    fn to_constrained(&self, theta: &[f64]) -> Vec<f64> {
        theta.to_vec()
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("theta[{i}]")).collect()
    }
}

/// Transition kernel behind the common interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    Hmc,
    /// Adaptive random-walk Metropolis; gradient-free debugging fallback.
    RandomWalk,
}

/// Sampler run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_samples: usize,
    pub target_accept: f64,
    pub max_leapfrog_steps: usize,
    pub seed: u64,
    /// Initial unconstrained coordinates are drawn Uniform(-jitter, jitter).
    pub init_jitter: f64,
    pub kernel: Kernel,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_warmup: 1000,
            n_samples: 1000,
            target_accept: 0.8,
            max_leapfrog_steps: 1024,
            seed: 0,
            init_jitter: 2.0,
            kernel: Kernel::Hmc,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::InvalidInput("n_chains must be >= 1".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidInput("n_samples must be >= 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidInput(format!(
                "target_accept {} must be in (0,1)",
                self.target_accept
            )));
        }
        if self.max_leapfrog_steps == 0 {
            return Err(Error::InvalidInput("max_leapfrog_steps must be >= 1".into()));
        }
        if !(self.init_jitter > 0.0) {
            return Err(Error::InvalidInput("init_jitter must be > 0".into()));
        }
        Ok(())
    }
}

/// Posterior draws in constrained space, chain-major, plus per-chain tuning
/// and acceptance statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub n_chains: usize,
    pub n_samples: usize,
    pub dim: usize,
    /// `[chain][iteration][parameter]`, flattened.
    draws: Vec<f64>,
    /// Mean proposal acceptance probability per chain over the sampling phase.
    pub accept_rate: Vec<f64>,
    /// Divergent transitions per chain over the sampling phase.
    pub divergences: Vec<u64>,
    /// Frozen step size per chain.
    pub step_size: Vec<f64>,
    /// Frozen inverse mass (posterior variance estimate) diagonal per chain.
    pub inv_mass_diag: Vec<Vec<f64>>,
}

impl PosteriorDraws {
    /// Assembles draws from externally stored values (e.g. a reloaded CSV);
    /// tuning statistics are left empty.
    pub fn from_values(
        names: Vec<String>,
        n_chains: usize,
        n_samples: usize,
        draws: Vec<f64>,
    ) -> Result<Self> {
        let dim = names.len();
        if draws.len() != n_chains * n_samples * dim {
            return Err(Error::InvalidInput(format!(
                "{} values cannot fill {n_chains} chains x {n_samples} draws x {dim} parameters",
                draws.len()
            )));
        }
        Ok(Self {
            names,
            n_chains,
            n_samples,
            dim,
            draws,
            accept_rate: Vec::new(),
            divergences: Vec::new(),
            step_size: Vec::new(),
            inv_mass_diag: Vec::new(),
        })
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains * self.n_samples
    }

    #[inline]
    pub fn value(&self, chain: usize, iter: usize, param: usize) -> f64 {
        self.draws[(chain * self.n_samples + iter) * self.dim + param]
    }

    /// One draw as a parameter row, indexed by flattened position
    /// (chain-major).
    pub fn row(&self, flat_index: usize) -> &[f64] {
        let start = flat_index * self.dim;
        &self.draws[start..start + self.dim]
    }

    /// All values of one parameter within one chain, in iteration order.
    pub fn param_chain(&self, chain: usize, param: usize) -> Vec<f64> {
        (0..self.n_samples).map(|i| self.value(chain, i, param)).collect()
    }

    /// All values of one parameter pooled across chains (chain-major order).
    pub fn param_pooled(&self, param: usize) -> Vec<f64> {
        (0..self.n_chains)
            .flat_map(|c| (0..self.n_samples).map(move |i| (c, i)))
            .map(|(c, i)| self.value(c, i, param))
            .collect()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Runs `config.n_chains` independent chains against the target.
///
/// Fails if any chain cannot find a finite starting log-density within 100
/// jittered attempts.
pub fn run<T: Target>(target: &T, config: &SamplerConfig) -> Result<PosteriorDraws> {
    config.validate()?;
    let dim = target.dim();
    if dim == 0 {
        return Err(Error::InvalidInput("target dimension must be >= 1".into()));
    }
    let chains: Vec<hmc::ChainOutput> = (0..config.n_chains)
        .into_par_iter()
        .map(|chain| hmc::run_chain(target, config, chain))
        .collect::<Result<_>>()?;

    let names = target.param_names();
    let out_dim = names.len();
    let mut draws = Vec::with_capacity(config.n_chains * config.n_samples * out_dim);
    let mut accept_rate = Vec::with_capacity(config.n_chains);
    let mut divergences = Vec::with_capacity(config.n_chains);
    let mut step_size = Vec::with_capacity(config.n_chains);
    let mut inv_mass_diag = Vec::with_capacity(config.n_chains);
    for chain in chains {
        draws.extend(chain.draws);
        accept_rate.push(chain.accept_rate);
        divergences.push(chain.divergences);
        step_size.push(chain.step_size);
        inv_mass_diag.push(chain.inv_mass_diag);
    }
    Ok(PosteriorDraws {
        names,
        n_chains: config.n_chains,
        n_samples: config.n_samples,
        dim: out_dim,
        draws,
        accept_rate,
        divergences,
        step_size,
        inv_mass_diag,
    })
}
