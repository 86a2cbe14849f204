//! Per-chain transition machinery: leapfrog integration, dual-averaging step
//! size adaptation, expanding-window diagonal mass estimation, and the
//! random-walk fallback kernel.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Kernel, SamplerConfig, Target};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Energy error beyond which a trajectory counts as divergent.
const DIVERGENCE_THRESHOLD: f64 = 1000.0;
/// Upper bound of the jittered trajectory: step counts are uniform in
/// `[1, L]` with `eps * L` about this value, so the mean integrated
/// trajectory is about half of it.
const MAX_TRAJECTORY_LENGTH: f64 = 3.0;
const INIT_ATTEMPTS: usize = 100;
/// Optimal acceptance for the random-walk fallback kernel.
const RWM_TARGET_ACCEPT: f64 = 0.234;

pub(super) struct ChainOutput {
    pub draws: Vec<f64>,
    pub accept_rate: f64,
    pub divergences: u64,
    pub step_size: f64,
    pub inv_mass_diag: Vec<f64>,
}

/// Nesterov dual averaging of the log step size toward a target acceptance
/// (gamma = 0.05, t0 = 10, kappa = 0.75).
struct DualAveraging {
    mu: f64,
    log_eps_bar: f64,
    h_bar: f64,
    count: f64,
    target: f64,
}

impl DualAveraging {
    fn new(eps0: f64, target: f64) -> Self {
        Self {
            mu: (10.0 * eps0).ln(),
            log_eps_bar: eps0.ln(),
            h_bar: 0.0,
            count: 0.0,
            target,
        }
    }

    fn update(&mut self, alpha: f64) -> f64 {
        const GAMMA: f64 = 0.05;
        const T0: f64 = 10.0;
        const KAPPA: f64 = 0.75;
        self.count += 1.0;
        let frac = 1.0 / (self.count + T0);
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - alpha);
        let log_eps = self.mu - self.h_bar * self.count.sqrt() / GAMMA;
        let w = self.count.powf(-KAPPA);
        self.log_eps_bar = w * log_eps + (1.0 - w) * self.log_eps_bar;
        log_eps.exp()
    }

    fn adapted(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Welford accumulator for the per-coordinate variance of warmup draws.
struct RunningVariance {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    fn new(dim: usize) -> Self {
        Self { n: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for i in 0..x.len() {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / self.n;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
    }

    /// Variance estimate shrunk slightly toward 1e-3, as used for mass
    /// matrix regularization; `None` with fewer than 2 samples.
    fn regularized(&self) -> Option<Vec<f64>> {
        if self.n < 2.0 {
            return None;
        }
        let shrink = self.n / (self.n + 5.0);
        Some(
            self.m2
                .iter()
                .map(|m2| {
                    let var = m2 / (self.n - 1.0);
                    let reg = shrink * var + 1e-3 * (1.0 - shrink);
                    if reg > 0.0 && reg.is_finite() { reg } else { 1.0 }
                })
                .collect(),
        )
    }

    fn reset(&mut self) {
        self.n = 0.0;
        self.mean.fill(0.0);
        self.m2.fill(0.0);
    }
}

/// Warmup phases: `[0, init_end)` adapts step size only; expanding windows
/// ending at each entry of `window_ends` collect variance and refresh the
/// mass matrix; the tail after the last window readjusts step size only.
struct Schedule {
    init_end: usize,
    window_ends: Vec<usize>,
}

impl Schedule {
    fn build(n_warmup: usize) -> Self {
        if n_warmup < 20 {
            return Self { init_end: n_warmup, window_ends: Vec::new() };
        }
        let mut init = 75usize;
        let mut term = 50usize;
        let mut base = 25usize;
        if init + base + term > n_warmup {
            init = ((n_warmup as f64 * 0.15) as usize).max(1);
            term = ((n_warmup as f64 * 0.10) as usize).max(1);
            base = n_warmup - init - term;
        }
        let adapt_end = n_warmup - term;
        let mut window_ends = Vec::new();
        let mut start = init;
        let mut width = base;
        loop {
            let mut end = start + width;
            if end + 2 * width > adapt_end {
                end = adapt_end;
            }
            window_ends.push(end);
            if end >= adapt_end {
                break;
            }
            start = end;
            width *= 2;
        }
        Self { init_end: init, window_ends }
    }
}

struct State {
    theta: Vec<f64>,
    lp: f64,
    grad: Vec<f64>,
}

fn initialize<T: Target>(target: &T, config: &SamplerConfig, rng: &mut ChaCha8Rng) -> Result<State> {
    let dim = target.dim();
    for _ in 0..INIT_ATTEMPTS {
        let theta: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-config.init_jitter..config.init_jitter))
            .collect();
        let mut grad = vec![0.0; dim];
        let lp = target.log_density_and_grad(&theta, &mut grad);
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(State { theta, lp, grad });
        }
    }
    Err(Error::InitializationFailed { attempts: INIT_ATTEMPTS })
}

pub(super) fn run_chain<T: Target>(
    target: &T,
    config: &SamplerConfig,
    chain: usize,
) -> Result<ChainOutput> {
    let mut rng = stream_rng(config.seed, chain as u64);
    let state = initialize(target, config, &mut rng)?;
    match config.kernel {
        Kernel::Hmc => hmc_chain(target, config, state, rng),
        Kernel::RandomWalk => rwm_chain(target, config, state, rng),
    }
}

struct HmcKernel<'a, T: Target> {
    target: &'a T,
    inv_mass: Vec<f64>,
    momentum_sd: Vec<f64>,
    eps: f64,
    max_steps: usize,
}

struct Transition {
    alpha: f64,
    divergent: bool,
}

impl<'a, T: Target> HmcKernel<'a, T> {
    fn new(target: &'a T, dim: usize, max_steps: usize) -> Self {
        Self {
            target,
            inv_mass: vec![1.0; dim],
            momentum_sd: vec![1.0; dim],
            eps: 1.0,
            max_steps,
        }
    }

    fn set_inv_mass(&mut self, inv_mass: Vec<f64>) {
        self.momentum_sd = inv_mass.iter().map(|v| 1.0 / v.sqrt()).collect();
        self.inv_mass = inv_mass;
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_mass).map(|(pi, m)| pi * pi * m).sum::<f64>()
    }

    fn sample_momentum(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.momentum_sd
            .iter()
            .map(|sd| {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            })
            .collect()
    }

    /// Integrates `steps` leapfrog steps from `state` with momentum `p`.
    /// Returns the endpoint, or `None` when the density or gradient turns
    /// non-finite along the way.
    fn leapfrog(&self, state: &State, p: &mut [f64], steps: usize) -> Option<State> {
        let eps = self.eps;
        let mut theta = state.theta.clone();
        let mut grad = state.grad.clone();
        let mut lp = state.lp;
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * eps * gi;
        }
        for step in 0..steps {
            for i in 0..theta.len() {
                theta[i] += eps * self.inv_mass[i] * p[i];
            }
            lp = self.target.log_density_and_grad(&theta, &mut grad);
            if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return None;
            }
            let kick = if step + 1 == steps { 0.5 * eps } else { eps };
            for (pi, gi) in p.iter_mut().zip(&grad) {
                *pi += kick * gi;
            }
        }
        Some(State { theta, lp, grad })
    }

    fn max_trajectory_steps(&self) -> usize {
        let l = (MAX_TRAJECTORY_LENGTH / self.eps).ceil();
        if l.is_finite() {
            (l.max(1.0) as usize).min(self.max_steps)
        } else {
            self.max_steps
        }
    }

    fn transition(&self, state: &mut State, rng: &mut ChaCha8Rng) -> Transition {
        let steps = rng.random_range(1..=self.max_trajectory_steps());
        let mut p = self.sample_momentum(rng);
        let h0 = -state.lp + self.kinetic(&p);
        let proposal = self.leapfrog(state, &mut p, steps);
        let accept_draw: f64 = rng.random();
        match proposal {
            Some(end) => {
                let h1 = -end.lp + self.kinetic(&p);
                let divergent = !h1.is_finite() || h1 - h0 > DIVERGENCE_THRESHOLD;
                if divergent {
                    return Transition { alpha: 0.0, divergent: true };
                }
                let log_ratio = h0 - h1;
                let alpha = log_ratio.exp().min(1.0);
                if accept_draw < log_ratio.exp() {
                    *state = end;
                }
                Transition { alpha, divergent: false }
            }
            None => Transition { alpha: 0.0, divergent: true },
        }
    }

    /// Doubles or halves the step size until one-step acceptance crosses 1/2
    /// (the usual reasonable-first-step-size heuristic).
    fn find_initial_step_size(&mut self, state: &State, rng: &mut ChaCha8Rng) {
        self.eps = 1.0;
        let p0 = self.sample_momentum(rng);
        let h0 = -state.lp + self.kinetic(&p0);
        let ratio = |kernel: &Self, eps: f64| -> f64 {
            let mut kernel_probe = Self {
                target: kernel.target,
                inv_mass: kernel.inv_mass.clone(),
                momentum_sd: kernel.momentum_sd.clone(),
                eps,
                max_steps: kernel.max_steps,
            };
            kernel_probe.eps = eps;
            let mut p = p0.clone();
            match kernel_probe.leapfrog(state, &mut p, 1) {
                Some(end) => {
                    let h1 = -end.lp + kernel_probe.kinetic(&p);
                    (h0 - h1).exp()
                }
                None => 0.0,
            }
        };
        let mut r = ratio(self, self.eps);
        let dir: f64 = if r > 0.5 { 1.0 } else { -1.0 };
        for _ in 0..100 {
            let keep_going = if dir > 0.0 { r > 0.5 } else { r < 0.5 };
            if !keep_going {
                break;
            }
            let next = self.eps * 2f64.powf(dir);
            if !(1e-12..=1e7).contains(&next) {
                break;
            }
            self.eps = next;
            r = ratio(self, self.eps);
        }
    }
}

fn hmc_chain<T: Target>(
    target: &T,
    config: &SamplerConfig,
    mut state: State,
    mut rng: ChaCha8Rng,
) -> Result<ChainOutput> {
    let dim = target.dim();
    let mut kernel = HmcKernel::new(target, dim, config.max_leapfrog_steps);
    kernel.find_initial_step_size(&state, &mut rng);

    // Warmup: dual averaging throughout, variance windows per the schedule.
    let schedule = Schedule::build(config.n_warmup);
    let adapt_end = schedule.window_ends.last().copied().unwrap_or(0);
    let mut da = DualAveraging::new(kernel.eps, config.target_accept);
    let mut variance = RunningVariance::new(dim);
    let mut next_window = 0usize;
    for t in 0..config.n_warmup {
        let result = kernel.transition(&mut state, &mut rng);
        kernel.eps = da.update(result.alpha);
        if t >= schedule.init_end && t < adapt_end {
            variance.push(&state.theta);
        }
        if next_window < schedule.window_ends.len() && t + 1 == schedule.window_ends[next_window] {
            if let Some(var) = variance.regularized() {
                kernel.set_inv_mass(var);
            }
            variance.reset();
            kernel.find_initial_step_size(&state, &mut rng);
            da = DualAveraging::new(kernel.eps, config.target_accept);
            next_window += 1;
        }
    }
    if config.n_warmup > 0 {
        let adapted = da.adapted();
        if adapted.is_finite() && adapted > 0.0 {
            kernel.eps = adapted;
        }
    }

    // Sampling with frozen tuning.
    let mut draws = Vec::new();
    let mut alpha_sum = 0.0;
    let mut divergences = 0u64;
    for _ in 0..config.n_samples {
        let result = kernel.transition(&mut state, &mut rng);
        alpha_sum += result.alpha;
        divergences += u64::from(result.divergent);
        draws.extend(target.to_constrained(&state.theta));
    }
    Ok(ChainOutput {
        draws,
        accept_rate: alpha_sum / config.n_samples as f64,
        divergences,
        step_size: kernel.eps,
        inv_mass_diag: kernel.inv_mass,
    })
}

fn rwm_chain<T: Target>(
    target: &T,
    config: &SamplerConfig,
    mut state: State,
    mut rng: ChaCha8Rng,
) -> Result<ChainOutput> {
    let dim = target.dim();
    let mut proposal_sd = vec![1.0; dim];
    let mut log_scale = (2.38 / (dim as f64).sqrt()).ln();
    let schedule = Schedule::build(config.n_warmup);
    let adapt_end = schedule.window_ends.last().copied().unwrap_or(0);
    let mut variance = RunningVariance::new(dim);
    let mut next_window = 0usize;
    let mut scratch_grad = vec![0.0; dim];

    let step = |state: &mut State,
                rng: &mut ChaCha8Rng,
                scale: f64,
                sd: &[f64],
                grad: &mut [f64]|
     -> f64 {
        let proposal: Vec<f64> = state
            .theta
            .iter()
            .zip(sd)
            .map(|(x, s)| {
                let z: f64 = StandardNormal.sample(rng);
                x + scale * s * z
            })
            .collect();
        let lp = target.log_density_and_grad(&proposal, grad);
        let accept_draw: f64 = rng.random();
        if !lp.is_finite() {
            return 0.0;
        }
        let log_ratio = lp - state.lp;
        if accept_draw < log_ratio.exp() {
            state.theta = proposal;
            state.lp = lp;
        }
        log_ratio.exp().min(1.0)
    };

    for t in 0..config.n_warmup {
        let scale = log_scale.exp();
        let alpha = step(&mut state, &mut rng, scale, &proposal_sd, &mut scratch_grad);
        log_scale += (alpha - RWM_TARGET_ACCEPT) / (t as f64 + 1.0).powf(0.6);
        if t >= schedule.init_end && t < adapt_end {
            variance.push(&state.theta);
        }
        if next_window < schedule.window_ends.len() && t + 1 == schedule.window_ends[next_window] {
            if let Some(var) = variance.regularized() {
                proposal_sd = var.iter().map(|v| v.sqrt()).collect();
            }
            variance.reset();
            next_window += 1;
        }
    }

    let scale = log_scale.exp();
    let mut draws = Vec::new();
    let mut alpha_sum = 0.0;
    for _ in 0..config.n_samples {
        alpha_sum += step(&mut state, &mut rng, scale, &proposal_sd, &mut scratch_grad);
        draws.extend(target.to_constrained(&state.theta));
    }
    Ok(ChainOutput {
        draws,
        accept_rate: alpha_sum / config.n_samples as f64,
        divergences: 0,
        step_size: scale,
        inv_mass_diag: proposal_sd.iter().map(|s| s * s).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_covers_standard_and_short_warmups() {
        let s = Schedule::build(1000);
        assert_eq!(s.init_end, 75);
        assert_eq!(s.window_ends, vec![100, 150, 250, 450, 950]);

        let short = Schedule::build(100);
        assert_eq!(short.init_end, 15);
        assert_eq!(*short.window_ends.last().unwrap(), 90);

        let tiny = Schedule::build(10);
        assert!(tiny.window_ends.is_empty());
    }

    #[test]
    fn dual_averaging_moves_toward_target() {
        // Persistently low acceptance must shrink the step size.
        let mut da = DualAveraging::new(1.0, 0.8);
        let mut eps = 1.0;
        for _ in 0..50 {
            eps = da.update(0.05);
        }
        assert!(eps < 0.1, "eps {eps}");
        let mut da = DualAveraging::new(0.01, 0.8);
        for _ in 0..50 {
            da.update(1.0);
        }
        assert!(da.adapted() > 0.01);
    }

    #[test]
    fn running_variance_matches_two_pass() {
        let xs = [[1.0, -2.0], [0.5, 0.0], [2.0, 1.5], [-1.0, 0.25]];
        let mut rv = RunningVariance::new(2);
        for x in &xs {
            rv.push(x);
        }
        let reg = rv.regularized().unwrap();
        for i in 0..2 {
            let mean = xs.iter().map(|x| x[i]).sum::<f64>() / 4.0;
            let var = xs.iter().map(|x| (x[i] - mean).powi(2)).sum::<f64>() / 3.0;
            let want = 4.0 / 9.0 * var + 1e-3 * 5.0 / 9.0;
            assert!((reg[i] - want).abs() < 1e-12);
        }
    }
}
