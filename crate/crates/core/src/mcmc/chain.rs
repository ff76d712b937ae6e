//! One Metropolis-within-Gibbs chain.
//!
//! Sweep order: coefficient block, coefficient translation, each
//! `theta_i`, each `phi_i`, the two scale moves, `sigma_theta^2`, `tau_c`,
//! then re-centering of `phi`.
//!
//! The translation move shifts `beta` by `delta` and the random effects by
//! `-x_i . delta`, leaving every `psi_i` unchanged except at islands. With
//! informative counts `beta` given the random effects is tightly pinned, so
//! the plain block move alone crawls along the directions the random
//! effects can absorb.
//!
//! The scale moves multiply `theta` (or `phi`) by `e^eps` together with
//! the matching change of `sigma_theta^2` (or `tau_c`), which keeps the
//! chain moving when the effect variance is small.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::conjugate::{update_sigma_theta, update_tau_c};
use super::McmcConfig;
use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use crate::eval::alpha_spatial_share;
use crate::model::{GammaPrior, InverseGammaPrior, car_conditional, center_phi, icar_quadratic_form, CarConditional, ModelSpec, NormalPrior, PSI_CLAMP};
use crate::weights::{Components, ProximityMatrix};

/// Adaptation batch length, in sweeps.
const BATCH: usize = 50;
/// Optimal acceptance for a multivariate random-walk block.
pub const BLOCK_TARGET_ACCEPTANCE: f64 = 0.234;

/// Read-only inputs shared by every chain.
pub(crate) struct Problem<'a> {
    pub y: &'a [u64],
    pub ln_fact: Vec<f64>,
    pub design: &'a DesignMatrix<f64>,
    pub weights: Option<&'a ProximityMatrix<f64>>,
    pub components: Option<Components>,
    pub spec: &'a ModelSpec,
    pub priors: Vec<NormalPrior>,
    pub beta_start: Vec<f64>,
    pub beta_start_sd: Vec<f64>,
    /// Initial proposal covariance for the coefficient block.
    pub proposal_cov: DMatrix<f64>,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn p(&self) -> usize {
        self.design.cols()
    }

    /// Which effect absorbs the translation move, if any.
    fn translation_target(&self) -> Option<Latent> {
        match (self.spec.spatial, self.spec.heterogeneity) {
            (true, _) => Some(Latent::Phi),
            (false, true) => Some(Latent::Theta),
            (false, false) => None,
        }
    }

    fn shift_intercept_on_centering(&self) -> bool {
        self.components.as_ref().is_some_and(|c| c.count == 1)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Latent {
    Theta,
    Phi,
}

pub(crate) struct ChainOutput {
    /// `beta[k][t]`: kept draws of coefficient `k`.
    pub beta: Vec<Vec<f64>>,
    pub sigma_theta_sq: Vec<f64>,
    pub tau_c: Vec<f64>,
    /// `NaN` where the spatial share is undefined.
    pub alpha: Vec<f64>,
    pub deviance: Vec<f64>,
    pub sum_theta: Vec<f64>,
    pub sum_phi: Vec<f64>,
    pub sum_lambda: Vec<f64>,
    pub kept: usize,
    pub beta_acceptance: f64,
    pub translation_acceptance: f64,
    pub theta_acceptance: f64,
    pub phi_acceptance: f64,
    pub clamp_events: u64,
    pub adaptation_frozen: bool,
}

fn clamp(psi: f64, events: &mut u64) -> f64 {
    if psi.abs() > PSI_CLAMP {
        *events += 1;
        psi.clamp(-PSI_CLAMP, PSI_CLAMP)
    } else {
        psi
    }
}

/// `y psi - exp(psi)` with the overflow guard.
fn site_loglik(y: u64, psi: f64) -> f64 {
    let psi = psi.clamp(-PSI_CLAMP, PSI_CLAMP);
    y as f64 * psi - psi.exp()
}

struct Adapter {
    log_scale: Vec<f64>,
    accepted: Vec<u32>,
    batches: usize,
    target: f64,
}

impl Adapter {
    fn new(size: usize, initial: f64, target: f64) -> Self {
        Self {
            log_scale: vec![initial.ln(); size],
            accepted: vec![0; size],
            batches: 0,
            target,
        }
    }

    fn scale(&self, k: usize) -> f64 {
        self.log_scale[k].exp()
    }

    /// Robbins-Monro style step on the log scale after each batch.
    fn end_batch(&mut self) {
        self.batches += 1;
        let step = (1.0 / (self.batches as f64).sqrt()).min(0.1);
        for (ls, acc) in self.log_scale.iter_mut().zip(self.accepted.iter_mut()) {
            let rate = f64::from(*acc) / BATCH as f64;
            if rate > self.target {
                *ls += step;
            } else {
                *ls -= step;
            }
            *acc = 0;
        }
    }
}

struct State {
    beta: Vec<f64>,
    theta: Vec<f64>,
    phi: Vec<f64>,
    sigma_theta_sq: f64,
    tau_c: f64,
    /// `x_i . beta` (+ offset)
    eta: Vec<f64>,
}

impl State {
    fn psi(&self, i: usize) -> f64 {
        self.eta[i] + self.theta[i] + self.phi[i]
    }
}

fn ln_inverse_gamma(x: f64, prior: InverseGammaPrior) -> f64 {
    -(prior.shape + 1.0) * x.ln() - prior.scale / x
}

fn ln_gamma_kernel(x: f64, prior: GammaPrior) -> f64 {
    (prior.shape - 1.0) * x.ln() - prior.rate * x
}

/// Log-likelihood change when every `psi_i` moves by `shift[i] * (f - 1)`.
fn scaled_loglik_change(problem: &Problem<'_>, state: &State, effect: &[f64], f: f64) -> f64 {
    (0..problem.n())
        .map(|i| {
            let psi = state.psi(i);
            site_loglik(problem.y[i], psi + (f - 1.0) * effect[i]) - site_loglik(problem.y[i], psi)
        })
        .sum()
}

fn check_finite(value: f64, what: &str, sweep: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what} became {value} at sweep {sweep}")))
    }
}

fn initial_state(problem: &Problem<'_>, rng: &mut ChaCha8Rng) -> State {
    let n = problem.n();
    let spec = problem.spec;
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let beta: Vec<f64> = problem
        .beta_start
        .iter()
        .zip(&problem.beta_start_sd)
        .map(|(b, sd)| b + 2.0 * sd * normal())
        .collect();
    let theta = if spec.heterogeneity {
        (0..n).map(|_| 0.1 * normal()).collect()
    } else {
        vec![0.0; n]
    };
    let mut phi = if spec.spatial {
        (0..n).map(|_| 0.1 * normal()).collect()
    } else {
        vec![0.0; n]
    };
    if let Some(c) = &problem.components {
        center_phi(&mut phi, c);
    }
    let sigma_theta_sq = spec
        .fixed_sigma_theta_sq
        .unwrap_or_else(|| (0.05f64.ln() + normal()).exp());
    let tau_c = spec.fixed_tau_c.unwrap_or_else(|| normal().exp());
    let eta = (0..n).map(|i| problem.design.linear_part(i, &beta)).collect();
    State {
        beta,
        theta,
        phi,
        sigma_theta_sq,
        tau_c,
        eta,
    }
}

fn empirical_covariance(draws: &[Vec<f64>], p: usize) -> DMatrix<f64> {
    let m = draws.len() as f64;
    let mut mean = DVector::zeros(p);
    for d in draws {
        mean += DVector::from_column_slice(d);
    }
    mean /= m;
    let mut cov = DMatrix::zeros(p, p);
    for d in draws {
        let c = DVector::from_column_slice(d) - &mean;
        cov += &c * c.transpose();
    }
    cov / (m - 1.0)
}

pub(crate) fn run_chain(problem: &Problem<'_>, config: &McmcConfig, mut rng: ChaCha8Rng) -> Result<ChainOutput> {
    let n = problem.n();
    let p = problem.p();
    let spec = problem.spec;
    let mut state = initial_state(problem, &mut rng);

    let mut beta_adapt = Adapter::new(1, 2.38 / (p as f64).sqrt(), BLOCK_TARGET_ACCEPTANCE);
    let mut shift_adapt = Adapter::new(1, 2.38 / (p as f64).sqrt(), BLOCK_TARGET_ACCEPTANCE);
    let mut scale_adapt = Adapter::new(2, 0.1, config.target_acceptance);
    let mut theta_adapt = Adapter::new(n, 0.3, config.target_acceptance);
    let mut phi_adapt = Adapter::new(n, 0.3, config.target_acceptance);
    let chol = problem
        .proposal_cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("coefficient proposal covariance is not positive definite".into()))?
        .l();
    // shaped by the running posterior covariance of beta
    let mut shift_chol = chol.clone();
    let islands = problem.weights.map(|w| w.islands()).unwrap_or_default();
    let mut xd = vec![0.0; n];
    let mut moved = vec![0.0; n];
    let cov_window = (config.burn_in / 10).max(200);
    let mut window_draws: Vec<Vec<f64>> = Vec::with_capacity(cov_window);

    let kept_capacity = config.iterations / config.thin;
    let mut out = ChainOutput {
        beta: vec![Vec::with_capacity(kept_capacity); p],
        sigma_theta_sq: Vec::with_capacity(kept_capacity),
        tau_c: Vec::with_capacity(kept_capacity),
        alpha: Vec::with_capacity(kept_capacity),
        deviance: Vec::with_capacity(kept_capacity),
        sum_theta: vec![0.0; n],
        sum_phi: vec![0.0; n],
        sum_lambda: vec![0.0; n],
        kept: 0,
        beta_acceptance: 0.0,
        translation_acceptance: 0.0,
        theta_acceptance: 0.0,
        phi_acceptance: 0.0,
        clamp_events: 0,
        adaptation_frozen: false,
    };
    let mut post_accept = [0u64; 4];
    let mut eta_new = vec![0.0; n];
    let total = config.burn_in + config.iterations;

    for sweep in 0..total {
        let adapting = sweep < config.burn_in;
        if !adapting {
            out.adaptation_frozen = true;
        }

        // coefficient block
        let z: DVector<f64> = DVector::from_fn(p, |_, _| rng.sample(StandardNormal));
        let step = &chol * z * beta_adapt.scale(0);
        let proposal: Vec<f64> = state.beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
        let mut delta = 0.0;
        for (k, prior) in problem.priors.iter().enumerate() {
            delta -= ((proposal[k] - prior.mean).powi(2) - (state.beta[k] - prior.mean).powi(2)) / (2.0 * prior.variance);
        }
        for i in 0..n {
            eta_new[i] = problem.design.linear_part(i, &proposal);
            let rest = state.theta[i] + state.phi[i];
            delta += site_loglik(problem.y[i], eta_new[i] + rest) - site_loglik(problem.y[i], state.eta[i] + rest);
        }
        if delta.is_nan() {
            return Err(Error::Numerical(format!("coefficient acceptance ratio is NaN at sweep {sweep}")));
        }
        if rng.random::<f64>().ln() < delta {
            state.beta = proposal;
            std::mem::swap(&mut state.eta, &mut eta_new);
            beta_adapt.accepted[0] += 1;
            if !adapting {
                post_accept[0] += 1;
            }
        }

        if let Some(target) = problem.translation_target() {
            let z: DVector<f64> = DVector::from_fn(p, |_, _| rng.sample(StandardNormal));
            let step: Vec<f64> = (&shift_chol * z * shift_adapt.scale(0)).iter().copied().collect();
            let mut delta = 0.0;
            for (k, prior) in problem.priors.iter().enumerate() {
                let b = state.beta[k] + step[k];
                delta -= ((b - prior.mean).powi(2) - (state.beta[k] - prior.mean).powi(2)) / (2.0 * prior.variance);
            }
            for (i, v) in xd.iter_mut().enumerate() {
                *v = problem.design.linear_part(i, &step) - problem.design.offset().map_or(0.0, |o| o[i]);
            }
            let mut island_theta = false;
            match target {
                Latent::Phi => {
                    let w = problem.weights.expect("spatial model has weights");
                    for i in 0..n {
                        moved[i] = state.phi[i] - xd[i];
                    }
                    for &i in &islands {
                        moved[i] = 0.0;
                    }
                    delta -= 0.5 * state.tau_c * (icar_quadratic_form(&moved, w) - icar_quadratic_form(&state.phi, w));
                    if spec.heterogeneity && !islands.is_empty() {
                        // islands have no spatial effect; their theta absorbs the shift
                        island_theta = true;
                        for &i in &islands {
                            let t = state.theta[i] - xd[i];
                            delta -= (t * t - state.theta[i] * state.theta[i]) / (2.0 * state.sigma_theta_sq);
                        }
                    } else {
                        for &i in &islands {
                            let psi = state.psi(i);
                            delta += site_loglik(problem.y[i], psi + xd[i]) - site_loglik(problem.y[i], psi);
                        }
                    }
                }
                Latent::Theta => {
                    for i in 0..n {
                        moved[i] = state.theta[i] - xd[i];
                        delta -= (moved[i] * moved[i] - state.theta[i] * state.theta[i]) / (2.0 * state.sigma_theta_sq);
                    }
                }
            }
            if delta.is_nan() {
                return Err(Error::Numerical(format!("translation acceptance ratio is NaN at sweep {sweep}")));
            }
            if rng.random::<f64>().ln() < delta {
                for (b, s) in state.beta.iter_mut().zip(&step) {
                    *b += s;
                }
                for (e, d) in state.eta.iter_mut().zip(&xd) {
                    *e += d;
                }
                match target {
                    Latent::Phi => {
                        std::mem::swap(&mut state.phi, &mut moved);
                        if island_theta {
                            for &i in &islands {
                                state.theta[i] -= xd[i];
                            }
                        }
                    }
                    Latent::Theta => std::mem::swap(&mut state.theta, &mut moved),
                }
                shift_adapt.accepted[0] += 1;
                if !adapting {
                    post_accept[3] += 1;
                }
            }
        }

        // unstructured effects
        if spec.heterogeneity {
            for i in 0..n {
                let current = state.theta[i];
                let proposal = current + theta_adapt.scale(i) * rng.sample::<f64, _>(StandardNormal);
                let psi = state.psi(i);
                let delta = site_loglik(problem.y[i], psi + proposal - current) - site_loglik(problem.y[i], psi)
                    - (proposal * proposal - current * current) / (2.0 * state.sigma_theta_sq);
                if rng.random::<f64>().ln() < delta {
                    state.theta[i] = proposal;
                    theta_adapt.accepted[i] += 1;
                    if !adapting {
                        post_accept[1] += 1;
                    }
                }
            }
        }

        // spatial effects
        if let (true, Some(w)) = (spec.spatial, problem.weights) {
            for i in 0..n {
                let (mean, variance) = match car_conditional(&state.phi, w, state.tau_c, i) {
                    CarConditional::Island => continue,
                    CarConditional::Normal { mean, variance } => (mean, variance),
                };
                let current = state.phi[i];
                let proposal = current + phi_adapt.scale(i) * rng.sample::<f64, _>(StandardNormal);
                let psi = state.psi(i);
                let delta = site_loglik(problem.y[i], psi + proposal - current) - site_loglik(problem.y[i], psi)
                    - ((proposal - mean).powi(2) - (current - mean).powi(2)) / (2.0 * variance);
                if rng.random::<f64>().ln() < delta {
                    state.phi[i] = proposal;
                    phi_adapt.accepted[i] += 1;
                    if !adapting {
                        post_accept[2] += 1;
                    }
                }
            }
        }

        if spec.heterogeneity && spec.fixed_sigma_theta_sq.is_none() {
            let eps = scale_adapt.scale(0) * rng.sample::<f64, _>(StandardNormal);
            let f = eps.exp();
            let proposal = state.sigma_theta_sq * f * f;
            let delta = scaled_loglik_change(problem, &state, &state.theta, f)
                + ln_inverse_gamma(proposal, spec.sigma_theta_prior)
                - ln_inverse_gamma(state.sigma_theta_sq, spec.sigma_theta_prior)
                + 2.0 * eps;
            if rng.random::<f64>().ln() < delta {
                state.sigma_theta_sq = proposal;
                state.theta.iter_mut().for_each(|t| *t *= f);
                scale_adapt.accepted[0] += 1;
            }
        }
        if spec.spatial && spec.fixed_tau_c.is_none() {
            let eps = scale_adapt.scale(1) * rng.sample::<f64, _>(StandardNormal);
            let f = eps.exp();
            let proposal = state.tau_c / (f * f);
            let delta = scaled_loglik_change(problem, &state, &state.phi, f) + ln_gamma_kernel(proposal, spec.tau_c_prior)
                - ln_gamma_kernel(state.tau_c, spec.tau_c_prior)
                - 2.0 * eps;
            if rng.random::<f64>().ln() < delta {
                state.tau_c = proposal;
                state.phi.iter_mut().for_each(|v| *v *= f);
                scale_adapt.accepted[1] += 1;
            }
        }

        if spec.heterogeneity && spec.fixed_sigma_theta_sq.is_none() {
            state.sigma_theta_sq = update_sigma_theta(&state.theta, spec.sigma_theta_prior, &mut rng);
            check_finite(state.sigma_theta_sq, "sigma_theta^2", sweep)?;
        }
        if let (true, Some(w), Some(c)) = (spec.spatial, problem.weights, &problem.components) {
            if spec.fixed_tau_c.is_none() {
                state.tau_c = update_tau_c(&state.phi, w, c.count, spec.tau_c_prior, &mut rng);
                check_finite(state.tau_c, "tau_c", sweep)?;
            }
            #[cfg(debug_assertions)]
            let before: Vec<f64> = (0..n).map(|i| state.psi(i)).collect();
            let means = center_phi(&mut state.phi, c);
            if problem.shift_intercept_on_centering() {
                state.beta[0] += means[0];
                for e in state.eta.iter_mut() {
                    *e += means[0];
                }
                #[cfg(debug_assertions)]
                for (i, b) in before.iter().enumerate() {
                    debug_assert!((state.psi(i) - b).abs() <= 1e-9 * (1.0 + b.abs()), "re-centering moved psi");
                }
            }
        }

        if adapting && (sweep + 1) % BATCH == 0 {
            beta_adapt.end_batch();
            shift_adapt.end_batch();
            scale_adapt.end_batch();
            theta_adapt.end_batch();
            phi_adapt.end_batch();
        }
        if adapting {
            window_draws.push(state.beta.clone());
            if window_draws.len() == cov_window {
                let mut cov = empirical_covariance(&window_draws, p);
                let ridge = 1e-10 * (cov.trace() / p as f64).max(1e-12);
                for k in 0..p {
                    cov[(k, k)] += ridge;
                }
                if let Some(c) = cov.cholesky() {
                    shift_chol = c.l();
                }
                window_draws.clear();
            }
        }
        debug_assert!(adapting || out.adaptation_frozen);

        if !adapting && (sweep - config.burn_in + 1) % config.thin == 0 {
            let mut dev = 0.0;
            for i in 0..n {
                let psi = clamp(state.psi(i), &mut out.clamp_events);
                let lambda = psi.exp();
                dev += problem.y[i] as f64 * psi - lambda - problem.ln_fact[i];
                out.sum_lambda[i] += lambda;
                out.sum_theta[i] += state.theta[i];
                out.sum_phi[i] += state.phi[i];
            }
            let dev = -2.0 * dev;
            check_finite(dev, "deviance", sweep)?;
            out.deviance.push(dev);
            for (k, b) in state.beta.iter().enumerate() {
                out.beta[k].push(*b);
            }
            out.sigma_theta_sq.push(state.sigma_theta_sq);
            out.tau_c.push(state.tau_c);
            out.alpha.push(alpha_spatial_share(&state.theta, &state.phi)?.unwrap_or(f64::NAN));
            out.kept += 1;
        }
    }

    let post = config.iterations as f64;
    out.beta_acceptance = post_accept[0] as f64 / post;
    out.translation_acceptance = post_accept[3] as f64 / post;
    out.theta_acceptance = post_accept[1] as f64 / (post * n as f64);
    let free_phi = problem.weights.map_or(0, |w| w.len() - w.islands().len());
    out.phi_acceptance = if free_phi == 0 { 0.0 } else { post_accept[2] as f64 / (post * free_phi as f64) };
    Ok(out)
}
