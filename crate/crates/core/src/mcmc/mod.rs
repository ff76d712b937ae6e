//! MCMC fitting of the Poisson-lognormal CAR model.

mod chain;
pub mod conjugate;
pub mod diagnostics;
pub mod irls;
mod report;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DesignMatrix, ZoneRecord};
use crate::error::{Error, Result};
use crate::eval::{deviance, dic, r_squared};
use crate::model::{clamp_psi, ln_factorial, CoefficientPriors, ModelSpec, NormalPrior};
use crate::weights::ProximityMatrix;

pub use chain::BLOCK_TARGET_ACCEPTANCE;
pub use conjugate::{update_sigma_theta, update_tau_c};
pub use diagnostics::gelman_rubin;
pub use irls::{irls_poisson_fit, IrlsFit};
pub use report::{ChainAcceptance, ModelEcho, ParameterSummary, PosteriorReport};

use chain::{run_chain, ChainOutput, Problem};

/// Sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub chains: usize,
    /// Adaptation and burn-in sweeps per chain, discarded.
    pub burn_in: usize,
    /// Post-burn-in sweeps per chain.
    pub iterations: usize,
    pub thin: usize,
    pub seed: u64,
    /// Target acceptance of the scalar random-walk updates.
    pub target_acceptance: f64,
    pub bgr_threshold: f64,
    /// Worker threads; `None` uses one per chain up to the available cores.
    /// Never affects the output.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 2,
            burn_in: 20_000,
            iterations: 50_000,
            thin: 1,
            seed: 1,
            target_acceptance: 0.44,
            bgr_threshold: 1.1,
            threads: None,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains < 2 {
            return Err(Error::Validation("at least two chains are needed for convergence checks".into()));
        }
        if self.burn_in == 0 || self.iterations == 0 || self.thin == 0 {
            return Err(Error::Validation("burn-in, iterations and thin must be positive".into()));
        }
        if self.iterations / self.thin < 2 {
            return Err(Error::Validation("fewer than two kept draws per chain".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Validation("target acceptance must lie in (0, 1)".into()));
        }
        if !(self.bgr_threshold >= 1.0) {
            return Err(Error::Validation("BGR threshold must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Validation("thread count must be positive".into()));
        }
        Ok(())
    }
}

/// Resolves the coefficient priors of `spec` for a design with `p` columns.
pub fn coefficient_priors(spec: &ModelSpec, design: &DesignMatrix<f64>, y: &[u64]) -> Result<Vec<NormalPrior>> {
    let p = design.cols();
    match &spec.coefficient_priors {
        CoefficientPriors::Vague { variance } => Ok(vec![NormalPrior { mean: 0.0, variance: *variance }; p]),
        CoefficientPriors::Informative { variance_inflation } => {
            let fit = irls_poisson_fit(design, y)?;
            Ok((0..p)
                .map(|k| NormalPrior {
                    mean: fit.beta[k],
                    variance: (fit.covariance[(k, k)] * variance_inflation).max(1e-12),
                })
                .collect())
        }
        CoefficientPriors::Explicit { priors } => {
            if priors.len() != p {
                return Err(Error::Dimension(format!("{} coefficient priors for {p} design columns", priors.len())));
            }
            Ok(priors.clone())
        }
    }
}

/// Fits the model described by `spec` to the crash counts in `records`.
pub fn fit(
    records: &[ZoneRecord],
    design: &DesignMatrix<f64>,
    weights: Option<&ProximityMatrix<f64>>,
    spec: &ModelSpec,
    config: &McmcConfig,
) -> Result<PosteriorReport> {
    let y: Vec<u64> = records.iter().map(|r| r.crash_count).collect();
    fit_counts(&y, design, weights, spec, config)
}

/// [`fit`] on a bare count vector.
pub fn fit_counts(
    y: &[u64],
    design: &DesignMatrix<f64>,
    weights: Option<&ProximityMatrix<f64>>,
    spec: &ModelSpec,
    config: &McmcConfig,
) -> Result<PosteriorReport> {
    spec.validate()?;
    config.validate()?;
    let n = y.len();
    if design.rows() != n {
        return Err(Error::Dimension(format!("{n} counts for {} design rows", design.rows())));
    }
    let weights = if spec.spatial {
        let w = weights.ok_or_else(|| Error::Validation("spatial model needs a proximity matrix".into()))?;
        if w.len() != n {
            return Err(Error::Dimension(format!("proximity matrix is {0}x{0} for {n} zones", w.len())));
        }
        Some(w)
    } else {
        None
    };
    let mut warnings = design.warnings.clone();
    if let Some(w) = weights {
        let islands = w.islands();
        if !islands.is_empty() {
            warnings.push(format!("{} island zone(s) with phi pinned at 0: {islands:?}", islands.len()));
        }
    }

    let start = irls_poisson_fit(design, y)?;
    let priors = coefficient_priors(spec, design, y)?;
    let p = design.cols();
    // excluded all-zero columns still need a proposal direction
    let mut proposal_cov = start.covariance.clone();
    for &k in &start.excluded_columns {
        proposal_cov[(k, k)] = priors[k].variance.min(1.0);
    }
    let beta_start_sd: Vec<f64> = (0..p).map(|k| proposal_cov[(k, k)].sqrt()).collect();
    let problem = Problem {
        y,
        ln_fact: y.iter().map(|&v| ln_factorial(v)).collect(),
        design,
        weights,
        components: weights.map(|w| w.connected_components()),
        spec,
        priors,
        beta_start: start.beta.clone(),
        beta_start_sd,
        proposal_cov,
    };

    let outputs = run_chains(&problem, config)?;
    let mut report = report::assemble(&problem, config, &outputs, warnings)?;
    finish_fit_statistics(&problem, &outputs, &mut report)?;
    Ok(report)
}

fn run_chains(problem: &Problem<'_>, config: &McmcConfig) -> Result<Vec<ChainOutput>> {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let threads = config.threads.unwrap_or(available).clamp(1, config.chains);
    let rng_for = |chain: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(chain as u64 + 1);
        rng
    };
    let mut slots: Vec<Option<Result<ChainOutput>>> = (0..config.chains).map(|_| None).collect();
    if threads == 1 {
        for (c, slot) in slots.iter_mut().enumerate() {
            *slot = Some(run_chain(problem, config, rng_for(c)));
        }
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|worker| {
                    let rng_for = &rng_for;
                    scope.spawn(move || {
                        (worker..config.chains)
                            .step_by(threads)
                            .map(|c| (c, run_chain(problem, config, rng_for(c))))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (c, out) in h.join().expect("chain worker panicked") {
                    slots[c] = Some(out);
                }
            }
        });
    }
    slots.into_iter().map(|s| s.expect("every chain ran")).collect()
}

/// DIC, fitted values and R-squared from pooled chain output.
fn finish_fit_statistics(problem: &Problem<'_>, outputs: &[ChainOutput], report: &mut PosteriorReport) -> Result<()> {
    let n = problem.y.len();
    let kept: usize = outputs.iter().map(|o| o.kept).sum();
    let pooled_mean = |f: &dyn Fn(&ChainOutput) -> &Vec<f64>| -> Vec<f64> {
        (0..n)
            .map(|i| outputs.iter().map(|o| f(o)[i]).sum::<f64>() / kept as f64)
            .collect()
    };
    let theta_mean = pooled_mean(&|o| &o.sum_theta);
    let phi_mean = pooled_mean(&|o| &o.sum_phi);
    let fitted = pooled_mean(&|o| &o.sum_lambda);
    let beta_mean: Vec<f64> = (0..problem.design.cols())
        .map(|k| outputs.iter().flat_map(|o| o.beta[k].iter()).sum::<f64>() / kept as f64)
        .collect();
    let plug_in: Vec<f64> = (0..n)
        .map(|i| clamp_psi(problem.design.linear_part(i, &beta_mean) + theta_mean[i] + phi_mean[i]).lambda)
        .collect();
    let trace: Vec<f64> = outputs.iter().flat_map(|o| o.deviance.iter().copied()).collect();
    report.dic = dic(&trace, deviance(problem.y, &plug_in)?)?;
    if report.dic.negative_p_d {
        report.warnings.push(format!("negative effective number of parameters ({:.3})", report.dic.p_d));
    }
    let observed: Vec<f64> = problem.y.iter().map(|&v| v as f64).collect();
    report.r_squared = match r_squared(&observed, &fitted) {
        Ok(r) => Some(r),
        Err(e) => {
            report.warnings.push(format!("R-squared unavailable: {e}"));
            None
        }
    };
    report.fitted = fitted;
    report.theta_mean = theta_mean;
    report.phi_mean = phi_mean;
    Ok(())
}
