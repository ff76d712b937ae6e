//! Parameter-recovery harness: simulate from a known truth, refit, and
//! count how often the credible intervals cover the truth.

use serde::{Deserialize, Serialize};

use crate::data::build_design;
use crate::error::Result;
use crate::mcmc::{fit, McmcConfig, PosteriorReport};
use crate::model::ModelSpec;
use crate::synth::{generate_lattice, simulate_dataset, CovariateDistributions, Truth};
use crate::weights::build_weights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOptions {
    pub replicates: usize,
    /// Side of the square zone lattice.
    pub lattice: usize,
    pub lanes: u32,
    /// Replicate `r` uses `seed + r` for both simulation and fitting.
    pub seed: u64,
    pub covariates: CovariateDistributions,
    pub config: McmcConfig,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            replicates: 20,
            lattice: 13,
            lanes: 4,
            seed: 1,
            covariates: CovariateDistributions::default(),
            config: McmcConfig::default(),
        }
    }
}

/// Outcome of one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub seed: u64,
    /// Whether each coefficient's 95% interval covers its true value.
    pub covered: Vec<bool>,
    pub max_coefficient_rhat: f64,
    pub converged: bool,
    pub alpha_mean: Option<f64>,
    /// 95% BCI of alpha.
    pub alpha_interval: Option<(f64, f64)>,
    /// Realized `sd(phi) / (sd(theta) + sd(phi))` of the simulated effects.
    pub injected_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub coefficients: Vec<String>,
    pub truth: Vec<f64>,
    /// Share of replicates covering each coefficient.
    pub coverage: Vec<f64>,
    pub replicates: Vec<Replicate>,
}

impl RecoverySummary {
    pub fn min_coverage(&self) -> f64 {
        self.coverage.iter().copied().fold(1.0, f64::min)
    }

    pub fn render_table(&self) -> String {
        let mut out = format!("{:<28} {:>10} {:>9}\n", "coefficient", "truth", "coverage");
        for ((name, t), c) in self.coefficients.iter().zip(&self.truth).zip(&self.coverage) {
            out.push_str(&format!("{name:<28} {t:>10.3} {c:>9.2}\n"));
        }
        out.push_str(&format!("\n{:<6} {:>10} {:>10} {:>10}\n", "seed", "max R-hat", "alpha", "injected"));
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        for r in &self.replicates {
            out.push_str(&format!(
                "{:<6} {:>10.3} {:>10} {:>10}\n",
                r.seed,
                r.max_coefficient_rhat,
                opt(r.alpha_mean),
                opt(r.injected_share)
            ));
        }
        out
    }
}

fn replicate(truth: &Truth, spec: &ModelSpec, options: &RecoveryOptions, seed: u64) -> Result<(Vec<String>, Vec<f64>, Replicate)> {
    let topology = generate_lattice(options.lattice, options.lanes)?;
    let (records, hidden) = simulate_dataset(&topology, truth, &options.covariates, seed)?;
    let design = build_design::<f64>(&records, &spec.design)?;
    let beta = truth.beta_for(design.labels())?;
    let weights = build_weights::<f64>(&topology, spec.proximity);
    let config = McmcConfig { seed, ..options.config.clone() };
    let report: PosteriorReport = fit(&records, &design, spec.spatial.then_some(&weights), spec, &config)?;
    let covered = report.coefficients.iter().zip(&beta).map(|(c, b)| c.covers(*b)).collect();
    let max_coefficient_rhat = report
        .coefficients
        .iter()
        .map(|c| c.rhat.unwrap_or(f64::INFINITY))
        .fold(1.0, f64::max);
    Ok((
        design.labels().to_vec(),
        beta,
        Replicate {
            seed,
            covered,
            max_coefficient_rhat,
            converged: report.converged,
            alpha_mean: report.alpha.as_ref().map(|a| a.mean),
            alpha_interval: report.alpha.as_ref().map(|a| (a.lower, a.upper)),
            injected_share: hidden.spatial_share,
        },
    ))
}

/// Fits `spec` to `options.replicates` datasets simulated from `truth`.
pub fn run_recovery(truth: &Truth, spec: &ModelSpec, options: &RecoveryOptions) -> Result<RecoverySummary> {
    truth.validate()?;
    spec.validate()?;
    options.config.validate()?;
    if options.replicates == 0 {
        return Err(crate::Error::Validation("at least one replicate is needed".into()));
    }
    let spec = ModelSpec {
        design: truth.design.clone(),
        ..spec.clone()
    };
    let mut coefficients = Vec::new();
    let mut true_beta = Vec::new();
    let mut replicates = Vec::with_capacity(options.replicates);
    for r in 0..options.replicates {
        let (labels, beta, rep) = replicate(truth, &spec, options, options.seed + r as u64)?;
        coefficients = labels;
        true_beta = beta;
        replicates.push(rep);
    }
    let coverage = (0..coefficients.len())
        .map(|k| replicates.iter().filter(|r| r.covered[k]).count() as f64 / replicates.len() as f64)
        .collect();
    Ok(RecoverySummary {
        coefficients,
        truth: true_beta,
        coverage,
        replicates,
    })
}
