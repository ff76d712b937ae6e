use serde::{Deserialize, Serialize};

use super::chain::{ChainOutput, Problem};
use super::diagnostics::{gelman_rubin, summarize_draws};
use super::McmcConfig;
use crate::error::Result;
use crate::eval::{Dic, RunSummary};
use crate::weights::WeightMode;

/// Posterior summary of one scalar quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// 2.5% posterior quantile.
    pub lower: f64,
    /// 97.5% posterior quantile.
    pub upper: f64,
    pub rhat: Option<f64>,
    /// The 95% interval excludes zero.
    pub significant: bool,
}

impl ParameterSummary {
    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainAcceptance {
    pub coefficients: f64,
    /// Joint coefficient and random-effect translation.
    pub translation: f64,
    pub theta: f64,
    pub phi: f64,
}

/// What was fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEcho {
    pub zones: usize,
    pub heterogeneity: bool,
    pub spatial: bool,
    pub proximity: Option<WeightMode>,
    pub components: Option<usize>,
    pub islands: Vec<usize>,
    pub standardized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub model: ModelEcho,
    pub config: McmcConfig,
    pub coefficients: Vec<ParameterSummary>,
    pub tau_c: Option<ParameterSummary>,
    pub sigma_theta_sq: Option<ParameterSummary>,
    /// `1 / sigma_theta^2`.
    pub theta_precision: Option<ParameterSummary>,
    pub alpha: Option<ParameterSummary>,
    pub dic: Dic,
    pub r_squared: Option<f64>,
    /// Posterior mean of `lambda_i`.
    pub fitted: Vec<f64>,
    pub theta_mean: Vec<f64>,
    pub phi_mean: Vec<f64>,
    pub acceptance: Vec<ChainAcceptance>,
    /// Per-chain deviance trace, every `deviance_trace_stride`-th kept draw.
    pub deviance_trace: Vec<Vec<f64>>,
    pub deviance_trace_stride: usize,
    pub max_rhat: f64,
    pub converged: bool,
    pub adaptation_frozen: bool,
    pub clamp_events: u64,
    pub warnings: Vec<String>,
}

const TRACE_POINTS: usize = 1000;

/// Summary over chains; `log_scale` computes R-hat on `ln` of the draws.
fn summarize(name: &str, chains: &[Vec<f64>], log_scale: bool, with_rhat: bool) -> Option<ParameterSummary> {
    let pooled: Vec<f64> = chains.iter().flatten().copied().filter(|v| !v.is_nan()).collect();
    if pooled.is_empty() {
        return None;
    }
    let complete = pooled.len() == chains.iter().map(Vec::len).sum::<usize>();
    let rhat = (with_rhat && complete)
        .then(|| {
            let transformed: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| if log_scale { c.iter().map(|v| v.ln()).collect() } else { c.clone() })
                .collect();
            let refs: Vec<&[f64]> = transformed.iter().map(Vec::as_slice).collect();
            gelman_rubin(&refs).ok()
        })
        .flatten();
    let (mean, sd, lower, upper) = summarize_draws(&pooled);
    Some(ParameterSummary {
        name: name.to_string(),
        mean,
        sd,
        lower,
        upper,
        rhat,
        significant: lower > 0.0 || upper < 0.0,
    })
}

pub(super) fn assemble(
    problem: &Problem<'_>,
    config: &McmcConfig,
    outputs: &[ChainOutput],
    warnings: Vec<String>,
) -> Result<PosteriorReport> {
    let spec = problem.spec;
    let design = problem.design;
    let p = design.cols();

    // coefficient draws per chain on the reporting scale
    let per_chain_beta: Vec<Vec<Vec<f64>>> = outputs
        .iter()
        .map(|o| {
            if design.is_standardized() {
                let mut cols = vec![Vec::with_capacity(o.kept); p];
                for t in 0..o.kept {
                    let draw: Vec<f64> = (0..p).map(|k| o.beta[k][t]).collect();
                    for (k, v) in design.back_transform(&draw).into_iter().enumerate() {
                        cols[k].push(v);
                    }
                }
                cols
            } else {
                o.beta.clone()
            }
        })
        .collect();
    let coefficients: Vec<ParameterSummary> = (0..p)
        .map(|k| {
            let chains: Vec<Vec<f64>> = per_chain_beta.iter().map(|c| c[k].clone()).collect();
            summarize(&design.labels()[k], &chains, false, true).expect("non-empty coefficient draws")
        })
        .collect();

    let gather = |f: &dyn Fn(&ChainOutput) -> Vec<f64>| -> Vec<Vec<f64>> { outputs.iter().map(f).collect() };
    let tau_c = spec
        .spatial
        .then(|| summarize("tau_c", &gather(&|o| o.tau_c.clone()), true, spec.fixed_tau_c.is_none()))
        .flatten();
    let sigma_free = spec.fixed_sigma_theta_sq.is_none();
    let sigma_theta_sq = spec
        .heterogeneity
        .then(|| summarize("sigma_theta_sq", &gather(&|o| o.sigma_theta_sq.clone()), true, sigma_free))
        .flatten();
    let theta_precision = spec
        .heterogeneity
        .then(|| {
            let prec = gather(&|o| o.sigma_theta_sq.iter().map(|v| 1.0 / v).collect());
            summarize("theta_precision", &prec, true, sigma_free)
        })
        .flatten();
    let alpha = (spec.spatial || spec.heterogeneity)
        .then(|| summarize("alpha", &gather(&|o| o.alpha.clone()), false, true))
        .flatten();

    let rhats = coefficients
        .iter()
        .chain(tau_c.iter())
        .chain(sigma_theta_sq.iter())
        .chain(alpha.iter())
        .filter_map(|s| s.rhat);
    let max_rhat = rhats.fold(1.0f64, |m, r| if r.is_nan() { f64::INFINITY } else { m.max(r) });

    let kept = outputs[0].kept;
    let stride = kept.div_ceil(TRACE_POINTS).max(1);
    Ok(PosteriorReport {
        model: ModelEcho {
            zones: problem.y.len(),
            heterogeneity: spec.heterogeneity,
            spatial: spec.spatial,
            proximity: problem.weights.and_then(|w| w.mode()).or(spec.spatial.then_some(spec.proximity)),
            components: problem.components.as_ref().map(|c| c.count),
            islands: problem.weights.map(|w| w.islands()).unwrap_or_default(),
            standardized: design.is_standardized(),
        },
        config: config.clone(),
        coefficients,
        tau_c,
        sigma_theta_sq,
        theta_precision,
        alpha,
        dic: Dic {
            mean_deviance: f64::NAN,
            deviance_at_mean: f64::NAN,
            p_d: f64::NAN,
            dic: f64::NAN,
            negative_p_d: false,
        },
        r_squared: None,
        fitted: Vec::new(),
        theta_mean: Vec::new(),
        phi_mean: Vec::new(),
        acceptance: outputs
            .iter()
            .map(|o| ChainAcceptance {
                coefficients: o.beta_acceptance,
                translation: o.translation_acceptance,
                theta: o.theta_acceptance,
                phi: o.phi_acceptance,
            })
            .collect(),
        deviance_trace: outputs
            .iter()
            .map(|o| o.deviance.iter().step_by(stride).copied().collect())
            .collect(),
        deviance_trace_stride: stride,
        max_rhat,
        converged: max_rhat <= config.bgr_threshold,
        adaptation_frozen: outputs.iter().all(|o| o.adaptation_frozen),
        clamp_events: outputs.iter().map(|o| o.clamp_events).sum(),
        warnings,
    })
}

impl PosteriorReport {
    pub fn coefficient(&self, name: &str) -> Option<&ParameterSummary> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn run_summary(&self, name: &str) -> RunSummary {
        RunSummary {
            name: name.to_string(),
            dic: self.dic,
            r_squared: self.r_squared,
            alpha_mean: self.alpha.as_ref().map(|a| a.mean),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Plain-text coefficient table: mean, 95% BCI and R-hat per row;
    /// `*` marks intervals that exclude zero.
    pub fn render_table(&self) -> String {
        let mut out = format!("{:<28} {:>10}  {:<24} {:>6}\n", "Variable", "Mean", "(95% BCI)", "R-hat");
        let row = |s: &ParameterSummary, label: &str, mark: bool| {
            let star = if mark && s.significant { "*" } else { " " };
            let rhat = s.rhat.map_or_else(|| "-".into(), |r| format!("{r:.3}"));
            format!(
                "{:<28} {:>9.3}{star}  {:<24} {:>6}\n",
                label,
                s.mean,
                format!("({:.3}, {:.3})", s.lower, s.upper),
                rhat
            )
        };
        for c in &self.coefficients {
            out.push_str(&row(c, &c.name, true));
        }
        if let Some(s) = &self.tau_c {
            out.push_str(&row(s, "CAR effect (tau_c)", false));
        }
        if let Some(s) = &self.theta_precision {
            out.push_str(&row(s, "Random effect (1/sigma^2)", false));
        }
        if let Some(s) = &self.sigma_theta_sq {
            out.push_str(&row(s, "Random effect var (sigma^2)", false));
        }
        if let Some(s) = &self.alpha {
            out.push_str(&row(s, "alpha", false));
        }
        out.push_str(&format!(
            "{:<28} {:>9.2}   (Dbar {:.2}, pD {:.2})\n",
            "DIC", self.dic.dic, self.dic.mean_deviance, self.dic.p_d
        ));
        if let Some(r2) = self.r_squared {
            out.push_str(&format!("{:<28} {:>9.3}\n", "R2", r2));
        }
        out.push_str(&format!(
            "converged: {} (max R-hat {:.3}, threshold {})\n",
            if self.converged { "yes" } else { "NO" },
            self.max_rhat,
            self.config.bgr_threshold
        ));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}
