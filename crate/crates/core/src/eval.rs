//! Model comparison and goodness-of-fit statistics.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::poisson_loglik;
use crate::scalar::Scalar;

/// Poisson deviance `-2 sum_i [y_i ln lambda_i - lambda_i - ln y_i!]`.
pub fn deviance<T: Scalar>(y: &[u64], lambda: &[T]) -> Result<T> {
    if y.len() != lambda.len() {
        return Err(Error::Dimension(format!("{} counts vs {} means", y.len(), lambda.len())));
    }
    let mut total = T::zero();
    for (&yi, &li) in y.iter().zip(lambda) {
        total += poisson_loglik(yi, li)?;
    }
    Ok(T::lit(-2.0) * total)
}

/// DIC components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dic {
    /// Posterior mean deviance.
    pub mean_deviance: f64,
    /// Deviance at the posterior mean of the latent parameters.
    pub deviance_at_mean: f64,
    pub p_d: f64,
    pub dic: f64,
    /// Set when `p_d < 0`: legal, but usually a sign of a poor plug-in.
    pub negative_p_d: bool,
}

/// DIC from a per-iteration deviance trace and the plug-in deviance.
pub fn dic(deviance_trace: &[f64], deviance_at_mean: f64) -> Result<Dic> {
    if deviance_trace.is_empty() {
        return Err(Error::Validation("empty deviance trace".into()));
    }
    let mean_deviance = deviance_trace.iter().sum::<f64>() / deviance_trace.len() as f64;
    let p_d = mean_deviance - deviance_at_mean;
    Ok(Dic {
        mean_deviance,
        deviance_at_mean,
        p_d,
        dic: mean_deviance + p_d,
        negative_p_d: p_d < 0.0,
    })
}

/// Strength of evidence between two DIC values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DicVerdict {
    /// Difference under 5.
    Equivalent,
    /// Difference from 5 to 10.
    Substantial,
    /// Difference over 10.
    Decisive,
}

impl DicVerdict {
    pub fn from_difference(delta: f64) -> Self {
        let d = delta.abs();
        if d > 10.0 {
            DicVerdict::Decisive
        } else if d >= 5.0 {
            DicVerdict::Substantial
        } else {
            DicVerdict::Equivalent
        }
    }
}

impl fmt::Display for DicVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DicVerdict::Equivalent => "equivalent",
            DicVerdict::Substantial => "substantial",
            DicVerdict::Decisive => "decisive",
        })
    }
}

/// One pairwise comparison; `better` has the lower DIC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseVerdict {
    pub better: String,
    pub worse: String,
    pub delta: f64,
    pub verdict: DicVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DicRanking {
    /// `(name, dic)` in ascending DIC order.
    pub ranking: Vec<(String, f64)>,
    pub pairs: Vec<PairwiseVerdict>,
}

/// Ranks runs by DIC and labels every pair.
pub fn compare_dic(runs: &[(String, f64)]) -> Result<DicRanking> {
    if runs.len() < 2 {
        return Err(Error::Validation("comparison needs at least two runs".into()));
    }
    if let Some((name, v)) = runs.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Validation(format!("run `{name}` has non-finite DIC {v}")));
    }
    let mut ranking = runs.to_vec();
    ranking.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal));
    let mut pairs = Vec::new();
    for (k, (better, lo)) in ranking.iter().enumerate() {
        for (worse, hi) in &ranking[k + 1..] {
            pairs.push(PairwiseVerdict {
                better: better.clone(),
                worse: worse.clone(),
                delta: hi - lo,
                verdict: DicVerdict::from_difference(hi - lo),
            });
        }
    }
    Ok(DicRanking { ranking, pairs })
}

/// `1 - sum (y - yhat)^2 / sum (y - ybar)^2`.
pub fn r_squared<T: Scalar>(y: &[T], fitted: &[T]) -> Result<T> {
    if y.len() != fitted.len() {
        return Err(Error::Dimension(format!("{} observations vs {} fitted values", y.len(), fitted.len())));
    }
    if y.len() < 2 {
        return Err(Error::Domain("R-squared needs at least two observations".into()));
    }
    let mean = y.iter().fold(T::zero(), |a, &v| a + v) / T::of_usize(y.len());
    let total = y.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean));
    if total == T::zero() {
        return Err(Error::Domain("R-squared undefined: observations are all equal".into()));
    }
    let residual = y
        .iter()
        .zip(fitted)
        .fold(T::zero(), |a, (&v, &f)| a + (v - f) * (v - f));
    Ok(T::one() - residual / total)
}

/// Sample standard deviation across entries (n - 1 denominator).
pub fn sample_sd<T: Scalar>(values: &[T]) -> T {
    let n = values.len();
    if n < 2 {
        return T::zero();
    }
    let mean = values.iter().fold(T::zero(), |a, &v| a + v) / T::of_usize(n);
    let ss = values.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean));
    (ss / T::of_usize(n - 1)).sqrt()
}

/// `sd(phi) / (sd(theta) + sd(phi))`; `None` when both spreads vanish.
pub fn alpha_spatial_share<T: Scalar>(theta: &[T], phi: &[T]) -> Result<Option<T>> {
    if theta.len() != phi.len() {
        return Err(Error::Dimension(format!("theta has {} entries, phi has {}", theta.len(), phi.len())));
    }
    let sd_theta = sample_sd(theta);
    let sd_phi = sample_sd(phi);
    Ok(alpha_from_sds(sd_theta, sd_phi))
}

pub fn alpha_from_sds<T: Scalar>(sd_theta: T, sd_phi: T) -> Option<T> {
    let total = sd_theta + sd_phi;
    (total > T::zero()).then(|| sd_phi / total)
}

/// Multiplicative change in expected crashes per unit covariate increase, `e^beta - 1`.
pub fn percent_change<T: Scalar>(beta: T) -> Result<T> {
    if !beta.is_finite() {
        return Err(Error::Domain(format!("coefficient {beta} is not finite")));
    }
    Ok(beta.exp_m1())
}

/// `percent_change` as a one-decimal percentage.
pub fn format_percent(change: f64) -> String {
    format!("{:.1}%", change * 100.0)
}

/// Per-run statistics for the comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub dic: Dic,
    pub r_squared: Option<f64>,
    pub alpha_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub runs: Vec<RunSummary>,
    pub ranking: DicRanking,
}

pub fn comparison_report(runs: Vec<RunSummary>) -> Result<ComparisonReport> {
    let ranking = compare_dic(&runs.iter().map(|r| (r.name.clone(), r.dic.dic)).collect::<Vec<_>>())?;
    Ok(ComparisonReport { runs, ranking })
}

impl ComparisonReport {
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:<16} {:>12} {:>10} {:>12} {:>8} {:>8}\n",
            "run", "Dbar", "pD", "DIC", "R2", "alpha"
        );
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        for r in &self.runs {
            out.push_str(&format!(
                "{:<16} {:>12.2} {:>10.2} {:>12.2} {:>8} {:>8}\n",
                r.name,
                r.dic.mean_deviance,
                r.dic.p_d,
                r.dic.dic,
                opt(r.r_squared),
                opt(r.alpha_mean)
            ));
        }
        out.push('\n');
        for p in &self.ranking.pairs {
            out.push_str(&format!(
                "{} vs {}: delta DIC {:.2} ({})\n",
                p.better, p.worse, p.delta, p.verdict
            ));
        }
        out
    }
}
