//! Convergence diagnostics and posterior summaries of scalar traces.

use crate::error::{Error, Result};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Univariate potential scale reduction factor over equal-length chains.
///
/// `W` is the mean within-chain variance and `B/n` the variance of the chain
/// means; `R = sqrt(((n-1)/n W + B/n) / W)`. Two degenerate chains that agree
/// give 1; degenerate chains that disagree give infinity.
pub fn gelman_rubin(chains: &[&[f64]]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::Validation("potential scale reduction needs at least two chains".into()));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::Validation("chains have unequal lengths".into()));
    }
    if n < 2 {
        return Err(Error::Validation("chains need at least two draws".into()));
    }
    let within = chains.iter().map(|c| sample_variance(c)).sum::<f64>() / chains.len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let between_over_n = sample_variance(&means);
    if within == 0.0 {
        return Ok(if between_over_n == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let nf = n as f64;
    Ok((((nf - 1.0) / nf * within + between_over_n) / within).sqrt())
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, sd, 2.5% and 97.5% quantiles of pooled draws.
pub fn summarize_draws(draws: &[f64]) -> (f64, f64, f64, f64) {
    let m = mean(draws);
    let sd = if draws.len() > 1 { sample_variance(draws).sqrt() } else { 0.0 };
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    (m, sd, quantile_sorted(&sorted, 0.025), quantile_sorted(&sorted, 0.975))
}
