//! Maximum-likelihood Poisson regression by iteratively reweighted least squares.
//!
//! Used to start the chains, to shape the coefficient proposal, to build
//! informative priors, and as an independent check on the sampler.

use nalgebra::{DMatrix, DVector};

use crate::data::DesignMatrix;
use crate::error::{Error, Result};

pub const IRLS_MAX_ITERATIONS: usize = 100;
pub const IRLS_GRADIENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct IrlsFit {
    pub beta: Vec<f64>,
    /// Inverse Fisher information at the estimate. Rows and columns of
    /// excluded columns are zero.
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    /// All-zero design columns, fixed at 0 and left out of the fit.
    pub excluded_columns: Vec<usize>,
}

impl IrlsFit {
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.beta.len()).map(|k| self.covariance[(k, k)].sqrt()).collect()
    }
}

fn log_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, offset: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta + offset;
    eta.iter().zip(y.iter()).map(|(e, yi)| yi * e - e.exp()).sum()
}

pub fn irls_poisson_fit(design: &DesignMatrix<f64>, y: &[u64]) -> Result<IrlsFit> {
    let n = design.rows();
    if y.len() != n {
        return Err(Error::Dimension(format!("{} counts for {n} design rows", y.len())));
    }
    let kept: Vec<usize> = (0..design.cols())
        .filter(|&k| (0..n).any(|i| design.get(i, k) != 0.0))
        .collect();
    let excluded: Vec<usize> = (0..design.cols()).filter(|k| !kept.contains(k)).collect();
    let p = kept.len();
    let x = DMatrix::from_fn(n, p, |i, k| design.get(i, kept[k]));
    let yv = DVector::from_iterator(n, y.iter().map(|&v| v as f64));
    let offset = DVector::from_iterator(n, (0..n).map(|i| design.offset().map_or(0.0, |o| o[i])));

    let rank = x.clone().svd(false, false).rank(1e-10 * n as f64);
    if rank < p {
        return Err(Error::Domain(format!("design is rank deficient (rank {rank} < {p} columns)")));
    }
    let total: f64 = yv.sum();
    if total == 0.0 {
        return Err(Error::Domain("all counts are zero; the intercept has no finite estimate".into()));
    }

    let mut beta = DVector::zeros(p);
    if kept.first() == Some(&0) {
        let exposure: f64 = offset.iter().map(|o| o.exp()).sum();
        beta[0] = (total / exposure).ln();
    }
    let mut ll = log_likelihood(&x, &yv, &offset, &beta);
    for iteration in 0..=IRLS_MAX_ITERATIONS {
        let mu = (&x * &beta + &offset).map(f64::exp);
        let gradient = x.transpose() * (&yv - &mu);
        let weighted = DMatrix::from_fn(n, p, |i, k| x[(i, k)] * mu[i]);
        let information = x.transpose() * weighted;
        let chol = information
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("Fisher information is not positive definite".into()))?;
        let converged = gradient.amax() < IRLS_GRADIENT_TOL;
        let step = chol.solve(&gradient);
        let stalled = step.amax() < 1e-14 * (1.0 + beta.amax());
        if converged || stalled {
            let inv = chol.inverse();
            let full = design.cols();
            let mut covariance = DMatrix::zeros(full, full);
            let mut full_beta = vec![0.0; full];
            for (a, &ka) in kept.iter().enumerate() {
                full_beta[ka] = beta[a];
                for (b, &kb) in kept.iter().enumerate() {
                    covariance[(ka, kb)] = inv[(a, b)];
                }
            }
            return Ok(IrlsFit {
                beta: full_beta,
                covariance,
                iterations: iteration,
                excluded_columns: excluded,
            });
        }
        // step halving keeps the likelihood monotone
        let mut t = 1.0;
        loop {
            let candidate = &beta + &step * t;
            let cand_ll = log_likelihood(&x, &yv, &offset, &candidate);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs() {
                beta = candidate;
                ll = cand_ll;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return Err(Error::Numerical("IRLS line search failed".into()));
            }
        }
    }
    Err(Error::Numerical(format!(
        "IRLS did not converge within {IRLS_MAX_ITERATIONS} iterations"
    )))
}
