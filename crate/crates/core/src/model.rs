//! Poisson-lognormal model with an intrinsic CAR spatial effect.
//!
//! ```text
//! y_i ~ Poisson(lambda_i)
//! log lambda_i = psi_i = x_i . beta + theta_i + phi_i
//! theta_i ~ N(0, sigma_theta^2)
//! phi_i | phi_-i ~ N(sum_j w_ij phi_j / w_i+, 1 / (tau_c w_i+))
//! ```
//!
//! The CAR prior is improper; `phi` is constrained to sum to zero within
//! each connected component of `W` and island zones carry `phi_i = 0`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::{DesignMatrix, DesignOptions};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::weights::{Components, ProximityMatrix, WeightMode};

/// `|psi|` is clamped to this bound before exponentiation.
pub const PSI_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub mean: f64,
    pub variance: f64,
}

/// Gamma prior in shape/rate form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

/// Inverse-gamma prior in shape/scale form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseGammaPrior {
    pub shape: f64,
    pub scale: f64,
}

/// Prior on the regression coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientPriors {
    /// Independent `N(0, variance)` on every coefficient.
    Vague { variance: f64 },
    /// Means and variances from a maximum-likelihood Poisson fit, with the
    /// variances multiplied by `variance_inflation`.
    Informative { variance_inflation: f64 },
    /// One prior per design column.
    Explicit { priors: Vec<NormalPrior> },
}

impl Default for CoefficientPriors {
    fn default() -> Self {
        CoefficientPriors::Vague { variance: 1.0e3 }
    }
}

/// Everything that defines one model fit apart from the data and the sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub design: DesignOptions,
    pub coefficient_priors: CoefficientPriors,
    pub sigma_theta_prior: InverseGammaPrior,
    pub tau_c_prior: GammaPrior,
    pub proximity: WeightMode,
    /// Include the unstructured effect `theta`.
    pub heterogeneity: bool,
    /// Include the CAR effect `phi`.
    pub spatial: bool,
    /// Hold `sigma_theta^2` at a known value instead of sampling it.
    pub fixed_sigma_theta_sq: Option<f64>,
    /// Hold `tau_c` at a known value instead of sampling it.
    pub fixed_tau_c: Option<f64>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            design: DesignOptions::default(),
            coefficient_priors: CoefficientPriors::default(),
            sigma_theta_prior: InverseGammaPrior { shape: 1e-3, scale: 1e-3 },
            tau_c_prior: GammaPrior { shape: 0.1, rate: 0.1 },
            proximity: WeightMode::Adjacency,
            heterogeneity: true,
            spatial: true,
            fixed_sigma_theta_sq: None,
            fixed_tau_c: None,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match &self.coefficient_priors {
            CoefficientPriors::Vague { variance } => positive("coefficient prior variance", *variance)?,
            CoefficientPriors::Informative { variance_inflation } => {
                positive("variance_inflation", *variance_inflation)?
            }
            CoefficientPriors::Explicit { priors } => {
                for (k, p) in priors.iter().enumerate() {
                    positive(&format!("prior variance of coefficient {k}"), p.variance)?;
                    if !p.mean.is_finite() {
                        return Err(Error::Validation(format!("prior mean of coefficient {k} is not finite")));
                    }
                }
            }
        }
        positive("sigma_theta prior shape", self.sigma_theta_prior.shape)?;
        positive("sigma_theta prior scale", self.sigma_theta_prior.scale)?;
        positive("tau_c prior shape", self.tau_c_prior.shape)?;
        positive("tau_c prior rate", self.tau_c_prior.rate)?;
        if let Some(v) = self.fixed_sigma_theta_sq {
            positive("fixed_sigma_theta_sq", v)?;
        }
        if let Some(v) = self.fixed_tau_c {
            positive("fixed_tau_c", v)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

/// Current values of every model unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T> {
    pub beta: Vec<T>,
    pub theta: Vec<T>,
    pub phi: Vec<T>,
    pub sigma_theta_sq: T,
    pub tau_c: T,
}

/// `psi_i` and `lambda_i = exp(psi_i)` for one zone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predictor<T> {
    pub psi: T,
    pub lambda: T,
    /// True when `psi` hit the `PSI_CLAMP` bound.
    pub clamped: bool,
}

/// Applies the overflow guard to a raw `psi`.
pub fn clamp_psi<T: Scalar>(psi: T) -> Predictor<T> {
    let bound = T::lit(PSI_CLAMP);
    let clamped = psi.abs() > bound;
    let psi = psi.max(-bound).min(bound);
    Predictor {
        psi,
        lambda: psi.exp(),
        clamped,
    }
}

pub fn linear_predictor<T: Scalar>(state: &ModelState<T>, design: &DesignMatrix<T>, i: usize) -> Result<Predictor<T>> {
    if state.beta.len() != design.cols() {
        return Err(Error::Dimension(format!(
            "beta has {} entries, design has {} columns",
            state.beta.len(),
            design.cols()
        )));
    }
    if state.theta.len() != design.rows() || state.phi.len() != design.rows() {
        return Err(Error::Dimension(format!(
            "theta/phi lengths {}/{} differ from {} design rows",
            state.theta.len(),
            state.phi.len(),
            design.rows()
        )));
    }
    if i >= design.rows() {
        return Err(Error::Dimension(format!("zone {i} out of range")));
    }
    Ok(clamp_psi(design.linear_part(i, &state.beta) + state.theta[i] + state.phi[i]))
}

/// `ln(y!)`.
pub fn ln_factorial(y: u64) -> f64 {
    if y < 2 {
        0.0
    } else {
        ln_gamma(y as f64 + 1.0)
    }
}

/// Poisson log-probability `y ln(lambda) - lambda - ln(y!)`.
pub fn poisson_loglik<T: Scalar>(y: u64, lambda: T) -> Result<T> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(Error::Domain(format!("Poisson mean must be positive and finite, got {lambda}")));
    }
    Ok(T::lit(y as f64) * lambda.ln() - lambda - T::lit(ln_factorial(y)))
}

/// Full conditional of one CAR component given its neighbors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CarConditional<T> {
    Normal { mean: T, variance: T },
    /// Zone without neighbors: `phi_i` is pinned at 0.
    Island,
}

pub fn car_conditional<T: Scalar>(phi: &[T], w: &ProximityMatrix<T>, tau_c: T, i: usize) -> CarConditional<T> {
    let total = w.row_sums()[i];
    if total == T::zero() {
        return CarConditional::Island;
    }
    let weighted = w
        .neighbors(i)
        .iter()
        .fold(T::zero(), |acc, &(j, wij)| acc + wij * phi[j]);
    CarConditional::Normal {
        mean: weighted / total,
        variance: T::one() / (tau_c * total),
    }
}

/// `sum_{i<j} w_ij (phi_i - phi_j)^2`.
pub fn icar_quadratic_form<T: Scalar>(phi: &[T], w: &ProximityMatrix<T>) -> T {
    (0..w.len()).fold(T::zero(), |acc, i| {
        w.neighbors(i)
            .iter()
            .filter(|&&(j, _)| j > i)
            .fold(acc, |acc, &(j, wij)| {
                let d = phi[i] - phi[j];
                acc + wij * d * d
            })
    })
}

/// Largest per-component `|sum phi|` allowed by the constraint checks.
pub fn constraint_tolerance<T: Scalar>(phi: &[T]) -> T {
    let scale = phi.iter().fold(T::zero(), |acc, v| acc + v.abs());
    T::lit(1e-10).max(T::epsilon() * T::lit(64.0) * scale)
}

/// Checks `sum phi = 0` on every component.
pub fn check_sum_to_zero<T: Scalar>(phi: &[T], components: &Components) -> Result<()> {
    let tol = constraint_tolerance(phi);
    let mut sums = vec![T::zero(); components.count];
    for (i, &l) in components.labels.iter().enumerate() {
        sums[l] += phi[i];
    }
    match sums.iter().position(|s| s.abs() > tol) {
        Some(c) => Err(Error::Domain(format!(
            "spatial effects sum to {} on component {c}, not 0",
            sums[c]
        ))),
        None => Ok(()),
    }
}

/// Unnormalized ICAR log density
/// `(n - G)/2 ln tau_c - tau_c/2 sum_{i<j} w_ij (phi_i - phi_j)^2`.
pub fn icar_log_density_kernel<T: Scalar>(phi: &[T], w: &ProximityMatrix<T>, tau_c: T) -> Result<T> {
    if phi.len() != w.len() {
        return Err(Error::Dimension(format!("phi has {} entries, W is {}x{}", phi.len(), w.len(), w.len())));
    }
    if !(tau_c > T::zero()) {
        return Err(Error::Domain(format!("tau_c must be positive, got {tau_c}")));
    }
    let components = w.connected_components();
    check_sum_to_zero(phi, &components)?;
    let rank = T::of_usize(phi.len() - components.count);
    let half = T::lit(0.5);
    Ok(half * rank * tau_c.ln() - half * tau_c * icar_quadratic_form(phi, w))
}

/// Subtracts each component's mean from `phi`; returns the removed means.
///
/// Single-zone components (islands) end at exactly 0.
pub fn center_phi<T: Scalar>(phi: &mut [T], components: &Components) -> Vec<T> {
    let mut sums = vec![T::zero(); components.count];
    let mut counts = vec![0usize; components.count];
    for (i, &l) in components.labels.iter().enumerate() {
        sums[l] += phi[i];
        counts[l] += 1;
    }
    let means: Vec<T> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| s / T::of_usize(c))
        .collect();
    for (i, &l) in components.labels.iter().enumerate() {
        phi[i] = if counts[l] == 1 { T::zero() } else { phi[i] - means[l] };
    }
    means
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DesignMatrix;
    use crate::weights::{build_weights, NeighborPair, ZoneTopology};

    fn path(n: usize) -> ProximityMatrix<f64> {
        let pairs = (0..n - 1)
            .map(|i| NeighborPair { i, j: i + 1, boundary_km: 1.0, lanes: 2 })
            .collect();
        build_weights(&ZoneTopology::new(n, pairs).unwrap(), WeightMode::Adjacency)
    }

    fn two_col_design() -> DesignMatrix<f64> {
        DesignMatrix::from_rows(vec![vec![1.0, 2.0]], vec!["intercept".into(), "x".into()]).unwrap()
    }

    #[test]
    fn predictor_examples() {
        let d = two_col_design();
        let zero = ModelState { beta: vec![0.0, 0.0], theta: vec![0.0], phi: vec![0.0], sigma_theta_sq: 1.0, tau_c: 1.0 };
        let p = linear_predictor(&zero, &d, 0).unwrap();
        assert_eq!((p.psi, p.lambda, p.clamped), (0.0, 1.0, false));

        let s = ModelState { beta: vec![0.5, 0.25], theta: vec![0.1], phi: vec![-0.1], ..zero.clone() };
        let p = linear_predictor(&s, &d, 0).unwrap();
        assert!((p.psi - 1.0).abs() < 1e-15);
        assert!((p.lambda - std::f64::consts::E).abs() < 1e-12);

        let mut shifted = s.clone();
        shifted.theta[0] += 0.37;
        let q = linear_predictor(&shifted, &d, 0).unwrap();
        assert!((q.psi - p.psi - 0.37).abs() < 1e-15);

        let huge = ModelState { beta: vec![40.0, 0.0], ..zero.clone() };
        let p = linear_predictor(&huge, &d, 0).unwrap();
        assert!(p.clamped && p.psi == 30.0 && p.lambda.is_finite());

        let short = ModelState { beta: vec![0.0], ..zero };
        assert!(matches!(linear_predictor(&short, &d, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn poisson_examples() {
        assert_eq!(poisson_loglik(0, 1.0f64).unwrap(), -1.0);
        assert_eq!(poisson_loglik(1, 1.0f64).unwrap(), -1.0);
        let v = poisson_loglik(2, 3.0f64).unwrap();
        assert!((v - (2.0 * 3f64.ln() - 3.0 - 2f64.ln())).abs() < 1e-12);
        assert!((v + 1.4959).abs() < 1e-4);
        assert!(poisson_loglik(1, 0.0f64).is_err());
        assert!(poisson_loglik(1, -2.0f64).is_err());
    }

    #[test]
    fn poisson_pmf_sums_to_one() {
        for lambda in [0.1f64, 1.0, 3.7, 10.0] {
            let total: f64 = (0..200).map(|y| poisson_loglik(y, lambda).unwrap().exp()).sum();
            assert!((total - 1.0).abs() < 1e-9, "lambda {lambda}: {total}");
        }
    }

    #[test]
    fn conditional_examples() {
        let w = path(2);
        match car_conditional(&[0.0, 0.5], &w, 2.0, 0) {
            CarConditional::Normal { mean, variance } => assert_eq!((mean, variance), (0.5, 0.5)),
            CarConditional::Island => panic!(),
        }
        let w = path(3);
        match car_conditional(&[0.2f64, 0.0, 0.4], &w, 1.0, 1) {
            CarConditional::Normal { mean, variance } => {
                assert!((mean - 0.3).abs() < 1e-15);
                assert_eq!(variance, 0.5);
            }
            CarConditional::Island => panic!(),
        }
        let w = ProximityMatrix::from_triples(3, &[(1, 0, 3.0), (1, 2, 1.0)]).unwrap();
        match car_conditional(&[0.2f64, 0.0, 0.6], &w, 1.0, 1) {
            CarConditional::Normal { mean, variance } => {
                assert!((mean - 0.3).abs() < 1e-15);
                assert_eq!(variance, 0.25);
            }
            CarConditional::Island => panic!(),
        }
        let w = ProximityMatrix::<f64>::from_triples(3, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(car_conditional(&[0.0, 0.0, 0.0], &w, 1.0, 2), CarConditional::Island);
    }

    #[test]
    fn kernel_examples() {
        let w = path(4);
        assert!((icar_log_density_kernel(&[0.0; 4], &w, 2.0).unwrap() - 1.5 * 2f64.ln()).abs() < 1e-15);
        let v = icar_log_density_kernel(&[-0.3, -0.1, 0.1, 0.3], &w, 2.0).unwrap();
        assert!((v - (1.5 * 2f64.ln() - 0.12)).abs() < 1e-12);
        assert!((v - 0.9197).abs() < 1e-4);
        let v = icar_log_density_kernel(&[0.5, -0.5], &path(2), 1.0).unwrap();
        assert!((v + 0.5).abs() < 1e-15);
        assert!(matches!(icar_log_density_kernel(&[0.5, 0.5], &path(2), 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn kernel_is_translation_invariant() {
        let w = path(5);
        // dyadic values keep the shifted arithmetic exact
        let phi = [0.375, -0.75, 0.25, 0.125, 0.0];
        let shifted: Vec<f64> = phi.iter().map(|v| v + 2.0).collect();
        assert_eq!(icar_quadratic_form(&phi, &w), icar_quadratic_form(&shifted, &w));
    }

    #[test]
    fn centering_handles_islands() {
        let w = ProximityMatrix::<f64>::from_triples(4, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let c = w.connected_components();
        let mut phi = vec![1.0, 2.0, 3.0, 5.0];
        let means = center_phi(&mut phi, &c);
        assert_eq!(phi, vec![-1.0, 0.0, 1.0, 0.0]);
        assert_eq!(means, vec![2.0, 5.0]);
        check_sum_to_zero(&phi, &c).unwrap();
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = ModelSpec::default();
        let back = ModelSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(back, spec);
        let partial = ModelSpec::from_json(r#"{"proximity": "lane_count", "spatial": false}"#).unwrap();
        assert_eq!(partial.proximity, WeightMode::LaneCount);
        assert!(!partial.spatial);
        assert_eq!(partial.tau_c_prior, GammaPrior { shape: 0.1, rate: 0.1 });
        assert!(ModelSpec::from_json(r#"{"tau_c_prior": {"shape": 0.0, "rate": 1.0}}"#).is_err());
    }
}
