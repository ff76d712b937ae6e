//! Conjugate draws for the two variance hyperparameters.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::model::{icar_quadratic_form, GammaPrior, InverseGammaPrior};
use crate::weights::ProximityMatrix;

/// Inverse-gamma full conditional of `sigma_theta^2`:
/// shape `a + n/2`, scale `b + sum theta^2 / 2`.
pub fn sigma_theta_posterior(theta: &[f64], prior: InverseGammaPrior) -> InverseGammaPrior {
    let ss: f64 = theta.iter().map(|t| t * t).sum();
    InverseGammaPrior {
        shape: prior.shape + theta.len() as f64 / 2.0,
        scale: prior.scale + ss / 2.0,
    }
}

/// Gamma full conditional of `tau_c`:
/// shape `a + (n - G)/2`, rate `b + sum_{i<j} w_ij (phi_i - phi_j)^2 / 2`.
pub fn tau_c_posterior(phi: &[f64], w: &ProximityMatrix<f64>, components: usize, prior: GammaPrior) -> GammaPrior {
    GammaPrior {
        shape: prior.shape + (phi.len() - components) as f64 / 2.0,
        rate: prior.rate + icar_quadratic_form(phi, w) / 2.0,
    }
}

pub fn draw_gamma<R: Rng + ?Sized>(dist: GammaPrior, rng: &mut R) -> f64 {
    Gamma::new(dist.shape, 1.0 / dist.rate)
        .expect("positive gamma parameters")
        .sample(rng)
}

pub fn draw_inverse_gamma<R: Rng + ?Sized>(dist: InverseGammaPrior, rng: &mut R) -> f64 {
    let g = Gamma::new(dist.shape, 1.0 / dist.scale)
        .expect("positive inverse-gamma parameters")
        .sample(rng);
    1.0 / g
}

pub fn update_sigma_theta<R: Rng + ?Sized>(theta: &[f64], prior: InverseGammaPrior, rng: &mut R) -> f64 {
    draw_inverse_gamma(sigma_theta_posterior(theta, prior), rng)
}

pub fn update_tau_c<R: Rng + ?Sized>(
    phi: &[f64],
    w: &ProximityMatrix<f64>,
    components: usize,
    prior: GammaPrior,
    rng: &mut R,
) -> f64 {
    draw_gamma(tau_c_posterior(phi, w, components, prior), rng)
}
