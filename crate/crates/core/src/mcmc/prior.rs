//! Priors, proposal scales and the truncated-normal helpers.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::ln_gamma;

use super::model::{LocationModel, Theta};

/// Gamma priors are shape-rate; `delta_sd` and `gamma_sd` are standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    pub lambda_shape: f64,
    pub lambda_rate: f64,
    pub nu_shape: f64,
    pub nu_rate: f64,
    pub omega_shape: f64,
    pub omega_rate: f64,
    pub delta_sd: f64,
    pub gamma_sd: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            lambda_shape: 2.0,
            lambda_rate: 2.0,
            nu_shape: 1.5,
            nu_rate: 2.0,
            omega_shape: 2.0,
            omega_rate: 0.8,
            delta_sd: 5.0,
            gamma_sd: 10.0,
        }
    }
}

pub fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * (2.0 * std::f64::consts::PI).ln() - sd.ln() - 0.5 * z * z
}

impl PriorSpec {
    /// Log prior density up to the feasibility indicator on δ, which is
    /// enforced separately against the current ratio estimates.
    pub fn ln_density(&self, model: &LocationModel, theta: &Theta) -> f64 {
        let mut lp = match model {
            LocationModel::Direct => theta
                .location
                .iter()
                .map(|&l| gamma_ln_pdf(l, self.lambda_shape, self.lambda_rate))
                .sum::<f64>(),
            LocationModel::Regression(_) => theta.location.iter().map(|&g| normal_ln_pdf(g, 0.0, self.gamma_sd)).sum(),
        };
        lp += theta.nu.iter().map(|&n| gamma_ln_pdf(n, self.nu_shape, self.nu_rate)).sum::<f64>();
        lp += gamma_ln_pdf(theta.omega, self.omega_shape, self.omega_rate);
        lp += theta.delta.iter().map(|&d| normal_ln_pdf(d, 0.0, self.delta_sd)).sum::<f64>();
        lp
    }

    pub fn validate(&self) -> crate::Result<()> {
        let all = [
            self.lambda_shape,
            self.lambda_rate,
            self.nu_shape,
            self.nu_rate,
            self.omega_shape,
            self.omega_rate,
            self.delta_sd,
            self.gamma_sd,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(crate::Error::Config("prior hyperparameters must be positive".into()))
        }
    }
}

/// `ln Φ(x)`, accurate in the lower tail.
fn ln_std_cdf(x: f64) -> f64 {
    (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
}

fn std_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// `ln(Φ(b) - Φ(a))` for standardized bounds `a < b`.
fn ln_std_mass(a: f64, b: f64) -> f64 {
    // work in whichever tail keeps the CDF values small
    let (a, b) = if a > 0.0 { (-b, -a) } else { (a, b) };
    let lb = ln_std_cdf(b);
    let la = ln_std_cdf(a);
    lb + (-(la - lb).exp()).ln_1p()
}

/// Log normalizer of `N(mean, sd²)` truncated to `(lower, upper)`.
pub fn truncated_normal_ln_mass(mean: f64, sd: f64, lower: f64, upper: f64) -> f64 {
    ln_std_mass((lower - mean) / sd, (upper - mean) / sd)
}

/// Inverse-CDF draw from `N(mean, sd²)` truncated to the open `(lower, upper)`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, lower: f64, upper: f64, rng: &mut R) -> f64 {
    let (a, b) = ((lower - mean) / sd, (upper - mean) / sd);
    let flip = a > 0.0;
    let (a, b) = if flip { (-b, -a) } else { (a, b) };
    let (pa, pb) = (std_cdf(a), std_cdf(b));
    for _ in 0..64 {
        let z = if pb - pa > 1e-300 {
            std_quantile(pa + rng.random::<f64>() * (pb - pa))
        } else {
            // interval deep in a tail with no resolvable mass: uniform fallback
            a + rng.random::<f64>() * (b - a)
        };
        let z = if flip { -z } else { z };
        let x = mean + sd * z;
        if x > lower && x < upper {
            return x;
        }
    }
    0.5 * (lower + upper)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Random-walk scales; location entries are log-normal for λ and additive
/// normal for regression coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSpec {
    pub sigma_location: Vec<f64>,
    pub sigma_nu: Vec<f64>,
    pub sigma_omega: f64,
    pub sigma_delta: Vec<f64>,
}

impl ProposalSpec {
    pub fn initial(model: &LocationModel, d: usize) -> Self {
        let loc = match model {
            LocationModel::Direct => vec![0.1; d],
            LocationModel::Regression(spec) => vec![0.05; spec.n_coefficients()],
        };
        Self {
            sigma_location: loc,
            sigma_nu: vec![0.1; d],
            sigma_omega: 0.3,
            sigma_delta: vec![0.5; crate::special::pairs(d)],
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.sigma_location.clone();
        v.extend(&self.sigma_nu);
        v.push(self.sigma_omega);
        v.extend(&self.sigma_delta);
        v
    }

    pub fn flat_mut(&mut self, block: usize) -> &mut f64 {
        let (nl, nn) = (self.sigma_location.len(), self.sigma_nu.len());
        if block < nl {
            &mut self.sigma_location[block]
        } else if block < nl + nn {
            &mut self.sigma_nu[block - nl]
        } else if block == nl + nn {
            &mut self.sigma_omega
        } else {
            &mut self.sigma_delta[block - nl - nn - 1]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{stream, Purpose};

    #[test]
    fn gamma_density_examples() {
        assert!((gamma_ln_pdf(1.0, 2.0, 2.0) - (4f64.ln() - 2.0)).abs() < 1e-12);
        let expect = 2.0 * 0.8f64.ln() + 2.5f64.ln() - 0.8 * 2.5 - ln_gamma(2.0);
        assert!((gamma_ln_pdf(2.5, 2.0, 0.8) - expect).abs() < 1e-12);
        assert_eq!(gamma_ln_pdf(0.0, 2.0, 2.0), f64::NEG_INFINITY);
    }

    #[test]
    fn truncated_mass_matches_direct_difference() {
        for &(m, s, l, u) in &[(0.0, 1.0, -1.0, 2.0), (3.0, 0.5, -2.0, 3.2), (-1.0, 2.0, 0.5, 9.0)] {
            let direct = (std_cdf((u - m) / s) - std_cdf((l - m) / s)).ln();
            assert!((truncated_normal_ln_mass(m, s, l, u) - direct).abs() < 1e-10);
        }
        // far tail stays finite
        assert!(truncated_normal_ln_mass(0.0, 1.0, 30.0, 31.0).is_finite());
    }

    #[test]
    fn truncated_draws_in_range_with_right_mean() {
        let mut rng = stream(1, 0, Purpose::Chain);
        let (m, s, l, u) = (1.0, 2.0, 0.0, 1.5);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_truncated_normal(m, s, l, u, &mut rng)).collect();
        assert!(draws.iter().all(|&x| x > l && x < u));
        // mean of a truncated normal: m + s (φ(a) - φ(b)) / (Φ(b) - Φ(a))
        let (a, b) = ((l - m) / s, (u - m) / s);
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let expect = m + s * (phi(a) - phi(b)) / (std_cdf(b) - std_cdf(a));
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - expect).abs() < 0.005, "{mean} vs {expect}");
    }
}
