//! Truncated-series evaluation of the univariate COM-Poisson law.
//!
//! The pmf is `λ^x / ((x!)^ν Z(λ, ν))` with `Z(λ, ν) = Σ_x λ^x / (x!)^ν`.
//! Everything here is deterministic and is used as the reference oracle for
//! the Monte Carlo estimators elsewhere in the crate. Series are accumulated
//! in log space.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::special::{ln_factorial, LogSum};

/// Hard stop for series that would otherwise run practically forever.
const MAX_TERMS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComPoissonParams {
    lambda: f64,
    nu: f64,
}

impl ComPoissonParams {
    pub fn new(lambda: f64, nu: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(invalid(format!("lambda must be positive and finite, got {lambda}")));
        }
        if !(nu.is_finite() && nu >= 0.0) {
            return Err(invalid(format!("nu must be non-negative and finite, got {nu}")));
        }
        if nu == 0.0 && lambda >= 1.0 {
            return Err(Error::Divergent { lambda });
        }
        Ok(Self { lambda, nu })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Same dispersion, location scaled by `e^{-omega}`.
    pub fn tilted(&self, omega: f64) -> Self {
        Self {
            lambda: (-omega).exp() * self.lambda,
            nu: self.nu,
        }
    }

    /// `ln(λ^x / (x!)^ν)`.
    #[inline]
    pub fn ln_weight(&self, x: u64) -> f64 {
        let lf = ln_factorial(x);
        let mut v = x as f64 * self.lambda.ln();
        if self.nu != 0.0 {
            v -= self.nu * lf;
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruncationPolicy {
    pub min_terms: usize,
    pub term_tol: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            min_terms: 1000,
            term_tol: 1e-5,
        }
    }
}

impl TruncationPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.min_terms < 1 || !(self.term_tol > 0.0) {
            return Err(invalid("truncation policy needs min_terms >= 1 and term_tol > 0"));
        }
        Ok(())
    }
}

/// A truncated sum kept on the log scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub log_value: f64,
    pub terms_used: usize,
}

impl SeriesValue {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

/// `λ^x / (x!)^ν`.
pub fn unnormalized_weight(x: u64, p: &ComPoissonParams) -> f64 {
    p.ln_weight(x).exp()
}

/// Accumulates `log_term(x)` for x = start.. under the stopping rule: at least
/// `min_terms` terms, then stop at the first term below `term_tol`.
fn truncated_sum(policy: &TruncationPolicy, start: u64, log_term: impl Fn(u64) -> f64) -> Result<SeriesValue> {
    policy.validate()?;
    let log_tol = policy.term_tol.ln();
    let mut acc = LogSum::default();
    let mut used = 0usize;
    let mut x = start;
    loop {
        let t = log_term(x);
        acc.add(t);
        used += 1;
        if used >= policy.min_terms && t < log_tol {
            break;
        }
        if used >= MAX_TERMS {
            return Err(Error::SupportTooWide(format!("series did not settle after {MAX_TERMS} terms")));
        }
        x += 1;
    }
    Ok(SeriesValue {
        log_value: acc.value(),
        terms_used: used,
    })
}

/// `Z(λ, ν)` truncated under `policy`.
pub fn truncated_z(p: &ComPoissonParams, policy: &TruncationPolicy) -> Result<SeriesValue> {
    truncated_sum(policy, 0, |x| p.ln_weight(x))
}

/// `Z'(λ, ν) = ∂Z/∂λ = Σ_{x≥1} x λ^{x-1} / (x!)^ν`.
pub fn truncated_z_prime(p: &ComPoissonParams, policy: &TruncationPolicy) -> Result<SeriesValue> {
    let ln_lambda = p.lambda.ln();
    truncated_sum(policy, 1, |x| (x as f64).ln() + p.ln_weight(x) - ln_lambda)
}

/// Mean `ζ = λ Z'/Z` and variance `Σ x² p(x) - ζ²` over the truncated support.
pub fn mean_and_variance(p: &ComPoissonParams, policy: &TruncationPolicy) -> Result<(f64, f64)> {
    let z = truncated_z(p, policy)?;
    let zp = truncated_z_prime(p, policy)?;
    let mean = p.lambda * (zp.log_value - z.log_value).exp();
    let mut second = 0.0;
    for x in 0..z.terms_used as u64 {
        let xf = x as f64;
        second += xf * xf * (p.ln_weight(x) - z.log_value).exp();
    }
    Ok((mean, second - mean * mean))
}

/// `Ψ = Z(e^{-ω}λ, ν) / Z(λ, ν)`, the Laplace transform at `ω`.
pub fn psi(p: &ComPoissonParams, omega: f64, policy: &TruncationPolicy) -> Result<f64> {
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(invalid(format!("omega must be non-negative, got {omega}")));
    }
    let num = truncated_z(&p.tilted(omega), policy)?;
    let den = truncated_z(p, policy)?;
    Ok((num.log_value - den.log_value).exp())
}

pub fn com_pmf(x: u64, p: &ComPoissonParams, policy: &TruncationPolicy) -> Result<f64> {
    let z = truncated_z(p, policy)?;
    Ok((p.ln_weight(x) - z.log_value).exp())
}

/// Exact per-component quantities that several operations reuse.
#[derive(Debug, Clone, Copy)]
pub struct MarginalSummary {
    pub log_z: f64,
    pub mean: f64,
    pub variance: f64,
}

pub fn marginal_summary(p: &ComPoissonParams, policy: &TruncationPolicy) -> Result<MarginalSummary> {
    let z = truncated_z(p, policy)?;
    let (mean, variance) = mean_and_variance(p, policy)?;
    Ok(MarginalSummary {
        log_z: z.log_value,
        mean,
        variance,
    })
}
