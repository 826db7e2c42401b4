//! The multivariate COM-Poisson law built with the exponential Sarmanov kernel.
//!
//! With `φ_j(x) = e^{-ω x} - Ψ_j` the joint pmf is
//!
//! ```text
//! p(x) = Π_j p_j(x_j) · [1 + C(d,2)^{-1} Σ_{j<k} δ_jk φ_j(x_j) φ_k(x_k)]
//! ```
//!
//! Marginals of any subset keep the full-dimension `C(d,2)`, since the
//! integrated-out `φ` have mean zero.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::compoisson::{marginal_summary, psi, truncated_z, truncated_z_prime, ComPoissonParams, TruncationPolicy};
use crate::counts::{CountMatrix, SufficientStats};
use crate::error::{invalid, Error, Result};
use crate::special::{ln_factorial, pairs};

/// Position of `(j, k)`, `j < k`, in the packed upper triangle.
#[inline]
pub fn pair_index(j: usize, k: usize, d: usize) -> usize {
    debug_assert!(j < k && k < d);
    j * (2 * d - j - 1) / 2 + (k - j - 1)
}

/// All `(j, k)` with `j < k`, in packed order.
pub fn pair_list(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|j| (j + 1..d).map(move |k| (j, k))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultCompParams {
    marginals: Vec<ComPoissonParams>,
    /// Packed strictly-upper-triangular δ.
    delta: Vec<f64>,
    omega: f64,
}

impl MultCompParams {
    pub fn new(marginals: Vec<ComPoissonParams>, delta: Vec<f64>, omega: f64) -> Result<Self> {
        let d = marginals.len();
        if d == 0 {
            return Err(invalid("at least one component is required"));
        }
        if delta.len() != pairs(d) {
            return Err(invalid(format!("expected {} dependence parameters for d = {d}, got {}", pairs(d), delta.len())));
        }
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(invalid("dependence parameters must be finite"));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(invalid(format!("omega must be positive, got {omega}")));
        }
        Ok(Self { marginals, delta, omega })
    }

    pub fn from_vectors(lambda: &[f64], nu: &[f64], delta: Vec<f64>, omega: f64) -> Result<Self> {
        if lambda.len() != nu.len() {
            return Err(invalid("lambda and nu lengths differ"));
        }
        let marginals = lambda
            .iter()
            .zip(nu)
            .map(|(&l, &n)| ComPoissonParams::new(l, n))
            .collect::<Result<Vec<_>>>()?;
        Self::new(marginals, delta, omega)
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[ComPoissonParams] {
        &self.marginals
    }

    pub fn marginal(&self, j: usize) -> &ComPoissonParams {
        &self.marginals[j]
    }

    pub fn set_marginal(&mut self, j: usize, p: ComPoissonParams) {
        self.marginals[j] = p;
    }

    pub fn delta(&self, j: usize, k: usize) -> f64 {
        self.delta[pair_index(j.min(k), j.max(k), self.dim())]
    }

    pub fn deltas(&self) -> &[f64] {
        &self.delta
    }

    pub fn set_delta_packed(&mut self, idx: usize, value: f64) {
        self.delta[idx] = value;
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn set_omega(&mut self, omega: f64) {
        self.omega = omega;
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.marginals.iter().map(|m| m.lambda()).collect()
    }

    pub fn nus(&self) -> Vec<f64> {
        self.marginals.iter().map(|m| m.nu()).collect()
    }

    /// `C(d,2)^{-1}`, or 0 when there are no pairs.
    pub fn pair_weight(&self) -> f64 {
        let c = pairs(self.dim());
        if c == 0 {
            0.0
        } else {
            1.0 / c as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Estimated,
}

/// The per-component `Ψ_j` (or `r̂_j`) and `1/Z_j` (or `ẑ_j^{-1}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCache {
    pub psi: Vec<f64>,
    pub reciprocal_z: Option<Vec<f64>>,
    pub provenance: Provenance,
}

impl KernelCache {
    pub fn exact(p: &MultCompParams, policy: &TruncationPolicy) -> Result<Self> {
        let mut psis = Vec::with_capacity(p.dim());
        let mut rz = Vec::with_capacity(p.dim());
        for m in p.marginals() {
            psis.push(psi(m, p.omega(), policy)?);
            rz.push((-truncated_z(m, policy)?.log_value).exp());
        }
        Ok(Self {
            psi: psis,
            reciprocal_z: Some(rz),
            provenance: Provenance::Exact,
        })
    }
}

/// Open feasibility interval for `δ_jk` given the two Laplace transforms.
pub fn delta_bounds(psi_j: f64, psi_k: f64) -> Result<(f64, f64)> {
    if !(psi_j > 0.0 && psi_j < 1.0 && psi_k > 0.0 && psi_k < 1.0) {
        return Err(invalid(format!("psi values must lie in (0,1), got ({psi_j}, {psi_k})")));
    }
    let lower = -1.0 / ((1.0 - psi_j) * (1.0 - psi_k)).max(psi_j * psi_k);
    let upper = 1.0 / (psi_j * (1.0 - psi_k)).max(psi_k * (1.0 - psi_j));
    Ok((lower, upper))
}

/// First `(j, k)` whose `δ_jk` is not strictly inside its interval.
pub fn check_feasible(p: &MultCompParams, psi: &[f64]) -> Result<()> {
    for (idx, (j, k)) in pair_list(p.dim()).into_iter().enumerate() {
        let (lower, upper) = delta_bounds(psi[j], psi[k])?;
        let delta = p.deltas()[idx];
        if !(delta > lower && delta < upper) {
            return Err(Error::InfeasibleDelta { j, k, delta, lower, upper });
        }
    }
    Ok(())
}

pub fn validate_params(p: &MultCompParams, cache: &KernelCache) -> bool {
    check_feasible(p, &cache.psi).is_ok()
}

/// `1 + C(d,2)^{-1} Σ_{j<k} δ_jk φ_j φ_k`.
pub fn kernel_term(x: &[u32], p: &MultCompParams, psi: &[f64]) -> f64 {
    let d = p.dim();
    let omega = p.omega();
    let phi: Vec<f64> = (0..d).map(|j| (-omega * x[j] as f64).exp() - psi[j]).collect();
    let mut s = 0.0;
    let mut idx = 0;
    for j in 0..d {
        for k in j + 1..d {
            s += p.deltas()[idx] * phi[j] * phi[k];
            idx += 1;
        }
    }
    1.0 + p.pair_weight() * s
}

/// Exact evaluator with the per-component series computed once.
#[derive(Debug, Clone)]
pub struct ExactJoint {
    params: MultCompParams,
    cache: KernelCache,
    log_z: Vec<f64>,
}

impl ExactJoint {
    pub fn new(params: &MultCompParams, policy: &TruncationPolicy) -> Result<Self> {
        let cache = KernelCache::exact(params, policy)?;
        check_feasible(params, &cache.psi)?;
        let log_z = params
            .marginals()
            .iter()
            .map(|m| truncated_z(m, policy).map(|z| z.log_value))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params: params.clone(),
            cache,
            log_z,
        })
    }

    pub fn cache(&self) -> &KernelCache {
        &self.cache
    }

    #[inline]
    pub fn ln_marginal_pmf(&self, j: usize, x: u32) -> f64 {
        self.params.marginal(j).ln_weight(x as u64) - self.log_z[j]
    }

    pub fn pmf(&self, x: &[u32]) -> Result<f64> {
        if x.len() != self.params.dim() {
            return Err(invalid("count vector has wrong length"));
        }
        let ln_prod: f64 = (0..x.len()).map(|j| self.ln_marginal_pmf(j, x[j])).sum();
        Ok(ln_prod.exp() * kernel_term(x, &self.params, &self.cache.psi))
    }

    fn check_subset(&self, subset: &[usize]) -> Result<()> {
        let d = self.params.dim();
        if subset.is_empty() {
            return Err(Error::InvalidIndexSet("subset must be nonempty".into()));
        }
        let mut seen = vec![false; d];
        for &b in subset {
            if b >= d || seen[b] {
                return Err(Error::InvalidIndexSet(format!("index {b} out of range or repeated")));
            }
            seen[b] = true;
        }
        Ok(())
    }

    /// Joint pmf of `X_B` at `x_b` (listed in the order of `subset`).
    pub fn marginal_pmf(&self, x_b: &[u32], subset: &[usize]) -> Result<f64> {
        self.check_subset(subset)?;
        if x_b.len() != subset.len() {
            return Err(invalid("subset and count vector lengths differ"));
        }
        let omega = self.params.omega();
        let phi: Vec<f64> = subset
            .iter()
            .zip(x_b)
            .map(|(&b, &x)| (-omega * x as f64).exp() - self.cache.psi[b])
            .collect();
        let mut s = 0.0;
        for a in 0..subset.len() {
            for c in a + 1..subset.len() {
                s += self.params.delta(subset[a], subset[c]) * phi[a] * phi[c];
            }
        }
        let ln_prod: f64 = subset.iter().zip(x_b).map(|(&b, &x)| self.ln_marginal_pmf(b, x)).sum();
        Ok(ln_prod.exp() * (1.0 + self.params.pair_weight() * s))
    }

    /// `P(X_B = x_B | X_C = x_C)` with `C` the complement of `B`; `x` is the
    /// full count vector.
    pub fn conditional_pmf(&self, x: &[u32], subset: &[usize]) -> Result<f64> {
        self.check_subset(subset)?;
        let complement: Vec<usize> = (0..self.params.dim()).filter(|i| !subset.contains(i)).collect();
        let joint = self.pmf(x)?;
        if complement.is_empty() {
            return Ok(joint);
        }
        let x_c: Vec<u32> = complement.iter().map(|&c| x[c]).collect();
        Ok(joint / self.marginal_pmf(&x_c, &complement)?)
    }
}

pub fn joint_pmf_exact(x: &[u32], p: &MultCompParams, policy: &TruncationPolicy) -> Result<f64> {
    ExactJoint::new(p, policy)?.pmf(x)
}

pub fn marginal_pmf(x_b: &[u32], subset: &[usize], p: &MultCompParams, policy: &TruncationPolicy) -> Result<f64> {
    ExactJoint::new(p, policy)?.marginal_pmf(x_b, subset)
}

pub fn conditional_pmf(x: &[u32], subset: &[usize], p: &MultCompParams, policy: &TruncationPolicy) -> Result<f64> {
    ExactJoint::new(p, policy)?.conditional_pmf(x, subset)
}

/// Per-component pieces of the correlation formula.
#[derive(Debug, Clone, Copy)]
pub struct CorrelationFactor {
    /// `E[X φ(X)] = [e^{-ω}λ Z'(e^{-ω}λ) - ζ Z(e^{-ω}λ)] / Z(λ)`.
    pub cross_moment: f64,
    pub variance: f64,
}

pub fn correlation_factor(m: &ComPoissonParams, omega: f64, policy: &TruncationPolicy) -> Result<CorrelationFactor> {
    let summary = marginal_summary(m, policy)?;
    let tilted = m.tilted(omega);
    let z_t = truncated_z(&tilted, policy)?.log_value;
    let zp_t = truncated_z_prime(&tilted, policy)?.log_value;
    let a = (tilted.lambda().ln() + zp_t - summary.log_z).exp();
    let b = summary.mean * (z_t - summary.log_z).exp();
    Ok(CorrelationFactor {
        cross_moment: a - b,
        variance: summary.variance,
    })
}

/// `δ_jk C(d,2)^{-1} A_jk / √(ζ'_j ζ'_k)` with `A_jk` the product of the two
/// cross moments.
pub fn pairwise_correlation(j: usize, k: usize, p: &MultCompParams, policy: &TruncationPolicy) -> Result<f64> {
    if !(j < k && k < p.dim()) {
        return Err(Error::InvalidIndexSet(format!("need j < k < d, got ({j}, {k})")));
    }
    let fj = correlation_factor(p.marginal(j), p.omega(), policy)?;
    let fk = correlation_factor(p.marginal(k), p.omega(), policy)?;
    Ok(p.delta(j, k) * p.pair_weight() * fj.cross_moment * fk.cross_moment / (fj.variance * fk.variance).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRangeRow {
    pub omega: f64,
    pub min_corr: f64,
    pub max_corr: f64,
    pub config_id: String,
}

/// Bivariate correlation at both ends of the δ interval, per ω.
pub fn correlation_range(
    a: &ComPoissonParams,
    b: &ComPoissonParams,
    omegas: &[f64],
    config_id: &str,
    policy: &TruncationPolicy,
) -> Result<Vec<CorrelationRangeRow>> {
    omegas
        .iter()
        .map(|&omega| {
            let fa = correlation_factor(a, omega, policy)?;
            let fb = correlation_factor(b, omega, policy)?;
            let (lower, upper) = delta_bounds(psi(a, omega, policy)?, psi(b, omega, policy)?)?;
            let unit = fa.cross_moment * fb.cross_moment / (fa.variance * fb.variance).sqrt();
            let (c1, c2) = (lower * unit, upper * unit);
            Ok(CorrelationRangeRow {
                omega,
                min_corr: c1.min(c2),
                max_corr: c1.max(c2),
                config_id: config_id.to_string(),
            })
        })
        .collect()
}

/// `(ω minimizing min_corr, ω maximizing max_corr)`.
pub fn correlation_extrema(rows: &[CorrelationRangeRow]) -> Option<(f64, f64)> {
    let argmin = rows.iter().min_by(|x, y| x.min_corr.total_cmp(&y.min_corr))?;
    let argmax = rows.iter().max_by(|x, y| x.max_corr.total_cmp(&y.max_corr))?;
    Some((argmin.omega, argmax.omega))
}

pub fn write_correlation_csv<W: Write>(rows: &[CorrelationRangeRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikDecomposition {
    pub marginal: f64,
    pub kernel: f64,
    pub total: f64,
}

impl LogLikDecomposition {
    pub fn new(marginal: f64, kernel: f64) -> Self {
        Self {
            marginal,
            kernel,
            total: marginal + kernel,
        }
    }
}

/// `Σ_j [S_x,j ln λ_j - ν_j S_lnx!,j]`: the marginal part without normalizers.
pub fn unnormalized_marginal(stats: &SufficientStats, p: &MultCompParams) -> f64 {
    p.marginals()
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let mut v = stats.sum_x[j] * m.lambda().ln();
            if m.nu() != 0.0 {
                v -= m.nu() * stats.sum_ln_factorial[j];
            }
            v
        })
        .sum()
}

/// Marginal part including `n Σ_j ln z_j^{-1}`.
pub fn marginal_loglik(stats: &SufficientStats, p: &MultCompParams, reciprocal_z: &[f64]) -> f64 {
    let n = stats.n as f64;
    unnormalized_marginal(stats, p) + reciprocal_z.iter().map(|z| n * z.ln()).sum::<f64>()
}

/// `Σ_i ln kernel_term(x_i)`; a non-positive term is an infeasibility error.
pub fn kernel_loglik(data: &CountMatrix, p: &MultCompParams, psi: &[f64]) -> Result<f64> {
    if p.dim() < 2 {
        return Ok(0.0);
    }
    let mut s = 0.0;
    for x in data.iter_rows() {
        let k = kernel_term(x, p, psi);
        if !(k > 0.0) {
            return Err(Error::NonPositiveKernel(k));
        }
        s += k.ln();
    }
    Ok(s)
}

pub fn loglik(data: &CountMatrix, p: &MultCompParams, cache: &KernelCache) -> Result<LogLikDecomposition> {
    if data.cols() != p.dim() {
        return Err(invalid("data dimension does not match parameters"));
    }
    let rz = cache.reciprocal_z.as_ref().ok_or(Error::MissingReciprocalZ)?;
    let stats = SufficientStats::from_counts(data);
    let marginal = marginal_loglik(&stats, p, rz);
    Ok(LogLikDecomposition::new(marginal, kernel_loglik(data, p, &cache.psi)?))
}

/// Per-observation marginal log-likelihood, the form summed row by row.
pub fn marginal_loglik_rowwise(data: &CountMatrix, p: &MultCompParams, reciprocal_z: &[f64]) -> f64 {
    data.iter_rows()
        .map(|x| {
            (0..p.dim())
                .map(|j| {
                    let m = p.marginal(j);
                    x[j] as f64 * m.lambda().ln() - m.nu() * ln_factorial(x[j] as u64) + reciprocal_z[j].ln()
                })
                .sum::<f64>()
        })
        .sum()
}
