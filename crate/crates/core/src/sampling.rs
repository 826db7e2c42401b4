//! Exact rejection sampling from COM-Poisson(λ, ν) and the unbiased estimator
//! of `1/Z(λ, ν)` built from the sampler's proposal count.
//!
//! For `ν ≥ 1` proposals come from Poisson(μ) with `μ = λ^{1/ν}`; the target
//! kernel is `(μ^x/x!)^ν` so the acceptance ratio is `(μ^x/x!)^{ν-1}`, maximal
//! at `x = ⌊μ⌋`. For `ν < 1` proposals come from a geometric law with ratio
//! `r = 1 - 2ν/(2νμ + 1 + ν)` (ratio `λ` when `ν = 0`), and the supremum of the
//! log ratio is found at the integer where its increments change sign.
//!
//! If `C` is the supremum and `B_env` the envelope's normalizer, every
//! proposal is accepted with probability `Z / (C · B_env)`, hence the mean
//! number of proposals per acceptance is `C · B_env / Z` and
//! `(n_N / N) / (C · B_env)` is unbiased for `1/Z`.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::compoisson::ComPoissonParams;
use crate::error::{Error, Result};
use crate::special::ln_factorial;

/// Envelope means above this are treated as unsimulable.
pub const MAX_ENVELOPE_MEAN: f64 = 1e7;

/// Poisson inversion is used below this rate; larger rates use rand_distr's PTRS.
const INVERSION_MAX_RATE: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    Poisson,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeSpec {
    pub kind: EnvelopeKind,
    /// Poisson rate `μ`, or the geometric ratio `r` of the kernel `r^x`.
    pub rate_or_ratio: f64,
    /// Log of the supremum of target kernel over envelope kernel.
    pub log_bound: f64,
    /// Normalizing constant of the envelope kernel (`e^μ` or `1/(1-r)`).
    pub envelope_z: f64,
    log_envelope_z: f64,
}

impl EnvelopeSpec {
    /// `ln B` where `B = envelope_z · exp(log_bound)`.
    pub fn log_scaled_bound(&self) -> f64 {
        self.log_envelope_z + self.log_bound
    }

    /// `ln` of the envelope kernel (`μ^x/x!` or `r^x`), unscaled.
    pub fn ln_envelope_kernel(&self, x: u64) -> f64 {
        match self.kind {
            EnvelopeKind::Poisson => x as f64 * self.rate_or_ratio.ln() - ln_factorial(x),
            EnvelopeKind::Geometric => x as f64 * self.rate_or_ratio.ln(),
        }
    }
}

pub fn build_envelope(p: &ComPoissonParams) -> Result<EnvelopeSpec> {
    let (lambda, nu) = (p.lambda(), p.nu());
    if nu >= 1.0 {
        let mu = lambda.powf(1.0 / nu);
        if mu > MAX_ENVELOPE_MEAN {
            return Err(Error::SupportTooWide(format!("poisson envelope rate {mu}")));
        }
        let m = mu.floor() as u64;
        let log_bound = (nu - 1.0) * (m as f64 * mu.ln() - ln_factorial(m));
        Ok(EnvelopeSpec {
            kind: EnvelopeKind::Poisson,
            rate_or_ratio: mu,
            log_bound,
            envelope_z: mu.exp(),
            log_envelope_z: mu,
        })
    } else {
        let ratio = if nu == 0.0 {
            lambda
        } else {
            let mu = lambda.powf(1.0 / nu);
            1.0 - 2.0 * nu / (2.0 * nu * mu + 1.0 + nu)
        };
        if !(ratio > 0.0 && ratio < 1.0) || ratio / (1.0 - ratio) > MAX_ENVELOPE_MEAN {
            return Err(Error::SupportTooWide(format!("geometric envelope ratio {ratio}")));
        }
        let slope = lambda.ln() - ratio.ln();
        let f = |x: u64| x as f64 * slope - nu * ln_factorial(x);
        let log_bound = if nu == 0.0 {
            0.0
        } else {
            // increments slope - ν ln(x+1) decrease; the peak is where they turn non-positive
            let turn = (slope / nu).exp();
            if !turn.is_finite() || turn > MAX_ENVELOPE_MEAN {
                return Err(Error::SupportTooWide(format!("geometric envelope mode {turn}")));
            }
            let x_star = (turn.ceil() - 1.0).max(0.0) as u64;
            let lo = x_star.saturating_sub(1);
            (lo..=x_star + 1).map(f).fold(f(0), f64::max)
        };
        let log_envelope_z = -(1.0 - ratio).ln();
        Ok(EnvelopeSpec {
            kind: EnvelopeKind::Geometric,
            rate_or_ratio: ratio,
            log_bound,
            envelope_z: log_envelope_z.exp(),
            log_envelope_z,
        })
    }
}

/// Table entries stop once the envelope tail mass falls below this.
const TABLE_TAIL: f64 = 1e-13;
const TABLE_CAP: usize = 4096;

/// Envelope CDF and acceptance probabilities over the bulk of the support.
#[derive(Debug, Clone)]
struct Tables {
    cdf: Vec<f64>,
    accept: Vec<f64>,
}

/// Rejection sampler bound to one parameter pair.
#[derive(Debug, Clone)]
pub struct ComPoissonSampler {
    params: ComPoissonParams,
    envelope: EnvelopeSpec,
    ln_rate_or_ratio: f64,
    exp_neg_rate: f64,
    poisson: Option<Poisson<f64>>,
    ln_lambda: f64,
    tables: Option<Tables>,
}

impl ComPoissonSampler {
    /// Sampler with inversion and acceptance tables, for repeated draws.
    pub fn new(params: ComPoissonParams) -> Result<Self> {
        let mut s = Self::untabulated(params)?;
        s.tables = s.build_tables();
        Ok(s)
    }

    /// Sampler without tables; cheaper to build when only a few draws are needed.
    pub fn untabulated(params: ComPoissonParams) -> Result<Self> {
        let envelope = build_envelope(&params)?;
        let poisson = match envelope.kind {
            EnvelopeKind::Poisson if envelope.rate_or_ratio > INVERSION_MAX_RATE => {
                Some(Poisson::new(envelope.rate_or_ratio).map_err(|e| Error::InvalidParameter(e.to_string()))?)
            }
            _ => None,
        };
        Ok(Self {
            params,
            envelope,
            ln_rate_or_ratio: envelope.rate_or_ratio.ln(),
            exp_neg_rate: (-envelope.rate_or_ratio).exp(),
            poisson,
            ln_lambda: params.lambda().ln(),
            tables: None,
        })
    }

    fn build_tables(&self) -> Option<Tables> {
        if self.poisson.is_some() {
            return None;
        }
        let rate = self.envelope.rate_or_ratio;
        let mut cdf = Vec::new();
        match self.envelope.kind {
            EnvelopeKind::Poisson => {
                let mut term = self.exp_neg_rate;
                let mut acc = term;
                cdf.push(acc);
                while (1.0 - acc > TABLE_TAIL || (cdf.len() as f64) <= rate) && cdf.len() < TABLE_CAP && term > 0.0 {
                    term *= rate / cdf.len() as f64;
                    acc += term;
                    cdf.push(acc);
                }
            }
            EnvelopeKind::Geometric => {
                let mut tail = rate;
                cdf.push(1.0 - tail);
                while tail > TABLE_TAIL && cdf.len() < TABLE_CAP {
                    tail *= rate;
                    cdf.push(1.0 - tail);
                }
            }
        }
        let accept = (0..cdf.len() as u64).map(|x| self.log_acceptance(x).min(0.0).exp()).collect();
        Some(Tables { cdf, accept })
    }

    pub fn params(&self) -> &ComPoissonParams {
        &self.params
    }

    pub fn envelope(&self) -> &EnvelopeSpec {
        &self.envelope
    }

    /// Log acceptance probability of a proposed `x` (always ≤ 0 up to rounding).
    #[inline]
    pub fn log_acceptance(&self, x: u64) -> f64 {
        let nu = self.params.nu();
        let raw = match self.envelope.kind {
            EnvelopeKind::Poisson => {
                if nu == 1.0 {
                    0.0
                } else {
                    (nu - 1.0) * (x as f64 * self.ln_rate_or_ratio - ln_factorial(x))
                }
            }
            EnvelopeKind::Geometric => {
                if nu == 0.0 {
                    0.0
                } else {
                    x as f64 * (self.ln_lambda - self.ln_rate_or_ratio) - nu * ln_factorial(x)
                }
            }
        };
        raw - self.envelope.log_bound
    }

    /// Envelope draw by inversion of `u`, continuing past the table if needed.
    #[inline]
    fn invert(&self, u: f64) -> u64 {
        if let Some(t) = &self.tables {
            if let Some(x) = t.cdf.iter().position(|&c| u <= c) {
                return x as u64;
            }
        }
        match self.envelope.kind {
            EnvelopeKind::Poisson => {
                let mu = self.envelope.rate_or_ratio;
                let mut x = 0u64;
                let mut term = self.exp_neg_rate;
                let mut cdf = term;
                while u > cdf && term > 0.0 {
                    x += 1;
                    term *= mu / x as f64;
                    cdf += term;
                }
                x
            }
            EnvelopeKind::Geometric => ((1.0 - u).ln() / self.ln_rate_or_ratio).floor() as u64,
        }
    }

    #[inline]
    fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.poisson {
            Some(dist) => dist.sample(rng) as u64,
            None => self.invert(rng.random()),
        }
    }

    #[inline]
    fn accepts<R: Rng + ?Sized>(&self, x: u64, rng: &mut R) -> bool {
        let prob = match &self.tables {
            Some(t) if (x as usize) < t.accept.len() => t.accept[x as usize],
            _ => self.log_acceptance(x).min(0.0).exp(),
        };
        prob >= 1.0 || rng.random::<f64>() < prob
    }

    /// One exact draw together with the number of proposals it consumed.
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (u32, u64) {
        let mut proposals = 0u64;
        loop {
            proposals += 1;
            let x = self.propose(rng);
            if self.accepts(x, rng) {
                return (x.min(u32::MAX as u64) as u32, proposals);
            }
        }
    }

    /// Appends `n` draws to `out`; returns the total proposals used.
    pub fn fill<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, out: &mut Vec<u32>) -> u64 {
        out.reserve(n);
        let mut total = 0;
        for _ in 0..n {
            let (x, k) = self.draw(rng);
            out.push(x);
            total += k;
        }
        total
    }

    /// Proposal count for `n` acceptances, discarding the accepted values.
    pub fn count_proposals<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> u64 {
        (0..n).map(|_| self.draw(rng).1).sum()
    }

    pub fn reciprocal_z_from_counts(&self, accepted: usize, proposals: u64) -> ReciprocalZEstimate {
        let log_value = (proposals as f64 / accepted as f64).ln() - self.envelope.log_scaled_bound();
        ReciprocalZEstimate {
            value: log_value.exp(),
            log_value,
            accepted,
            proposals_used: proposals,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReciprocalZEstimate {
    pub value: f64,
    pub log_value: f64,
    pub accepted: usize,
    pub proposals_used: u64,
}

/// `n` exact draws and the number of proposals consumed.
pub fn sample_com<R: Rng + ?Sized>(p: &ComPoissonParams, n: usize, rng: &mut R) -> Result<(Vec<u32>, u64)> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let sampler = ComPoissonSampler::new(*p)?;
    let mut out = Vec::with_capacity(n);
    let used = sampler.fill(n, rng, &mut out);
    Ok((out, used))
}

/// Runs the sampler until `accepted` acceptances and returns `(n_N/N)/B`.
pub fn estimate_reciprocal_z<R: Rng + ?Sized>(p: &ComPoissonParams, accepted: usize, rng: &mut R) -> Result<ReciprocalZEstimate> {
    if accepted == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    let sampler = ComPoissonSampler::new(*p)?;
    let used = sampler.count_proposals(accepted, rng);
    Ok(sampler.reciprocal_z_from_counts(accepted, used))
}
