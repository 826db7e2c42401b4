//! Choosing `N_z` so the estimated log-likelihood has a target spread.
//!
//! The variance of the estimator is roughly inversely proportional to `N_z`,
//! so `N_z ← ⌈N_z (sd / target)²⌉` moves the SD toward the target in one step
//! up to Monte Carlo error in the measurement.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::chain::psi_from_draws;
use super::model::{FitData, LocationModel, Theta};
use crate::error::{invalid, Result};
use crate::sampling::ComPoissonSampler;
use crate::sarmanov::{kernel_loglik, unnormalized_marginal};
use crate::special::mean_sd;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptSettings {
    pub target_sd: f64,
    pub pilot_n_z: usize,
    pub replications: usize,
    pub max_updates: usize,
    pub accept_low: f64,
    pub accept_high: f64,
}

impl Default for AdaptSettings {
    fn default() -> Self {
        Self {
            target_sd: 1.2,
            pilot_n_z: 1000,
            replications: 50,
            max_updates: 3,
            accept_low: 1.0,
            accept_high: 1.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationResult {
    pub n_z: usize,
    pub measured_sd: f64,
    /// False when the SD was still outside the acceptance band after the
    /// last update.
    pub converged: bool,
    /// `(N_z, measured SD)` for every measurement taken.
    pub history: Vec<(usize, f64)>,
}

/// `⌈N_z (sd / target)²⌉`.
pub fn next_n_z(n_z: usize, measured_sd: f64, target_sd: f64) -> usize {
    ((n_z as f64) * (measured_sd / target_sd).powi(2)).ceil().max(1.0) as usize
}

/// SD of the GIMH log-likelihood estimate at `theta` over `replications`
/// independent draws of both caches.
pub fn measure_loglik_sd<R: Rng + ?Sized>(
    model: &LocationModel,
    data: &FitData,
    theta: &Theta,
    n_z: usize,
    n_r: usize,
    replications: usize,
    rng: &mut R,
) -> Result<f64> {
    if replications < 2 {
        return Err(invalid("at least 2 replications are needed"));
    }
    let mut prepared = Vec::with_capacity(data.levels.len());
    for lev in &data.levels {
        let lambda = model.lambdas(&theta.location, &lev.covariates);
        let params = theta.multcomp(&lambda)?;
        let samplers = params
            .marginals()
            .iter()
            .map(|m| ComPoissonSampler::new(*m))
            .collect::<Result<Vec<_>>>()?;
        let base = unnormalized_marginal(&lev.stats, &params);
        prepared.push((params, samplers, base));
    }
    let mut totals = Vec::with_capacity(replications);
    let mut col = Vec::with_capacity(n_r);
    for _ in 0..replications {
        let mut total = 0.0;
        for (lev, (params, samplers, base)) in data.levels.iter().zip(&prepared) {
            let n = lev.stats.n as f64;
            let mut psi = Vec::with_capacity(samplers.len());
            total += base;
            for s in samplers {
                col.clear();
                s.fill(n_r, rng, &mut col);
                psi.push(psi_from_draws(&col, theta.omega));
                let used = s.count_proposals(n_z, rng);
                total += n * s.reciprocal_z_from_counts(n_z, used).log_value;
            }
            total += kernel_loglik(&lev.counts, params, &psi)?;
        }
        totals.push(total);
    }
    Ok(mean_sd(&totals).1)
}

pub fn adapt_n_z<R: Rng + ?Sized>(
    model: &LocationModel,
    data: &FitData,
    theta: &Theta,
    n_r: usize,
    settings: &AdaptSettings,
    rng: &mut R,
) -> Result<AdaptationResult> {
    let in_band = |sd: f64| sd >= settings.accept_low && sd <= settings.accept_high;
    let mut n_z = settings.pilot_n_z.max(1);
    let mut sd = measure_loglik_sd(model, data, theta, n_z, n_r, settings.replications, rng)?;
    let mut history = vec![(n_z, sd)];
    for _ in 0..settings.max_updates {
        if in_band(sd) {
            break;
        }
        n_z = next_n_z(n_z, sd, settings.target_sd);
        sd = measure_loglik_sd(model, data, theta, n_z, n_r, settings.replications, rng)?;
        history.push((n_z, sd));
    }
    let converged = in_band(sd);
    if !converged {
        log::warn!("N_z adaptation ended outside the target band: N_z = {n_z}, sd = {sd:.3}");
    }
    Ok(AdaptationResult {
        n_z,
        measured_sd: sd,
        converged,
        history,
    })
}
