//! Convergence diagnostics, posterior summaries and posterior-predictive
//! replication of the match statistics.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compoisson::TruncationPolicy;
use crate::error::{invalid, Error, Result};
use crate::mcmc::{FitOutput, Theta};
use crate::multsample::{KPolicy, MultCompSampler};
use crate::par::{map_indexed, Execution};
use crate::regression::{lambda_from_gamma, RegressionSpec};
use crate::sarmanov::KernelCache;
use crate::seed::{stream, Purpose};
use crate::special::mean_sd;

/// Split-chain potential scale reduction factor.
///
/// Each chain is cut into two halves (the middle draw is dropped for odd
/// lengths) and the classical between/within formula is applied to the halves.
pub fn rhat(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(invalid("R-hat needs at least 2 chains"));
    }
    let len = chains[0].len();
    if chains.iter().any(|c| c.len() != len) {
        return Err(invalid("R-hat needs chains of equal length"));
    }
    if len < 4 {
        return Err(invalid("R-hat needs chains of length at least 4"));
    }
    if chains.iter().all(|c| c == &chains[0]) {
        return Err(Error::Degenerate("all chains are identical".into()));
    }
    let n = len / 2;
    let halves: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..n], &c[len - n..]]).collect();
    let stats: Vec<(f64, f64)> = halves.iter().map(|h| mean_sd(h)).collect();
    let w = stats.iter().map(|s| s.1 * s.1).sum::<f64>() / stats.len() as f64;
    if !(w > 0.0) {
        return Err(Error::Degenerate("zero within-chain variance".into()));
    }
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let b = n as f64 * mean_sd(&means).1.powi(2);
    let nf = n as f64;
    Ok(((nf - 1.0) / nf + b / (nf * w)).sqrt())
}

/// Type-7 (linear interpolation) quantile of sorted values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub q975: f64,
}

impl Summary {
    /// 95% equal-tailed interval.
    pub fn interval(&self) -> (f64, f64) {
        (self.q025, self.q975)
    }

    pub fn covers(&self, value: f64) -> bool {
        self.q025 <= value && value <= self.q975
    }
}

pub fn summarize(draws: &[f64]) -> Result<Summary> {
    if draws.is_empty() {
        return Err(invalid("no draws to summarize"));
    }
    if draws.iter().any(|v| !v.is_finite()) {
        return Err(invalid("draws contain non-finite values"));
    }
    let (mean, sd) = mean_sd(draws);
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p| quantile_sorted(&sorted, p);
    Ok(Summary {
        mean,
        sd: if sd.is_nan() { 0.0 } else { sd },
        q025: q(0.025),
        q05: q(0.05),
        q50: q(0.5),
        q95: q(0.95),
        q975: q(0.975),
    })
}

/// Retained draws of several chains, each row-major `iteration × parameter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawSet {
    pub names: Vec<String>,
    pub chains: Vec<Vec<f64>>,
}

impl DrawSet {
    pub fn new(names: Vec<String>, chains: Vec<Vec<f64>>) -> Result<Self> {
        let p = names.len();
        if p == 0 || chains.is_empty() {
            return Err(invalid("draw set needs parameters and chains"));
        }
        if chains.iter().any(|c| c.is_empty() || c.len() % p != 0) {
            return Err(invalid("chain draws must be a non-empty multiple of the parameter count"));
        }
        Ok(Self { names, chains })
    }

    pub fn from_fit(fit: &FitOutput) -> Result<Self> {
        Self::new(fit.parameter_names.clone(), fit.chains.iter().map(|c| c.draws.clone()).collect())
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, chain: usize, p: usize) -> Vec<f64> {
        self.chains[chain].chunks_exact(self.n_params()).map(|r| r[p]).collect()
    }

    pub fn columns(&self, p: usize) -> Vec<Vec<f64>> {
        (0..self.chains.len()).map(|c| self.column(c, p)).collect()
    }

    pub fn combined(&self, p: usize) -> Vec<f64> {
        self.columns(p).concat()
    }

    /// All retained parameter vectors, chain after chain.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.chains.iter().flat_map(|c| c.chunks_exact(self.n_params()))
    }

    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(|c| c.len() / self.n_params()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    #[serde(flatten)]
    pub summary: Summary,
    /// `None` for a single chain, a parameter held fixed, or a stuck chain.
    pub rhat: Option<f64>,
}

/// Posterior functionals reported for the home-advantage regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionExtras {
    /// `exp(γ1)`.
    pub home_advantage_pre: Summary,
    /// `exp(γ1 + γ2)`.
    pub home_advantage_pandemic: Summary,
    pub prob_gamma2_negative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n_chains: usize,
    pub draws_per_chain: Vec<usize>,
    pub parameters: Vec<ParameterSummary>,
    pub max_rhat: Option<f64>,
    pub regression: Option<RegressionExtras>,
}

impl FitReport {
    /// Fails when the chains of a moving parameter are identical; other
    /// R-hat failures (short or stuck chains) leave `rhat` empty.
    pub fn new(draws: &DrawSet) -> Result<Self> {
        let equal = draws.chains.iter().all(|c| c.len() == draws.chains[0].len());
        let mut parameters = Vec::with_capacity(draws.n_params());
        for (p, name) in draws.names.iter().enumerate() {
            let all = draws.combined(p);
            let summary = summarize(&all)?;
            let fixed = all.iter().all(|&v| v == all[0]);
            let rhat = if draws.chains.len() >= 2 && equal && !fixed {
                let cols = draws.columns(p);
                if cols.iter().all(|c| c == &cols[0]) {
                    return Err(Error::Degenerate(format!("R-hat for {name}: all chains are identical")));
                }
                match rhat(&cols) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        log::warn!("R-hat for {name} unavailable: {e}");
                        None
                    }
                }
            } else {
                None
            };
            parameters.push(ParameterSummary {
                name: name.clone(),
                summary,
                rhat,
            });
        }
        let max_rhat = parameters.iter().filter_map(|p| p.rhat).reduce(f64::max);
        Ok(Self {
            n_chains: draws.chains.len(),
            draws_per_chain: draws.chains.iter().map(|c| c.len() / draws.n_params()).collect(),
            parameters,
            max_rhat,
            regression: regression_extras(draws)?,
        })
    }

    pub fn get(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// `exp(γ1)`, `exp(γ1 + γ2)` and `P(γ2 < 0)` when the draws carry `gamma1` and `gamma2`.
pub fn regression_extras(draws: &DrawSet) -> Result<Option<RegressionExtras>> {
    let (Some(g1), Some(g2)) = (draws.index("gamma1"), draws.index("gamma2")) else {
        return Ok(None);
    };
    let a = draws.combined(g1);
    let b = draws.combined(g2);
    let pre: Vec<f64> = a.iter().map(|v| v.exp()).collect();
    let pand: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y).exp()).collect();
    Ok(Some(RegressionExtras {
        home_advantage_pre: summarize(&pre)?,
        home_advantage_pandemic: summarize(&pand)?,
        prob_gamma2_negative: b.iter().filter(|&&v| v < 0.0).count() as f64 / b.len() as f64,
    }))
}

/// Average home goals and home surplus (home minus away mean) per period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveStatistics {
    pub home_goals_pre: f64,
    pub home_goals_pand: f64,
    pub home_surplus_pre: f64,
    pub home_surplus_pand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSettings {
    pub n_pre: usize,
    pub n_pand: usize,
    pub n_replicates: usize,
    pub seed: u64,
    pub k_policy: KPolicy,
    pub execution: Execution,
}

/// Column means of simulated home and away goals.
fn simulate_period<R: Rng + ?Sized>(
    theta: &Theta,
    spec: &RegressionSpec,
    pandemic: f64,
    n: usize,
    k_policy: &KPolicy,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let lambda = lambda_from_gamma(&theta.location, &[pandemic], spec);
    let params = theta.multcomp(&lambda)?;
    let cache = KernelCache::exact(&params, &TruncationPolicy::default())?;
    let x = MultCompSampler::new(&params, &cache.psi, k_policy)?.sample(n, rng);
    let m = x.column_means();
    Ok((m[0], m[1]))
}

/// Replicates the match statistics under draws from the posterior.
///
/// Replicate `i` uses its own stream, picks one retained parameter vector
/// uniformly and simulates both periods. Replicates whose simulation fails are
/// skipped with a warning; more than 1% failures is an error.
pub fn posterior_predictive(draws: &DrawSet, spec: &RegressionSpec, settings: &PredictiveSettings) -> Result<Vec<PredictiveStatistics>> {
    if settings.n_replicates == 0 {
        return Err(invalid("n_replicates must be at least 1"));
    }
    if settings.n_pre == 0 || settings.n_pand == 0 {
        return Err(invalid("both periods need at least one simulated match"));
    }
    if spec.dim() != 2 {
        return Err(invalid("posterior predictive statistics need home and away components"));
    }
    let n_loc = spec.n_coefficients();
    let rows: Vec<&[f64]> = draws.rows().collect();
    let results = map_indexed(settings.n_replicates, settings.execution, |i| -> Result<PredictiveStatistics> {
        let mut rng = stream(settings.seed, i as u64, Purpose::Predictive);
        let row = rows[rng.random_range(0..rows.len())];
        let theta = Theta::from_flat(row, n_loc, 2)?;
        let (h0, a0) = simulate_period(&theta, spec, 0.0, settings.n_pre, &settings.k_policy, &mut rng)?;
        let (h1, a1) = simulate_period(&theta, spec, 1.0, settings.n_pand, &settings.k_policy, &mut rng)?;
        Ok(PredictiveStatistics {
            home_goals_pre: h0,
            home_goals_pand: h1,
            home_surplus_pre: h0 - a0,
            home_surplus_pand: h1 - a1,
        })
    });
    let mut out = Vec::with_capacity(results.len());
    let mut failed = 0usize;
    for r in results {
        match r {
            Ok(s) => out.push(s),
            Err(e) => {
                failed += 1;
                log::warn!("predictive replicate skipped: {e}");
            }
        }
    }
    if failed * 100 > settings.n_replicates {
        return Err(Error::Degenerate(format!("{failed} of {} predictive replicates failed", settings.n_replicates)));
    }
    Ok(out)
}

/// Long-format density data: `statistic,value,model_tag,period`.
pub fn write_predictive_csv<W: Write>(stats: &[PredictiveStatistics], model_tag: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["statistic", "value", "model_tag", "period"])?;
    for s in stats {
        for (name, value, period) in [
            ("home_goals", s.home_goals_pre, "pre"),
            ("home_goals", s.home_goals_pand, "pandemic"),
            ("home_surplus", s.home_surplus_pre, "pre"),
            ("home_surplus", s.home_surplus_pand, "pandemic"),
        ] {
            w.write_record([name, &value.to_string(), model_tag, period])?;
        }
    }
    w.flush()?;
    Ok(())
}
