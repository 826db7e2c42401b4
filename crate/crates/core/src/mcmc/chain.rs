//! One Markov chain and its single-site updates for both engines.
//!
//! Sweep order per iteration: every location parameter, every `ν_j`, `ω`,
//! then every `δ_jk`. A move whose proposal cannot be simulated (support too
//! wide, truncation cap) is rejected and counted as a soft failure.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::model::{FitData, LocationModel, Theta};
use super::prior::{sample_truncated_normal, standard_normal, truncated_normal_ln_mass, PriorSpec, ProposalSpec};
use crate::counts::{CountMatrix, SufficientStats};
use crate::error::{Error, Result};
use crate::multsample::{KPolicy, MultCompSampler};
use crate::sampling::ComPoissonSampler;
use crate::sarmanov::{check_feasible, delta_bounds, kernel_loglik, pair_list, unnormalized_marginal, LogLikDecomposition, MultCompParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Gimh,
    Exchange,
}

impl Engine {
    pub fn as_str(&self) -> &'static str {
        match self {
            Engine::Gimh => "gimh",
            Engine::Exchange => "exchange",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub engine: Engine,
    pub n_z: usize,
    pub n_r: usize,
    pub k_policy: KPolicy,
    /// Keep every `δ_jk` at 0 and skip the ω and δ moves.
    pub fix_dependence: bool,
}

/// Auxiliary draws and estimates for one covariate level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelCache {
    pub lambda: Vec<f64>,
    /// `Y_r` columns, one per component.
    pub yr: Vec<Vec<u32>>,
    /// `r̂_j`, a deterministic function of `yr` and ω.
    pub psi: Vec<f64>,
    /// `ẑ_j^{-1}`; never populated by the exchange engine. `Y_z` enters the
    /// estimate only through its proposal count, so only the count is kept.
    pub reciprocal_z: Option<Vec<f64>>,
    pub z_proposals: Vec<u64>,
    /// GIMH: estimated log-likelihood. Exchange: `ln q̂(X | θ)`.
    pub loglik: LogLikDecomposition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: Theta,
    pub levels: Vec<LevelCache>,
}

impl ChainState {
    pub fn loglik(&self) -> LogLikDecomposition {
        let marginal = self.levels.iter().map(|l| l.loglik.marginal).sum();
        let kernel = self.levels.iter().map(|l| l.loglik.kernel).sum();
        LogLikDecomposition::new(marginal, kernel)
    }
}

/// Mean of `e^{-ω x}` over stored draws.
pub fn psi_from_draws(draws: &[u32], omega: f64) -> f64 {
    let e = (-omega).exp();
    let mut powers = vec![1.0f64];
    let mut acc = 0.0;
    for &x in draws {
        let x = x as usize;
        if x < 4096 {
            while powers.len() <= x {
                let last = powers[powers.len() - 1];
                powers.push(last * e);
            }
            acc += powers[x];
        } else {
            acc += (-omega * x as f64).exp();
        }
    }
    acc / draws.len() as f64
}

fn level_loglik(
    engine: Engine,
    stats: &SufficientStats,
    counts: &CountMatrix,
    params: &MultCompParams,
    psi: &[f64],
    reciprocal_z: Option<&[f64]>,
) -> Result<LogLikDecomposition> {
    let mut marginal = unnormalized_marginal(stats, params);
    if engine == Engine::Gimh {
        let rz = reciprocal_z.ok_or(Error::MissingReciprocalZ)?;
        marginal += rz.iter().map(|z| stats.n as f64 * z.ln()).sum::<f64>();
    }
    Ok(LogLikDecomposition::new(marginal, kernel_loglik(counts, params, psi)?))
}

/// `ln q̂(x | params, psi)` without normalizers.
fn unnormalized_loglik(x: &CountMatrix, params: &MultCompParams, psi: &[f64]) -> Result<f64> {
    let stats = SufficientStats::from_counts(x);
    Ok(unnormalized_marginal(&stats, params) + kernel_loglik(x, params, psi)?)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveCounters {
    pub attempts: Vec<u64>,
    pub accepts: Vec<u64>,
    window_attempts: Vec<u64>,
    window_accepts: Vec<u64>,
}

impl MoveCounters {
    fn new(n: usize) -> Self {
        Self {
            attempts: vec![0; n],
            accepts: vec![0; n],
            window_attempts: vec![0; n],
            window_accepts: vec![0; n],
        }
    }

    fn record(&mut self, b: usize, accepted: bool) {
        self.attempts[b] += 1;
        self.window_attempts[b] += 1;
        if accepted {
            self.accepts[b] += 1;
            self.window_accepts[b] += 1;
        }
    }

    pub fn rates(&self) -> Vec<f64> {
        self.attempts
            .iter()
            .zip(&self.accepts)
            .map(|(&a, &c)| if a == 0 { f64::NAN } else { c as f64 / a as f64 })
            .collect()
    }
}

/// A proposal's outcome before the accept/reject decision.
struct Candidate {
    theta: Theta,
    levels: Vec<(usize, LevelCache)>,
    log_ratio: f64,
}

pub struct Chain<'a> {
    model: &'a LocationModel,
    data: &'a FitData,
    prior: PriorSpec,
    pub proposal: ProposalSpec,
    cfg: EngineConfig,
    state: ChainState,
    counters: MoveCounters,
    soft_failures: usize,
}

impl<'a> Chain<'a> {
    /// Builds the caches at `theta`; fails if θ is infeasible under the
    /// freshly estimated ratios.
    pub fn new<R: Rng + ?Sized>(
        model: &'a LocationModel,
        data: &'a FitData,
        prior: PriorSpec,
        proposal: ProposalSpec,
        cfg: EngineConfig,
        theta: Theta,
        rng: &mut R,
    ) -> Result<Self> {
        let d = data.d;
        let mut levels = Vec::with_capacity(data.levels.len());
        for lev in &data.levels {
            let lambda = model.lambdas(&theta.location, &lev.covariates);
            let params = theta.multcomp(&lambda)?;
            let mut yr = Vec::with_capacity(d);
            let mut psi = Vec::with_capacity(d);
            let mut samplers = Vec::with_capacity(d);
            for j in 0..d {
                let s = ComPoissonSampler::new(*params.marginal(j))?;
                let mut col = Vec::with_capacity(cfg.n_r);
                s.fill(cfg.n_r, rng, &mut col);
                psi.push(psi_from_draws(&col, theta.omega));
                yr.push(col);
                samplers.push(s);
            }
            check_feasible(&params, &psi)?;
            let (reciprocal_z, z_proposals) = match cfg.engine {
                Engine::Gimh => {
                    let mut rz = Vec::with_capacity(d);
                    let mut used = Vec::with_capacity(d);
                    for s in &samplers {
                        let n = s.count_proposals(cfg.n_z, rng);
                        rz.push(s.reciprocal_z_from_counts(cfg.n_z, n).value);
                        used.push(n);
                    }
                    (Some(rz), used)
                }
                Engine::Exchange => (None, vec![]),
            };
            let loglik = level_loglik(cfg.engine, &lev.stats, &lev.counts, &params, &psi, reciprocal_z.as_deref())?;
            levels.push(LevelCache {
                lambda,
                yr,
                psi,
                reciprocal_z,
                z_proposals,
                loglik,
            });
        }
        let n_blocks = proposal.flat().len();
        Ok(Self {
            model,
            data,
            prior,
            proposal,
            cfg,
            state: ChainState { theta, levels },
            counters: MoveCounters::new(n_blocks),
            soft_failures: 0,
        })
    }

    /// Draws θ from the prior until the caches can be built feasibly.
    /// Regression coefficients start from `N(0, 0.5²)` since the coefficient
    /// prior is too diffuse to give simulable starting points.
    pub fn from_prior<R: Rng + ?Sized>(
        model: &'a LocationModel,
        data: &'a FitData,
        prior: PriorSpec,
        proposal: ProposalSpec,
        cfg: EngineConfig,
        max_tries: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let d = data.d;
        let gamma = |shape: f64, rate: f64| Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Config(e.to_string()));
        let g_lambda = gamma(prior.lambda_shape, prior.lambda_rate)?;
        let g_nu = gamma(prior.nu_shape, prior.nu_rate)?;
        let g_omega = gamma(prior.omega_shape, prior.omega_rate)?;
        let n_delta = Normal::new(0.0, prior.delta_sd).map_err(|e| Error::Config(e.to_string()))?;
        for _ in 0..max_tries {
            let location = match model {
                LocationModel::Direct => (0..d).map(|_| g_lambda.sample(rng)).collect(),
                LocationModel::Regression(spec) => (0..spec.n_coefficients()).map(|_| 0.5 * standard_normal(rng)).collect(),
            };
            let nu = (0..d).map(|_| g_nu.sample(rng)).collect();
            let omega = g_omega.sample(rng);
            let delta = (0..crate::special::pairs(d))
                .map(|_| if cfg.fix_dependence { 0.0 } else { n_delta.sample(rng) })
                .collect();
            let theta = Theta { location, nu, omega, delta };
            if let Ok(chain) = Self::new(model, data, prior, proposal.clone(), cfg, theta, rng) {
                return Ok(chain);
            }
        }
        Err(Error::Initialization(max_tries))
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn counters(&self) -> &MoveCounters {
        &self.counters
    }

    pub fn soft_failures(&self) -> usize {
        self.soft_failures
    }

    pub fn n_blocks(&self) -> usize {
        self.counters.attempts.len()
    }

    fn n_location(&self) -> usize {
        self.state.theta.location.len()
    }

    /// One full sweep.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let (nl, d) = (self.n_location(), self.data.d);
        for b in 0..self.n_blocks() {
            let is_dependence = b >= nl + d;
            if is_dependence && (self.cfg.fix_dependence || d < 2) {
                continue;
            }
            self.step(b, rng)?;
        }
        Ok(())
    }

    /// Attempts the move for block `b`; returns whether it was accepted.
    pub fn step<R: Rng + ?Sized>(&mut self, b: usize, rng: &mut R) -> Result<bool> {
        let (nl, d) = (self.n_location(), self.data.d);
        let candidate = if b < nl {
            self.propose_location(b, rng)
        } else if b < nl + d {
            self.propose_nu(b - nl, rng)
        } else if b == nl + d {
            self.propose_omega(rng)
        } else {
            self.propose_delta(b - nl - d - 1, rng)
        };
        let accepted = match candidate {
            Ok(Some(c)) => {
                let ok = rng.random::<f64>().ln() < c.log_ratio;
                if ok {
                    self.state.theta = c.theta;
                    for (l, cache) in c.levels {
                        self.state.levels[l] = cache;
                    }
                }
                ok
            }
            Ok(None) => false,
            Err(e) if is_soft(&e) => {
                self.soft_failures += 1;
                log::debug!("move {b} rejected: {e}");
                false
            }
            Err(e) => return Err(e),
        };
        self.counters.record(b, accepted);
        Ok(accepted)
    }

    fn prior_ratio(&self, theta: &Theta) -> f64 {
        self.prior.ln_density(self.model, theta) - self.prior.ln_density(self.model, &self.state.theta)
    }

    fn propose_location<R: Rng + ?Sized>(&self, c: usize, rng: &mut R) -> Result<Option<Candidate>> {
        let sigma = self.proposal.sigma_location[c];
        let mut theta = self.state.theta.clone();
        let current = theta.location[c];
        let log_q = match self.model {
            LocationModel::Direct => {
                let next = current * (sigma * standard_normal(rng)).exp();
                theta.location[c] = next;
                next.ln() - current.ln()
            }
            LocationModel::Regression(_) => {
                theta.location[c] = current + sigma * standard_normal(rng);
                0.0
            }
        };
        self.marginal_candidate(theta, log_q, rng)
    }

    fn propose_nu<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> Result<Option<Candidate>> {
        let mut theta = self.state.theta.clone();
        let current = theta.nu[j];
        let next = current * (self.proposal.sigma_nu[j] * standard_normal(rng)).exp();
        theta.nu[j] = next;
        self.marginal_candidate(theta, next.ln() - current.ln(), rng)
    }

    /// λ/ν/γ moves: fresh `Y_r` for every changed (level, component), the
    /// feasibility check, then fresh `Y_z` (GIMH) or an auxiliary dataset
    /// (exchange).
    fn marginal_candidate<R: Rng + ?Sized>(&self, theta: Theta, log_q: f64, rng: &mut R) -> Result<Option<Candidate>> {
        let prior_ratio = self.prior_ratio(&theta);
        if !prior_ratio.is_finite() {
            return Ok(None);
        }
        let d = self.data.d;
        let old = &self.state.theta;
        let mut staged = Vec::new();
        for (l, lev) in self.data.levels.iter().enumerate() {
            let cur = &self.state.levels[l];
            let lambda = self.model.lambdas(&theta.location, &lev.covariates);
            let changed: Vec<usize> = (0..d).filter(|&j| lambda[j] != cur.lambda[j] || theta.nu[j] != old.nu[j]).collect();
            if changed.is_empty() {
                continue;
            }
            let params = theta.multcomp(&lambda)?;
            let mut cache = cur.clone();
            cache.lambda = lambda;
            let mut samplers = Vec::with_capacity(changed.len());
            for &j in &changed {
                let s = ComPoissonSampler::new(*params.marginal(j))?;
                let mut col = Vec::with_capacity(self.cfg.n_r);
                s.fill(self.cfg.n_r, rng, &mut col);
                cache.psi[j] = psi_from_draws(&col, theta.omega);
                cache.yr[j] = col;
                samplers.push((j, s));
            }
            if check_feasible(&params, &cache.psi).is_err() {
                return Ok(None);
            }
            staged.push((l, params, cache, samplers));
        }
        let mut log_ratio = prior_ratio + log_q;
        let mut levels = Vec::with_capacity(staged.len());
        for (l, params, mut cache, samplers) in staged {
            let lev = &self.data.levels[l];
            if self.cfg.engine == Engine::Gimh {
                let rz = cache.reciprocal_z.as_mut().ok_or(Error::MissingReciprocalZ)?;
                for (j, s) in &samplers {
                    let n = s.count_proposals(self.cfg.n_z, rng);
                    rz[*j] = s.reciprocal_z_from_counts(self.cfg.n_z, n).value;
                    cache.z_proposals[*j] = n;
                }
            }
            cache.loglik = level_loglik(self.cfg.engine, &lev.stats, &lev.counts, &params, &cache.psi, cache.reciprocal_z.as_deref())?;
            log_ratio += self.level_ratio(l, &params, &cache, rng)?;
            levels.push((l, cache));
        }
        Ok(Some(Candidate { theta, levels, log_ratio }))
    }

    /// Likelihood part of the acceptance ratio for one level.
    fn level_ratio<R: Rng + ?Sized>(&self, l: usize, params: &MultCompParams, cache: &LevelCache, rng: &mut R) -> Result<f64> {
        let cur = &self.state.levels[l];
        let mut r = cache.loglik.total - cur.loglik.total;
        if self.cfg.engine == Engine::Exchange {
            let n = self.data.levels[l].counts.rows();
            let aux = MultCompSampler::new(params, &cache.psi, &self.cfg.k_policy)?.sample(n, rng);
            let old_params = self.state.theta.multcomp(&cur.lambda)?;
            r += unnormalized_loglik(&aux, &old_params, &cur.psi)? - unnormalized_loglik(&aux, params, &cache.psi)?;
        }
        Ok(r)
    }

    /// ω moves reuse the stored `Y_r`; the marginal term is carried over as is.
    fn propose_omega<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Option<Candidate>> {
        let mut theta = self.state.theta.clone();
        let current = theta.omega;
        let next = current * (self.proposal.sigma_omega * standard_normal(rng)).exp();
        theta.omega = next;
        let prior_ratio = self.prior_ratio(&theta);
        if !prior_ratio.is_finite() {
            return Ok(None);
        }
        let mut staged = Vec::with_capacity(self.data.levels.len());
        for (l, lev) in self.data.levels.iter().enumerate() {
            let mut cache = self.state.levels[l].clone();
            let params = theta.multcomp(&cache.lambda)?;
            cache.psi = cache.yr.iter().map(|col| psi_from_draws(col, next)).collect();
            if check_feasible(&params, &cache.psi).is_err() {
                return Ok(None);
            }
            let kernel = kernel_loglik(&lev.counts, &params, &cache.psi)?;
            cache.loglik = LogLikDecomposition::new(cache.loglik.marginal, kernel);
            staged.push((l, params, cache));
        }
        self.finish_shared(theta, staged, prior_ratio + next.ln() - current.ln(), rng)
    }

    /// Truncated-normal δ move on the interval implied by the current `r̂`
    /// (intersected over levels).
    fn propose_delta<R: Rng + ?Sized>(&self, p: usize, rng: &mut R) -> Result<Option<Candidate>> {
        let (j, k) = pair_list(self.data.d)[p];
        let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::INFINITY);
        for cache in &self.state.levels {
            let (lo, up) = delta_bounds(cache.psi[j], cache.psi[k])?;
            lower = lower.max(lo);
            upper = upper.min(up);
        }
        let sigma = self.proposal.sigma_delta[p];
        let mut theta = self.state.theta.clone();
        let current = theta.delta[p];
        let next = sample_truncated_normal(current, sigma, lower, upper, rng);
        theta.delta[p] = next;
        let log_q = truncated_normal_ln_mass(current, sigma, lower, upper) - truncated_normal_ln_mass(next, sigma, lower, upper);
        let prior_ratio = self.prior_ratio(&theta);
        let mut staged = Vec::with_capacity(self.data.levels.len());
        for (l, lev) in self.data.levels.iter().enumerate() {
            let mut cache = self.state.levels[l].clone();
            let params = theta.multcomp(&cache.lambda)?;
            let kernel = kernel_loglik(&lev.counts, &params, &cache.psi)?;
            cache.loglik = LogLikDecomposition::new(cache.loglik.marginal, kernel);
            staged.push((l, params, cache));
        }
        self.finish_shared(theta, staged, prior_ratio + log_q, rng)
    }

    fn finish_shared<R: Rng + ?Sized>(
        &self,
        theta: Theta,
        staged: Vec<(usize, MultCompParams, LevelCache)>,
        mut log_ratio: f64,
        rng: &mut R,
    ) -> Result<Option<Candidate>> {
        let mut levels = Vec::with_capacity(staged.len());
        for (l, params, cache) in staged {
            log_ratio += self.level_ratio(l, &params, &cache, rng)?;
            levels.push((l, cache));
        }
        Ok(Some(Candidate { theta, levels, log_ratio }))
    }

    /// Multiplies σ by 1.2 when the window acceptance exceeds 0.5 and divides
    /// by 1.2 below 0.2, then clears the window.
    pub fn tune(&mut self) {
        for b in 0..self.n_blocks() {
            let a = self.counters.window_attempts[b];
            if a == 0 {
                continue;
            }
            let rate = self.counters.window_accepts[b] as f64 / a as f64;
            let s = self.proposal.flat_mut(b);
            if rate > 0.5 {
                *s *= 1.2;
            } else if rate < 0.2 {
                *s /= 1.2;
            }
            self.counters.window_attempts[b] = 0;
            self.counters.window_accepts[b] = 0;
        }
    }

    pub fn reset_counters(&mut self) {
        self.counters = MoveCounters::new(self.n_blocks());
    }

    /// Switches to a new `N_z` and refreshes every `ẑ^{-1}` at the current θ.
    pub fn set_n_z<R: Rng + ?Sized>(&mut self, n_z: usize, rng: &mut R) -> Result<()> {
        self.cfg.n_z = n_z;
        if self.cfg.engine != Engine::Gimh {
            return Ok(());
        }
        for (l, lev) in self.data.levels.iter().enumerate() {
            let cache = &mut self.state.levels[l];
            let params = self.state.theta.multcomp(&cache.lambda)?;
            let mut rz = Vec::with_capacity(self.data.d);
            let mut used = Vec::with_capacity(self.data.d);
            for j in 0..self.data.d {
                let s = ComPoissonSampler::new(*params.marginal(j))?;
                let n = s.count_proposals(n_z, rng);
                rz.push(s.reciprocal_z_from_counts(n_z, n).value);
                used.push(n);
            }
            cache.reciprocal_z = Some(rz);
            cache.z_proposals = used;
            cache.loglik = level_loglik(Engine::Gimh, &lev.stats, &lev.counts, &params, &cache.psi, cache.reciprocal_z.as_deref())?;
        }
        Ok(())
    }
}

fn is_soft(e: &Error) -> bool {
    matches!(
        e,
        Error::SupportTooWide(_) | Error::TruncationCap { .. } | Error::InvalidParameter(_) | Error::Divergent { .. } | Error::NonPositiveKernel(_)
    )
}
