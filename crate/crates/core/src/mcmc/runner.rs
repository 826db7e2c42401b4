use serde::{Deserialize, Serialize};

use super::adapt::{adapt_n_z, AdaptSettings, AdaptationResult};
use super::chain::{Chain, Engine, EngineConfig};
use super::model::{FitData, LocationModel, Theta};
use super::prior::{PriorSpec, ProposalSpec};
use crate::error::{invalid, Result};
use crate::multsample::KPolicy;
use crate::par::{map_indexed, Execution};
use crate::seed::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSettings {
    pub engine: Engine,
    pub n_chains: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub n_z: usize,
    pub n_r: usize,
    pub adapt_n_z: bool,
    pub adapt: AdaptSettings,
    pub tune_interval: usize,
    pub fix_dependence: bool,
    pub init_tries: usize,
    pub k_policy: KPolicy,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            engine: Engine::Gimh,
            n_chains: 5,
            n_iter: 30_000,
            burn_in: 10_000,
            n_z: 10_000,
            n_r: 10_000,
            adapt_n_z: false,
            adapt: AdaptSettings::default(),
            tune_interval: 50,
            fix_dependence: false,
            init_tries: 100,
            k_policy: KPolicy::default(),
            seed: 1,
            execution: Execution::Parallel,
        }
    }
}

impl McmcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.burn_in {
            return Err(invalid(format!("n_iter ({}) must exceed burn_in ({})", self.n_iter, self.burn_in)));
        }
        if self.n_chains == 0 || self.n_r == 0 || self.n_z == 0 || self.tune_interval == 0 {
            return Err(invalid("n_chains, n_r, n_z and tune_interval must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub chain: usize,
    /// Retained draws, row-major `retained × n_params`.
    pub draws: Vec<f64>,
    pub n_params: usize,
    /// Post burn-in acceptance rate per block.
    pub acceptance: Vec<f64>,
    pub final_proposal: ProposalSpec,
    pub n_z: usize,
    pub adaptation: Option<AdaptationResult>,
    pub soft_failures: usize,
    pub initial: Theta,
}

impl ChainOutput {
    pub fn retained(&self) -> usize {
        self.draws.len() / self.n_params
    }

    pub fn column(&self, p: usize) -> Vec<f64> {
        self.draws.chunks_exact(self.n_params).map(|r| r[p]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub parameter_names: Vec<String>,
    pub engine: Engine,
    pub settings: McmcSettings,
    pub chains: Vec<ChainOutput>,
}

pub fn run_chain(model: &LocationModel, data: &FitData, prior: &PriorSpec, settings: &McmcSettings, c: usize) -> Result<ChainOutput> {
    let mut rng = stream(settings.seed, c as u64, Purpose::Chain);
    let cfg = EngineConfig {
        engine: settings.engine,
        n_z: settings.n_z,
        n_r: settings.n_r,
        k_policy: settings.k_policy,
        fix_dependence: settings.fix_dependence,
    };
    let proposal = ProposalSpec::initial(model, data.d);
    let mut chain = Chain::from_prior(model, data, *prior, proposal, cfg, settings.init_tries, &mut rng)?;
    let initial = chain.state().theta.clone();
    let n_params = initial.flat().len();
    let mut draws = Vec::with_capacity((settings.n_iter - settings.burn_in) * n_params);
    let mut adaptation = None;
    let adapt_at = settings.burn_in / 2;
    for it in 0..settings.n_iter {
        if it == adapt_at && settings.adapt_n_z && settings.engine == Engine::Gimh {
            let mut arng = stream(settings.seed, c as u64, Purpose::Adaptation);
            let theta = chain.state().theta.clone();
            let res = adapt_n_z(model, data, &theta, settings.n_r, &settings.adapt, &mut arng)?;
            log::info!("chain {c}: N_z adapted to {} (sd {:.3})", res.n_z, res.measured_sd);
            chain.set_n_z(res.n_z, &mut rng)?;
            adaptation = Some(res);
        }
        chain.sweep(&mut rng)?;
        if (it + 1) % 1000 == 0 {
            log::info!("chain {c}: iteration {} of {}, theta {:?}", it + 1, settings.n_iter, chain.state().theta.flat());
        }
        if it < settings.burn_in {
            if (it + 1) % settings.tune_interval == 0 {
                chain.tune();
            }
            if it + 1 == settings.burn_in {
                chain.reset_counters();
            }
        } else {
            draws.extend(chain.state().theta.flat());
        }
    }
    Ok(ChainOutput {
        chain: c,
        draws,
        n_params,
        acceptance: chain.counters().rates(),
        final_proposal: chain.proposal.clone(),
        n_z: chain.config().n_z,
        adaptation,
        soft_failures: chain.soft_failures(),
        initial,
    })
}

/// Independent chains from prior-drawn starting points; chain `c` uses the
/// stream `(seed, c)` so results do not depend on the execution mode.
pub fn run_chains(model: &LocationModel, data: &FitData, prior: &PriorSpec, settings: &McmcSettings) -> Result<FitOutput> {
    settings.validate()?;
    prior.validate()?;
    if let LocationModel::Regression(spec) = model {
        spec.validate()?;
    }
    let chains = map_indexed(settings.n_chains, settings.execution, |c| run_chain(model, data, prior, settings, c));
    let chains = chains.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(FitOutput {
        parameter_names: model.parameter_names(data.d),
        engine: settings.engine,
        settings: settings.clone(),
        chains,
    })
}
