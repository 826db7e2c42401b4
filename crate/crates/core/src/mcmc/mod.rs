//! Doubly-intractable posterior sampling: pseudo-marginal GIMH and the noisy
//! exchange algorithm, sharing priors, proposals and the chain runner.

pub mod adapt;
pub mod chain;
pub mod model;
pub mod prior;
pub mod runner;

pub use adapt::{adapt_n_z, measure_loglik_sd, next_n_z, AdaptSettings, AdaptationResult};
pub use chain::{psi_from_draws, Chain, ChainState, Engine, EngineConfig, LevelCache};
pub use model::{FitData, LevelData, LocationModel, Theta};
pub use prior::{PriorSpec, ProposalSpec};
pub use runner::{run_chain, run_chains, ChainOutput, FitOutput, McmcSettings};
