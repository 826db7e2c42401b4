use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use multcomp::commands::{cmd_diagnose, cmd_fit, cmd_predict, cmd_ratio_bench, cmd_sample};
use multcomp::config::RunConfig;
use multcomp::mcmc::Engine;

#[derive(Parser, Debug)]
#[command(name = "multcomp", version, about = "Multivariate COM-Poisson simulation and Bayesian inference")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a dataset from the [sample] block.
    Sample,
    /// Compare the ratio estimators over the [ratio_bench] grid.
    RatioBench,
    /// Run MCMC as described by the [fit] block.
    Fit {
        #[arg(long, value_enum)]
        engine: Option<EngineArg>,
        /// Adapt N_z during burn-in (GIMH only).
        #[arg(long)]
        adapt_nz: bool,
    },
    /// Summaries and R-hat from stored draws.
    Diagnose {
        /// Directory with draws_chain<k>.csv; defaults to [diagnose].draws.
        #[arg(long)]
        draws: Option<PathBuf>,
    },
    /// Posterior-predictive replication from the [predict] block.
    Predict,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EngineArg {
    Gimh,
    Exchange,
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::from_toml_str("")?,
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut cfg = load(&cli)?;
    match &cli.command {
        Command::Sample => {
            let path = cmd_sample(&cfg, &cli.out)?;
            println!("wrote {}", path.display());
        }
        Command::RatioBench => {
            let rows = cmd_ratio_bench(&cfg, &cli.out)?;
            println!("wrote {} rows to {}", rows.len(), cli.out.join("ratio_bench.csv").display());
        }
        Command::Fit { engine, adapt_nz } => {
            let fit = cfg.fit.as_mut().context("missing [fit] section")?;
            if let Some(e) = engine {
                fit.mcmc.engine = match e {
                    EngineArg::Gimh => Engine::Gimh,
                    EngineArg::Exchange => Engine::Exchange,
                };
            }
            if *adapt_nz {
                fit.mcmc.adapt_n_z = true;
            }
            let art = cmd_fit(&cfg, &cli.out)?;
            for p in &art.report.parameters {
                let (lo, hi) = p.summary.interval();
                let rhat = p.rhat.map_or("-".to_string(), |r| format!("{r:.3}"));
                println!("{:<10} mean {:>8.4}  sd {:>7.4}  95% ({:.4}, {:.4})  rhat {rhat}", p.name, p.summary.mean, p.summary.sd, lo, hi);
            }
            if let Some(x) = &art.report.regression {
                println!("exp(gamma1) mean {:.4}", x.home_advantage_pre.mean);
                println!("exp(gamma1+gamma2) mean {:.4}", x.home_advantage_pandemic.mean);
                println!("P(gamma2 < 0) = {:.4}", x.prob_gamma2_negative);
            }
        }
        Command::Diagnose { draws } => {
            let dir = match draws {
                Some(d) => d.clone(),
                None => cfg.diagnose.as_ref().map(|d| d.draws.clone()).context("no draws directory: pass --draws or set [diagnose].draws")?,
            };
            let report = cmd_diagnose(&dir, &cli.out)?;
            match report.max_rhat {
                Some(r) => println!("max rhat {r:.4} over {} chains", report.n_chains),
                None => println!("rhat not available ({} chain(s))", report.n_chains),
            }
        }
        Command::Predict => {
            let stats = cmd_predict(&cfg, &cli.out)?;
            println!("wrote {} replicates to {}", stats.len(), cli.out.join("predictive.csv").display());
        }
    }
    Ok(())
}
