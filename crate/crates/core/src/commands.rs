//! The five runnable commands, each reading a [`RunConfig`] and writing into
//! an output directory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::compoisson::TruncationPolicy;
use crate::config::{FitConfig, RunConfig};
use crate::diagnostics::{posterior_predictive, write_predictive_csv, DrawSet, FitReport, PredictiveSettings, PredictiveStatistics};
use crate::error::{Error, Result};
use crate::io::{read_counts_csv, read_covariate_csv, read_draws_dir, write_counts_csv, write_draws, write_json, RunMetadata};
use crate::mcmc::{run_chains, FitData, FitOutput, LocationModel};
use crate::multsample::{resolve_psi, MultCompSampler};
use crate::ratio::{compare_estimators, write_comparison_csv, ComparisonRow};
use crate::sarmanov::MultCompParams;
use crate::seed::{stream, Purpose};

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref().ok_or_else(|| Error::Config(format!("missing [{name}] section")))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Simulates `n` rows and writes `data.csv` with columns `x1..xd`.
pub fn cmd_sample(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let s = section(&cfg.sample, "sample")?;
    let params = MultCompParams::from_vectors(&s.lambda, &s.nu, s.delta.clone(), s.omega)?;
    let psi = resolve_psi(&params, s.ratio, &TruncationPolicy::default(), &mut stream(cfg.seed, 0, Purpose::Data))?;
    let sampler = MultCompSampler::new(&params, &psi, &s.k_policy)?;
    let x = sampler.sample_chunked(s.n, cfg.seed, cfg.execution);
    ensure_dir(out)?;
    let path = out.join("data.csv");
    let names: Vec<String> = (1..=params.dim()).map(|j| format!("x{j}")).collect();
    write_counts_csv(&path, &names, &x, None)?;
    Ok(path)
}

/// Runs the estimator comparison and writes `ratio_bench.csv`.
pub fn cmd_ratio_bench(cfg: &RunConfig, out: &Path) -> Result<Vec<ComparisonRow>> {
    let r = section(&cfg.ratio_bench, "ratio_bench")?;
    let rows = compare_estimators(&r.grid, &r.n_totals, r.replications, cfg.seed, cfg.execution)?;
    ensure_dir(out)?;
    write_comparison_csv(&rows, BufWriter::new(File::create(out.join("ratio_bench.csv"))?))?;
    Ok(rows)
}

/// Loads the fit data and model described by a `[fit]` section.
pub fn load_fit_inputs(f: &FitConfig) -> Result<(LocationModel, FitData)> {
    match &f.regression {
        None => {
            let (_, counts) = read_counts_csv(&f.data)?;
            Ok((LocationModel::Direct, FitData::single(counts)?))
        }
        Some(choice) => {
            let spec = choice.spec();
            let (counts, cov) = read_covariate_csv(&f.data, &spec.covariate_names)?;
            let data = FitData::grouped(&counts, &cov, &spec)?;
            Ok((LocationModel::Regression(spec), data))
        }
    }
}

pub struct FitArtifacts {
    pub fit: FitOutput,
    pub report: FitReport,
}

/// Runs the chains, then writes draws, `summary.json` and `metadata.json`.
pub fn cmd_fit(cfg: &RunConfig, out: &Path) -> Result<FitArtifacts> {
    let f = section(&cfg.fit, "fit")?;
    let (model, data) = load_fit_inputs(f)?;
    let mut settings = f.mcmc.clone();
    settings.seed = cfg.seed;
    settings.execution = cfg.execution;
    let fit = run_chains(&model, &data, &f.prior, &settings)?;
    let report = FitReport::new(&DrawSet::from_fit(&fit)?)?;
    ensure_dir(out)?;
    write_draws(out, &fit)?;
    write_json(&out.join("summary.json"), &report)?;
    write_json(&out.join("metadata.json"), &RunMetadata::from_fit(&fit, data.n_obs(), Some(f.data.clone())))?;
    Ok(FitArtifacts { fit, report })
}

/// Recomputes summaries and R-hat from stored draws; writes `summary.json`.
pub fn cmd_diagnose(draws_dir: &Path, out: &Path) -> Result<FitReport> {
    let report = FitReport::new(&read_draws_dir(draws_dir)?)?;
    ensure_dir(out)?;
    write_json(&out.join("summary.json"), &report)?;
    Ok(report)
}

/// Posterior-predictive replication; writes `predictive.csv`.
pub fn cmd_predict(cfg: &RunConfig, out: &Path) -> Result<Vec<PredictiveStatistics>> {
    let p = section(&cfg.predict, "predict")?;
    let draws = read_draws_dir(&p.draws)?;
    let spec = p.regression.spec();
    let settings = PredictiveSettings {
        n_pre: p.n_pre,
        n_pand: p.n_pand,
        n_replicates: p.n_replicates,
        seed: cfg.seed,
        k_policy: p.k_policy,
        execution: cfg.execution,
    };
    let stats = posterior_predictive(&draws, &spec, &settings)?;
    ensure_dir(out)?;
    write_predictive_csv(&stats, &p.model_tag, BufWriter::new(File::create(out.join("predictive.csv"))?))?;
    Ok(stats)
}
