//! Monte Carlo estimators of `r = Z(e^{-ω}λ, ν) / Z(λ, ν)` and the replication
//! harness that compares them.
//!
//! The thermodynamic path is `q(x | τ) = (e^{-τ}λ)^x / (x!)^ν`, so the
//! pathwise derivative of `ln q` is `U(x, τ) = -x` and
//! `ln r = ∫_0^ω E_τ[-X] dτ`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compoisson::ComPoissonParams;
use crate::error::{invalid, Result};
use crate::par::{map_indexed, Execution};
use crate::sampling::ComPoissonSampler;
use crate::seed::{mix, stream, Purpose};
use crate::special::mean_sd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMethod {
    Is,
    TintPrior,
    TintTrapezium,
}

impl RatioMethod {
    pub const ALL: [RatioMethod; 3] = [RatioMethod::Is, RatioMethod::TintPrior, RatioMethod::TintTrapezium];

    pub fn as_str(&self) -> &'static str {
        match self {
            RatioMethod::Is => "is",
            RatioMethod::TintPrior => "tint_prior",
            RatioMethod::TintTrapezium => "tint_trapezium",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub value: f64,
    pub log_scale_value: f64,
    pub method: RatioMethod,
    pub total_draws: usize,
}

fn check_inputs(omega: f64, n: usize) -> Result<()> {
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(invalid(format!("omega must be non-negative, got {omega}")));
    }
    if n == 0 {
        return Err(invalid("number of draws must be at least 1"));
    }
    Ok(())
}

/// Importance sampling with the untilted law as proposal: mean of `e^{-ωx}`.
pub fn is_ratio<R: Rng + ?Sized>(p: &ComPoissonParams, omega: f64, n: usize, rng: &mut R) -> Result<RatioEstimate> {
    check_inputs(omega, n)?;
    let sampler = ComPoissonSampler::new(*p)?;
    let mut acc = 0.0;
    for _ in 0..n {
        acc += (-omega * sampler.draw(rng).0 as f64).exp();
    }
    let value = acc / n as f64;
    Ok(RatioEstimate {
        value,
        log_scale_value: value.ln(),
        method: RatioMethod::Is,
        total_draws: n,
    })
}

/// `τ ~ U[0, ω]`, `x ~ q(· | τ)`, `ln r̂ = mean(U(x, τ) / p(τ)) = mean(-ω x)`.
pub fn tint_prior<R: Rng + ?Sized>(p: &ComPoissonParams, omega: f64, n: usize, rng: &mut R) -> Result<RatioEstimate> {
    check_inputs(omega, n)?;
    let mut acc = 0.0;
    for _ in 0..n {
        let tau = omega * rng.random::<f64>();
        let sampler = ComPoissonSampler::untabulated(p.tilted(tau))?;
        acc += sampler.draw(rng).0 as f64;
    }
    let log_value = -omega * acc / n as f64;
    Ok(RatioEstimate {
        value: log_value.exp(),
        log_scale_value: log_value,
        method: RatioMethod::TintPrior,
        total_draws: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TintSchedule {
    pub omega: f64,
    pub n_rungs: usize,
    pub exponent: f64,
    /// `0, τ_1, …, τ_n` with `τ_i = ω (i/n)^c`.
    pub rungs: Vec<f64>,
    pub draws_per_rung: usize,
}

impl TintSchedule {
    pub fn new(omega: f64, n_rungs: usize, exponent: f64, draws_per_rung: usize) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(invalid(format!("omega must be positive, got {omega}")));
        }
        if n_rungs == 0 || draws_per_rung == 0 || !(exponent > 0.0) {
            return Err(invalid("schedule needs n_rungs >= 1, draws_per_rung >= 1, exponent > 0"));
        }
        let rungs = (0..=n_rungs)
            .map(|i| omega * (i as f64 / n_rungs as f64).powf(exponent))
            .collect();
        Ok(Self {
            omega,
            n_rungs,
            exponent,
            rungs,
            draws_per_rung,
        })
    }

    /// `n_rungs = ⌈ω/0.1⌉`, exponent 5, `draws_per_rung = ⌈n_total/n_rungs⌉`.
    pub fn for_budget(omega: f64, n_total: usize) -> Result<Self> {
        let n_rungs = ((omega / 0.1) - 1e-9).ceil().max(1.0) as usize;
        Self::new(omega, n_rungs, 5.0, n_total.div_ceil(n_rungs).max(1))
    }
}

/// Trapezoid rule over the schedule, each `E_τ[-X]` a Monte Carlo mean.
pub fn tint_trapezium<R: Rng + ?Sized>(p: &ComPoissonParams, schedule: &TintSchedule, rng: &mut R) -> Result<RatioEstimate> {
    let m = schedule.draws_per_rung;
    let mut expectations = Vec::with_capacity(schedule.rungs.len());
    for &tau in &schedule.rungs {
        let sampler = ComPoissonSampler::new(p.tilted(tau))?;
        let mut acc = 0.0;
        for _ in 0..m {
            acc += sampler.draw(rng).0 as f64;
        }
        expectations.push(-acc / m as f64);
    }
    let log_value: f64 = schedule
        .rungs
        .windows(2)
        .zip(expectations.windows(2))
        .map(|(t, e)| (t[1] - t[0]) * (e[0] + e[1]) / 2.0)
        .sum();
    Ok(RatioEstimate {
        value: log_value.exp(),
        log_scale_value: log_value,
        method: RatioMethod::TintTrapezium,
        total_draws: m * schedule.rungs.len(),
    })
}

pub fn estimate_ratio<R: Rng + ?Sized>(method: RatioMethod, p: &ComPoissonParams, omega: f64, n_total: usize, rng: &mut R) -> Result<RatioEstimate> {
    match method {
        RatioMethod::Is => is_ratio(p, omega, n_total, rng),
        RatioMethod::TintPrior => tint_prior(p, omega, n_total, rng),
        RatioMethod::TintTrapezium => tint_trapezium(p, &TintSchedule::for_budget(omega, n_total)?, rng),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioConfig {
    pub lambda: f64,
    pub nu: f64,
    pub omega: f64,
}

/// One (config, n_total, method) cell of the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: RatioMethod,
    pub n_total: usize,
    /// SD of the natural-scale estimates across replications.
    pub mc_sd: f64,
    pub mean_estimate: f64,
    pub mean_log_estimate: f64,
    pub sd_log_estimate: f64,
    pub replications: usize,
    pub lambda: f64,
    pub nu: f64,
    pub omega: f64,
}

impl ComparisonRow {
    pub fn replication_se(&self) -> f64 {
        self.mc_sd / (self.replications as f64).sqrt()
    }

    pub fn log_replication_se(&self) -> f64 {
        self.sd_log_estimate / (self.replications as f64).sqrt()
    }
}

/// Runs every method `replications` times per grid cell. Replication `i` of a
/// cell draws from its own stream, so the table does not depend on `exec`.
pub fn compare_estimators(
    grid: &[RatioConfig],
    n_totals: &[usize],
    replications: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<ComparisonRow>> {
    if replications < 2 {
        return Err(invalid("at least 2 replications are needed for a Monte Carlo SD"));
    }
    let mut rows = Vec::new();
    for (ci, cfg) in grid.iter().enumerate() {
        let p = ComPoissonParams::new(cfg.lambda, cfg.nu)?;
        for (ni, &n_total) in n_totals.iter().enumerate() {
            for (mi, method) in RatioMethod::ALL.into_iter().enumerate() {
                let reps = map_indexed(replications, exec, |r| {
                    let mut rng = stream(seed, mix(&[ci as u64, ni as u64, mi as u64, r as u64]), Purpose::Replication);
                    estimate_ratio(method, &p, cfg.omega, n_total, &mut rng)
                });
                let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;
                let values: Vec<f64> = reps.iter().map(|e| e.value).collect();
                let logs: Vec<f64> = reps.iter().map(|e| e.log_scale_value).collect();
                let (mean_estimate, mc_sd) = mean_sd(&values);
                let (mean_log_estimate, sd_log_estimate) = mean_sd(&logs);
                rows.push(ComparisonRow {
                    method,
                    n_total,
                    mc_sd,
                    mean_estimate,
                    mean_log_estimate,
                    sd_log_estimate,
                    replications,
                    lambda: cfg.lambda,
                    nu: cfg.nu,
                    omega: cfg.omega,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "n_total", "mc_sd", "mean_estimate", "lambda", "nu", "omega"])?;
    for r in rows {
        w.write_record([
            r.method.as_str().to_string(),
            r.n_total.to_string(),
            r.mc_sd.to_string(),
            r.mean_estimate.to_string(),
            r.lambda.to_string(),
            r.nu.to_string(),
            r.omega.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
