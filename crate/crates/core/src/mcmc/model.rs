use serde::{Deserialize, Serialize};

use crate::counts::{CountMatrix, SufficientStats};
use crate::error::{invalid, Result};
use crate::regression::{build_level_table, lambda_from_gamma, RegressionSpec};
use crate::sarmanov::{pair_list, MultCompParams};
use crate::special::pairs;

/// How the per-observation `λ` vector is obtained from the location parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationModel {
    /// The location parameters are `λ_1..λ_d` themselves.
    Direct,
    /// The location parameters are regression coefficients.
    Regression(RegressionSpec),
}

impl LocationModel {
    pub fn n_location(&self, d: usize) -> usize {
        match self {
            LocationModel::Direct => d,
            LocationModel::Regression(spec) => spec.n_coefficients(),
        }
    }

    pub fn lambdas(&self, location: &[f64], covariates: &[f64]) -> Vec<f64> {
        match self {
            LocationModel::Direct => location.to_vec(),
            LocationModel::Regression(spec) => lambda_from_gamma(location, covariates, spec),
        }
    }

    pub fn parameter_names(&self, d: usize) -> Vec<String> {
        let mut names: Vec<String> = match self {
            LocationModel::Direct => (1..=d).map(|j| format!("lambda{j}")).collect(),
            LocationModel::Regression(spec) => spec.coefficient_names.clone(),
        };
        names.extend((1..=d).map(|j| format!("nu{j}")));
        names.push("omega".into());
        names.extend(pair_list(d).into_iter().map(|(j, k)| format!("delta{}{}", j + 1, k + 1)));
        names
    }
}

/// One point of the parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub location: Vec<f64>,
    pub nu: Vec<f64>,
    pub omega: f64,
    pub delta: Vec<f64>,
}

impl Theta {
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.location.clone();
        v.extend(&self.nu);
        v.push(self.omega);
        v.extend(&self.delta);
        v
    }

    pub fn from_flat(flat: &[f64], n_location: usize, d: usize) -> Result<Self> {
        if flat.len() != n_location + d + 1 + pairs(d) {
            return Err(invalid("flat parameter vector has the wrong length"));
        }
        Ok(Self {
            location: flat[..n_location].to_vec(),
            nu: flat[n_location..n_location + d].to_vec(),
            omega: flat[n_location + d],
            delta: flat[n_location + d + 1..].to_vec(),
        })
    }

    pub fn multcomp(&self, lambda: &[f64]) -> Result<MultCompParams> {
        MultCompParams::from_vectors(lambda, &self.nu, self.delta.clone(), self.omega)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelData {
    pub covariates: Vec<f64>,
    pub counts: CountMatrix,
    pub stats: SufficientStats,
}

/// Observations grouped into covariate levels.
#[derive(Debug, Clone, PartialEq)]
pub struct FitData {
    pub d: usize,
    pub levels: Vec<LevelData>,
}

impl FitData {
    pub fn single(counts: CountMatrix) -> Result<Self> {
        if counts.rows() == 0 {
            return Err(invalid("no observations"));
        }
        Ok(Self {
            d: counts.cols(),
            levels: vec![LevelData {
                covariates: vec![],
                stats: SufficientStats::from_counts(&counts),
                counts,
            }],
        })
    }

    pub fn grouped(counts: &CountMatrix, covariates: &[Vec<f64>], spec: &RegressionSpec) -> Result<Self> {
        if covariates.len() != counts.rows() {
            return Err(invalid("covariate rows do not match count rows"));
        }
        if spec.dim() != counts.cols() {
            return Err(invalid("regression dimension does not match count columns"));
        }
        let table = build_level_table(covariates, spec)?;
        let levels = table
            .levels
            .into_iter()
            .map(|l| {
                let sub = counts.select_rows(&l.rows);
                LevelData {
                    covariates: l.covariates,
                    stats: SufficientStats::from_counts(&sub),
                    counts: sub,
                }
            })
            .collect();
        Ok(Self { d: counts.cols(), levels })
    }

    pub fn n_obs(&self) -> usize {
        self.levels.iter().map(|l| l.counts.rows()).sum()
    }
}
