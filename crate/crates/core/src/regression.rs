//! Log-linear regression of the location parameters on 0/1 covariates.
//!
//! Observations sharing a covariate vector share one `λ` vector, so the
//! Monte Carlo caches are kept per level rather than per observation.

use serde::{Deserialize, Serialize};

use crate::compoisson::TruncationPolicy;
use crate::counts::CountMatrix;
use crate::error::{invalid, Result};
use crate::multsample::{KPolicy, MultCompSampler};
use crate::sarmanov::{KernelCache, MultCompParams};
use crate::seed::{stream, Purpose};

/// `γ_c · covariate` in a linear predictor; `None` is the constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub coefficient: usize,
    pub covariate: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub coefficient_names: Vec<String>,
    pub covariate_names: Vec<String>,
    /// One linear predictor for `ln λ_j` per component.
    pub predictors: Vec<Vec<Term>>,
    pub shared_intercept: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionPreset {
    /// `ln λ_1 = γ0 + γ1 + γ2 · pandemic`, `ln λ_2 = γ0`.
    Reduced,
    /// The reduced model plus `γ3 · pandemic` on `ln λ_2`.
    Full,
}

impl RegressionSpec {
    pub fn preset(p: RegressionPreset) -> Self {
        let t = |coefficient, covariate| Term { coefficient, covariate };
        let mut spec = Self {
            coefficient_names: vec!["gamma0".into(), "gamma1".into(), "gamma2".into()],
            covariate_names: vec!["pandemic".into()],
            predictors: vec![vec![t(0, None), t(1, None), t(2, Some(0))], vec![t(0, None)]],
            shared_intercept: true,
        };
        if p == RegressionPreset::Full {
            spec.coefficient_names.push("gamma3".into());
            spec.predictors[1].push(t(3, Some(0)));
        }
        spec
    }

    pub fn n_coefficients(&self) -> usize {
        self.coefficient_names.len()
    }

    pub fn dim(&self) -> usize {
        self.predictors.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut used = vec![false; self.n_coefficients()];
        for terms in &self.predictors {
            for t in terms {
                if t.coefficient >= used.len() {
                    return Err(invalid(format!("term refers to unknown coefficient {}", t.coefficient)));
                }
                if t.covariate.is_some_and(|c| c >= self.covariate_names.len()) {
                    return Err(invalid("term refers to unknown covariate"));
                }
                used[t.coefficient] = true;
            }
        }
        if let Some(c) = used.iter().position(|u| !u) {
            return Err(invalid(format!("coefficient {} appears in no predictor", self.coefficient_names[c])));
        }
        if self.predictors.is_empty() {
            return Err(invalid("regression needs at least one component"));
        }
        Ok(())
    }

    /// Whether `γ_c` enters `ln λ_j` at the given covariate values.
    pub fn affects(&self, c: usize, j: usize, covariates: &[f64]) -> bool {
        self.predictors[j]
            .iter()
            .any(|t| t.coefficient == c && t.covariate.map_or(1.0, |k| covariates[k]) != 0.0)
    }
}

/// Componentwise `exp` of the linear predictors.
pub fn lambda_from_gamma(gamma: &[f64], covariates: &[f64], spec: &RegressionSpec) -> Vec<f64> {
    spec.predictors
        .iter()
        .map(|terms| {
            terms
                .iter()
                .map(|t| gamma[t.coefficient] * t.covariate.map_or(1.0, |k| covariates[k]))
                .sum::<f64>()
                .exp()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub covariates: Vec<f64>,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTable {
    pub levels: Vec<Level>,
}

impl LevelTable {
    pub fn lambdas(&self, gamma: &[f64], spec: &RegressionSpec) -> Vec<Vec<f64>> {
        self.levels.iter().map(|l| lambda_from_gamma(gamma, &l.covariates, spec)).collect()
    }
}

/// Groups observations by covariate vector, levels ordered by first appearance.
pub fn build_level_table(covariates: &[Vec<f64>], spec: &RegressionSpec) -> Result<LevelTable> {
    if covariates.is_empty() {
        return Err(invalid("no observations"));
    }
    let width = spec.covariate_names.len();
    let mut levels: Vec<Level> = Vec::new();
    for (i, cov) in covariates.iter().enumerate() {
        if cov.len() != width {
            return Err(invalid(format!("row {i} has {} covariates, expected {width}", cov.len())));
        }
        if cov.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(invalid(format!("row {i}: covariates must be 0/1")));
        }
        match levels.iter_mut().find(|l| l.covariates == *cov) {
            Some(l) => l.rows.push(i),
            None => levels.push(Level {
                covariates: cov.clone(),
                rows: vec![i],
            }),
        }
    }
    Ok(LevelTable { levels })
}

/// Match results: home and away goals plus the pandemic indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchData {
    pub goals: CountMatrix,
    pub pandemic: Vec<u8>,
}

impl MatchData {
    pub fn covariates(&self) -> Vec<Vec<f64>> {
        self.pandemic.iter().map(|&p| vec![p as f64]).collect()
    }
}

/// Simulates `n_pre` matches with `pandemic = 0` followed by `n_pand` with
/// `pandemic = 1` under a two-component regression, exact `Ψ`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_matches(
    spec: &RegressionSpec,
    gamma: &[f64],
    nu: &[f64],
    delta: f64,
    omega: f64,
    n_pre: usize,
    n_pand: usize,
    seed: u64,
) -> Result<MatchData> {
    spec.validate()?;
    if spec.dim() != 2 || gamma.len() != spec.n_coefficients() {
        return Err(invalid("match simulation needs a two-component spec and one value per coefficient"));
    }
    let mut values = Vec::with_capacity(2 * (n_pre + n_pand));
    let mut pandemic = Vec::with_capacity(n_pre + n_pand);
    for (period, n) in [(0u8, n_pre), (1u8, n_pand)] {
        let lambda = lambda_from_gamma(gamma, &[period as f64], spec);
        let params = MultCompParams::from_vectors(&lambda, nu, vec![delta], omega)?;
        let cache = KernelCache::exact(&params, &TruncationPolicy::default())?;
        let mut rng = stream(seed, period as u64, Purpose::Data);
        let x = MultCompSampler::new(&params, &cache.psi, &KPolicy::default())?.sample(n, &mut rng);
        values.extend_from_slice(x.values());
        pandemic.extend(std::iter::repeat_n(period, n));
    }
    Ok(MatchData {
        goals: CountMatrix::new(n_pre + n_pand, 2, values)?,
        pandemic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_examples() {
        let spec = RegressionSpec::preset(RegressionPreset::Reduced);
        assert_eq!(lambda_from_gamma(&[0.0; 3], &[0.0], &spec), vec![1.0, 1.0]);
        let g = [0.061, 0.219, -0.087];
        let pre = lambda_from_gamma(&g, &[0.0], &spec);
        assert!((pre[0] - 0.280f64.exp()).abs() < 1e-12);
        assert!((pre[1] - 0.061f64.exp()).abs() < 1e-12);
        let pand = lambda_from_gamma(&g, &[1.0], &spec);
        assert!((pand[0] - 0.193f64.exp()).abs() < 1e-12);
        assert!((pand[1] - 0.061f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn log_lambda_derivatives_are_indicators() {
        let spec = RegressionSpec::preset(RegressionPreset::Full);
        let g = [0.1, 0.2, -0.3, 0.05];
        let h = 1e-6;
        for cov in [[0.0], [1.0]] {
            for c in 0..4 {
                let mut gp = g;
                gp[c] += h;
                let mut gm = g;
                gm[c] -= h;
                let lp = lambda_from_gamma(&gp, &cov, &spec);
                let lm = lambda_from_gamma(&gm, &cov, &spec);
                for j in 0..2 {
                    let fd = (lp[j].ln() - lm[j].ln()) / (2.0 * h);
                    let expect = if spec.affects(c, j, &cov) { 1.0 } else { 0.0 };
                    assert!((fd - expect).abs() < 1e-9, "c={c} j={j} fd={fd}");
                }
            }
        }
    }

    #[test]
    fn level_tables() {
        let spec = RegressionSpec::preset(RegressionPreset::Reduced);
        let t = build_level_table(&vec![vec![0.0]; 5], &spec).unwrap();
        assert_eq!(t.levels.len(), 1);
        let mut cov = vec![vec![0.0]; 668];
        cov.extend(vec![vec![1.0]; 472]);
        let t = build_level_table(&cov, &spec).unwrap();
        assert_eq!(t.levels.len(), 2);
        assert_eq!(t.levels[0].rows.len(), 668);
        assert_eq!(t.levels[1].rows.len(), 472);
        assert!(build_level_table(&[], &spec).is_err());
        assert!(build_level_table(&[vec![2.0]], &spec).is_err());
    }

    #[test]
    fn validation() {
        assert!(RegressionSpec::preset(RegressionPreset::Reduced).validate().is_ok());
        let mut s = RegressionSpec::preset(RegressionPreset::Reduced);
        s.coefficient_names.push("unused".into());
        assert!(s.validate().is_err());
    }
}
