//! Sequential-conditional sampler for the multivariate law.
//!
//! `X_1` is drawn exactly by rejection. For `j ≥ 2`, given `x_{<j}`, the
//! conditional pmf on `{0..K_j}` is proportional to
//! `q_j(k) (α + β φ_j(k))` where `α = 1 + C^{-1} Σ_{a<b<j} δ_ab φ_a φ_b` and
//! `β = C^{-1} Σ_{a<j} δ_aj φ_a`. Cumulative sums of `q_j` and `q_j φ_j` are
//! tabulated once, so each conditional draw is one binary search.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compoisson::TruncationPolicy;
use crate::counts::CountMatrix;
use crate::error::{invalid, Error, Result};
use crate::par::{map_indexed, Execution};
use crate::ratio::is_ratio;
use crate::sampling::ComPoissonSampler;
use crate::sarmanov::{check_feasible, KernelCache, MultCompParams};
use crate::seed::{stream, Purpose};

/// Rows generated per parallel task; fixed so output does not depend on threads.
pub const ROW_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KPolicy {
    pub min_k: usize,
    pub max_doublings: u32,
    pub tol: f64,
}

impl Default for KPolicy {
    fn default() -> Self {
        Self {
            min_k: 50,
            max_doublings: 10,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RatioSource {
    Exact,
    ImportanceSampling { draws: usize },
}

#[derive(Debug, Clone)]
struct ConditionalTable {
    /// `Σ_{i≤k} q(i)` with `q` scaled by its maximum.
    cum_w: Vec<f64>,
    /// `Σ_{i≤k} q(i) φ(i)`.
    cum_v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MultCompSampler {
    params: MultCompParams,
    psi: Vec<f64>,
    first: ComPoissonSampler,
    tables: Vec<ConditionalTable>,
}

impl MultCompSampler {
    /// `psi` are the Laplace transforms used in the kernel (exact or estimated).
    pub fn new(params: &MultCompParams, psi: &[f64], k_policy: &KPolicy) -> Result<Self> {
        if psi.len() != params.dim() {
            return Err(invalid("psi length does not match dimension"));
        }
        check_feasible(params, psi)?;
        let first = ComPoissonSampler::new(*params.marginal(0))?;
        let mut tables = Vec::with_capacity(params.dim().saturating_sub(1));
        for j in 1..params.dim() {
            tables.push(build_table(params, j, psi[j], k_policy)?);
        }
        Ok(Self {
            params: params.clone(),
            psi: psi.to_vec(),
            first,
            tables,
        })
    }

    pub fn params(&self) -> &MultCompParams {
        &self.params
    }

    /// Truncation point used for each component after the first.
    pub fn truncation_points(&self) -> Vec<usize> {
        self.tables.iter().map(|t| t.cum_w.len() - 1).collect()
    }

    pub fn draw_row<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u32]) {
        let d = self.params.dim();
        let omega = self.params.omega();
        let c = self.params.pair_weight();
        let deltas = self.params.deltas();
        let mut phi = [0.0f64; 16];
        let mut phi_heap = Vec::new();
        let phi: &mut [f64] = if d <= 16 {
            &mut phi[..d]
        } else {
            phi_heap.resize(d, 0.0);
            &mut phi_heap
        };
        out[0] = self.first.draw(rng).0;
        phi[0] = (-omega * out[0] as f64).exp() - self.psi[0];
        let mut s_prev = 0.0;
        for j in 1..d {
            let mut b = 0.0;
            for a in 0..j {
                b += deltas[crate::sarmanov::pair_index(a, j, d)] * phi[a];
            }
            let alpha = 1.0 + c * s_prev;
            let beta = c * b;
            let t = &self.tables[j - 1];
            let last = t.cum_w.len() - 1;
            let total = alpha * t.cum_w[last] + beta * t.cum_v[last];
            let target = rng.random::<f64>() * total;
            // first k with cumulative mass ≥ target; cumulative mass is non-decreasing
            let (mut lo, mut hi) = (0usize, last);
            while lo < hi {
                let mid = (lo + hi) / 2;
                if alpha * t.cum_w[mid] + beta * t.cum_v[mid] >= target {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            out[j] = lo as u32;
            phi[j] = (-omega * lo as f64).exp() - self.psi[j];
            s_prev += b * phi[j];
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> CountMatrix {
        let d = self.params.dim();
        let mut m = CountMatrix::zeros(n, d);
        for i in 0..n {
            self.draw_row(rng, m.row_mut(i));
        }
        m
    }

    /// Rows in chunks of [`ROW_CHUNK`], chunk `c` drawn from stream `(seed, c)`.
    pub fn sample_chunked(&self, n: usize, seed: u64, exec: Execution) -> CountMatrix {
        let d = self.params.dim();
        let n_chunks = n.div_ceil(ROW_CHUNK);
        let chunks = map_indexed(n_chunks, exec, |c| {
            let rows = ROW_CHUNK.min(n - c * ROW_CHUNK);
            let mut rng = stream(seed, c as u64, Purpose::Rows);
            self.sample(rows, &mut rng)
        });
        let mut values = Vec::with_capacity(n * d);
        for c in chunks {
            values.extend_from_slice(c.values());
        }
        CountMatrix::new(n, d, values).expect("chunk shapes are consistent")
    }
}

fn build_table(params: &MultCompParams, j: usize, psi_j: f64, k_policy: &KPolicy) -> Result<ConditionalTable> {
    if k_policy.min_k < 2 {
        return Err(invalid("minimum K must be at least 2"));
    }
    let m = params.marginal(j);
    let omega = params.omega();
    let mut k = k_policy.min_k;
    let mut doublings = 0;
    let (ln_w, ln_max) = loop {
        let ln_w: Vec<f64> = (0..=k as u64).map(|x| m.ln_weight(x)).collect();
        let ln_max = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = ln_w.iter().map(|v| (v - ln_max).exp()).sum();
        let p_k = (ln_w[k] - ln_max).exp() / total;
        let p_km1 = (ln_w[k - 1] - ln_max).exp() / total;
        if p_k < p_km1 && p_km1 - p_k < k_policy.tol && p_k < k_policy.tol {
            break (ln_w, ln_max);
        }
        if doublings == k_policy.max_doublings {
            return Err(Error::TruncationCap { component: j, cap: k });
        }
        k *= 2;
        doublings += 1;
    };
    let mut cum_w = Vec::with_capacity(ln_w.len());
    let mut cum_v = Vec::with_capacity(ln_w.len());
    let (mut sw, mut sv) = (0.0, 0.0);
    for (x, lw) in ln_w.iter().enumerate() {
        let w = (lw - ln_max).exp();
        sw += w;
        sv += w * ((-omega * x as f64).exp() - psi_j);
        cum_w.push(sw);
        cum_v.push(sv);
    }
    Ok(ConditionalTable { cum_w, cum_v })
}

/// Laplace transforms from the chosen source; IS draws use `rng`.
pub fn resolve_psi<R: Rng + ?Sized>(
    params: &MultCompParams,
    source: RatioSource,
    policy: &TruncationPolicy,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match source {
        RatioSource::Exact => Ok(KernelCache::exact(params, policy)?.psi),
        RatioSource::ImportanceSampling { draws } => params
            .marginals()
            .iter()
            .map(|m| is_ratio(m, params.omega(), draws, rng).map(|e| e.value))
            .collect(),
    }
}

pub fn sample_multcomp<R: Rng + ?Sized>(
    params: &MultCompParams,
    n: usize,
    k_policy: &KPolicy,
    source: RatioSource,
    rng: &mut R,
) -> Result<CountMatrix> {
    let psi = resolve_psi(params, source, &TruncationPolicy::default(), rng)?;
    Ok(MultCompSampler::new(params, &psi, k_policy)?.sample(n, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sarmanov::ExactJoint;
    use crate::special::mean_sd;

    #[test]
    fn one_dimensional_matches_univariate_sampler() {
        let p = MultCompParams::from_vectors(&[1.5], &[1.2], vec![], 1.0).unwrap();
        let m = sample_multcomp(&p, 1000, &KPolicy::default(), RatioSource::Exact, &mut stream(1, 0, Purpose::Rows)).unwrap();
        // the exact route consumes no randomness before the rows
        let direct = ComPoissonSampler::new(*p.marginal(0)).unwrap();
        let mut rng = stream(1, 0, Purpose::Rows);
        let expect: Vec<u32> = (0..1000).map(|_| direct.draw(&mut rng).0).collect();
        assert_eq!(m.values(), &expect[..]);
    }

    #[test]
    fn small_support_joint_total_variation() {
        let p = MultCompParams::from_vectors(&[1.0, 0.8], &[1.2, 1.0], vec![2.5], 1.0).unwrap();
        let ex = ExactJoint::new(&p, &TruncationPolicy::default()).unwrap();
        let s = MultCompSampler::new(&p, &ex.cache().psi, &KPolicy::default()).unwrap();
        let n = 200_000;
        let m = s.sample(n, &mut stream(2, 0, Purpose::Rows));
        let mut counts = [[0usize; 9]; 9];
        for r in m.iter_rows() {
            if r[0] <= 8 && r[1] <= 8 {
                counts[r[0] as usize][r[1] as usize] += 1;
            }
        }
        let mut tv = 0.0;
        for a in 0..9u32 {
            for b in 0..9u32 {
                tv += (counts[a as usize][b as usize] as f64 / n as f64 - ex.pmf(&[a, b]).unwrap()).abs();
            }
        }
        assert!(tv / 2.0 < 0.01, "tv = {}", tv / 2.0);
    }

    #[test]
    fn independence_gives_zero_correlation() {
        let p = MultCompParams::from_vectors(&[1.0, 2.0], &[0.8, 1.5], vec![0.0], 1.5).unwrap();
        let m = sample_multcomp(&p, 50_000, &KPolicy::default(), RatioSource::Exact, &mut stream(3, 0, Purpose::Rows)).unwrap();
        let a: Vec<f64> = m.column(0).iter().map(|&v| v as f64).collect();
        let b: Vec<f64> = m.column(1).iter().map(|&v| v as f64).collect();
        let (ma, sa) = mean_sd(&a);
        let (mb, sb) = mean_sd(&b);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0);
        let r = cov / (sa * sb);
        assert!(r.abs() < 3.0 / (a.len() as f64).sqrt(), "{r}");
    }

    #[test]
    fn chunked_is_execution_independent() {
        let p = MultCompParams::from_vectors(&[1.0, 1.5], &[0.4, 0.8], vec![3.0], 2.0).unwrap();
        let psi = resolve_psi(&p, RatioSource::Exact, &TruncationPolicy::default(), &mut stream(0, 0, Purpose::Rows)).unwrap();
        let s = MultCompSampler::new(&p, &psi, &KPolicy::default()).unwrap();
        let a = s.sample_chunked(1300, 11, Execution::Sequential);
        let b = s.sample_chunked(1300, 11, Execution::Parallel);
        assert_eq!(a, b);
        assert_eq!(a.rows(), 1300);
    }

    #[test]
    fn infeasible_parameters_rejected() {
        let p = MultCompParams::from_vectors(&[1.0, 1.0], &[1.0, 1.0], vec![50.0], 1.0).unwrap();
        let r = sample_multcomp(&p, 10, &KPolicy::default(), RatioSource::Exact, &mut stream(4, 0, Purpose::Rows));
        assert!(matches!(r, Err(Error::InfeasibleDelta { .. })));
    }

    #[test]
    fn heavy_tail_hits_cap() {
        let p = MultCompParams::from_vectors(&[1.0, 0.999], &[1.0, 0.0], vec![0.0], 1.0).unwrap();
        let tight = KPolicy {
            min_k: 50,
            max_doublings: 1,
            tol: 1e-10,
        };
        let psi = [0.5, 0.5];
        assert!(matches!(MultCompSampler::new(&p, &psi, &tight), Err(Error::TruncationCap { .. })));
    }
}
