use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contraction::contract_rank_one;
use crate::dense::{check_lambda, mass_penalty};
use crate::error::{GwError, Result};
use crate::sparse::{SparseMatrix, SparsePattern};
use crate::types::{Distribution, GroundCost, RelationMatrix};

/// Largest side for which the non-decomposable probability path runs
/// without an explicit override.
pub const NAIVE_PROBABILITY_LIMIT: usize = 1000;

const PROBABILITY_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// `s` categorical draws over the cells, duplicates counted.
    #[default]
    IidWithReplacement,
    /// Each cell kept independently with probability `min(1, s p_ij)`.
    Poisson,
    /// Every cell, unit weights. Reproduces the dense solvers.
    FullDeterministic,
}

/// How repeated i.i.d. draws of one cell enter the kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MultiplicityWeighting {
    /// Weight `c_ij / (s p_ij)` where `c_ij` counts the draws of the cell.
    #[default]
    Counted,
    /// Weight `1 / (s p_ij)` regardless of how often the cell was drawn.
    PaperLiteral,
}

/// A drawn support together with the probabilities it was drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingPlan {
    probabilities: Array2<f64>,
    pattern: Arc<SparsePattern>,
    multiplicities: Vec<u32>,
    subsample: usize,
    mode: SamplingMode,
    seed: u64,
}

impl SamplingPlan {
    pub fn probabilities(&self) -> &Array2<f64> {
        &self.probabilities
    }

    /// Distinct sampled cells.
    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    /// Draw counts aligned with the pattern's positions.
    pub fn multiplicities(&self) -> &[u32] {
        &self.multiplicities
    }

    pub fn subsample(&self) -> usize {
        self.subsample
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn distinct_len(&self) -> usize {
        self.pattern.nnz()
    }

    pub fn total_draws(&self) -> u64 {
        self.multiplicities.iter().map(|&c| c as u64).sum()
    }

    /// `min(1, s p_ij)`.
    pub fn inclusion_probability(&self, i: usize, j: usize) -> f64 {
        (self.subsample as f64 * self.probabilities[[i, j]]).min(1.0)
    }

    /// Importance weight for each stored cell.
    pub fn kernel_weights(&self, weighting: MultiplicityWeighting) -> Vec<f64> {
        let s = self.subsample as f64;
        self.pattern
            .iter()
            .map(|(k, i, j)| {
                let p = self.probabilities[[i, j]];
                match self.mode {
                    SamplingMode::FullDeterministic => 1.0,
                    SamplingMode::Poisson => 1.0 / (s * p).min(1.0),
                    SamplingMode::IidWithReplacement => match weighting {
                        MultiplicityWeighting::Counted => self.multiplicities[k] as f64 / (s * p),
                        MultiplicityWeighting::PaperLiteral => 1.0 / (s * p),
                    },
                }
            })
            .collect()
    }
}

/// Neumaier-compensated sum; plain summation over `m n` cells drifts past the
/// probability tolerance for a few hundred points per side.
fn compensated_sum<'a>(xs: impl IntoIterator<Item = &'a f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &x in xs {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() {
            (sum - t) + x
        } else {
            (x - t) + sum
        };
        sum = t;
    }
    sum + comp
}

pub fn validate_probabilities(p: &Array2<f64>) -> Result<()> {
    if p.is_empty() {
        return Err(GwError::InvalidProbabilities("empty matrix".into()));
    }
    if let Some(x) = p.iter().find(|&&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(GwError::InvalidProbabilities(format!("entry {x} is not a probability")));
    }
    let sum = compensated_sum(p.iter());
    if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(GwError::InvalidProbabilities(format!("entries sum to {sum}")));
    }
    Ok(())
}

/// `p_ij = sqrt(a_i b_j) / sum_kl sqrt(a_k b_l)`.
pub fn gw_sampling_probabilities(a: &Distribution, b: &Distribution) -> Result<Array2<f64>> {
    let (m, n) = (a.len(), b.len());
    let mut p = Array2::from_shape_fn((m, n), |(i, j)| (a.weights()[i] * b.weights()[j]).sqrt());
    let total = compensated_sum(p.iter());
    if !(total > 0.0) {
        return Err(GwError::EmptyDistribution);
    }
    p /= total;
    Ok(p)
}

/// Unbalanced probabilities
/// `p_ij ∝ (a_i b_j)^{lambda/(2 lambda + eps)} K_ij^{eps/(2 lambda + eps)}` with
/// `K = exp(-C_un(T0) / (eps m(T0))) * T0` and `T0 = a b^T / sqrt(m(a) m(b))`.
///
/// Decomposable costs exploit the rank-one `T0`; other costs pay the quadruple
/// sum and are refused beyond [`NAIVE_PROBABILITY_LIMIT`] unless
/// `allow_naive_large` is set.
#[allow(clippy::too_many_arguments)]
pub fn ugw_sampling_probabilities(
    a: &Distribution,
    b: &Distribution,
    cx: &RelationMatrix,
    cy: &RelationMatrix,
    cost: &GroundCost,
    lambda: f64,
    eps: f64,
    allow_naive_large: bool,
) -> Result<Array2<f64>> {
    check_lambda(lambda)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(GwError::InvalidRegularizer(format!(
            "epsilon must be positive, got {eps}"
        )));
    }
    let (m, n) = (a.len(), b.len());
    let side = m.max(n);
    if cost.decomposition().is_none() && side > NAIVE_PROBABILITY_LIMIT && !allow_naive_large {
        return Err(GwError::SizeGuard {
            n: side,
            limit: NAIVE_PROBABILITY_LIMIT,
        });
    }
    let norm = (a.mass() * b.mass()).sqrt();
    let x: Array1<f64> = a.weights() / norm;
    let y: Array1<f64> = b.weights().clone();
    let lt = contract_rank_one(cx, cy, cost, &x, &y)?.into_dense();
    // marginals of T0
    let p0: Vec<f64> = x.iter().map(|&xi| xi * b.mass()).collect();
    let q0: Vec<f64> = y.iter().map(|&yj| yj * a.mass() / norm).collect();
    let e = mass_penalty(&p0, &q0, a.as_slice(), b.as_slice(), lambda);
    let mass0 = norm;
    let denom = 2.0 * lambda + eps;
    let (wa, wk) = (lambda / denom, eps / denom);
    let log_t0 = |i: usize, j: usize| (x[i] * y[j]).ln();
    let mut logp = Array2::from_shape_fn((m, n), |(i, j)| {
        let log_k = -(lt[[i, j]] + e) / (eps * mass0) + log_t0(i, j);
        let log_ab = (a.weights()[i] * b.weights()[j]).ln();
        if log_ab == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            wa * log_ab + wk * log_k
        }
    });
    let mx = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return Err(GwError::InvalidProbabilities("no cell has positive weight".into()));
    }
    logp.mapv_inplace(|v| (v - mx).exp());
    let total = compensated_sum(logp.iter());
    logp /= total;
    Ok(logp)
}

/// Draws a support from `p`. Deterministic in `(p, s, mode, seed)`.
pub fn draw_sample(p: &Array2<f64>, s: usize, mode: SamplingMode, seed: u64) -> Result<SamplingPlan> {
    validate_probabilities(p)?;
    if s == 0 && mode != SamplingMode::FullDeterministic {
        return Err(GwError::InvalidConfig("subsample size must be at least 1".into()));
    }
    let (m, n) = p.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pattern, multiplicities) = match mode {
        SamplingMode::FullDeterministic => {
            let pattern = SparsePattern::full(m, n);
            let mult = vec![1; pattern.nnz()];
            (pattern, mult)
        }
        SamplingMode::IidWithReplacement => {
            let dist =
                WeightedIndex::new(p.iter().copied()).map_err(|e| GwError::InvalidProbabilities(e.to_string()))?;
            let mut flat: Vec<usize> = (0..s).map(|_| dist.sample(&mut rng)).collect();
            flat.sort_unstable();
            let mut cells = Vec::new();
            let mut counts = Vec::new();
            for f in flat {
                if cells.last() == Some(&f) {
                    *counts.last_mut().expect("nonempty") += 1;
                } else {
                    cells.push(f);
                    counts.push(1u32);
                }
            }
            let pattern = SparsePattern::from_cells(m, n, cells.iter().map(|&f| (f / n, f % n)))?;
            (pattern, counts)
        }
        SamplingMode::Poisson => {
            let sf = s as f64;
            let mut cells = Vec::new();
            for ((i, j), &pij) in p.indexed_iter() {
                let keep = (sf * pij).min(1.0);
                let u: f64 = rng.random();
                if pij > 0.0 && u < keep {
                    cells.push((i, j));
                }
            }
            let pattern = SparsePattern::from_cells(m, n, cells)?;
            let mult = vec![1; pattern.nnz()];
            (pattern, mult)
        }
    };
    Ok(SamplingPlan {
        probabilities: p.clone(),
        pattern: Arc::new(pattern),
        multiplicities,
        subsample: s,
        mode,
        seed,
    })
}

/// `K~_ij = K_ij / min(1, s p_ij)` on the Poisson-drawn cells, zero elsewhere.
pub fn sparsify_kernel_poisson(k: &Array2<f64>, plan: &SamplingPlan) -> Result<SparseMatrix> {
    if plan.mode() != SamplingMode::Poisson {
        return Err(GwError::InvalidConfig("plan was not drawn in Poisson mode".into()));
    }
    if k.dim() != plan.probabilities().dim() {
        return Err(GwError::DimensionMismatch {
            what: "kernel vs sampling plan rows",
            expected: plan.probabilities().nrows(),
            found: k.nrows(),
        });
    }
    let values = plan
        .pattern()
        .iter()
        .map(|(_, i, j)| k[[i, j]] / plan.inclusion_probability(i, j))
        .collect();
    SparseMatrix::new(plan.pattern().clone(), values)
}
