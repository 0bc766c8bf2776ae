//! Reference solvers on dense couplings: EGW / PGA-GW, fused GW, and
//! unbalanced GW (EUGW / PGA-UGW).
//!
//! Each outer round linearizes the quadratic objective at the current plan,
//! builds a Gibbs kernel from the resulting cost matrix, and rescales it with
//! Sinkhorn. These solvers are the oracles the sparsified estimators are
//! measured against.

use std::time::{Duration, Instant};

use ndarray::Array2;

use crate::contraction::{contract_dense, frobenius, outer};
use crate::error::{GwError, Result};
use crate::sinkhorn::{sinkhorn_balanced_with, sinkhorn_unbalanced_with, SinkhornOptions};
use crate::types::{CouplingPlan, Distribution, GroundCost, KernelMatrix, Problem, Storage};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regularizer {
    /// Entropy `<T, log T>`: the kernel is `exp(-C / eps)`.
    Entropic,
    /// Bregman proximal term `KL(T || T_r)`: the kernel is `exp(-C / eps) * T_r`.
    ProximalKl,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub regularizer: Regularizer,
    pub epsilon: f64,
    /// Outer (linearization) rounds `R`.
    pub outer_iterations: usize,
    /// Sinkhorn rounds `H` per outer round.
    pub inner_iterations: usize,
    /// Optional early exit for the inner Sinkhorn loop. Off by default.
    pub sinkhorn_tolerance: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            regularizer: Regularizer::ProximalKl,
            epsilon: 1e-2,
            outer_iterations: 20,
            inner_iterations: 50,
            sinkhorn_tolerance: None,
        }
    }
}

impl SolverConfig {
    pub fn new(regularizer: Regularizer, epsilon: f64) -> Self {
        Self {
            regularizer,
            epsilon,
            ..Self::default()
        }
    }

    pub fn with_iterations(mut self, outer: usize, inner: usize) -> Self {
        self.outer_iterations = outer;
        self.inner_iterations = inner;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(GwError::InvalidRegularizer(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.outer_iterations == 0 || self.inner_iterations == 0 {
            return Err(GwError::InvalidConfig(
                "outer and inner iteration counts must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn sinkhorn_options(&self, allow_empty_lines: bool) -> SinkhornOptions {
        SinkhornOptions {
            iterations: self.inner_iterations,
            tolerance: self.sinkhorn_tolerance,
            allow_empty_lines,
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(GwError::InvalidConfig(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(GwError::InvalidRegularizer(format!(
            "lambda must be positive, got {lambda}"
        )))
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Diagnostics {
    /// Objective at `T^(0), ..., T^(R)`; the last entry is the reported distance.
    pub objective_trace: Vec<f64>,
    pub wall_time: Duration,
    pub outer_rounds: usize,
    /// Estimated peak bytes held in matrices during the solve.
    pub peak_matrix_bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GwResult {
    pub distance: f64,
    pub plan: CouplingPlan,
    pub diagnostics: Diagnostics,
}

/// Log of one balanced kernel entry before row normalization.
#[inline]
pub(crate) fn balanced_log_kernel(cost: f64, plan: f64, weight: f64, eps: f64, reg: Regularizer) -> f64 {
    let mut lk = -cost / eps;
    if reg == Regularizer::ProximalKl {
        lk += plan.ln();
    }
    if weight != 1.0 {
        lk += weight.ln();
    }
    lk
}

/// Subtracts each row's largest log-entry and exponentiates in place.
///
/// Row scaling of the kernel is absorbed by the Sinkhorn `u` update, so the
/// balanced plan is unchanged while rows no longer underflow as a whole.
pub(crate) fn exp_row_normalized(log_k: &mut [f64], row_ranges: impl Iterator<Item = std::ops::Range<usize>>) {
    for range in row_ranges {
        let row = &mut log_k[range];
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if mx == f64::NEG_INFINITY {
            row.fill(0.0);
            continue;
        }
        for x in row.iter_mut() {
            *x = (*x - mx).exp();
        }
    }
}

/// Log of one unbalanced kernel entry `exp(-C/eps_bar) * T * w`.
#[inline]
pub(crate) fn unbalanced_log_kernel(cost: f64, plan: f64, weight: f64, eps_bar: f64, reg: Regularizer) -> f64 {
    balanced_log_kernel(cost, plan, weight, eps_bar, reg)
}

#[inline]
pub(crate) fn xlogy_ratio(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

/// Quadratic KL divergence `KL(mu (x) mu || nu (x) nu)` for positive measures,
/// evaluated as `2 m(mu) sum_i mu_i log(mu_i / nu_i) - m(mu)^2 + m(nu)^2`.
pub fn kl_tensor(mu: &[f64], nu: &[f64]) -> f64 {
    let m_mu: f64 = mu.iter().sum();
    let m_nu: f64 = nu.iter().sum();
    let cross: f64 = mu.iter().zip(nu).map(|(&x, &y)| xlogy_ratio(x, y)).sum();
    2.0 * m_mu * cross - m_mu * m_mu + m_nu * m_nu
}

/// Scalar mass term
/// `E(T) = lambda sum_i log(p_i / a_i) p_i + lambda sum_j log(q_j / b_j) q_j`
/// with `p = T 1`, `q = T^T 1`.
pub fn mass_penalty(p: &[f64], q: &[f64], a: &[f64], b: &[f64], lambda: f64) -> f64 {
    let sp: f64 = p.iter().zip(a).map(|(&x, &y)| xlogy_ratio(x, y)).sum();
    let sq: f64 = q.iter().zip(b).map(|(&x, &y)| xlogy_ratio(x, y)).sum();
    lambda * sp + lambda * sq
}

/// `<L (x) T, T> + lambda KL(T1 || a) + lambda KL(T^T 1 || b)` from a
/// precomputed quadratic term and the plan's marginals.
pub fn ugw_objective(quadratic: f64, p: &[f64], q: &[f64], a: &[f64], b: &[f64], lambda: f64) -> f64 {
    quadratic + lambda * kl_tensor(p, a) + lambda * kl_tensor(q, b)
}

pub(crate) fn finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(GwError::NonFiniteObjective)
    }
}

fn dense_bytes(m: usize, n: usize, decomposable: bool, fused: bool) -> u64 {
    let (m, n) = (m as u64, n as u64);
    // relations, plan, cost, kernel, next plan
    let mut words = m * m + n * n + 4 * m * n;
    if decomposable {
        // f1/h1 and f2/h2 images plus the cross product
        words += 2 * m * m + 2 * n * n + 2 * m * n;
    }
    if fused {
        words += m * n;
    }
    8 * words
}

/// Solves the GW problem with Algorithm-1 style outer rounds.
pub fn solve_gw_dense(problem: &Problem, cost: &GroundCost, cfg: &SolverConfig) -> Result<GwResult> {
    run_balanced(problem, cost, cfg, None)
}

/// Fused GW: cost `alpha L (x) T + (1 - alpha) M` with feature cost `m`.
pub fn solve_fgw_dense(
    problem: &Problem,
    features: &Array2<f64>,
    cost: &GroundCost,
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<GwResult> {
    check_alpha(alpha)?;
    check_feature_cost(problem, features)?;
    run_balanced(problem, cost, cfg, Some((features, alpha)))
}

pub(crate) fn check_feature_cost(problem: &Problem, features: &Array2<f64>) -> Result<()> {
    if features.dim() != (problem.m(), problem.n()) {
        return Err(GwError::DimensionMismatch {
            what: "feature cost rows",
            expected: problem.m(),
            found: features.nrows(),
        });
    }
    if let Some(((row, col), _)) = features.indexed_iter().find(|(_, &x)| !(x >= 0.0) || !x.is_finite()) {
        return Err(GwError::NonFiniteEntry { row, col });
    }
    Ok(())
}

pub(crate) fn require_balanced(problem: &Problem) -> Result<()> {
    if problem.is_balanced() {
        Ok(())
    } else {
        Err(GwError::InvalidConfig(
            "balanced solver given unbalanced marginals".into(),
        ))
    }
}

fn fused_objective(quadratic: f64, linear: Option<(f64, f64)>) -> f64 {
    match linear {
        None => quadratic,
        Some((lin, alpha)) => alpha * quadratic + (1.0 - alpha) * lin,
    }
}

fn run_balanced(
    problem: &Problem,
    cost: &GroundCost,
    cfg: &SolverConfig,
    fused: Option<(&Array2<f64>, f64)>,
) -> Result<GwResult> {
    cfg.validate()?;
    require_balanced(problem)?;
    let start = Instant::now();
    let (m, n) = (problem.m(), problem.n());
    let (a, b) = (&problem.a, &problem.b);
    let opts = cfg.sinkhorn_options(false);
    let mut t = outer(a.weights(), b.weights());
    let mut trace = Vec::with_capacity(cfg.outer_iterations + 1);
    let objective = |lt: &Array2<f64>, t: &Array2<f64>| {
        let quad = frobenius(lt, t);
        fused_objective(quad, fused.map(|(mf, alpha)| (frobenius(mf, t), alpha)))
    };
    for _ in 0..cfg.outer_iterations {
        let lt = contract_dense(&problem.cx, &problem.cy, cost, t.view())?.into_dense();
        trace.push(objective(&lt, &t));
        let c = match fused {
            None => lt,
            Some((mf, alpha)) => alpha * &lt + (1.0 - alpha) * mf,
        };
        let mut log_k: Vec<f64> = c
            .iter()
            .zip(t.iter())
            .map(|(&cij, &tij)| balanced_log_kernel(cij, tij, 1.0, cfg.epsilon, cfg.regularizer))
            .collect();
        exp_row_normalized(&mut log_k, (0..m).map(|i| i * n..(i + 1) * n));
        let k =
            KernelMatrix::from_storage_unchecked(Storage::Dense(Array2::from_shape_vec((m, n), log_k).expect("shape")));
        t = sinkhorn_balanced_with(a, b, &k, &opts)?.plan.to_dense();
    }
    let lt = contract_dense(&problem.cx, &problem.cy, cost, t.view())?.into_dense();
    let distance = finite(objective(&lt, &t))?;
    trace.push(distance);
    Ok(GwResult {
        distance,
        plan: CouplingPlan::from_storage_unchecked(Storage::Dense(t)),
        diagnostics: Diagnostics {
            objective_trace: trace,
            wall_time: start.elapsed(),
            outer_rounds: cfg.outer_iterations,
            peak_matrix_bytes: dense_bytes(m, n, cost.decomposition().is_some(), fused.is_some()),
        },
    })
}

fn marginals(t: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let p = t.rows().into_iter().map(|r| r.sum()).collect();
    let q = t.columns().into_iter().map(|c| c.sum()).collect();
    (p, q)
}

/// Unbalanced GW with proximal (PGA-UGW) or entropic (EUGW) rounds and
/// per-round mass rescaling.
pub fn solve_ugw_dense(problem: &Problem, cost: &GroundCost, lambda: f64, cfg: &SolverConfig) -> Result<GwResult> {
    cfg.validate()?;
    check_lambda(lambda)?;
    let start = Instant::now();
    let (m, n) = (problem.m(), problem.n());
    let a = problem.a.as_slice();
    let b = problem.b.as_slice();
    let mass0 = (problem.a.mass() * problem.b.mass()).sqrt();
    let mut t = outer(problem.a.weights(), problem.b.weights()) / mass0;
    let ua = unbalanced_view(&problem.a);
    let ub = unbalanced_view(&problem.b);
    let opts = cfg.sinkhorn_options(false);
    let mut trace = Vec::with_capacity(cfg.outer_iterations + 1);
    for _ in 0..cfg.outer_iterations {
        let lt = contract_dense(&problem.cx, &problem.cy, cost, t.view())?.into_dense();
        let (p, q) = marginals(&t);
        trace.push(ugw_objective(frobenius(&lt, &t), &p, &q, a, b, lambda));
        let mass = t.sum();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(GwError::MassCollapse { mass });
        }
        let e = mass_penalty(&p, &q, a, b, lambda);
        let (eps_bar, lambda_bar) = (cfg.epsilon * mass, lambda * mass);
        let kv: Vec<f64> = lt
            .iter()
            .zip(t.iter())
            .map(|(&l, &tij)| unbalanced_log_kernel(l + e, tij, 1.0, eps_bar, cfg.regularizer).exp())
            .collect();
        let k =
            KernelMatrix::from_storage_unchecked(Storage::Dense(Array2::from_shape_vec((m, n), kv).expect("shape")));
        let next = sinkhorn_unbalanced_with(&ua, &ub, &k, lambda_bar, eps_bar, &opts)?
            .plan
            .to_dense();
        let next_mass = next.sum();
        if !(next_mass > 0.0 && next_mass.is_finite()) {
            return Err(GwError::MassCollapse { mass: next_mass });
        }
        t = next * (mass / next_mass).sqrt();
    }
    let lt = contract_dense(&problem.cx, &problem.cy, cost, t.view())?.into_dense();
    let (p, q) = marginals(&t);
    let distance = finite(ugw_objective(frobenius(&lt, &t), &p, &q, a, b, lambda))?;
    trace.push(distance);
    Ok(GwResult {
        distance,
        plan: CouplingPlan::from_storage_unchecked(Storage::Dense(t)),
        diagnostics: Diagnostics {
            objective_trace: trace,
            wall_time: start.elapsed(),
            outer_rounds: cfg.outer_iterations,
            peak_matrix_bytes: dense_bytes(m, n, cost.decomposition().is_some(), false),
        },
    })
}

pub(crate) fn unbalanced_view(d: &Distribution) -> Distribution {
    d.to_unbalanced()
}

/// UGW objective of an arbitrary dense plan, recomputed from scratch.
pub fn ugw_objective_of_plan(problem: &Problem, cost: &GroundCost, lambda: f64, plan: &Array2<f64>) -> Result<f64> {
    let lt = contract_dense(&problem.cx, &problem.cy, cost, plan.view())?.into_dense();
    let (p, q) = marginals(plan);
    Ok(ugw_objective(
        frobenius(&lt, plan),
        &p,
        &q,
        problem.a.as_slice(),
        problem.b.as_slice(),
        lambda,
    ))
}
