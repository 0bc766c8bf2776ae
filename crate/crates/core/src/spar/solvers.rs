use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;

use super::sampling::{
    draw_sample, gw_sampling_probabilities, ugw_sampling_probabilities, MultiplicityWeighting, SamplingMode,
    SamplingPlan,
};
use crate::contraction::contract_sparse;
use crate::dense::{
    balanced_log_kernel, check_alpha, check_feature_cost, check_lambda, exp_row_normalized, finite, mass_penalty,
    require_balanced, ugw_objective, unbalanced_log_kernel, unbalanced_view, Diagnostics, GwResult, SolverConfig,
};
use crate::error::{GwError, Result};
use crate::sinkhorn::{sinkhorn_balanced_with, sinkhorn_unbalanced_with};
use crate::sparse::{SparseMatrix, SparsePattern};
use crate::types::{CouplingPlan, GroundCost, KernelMatrix, Problem, Storage};

/// What happens to a sampled cell whose contracted cost is exactly zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ZeroCostRule {
    /// Only unsampled cells are excluded; a sampled zero cost is kept as zero.
    #[default]
    Masked,
    /// A sampled cell with zero cost is set to `+inf`, so its kernel entry is 0.
    Literal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparConfig {
    /// Nominal subsample size `s`.
    pub subsample: usize,
    pub mode: SamplingMode,
    pub seed: u64,
    pub weighting: MultiplicityWeighting,
    pub zero_cost: ZeroCostRule,
    /// Leave plan lines with no sampled cell at zero instead of failing with
    /// [`GwError::InfeasibleKernel`].
    pub allow_empty_lines: bool,
    /// Permit the quadratic-cost probability path for UGW beyond the size guard.
    pub allow_naive_probabilities: bool,
}

impl SparConfig {
    pub fn new(subsample: usize, mode: SamplingMode, seed: u64) -> Self {
        Self {
            subsample,
            mode,
            seed,
            weighting: MultiplicityWeighting::Counted,
            zero_cost: ZeroCostRule::Masked,
            allow_empty_lines: false,
            allow_naive_probabilities: false,
        }
    }

    /// Every cell, unit weights.
    pub fn full() -> Self {
        Self::new(0, SamplingMode::FullDeterministic, 0)
    }

    pub fn iid(subsample: usize, seed: u64) -> Self {
        Self::new(subsample, SamplingMode::IidWithReplacement, seed)
    }
}

/// `16 n`.
pub fn default_subsample(n: usize) -> usize {
    16 * n
}

/// Spar-GW: builds `p_ij ∝ sqrt(a_i b_j)`, draws the support once and runs the
/// proximal or entropic outer rounds on it.
pub fn solve_spar_gw(problem: &Problem, cost: &GroundCost, cfg: &SolverConfig, spar: &SparConfig) -> Result<GwResult> {
    require_balanced(problem)?;
    let plan = balanced_plan(problem, spar)?;
    solve_spar_gw_with_plan(problem, cost, cfg, spar, &plan)
}

/// Spar-GW on a support drawn beforehand.
pub fn solve_spar_gw_with_plan(
    problem: &Problem,
    cost: &GroundCost,
    cfg: &SolverConfig,
    spar: &SparConfig,
    plan: &SamplingPlan,
) -> Result<GwResult> {
    run_balanced(problem, cost, cfg, spar, plan, None)
}

/// Spar-FGW: cost `alpha L (x) T + (1 - alpha) M` restricted to the support.
pub fn solve_spar_fgw(
    problem: &Problem,
    features: &Array2<f64>,
    cost: &GroundCost,
    alpha: f64,
    cfg: &SolverConfig,
    spar: &SparConfig,
) -> Result<GwResult> {
    require_balanced(problem)?;
    let plan = balanced_plan(problem, spar)?;
    solve_spar_fgw_with_plan(problem, features, cost, alpha, cfg, spar, &plan)
}

#[allow(clippy::too_many_arguments)]
pub fn solve_spar_fgw_with_plan(
    problem: &Problem,
    features: &Array2<f64>,
    cost: &GroundCost,
    alpha: f64,
    cfg: &SolverConfig,
    spar: &SparConfig,
    plan: &SamplingPlan,
) -> Result<GwResult> {
    check_alpha(alpha)?;
    check_feature_cost(problem, features)?;
    run_balanced(problem, cost, cfg, spar, plan, Some((features, alpha)))
}

/// Spar-UGW with the unbalanced probabilities and per-round mass rescaling.
pub fn solve_spar_ugw(
    problem: &Problem,
    cost: &GroundCost,
    lambda: f64,
    cfg: &SolverConfig,
    spar: &SparConfig,
) -> Result<GwResult> {
    cfg.validate()?;
    check_lambda(lambda)?;
    let p = ugw_sampling_probabilities(
        &problem.a,
        &problem.b,
        &problem.cx,
        &problem.cy,
        cost,
        lambda,
        cfg.epsilon,
        spar.allow_naive_probabilities,
    )?;
    let plan = draw_sample(&p, spar.subsample, spar.mode, spar.seed)?;
    solve_spar_ugw_with_plan(problem, cost, lambda, cfg, spar, &plan)
}

pub fn solve_spar_ugw_with_plan(
    problem: &Problem,
    cost: &GroundCost,
    lambda: f64,
    cfg: &SolverConfig,
    spar: &SparConfig,
    plan: &SamplingPlan,
) -> Result<GwResult> {
    cfg.validate()?;
    check_lambda(lambda)?;
    check_plan_shape(problem, plan)?;
    let start = Instant::now();
    let pattern = plan.pattern().clone();
    let (a, b) = (problem.a.as_slice(), problem.b.as_slice());
    let weights = plan.kernel_weights(spar.weighting);
    let mass0 = (problem.a.mass() * problem.b.mass()).sqrt();
    let mut t = initial_plan(&pattern, a, b, mass0);
    let ua = unbalanced_view(&problem.a);
    let ub = unbalanced_view(&problem.b);
    let opts = cfg.sinkhorn_options(spar.allow_empty_lines);
    let mut trace = Vec::with_capacity(cfg.outer_iterations + 1);
    for _ in 0..cfg.outer_iterations {
        let lt = contracted(problem, cost, &t, spar.zero_cost)?;
        let (p, q) = (t.row_sums(), t.col_sums());
        trace.push(ugw_objective(quadratic(&lt, &t), &p, &q, a, b, lambda));
        let mass = t.sum();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(GwError::MassCollapse { mass });
        }
        let e = mass_penalty(&p, &q, a, b, lambda);
        let (eps_bar, lambda_bar) = (cfg.epsilon * mass, lambda * mass);
        let kv: Vec<f64> = lt
            .iter()
            .zip(t.values())
            .zip(&weights)
            .map(|((&l, &tk), &w)| unbalanced_log_kernel(l + e, tk, w, eps_bar, cfg.regularizer).exp())
            .collect();
        let k = kernel(&pattern, kv);
        let next = sinkhorn_unbalanced_with(&ua, &ub, &k, lambda_bar, eps_bar, &opts)?.plan;
        let next = sparse_of(next);
        let next_mass = next.sum();
        if !(next_mass > 0.0 && next_mass.is_finite()) {
            return Err(GwError::MassCollapse { mass: next_mass });
        }
        let factor = (mass / next_mass).sqrt();
        let mut values = next.into_values();
        values.iter_mut().for_each(|x| *x *= factor);
        t = SparseMatrix::new(pattern.clone(), values)?;
    }
    // the reported value uses true costs on S, whatever the zero rule
    let lt = contracted(problem, cost, &t, ZeroCostRule::Masked)?;
    let (p, q) = (t.row_sums(), t.col_sums());
    let distance = finite(ugw_objective(quadratic(&lt, &t), &p, &q, a, b, lambda))?;
    trace.push(distance);
    Ok(GwResult {
        distance,
        plan: CouplingPlan::from_storage_unchecked(Storage::Sparse(t)),
        diagnostics: Diagnostics {
            objective_trace: trace,
            wall_time: start.elapsed(),
            outer_rounds: cfg.outer_iterations,
            peak_matrix_bytes: sparse_bytes(problem, &pattern, false),
        },
    })
}

fn balanced_plan(problem: &Problem, spar: &SparConfig) -> Result<SamplingPlan> {
    let p = gw_sampling_probabilities(&problem.a, &problem.b)?;
    draw_sample(&p, spar.subsample, spar.mode, spar.seed)
}

fn check_plan_shape(problem: &Problem, plan: &SamplingPlan) -> Result<()> {
    let (m, n) = plan.probabilities().dim();
    if m != problem.m() {
        return Err(GwError::DimensionMismatch {
            what: "sampling plan rows",
            expected: problem.m(),
            found: m,
        });
    }
    if n != problem.n() {
        return Err(GwError::DimensionMismatch {
            what: "sampling plan columns",
            expected: problem.n(),
            found: n,
        });
    }
    Ok(())
}

fn initial_plan(pattern: &Arc<SparsePattern>, a: &[f64], b: &[f64], scale: f64) -> SparseMatrix {
    let values = pattern.iter().map(|(_, i, j)| a[i] * b[j] / scale).collect();
    SparseMatrix::new(pattern.clone(), values).expect("pattern-aligned values")
}

fn kernel(pattern: &Arc<SparsePattern>, values: Vec<f64>) -> KernelMatrix {
    KernelMatrix::from_storage_unchecked(Storage::Sparse(
        SparseMatrix::new(pattern.clone(), values).expect("pattern-aligned values"),
    ))
}

fn sparse_of(plan: CouplingPlan) -> SparseMatrix {
    match plan.into_storage() {
        Storage::Sparse(s) => s,
        Storage::Dense(_) => unreachable!("sparse kernel yields a sparse plan"),
    }
}

/// Contracted costs on the support, with the zero rule applied.
fn contracted(problem: &Problem, cost: &GroundCost, t: &SparseMatrix, rule: ZeroCostRule) -> Result<Vec<f64>> {
    let mut lt = contract_sparse(&problem.cx, &problem.cy, cost, t)?
        .into_sparse()
        .expect("sparse contraction")
        .into_values();
    if rule == ZeroCostRule::Literal {
        lt.iter_mut().filter(|x| **x == 0.0).for_each(|x| *x = f64::INFINITY);
    }
    Ok(lt)
}

fn quadratic(lt: &[f64], t: &SparseMatrix) -> f64 {
    lt.iter()
        .zip(t.values())
        .map(|(&l, &x)| if x == 0.0 { 0.0 } else { l * x })
        .sum()
}

fn sparse_bytes(problem: &Problem, pattern: &SparsePattern, fused: bool) -> u64 {
    let (m, n, s) = (problem.m() as u64, problem.n() as u64, pattern.nnz() as u64);
    // relations and probabilities, index arrays, then plan/cost/kernel/next/weights
    let mut words = m * m + n * n + m * n + (m + n + 2) + 4 * s;
    words += 5 * s;
    if fused {
        words += s;
    }
    8 * words
}

fn run_balanced(
    problem: &Problem,
    cost: &GroundCost,
    cfg: &SolverConfig,
    spar: &SparConfig,
    plan: &SamplingPlan,
    fused: Option<(&Array2<f64>, f64)>,
) -> Result<GwResult> {
    cfg.validate()?;
    require_balanced(problem)?;
    check_plan_shape(problem, plan)?;
    let start = Instant::now();
    let pattern = plan.pattern().clone();
    let (a, b) = (&problem.a, &problem.b);
    let weights = plan.kernel_weights(spar.weighting);
    let masked_features: Option<(Vec<f64>, f64)> =
        fused.map(|(mf, alpha)| (pattern.iter().map(|(_, i, j)| mf[[i, j]]).collect(), alpha));
    let objective = |lt: &[f64], t: &SparseMatrix| {
        let quad = quadratic(lt, t);
        match &masked_features {
            None => quad,
            Some((mv, alpha)) => {
                let lin: f64 = mv.iter().zip(t.values()).map(|(&m, &x)| m * x).sum();
                alpha * quad + (1.0 - alpha) * lin
            }
        }
    };
    let opts = cfg.sinkhorn_options(spar.allow_empty_lines);
    let mut t = initial_plan(&pattern, a.as_slice(), b.as_slice(), 1.0);
    let mut trace = Vec::with_capacity(cfg.outer_iterations + 1);
    let rows = pattern.rows();
    for _ in 0..cfg.outer_iterations {
        let lt = contracted(problem, cost, &t, ZeroCostRule::Masked)?;
        trace.push(objective(&lt, &t));
        let mut c = match &masked_features {
            None => lt,
            Some((mv, alpha)) => lt
                .iter()
                .zip(mv)
                .map(|(&l, &m)| alpha * l + (1.0 - alpha) * m)
                .collect(),
        };
        if spar.zero_cost == ZeroCostRule::Literal {
            c.iter_mut().filter(|x| **x == 0.0).for_each(|x| *x = f64::INFINITY);
        }
        let mut log_k: Vec<f64> = c
            .iter()
            .zip(t.values())
            .zip(&weights)
            .map(|((&ck, &tk), &w)| balanced_log_kernel(ck, tk, w, cfg.epsilon, cfg.regularizer))
            .collect();
        exp_row_normalized(&mut log_k, (0..rows).map(|i| pattern.row_range(i)));
        let k = kernel(&pattern, log_k);
        t = sparse_of(sinkhorn_balanced_with(a, b, &k, &opts)?.plan);
    }
    let lt = contracted(problem, cost, &t, ZeroCostRule::Masked)?;
    let distance = finite(objective(&lt, &t))?;
    trace.push(distance);
    Ok(GwResult {
        distance,
        plan: CouplingPlan::from_storage_unchecked(Storage::Sparse(t)),
        diagnostics: Diagnostics {
            objective_trace: trace,
            wall_time: start.elapsed(),
            outer_rounds: cfg.outer_iterations,
            peak_matrix_bytes: sparse_bytes(problem, &pattern, fused.is_some()),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{solve_fgw_dense, solve_gw_dense, solve_ugw_dense, Regularizer};
    use crate::sinkhorn::sinkhorn_balanced;
    use crate::types::{Distribution, RelationMatrix};
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn relation(n: usize, rng: &mut ChaCha8Rng) -> RelationMatrix {
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        RelationMatrix::new(Array2::from_shape_fn((n, n), |(i, j)| {
            ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt()
        }))
        .unwrap()
    }

    fn weights(n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
        Array1::from_shape_fn(n, |_| rng.random_range(0.2..1.0))
    }

    fn balanced_problem(m: usize, n: usize, seed: u64) -> Problem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cx = relation(m, &mut rng);
        let cy = relation(n, &mut rng);
        let a = Distribution::normalized(weights(m, &mut rng)).unwrap();
        let b = Distribution::normalized(weights(n, &mut rng)).unwrap();
        Problem::new(a, b, cx, cy).unwrap()
    }

    fn unbalanced_problem(m: usize, n: usize, seed: u64) -> Problem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cx = relation(m, &mut rng);
        let cy = relation(n, &mut rng);
        let a = Distribution::unbalanced(weights(m, &mut rng)).unwrap();
        let b = Distribution::unbalanced(weights(n, &mut rng)).unwrap();
        Problem::new(a, b, cx, cy).unwrap()
    }

    fn max_diff(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        x.iter().zip(y.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    fn cfg() -> SolverConfig {
        SolverConfig::new(Regularizer::ProximalKl, 0.05).with_iterations(8, 40)
    }

    #[test]
    fn full_mode_matches_dense_gw() {
        for seed in 0..6 {
            let (m, n) = (3 + seed as usize % 6, 2 + (seed as usize * 5) % 7);
            let pb = balanced_problem(m, n, seed);
            for cost in [GroundCost::l2(), GroundCost::l1()] {
                for reg in [Regularizer::ProximalKl, Regularizer::Entropic] {
                    let c = SolverConfig::new(reg, 0.05).with_iterations(6, 30);
                    let d = solve_gw_dense(&pb, &cost, &c).unwrap();
                    let s = solve_spar_gw(&pb, &cost, &c, &SparConfig::full()).unwrap();
                    assert!(
                        (d.distance - s.distance).abs() <= 1e-12,
                        "{} vs {}",
                        d.distance,
                        s.distance
                    );
                    assert!(max_diff(&d.plan.to_dense(), &s.plan.to_dense()) <= 1e-12);
                    for (x, y) in d.diagnostics.objective_trace.iter().zip(&s.diagnostics.objective_trace) {
                        assert!((x - y).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    fn two_point() -> Problem {
        let c = RelationMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let u = Distribution::uniform(2).unwrap();
        Problem::new(u.clone(), u, c.clone(), c).unwrap()
    }

    #[test]
    fn product_coupling_is_a_fixed_point_of_the_symmetric_instance() {
        // every entry of L (x) ab^T equals 1/2, so each round reproduces ab^T
        let pb = two_point();
        let cfg = SolverConfig::new(Regularizer::ProximalKl, 0.01).with_iterations(20, 50);
        let r = solve_spar_gw(&pb, &GroundCost::l2(), &cfg, &SparConfig::full()).unwrap();
        assert!((r.distance - 0.5).abs() < 1e-12);
        assert!(r.plan.to_dense().iter().all(|&x| (x - 0.25).abs() < 1e-12));
    }

    #[test]
    fn uneven_multiplicities_reach_the_zero_optimum() {
        let pb = two_point();
        let cfg = SolverConfig::new(Regularizer::ProximalKl, 0.01).with_iterations(20, 50);
        let spar = SparConfig::iid(4, 1);
        let plan = balanced_plan(&pb, &spar).unwrap();
        assert_eq!(plan.multiplicities(), &[2, 1, 1]);
        let r = solve_spar_gw(&pb, &GroundCost::l2(), &cfg, &spar).unwrap();
        assert!(r.distance <= 1e-6, "{}", r.distance);
    }

    #[test]
    fn full_mode_matches_dense_fgw() {
        let pb = balanced_problem(5, 6, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mf = Array2::from_shape_fn((5, 6), |_| rng.random_range(0.0..1.0));
        let c = cfg();
        for alpha in [0.0, 0.3, 1.0] {
            let d = solve_fgw_dense(&pb, &mf, &GroundCost::l2(), alpha, &c).unwrap();
            let s = solve_spar_fgw(&pb, &mf, &GroundCost::l2(), alpha, &c, &SparConfig::full()).unwrap();
            assert!((d.distance - s.distance).abs() <= 1e-12);
            assert!(max_diff(&d.plan.to_dense(), &s.plan.to_dense()) <= 1e-12);
        }
    }

    #[test]
    fn fgw_alpha_one_is_spar_gw() {
        let pb = balanced_problem(7, 7, 2);
        let mf = Array2::from_elem((7, 7), 0.5);
        let spar = SparConfig::iid(4 * 7, 19);
        let mut spar = spar;
        spar.allow_empty_lines = true;
        let g = solve_spar_gw(&pb, &GroundCost::l2(), &cfg(), &spar).unwrap();
        let f = solve_spar_fgw(&pb, &mf, &GroundCost::l2(), 1.0, &cfg(), &spar).unwrap();
        assert_eq!(g.distance.to_bits(), f.distance.to_bits());
        assert_eq!(g.plan, f.plan);
    }

    #[test]
    fn fgw_alpha_zero_is_entropic_ot() {
        let pb = balanced_problem(4, 5, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mf = Array2::from_shape_fn((4, 5), |_| rng.random_range(0.0..1.0));
        let eps = 0.1;
        let h = 200;
        let c = SolverConfig::new(Regularizer::Entropic, eps).with_iterations(3, h);
        let r = solve_spar_fgw(&pb, &mf, &GroundCost::l2(), 0.0, &c, &SparConfig::full()).unwrap();
        let k = KernelMatrix::dense(mf.mapv(|x| (-x / eps).exp())).unwrap();
        let ot = sinkhorn_balanced(&pb.a, &pb.b, &k, h).unwrap().to_dense();
        let oracle: f64 = ot.iter().zip(mf.iter()).map(|(t, m)| t * m).sum();
        assert!((r.distance - oracle).abs() <= 1e-8, "{} vs {oracle}", r.distance);
    }

    #[test]
    fn full_mode_matches_dense_ugw() {
        for seed in 0..5 {
            let (m, n) = (2 + seed as usize % 5, 3 + (seed as usize * 3) % 4);
            let pb = unbalanced_problem(m, n, 40 + seed);
            for reg in [Regularizer::ProximalKl, Regularizer::Entropic] {
                let c = SolverConfig::new(reg, 0.1).with_iterations(6, 30);
                let d = solve_ugw_dense(&pb, &GroundCost::l2(), 0.5, &c).unwrap();
                let s = solve_spar_ugw(&pb, &GroundCost::l2(), 0.5, &c, &SparConfig::full()).unwrap();
                assert!(
                    (d.distance - s.distance).abs() <= 1e-9,
                    "{} vs {}",
                    d.distance,
                    s.distance
                );
                assert!(max_diff(&d.plan.to_dense(), &s.plan.to_dense()) <= 1e-9);
            }
        }
    }

    #[test]
    fn large_lambda_ugw_degenerates_to_gw() {
        let pb = balanced_problem(5, 5, 23);
        let ub = Problem::new(pb.a.to_unbalanced(), pb.b.to_unbalanced(), pb.cx.clone(), pb.cy.clone()).unwrap();
        let c = SolverConfig::new(Regularizer::ProximalKl, 0.05).with_iterations(10, 100);
        let g = solve_spar_gw(&pb, &GroundCost::l2(), &c, &SparConfig::full()).unwrap();
        let u = solve_spar_ugw(&ub, &GroundCost::l2(), 1e6, &c, &SparConfig::full()).unwrap();
        assert!(
            (g.distance - u.distance).abs() <= 1e-3 * g.distance,
            "{} vs {}",
            g.distance,
            u.distance
        );
    }

    #[test]
    fn single_point_ugw_is_zero() {
        let a = Distribution::unbalanced(array![1.0]).unwrap();
        let c = RelationMatrix::new(array![[0.0]]).unwrap();
        let pb = Problem::new(a.clone(), a, c.clone(), c).unwrap();
        for spar in [SparConfig::full(), SparConfig::iid(16, 3)] {
            let r = solve_spar_ugw(&pb, &GroundCost::l2(), 1.0, &cfg(), &spar).unwrap();
            assert!(r.distance.abs() <= 1e-12, "{}", r.distance);
        }
    }

    #[test]
    fn support_never_grows_and_runs_are_deterministic() {
        let pb = balanced_problem(12, 10, 6);
        let mut spar = SparConfig::iid(8 * 12, 77);
        spar.allow_empty_lines = true;
        let r1 = solve_spar_gw(&pb, &GroundCost::l2(), &cfg(), &spar).unwrap();
        let r2 = solve_spar_gw(&pb, &GroundCost::l2(), &cfg(), &spar).unwrap();
        assert_eq!(
            r1,
            GwResult {
                diagnostics: r1.diagnostics.clone(),
                ..r2.clone()
            }
        );
        assert_eq!(r1.distance.to_bits(), r2.distance.to_bits());
        let plan = balanced_plan(&pb, &spar).unwrap();
        assert!(r1.plan.count_nonzero() <= plan.distinct_len());
        match r1.plan.storage() {
            Storage::Sparse(s) => assert_eq!(**s.pattern(), **plan.pattern()),
            Storage::Dense(_) => panic!("expected sparse plan"),
        }
    }

    #[test]
    fn empty_sampled_row_is_infeasible_by_default() {
        let pb = balanced_problem(6, 6, 9);
        let p = gw_sampling_probabilities(&pb.a, &pb.b).unwrap();
        // a single draw cannot cover six rows
        let plan = draw_sample(&p, 1, SamplingMode::IidWithReplacement, 0).unwrap();
        let spar = SparConfig::iid(1, 0);
        let err = solve_spar_gw_with_plan(&pb, &GroundCost::l2(), &cfg(), &spar, &plan).unwrap_err();
        assert!(matches!(err, GwError::InfeasibleKernel { .. }));
    }

    #[test]
    fn literal_zero_rule_suppresses_exact_zero_costs() {
        let pb = two_point();
        let cfg = SolverConfig::new(Regularizer::ProximalKl, 0.01).with_iterations(20, 50);
        let masked = SparConfig::iid(4, 1);
        let mut literal = masked.clone();
        literal.zero_cost = ZeroCostRule::Literal;
        let base = solve_spar_gw(&pb, &GroundCost::l2(), &cfg, &masked).unwrap();
        // once off-diagonal mass underflows, the matched cells cost exactly 0
        match solve_spar_gw(&pb, &GroundCost::l2(), &cfg, &literal) {
            Ok(r) => assert!(r.distance > base.distance),
            Err(e) => assert!(matches!(e, GwError::InfeasibleKernel { .. }), "{e:?}"),
        }
    }

    #[test]
    fn paper_literal_weighting_ignores_duplicates() {
        let pb = balanced_problem(4, 4, 12);
        let p = gw_sampling_probabilities(&pb.a, &pb.b).unwrap();
        let plan = draw_sample(&p, 64, SamplingMode::IidWithReplacement, 5).unwrap();
        let counted = plan.kernel_weights(MultiplicityWeighting::Counted);
        let literal = plan.kernel_weights(MultiplicityWeighting::PaperLiteral);
        for ((k, _, _), (wc, wl)) in plan.pattern().iter().zip(counted.iter().zip(&literal)) {
            assert!((wc / wl - plan.multiplicities()[k] as f64).abs() < 1e-12);
        }
    }
}
