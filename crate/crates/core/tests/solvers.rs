//! Cross-module properties: every solver against its oracle, marginal
//! feasibility, determinism and support preservation.

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spargw::spar::{draw_sample, gw_sampling_probabilities, solve_spar_gw_with_plan};
use spargw::{
    solve_fgw_dense, solve_gw_dense, solve_spar_fgw, solve_spar_gw, solve_spar_ugw, solve_ugw_dense, Distribution,
    GroundCost, Problem, Regularizer, RelationMatrix, SamplingMode, SolverConfig, SparConfig, Storage,
};

fn relation(n: usize, rng: &mut ChaCha8Rng) -> RelationMatrix {
    let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
    RelationMatrix::new(Array2::from_shape_fn((n, n), |(i, j)| {
        ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt()
    }))
    .unwrap()
}

fn instance(m: usize, n: usize, seed: u64, balanced: bool) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cx = relation(m, &mut rng);
    let cy = relation(n, &mut rng);
    let wa = Array1::from_shape_fn(m, |_| rng.random_range(0.2..1.0));
    let wb = Array1::from_shape_fn(n, |_| rng.random_range(0.2..1.0));
    let (a, b) = if balanced {
        (
            Distribution::normalized(wa).unwrap(),
            Distribution::normalized(wb).unwrap(),
        )
    } else {
        (
            Distribution::unbalanced(wa).unwrap(),
            Distribution::unbalanced(wb).unwrap(),
        )
    };
    Problem::new(a, b, cx, cy).unwrap()
}

fn features(m: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    Array2::from_shape_fn((m, n), |_| rng.random_range(0.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn full_sampling_reproduces_dense_solvers(m in 1usize..=8, n in 1usize..=8, seed in 0u64..1000, l1 in any::<bool>()) {
        let cost = if l1 { GroundCost::l1() } else { GroundCost::l2() };
        let cfg = SolverConfig::new(Regularizer::ProximalKl, 0.05).with_iterations(5, 30);
        let pb = instance(m, n, seed, true);
        let d = solve_gw_dense(&pb, &cost, &cfg).unwrap();
        let s = solve_spar_gw(&pb, &cost, &cfg, &SparConfig::full()).unwrap();
        prop_assert!((d.distance - s.distance).abs() <= 1e-12);
        let f = features(m, n, seed);
        let d = solve_fgw_dense(&pb, &f, &cost, 0.4, &cfg).unwrap();
        let s = solve_spar_fgw(&pb, &f, &cost, 0.4, &cfg, &SparConfig::full()).unwrap();
        prop_assert!((d.distance - s.distance).abs() <= 1e-12);
        let ub = instance(m, n, seed, false);
        let d = solve_ugw_dense(&ub, &cost, 0.7, &cfg).unwrap();
        let s = solve_spar_ugw(&ub, &cost, 0.7, &cfg, &SparConfig::full()).unwrap();
        prop_assert!((d.distance - s.distance).abs() <= 1e-9);
    }

    #[test]
    fn balanced_plans_satisfy_marginals(m in 2usize..=10, n in 2usize..=10, seed in 0u64..1000) {
        let cfg = SolverConfig::new(Regularizer::ProximalKl, 0.1).with_iterations(4, 200);
        let pb = instance(m, n, seed, true);
        let cost = GroundCost::l2();
        let dense = solve_gw_dense(&pb, &cost, &cfg).unwrap();
        prop_assert!(dense.plan.marginal_residual(&pb.a, &pb.b) <= 1e-6);
        let entropic = SolverConfig { regularizer: Regularizer::Entropic, ..cfg.clone() };
        let e = solve_gw_dense(&pb, &cost, &entropic).unwrap();
        prop_assert!(e.plan.marginal_residual(&pb.a, &pb.b) <= 1e-6);
        let mut spar = SparConfig::iid(m * n * 4, seed);
        spar.mode = SamplingMode::Poisson;
        // a saturated Poisson draw covers every line
        let s = solve_spar_gw(&pb, &cost, &cfg, &spar).unwrap();
        prop_assert!(s.plan.marginal_residual(&pb.a, &pb.b) <= 1e-6);
    }

    #[test]
    fn spar_runs_are_deterministic_and_sparse(seed in 0u64..500) {
        let pb = instance(9, 7, seed, true);
        let cfg = SolverConfig::new(Regularizer::ProximalKl, 0.05).with_iterations(4, 20);
        let mut spar = SparConfig::iid(6 * 9, seed);
        spar.allow_empty_lines = true;
        let r1 = solve_spar_gw(&pb, &GroundCost::l2(), &cfg, &spar).unwrap();
        let r2 = solve_spar_gw(&pb, &GroundCost::l2(), &cfg, &spar).unwrap();
        prop_assert_eq!(r1.distance.to_bits(), r2.distance.to_bits());
        prop_assert_eq!(&r1.plan, &r2.plan);
        let plan = draw_sample(&gw_sampling_probabilities(&pb.a, &pb.b).unwrap(), spar.subsample, spar.mode, seed).unwrap();
        prop_assert!(r1.plan.count_nonzero() <= plan.distinct_len());
        let again = solve_spar_gw_with_plan(&pb, &GroundCost::l2(), &cfg, &spar, &plan).unwrap();
        prop_assert_eq!(again.distance.to_bits(), r1.distance.to_bits());
    }
}

#[test]
fn ugw_plans_keep_their_support() {
    let pb = instance(10, 10, 3, false);
    let cfg = SolverConfig::new(Regularizer::ProximalKl, 0.1).with_iterations(5, 30);
    let mut spar = SparConfig::iid(80, 4);
    spar.allow_empty_lines = true;
    let r = solve_spar_ugw(&pb, &GroundCost::l2(), 1.0, &cfg, &spar).unwrap();
    match r.plan.storage() {
        Storage::Sparse(s) => assert!(s.pattern().nnz() <= 80),
        Storage::Dense(_) => panic!("sparse solver returned a dense plan"),
    }
    assert!(r.distance.is_finite());
    assert_eq!(r.diagnostics.objective_trace.len(), 6);
}

#[test]
fn proximal_objective_settles_on_random_instances() {
    // the objective trace of the dense proximal solver should end lower than it starts
    for seed in 0..5 {
        let pb = instance(12, 12, seed, true);
        let cfg = SolverConfig::new(Regularizer::ProximalKl, 0.05).with_iterations(15, 100);
        let r = solve_gw_dense(&pb, &GroundCost::l2(), &cfg).unwrap();
        let t = &r.diagnostics.objective_trace;
        assert!(t.last().unwrap() <= &(t[0] + 1e-12), "{t:?}");
    }
}
