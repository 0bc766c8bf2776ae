//! Importance-sparsified solvers: Spar-GW, Spar-FGW and Spar-UGW.
//!
//! A probability matrix over coupling cells is built from the marginals, a
//! support `S` is drawn from it once, and every outer round works on `S`
//! alone: the cost contraction costs `O(|S|^2)` and Sinkhorn `O(H |S|)`.

mod sampling;
mod solvers;

pub use sampling::{
    draw_sample, gw_sampling_probabilities, sparsify_kernel_poisson, ugw_sampling_probabilities,
    validate_probabilities, MultiplicityWeighting, SamplingMode, SamplingPlan, NAIVE_PROBABILITY_LIMIT,
};
pub use solvers::{
    default_subsample, solve_spar_fgw, solve_spar_fgw_with_plan, solve_spar_gw, solve_spar_gw_with_plan,
    solve_spar_ugw, solve_spar_ugw_with_plan, SparConfig, ZeroCostRule,
};
