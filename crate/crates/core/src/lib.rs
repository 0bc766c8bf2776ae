//! Gromov-Wasserstein distances between measured relation spaces: dense
//! reference solvers and importance-sparsified estimators.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contraction;
pub mod datagen;
pub mod dense;
pub mod error;
pub mod sinkhorn;
pub mod spar;
pub mod sparse;
pub mod types;

pub use contraction::{
    contract_decomposable, contract_dense, contract_naive, contract_rank_one, contract_sparse, CostMatrixResult,
    Provenance,
};
pub use dense::{solve_fgw_dense, solve_gw_dense, solve_ugw_dense, Diagnostics, GwResult, Regularizer, SolverConfig};
pub use error::{Axis, GwError, Result};
pub use sinkhorn::{sinkhorn_balanced, sinkhorn_unbalanced, SinkhornOptions};
pub use spar::{
    solve_spar_fgw, solve_spar_gw, solve_spar_ugw, MultiplicityWeighting, SamplingMode, SamplingPlan, SparConfig,
    ZeroCostRule,
};
pub use sparse::{SparseMatrix, SparsePattern};
pub use types::{
    validate_problem, CostKind, CouplingPlan, Distribution, GroundCost, KernelMatrix, MassMode, Problem,
    RelationMatrix, Storage,
};
