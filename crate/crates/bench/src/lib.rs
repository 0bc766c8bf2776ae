//! Experiment harness for the `spargw` solvers: configuration, dataset
//! construction, per-seed runs, parameter sweeps against the dense oracle,
//! and pairwise distance matrices.

pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod pairwise;
pub mod record;

pub use config::{CostName, DatasetSpec, ExperimentConfig, Method, MethodConfig, ModeName, Subsample, WeightScheme};
pub use error::{BenchError, Result};
pub use experiment::{
    build_instance, error_sweep, run_experiment, solve_once, ExperimentOutput, Instance, SweepRow, SweepVar,
};
pub use pairwise::{pairwise_distances, similarity_matrix, Item};
pub use record::{RunRecord, Summary};

/// Caps the global rayon pool from `SPARGW_THREADS`. Later calls are no-ops.
pub fn init_threads_from_env() {
    if let Some(n) = std::env::var("SPARGW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}
