//! Experiment driver: builds instances, runs a method across seeds, and
//! sweeps one parameter against the dense proximal oracle.

use std::path::Path;

use log::{info, warn};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spargw::datagen::{
    euclidean_relation, gaussian_weights, gen_gaussian_mixture, gen_moon, gen_powerlaw_graph, gen_spiral, GraphSpec,
    PointCloud,
};
use spargw::spar::{solve_spar_fgw, solve_spar_gw, solve_spar_ugw};
use spargw::{solve_fgw_dense, solve_gw_dense, solve_ugw_dense, Distribution, GwError, GwResult, MassMode, Problem};

use crate::config::{DatasetSpec, ExperimentConfig, MethodConfig, Subsample, WeightScheme};
use crate::error::{BenchError, Result};
use crate::io::{ingest_matrix, ingest_relation, ingest_weights};
use crate::record::{append_all, format_trace, mean_std, summarize, RunRecord, Summary};

/// A problem plus the optional feature cost used by fused methods.
#[derive(Clone, Debug)]
pub struct Instance {
    pub problem: Problem,
    pub features: Option<Array2<f64>>,
}

fn squared_distances(x: &PointCloud, y: &PointCloud) -> Option<Array2<f64>> {
    if x.dim() != y.dim() {
        return None;
    }
    let (px, py) = (x.points(), y.points());
    Some(Array2::from_shape_fn((x.len(), y.len()), |(i, j)| {
        px.row(i)
            .iter()
            .zip(py.row(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }))
}

fn degree_gap(gx: &GraphSpec, gy: &GraphSpec) -> Array2<f64> {
    let (dx, dy) = (gx.degrees(), gy.degrees());
    Array2::from_shape_fn((gx.n, gy.n), |(i, j)| (dx[i] as f64 - dy[j] as f64).abs())
}

fn weights_for(
    cloud: Option<&PointCloud>,
    n: usize,
    scheme: &WeightScheme,
    mass: f64,
    unbalanced: bool,
) -> Result<Distribution> {
    let base = match (scheme.bandwidth, cloud) {
        (Some(bw), Some(c)) => gaussian_weights(c, bw)?,
        (Some(_), None) => return Err(BenchError::Config("gaussian weights need a point cloud dataset".into())),
        (None, _) => Distribution::uniform(n)?,
    };
    if unbalanced {
        Ok(Distribution::unbalanced(base.weights() * mass)?)
    } else {
        Ok(base)
    }
}

/// Materializes the dataset. Generated relations are Euclidean distances for
/// point clouds and 0/1 adjacency for graphs.
pub fn build_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    let unbalanced = cfg.solver.method.is_unbalanced();
    let w = &cfg.weights;
    let clouds = |src: PointCloud, tgt: PointCloud| -> Result<Instance> {
        let a = weights_for(Some(&src), src.len(), w, w.source_mass, unbalanced)?;
        let b = weights_for(Some(&tgt), tgt.len(), w, w.target_mass, unbalanced)?;
        let problem = Problem::new(a, b, euclidean_relation(&src), euclidean_relation(&tgt))?;
        Ok(Instance {
            problem,
            features: squared_distances(&src, &tgt),
        })
    };
    match &cfg.dataset {
        DatasetSpec::Moon { n, seed, noise } => {
            let (s, t) = gen_moon(*n, *seed, *noise)?;
            clouds(s, t)
        }
        DatasetSpec::Spiral { n, seed } => {
            let (s, t) = gen_spiral(*n, *seed)?;
            clouds(s, t)
        }
        DatasetSpec::GaussianMixture { n, seed } => {
            let (s, t) = gen_gaussian_mixture(*n, *seed)?;
            clouds(s, t)
        }
        DatasetSpec::Graph { n, seed } => {
            let gx = gen_powerlaw_graph(*n, *seed)?;
            let gy = gen_powerlaw_graph(*n, seed.wrapping_add(1))?;
            let a = weights_for(None, *n, w, w.source_mass, unbalanced)?;
            let b = weights_for(None, *n, w, w.target_mass, unbalanced)?;
            let problem = Problem::new(a, b, gx.adjacency(), gy.adjacency())?;
            Ok(Instance {
                problem,
                features: Some(degree_gap(&gx, &gy)),
            })
        }
        DatasetSpec::Files { cx, cy, a, b, features } => {
            let cx = ingest_relation(cx)?;
            let cy = ingest_relation(cy)?;
            let mode = if unbalanced {
                MassMode::Unbalanced
            } else {
                MassMode::Balanced
            };
            let load = |p: &Option<std::path::PathBuf>, n: usize, mass: f64| -> Result<Distribution> {
                match p {
                    Some(p) => ingest_weights(p, mode),
                    None => weights_for(None, n, w, mass, unbalanced),
                }
            };
            let a = load(a, cx.size(), w.source_mass)?;
            let b = load(b, cy.size(), w.target_mass)?;
            let problem = Problem::new(a, b, cx, cy).map_err(|e| BenchError::Validation(e.to_string()))?;
            let features = features.as_deref().map(ingest_matrix).transpose()?;
            Ok(Instance { problem, features })
        }
    }
}

/// One solver call, no retries.
pub fn solve_once(instance: &Instance, mc: &MethodConfig, seed: u64) -> std::result::Result<GwResult, GwError> {
    let pb = &instance.problem;
    let cost = mc.cost.ground_cost();
    let cfg = mc.solver_config();
    let size = pb.m().max(pb.n());
    let spar = mc.spar_config(size, seed);
    let features = || {
        instance
            .features
            .as_ref()
            .ok_or_else(|| GwError::InvalidConfig("fused method needs a feature cost".into()))
    };
    let alpha = mc.alpha.unwrap_or(1.0);
    let lambda = mc.lambda.unwrap_or(1.0);
    use crate::config::Method::*;
    match mc.method {
        Egw | PgaGw => solve_gw_dense(pb, &cost, &cfg),
        SparGw => solve_spar_gw(pb, &cost, &cfg, &spar),
        Fgw => solve_fgw_dense(pb, features()?, &cost, alpha, &cfg),
        SparFgw => solve_spar_fgw(pb, features()?, &cost, alpha, &cfg, &spar),
        Eugw | PgaUgw => solve_ugw_dense(pb, &cost, lambda, &cfg),
        SparUgw => solve_spar_ugw(pb, &cost, lambda, &cfg, &spar),
    }
}

/// Seed used for retry `attempt` (0 is the requested seed).
pub fn retry_seed(seed: u64, attempt: usize) -> u64 {
    seed.wrapping_add((attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Solves with bounded fresh-seed retries when a sampled kernel is infeasible.
pub fn solve_with_retries(
    instance: &Instance,
    mc: &MethodConfig,
    seed: u64,
) -> (std::result::Result<GwResult, GwError>, usize) {
    let max_attempts = if mc.method.is_sparse() { mc.retries + 1 } else { 1 };
    let mut attempt = 0;
    loop {
        let result = solve_once(instance, mc, retry_seed(seed, attempt));
        attempt += 1;
        match result {
            Err(GwError::InfeasibleKernel { .. }) if attempt < max_attempts => {
                warn!(
                    "seed {seed}: infeasible sampled kernel, retrying ({attempt}/{})",
                    mc.retries
                );
            }
            other => return (other, attempt),
        }
    }
}

pub fn to_record(
    hash: &str,
    mc: &MethodConfig,
    seed: u64,
    outcome: (std::result::Result<GwResult, GwError>, usize),
) -> RunRecord {
    let (result, attempts) = outcome;
    match result {
        Ok(r) => RunRecord {
            config_hash: hash.to_string(),
            method: mc.method.to_string(),
            seed,
            attempts,
            distance: Some(r.distance),
            seconds: r.diagnostics.wall_time.as_secs_f64(),
            peak_bytes: r.diagnostics.peak_matrix_bytes,
            outer_rounds: r.diagnostics.outer_rounds,
            objective_trace: format_trace(&r.diagnostics.objective_trace),
            error: None,
        },
        Err(e) => RunRecord {
            config_hash: hash.to_string(),
            method: mc.method.to_string(),
            seed,
            attempts,
            distance: None,
            seconds: 0.0,
            peak_bytes: 0,
            outer_rounds: 0,
            objective_trace: String::new(),
            error: Some(e.to_string()),
        },
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
}

impl ExperimentOutput {
    pub fn failures(&self) -> usize {
        self.summary.failures
    }
}

fn run_seeds(instance: &Instance, mc: &MethodConfig, hash: &str, seeds: &[u64]) -> Vec<RunRecord> {
    seeds
        .par_iter()
        .map(|&seed| to_record(hash, mc, seed, solve_with_retries(instance, mc, seed)))
        .collect()
}

/// Runs one method on one dataset across all seeds. Writes `runs.csv` and
/// `summary.csv` under `cfg.out` when set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let instance = build_instance(cfg)?;
    let hash = cfg.config_hash();
    info!(
        "{} on {} ({} seeds), config {hash}",
        cfg.solver.method,
        cfg.dataset.name(),
        cfg.seeds.len()
    );
    let records = run_seeds(&instance, &cfg.solver, &hash, &cfg.seeds);
    let summary = summarize(&records);
    if let Some(out) = &cfg.out {
        write_outputs(out, cfg, &records, &summary)?;
    }
    Ok(ExperimentOutput { records, summary })
}

fn write_outputs(out: &Path, cfg: &ExperimentConfig, records: &[RunRecord], summary: &Summary) -> Result<()> {
    append_all(&out.join("runs.csv"), records)?;
    append_all(&out.join("summary.csv"), std::slice::from_ref(summary))?;
    let text = serde_json::to_string_pretty(cfg)?;
    std::fs::write(out.join(format!("config-{}.json", summary.config_hash)), text).map_err(|e| BenchError::io(out, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVar {
    N,
    S,
    Eps,
}

impl std::str::FromStr for SweepVar {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(SweepVar::N),
            "s" => Ok(SweepVar::S),
            "eps" => Ok(SweepVar::Eps),
            _ => Err(BenchError::Config(format!("unknown sweep variable `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variable: SweepVar,
    pub value: String,
    /// Numeric value after resolving `16n`-style sizes.
    pub resolved: f64,
    pub oracle: Option<f64>,
    pub mean_abs_error: Option<f64>,
    pub std_abs_error: Option<f64>,
    pub mean_estimate: Option<f64>,
    pub mean_seconds: f64,
    pub runs: usize,
    pub failures: usize,
}

pub fn default_eps_grid() -> Vec<String> {
    ["1", "0.1", "0.01", "0.001"].iter().map(|s| s.to_string()).collect()
}

/// Applies one sweep value to a copy of the base config; returns its numeric value.
fn apply(base: &ExperimentConfig, var: SweepVar, value: &str) -> Result<(ExperimentConfig, f64)> {
    let mut cfg = base.clone();
    let bad = || BenchError::Config(format!("invalid {var:?} sweep value `{value}`"));
    let resolved = match var {
        SweepVar::N => {
            let n: usize = value.trim().parse().map_err(|_| bad())?;
            cfg.dataset = base.dataset.with_size(n)?;
            n as f64
        }
        SweepVar::Eps => {
            let e: f64 = value.trim().parse().map_err(|_| bad())?;
            cfg.solver.eps = e;
            e
        }
        SweepVar::S => {
            let s: Subsample = value.parse()?;
            cfg.solver.s = Some(s);
            let n = base
                .dataset
                .size()
                .ok_or_else(|| BenchError::Config("s sweeps need a generated dataset".into()))?;
            s.resolve(n) as f64
        }
    };
    Ok((cfg, resolved))
}

/// For each value: one dense oracle solve (when `with_oracle`) and the target
/// method across the base seeds. Raw runs go to `runs.csv`, the table to
/// `sweep.csv` under `base.out`.
pub fn error_sweep(
    base: &ExperimentConfig,
    var: SweepVar,
    values: &[String],
    with_oracle: bool,
) -> Result<Vec<SweepRow>> {
    base.validate()?;
    if values.is_empty() {
        return Err(BenchError::Config("sweep needs at least one value".into()));
    }
    if var == SweepVar::S && !base.solver.method.is_sparse() {
        return Err(BenchError::Config("s sweeps need a spar-* method".into()));
    }
    let cells: Vec<(ExperimentConfig, f64)> = values.iter().map(|v| apply(base, var, v)).collect::<Result<_>>()?;
    if cells.windows(2).any(|w| w[1].1 < w[0].1) {
        return Err(BenchError::Config("sweep values must be sorted ascending".into()));
    }
    let mut rows = Vec::with_capacity(cells.len());
    for ((cfg, resolved), value) in cells.iter().zip(values) {
        cfg.validate()?;
        let instance = build_instance(cfg)?;
        let oracle = if with_oracle {
            let oc = cfg.solver.oracle();
            match solve_once(&instance, &oc, 0) {
                Ok(r) => Some(r.distance),
                Err(e) => {
                    warn!("{var:?}={value}: oracle failed: {e}");
                    None
                }
            }
        } else {
            None
        };
        let hash = cfg.config_hash();
        let records = run_seeds(&instance, &cfg.solver, &hash, &cfg.seeds);
        let estimates: Vec<f64> = records.iter().filter_map(|r| r.distance).collect();
        let errors: Vec<f64> = oracle.map_or_else(Vec::new, |o| estimates.iter().map(|e| (e - o).abs()).collect());
        let err_stats = mean_std(&errors);
        let summary = summarize(&records);
        if let Some(out) = &cfg.out {
            append_all(&out.join("runs.csv"), &records)?;
        }
        rows.push(SweepRow {
            variable: var,
            value: value.clone(),
            resolved: *resolved,
            oracle,
            mean_abs_error: err_stats.map(|s| s.0),
            std_abs_error: err_stats.map(|s| s.1),
            mean_estimate: summary.mean,
            mean_seconds: summary.mean_seconds,
            runs: summary.runs,
            failures: summary.failures,
        });
    }
    if let Some(out) = &base.out {
        append_all(&out.join("sweep.csv"), &rows)?;
    }
    Ok(rows)
}
