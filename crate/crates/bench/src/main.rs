use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::error;
use spargw::MassMode;
use spargw_bench::config::RegularizerName;
use spargw_bench::experiment::default_eps_grid;
use spargw_bench::io::{ingest_matrix, ingest_relation, ingest_weights, write_matrix, write_weights, Manifest};
use spargw_bench::{
    build_instance, error_sweep, pairwise_distances, run_experiment, similarity_matrix, BenchError, CostName,
    DatasetSpec, ExperimentConfig, Item, Method, MethodConfig, ModeName, Subsample, SweepVar,
};

#[derive(Parser)]
#[command(
    name = "spargw",
    version,
    about = "Gromov-Wasserstein solvers and experiment harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write its matrices as CSV.
    Gen(GenArgs),
    /// Run one method on one dataset across seeds.
    Run(RunArgs),
    /// Sweep n, s or eps and compare against the dense proximal oracle.
    Sweep(SweepArgs),
    /// Pairwise distance matrix over a collection of relation matrices.
    Pairwise(PairwiseArgs),
    /// Similarity matrix exp(-D / gamma) from a distance matrix.
    Similarity(SimilarityArgs),
}

#[derive(Args, Clone, Default)]
struct DatasetArgs {
    /// moon, graph, gaussian-mixture or spiral.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    noise: Option<f64>,
    /// Gaussian density weights with this bandwidth instead of uniform ones.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    cx: Option<PathBuf>,
    #[arg(long)]
    cy: Option<PathBuf>,
    #[arg(long)]
    a: Option<PathBuf>,
    #[arg(long)]
    b: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    source_mass: Option<f64>,
    #[arg(long)]
    target_mass: Option<f64>,
}

#[derive(Args, Clone, Default)]
struct SolverArgs {
    #[arg(long)]
    method: Option<String>,
    /// l1, l2 or kl.
    #[arg(long)]
    cost: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Subsample size, absolute or per point (`16n`).
    #[arg(long)]
    s: Option<String>,
    /// iid, poisson or full.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long = "R")]
    outer: Option<usize>,
    #[arg(long = "H")]
    inner: Option<usize>,
    /// entropic or proximal.
    #[arg(long)]
    regularizer: Option<String>,
    #[arg(long)]
    paper_literal_dedup: bool,
    #[arg(long)]
    zero_cost_literal: bool,
    #[arg(long)]
    allow_empty_support: bool,
    #[arg(long)]
    allow_naive_probabilities: bool,
    #[arg(long)]
    retries: Option<usize>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Comma-separated seeds or a half-open range `a..b`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// n, s or eps.
    #[arg(long)]
    var: String,
    /// Comma-separated ascending values; eps defaults to 1,0.1,0.01,0.001.
    #[arg(long)]
    values: Option<String>,
    /// Skip the dense oracle (timing-only sweeps).
    #[arg(long)]
    no_oracle: bool,
}

#[derive(Args)]
struct PairwiseArgs {
    #[arg(long, num_args = 2.., required = true)]
    relations: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    weights: Vec<PathBuf>,
    /// Node-feature matrices, one per relation, for fused methods.
    #[arg(long, num_args = 1..)]
    node_features: Vec<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimilarityArgs {
    #[arg(long)]
    distances: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_seeds(text: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        return Ok((a..b).collect());
    }
    text.split(',')
        .map(|t| t.trim().parse::<u64>().with_context(|| format!("invalid seed `{t}`")))
        .collect()
}

fn dataset_from_args(d: &DatasetArgs, current: Option<&DatasetSpec>) -> anyhow::Result<Option<DatasetSpec>> {
    if let (Some(cx), Some(cy)) = (&d.cx, &d.cy) {
        return Ok(Some(DatasetSpec::Files {
            cx: cx.clone(),
            cy: cy.clone(),
            a: d.a.clone(),
            b: d.b.clone(),
            features: d.features.clone(),
        }));
    }
    if d.cx.is_some() || d.cy.is_some() {
        bail!(BenchError::Config("--cx and --cy must be given together".into()));
    }
    let mut spec = match (&d.dataset, current) {
        (Some(name), _) => DatasetSpec::generator(name, d.n.unwrap_or(200), d.data_seed.unwrap_or(0))?,
        (None, Some(cur)) => cur.clone(),
        (None, None) => return Ok(None),
    };
    if let Some(n) = d.n {
        spec = spec.with_size(n)?;
    }
    match &mut spec {
        DatasetSpec::Moon { seed, noise, .. } => {
            if let Some(s) = d.data_seed {
                *seed = s;
            }
            if let Some(x) = d.noise {
                *noise = x;
            }
        }
        DatasetSpec::Graph { seed, .. }
        | DatasetSpec::GaussianMixture { seed, .. }
        | DatasetSpec::Spiral { seed, .. } => {
            if let Some(s) = d.data_seed {
                *seed = s;
            }
        }
        DatasetSpec::Files { .. } => {}
    }
    Ok(Some(spec))
}

fn apply_solver_args(mc: &mut MethodConfig, s: &SolverArgs) -> anyhow::Result<()> {
    if let Some(m) = &s.method {
        mc.method = m.parse::<Method>()?;
    }
    if let Some(c) = &s.cost {
        mc.cost = c.parse::<CostName>()?;
    }
    if let Some(x) = s.eps {
        mc.eps = x;
    }
    if s.lambda.is_some() {
        mc.lambda = s.lambda;
    }
    if s.alpha.is_some() {
        mc.alpha = s.alpha;
    }
    if let Some(x) = &s.s {
        mc.s = Some(x.parse::<Subsample>()?);
    }
    if let Some(x) = &s.mode {
        mc.mode = Some(x.parse::<ModeName>()?);
    }
    if let Some(x) = s.outer {
        mc.outer = x;
    }
    if let Some(x) = s.inner {
        mc.inner = x;
    }
    if let Some(x) = &s.regularizer {
        mc.regularizer = Some(x.parse::<RegularizerName>()?);
    }
    if let Some(x) = s.retries {
        mc.retries = x;
    }
    mc.paper_literal_dedup |= s.paper_literal_dedup;
    mc.zero_cost_literal |= s.zero_cost_literal;
    mc.allow_empty_support |= s.allow_empty_support;
    mc.allow_naive_probabilities |= s.allow_naive_probabilities;
    Ok(())
}

fn method_config(s: &SolverArgs) -> anyhow::Result<MethodConfig> {
    let method = s
        .method
        .as_deref()
        .ok_or_else(|| BenchError::Config("--method is required".into()))?
        .parse::<Method>()?;
    let mut mc = MethodConfig::new(method);
    apply_solver_args(&mut mc, s)?;
    Ok(mc)
}

fn experiment_config(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let mc = method_config(&args.solver)?;
            let data = dataset_from_args(&args.data, None)?
                .ok_or_else(|| BenchError::Config("a dataset (--dataset or --cx/--cy) is required".into()))?;
            ExperimentConfig::new(data, mc)
        }
    };
    if args.config.is_some() {
        apply_solver_args(&mut cfg.solver, &args.solver)?;
        if let Some(d) = dataset_from_args(&args.data, Some(&cfg.dataset))? {
            cfg.dataset = d;
        }
    }
    if args.data.bandwidth.is_some() {
        cfg.weights.bandwidth = args.data.bandwidth;
    }
    if let Some(m) = args.data.source_mass {
        cfg.weights.source_mass = m;
    }
    if let Some(m) = args.data.target_mass {
        cfg.weights.target_mass = m;
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = parse_seeds(s).map_err(|e| BenchError::Config(e.to_string()))?;
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

enum Outcome {
    Success,
    Partial,
}

fn gen(args: &GenArgs) -> anyhow::Result<Outcome> {
    let spec =
        dataset_from_args(&args.data, None)?.ok_or_else(|| BenchError::Config("--dataset is required".into()))?;
    let mut cfg = ExperimentConfig::new(spec.clone(), MethodConfig::new(Method::PgaGw));
    cfg.weights.bandwidth = args.data.bandwidth;
    cfg.validate()?;
    let inst = build_instance(&cfg)?;
    let out = &args.out;
    let mut manifest = Manifest::new(spec.name());
    manifest
        .parameters
        .insert("dataset".into(), serde_json::to_value(&spec)?);
    manifest
        .parameters
        .insert("weights".into(), serde_json::to_value(&cfg.weights)?);
    let write = |name: &str, m: &ndarray::Array2<f64>, manifest: &mut Manifest| -> anyhow::Result<()> {
        let p = out.join(name);
        write_matrix(&p, m)?;
        manifest.record_file(&p, m.dim());
        Ok(())
    };
    write("cx.csv", inst.problem.cx.entries(), &mut manifest)?;
    write("cy.csv", inst.problem.cy.entries(), &mut manifest)?;
    if let Some(f) = &inst.features {
        write("features.csv", f, &mut manifest)?;
    }
    for (name, w) in [("a.csv", &inst.problem.a), ("b.csv", &inst.problem.b)] {
        let p = out.join(name);
        write_weights(&p, w.as_slice())?;
        manifest.record_file(&p, (w.len(), 1));
    }
    manifest.write(&out.join("manifest.json"))?;
    println!("wrote {} to {}", spec.name(), out.display());
    Ok(Outcome::Success)
}

fn run(args: &RunArgs) -> anyhow::Result<Outcome> {
    let cfg = experiment_config(args)?;
    let out = run_experiment(&cfg)?;
    for r in &out.records {
        match (&r.distance, &r.error) {
            (Some(d), _) => println!("seed {:>6}  distance {d:.10e}  {:.3}s", r.seed, r.seconds),
            (None, Some(e)) => println!("seed {:>6}  error: {e}", r.seed),
            (None, None) => {}
        }
    }
    let s = &out.summary;
    println!(
        "{} runs, {} failed, mean {}, std {}, mean time {:.3}s",
        s.runs,
        s.failures,
        s.mean.map_or("n/a".into(), |m| format!("{m:.10e}")),
        s.std.map_or("n/a".into(), |m| format!("{m:.3e}")),
        s.mean_seconds
    );
    Ok(if s.failures > 0 {
        Outcome::Partial
    } else {
        Outcome::Success
    })
}

fn sweep(args: &SweepArgs) -> anyhow::Result<Outcome> {
    let cfg = experiment_config(&args.run)?;
    let var: SweepVar = args.var.parse()?;
    let values: Vec<String> = match &args.values {
        Some(v) => v.split(',').map(|t| t.trim().to_string()).collect(),
        None if var == SweepVar::Eps => {
            // the default grid runs from large to small; sweeps go ascending
            let mut g = default_eps_grid();
            g.reverse();
            g
        }
        None => bail!(BenchError::Config("--values is required".into())),
    };
    let rows = error_sweep(&cfg, var, &values, !args.no_oracle)?;
    let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.6e}"));
    for r in &rows {
        println!(
            "{:?}={:<8} error {} (std {})  time {:.3}s  failures {}",
            r.variable,
            r.value,
            fmt(r.mean_abs_error),
            fmt(r.std_abs_error),
            r.mean_seconds,
            r.failures
        );
    }
    let partial = rows
        .iter()
        .any(|r| r.failures > 0 || (!args.no_oracle && r.oracle.is_none()));
    Ok(if partial { Outcome::Partial } else { Outcome::Success })
}

fn pairwise(args: &PairwiseArgs) -> anyhow::Result<Outcome> {
    let mc = method_config(&args.solver)?;
    mc.validate()?;
    let n = args.relations.len();
    for (flag, list) in [("--weights", &args.weights), ("--node-features", &args.node_features)] {
        if !list.is_empty() && list.len() != n {
            bail!(BenchError::Config(format!("{flag} needs one file per relation")));
        }
    }
    let mode = if mc.method.is_unbalanced() {
        MassMode::Unbalanced
    } else {
        MassMode::Balanced
    };
    let mut items = Vec::with_capacity(n);
    for (k, path) in args.relations.iter().enumerate() {
        let rel = ingest_relation(path)?;
        let mut item = match args.weights.get(k) {
            Some(w) => Item::new(rel, ingest_weights(w, mode)?),
            None => Item::uniform(rel)?,
        };
        if let Some(f) = args.node_features.get(k) {
            item.features = Some(ingest_matrix(f)?);
        }
        items.push(item);
    }
    let d = pairwise_distances(&items, &mc, args.seed)?;
    write_matrix(&args.out, &d)?;
    let failed = d.iter().filter(|x| x.is_nan()).count() / 2;
    println!(
        "wrote {n}x{n} distances to {} ({failed} failed pairs)",
        args.out.display()
    );
    Ok(if failed > 0 { Outcome::Partial } else { Outcome::Success })
}

fn similarity(args: &SimilarityArgs) -> anyhow::Result<Outcome> {
    let d = ingest_matrix(&args.distances)?;
    let s = similarity_matrix(&d, args.gamma)?;
    write_matrix(&args.out, &s)?;
    println!("wrote similarity matrix to {}", args.out.display());
    Ok(Outcome::Success)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    spargw_bench::init_threads_from_env();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Pairwise(a) => pairwise(a),
        Command::Similarity(a) => similarity(a),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
