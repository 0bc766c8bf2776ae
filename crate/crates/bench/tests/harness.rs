use ndarray::Array2;
use spargw::datagen::gen_powerlaw_graph;
use spargw::Distribution;
use spargw_bench::experiment::{solve_once, Instance};
use spargw_bench::io::{ingest_matrix, ingest_relation, write_matrix};
use spargw_bench::pairwise::pair_instance;
use spargw_bench::record::{mean_std, read_rows};
use spargw_bench::{
    error_sweep, pairwise_distances, run_experiment, DatasetSpec, ExperimentConfig, Item, Method, MethodConfig,
    RunRecord, Summary, SweepVar,
};

fn moon(n: usize) -> DatasetSpec {
    DatasetSpec::generator("moon", n, 0).unwrap()
}

fn small_cfg(method: Method) -> MethodConfig {
    let mut mc = MethodConfig::new(method);
    mc.eps = 0.05;
    mc.outer = 5;
    mc.inner = 30;
    mc
}

#[test]
fn spar_gw_writes_one_row_per_seed_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut mc = small_cfg(Method::SparGw);
    mc.allow_empty_support = true;
    let mut cfg = ExperimentConfig::new(moon(40), mc);
    cfg.seeds = (0..10).collect();
    cfg.out = Some(dir.path().to_path_buf());
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.records.len(), 10);
    let rows: Vec<RunRecord> = read_rows(&dir.path().join("runs.csv")).unwrap();
    assert_eq!(rows, out.records);
    let summary: Vec<Summary> = read_rows(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 1);
    let values: Vec<f64> = rows.iter().filter_map(|r| r.distance).collect();
    let (mean, std) = mean_std(&values).unwrap();
    assert!((summary[0].mean.unwrap() - mean).abs() <= 1e-12);
    assert!((summary[0].std.unwrap() - std).abs() <= 1e-12);
}

#[test]
fn dense_method_is_seed_independent() {
    let mut cfg = ExperimentConfig::new(moon(30), small_cfg(Method::PgaGw));
    cfg.seeds = vec![0, 1, 2];
    let out = run_experiment(&cfg).unwrap();
    let d: Vec<u64> = out.records.iter().map(|r| r.distance.unwrap().to_bits()).collect();
    assert_eq!(d.len(), 3);
    assert!(d.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn invalid_pairing_fails_before_running() {
    let mut mc = small_cfg(Method::SparUgw);
    mc.lambda = Some(1.0);
    mc.alpha = Some(0.5);
    let cfg = ExperimentConfig::new(moon(30), mc);
    assert!(matches!(run_experiment(&cfg), Err(spargw_bench::BenchError::Config(_))));
}

#[test]
fn solver_errors_are_recorded_per_seed() {
    // KL needs strictly positive relations; Euclidean ones have a zero diagonal
    let mut mc = small_cfg(Method::PgaGw);
    mc.cost = spargw_bench::CostName::Kl;
    let mut cfg = ExperimentConfig::new(moon(10), mc);
    cfg.seeds = vec![0, 1];
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.failures(), 2);
    assert!(out.records.iter().all(|r| r.error.is_some() && r.distance.is_none()));
}

#[test]
fn single_value_sweep_matches_run_summary() {
    let mut mc = small_cfg(Method::SparGw);
    mc.allow_empty_support = true;
    let mut cfg = ExperimentConfig::new(moon(30), mc);
    cfg.seeds = vec![3, 4, 5];
    let rows = error_sweep(&cfg, SweepVar::S, &["8n".to_string()], true).unwrap();
    assert_eq!(rows.len(), 1);
    let mut direct = cfg.clone();
    direct.solver.s = Some("8n".parse().unwrap());
    let run = run_experiment(&direct).unwrap();
    assert_eq!(rows[0].mean_estimate, run.summary.mean);
    assert_eq!(rows[0].resolved, 240.0);
    let oracle = rows[0].oracle.unwrap();
    let errs: Vec<f64> = run
        .records
        .iter()
        .map(|r| (r.distance.unwrap() - oracle).abs())
        .collect();
    assert!((mean_std(&errs).unwrap().0 - rows[0].mean_abs_error.unwrap()).abs() <= 1e-12);
}

#[test]
fn sweep_rejects_descending_values() {
    let mut cfg = ExperimentConfig::new(moon(30), small_cfg(Method::SparGw));
    cfg.seeds = vec![0];
    let values = ["16n".to_string(), "4n".to_string()];
    assert!(error_sweep(&cfg, SweepVar::S, &values, false).is_err());
}

#[test]
fn sweep_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(moon(20), small_cfg(Method::PgaGw));
    cfg.out = Some(dir.path().to_path_buf());
    let rows = error_sweep(&cfg, SweepVar::N, &["10".to_string(), "20".to_string()], true).unwrap();
    let back: Vec<spargw_bench::SweepRow> = read_rows(&dir.path().join("sweep.csv")).unwrap();
    assert_eq!(back, rows);
    // the dense method is its own oracle
    assert!(rows.iter().all(|r| r.mean_abs_error == Some(0.0)));
}

fn graph_item(n: usize, seed: u64) -> Item {
    Item::uniform(gen_powerlaw_graph(n, seed).unwrap().adjacency()).unwrap()
}

#[test]
fn identical_graphs_are_close() {
    let g = graph_item(12, 1);
    let mut mc = small_cfg(Method::PgaGw);
    mc.eps = 0.01;
    mc.outer = 20;
    mc.inner = 100;
    let d = pairwise_distances(&[g.clone(), g], &mc, 0).unwrap();
    assert_eq!(d[[0, 0]], 0.0);
    assert!(d[[0, 1]] <= 1e-3, "{}", d[[0, 1]]);
}

#[test]
fn pairwise_entries_match_single_runs_and_are_order_free() {
    let items: Vec<Item> = (0..4).map(|s| graph_item(8 + s as usize, 10 + s)).collect();
    let mc = small_cfg(Method::PgaGw);
    let d = pairwise_distances(&items, &mc, 0).unwrap();
    for i in 0..4 {
        assert_eq!(d[[i, i]], 0.0);
        for j in 0..4 {
            assert_eq!(d[[i, j]].to_bits(), d[[j, i]].to_bits());
        }
    }
    // compare with a standalone run oriented the same way
    for (i, j) in [(0, 1), (1, 3), (0, 2)] {
        let (x, y) = if items[i].fingerprint() <= items[j].fingerprint() {
            (i, j)
        } else {
            (j, i)
        };
        let inst: Instance = pair_instance(&items[x], &items[y], &mc).unwrap();
        let direct = solve_once(&inst, &mc, 0).unwrap().distance;
        assert_eq!(direct.to_bits(), d[[i, j]].to_bits());
    }
    let perm = [2, 0, 3, 1];
    let shuffled: Vec<Item> = perm.iter().map(|&k| items[k].clone()).collect();
    let dp = pairwise_distances(&shuffled, &mc, 0).unwrap();
    for a in 0..4 {
        for b in 0..4 {
            assert!((dp[[a, b]] - d[[perm[a], perm[b]]]).abs() <= 1e-9);
        }
    }
}

#[test]
fn sparse_pairwise_is_order_free_too() {
    let items: Vec<Item> = (0..3).map(|s| graph_item(10, 30 + s)).collect();
    let mut mc = small_cfg(Method::SparGw);
    mc.allow_empty_support = true;
    let d = pairwise_distances(&items, &mc, 9).unwrap();
    let rev: Vec<Item> = items.iter().rev().cloned().collect();
    let dr = pairwise_distances(&rev, &mc, 9).unwrap();
    for a in 0..3 {
        for b in 0..3 {
            assert!((dr[[a, b]] - d[[2 - a, 2 - b]]).abs() <= 1e-9);
        }
    }
}

#[test]
fn adjacency_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen_powerlaw_graph(25, 4).unwrap().adjacency();
    let p = dir.path().join("adj.csv");
    write_matrix(&p, g.entries()).unwrap();
    let back = ingest_relation(&p).unwrap();
    assert_eq!(back.entries(), g.entries());
    let d: Array2<f64> = ingest_matrix(&p).unwrap();
    assert_eq!(d.dim(), (25, 25));
}

#[test]
fn file_datasets_run() {
    let dir = tempfile::tempdir().unwrap();
    let cx = gen_powerlaw_graph(9, 1).unwrap().adjacency();
    let cy = gen_powerlaw_graph(9, 2).unwrap().adjacency();
    write_matrix(&dir.path().join("cx.csv"), cx.entries()).unwrap();
    write_matrix(&dir.path().join("cy.csv"), cy.entries()).unwrap();
    let w = Distribution::uniform(9).unwrap();
    spargw_bench::io::write_weights(&dir.path().join("a.csv"), w.as_slice()).unwrap();
    let spec = DatasetSpec::Files {
        cx: dir.path().join("cx.csv"),
        cy: dir.path().join("cy.csv"),
        a: Some(dir.path().join("a.csv")),
        b: None,
        features: None,
    };
    let out = run_experiment(&ExperimentConfig::new(spec, small_cfg(Method::Egw))).unwrap();
    assert_eq!(out.failures(), 0);
}
