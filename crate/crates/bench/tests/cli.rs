use std::path::Path;
use std::process::Command;

fn spargw() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spargw"))
}

fn run(cmd: &mut Command) -> (i32, String) {
    let out = cmd.output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_run_and_pairwise_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (code, text) = run(spargw().args(["gen", "--dataset", "graph", "--n", "12", "--out", path(&d.join("g"))]));
    assert_eq!(code, 0, "{text}");
    for f in ["cx.csv", "cy.csv", "a.csv", "b.csv", "manifest.json"] {
        assert!(d.join("g").join(f).exists(), "{f}");
    }
    let (code, text) = run(spargw().args([
        "run",
        "--cx",
        path(&d.join("g/cx.csv")),
        "--cy",
        path(&d.join("g/cy.csv")),
        "--method",
        "spar-gw",
        "--s",
        "8n",
        "--allow-empty-support",
        "--seeds",
        "0..3",
        "--R",
        "5",
        "--H",
        "20",
        "--out",
        path(&d.join("runs")),
    ]));
    assert_eq!(code, 0, "{text}");
    assert!(d.join("runs/runs.csv").exists());
    let (code, text) = run(spargw().args([
        "pairwise",
        "--relations",
        path(&d.join("g/cx.csv")),
        path(&d.join("g/cy.csv")),
        path(&d.join("g/cx.csv")),
        "--method",
        "pga-gw",
        "--R",
        "5",
        "--out",
        path(&d.join("D.csv")),
    ]));
    assert_eq!(code, 0, "{text}");
    let (code, text) = run(spargw().args([
        "similarity",
        "--distances",
        path(&d.join("D.csv")),
        "--gamma",
        "0.5",
        "--out",
        path(&d.join("S.csv")),
    ]));
    assert_eq!(code, 0, "{text}");
    let s = std::fs::read_to_string(d.join("S.csv")).unwrap();
    assert_eq!(s.lines().count(), 3);
}

#[test]
fn config_errors_exit_with_one() {
    let (code, _) = run(spargw().args([
        "run",
        "--dataset",
        "moon",
        "--n",
        "10",
        "--method",
        "spar-ugw",
        "--lambda",
        "1",
        "--alpha",
        "0.5",
    ]));
    assert_eq!(code, 1);
    let (code, _) = run(spargw().args(["run", "--dataset", "moon", "--method", "nope"]));
    assert_eq!(code, 1);
    let (code, _) = run(spargw().args([
        "similarity",
        "--distances",
        "/nonexistent.csv",
        "--gamma",
        "1",
        "--out",
        "/tmp/x.csv",
    ]));
    assert_eq!(code, 1);
}

#[test]
fn partial_failures_exit_with_two() {
    let (code, text) = run(spargw().args([
        "run",
        "--dataset",
        "moon",
        "--n",
        "10",
        "--method",
        "pga-gw",
        "--cost",
        "kl",
        "--R",
        "2",
    ]));
    assert_eq!(code, 2, "{text}");
}

#[test]
fn json_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(
        &cfg,
        r#"{"dataset": {"kind": "spiral", "n": 20}, "method": "pga-gw", "eps": 0.5, "R": 3, "H": 10, "seeds": [0]}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let (code, text) = run(spargw().args(["run", "--config", path(&cfg), "--eps", "0.2", "--out", path(&out)]));
    assert_eq!(code, 0, "{text}");
    let written = std::fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.file_name().to_string_lossy().starts_with("config-"))
        .unwrap();
    let text = std::fs::read_to_string(written.path()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["eps"], 0.2);
    assert_eq!(v["R"], 3);
}

#[test]
fn thread_cap_does_not_change_results() {
    let args = [
        "run",
        "--dataset",
        "moon",
        "--n",
        "30",
        "--method",
        "spar-gw",
        "--allow-empty-support",
        "--seeds",
        "0,1",
        "--R",
        "4",
    ];
    let (c1, t1) = run(spargw().env("SPARGW_THREADS", "1").args(args));
    let (c4, t4) = run(spargw().env("SPARGW_THREADS", "4").args(args));
    assert_eq!((c1, c4), (0, 0));
    let strip = |t: &str| {
        t.lines()
            .map(|l| l.split("  ").take(2).collect::<Vec<_>>().join(" "))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&t1), strip(&t4));
}
