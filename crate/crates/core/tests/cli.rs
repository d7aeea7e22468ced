//! The `wdgnn` binary end to end on a tiny scenario.

use std::path::Path;
use std::process::{Command, Output};

use wdgnn::experiment::{ExperimentManifest, MANIFEST_FILE};

const TINY: &[&str] = &[
    "--seed",
    "5",
    "--agents",
    "6",
    "--duration",
    "0.3",
    "--train",
    "3",
    "--valid",
    "1",
    "--test",
    "2",
    "--hidden",
    "4",
    "--order",
    "1",
    "--epochs",
    "1",
];

fn wdgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wdgnn")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = wdgnn(args);
    assert!(
        out.status.success(),
        "wdgnn {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn with_tiny<'a>(cmd: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd, "--out", out];
    v.extend_from_slice(TINY);
    v.extend_from_slice(extra);
    v
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_status_1() {
    assert_eq!(wdgnn(&["--help"]).status.code(), Some(0));
    assert_eq!(wdgnn(&["--version"]).status.code(), Some(0));
    assert_eq!(wdgnn(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(wdgnn(&["gen-data"]).status.code(), Some(1), "missing --out");

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"flocking": {"n_agent": 3}}"#).unwrap();
    let res = wdgnn(&["gen-data", "--out", s(&out), "--config", s(&cfg)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("n_agent"));

    let res = wdgnn(&["gen-data", "--out", s(&out), "--agents", "0"]);
    assert_eq!(res.status.code(), Some(1));
    let res = wdgnn(&["sweep", "--out", s(&out), "--axis", "temperature"]);
    assert_eq!(res.status.code(), Some(1));
    let res = wdgnn(&[
        "online",
        "--out",
        s(&out),
        "--dataset",
        "/nonexistent",
        "--checkpoint",
        "/nonexistent",
    ]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn config_file_and_flags_layer_over_the_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"flocking": {"n_agents": 7, "duration": 0.2}, "dataset": {"train": 2}}"#,
    )
    .unwrap();
    let out = dir.path().join("data");
    run_ok(&[
        "gen-data",
        "--out",
        s(&out),
        "--config",
        s(&cfg),
        "--duration",
        "0.1",
        "--valid",
        "1",
        "--test",
        "1",
    ]);
    let m = ExperimentManifest::read(&out).unwrap();
    let c = &m.config;
    assert_eq!(c.flocking.n_agents, 7, "file overrides the default");
    assert_eq!(c.flocking.duration, 0.1, "flag overrides the file");
    assert_eq!((c.dataset.train, c.dataset.valid, c.dataset.test), (2, 1, 1));
    assert_eq!(c.model.hidden, 32, "untouched keys keep the default");
}

#[test]
fn pipeline_writes_every_artifact_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    let ckpt = root.join("ckpt");
    let eval = root.join("eval");
    let online = root.join("online");

    let gen = run_ok(&with_tiny("gen-data", s(&data), &[]));
    assert!(String::from_utf8_lossy(&gen.stdout).contains("6 trajectories"));
    let files: Vec<_> = std::fs::read_dir(&data)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    // 6 trajectories, the dataset manifest and the run manifest.
    assert_eq!(files.len(), 8, "{files:?}");

    run_ok(&with_tiny("train", s(&ckpt), &["--dataset", s(&data)]));
    for f in ["wdgnn.json", "gnn.json", "filter.json", "wdgnn_loss.csv", MANIFEST_FILE] {
        assert!(ckpt.join(f).exists(), "{f}");
    }
    let loss = std::fs::read_to_string(ckpt.join("wdgnn_loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 2, "header and one epoch:\n{loss}");

    run_ok(&with_tiny(
        "eval",
        s(&eval),
        &["--dataset", s(&data), "--checkpoints", s(&ckpt)],
    ));
    let table = std::fs::read_to_string(eval.join("eval.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        rows,
        [
            "optimal",
            "wdgnn",
            "wdgnn+centralized",
            "wdgnn+decentralized",
            "gnn",
            "filter"
        ]
    );
    let rollouts = std::fs::read_to_string(eval.join("eval_rollouts.csv")).unwrap();
    assert_eq!(rollouts.lines().count(), 1 + 6 * 2);

    let wd = ckpt.join("wdgnn.json");
    run_ok(&with_tiny(
        "online",
        s(&online),
        &["--dataset", s(&data), "--checkpoint", s(&wd), "--mode", "decentralized"],
    ));
    assert!(online.join("online_0000.csv").exists() && online.join("online_0001.csv").exists());

    // A second pipeline with the same settings gives the same bytes.
    let data2 = root.join("data2");
    let ckpt2 = root.join("ckpt2");
    run_ok(&with_tiny("gen-data", s(&data2), &[]));
    run_ok(&with_tiny("train", s(&ckpt2), &["--dataset", s(&data2)]));
    for (a, b) in [(&data, &data2), (&ckpt, &ckpt2)] {
        for entry in std::fs::read_dir(a).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(
                std::fs::read(a.join(&name)).unwrap(),
                std::fs::read(b.join(&name)).unwrap(),
                "{name:?} differs"
            );
        }
    }

    // Evaluation needs all three checkpoints.
    std::fs::remove_file(ckpt.join("gnn.json")).unwrap();
    let res = wdgnn(&with_tiny(
        "eval",
        s(&root.join("e2")),
        &["--dataset", s(&data), "--checkpoints", s(&ckpt)],
    ));
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn sweep_reports_ratios_against_the_expert() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let res = run_ok(&with_tiny("sweep", s(&out), &["--axis", "agents", "--values", "4,6"]));
    assert!(String::from_utf8_lossy(&res.stdout).contains("spearman"));
    let csv = std::fs::read_to_string(out.join("sweep_agents.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    for line in &lines[1..] {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[4], 1.0, "the expert's own ratio");
        assert!(cols[5] > 0.0 && cols[6] > 0.0);
    }
}

#[test]
fn verify_theorem_passes_and_writes_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("thm");
    run_ok(&["verify-theorem", "--out", s(&out), "--problems", "5", "--steps", "200"]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("theorem.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"]["violations"], 0);
    assert_eq!(summary["holds"], true);
}
