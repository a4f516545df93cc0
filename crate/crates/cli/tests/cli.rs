use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mitet::env::TabularMdp;
use mitet::policy::SoftmaxPqcPolicy;
use mitet::trainer::TrainConfig;
use mitet_cli::commands::SweepReport;
use mitet_cli::runlog::{self, RunSummary};
use mitet_cli::suite::ExperimentSuite;
use tempfile::TempDir;

fn mitet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mitet"))
        .args(args)
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.json");
    fs::write(
        &path,
        r#"{"n_layers": 2, "batch_size": 4, "max_batches": 12, "seed": 5}"#,
    )
    .unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_valid_svg(path: &Path, polylines: usize) {
    let text = fs::read_to_string(path).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let count = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
    assert_eq!(count, polylines, "{}", path.display());
}

#[test]
fn missing_config_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let out = mitet(&[
        "train",
        "--config",
        s(&tmp.path().join("absent.json")),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.json"));
    assert!(!tmp.path().join("run.csv").exists());
}

#[test]
fn malformed_or_invalid_config_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let unknown = tmp.path().join("unknown.json");
    fs::write(&unknown, r#"{"n_layerz": 2}"#).unwrap();
    let invalid = tmp.path().join("invalid.json");
    fs::write(&invalid, r#"{"gamma": 1.5}"#).unwrap();
    for config in [&unknown, &invalid] {
        let out = mitet(&["train", "--config", s(config), "--out", s(&tmp.path().join("o"))]);
        assert_eq!(out.status.code(), Some(2));
    }
}

#[test]
fn train_writes_every_artifact() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path());
    let out_dir = tmp.path().join("run");
    let out = mitet(&["train", "--config", s(&config), "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(out_dir.join("run.csv")).unwrap();
    let golden =
        fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/run_header.csv"))
            .unwrap();
    assert_eq!(csv.lines().next().unwrap(), golden.trim_end());
    assert_eq!(csv.lines().count(), 13);
    let rows = runlog::read_csv(&out_dir.join("run.csv")).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.batch).collect::<Vec<_>>(),
        (0..12).collect::<Vec<_>>()
    );

    let summary: RunSummary =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.batches, 12);
    assert_eq!(summary.episodes, 48);
    assert_eq!(summary.seed, 5);

    let resolved: TrainConfig =
        serde_json::from_str(&fs::read_to_string(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved.n_layers, 2);
    assert_eq!(resolved.max_batches, 12);

    let checkpoint = fs::read_to_string(out_dir.join("checkpoint.txt")).unwrap();
    let policy = SoftmaxPqcPolicy::from_checkpoint(&checkpoint).unwrap();
    assert_eq!(policy.to_checkpoint(), checkpoint);
    assert_eq!(policy.spec().n_layers(), 2);

    for name in [
        "rewards.svg",
        "mi_entropy.svg",
        "gradient_bound.svg",
        "expressivity_bound.svg",
    ] {
        assert_valid_svg(&out_dir.join(name), 2);
    }
}

#[test]
fn overrides_apply_and_reruns_are_identical() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path());
    let run = |name: &str, seed: &str| {
        let dir = tmp.path().join(name);
        let out = mitet(&[
            "train",
            "--config",
            s(&config),
            "--out",
            s(&dir),
            "--seed",
            seed,
            "--layers",
            "1",
            "--bins",
            "7",
        ]);
        assert!(out.status.success());
        dir
    };
    let (a, b, c) = (run("a", "9"), run("b", "9"), run("c", "10"));
    for file in [
        "run.csv",
        "summary.json",
        "config.json",
        "checkpoint.txt",
        "rewards.svg",
    ] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    assert_ne!(
        fs::read(a.join("run.csv")).unwrap(),
        fs::read(c.join("run.csv")).unwrap()
    );
    let resolved: TrainConfig =
        serde_json::from_str(&fs::read_to_string(a.join("config.json")).unwrap()).unwrap();
    assert_eq!((resolved.seed, resolved.n_layers, resolved.bins), (9, 1, 7));
}

#[test]
fn bin_sweep_contracts() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path());
    let dir = tmp.path().join("sweep");
    let out = mitet(&[
        "bin-sweep",
        "--config",
        s(&config),
        "--out",
        s(&dir),
        "--bins",
        "1,2,10,50",
    ]);
    assert!(out.status.success());
    let report: SweepReport =
        serde_json::from_str(&fs::read_to_string(dir.join("sweep.json")).unwrap()).unwrap();
    let mi: Vec<f64> = report.points.iter().map(|p| p.mi_tet_proxy).collect();
    assert_eq!(mi[0], 0.0);
    assert!(mi[1] <= mi[2] + 1e-12 && mi[2] <= mi[3] + 1e-12, "{mi:?}");
    assert_valid_svg(&dir.join("bin_sweep.svg"), 1);
    let csv = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "bins,mi_tet_proxy,bin_width");
    assert_eq!(csv.lines().count(), 5);

    for bad in ["", "0", "3,x"] {
        let out = mitet(&[
            "bin-sweep",
            "--config",
            s(&config),
            "--out",
            s(&dir),
            "--bins",
            bad,
        ]);
        assert_eq!(out.status.code(), Some(2), "--bins {bad:?}");
    }
}

#[test]
fn theorems_contracts() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty");
    let out = mitet(&["theorems", "--out", s(&empty), "--instances", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(empty.join("theorems.json")).unwrap()).unwrap();
    assert_eq!(report["violations"], 0);
    assert_eq!(report["mdp"].as_array().unwrap().len(), 0);
    assert!(!empty.join("tightest_mdp.json").exists());

    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = mitet(&["theorems", "--out", s(dir), "--instances", "60", "--seed", "4"]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(
        fs::read(a.join("theorems.json")).unwrap(),
        fs::read(b.join("theorems.json")).unwrap()
    );
    // the saved instance parses back as an MDP and can be audited on its own
    let tightest = a.join("tightest_mdp.json");
    let mdp: TabularMdp = serde_json::from_str(&fs::read_to_string(&tightest).unwrap()).unwrap();
    assert!(mdp.horizon() >= 1);
    let c = tmp.path().join("c");
    let out = mitet(&[
        "theorems",
        "--out",
        s(&c),
        "--instances",
        "0",
        "--config",
        s(&tightest),
        "--bins",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let supplied: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(c.join("supplied_mdp.json")).unwrap()).unwrap();
    assert!(supplied["gradient_agreement"].as_f64().unwrap() < 1e-9);

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"n_states": 1}"#).unwrap();
    let out = mitet(&[
        "theorems",
        "--out",
        s(&c),
        "--instances",
        "0",
        "--config",
        s(&bad),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_handles_several_runs_and_bad_inputs() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path());
    let mut runs = Vec::new();
    for layers in ["1", "2", "3"] {
        let dir = tmp.path().join(format!("layers{layers}"));
        assert!(mitet(&[
            "train",
            "--config",
            s(&config),
            "--out",
            s(&dir),
            "--layers",
            layers
        ])
        .status
        .success());
        runs.push(dir);
    }
    let broken = tmp.path().join("broken");
    fs::create_dir_all(&broken).unwrap();
    fs::write(broken.join("run.csv"), "batch,reward\n0,1\n").unwrap();

    let out_dir = tmp.path().join("report");
    let mut args = vec!["report", "--out", s(&out_dir)];
    args.extend(runs.iter().map(|r| s(r)));
    args.push(s(&broken));
    let out = mitet(&args);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken"));
    assert_valid_svg(&out_dir.join("architecture_mi.svg"), 3);
    assert_valid_svg(&out_dir.join("learning_curves.svg"), 3);
    for run in ["layers1", "layers2", "layers3"] {
        assert_valid_svg(&out_dir.join(run).join("gradient_bound.svg"), 2);
    }
    let correlations: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("correlations.json")).unwrap()).unwrap();
    assert_eq!(correlations.as_array().unwrap().len(), 3);
    let csv = fs::read_to_string(out_dir.join("correlations.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 7);

    // scaled shading only needs the CSV
    fs::remove_file(runs[0].join("summary.json")).unwrap();
    let scaled = tmp.path().join("scaled");
    let out = mitet(&["report", "--out", s(&scaled), "--scaled", s(&runs[0])]);
    assert_eq!(out.status.code(), Some(0));
    assert_valid_svg(&scaled.join("layers1").join("expressivity_bound.svg"), 2);

    let out = mitet(&["report", "--out", s(&scaled), s(&broken)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn preset_files_match_the_standard_suite() {
    let suite = ExperimentSuite::standard();
    suite.validate().unwrap();
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (name, config) in &suite.configs {
        let text = fs::read_to_string(root.join(format!("{name}.json"))).unwrap();
        let parsed: TrainConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(&parsed, config, "{name}");
    }
    let mut dup = suite.clone();
    dup.configs.push(dup.configs[0].clone());
    assert!(dup.validate().is_err());
}
