use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn metricfit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metricfit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = "[spec]\nn_pairs = 400\nn_train = 300\n[solver]\nmax_iters = 1500\n";

#[test]
fn gen_is_byte_identical_for_equal_seeds() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    for out in ["a", "b"] {
        ok(&metricfit(dir.path(), &["--config", "c.toml", "--seed", "7", "--out", out, "gen"]));
    }
    ok(&metricfit(dir.path(), &["--config", "c.toml", "--seed", "8", "--out", "c", "gen"]));
    for f in ["train.csv", "test.csv", "truth.json", "gen.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    assert_ne!(
        std::fs::read(dir.path().join("a/train.csv")).unwrap(),
        std::fs::read(dir.path().join("c/train.csv")).unwrap()
    );
    let info = json(dir.path().join("a/gen.json"));
    assert_eq!(info["seed"], 7);
    assert!((info["realized_mislabel"].as_f64().unwrap() - 0.10).abs() < 0.05);
    let train = std::fs::read_to_string(dir.path().join("a/train.csv")).unwrap();
    assert_eq!(train.lines().count(), 301);
    assert!(train.starts_with("z0,z1,z2,z3,z4,z5,z6,z7,z8,z9,label,clean_label\n"));
}

#[test]
fn gen_with_no_pairs_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", "[spec]\nn_pairs = 0\nn_train = 0\n");
    ok(&metricfit(dir.path(), &["--config", "c.toml", "gen"]));
    for f in ["out/train.csv", "out/test.csv"] {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert_eq!(text, "z0,z1,z2,z3,z4,z5,z6,z7,z8,z9,label,clean_label\n");
    }
}

#[test]
fn fit_then_eval_and_truncate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    ok(&metricfit(dir.path(), &["--config", "c.toml", "--out", "data", "gen"]));
    let fit_args = [
        "--config", "c.toml", "--out", "fit", "fit", "--train", "data/train.csv", "--test", "data/test.csv",
        "--truth", "data/truth.json",
    ];
    ok(&metricfit(dir.path(), &fit_args));
    let model_bytes = std::fs::read(dir.path().join("fit/model.json")).unwrap();
    let report = json(dir.path().join("fit/fit_report.json"));
    assert!(report["test_acc_clean"].as_f64().unwrap() > 0.8);
    assert!(report.get("wall_time").is_none());
    let history = std::fs::read_to_string(dir.path().join("fit/loss_history.csv")).unwrap();
    assert!(history.starts_with("iteration,loss\n0,"));
    let losses: Vec<f64> = history.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(losses.windows(2).all(|w| w[1] <= w[0] + 1e-6));

    // Refitting reproduces the model exactly.
    ok(&metricfit(dir.path(), &fit_args));
    assert_eq!(std::fs::read(dir.path().join("fit/model.json")).unwrap(), model_bytes);

    let eval = [
        "--out", "ev", "eval", "--model", "fit/model.json", "--data", "data/test.csv", "--train", "data/train.csv",
        "--truth", "data/truth.json",
    ];
    ok(&metricfit(dir.path(), &eval));
    let ev = json(dir.path().join("ev/eval.json"));
    for key in ["test_acc_noisy", "test_acc_clean", "train_acc_clean", "rel_spectral"] {
        assert_eq!(ev[key], report[key], "{key}");
    }

    let trunc = ["--out", "tr", "truncate", "--model", "fit/model.json", "--k", "10", "--data", "data/test.csv"];
    ok(&metricfit(dir.path(), &trunc));
    let t = json(dir.path().join("tr/truncate_k10.json"));
    assert_eq!(t["gamma"], 0.0);
    assert_eq!(t["before"], t["after"]);
    let before = json(dir.path().join("fit/model.json"));
    let after = json(dir.path().join("tr/model_k10.json"));
    assert_eq!(before["matrix"], after["matrix"]);
    assert_eq!(before["tau"], after["tau"]);

    let out = metricfit(dir.path(), &["truncate", "--model", "fit/model.json", "--k", "11"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn one_pair_fit_separates_its_pair() {
    let dir = tempfile::tempdir().unwrap();
    for (label, want) in [("1", 1), ("-1", -1)] {
        write(dir.path(), "one.csv", &format!("z0,z1,label\n0.6,-0.8,{label}\n"));
        ok(&metricfit(dir.path(), &["--out", "o", "fit", "--train", "one.csv", "--max-iters", "3000"]));
        let doc = json(dir.path().join("o/model.json"));
        let m: Vec<f64> = doc["matrix"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        let z = [0.6, -0.8];
        let q = m[0] * z[0] * z[0] + 2.0 * m[1] * z[0] * z[1] + m[3] * z[1] * z[1];
        let tau = doc["tau"].as_f64().unwrap();
        let predicted = if q >= tau { 1 } else { -1 };
        assert_eq!(predicted, want, "q = {q}, tau = {tau}");
        let report = json(dir.path().join("o/fit_report.json"));
        assert_eq!(report["train_acc_noisy"], 1.0);
    }
}

#[test]
fn normalized_fit_is_reported_in_original_units() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    ok(&metricfit(dir.path(), &["--config", "c.toml", "--out", "data", "gen"]));
    for mode in ["standardize", "whiten"] {
        let args = [
            "--config", "c.toml", "--normalize", mode, "--out", mode, "fit", "--train", "data/train.csv", "--test",
            "data/test.csv",
        ];
        ok(&metricfit(dir.path(), &args));
        let report = json(dir.path().join(mode).join("fit_report.json"));
        assert_eq!(report["normalize"], mode);
        let eval = [
            "--out", "ev", "eval", "--model", &format!("{mode}/model.json"), "--data", "data/test.csv", "--train",
            "data/train.csv",
        ];
        ok(&metricfit(dir.path(), &eval));
        let ev = json(dir.path().join("ev/eval.json"));
        assert_eq!(ev["test_acc_noisy"], report["test_acc_noisy"], "{mode}");
        assert_eq!(ev["train_acc_noisy"], report["train_acc_noisy"], "{mode}");
    }
}

#[test]
fn tabular_input_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = String::from("ax;ay;bx;by;same\n");
    for i in 0..40 {
        let t = i as f64 * 0.37;
        let (dx, dy) = (t.sin() * (1.0 + (i % 3) as f64), t.cos() * 0.5);
        let far = dx * dx + dy * dy > 1.0;
        rows.push_str(&format!("{dx};{dy};0;0;{}\n", if far { "far" } else { "close" }));
    }
    write(dir.path(), "pairs.csv", &rows);
    write(
        dir.path(),
        "c.toml",
        "[solver]\nmax_iters = 500\n[data]\ntrain = \"pairs.csv\"\n[data.tabular]\nlabel_column = \"same\"\n\
         delimiter = \";\"\npairs = { mode = \"difference\", x = [\"ax\", \"ay\"], y = [\"bx\", \"by\"] }\n",
    );
    ok(&metricfit(dir.path(), &["--config", "c.toml", "fit"]));
    let doc = json(dir.path().join("out/model.json"));
    assert_eq!(doc["dim"], 2);
}

#[test]
fn complexity_matches_independent_value() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--out", "cx", "complexity", "--eps", "0.1", "--delta", "0.05", "--dim", "10", "--zeta", "1", "--big-t", "2",
    ];
    let out = metricfit(dir.path(), &args);
    ok(&out);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let fixtures: Value = serde_json::from_str(
        &std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/scalars.json"))
            .unwrap(),
    )
    .unwrap();
    let want: f64 = fixtures["sample_complexity_d10"].as_str().unwrap().parse().unwrap();
    let got = v["sample_complexity"].as_f64().unwrap();
    assert!((got - want).abs() / want < 1e-10);
    let cover: f64 = fixtures["log_cover_d10"].as_str().unwrap().parse().unwrap();
    assert!((v["log_cover_size"].as_f64().unwrap() - cover).abs() / cover < 1e-10);
    assert_eq!(json(dir.path().join("cx/complexity.json")), v);
}

#[test]
fn experiment_grid_writes_sorted_tables_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "x.toml",
        "repetitions = 2\ntruncate_to = 5\n[spec]\nn_pairs = 500\nn_train = 400\n[solver]\nmax_iters = 300\n\
         [grid]\nnoises = [\"logistic\", \"label_flip\"]\ntargets = [0.1, 0.2]\n",
    );
    ok(&metricfit(dir.path(), &["--config", "x.toml", "--workers", "1", "--out", "one", "experiment"]));
    ok(&metricfit(dir.path(), &["--config", "x.toml", "--workers", "3", "--out", "three", "experiment"]));
    for f in ["runs.csv", "summary.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("one").join(f)).unwrap(),
            std::fs::read(dir.path().join("three").join(f)).unwrap(),
            "{f}"
        );
    }
    let runs = std::fs::read_to_string(dir.path().join("one/runs.csv")).unwrap();
    let body: Vec<&str> = runs.lines().skip(1).collect();
    assert_eq!(body.len(), 8);
    let keys: Vec<(usize, usize)> = body
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[4].parse().unwrap())
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert!(body.iter().all(|l| l.split(',').nth(6) == Some("ok")));
    let summary = std::fs::read_to_string(dir.path().join("one/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn failed_cells_are_tagged_and_the_run_continues() {
    let dir = tempfile::tempdir().unwrap();
    // Huge margins leave a 49% target out of reach for the norm-noise cell only.
    write(
        dir.path(),
        "x.toml",
        "[spec]\nn_pairs = 200\nn_train = 100\ntau_star = 1e5\n[solver]\nmax_iters = 50\n\
         [grid]\nnoises = [\"logistic\", \"label_flip\"]\ntargets = [0.49]\n",
    );
    ok(&metricfit(dir.path(), &["--config", "x.toml", "experiment"]));
    let runs = std::fs::read_to_string(dir.path().join("out/runs.csv")).unwrap();
    let rows: Vec<&str> = runs.lines().skip(1).collect();
    assert!(rows[0].contains("error:infeasible"));
    assert!(rows[1].contains(",ok,"));
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    ok(&metricfit(dir.path(), &["--config", "c.toml", "--out", "data", "gen"]));

    write(dir.path(), "bad.toml", "repetitions = 0\n");
    assert_eq!(metricfit(dir.path(), &["--config", "bad.toml", "experiment"]).status.code(), Some(2));
    write(dir.path(), "typo.toml", "repetitons = 2\n");
    assert_eq!(metricfit(dir.path(), &["--config", "typo.toml", "gen"]).status.code(), Some(2));
    assert_eq!(metricfit(dir.path(), &["fit", "--train", "missing.csv"]).status.code(), Some(3));
    write(dir.path(), "labels.csv", "z0,label\n1.0,7\n");
    assert_eq!(metricfit(dir.path(), &["fit", "--train", "labels.csv"]).status.code(), Some(3));

    write(dir.path(), "div.toml", "[solver]\nlearning_rate = 1e6\nmax_restarts = 0\nmax_iters = 200\n");
    let out = metricfit(dir.path(), &["--config", "div.toml", "fit", "--train", "data/train.csv"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    write(
        dir.path(),
        "inf.toml",
        "[spec]\nn_pairs = 100\nn_train = 50\ntau_star = 1e5\nregime = { kind = \"norm_noise\", noise = \"logistic\", target = 0.49 }\n",
    );
    assert_eq!(metricfit(dir.path(), &["--config", "inf.toml", "gen"]).status.code(), Some(5));
}
