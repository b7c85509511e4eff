//! End-to-end command tests against the built binary, on synthetic data.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binq() -> Command {
    Command::new(env!("CARGO_BIN_EXE_binq"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("binq-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_synth_config(dir: &Path, out_name: &str) -> PathBuf {
    let path = dir.join("config.toml");
    let text = format!(
        r#"
[experiment]
output_dir = "{}"
seed = 42

[model]
layer_sizes = [8, 16, 4]

[train]
learning_rate = 0.1
batch_size = 16
epochs = 20

[data]
kind = "synthetic"
examples = 800
test_examples = 400
dims = 8
classes = 4
separation = 6.0

[[sweep.grid]]
layers = [1]
s_values = [2, 4]
k_values = [4, 8, 16]
binary = false
"#,
        dir.join(out_name).display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn train_reaches_low_error_on_separable_synth() {
    let dir = workdir("train-baseline");
    let config = write_synth_config(&dir, "out");
    run_ok(binq().arg("train").arg("--config").arg(&config));

    let summary = read_json(&dir.join("out/train_summary.json"));
    let err = summary["test_error"].as_f64().unwrap();
    assert!(err <= 0.02, "baseline synth error {err}");
    assert!(dir.join("out/model.bqm").exists());
    assert!(dir.join("out/trace.csv").exists());
}

#[test]
fn rerun_is_byte_identical() {
    let dir = workdir("determinism");
    let config = write_synth_config(&dir, "out");
    run_ok(binq().arg("train").arg("--config").arg(&config));
    let model_a = std::fs::read(dir.join("out/model.bqm")).unwrap();
    let trace_a = std::fs::read(dir.join("out/trace.csv")).unwrap();
    let summary_a = std::fs::read(dir.join("out/train_summary.json")).unwrap();

    run_ok(binq().arg("train").arg("--config").arg(&config));
    assert_eq!(model_a, std::fs::read(dir.join("out/model.bqm")).unwrap());
    assert_eq!(trace_a, std::fs::read(dir.join("out/trace.csv")).unwrap());
    assert_eq!(
        summary_a,
        std::fs::read(dir.join("out/train_summary.json")).unwrap()
    );

    run_ok(binq().arg("sweep").arg("--config").arg(&config));
    let sweep_a = std::fs::read(dir.join("out/sweep.csv")).unwrap();
    run_ok(binq().arg("sweep").arg("--config").arg(&config));
    assert_eq!(sweep_a, std::fs::read(dir.join("out/sweep.csv")).unwrap());
}

#[test]
fn invalid_regularized_layer_fails_before_training() {
    let dir = workdir("invalid-layer");
    let config = write_synth_config(&dir, "out");
    let out = binq()
        .arg("train")
        .arg("--config")
        .arg(&config)
        .arg("--regularized-layers")
        .arg("9")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.join("out/model.bqm").exists(), "no artifact on config error");
}

#[test]
fn binarize_with_empty_layer_set_is_identity() {
    let dir = workdir("binarize-noop");
    let config = write_synth_config(&dir, "out");
    run_ok(binq().arg("train").arg("--config").arg(&config));
    run_ok(
        binq()
            .arg("binarize")
            .arg("--config")
            .arg(&config)
            .arg("--model")
            .arg(dir.join("out/model.bqm"))
            .arg("--output")
            .arg(dir.join("out/noop.bqm")),
    );
    assert_eq!(
        std::fs::read(dir.join("out/model.bqm")).unwrap(),
        std::fs::read(dir.join("out/noop.bqm")).unwrap()
    );
}

#[test]
fn hardening_everything_unregularized_destroys_accuracy() {
    let dir = workdir("binarize-all");
    let config = write_synth_config(&dir, "out");
    run_ok(binq().arg("train").arg("--config").arg(&config));
    run_ok(
        binq()
            .arg("binarize")
            .arg("--config")
            .arg(&config)
            .arg("--model")
            .arg(dir.join("out/model.bqm"))
            .arg("--layers")
            .arg("0,1")
            .arg("--output")
            .arg(dir.join("out/hard.bqm")),
    );
    let summary = read_json(&dir.join("out/binarize_summary.json"));
    let before = summary["test_error_before"].as_f64().unwrap();
    let after = summary["test_error_after"].as_f64().unwrap();
    assert!(
        after - before > 0.10,
        "hardening an unregularized net should cost > 10pp: {before} -> {after}"
    );
}

#[test]
fn compress_reports_formula_rate_and_warns_on_non_binary_layers() {
    let dir = workdir("compress");
    let config = write_synth_config(&dir, "out");
    run_ok(binq().arg("train").arg("--config").arg(&config));
    run_ok(
        binq()
            .arg("compress")
            .arg("--config")
            .arg(&config)
            .arg("--model")
            .arg(dir.join("out/model.bqm"))
            .arg("--layers")
            .arg("1")
            .arg("--segments")
            .arg("2")
            .arg("--clusters")
            .arg("4")
            .arg("--binary")
            .arg("--output")
            .arg(dir.join("out/comp.bqm")),
    );
    let summary = read_json(&dir.join("out/compress_summary.json"));
    // Binary-codebook formula for layer 1 (16x4, s=2, k=4):
    // 32mn / (kn + log2(k) m s) = 2048 / (16 + 64) = 25.6.
    let formula = summary["per_layer"][1]["formula_rate"].as_f64().unwrap();
    assert!((formula - 25.6).abs() < 1e-9, "formula rate {formula}");
    let measured = summary["per_layer"][1]["measured_rate"].as_f64().unwrap();
    assert!((measured - formula).abs() < 1e-9);
    // The trained layer is nowhere near binary, so the warning fires.
    assert!(!summary["binary_warnings"].as_array().unwrap().is_empty());
}

#[test]
fn lossless_compression_keeps_error_identical() {
    // k >= rows per segment makes k-means exact, so the compressed model
    // scores identically.
    let dir = workdir("compress-lossless");
    let config = write_synth_config(&dir, "out");
    run_ok(binq().arg("train").arg("--config").arg(&config));
    run_ok(
        binq()
            .arg("compress")
            .arg("--config")
            .arg(&config)
            .arg("--model")
            .arg(dir.join("out/model.bqm"))
            .arg("--layers")
            .arg("1")
            .arg("--segments")
            .arg("2")
            .arg("--clusters")
            .arg("16")
            .arg("--output")
            .arg(dir.join("out/lossless.bqm")),
    );
    let train_summary = read_json(&dir.join("out/train_summary.json"));
    let compress_summary = read_json(&dir.join("out/compress_summary.json"));
    assert_eq!(
        train_summary["test_error"].as_f64().unwrap(),
        compress_summary["test_error"].as_f64().unwrap()
    );
}

#[test]
fn sweep_emits_baseline_plus_grid_with_monotone_rates() {
    let dir = workdir("sweep");
    let config = write_synth_config(&dir, "out");
    run_ok(binq().arg("train").arg("--config").arg(&config));
    run_ok(binq().arg("sweep").arg("--config").arg(&config));

    let csv = std::fs::read_to_string(dir.join("out/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    // header + baseline + 2 s-values x 3 k-values.
    assert_eq!(lines.len(), 1 + 1 + 6, "csv:\n{csv}");
    assert!(lines[1].starts_with("baseline,"));
    let baselines = lines.iter().filter(|l| l.starts_with("baseline,")).count();
    assert_eq!(baselines, 1);

    let sweep = read_json(&dir.join("out/sweep_summary.json"));
    let rows = sweep["rows"].as_array().unwrap();

    // Baseline row error equals cmd_train's reported error exactly.
    let train_summary = read_json(&dir.join("out/train_summary.json"));
    assert_eq!(
        rows[0]["test_error"].as_f64().unwrap(),
        train_summary["test_error"].as_f64().unwrap()
    );

    // Rates strictly decrease along k at fixed s.
    for s in [2, 4] {
        let rates: Vec<f64> = rows[1..]
            .iter()
            .filter(|r| r["s"].as_u64() == Some(s))
            .map(|r| r["measured_rate"].as_f64().unwrap())
            .collect();
        assert_eq!(rates.len(), 3);
        assert!(rates[0] > rates[1] && rates[1] > rates[2], "rates {rates:?}");
    }
}

#[test]
fn eval_runs_on_dense_and_quantized_models() {
    let dir = workdir("eval");
    let config = write_synth_config(&dir, "out");
    run_ok(binq().arg("train").arg("--config").arg(&config));
    run_ok(
        binq()
            .arg("compress")
            .arg("--config")
            .arg(&config)
            .arg("--model")
            .arg(dir.join("out/model.bqm"))
            .arg("--layers")
            .arg("1")
            .arg("--segments")
            .arg("2")
            .arg("--clusters")
            .arg("4")
            .arg("--output")
            .arg(dir.join("out/comp.bqm")),
    );
    for model in ["out/model.bqm", "out/comp.bqm"] {
        let out = run_ok(
            binq()
                .arg("eval")
                .arg("--config")
                .arg(&config)
                .arg("--model")
                .arg(dir.join(model)),
        );
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("test error:"), "stdout: {text}");
    }
    let summary = read_json(&dir.join("out/eval_summary.json"));
    let err = summary["test_error"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&err));
}

#[test]
fn inspect_emits_json_summary() {
    let dir = workdir("inspect");
    let config = write_synth_config(&dir, "out");
    run_ok(binq().arg("train").arg("--config").arg(&config));
    let out = run_ok(
        binq()
            .arg("inspect")
            .arg("--model")
            .arg(dir.join("out/model.bqm"))
            .arg("--json"),
    );
    let summary: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("inspect --json emits valid JSON");
    assert_eq!(summary["layers"].as_array().unwrap().len(), 2);
    assert_eq!(summary["whole_model_measured_rate"].as_f64(), Some(1.0));
}

#[test]
fn corrupt_model_file_is_a_runtime_error() {
    let dir = workdir("corrupt");
    let config = write_synth_config(&dir, "out");
    run_ok(binq().arg("train").arg("--config").arg(&config));
    let mut bytes = std::fs::read(dir.join("out/model.bqm")).unwrap();
    bytes.truncate(bytes.len() / 2);
    std::fs::write(dir.join("out/bad.bqm"), &bytes).unwrap();
    let out = binq()
        .arg("eval")
        .arg("--config")
        .arg(&config)
        .arg("--model")
        .arg(dir.join("out/bad.bqm"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
