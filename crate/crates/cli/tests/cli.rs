//! Command-line behavior: flags, exit codes, output contracts.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ifedavg"))
}

fn run(args: &[&str]) -> (String, String, i32) {
    let out = bin().args(args).output().expect("spawn ifedavg");
    (
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
        out.status.code().unwrap_or(-1),
    )
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ifedavg-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_fixture_csv(path: &Path, clients: usize, rows_per_client: usize) {
    use std::fmt::Write as _;
    let mut text = String::from("client,target,f0,f1,f2\n");
    let mut state = 123456789u64;
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 33) as f64) / (1u64 << 30) as f64 - 1.0
    };
    for c in 0..clients {
        for _ in 0..rows_per_client {
            let (a, b, d) = (next(), next(), next());
            let y = u32::from(a + b + d > 0.0);
            writeln!(text, "site{c},{y},{a:.4},{b:.4},{d:.4}").unwrap();
        }
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn unknown_algorithm_is_a_usage_error() {
    let dir = scratch("badalgo");
    let csv = dir.join("d.csv");
    write_fixture_csv(&csv, 2, 120);
    let (_, stderr, code) = run(&["train", "--dataset", csv.to_str().unwrap(), "--algorithm", "sgd"]);
    assert_eq!(code, 2);
    assert!(stderr.starts_with("error:"), "{stderr}");
    assert_eq!(stderr.lines().count(), 1, "single-line error expected: {stderr}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let (_, stderr, code) = run(&["train", "--algorithm", "fedavg"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("no dataset"), "{stderr}");
}

#[test]
fn unreadable_dataset_fails_with_single_line_error() {
    let (_, stderr, code) = run(&["train", "--dataset", "/nonexistent/x.csv"]);
    assert_eq!(code, 2);
    assert_eq!(stderr.lines().count(), 1);
}

#[test]
fn zero_rounds_emits_untrained_metrics_and_exits_zero() {
    let dir = scratch("rounds0");
    let csv = dir.join("d.csv");
    write_fixture_csv(&csv, 2, 150);
    let out = dir.join("out");
    let (stdout, stderr, code) = run(&[
        "train",
        "--dataset",
        csv.to_str().unwrap(),
        "--algorithm",
        "fedavg",
        "--rounds",
        "0",
        "--seeds",
        "8273",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("summary "));
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3, "header + 2 clients: {metrics}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn train_writes_artifacts_under_seed_and_algorithm() {
    let dir = scratch("layout");
    let csv = dir.join("d.csv");
    write_fixture_csv(&csv, 2, 140);
    let out = dir.join("out");
    let (_, stderr, code) = run(&[
        "train",
        "--dataset",
        csv.to_str().unwrap(),
        "--algorithm",
        "ifedavg",
        "--rounds",
        "2",
        "--seeds",
        "8273",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stderr}");
    let run_dir = out.join("8273").join("ifedavg");
    for file in ["metrics.csv", "shared_model.txt", "personal_b_in.csv", "personal_w_in.csv"] {
        assert!(run_dir.join(file).exists(), "missing {file}");
    }
    assert!(out.join("manifest.txt").exists());
    assert!(out.join("summary.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_file_sets_defaults_and_flags_override() {
    let dir = scratch("config");
    let csv = dir.join("d.csv");
    write_fixture_csv(&csv, 2, 130);
    let cfg = dir.join("run.conf");
    std::fs::write(
        &cfg,
        format!(
            "dataset={}\nalgorithm=fedavg\nrounds=1\nseeds=8273\nout={}\n",
            csv.display(),
            dir.join("out").display()
        ),
    )
    .unwrap();
    let (_, stderr, code) = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    assert!(dir.join("out").join("8273").join("fedavg").exists());

    // CLI flag wins over the file
    let (_, stderr, code) = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--algorithm",
        "local",
        "--out",
        dir.join("out2").to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(dir.join("out2").join("8273").join("local").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn synthetic_reports_verdict_lines() {
    let (stdout, stderr, code) = run(&[
        "synthetic",
        "--clients",
        "3",
        "--samples",
        "200",
        "--features",
        "4",
        "--rounds",
        "2",
        "--seeds",
        "8273",
        "--inject",
        "add_bias client=1 feature=f0 delta=2.0",
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("mutation: add_bias client=1 feature=f0 delta=2"), "{stdout}");
    assert!(stdout.contains("f0/client1:"), "{stdout}");
    assert!(stdout.contains("detected in "), "{stdout}");
}

#[test]
fn synthetic_flip_verdict_mentions_w_out_sign() {
    let (stdout, _, code) = run(&[
        "synthetic",
        "--clients",
        "3",
        "--samples",
        "300",
        "--features",
        "4",
        "--rounds",
        "40",
        "--seeds",
        "8273",
        "--fout",
        "scalar-weight",
        "--inject",
        "flip_target client=1",
    ]);
    assert_eq!(code, 0);
    assert!(
        stdout.contains("client1: FLIP SUSPECTED (w_out < 0") || stdout.contains("client1: no flip suspected"),
        "{stdout}"
    );
}

#[test]
fn synthetic_without_injection_reports_cell_counts() {
    let (stdout, _, code) = run(&[
        "synthetic", "--clients", "3", "--samples", "200", "--features", "4", "--rounds", "1",
        "--seeds", "8273",
    ]);
    assert_eq!(code, 0);
    assert!(
        stdout.contains("no significant cells") || stdout.contains("significant cells ("),
        "{stdout}"
    );
}

#[test]
fn report_and_flip_detection_from_run_dir() {
    let dir = scratch("report");
    let out = dir.join("out");
    let (_, stderr, code) = run(&[
        "synthetic",
        "--clients",
        "3",
        "--samples",
        "200",
        "--features",
        "4",
        "--rounds",
        "2",
        "--seeds",
        "8273",
        "--fout",
        "scalar-weight",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stderr}");
    let run_dir = out.join("8273").join("ifedavg");
    let (stdout, stderr, code) = run(&[
        "report",
        "--run",
        run_dir.to_str().unwrap(),
        "--layer",
        "w_out",
        "--detect-flip",
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("flip"), "{stdout}");
    assert!(run_dir.join("report").join("heatmap_w_out.svg").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn summarize_rolls_up_a_metrics_csv() {
    let dir = scratch("summarize");
    let metrics = dir.join("metrics.csv");
    std::fs::write(
        &metrics,
        "dataset,algorithm,seed,client,f1,roc_auc,balanced_acc\n\
         d,fedavg,1,a,0.8,0.9,0.7\n\
         d,fedavg,1,b,0.6,0.7,0.5\n\
         d,fedavg,2,a,0.9,0.96,0.8\n\
         d,fedavg,2,b,0.7,0.8,0.6\n",
    )
    .unwrap();
    let (stdout, stderr, code) = run(&["summarize", "--metrics", metrics.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    // client means: a = 0.85, b = 0.65 -> mean 0.75, worst 0.65
    // per-seed medians: 0.7 and 0.8 -> population SD 0.05
    let f1_line = stdout
        .lines()
        .find(|l| l.starts_with("summary d,fedavg,f1,"))
        .unwrap_or_else(|| panic!("no f1 summary line in {stdout}"));
    let fields: Vec<&str> = f1_line.trim_start_matches("summary ").split(',').collect();
    assert!((fields[3].parse::<f64>().unwrap() - 0.75).abs() < 1e-12);
    assert!((fields[4].parse::<f64>().unwrap() - 0.65).abs() < 1e-12);
    assert!((fields[5].parse::<f64>().unwrap() - 0.05).abs() < 1e-12);
    assert!(dir.join("summary.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn inject_spec_can_come_from_a_file() {
    let dir = scratch("injectfile");
    let spec = dir.join("shift.txt");
    std::fs::write(&spec, "add_bias client=0 feature=f1 delta=1.5\n").unwrap();
    let (stdout, stderr, code) = run(&[
        "synthetic",
        "--clients",
        "2",
        "--samples",
        "200",
        "--features",
        "3",
        "--rounds",
        "1",
        "--seeds",
        "8273",
        "--inject",
        &format!("@{}", spec.display()),
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("f1/client0:"), "{stdout}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bad_inject_spec_is_a_usage_error() {
    let (_, stderr, code) = run(&[
        "synthetic", "--rounds", "1", "--inject", "explode client=1",
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("unknown mutation"), "{stderr}");
}
