//! Run-directory layout and serialization: metrics CSV, summary CSV,
//! personal-layer dumps, model snapshots, manifest. All files are written
//! atomically; wall-clock timestamps live only in the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::error::Result;
use crate::fed::config::{config_hash, ExperimentConfig};
use crate::fed::experiment::RunArtifacts;
use crate::interpret::{build_heatmap, render::write_atomic, write_heatmap_csv, Layer};
use crate::metrics::{summarize, ClientScore, Summary};

pub const METRICS_HEADER: &str = "dataset,algorithm,seed,client,f1,roc_auc,balanced_acc";
pub const SUMMARY_HEADER: &str = "dataset,algorithm,metric,mean,worst,seed_sd";

pub fn metrics_rows(dataset: &str, algorithm: &str, scores: &[ClientScore]) -> String {
    let mut out = String::new();
    for s in scores {
        writeln!(
            out,
            "{dataset},{algorithm},{},{},{},{},{}",
            s.seed, s.client, s.f1, s.roc_auc, s.balanced_acc
        )
        .unwrap();
    }
    out
}

pub fn summary_rows(dataset: &str, algorithm: &str, summary: &Summary) -> String {
    let mut out = String::new();
    for (name, m) in [
        ("f1", summary.f1),
        ("roc_auc", summary.roc_auc),
        ("balanced_acc", summary.balanced_acc),
    ] {
        writeln!(
            out,
            "{dataset},{algorithm},{name},{},{},{}",
            m.mean, m.worst, m.seed_sd
        )
        .unwrap();
    }
    out
}

fn shared_model_text(artifacts: &RunArtifacts, seed_index: usize) -> String {
    let run = &artifacts.runs[seed_index];
    let mut out = String::new();
    for (label, params) in &run.snapshots {
        writeln!(out, "model={label}").unwrap();
        writeln!(out, "d={}", params.d).unwrap();
        writeln!(out, "k={}", params.k).unwrap();
        for (name, tensor) in ["w1", "b1", "w2", "b2", "w3", "b3"].iter().zip(params.tensors()) {
            write!(out, "{name}").unwrap();
            for v in tensor {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

/// Directory of one (seed, algorithm) run under the output root.
pub fn run_dir(out: &Path, seed: u64, algorithm: &str) -> PathBuf {
    out.join(seed.to_string()).join(algorithm)
}

/// Writes everything one experiment produced:
///
/// ```text
/// out/<seed>/<algo>/metrics.csv          per-run scores
/// out/<seed>/<algo>/shared_model.txt     final model snapshot(s)
/// out/<seed>/<algo>/personal_<layer>.csv trainable personal layers
/// out/<seed>/<algo>/trace.csv            optional periodic evaluations
/// ```
///
/// Returns the flat list of files written.
pub fn write_run_artifacts(
    out: &Path,
    dataset: &str,
    artifacts: &RunArtifacts,
) -> Result<Vec<PathBuf>> {
    let algo = artifacts.algorithm.name();
    let mut written = Vec::new();
    for (i, run) in artifacts.runs.iter().enumerate() {
        let dir = run_dir(out, run.seed, algo);
        std::fs::create_dir_all(&dir)?;

        let metrics_path = dir.join("metrics.csv");
        let mut text = String::from(METRICS_HEADER);
        text.push('\n');
        text.push_str(&metrics_rows(dataset, algo, &run.scores));
        write_atomic(&metrics_path, &text)?;
        written.push(metrics_path);

        let model_path = dir.join("shared_model.txt");
        write_atomic(&model_path, &shared_model_text(artifacts, i))?;
        written.push(model_path);

        if let Some((_, first)) = run.personal.first() {
            let trainable = [
                (Layer::BIn, first.train_b_in),
                (Layer::WIn, first.train_w_in),
                (Layer::BOut, first.train_b_out),
                (Layer::WOut, first.train_w_out),
            ];
            for (layer, trained) in trainable {
                if !trained {
                    continue;
                }
                let hm = build_heatmap(&run.personal, layer, &artifacts.feature_names)?;
                let path = dir.join(format!("personal_{}.csv", layer.name()));
                write_heatmap_csv(&path, &hm)?;
                written.push(path);
            }
        }

        if !run.trace.is_empty() {
            let mut text = String::from("round,");
            text.push_str(METRICS_HEADER);
            text.push('\n');
            for (round, scores) in &run.trace {
                for line in metrics_rows(dataset, algo, scores).lines() {
                    writeln!(text, "{round},{line}").unwrap();
                }
            }
            let path = dir.join("trace.csv");
            write_atomic(&path, &text)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Writes the combined metrics and summary CSVs at the output root.
pub fn write_combined_csvs(
    out: &Path,
    dataset: &str,
    all: &[&RunArtifacts],
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(out)?;
    let mut metrics = String::from(METRICS_HEADER);
    metrics.push('\n');
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for artifacts in all {
        let algo = artifacts.algorithm.name();
        let scores: Vec<ClientScore> = artifacts
            .runs
            .iter()
            .flat_map(|r| r.scores.iter().cloned())
            .collect();
        metrics.push_str(&metrics_rows(dataset, algo, &scores));
        summary.push_str(&summary_rows(dataset, algo, &summarize(&scores)?));
    }
    let metrics_path = out.join("metrics.csv");
    let summary_path = out.join("summary.csv");
    write_atomic(&metrics_path, &metrics)?;
    write_atomic(&summary_path, &summary)?;
    Ok((metrics_path, summary_path))
}

/// Scores grouped by `(dataset, algorithm)`.
pub type MetricGroups = Vec<((String, String), Vec<ClientScore>)>;

/// Reads a combined metrics CSV back into scores grouped by
/// `(dataset, algorithm)` in first-appearance order.
pub fn read_metrics_csv(path: &Path) -> Result<MetricGroups> {
    let text = std::fs::read_to_string(path)?;
    let mut groups: MetricGroups = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(crate::error::Error::data(format!(
                "metrics csv line {}: expected 7 fields, got {}",
                i + 1,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| crate::error::Error::data(format!("metrics csv line {}: bad number '{s}'", i + 1)))
        };
        let key = (fields[0].to_string(), fields[1].to_string());
        let score = ClientScore {
            seed: fields[2]
                .parse()
                .map_err(|_| crate::error::Error::data(format!("metrics csv line {}: bad seed", i + 1)))?,
            client: fields[3].to_string(),
            f1: parse(fields[4])?,
            roc_auc: parse(fields[5])?,
            balanced_acc: parse(fields[6])?,
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(score),
            None => groups.push((key, vec![score])),
        }
    }
    Ok(groups)
}

/// A short dataset fingerprint for the manifest and config hash.
pub fn dataset_fingerprint(
    dataset: &str,
    n_rows: usize,
    n_features: usize,
    n_classes: usize,
    client_sizes: &[(String, usize)],
) -> String {
    let sizes: Vec<String> = client_sizes
        .iter()
        .map(|(label, n)| format!("{label}:{n}"))
        .collect();
    format!(
        "dataset={dataset};rows={n_rows};features={n_features};classes={n_classes};clients={}",
        sizes.join("|")
    )
}

/// Writes `manifest.txt` at the output root. Timestamps and wall-clock
/// figures are confined to this file so every other artifact is
/// byte-reproducible.
pub fn write_manifest(
    out: &Path,
    config: &ExperimentConfig,
    fingerprint: &str,
    artifact_paths: &[PathBuf],
    phases: &[(String, Duration)],
) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let mut text = String::new();
    writeln!(
        text,
        "config_hash={:016x}",
        config_hash(&config.canonical_string(), fingerprint)
    )
    .unwrap();
    writeln!(text, "fingerprint={fingerprint}").unwrap();
    for line in config.canonical_string().lines() {
        writeln!(text, "config.{line}").unwrap();
    }
    for p in artifact_paths {
        let rel = p.strip_prefix(out).unwrap_or(p);
        writeln!(text, "artifact={}", rel.display()).unwrap();
    }
    for (name, d) in phases {
        writeln!(text, "phase.{name}_secs={:.3}", d.as_secs_f64()).unwrap();
    }
    writeln!(
        text,
        "created_unix={}",
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    )
    .unwrap();
    let path = out.join("manifest.txt");
    write_atomic(&path, &text)?;
    Ok(path)
}
