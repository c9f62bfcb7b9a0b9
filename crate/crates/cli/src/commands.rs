//! Implementations of the four subcommands.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ifedavg_core::data::{
    load_csv, Mutation, Schema, ShiftSpec, StandardizeMode, SyntheticConfig,
};
use ifedavg_core::error::{Error, Result};
use ifedavg_core::fed::artifacts::{
    dataset_fingerprint, read_metrics_csv, run_dir, summary_rows, write_combined_csvs,
    write_manifest, write_run_artifacts, SUMMARY_HEADER,
};
use ifedavg_core::fed::{
    run_synthetic_detection, Algorithm, DetectionOutcome, ExperimentConfig, RunArtifacts,
};
use ifedavg_core::interpret::{
    detect_target_flip, read_heatmap_csv, render_report, significance, Layer, LayerHeatmap,
};
use ifedavg_core::metrics::summarize as summarize_scores;
use ifedavg_core::nn::FOutMode;

use crate::{ReportArgs, SummarizeArgs, SyntheticArgs, TrainArgs};

fn parse_inject(text: &str) -> Result<ShiftSpec> {
    if let Some(path) = text.strip_prefix('@') {
        ShiftSpec::from_file(Path::new(path))
    } else {
        ShiftSpec::parse(text)
    }
}

fn parse_u64_list(text: &str) -> Result<Vec<u64>> {
    ifedavg_core::fed::config::parse_seed_list(text)
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::config(format!("invalid index '{t}'")))
        })
        .collect()
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("invalid number '{t}'")))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub fn train(args: TrainArgs) -> Result<()> {
    let mut config = ExperimentConfig::default();
    let mut dataset_path = None;
    let mut out = None;
    let mut schema_path = None;

    if let Some(path) = &args.config {
        for (key, value) in config.apply_file(path)? {
            match key.as_str() {
                "dataset" => dataset_path = Some(PathBuf::from(value)),
                "out" => out = Some(PathBuf::from(value)),
                "schema" => schema_path = Some(PathBuf::from(value)),
                other => {
                    return Err(Error::config(format!("unknown config key '{other}'")));
                }
            }
        }
    }
    // command-line flags win over the config file
    if args.dataset.is_some() {
        dataset_path = args.dataset.clone();
    }
    if args.out.is_some() {
        out = args.out.clone();
    }
    if args.schema.is_some() {
        schema_path = args.schema.clone();
    }
    let out = out.unwrap_or_else(|| PathBuf::from("out"));

    if let Some(v) = args.rounds {
        config.rounds = v;
    }
    if let Some(v) = &args.seeds {
        config.seeds = parse_u64_list(v)?;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.lr {
        config.base_lr = v;
    }
    if let Some(v) = args.momentum {
        config.momentum = v;
    }
    if let Some(v) = args.alpha {
        config.alpha = v;
    }
    if let Some(v) = args.dropout {
        config.dropout = v;
    }
    if let Some(v) = &args.fout {
        config.fout = FOutMode::parse(v)?;
    }
    if let Some(v) = &args.standardize {
        config.standardize = StandardizeMode::parse(v)?;
    }
    if args.fit_train_only {
        config.fit_scope = ifedavg_core::data::FitScope::TrainOnly;
    }
    if let Some(v) = &args.inject {
        config.shift = Some(parse_inject(v)?);
    }
    if let Some(v) = args.eval_every {
        config.eval_every = Some(v);
    }
    if let Some(v) = args.threads {
        config.threads = v;
    }

    let algorithms: Vec<Algorithm> = match &args.algorithm {
        Some(list) => list
            .split(',')
            .map(|a| Algorithm::parse(a.trim()))
            .collect::<Result<_>>()?,
        None => vec![config.algorithm],
    };
    let dataset_path = dataset_path
        .ok_or_else(|| Error::config("no dataset given (use --dataset or a config file)"))?;
    let dataset_name = dataset_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());

    let schema = match &schema_path {
        Some(p) => Some(Schema::from_file(p)?),
        None => None,
    };

    let t_load = Instant::now();
    let table = load_csv(&dataset_path, schema.as_ref())?;
    let load_time = t_load.elapsed();

    let client_sizes: Vec<(String, usize)> = table
        .client_labels()
        .into_iter()
        .map(|label| {
            let n = table.clients.iter().filter(|c| **c == label).count();
            (label, n)
        })
        .collect();
    let fingerprint = dataset_fingerprint(
        &dataset_name,
        table.n_rows(),
        table.n_features(),
        table.n_classes(),
        &client_sizes,
    );
    println!("dataset {dataset_name}: {} rows, {} features, {} classes, {} clients",
        table.n_rows(), table.n_features(), table.n_classes(), client_sizes.len());

    // every configuration is validated before any training starts
    for &algorithm in &algorithms {
        let mut cfg = config.clone();
        cfg.algorithm = algorithm;
        cfg.validate()?;
    }

    let mut all_artifacts: Vec<RunArtifacts> = Vec::new();
    let mut written = Vec::new();
    let mut phases: Vec<(String, Duration)> = vec![("load".into(), load_time)];
    for algorithm in algorithms {
        let mut cfg = config.clone();
        cfg.algorithm = algorithm;
        let t = Instant::now();
        let artifacts = ifedavg_core::fed::run_experiment(&cfg, &table)?;
        phases.push((format!("train_{}", algorithm.name()), t.elapsed()));
        written.extend(write_run_artifacts(&out, &dataset_name, &artifacts)?);
        all_artifacts.push(artifacts);
    }

    let refs: Vec<&RunArtifacts> = all_artifacts.iter().collect();
    let (metrics_path, summary_path) = write_combined_csvs(&out, &dataset_name, &refs)?;
    written.push(metrics_path);
    written.push(summary_path.clone());
    write_manifest(&out, &config, &fingerprint, &written, &phases)?;

    // stable, line-oriented summary on stdout
    let summary_text = std::fs::read_to_string(&summary_path)?;
    for line in summary_text.lines().skip(1) {
        println!("summary {line}");
    }
    for a in &all_artifacts {
        for run in &a.runs {
            println!(
                "artifacts {}",
                run_dir(&out, run.seed, a.algorithm.name()).display()
            );
        }
    }
    Ok(())
}


// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn heatmap_from_csv(path: &Path, layer: Layer) -> Result<LayerHeatmap> {
    let (clients, columns, values) = read_heatmap_csv(path)?;
    Ok(LayerHeatmap { layer, values, clients, columns })
}

fn layer_csv(dir: &Path, layer: Layer) -> PathBuf {
    dir.join(format!("personal_{}.csv", layer.name()))
}

/// Seed-averaged heatmap across every `<root>/<seed>/<algo>` run present.
fn averaged_heatmap(root: &Path, algorithm: &str, layer: Layer) -> Result<LayerHeatmap> {
    let mut seeds: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let entry = entry?;
        if let Ok(seed) = entry.file_name().to_string_lossy().parse::<u64>() {
            let dir = entry.path().join(algorithm);
            if layer_csv(&dir, layer).exists() {
                seeds.push((seed, dir));
            }
        }
    }
    if seeds.is_empty() {
        return Err(Error::config(format!(
            "no personal layers in run: no {}/<seed>/{algorithm}/personal_{}.csv found",
            root.display(),
            layer.name()
        )));
    }
    seeds.sort_by_key(|(seed, _)| *seed);
    let mut acc: Option<LayerHeatmap> = None;
    for (_, dir) in &seeds {
        let hm = heatmap_from_csv(&layer_csv(dir, layer), layer)?;
        match &mut acc {
            None => acc = Some(hm),
            Some(base) => {
                if hm.clients != base.clients || hm.columns != base.columns {
                    return Err(Error::data(format!(
                        "run {} disagrees on clients/columns",
                        dir.display()
                    )));
                }
                for (a, v) in base
                    .values
                    .as_mut_slice()
                    .iter_mut()
                    .zip(hm.values.as_slice())
                {
                    *a += *v;
                }
            }
        }
    }
    let mut hm = acc.unwrap();
    let n = seeds.len() as f64;
    for v in hm.values.as_mut_slice() {
        *v /= n;
    }
    Ok(hm)
}

pub fn report(args: ReportArgs) -> Result<()> {
    let layers: Vec<Layer> = if args.layer == "all" {
        Layer::ALL.to_vec()
    } else {
        vec![Layer::parse(&args.layer)?]
    };
    let explicit = args.layer != "all";

    let load = |layer: Layer| -> Result<Option<LayerHeatmap>> {
        if args.average_seeds {
            let algorithm = args.algorithm.as_deref().ok_or_else(|| {
                Error::config("--average-seeds needs --algorithm to locate the runs")
            })?;
            match averaged_heatmap(&args.run, algorithm, layer) {
                Ok(hm) => Ok(Some(hm)),
                Err(e) if !explicit => {
                    let _ = e;
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        } else {
            let path = layer_csv(&args.run, layer);
            if !path.exists() {
                if explicit {
                    return Err(Error::config(format!(
                        "no personal layers in run: {} does not exist (was this layer trained?)",
                        path.display()
                    )));
                }
                return Ok(None);
            }
            Ok(Some(heatmap_from_csv(&path, layer)?))
        }
    };

    let out = args.out.clone().unwrap_or_else(|| args.run.join("report"));
    let mut reported = 0usize;
    let mut flagged_lines = Vec::new();
    for layer in layers {
        let Some(hm) = load(layer)? else { continue };
        let flags = significance(&hm, args.threshold)?;
        let files = render_report(&hm, &flags, &out)?;
        println!("report {}", files.heatmap_csv.display());
        println!("report {}", files.flags_csv.display());
        println!("report {}", files.svg.display());
        for (i, client) in hm.clients.iter().enumerate() {
            for (j, column) in hm.columns.iter().enumerate() {
                if flags.cell(i, j, hm.values.cols()) {
                    flagged_lines.push(format!(
                        "{column}/{client}: FLAGGED ({} = {})",
                        layer.name(),
                        hm.values.get(i, j)
                    ));
                }
            }
        }
        if args.detect_flip && layer == Layer::WOut {
            for v in detect_target_flip(&hm)? {
                if v.suspected {
                    println!(
                        "{}: FLIP SUSPECTED (w_out < 0; {} = {})",
                        v.client, v.component, v.value
                    );
                } else {
                    println!("{}: no flip suspected (w_out = {})", v.client, v.value);
                }
            }
        }
        reported += 1;
    }
    if reported == 0 {
        return Err(Error::config(format!(
            "no personal layers in run {} (plain FedAvg/local/central runs have none)",
            args.run.display()
        )));
    }
    if flagged_lines.is_empty() {
        println!("no significant cells");
    }
    for line in flagged_lines {
        println!("{line}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synthetic
// ---------------------------------------------------------------------------

fn verdict_line(report: &ifedavg_core::fed::MutationReport, seed_index: usize) -> String {
    let v = &report.verdicts[seed_index];
    match &report.mutation {
        Mutation::FlipTarget { client } => {
            let extras = if v.extra_flips.is_empty() {
                String::new()
            } else {
                format!("; also suspected: {}", v.extra_flips.join(", "))
            };
            if v.flagged {
                format!("client{client}: FLIP SUSPECTED (w_out < 0; w_out = {}){extras}",
                    v.value)
            } else {
                format!("client{client}: no flip suspected (w_out = {}){extras}", v.value)
            }
        }
        m => {
            let feature = m.feature().unwrap();
            let client = m.client();
            if v.flagged {
                format!("{feature}/client{client}: FLAGGED ({} = {})", v.layer.name(), v.value)
            } else {
                format!("{feature}/client{client}: not flagged ({} = {})", v.layer.name(), v.value)
            }
        }
    }
}

pub fn synthetic(args: SyntheticArgs) -> Result<()> {
    let mut synth = SyntheticConfig::new(args.clients, args.samples, args.features);
    if let Some(w) = &args.weights {
        synth.logistic_weights = Some(parse_f64_list(w)?);
    }
    if let Some(b) = &args.binary_features {
        synth.binary_features = parse_usize_list(b)?;
    }

    let mut config = ExperimentConfig {
        algorithm: Algorithm::IFedAvg,
        rounds: args.rounds,
        ..ExperimentConfig::default()
    };
    if let Some(s) = &args.seeds {
        config.seeds = parse_u64_list(s)?;
    }
    if let Some(b) = args.batch_size {
        config.batch_size = b;
    }
    if let Some(f) = &args.fout {
        config.fout = FOutMode::parse(f)?;
    }
    if let Some(t) = args.threads {
        config.threads = t;
    }
    if let Some(spec) = &args.inject {
        config.shift = Some(parse_inject(spec)?);
    }

    let outcome = run_synthetic_detection(&synth, &config, args.threshold)?;
    print_detection(&outcome, &config);

    if let Some(out) = &args.out {
        let t = Instant::now();
        let mut written = write_run_artifacts(out, "synthetic", &outcome.artifacts)?;
        let refs = [&outcome.artifacts];
        let (m, s) = write_combined_csvs(out, "synthetic", &refs)?;
        written.push(m);
        written.push(s);
        let fingerprint = dataset_fingerprint(
            "synthetic",
            args.clients * args.samples,
            args.features,
            2,
            &[],
        );
        write_manifest(out, &config, &fingerprint, &written, &[("write".into(), t.elapsed())])?;
        for run in &outcome.artifacts.runs {
            println!("artifacts {}", run_dir(out, run.seed, "ifedavg").display());
        }
    }
    Ok(())
}

fn print_detection(outcome: &DetectionOutcome, config: &ExperimentConfig) {
    for report in &outcome.reports {
        println!("mutation: {}", report.mutation.describe());
        for (i, v) in report.verdicts.iter().enumerate() {
            println!("  seed {}: {}", v.seed, verdict_line(report, i));
        }
        println!(
            "  detected in {}/{} seeds",
            report.n_flagged(),
            report.verdicts.len()
        );
    }
    if outcome.reports.is_empty() {
        for (seed, count) in &outcome.clean_flag_counts {
            if *count == 0 {
                println!("seed {seed}: no significant cells");
            } else {
                println!(
                    "seed {seed}: {count} significant cells (the 2-SD rules allow rare false positives)"
                );
            }
        }
    }
    for run in &outcome.artifacts.runs {
        let mean_f1: f64 =
            run.scores.iter().map(|s| s.f1).sum::<f64>() / run.scores.len().max(1) as f64;
        println!("seed {} mean f1 {:.4} over {} clients ({} rounds)",
            run.seed, mean_f1, run.scores.len(), config.rounds);
    }
}

// ---------------------------------------------------------------------------
// summarize
// ---------------------------------------------------------------------------

pub fn summarize(args: SummarizeArgs) -> Result<()> {
    let groups = read_metrics_csv(&args.metrics)?;
    if groups.is_empty() {
        return Err(Error::data(format!(
            "no score rows in {}",
            args.metrics.display()
        )));
    }
    let mut text = String::from(SUMMARY_HEADER);
    text.push('\n');
    for ((dataset, algorithm), scores) in &groups {
        let summary = summarize_scores(scores)?;
        text.push_str(&summary_rows(dataset, algorithm, &summary));
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.metrics.with_file_name("summary.csv"));
    std::fs::write(&out, &text)?;
    for line in text.lines().skip(1) {
        println!("summary {line}");
    }
    println!("wrote {}", out.display());
    Ok(())
}
