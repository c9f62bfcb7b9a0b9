//! Preprocessing pipeline: partition by client, standardize, inject shifts,
//! impute, split.
//!
//! Order matters and is fixed: standardization stats are fitted first, then
//! `mask_conditional` mutations punch holes (so the holes get the imputation
//! value), then imputation fills every hole, then `add_bias`/`scale`/
//! `flip_target` mutations apply in standardized units.

use crate::data::shift::{resolve_client, resolve_feature, Mutation, ShiftSpec};
use crate::data::table::{FeatureKind, RawTable};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{stream, Rng};

/// Which rows standardization statistics are fitted on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitScope {
    /// All local rows (default).
    FullLocal,
    /// Training rows only.
    TrainOnly,
}

/// Standardization scope.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StandardizeMode {
    /// Each client fits its own mean/SD per feature.
    PerClient,
    /// One pooled mean/SD per feature across all clients.
    Global,
}

impl StandardizeMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "per-client" => Ok(StandardizeMode::PerClient),
            "global" => Ok(StandardizeMode::Global),
            other => Err(Error::config(format!(
                "unknown standardize mode '{other}' (expected per-client|global)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StandardizeMode::PerClient => "per-client",
            StandardizeMode::Global => "global",
        }
    }
}

/// One client's slice of the table, mid-pipeline (cells still optional).
#[derive(Clone, Debug)]
pub struct ClientTable {
    pub label: String,
    /// Row-major `n_rows x n_features`.
    pub cells: Vec<Option<f64>>,
    pub targets: Vec<u32>,
    pub n_features: usize,
}

impl ClientTable {
    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    #[inline]
    pub fn cell(&self, row: usize, feature: usize) -> Option<f64> {
        self.cells[row * self.n_features + feature]
    }

    #[inline]
    pub fn cell_mut(&mut self, row: usize, feature: usize) -> &mut Option<f64> {
        &mut self.cells[row * self.n_features + feature]
    }
}

/// Fully preprocessed data of one client.
#[derive(Clone, Debug)]
pub struct ClientDataset {
    pub label: String,
    pub x: Matrix,
    pub y: Vec<u32>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub feature_names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    /// `(mean, sd)` actually used per feature; `(0, 1)` for binary columns.
    pub stats: Vec<(f64, f64)>,
}

impl ClientDataset {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }
}

/// The federation-ready view of a dataset.
#[derive(Clone, Debug)]
pub struct FederatedData {
    pub clients: Vec<ClientDataset>,
    pub n_classes: usize,
    pub n_features: usize,
    pub feature_names: Vec<String>,
}

/// Splits rows by client label, preserving first-appearance client order and
/// original row order within each client.
pub fn partition_by_client(table: &RawTable) -> Vec<ClientTable> {
    let labels = table.client_labels();
    let nf = table.n_features();
    let mut parts: Vec<ClientTable> = labels
        .iter()
        .map(|label| ClientTable {
            label: label.clone(),
            cells: Vec::new(),
            targets: Vec::new(),
            n_features: nf,
        })
        .collect();
    for row in 0..table.n_rows() {
        let idx = labels.iter().position(|l| l == &table.clients[row]).unwrap();
        let part = &mut parts[idx];
        part.targets.push(table.targets[row]);
        part.cells
            .extend_from_slice(&table.cells[row * nf..(row + 1) * nf]);
    }
    parts
}

fn fit_stats(
    values: impl Iterator<Item = f64>,
) -> Option<(f64, f64)> {
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for v in values {
        n += 1;
        sum += v;
        sumsq += v * v;
    }
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;
    let var = (sumsq / n as f64 - mean * mean).max(0.0);
    Some((mean, var.sqrt()))
}

fn apply_stats(t: &mut ClientTable, feature: usize, mean: f64, sd: f64) {
    for row in 0..t.n_rows() {
        if let Some(v) = t.cell(row, feature) {
            // Constant columns (sd = 0) map to 0 rather than erroring.
            let z = if sd == 0.0 { 0.0 } else { (v - mean) / sd };
            *t.cell_mut(row, feature) = Some(z);
        }
    }
}

fn fit_rows<'a>(t: &'a ClientTable, scope: FitScope, train_idx: &'a [usize]) -> Vec<usize> {
    match scope {
        FitScope::FullLocal => (0..t.n_rows()).collect(),
        FitScope::TrainOnly => train_idx.to_vec(),
    }
}

/// Standardizes one client's continuous columns in place using population
/// mean/SD fitted on the non-missing entries of `rows`. Binary columns are
/// left untouched. Returns the `(mean, sd)` used per feature.
pub fn standardize_client(
    t: &mut ClientTable,
    kinds: &[FeatureKind],
    rows: &[usize],
) -> Result<Vec<(f64, f64)>> {
    let mut stats = Vec::with_capacity(t.n_features);
    for (f, &kind) in kinds.iter().enumerate().take(t.n_features) {
        if kind == FeatureKind::Binary {
            stats.push((0.0, 1.0));
            continue;
        }
        let fitted = fit_stats(rows.iter().filter_map(|&r| t.cell(r, f)));
        let (mean, sd) = fitted.ok_or_else(|| {
            Error::data(format!(
                "client '{}', feature index {f}: no non-missing values to standardize on",
                t.label
            ))
        })?;
        apply_stats(t, f, mean, sd);
        stats.push((mean, sd));
    }
    Ok(stats)
}

/// Standardizes all clients with pooled statistics. Returns the shared
/// `(mean, sd)` per feature.
pub fn standardize_global(
    parts: &mut [ClientTable],
    kinds: &[FeatureKind],
    fit: &[Vec<usize>],
) -> Result<Vec<(f64, f64)>> {
    let nf = parts.first().map_or(0, |t| t.n_features);
    let mut stats = Vec::with_capacity(nf);
    for (f, &kind) in kinds.iter().enumerate().take(nf) {
        if kind == FeatureKind::Binary {
            stats.push((0.0, 1.0));
            continue;
        }
        let fitted = fit_stats(
            parts
                .iter()
                .zip(fit)
                .flat_map(|(t, rows)| rows.iter().filter_map(move |&r| t.cell(r, f))),
        );
        let (mean, sd) = fitted.ok_or_else(|| {
            Error::data(format!(
                "feature index {f}: no non-missing values across the federation"
            ))
        })?;
        for t in parts.iter_mut() {
            apply_stats(t, f, mean, sd);
        }
        stats.push((mean, sd));
    }
    Ok(stats)
}

/// Fills missing cells: continuous -> 0.0, binary -> 0.5. Idempotent.
pub fn impute_client(t: &mut ClientTable, kinds: &[FeatureKind]) {
    for (f, kind) in kinds.iter().enumerate().take(t.n_features) {
        let fill = match kind {
            FeatureKind::Continuous => 0.0,
            FeatureKind::Binary => 0.5,
        };
        for row in 0..t.n_rows() {
            let cell = t.cell_mut(row, f);
            if cell.is_none() {
                *cell = Some(fill);
            }
        }
    }
}

/// Test-set size rule: `max(ceil(0.33 N), 100)` capped at `N - 1`.
pub fn test_size(n: usize) -> usize {
    let third = ((n as f64) * 0.33).ceil() as usize;
    third.max(100).min(n - 1)
}

/// Draws a deterministic train/test split for a client. Selection is uniform
/// without replacement from the seed-derived stream keyed by
/// `(seed, client_index, n)`; both index lists come back sorted.
pub fn split_train_test(
    n: usize,
    seed: u64,
    client_index: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::data(format!(
            "client needs at least 2 rows to split, has {n}"
        )));
    }
    let n_test = test_size(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::derive(seed, &[stream::SPLIT, client_index as u64, n as u64]);
    rng.shuffle(&mut order);
    let mut test: Vec<usize> = order[..n_test].to_vec();
    let mut train: Vec<usize> = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Class weights proportional to inverse prevalence, rescaled to sum to `k`.
pub fn class_weights(labels: &[u32], k: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; k];
    for &y in labels {
        if (y as usize) < k {
            counts[y as usize] += 1;
        }
    }
    if let Some(absent) = counts.iter().position(|&c| c == 0) {
        return Err(Error::data(format!(
            "class {absent} has no samples; cannot compute class weights"
        )));
    }
    let n = labels.len() as f64;
    let raw: Vec<f64> = counts.iter().map(|&c| n / c as f64).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.iter().map(|w| w * k as f64 / total).collect())
}

fn validate_spec(spec: &ShiftSpec, labels: &[String], features: &[String], k: usize) -> Result<()> {
    for m in &spec.mutations {
        resolve_client(labels, m.client())?;
        if let Some(f) = m.feature() {
            resolve_feature(features, f)?;
        }
        if let Mutation::MaskConditional { class, .. } = m {
            if *class as usize >= k {
                return Err(Error::config(format!(
                    "shift spec references class {class}, dataset has {k} classes"
                )));
            }
        }
    }
    Ok(())
}

/// Applies the mutations that act before imputation (`mask_conditional`).
pub fn apply_pre_impute(
    parts: &mut [ClientTable],
    spec: &ShiftSpec,
    labels: &[String],
    features: &[String],
) -> Result<()> {
    for m in &spec.mutations {
        if let Mutation::MaskConditional { client, feature, class } = m {
            let c = resolve_client(labels, client)?;
            let f = resolve_feature(features, feature)?;
            let t = &mut parts[c];
            for row in 0..t.n_rows() {
                if t.targets[row] == *class {
                    *t.cell_mut(row, f) = None;
                }
            }
        }
    }
    Ok(())
}

/// Applies the post-imputation mutations (`add_bias`, `scale`, `flip_target`)
/// in spec order.
pub fn apply_post_impute(
    parts: &mut [ClientTable],
    spec: &ShiftSpec,
    labels: &[String],
    features: &[String],
    k: usize,
) -> Result<()> {
    for m in &spec.mutations {
        match m {
            Mutation::AddBias { client, feature, delta } => {
                let c = resolve_client(labels, client)?;
                let f = resolve_feature(features, feature)?;
                let t = &mut parts[c];
                for row in 0..t.n_rows() {
                    if let Some(v) = t.cell(row, f) {
                        *t.cell_mut(row, f) = Some(v + delta);
                    }
                }
            }
            Mutation::Scale { client, feature, gamma } => {
                let c = resolve_client(labels, client)?;
                let f = resolve_feature(features, feature)?;
                let t = &mut parts[c];
                for row in 0..t.n_rows() {
                    if let Some(v) = t.cell(row, f) {
                        *t.cell_mut(row, f) = Some(v * gamma);
                    }
                }
            }
            Mutation::FlipTarget { client } => {
                let c = resolve_client(labels, client)?;
                for y in &mut parts[c].targets {
                    *y = (k as u32 - 1) - *y;
                }
            }
            Mutation::MaskConditional { .. } => {}
        }
    }
    Ok(())
}

/// Pipeline options; `seed` drives the per-client splits (and the fitting
/// scope when standardization is fitted on training rows only).
#[derive(Clone, Copy, Debug)]
pub struct PipelineOptions {
    pub mode: StandardizeMode,
    pub fit: FitScope,
    pub seed: u64,
}

/// Runs the full pipeline on a raw table: partition, split, standardize,
/// mask, impute, shift, assemble.
pub fn build_client_datasets(
    table: &RawTable,
    spec: Option<&ShiftSpec>,
    opts: &PipelineOptions,
) -> Result<FederatedData> {
    let labels = table.client_labels();
    let k = table.n_classes();
    if k < 2 {
        return Err(Error::data(format!("dataset has {k} classes, need at least 2")));
    }
    if let Some(spec) = spec {
        validate_spec(spec, &labels, &table.feature_names, k)?;
    }

    let mut parts = partition_by_client(table);
    let splits: Vec<(Vec<usize>, Vec<usize>)> = parts
        .iter()
        .enumerate()
        .map(|(i, t)| split_train_test(t.n_rows(), opts.seed, i))
        .collect::<Result<_>>()?;

    let per_client_stats: Vec<Vec<(f64, f64)>> = match opts.mode {
        StandardizeMode::PerClient => parts
            .iter_mut()
            .zip(&splits)
            .map(|(t, (train, _))| {
                let rows = fit_rows(t, opts.fit, train);
                standardize_client(t, &table.kinds, &rows)
            })
            .collect::<Result<_>>()?,
        StandardizeMode::Global => {
            let fit: Vec<Vec<usize>> = parts
                .iter()
                .zip(&splits)
                .map(|(t, (train, _))| fit_rows(t, opts.fit, train))
                .collect();
            let stats = standardize_global(&mut parts, &table.kinds, &fit)?;
            vec![stats; parts.len()]
        }
    };

    if let Some(spec) = spec {
        apply_pre_impute(&mut parts, spec, &labels, &table.feature_names)?;
    }
    for t in &mut parts {
        impute_client(t, &table.kinds);
    }
    if let Some(spec) = spec {
        apply_post_impute(&mut parts, spec, &labels, &table.feature_names, k)?;
    }

    let clients = parts
        .into_iter()
        .zip(splits)
        .zip(per_client_stats)
        .map(|((t, (train_idx, test_idx)), stats)| {
            let nf = t.n_features;
            let data: Vec<f64> = t.cells.iter().map(|c| c.expect("imputed")).collect();
            Ok(ClientDataset {
                label: t.label,
                x: Matrix::from_flat(t.targets.len(), nf, data)?,
                y: t.targets,
                train_idx,
                test_idx,
                feature_names: table.feature_names.clone(),
                kinds: table.kinds.clone(),
                stats,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(FederatedData {
        clients,
        n_classes: k,
        n_features: table.n_features(),
        feature_names: table.feature_names.clone(),
    })
}
