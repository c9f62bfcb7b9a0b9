//! CSV ingestion and the raw table it produces.
//!
//! Input format: UTF-8, one header row, comma separated, empty string means
//! missing. One column holds the client id, one the integer target class;
//! every other column is a feature. Feature kinds (continuous vs binary) are
//! inferred from the observed values unless a schema file overrides them.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Continuous,
    Binary,
}

impl FeatureKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(FeatureKind::Continuous),
            "binary" => Ok(FeatureKind::Binary),
            other => Err(Error::config(format!(
                "unknown feature kind '{other}' (expected continuous|binary)"
            ))),
        }
    }
}

/// Optional overrides for column roles and kinds.
#[derive(Clone, Debug, Default)]
pub struct Schema {
    pub client_column: Option<String>,
    pub target_column: Option<String>,
    pub kinds: HashMap<String, FeatureKind>,
}

impl Schema {
    /// Line-oriented `key=value` file: `client_column=`, `target_column=`,
    /// or `<column>=continuous|binary`. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Schema> {
        let mut schema = Schema::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("schema line {}: expected key=value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "client_column" => schema.client_column = Some(value.to_string()),
                "target_column" => schema.target_column = Some(value.to_string()),
                column => {
                    schema.kinds.insert(column.to_string(), FeatureKind::parse(value)?);
                }
            }
        }
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Schema> {
        Schema::parse(&std::fs::read_to_string(path)?)
    }
}

/// A parsed dataset before any preprocessing: per-row client labels and
/// targets plus a row-major grid of optional feature values.
#[derive(Clone, Debug)]
pub struct RawTable {
    pub feature_names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    /// Client label of each row.
    pub clients: Vec<String>,
    /// Target class of each row.
    pub targets: Vec<u32>,
    /// Row-major `n_rows x n_features`; `None` marks a missing cell.
    pub cells: Vec<Option<f64>>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.clients.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Number of target classes, `max(target) + 1`.
    pub fn n_classes(&self) -> usize {
        self.targets.iter().map(|&t| t as usize + 1).max().unwrap_or(0)
    }

    #[inline]
    pub fn cell(&self, row: usize, feature: usize) -> Option<f64> {
        self.cells[row * self.n_features() + feature]
    }

    /// Distinct client labels in order of first appearance.
    pub fn client_labels(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for c in &self.clients {
            if !seen.contains(c) {
                seen.push(c.clone());
            }
        }
        seen
    }
}

/// Reads a CSV file into a [`RawTable`].
///
/// The client and target columns default to `client` and `target`; a schema
/// can rename them and pin feature kinds. Inference marks a column binary
/// when every observed value is 0 or 1.
pub fn load_csv(path: &Path, schema: Option<&Schema>) -> Result<RawTable> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read dataset {}: {e}", path.display())))?;
    parse_csv(&text, schema)
}

/// CSV parsing on an in-memory string (see [`load_csv`]).
pub fn parse_csv(text: &str, schema: Option<&Schema>) -> Result<RawTable> {
    let default_schema = Schema::default();
    let schema = schema.unwrap_or(&default_schema);
    let client_col = schema.client_column.as_deref().unwrap_or("client");
    let target_col = schema.target_column.as_deref().unwrap_or("target");

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::config("dataset is empty (no header row)"))?;
    let columns: Vec<&str> = header.trim_end_matches('\r').split(',').map(str::trim).collect();

    let client_idx = columns.iter().position(|&c| c == client_col).ok_or_else(|| {
        Error::config(format!("mandatory client column '{client_col}' not found in header"))
    })?;
    let target_idx = columns.iter().position(|&c| c == target_col).ok_or_else(|| {
        Error::config(format!("mandatory target column '{target_col}' not found in header"))
    })?;

    let feature_cols: Vec<usize> = (0..columns.len())
        .filter(|&i| i != client_idx && i != target_idx)
        .collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&i| columns[i].to_string()).collect();

    let mut clients = Vec::new();
    let mut targets = Vec::new();
    let mut cells: Vec<Option<f64>> = Vec::new();

    for (lineno, raw) in lines {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(Error::data(format!(
                "row {}: {} fields, header has {}",
                lineno + 1,
                fields.len(),
                columns.len()
            )));
        }
        let client = fields[client_idx];
        if client.is_empty() {
            return Err(Error::data(format!("row {}: empty client id", lineno + 1)));
        }
        clients.push(client.to_string());

        let target_text = fields[target_idx];
        let target: f64 = target_text.parse().map_err(|_| {
            Error::data(format!(
                "row {}, column '{target_col}': unparseable target '{target_text}'",
                lineno + 1
            ))
        })?;
        if target < 0.0 || target.fract() != 0.0 {
            return Err(Error::data(format!(
                "row {}, column '{target_col}': target '{target_text}' is not a class index",
                lineno + 1
            )));
        }
        targets.push(target as u32);

        for (&col, name) in feature_cols.iter().zip(&feature_names) {
            let cell = fields[col];
            if cell.is_empty() {
                cells.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::data(format!(
                        "row {}, column '{name}': unparseable value '{cell}'",
                        lineno + 1
                    ))
                })?;
                cells.push(Some(v));
            }
        }
    }

    if clients.is_empty() {
        return Err(Error::data("dataset has a header but no data rows"));
    }

    // Kind inference with schema override.
    let n_features = feature_names.len();
    let mut kinds = Vec::with_capacity(n_features);
    for (f, name) in feature_names.iter().enumerate() {
        if let Some(&k) = schema.kinds.get(name) {
            kinds.push(k);
            continue;
        }
        let binary = (0..clients.len())
            .filter_map(|r| cells[r * n_features + f])
            .all(|v| v == 0.0 || v == 1.0);
        kinds.push(if binary { FeatureKind::Binary } else { FeatureKind::Continuous });
    }

    Ok(RawTable { feature_names, kinds, clients, targets, cells })
}
