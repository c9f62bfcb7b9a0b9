//! Synthetic shift injection: controlled mutations of one client's data,
//! used to validate that the personalization layers detect and compensate
//! for exactly the corruption that was planted.

use std::path::Path;

use crate::error::{Error, Result};

/// One planted mutation. `add_bias`/`scale` act on standardized, imputed
/// values (so `delta`/`gamma` are in standardized units); `mask_conditional`
/// acts before imputation so the masked cells receive the imputation value;
/// `flip_target` relabels `y -> K-1-y`.
#[derive(Clone, Debug, PartialEq)]
pub enum Mutation {
    AddBias { client: String, feature: String, delta: f64 },
    Scale { client: String, feature: String, gamma: f64 },
    FlipTarget { client: String },
    MaskConditional { client: String, feature: String, class: u32 },
}

impl Mutation {
    pub fn client(&self) -> &str {
        match self {
            Mutation::AddBias { client, .. }
            | Mutation::Scale { client, .. }
            | Mutation::FlipTarget { client }
            | Mutation::MaskConditional { client, .. } => client,
        }
    }

    pub fn feature(&self) -> Option<&str> {
        match self {
            Mutation::AddBias { feature, .. }
            | Mutation::Scale { feature, .. }
            | Mutation::MaskConditional { feature, .. } => Some(feature),
            Mutation::FlipTarget { .. } => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Mutation::AddBias { client, feature, delta } => {
                format!("add_bias client={client} feature={feature} delta={delta}")
            }
            Mutation::Scale { client, feature, gamma } => {
                format!("scale client={client} feature={feature} gamma={gamma}")
            }
            Mutation::FlipTarget { client } => format!("flip_target client={client}"),
            Mutation::MaskConditional { client, feature, class } => {
                format!("mask_conditional client={client} feature={feature} class={class}")
            }
        }
    }
}

/// An ordered list of mutations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShiftSpec {
    pub mutations: Vec<Mutation>,
}

fn field<'a>(parts: &'a [(&str, &str)], key: &str, line: &str) -> Result<&'a str> {
    parts
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::config(format!("shift spec '{line}': missing {key}=")))
}

fn num_field(parts: &[(&str, &str)], key: &str, line: &str) -> Result<f64> {
    field(parts, key, line)?
        .parse()
        .map_err(|_| Error::config(format!("shift spec '{line}': {key} is not a number")))
}

impl ShiftSpec {
    pub fn is_empty(&self) -> bool {
        self.mutations.is_empty()
    }

    /// Parses one mutation per line (or `;`-separated), e.g.
    /// `add_bias client=3 feature=f0 delta=2.0`.
    pub fn parse(text: &str) -> Result<ShiftSpec> {
        let mut mutations = Vec::new();
        for raw in text.lines().flat_map(|l| l.split(';')) {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let op = tokens.next().unwrap();
            let parts: Vec<(&str, &str)> = tokens
                .map(|t| {
                    t.split_once('=')
                        .ok_or_else(|| Error::config(format!("shift spec '{line}': expected key=value, got '{t}'")))
                })
                .collect::<Result<_>>()?;
            let client = |key: &str| field(&parts, key, line).map(str::to_string);
            let mutation = match op {
                "add_bias" => Mutation::AddBias {
                    client: client("client")?,
                    feature: field(&parts, "feature", line)?.to_string(),
                    delta: num_field(&parts, "delta", line)?,
                },
                "scale" => Mutation::Scale {
                    client: client("client")?,
                    feature: field(&parts, "feature", line)?.to_string(),
                    gamma: num_field(&parts, "gamma", line)?,
                },
                "flip_target" => Mutation::FlipTarget { client: client("client")? },
                "mask_conditional" => Mutation::MaskConditional {
                    client: client("client")?,
                    feature: field(&parts, "feature", line)?.to_string(),
                    class: num_field(&parts, "class", line)? as u32,
                },
                other => {
                    return Err(Error::config(format!(
                        "shift spec: unknown mutation '{other}' (expected add_bias|scale|flip_target|mask_conditional)"
                    )))
                }
            };
            mutations.push(mutation);
        }
        Ok(ShiftSpec { mutations })
    }

    pub fn from_file(path: &Path) -> Result<ShiftSpec> {
        ShiftSpec::parse(&std::fs::read_to_string(path)?)
    }
}

/// Resolves a client reference (exact label, or a bare index into the client
/// list) to its index.
pub fn resolve_client(labels: &[String], reference: &str) -> Result<usize> {
    if let Some(i) = labels.iter().position(|l| l == reference) {
        return Ok(i);
    }
    if let Ok(i) = reference.parse::<usize>() {
        if i < labels.len() {
            return Ok(i);
        }
    }
    Err(Error::config(format!(
        "shift spec references unknown client '{reference}' (known: {})",
        labels.join(", ")
    )))
}

/// Resolves a feature reference (name or bare index) to its column.
pub fn resolve_feature(names: &[String], reference: &str) -> Result<usize> {
    if let Some(i) = names.iter().position(|n| n == reference) {
        return Ok(i);
    }
    if let Ok(i) = reference.parse::<usize>() {
        if i < names.len() {
            return Ok(i);
        }
    }
    Err(Error::config(format!(
        "shift spec references unknown feature '{reference}'"
    )))
}
