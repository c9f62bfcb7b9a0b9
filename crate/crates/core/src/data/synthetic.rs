//! Synthetic federation fixture: IID standard-normal features and labels
//! from a fixed logistic model, identical generative law for every client.
//! With this construction any injected shift is the *only* systematic
//! difference between clients, which makes detection experiments exact.

use crate::data::table::{FeatureKind, RawTable};
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};

#[derive(Clone, Debug)]
pub struct SyntheticConfig {
    pub n_clients: usize,
    pub samples_per_client: usize,
    pub n_features: usize,
    /// Coefficients of the label model `y ~ Bernoulli(sigmoid(w · x))`.
    /// Defaults to all ones.
    pub logistic_weights: Option<Vec<f64>>,
    /// Features emitted as binary indicators `1{draw > 0}` instead of the
    /// raw normal draw. The label model sees the centered indicator
    /// `2 (x - 1/2)`, so binary and continuous coefficients are comparable.
    pub binary_features: Vec<usize>,
}

impl SyntheticConfig {
    pub fn new(n_clients: usize, samples_per_client: usize, n_features: usize) -> Self {
        SyntheticConfig {
            n_clients,
            samples_per_client,
            n_features,
            logistic_weights: None,
            binary_features: Vec::new(),
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.logistic_weights
            .clone()
            .unwrap_or_else(|| vec![1.0; self.n_features])
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Generates the synthetic federation as a raw table with clients
/// `client0..clientN-1` and features `f0..fD-1`.
pub fn generate(cfg: &SyntheticConfig, seed: u64) -> Result<RawTable> {
    if cfg.n_clients == 0 {
        return Err(Error::config("synthetic federation needs at least 1 client"));
    }
    if cfg.samples_per_client < 2 {
        return Err(Error::config("synthetic clients need at least 2 samples"));
    }
    if cfg.n_features == 0 {
        return Err(Error::config("synthetic federation needs at least 1 feature"));
    }
    let w = cfg.weights();
    if w.len() != cfg.n_features {
        return Err(Error::config(format!(
            "logistic model has {} weights for {} features",
            w.len(),
            cfg.n_features
        )));
    }

    let d = cfg.n_features;
    let total = cfg.n_clients * cfg.samples_per_client;
    let mut clients = Vec::with_capacity(total);
    let mut targets = Vec::with_capacity(total);
    let mut cells = Vec::with_capacity(total * d);

    let mut is_binary = vec![false; d];
    for &f in &cfg.binary_features {
        if f >= d {
            return Err(Error::config(format!(
                "binary feature index {f} out of range for {d} features"
            )));
        }
        is_binary[f] = true;
    }

    for c in 0..cfg.n_clients {
        let label = format!("client{c}");
        let mut rng = Rng::derive(seed, &[stream::SYNTH, c as u64]);
        for _ in 0..cfg.samples_per_client {
            let mut logit = 0.0;
            for (f, wj) in w.iter().enumerate() {
                let draw = rng.normal();
                let (x, centered) = if is_binary[f] {
                    let x = f64::from(draw > 0.0);
                    (x, 2.0 * (x - 0.5))
                } else {
                    (draw, draw)
                };
                logit += wj * centered;
                cells.push(Some(x));
            }
            let y = u32::from(rng.uniform() < sigmoid(logit));
            clients.push(label.clone());
            targets.push(y);
        }
    }

    let kinds = is_binary
        .iter()
        .map(|&b| if b { FeatureKind::Binary } else { FeatureKind::Continuous })
        .collect();
    Ok(RawTable {
        feature_names: (0..d).map(|f| format!("f{f}")).collect(),
        kinds,
        clients,
        targets,
        cells,
    })
}

/// Generates the synthetic federation and runs it through the default
/// pipeline (per-client standardization, seeded splits, no shifts),
/// yielding ready-to-train client datasets.
pub fn partition_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<crate::data::FederatedData> {
    let table = generate(cfg, seed)?;
    let opts = crate::data::PipelineOptions {
        mode: crate::data::StandardizeMode::PerClient,
        fit: crate::data::FitScope::FullLocal,
        seed,
    };
    crate::data::build_client_datasets(&table, None, &opts)
}
