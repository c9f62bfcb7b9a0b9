//! Experiment configuration: algorithms, defaults, and the key=value file
//! format.

use std::path::Path;

use crate::data::{FitScope, ShiftSpec, StandardizeMode};
use crate::error::{Error, Result};
use crate::nn::FOutMode;

/// Default seeds used when none are given; every algorithm sees the same
/// seeds, hence identical initialization and splits.
pub const DEFAULT_SEEDS: [u64; 5] = [2934384, 10231938, 8273, 2019231, 62739];

/// Training regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Each client trains alone; nothing is shared.
    Local,
    /// One model on the concatenation of all training data.
    Centralized,
    /// Plain federated averaging.
    FedAvg,
    /// Federated averaging with locally retained element-wise affine layers.
    IFedAvg,
    /// Adaptive blend of a private and the global model.
    Apfl,
}

impl Algorithm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Algorithm::Local),
            "central" | "centralized" => Ok(Algorithm::Centralized),
            "fedavg" => Ok(Algorithm::FedAvg),
            "ifedavg" => Ok(Algorithm::IFedAvg),
            "apfl" => Ok(Algorithm::Apfl),
            other => Err(Error::config(format!(
                "unknown algorithm '{other}' (expected local|central|fedavg|ifedavg|apfl)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Local => "local",
            Algorithm::Centralized => "central",
            Algorithm::FedAvg => "fedavg",
            Algorithm::IFedAvg => "ifedavg",
            Algorithm::Apfl => "apfl",
        }
    }
}

/// Full description of one experiment. The defaults reproduce the standard
/// regime: 1000 rounds, SGD at 0.002 with fifty 0.9 decay steps, client-side
/// momentum 0.5 (disabled for APFL), batch size 32, dropout 0.2, five fixed
/// seeds, per-client standardization.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub rounds: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub alpha: f64,
    /// Mini-batch size; 0 means full batch.
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub fout: FOutMode,
    /// Train the input affine layer (iFedAvg only).
    pub train_input: bool,
    pub standardize: StandardizeMode,
    pub fit_scope: FitScope,
    pub dropout: f64,
    pub shift: Option<ShiftSpec>,
    /// Evaluate every k rounds in addition to the final evaluation.
    pub eval_every: Option<usize>,
    /// Zero the momentum buffers at the start of every round.
    pub reset_momentum_each_round: bool,
    /// Worker threads for the client phase; 0 = number of cores.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithm: Algorithm::IFedAvg,
            rounds: 1000,
            base_lr: 0.002,
            momentum: 0.5,
            alpha: 0.5,
            batch_size: 32,
            seeds: DEFAULT_SEEDS.to_vec(),
            fout: FOutMode::None,
            train_input: true,
            standardize: StandardizeMode::PerClient,
            fit_scope: FitScope::FullLocal,
            dropout: 0.2,
            shift: None,
            eval_every: None,
            reset_momentum_each_round: false,
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    /// Momentum actually applied: forced to 0 under APFL.
    pub fn effective_momentum(&self) -> f64 {
        if self.algorithm == Algorithm::Apfl {
            0.0
        } else {
            self.momentum
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.base_lr <= 0.0 {
            return Err(Error::config(format!("lr {} must be > 0", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.momentum < 0.0 || self.momentum >= 1.0 {
            return Err(Error::config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.eval_every == Some(0) {
            return Err(Error::config("eval_every must be positive"));
        }
        Ok(())
    }

    /// Applies one `key=value` setting. Returns false when the key is not a
    /// training key (callers may handle paths and the like themselves).
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = |what: &str| Error::config(format!("config key {key}: invalid {what} '{value}'"));
        match key {
            "algorithm" => self.algorithm = Algorithm::parse(value)?,
            "rounds" => self.rounds = value.parse().map_err(|_| bad("integer"))?,
            "lr" | "base_lr" => self.base_lr = value.parse().map_err(|_| bad("number"))?,
            "momentum" => self.momentum = value.parse().map_err(|_| bad("number"))?,
            "alpha" => self.alpha = value.parse().map_err(|_| bad("number"))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad("integer"))?,
            "dropout" => self.dropout = value.parse().map_err(|_| bad("number"))?,
            "seeds" => self.seeds = parse_seed_list(value)?,
            "fout" => self.fout = FOutMode::parse(value)?,
            "train_input" => self.train_input = parse_bool(value).ok_or_else(|| bad("bool"))?,
            "standardize" => self.standardize = StandardizeMode::parse(value)?,
            "fit_on_train_only" => {
                self.fit_scope = if parse_bool(value).ok_or_else(|| bad("bool"))? {
                    FitScope::TrainOnly
                } else {
                    FitScope::FullLocal
                }
            }
            "inject" => {
                // inline mutations, or @path to a shift-spec file
                let spec = match value.strip_prefix('@') {
                    Some(path) => ShiftSpec::from_file(std::path::Path::new(path))?,
                    None => ShiftSpec::parse(value)?,
                };
                self.shift = Some(spec);
            }
            "eval_every" => self.eval_every = Some(value.parse().map_err(|_| bad("integer"))?),
            "reset_momentum_each_round" => {
                self.reset_momentum_each_round = parse_bool(value).ok_or_else(|| bad("bool"))?
            }
            "threads" => self.threads = value.parse().map_err(|_| bad("integer"))?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Loads settings from a line-oriented key=value file; unknown keys are
    /// returned for the caller to interpret.
    pub fn apply_file(&mut self, path: &Path) -> Result<Vec<(String, String)>> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut leftover = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!(
                    "config line {}: expected key=value, got '{line}'",
                    lineno + 1
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !self.apply_kv(key, value)? {
                leftover.push((key.to_string(), value.to_string()));
            }
        }
        Ok(leftover)
    }

    /// Canonical text form (stable key order) used for hashing and manifests.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("algorithm={}\n", self.algorithm.name()));
        s.push_str(&format!("rounds={}\n", self.rounds));
        s.push_str(&format!("lr={}\n", self.base_lr));
        s.push_str(&format!("momentum={}\n", self.momentum));
        s.push_str(&format!("alpha={}\n", self.alpha));
        s.push_str(&format!("batch_size={}\n", self.batch_size));
        s.push_str(&format!("dropout={}\n", self.dropout));
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        s.push_str(&format!("seeds={}\n", seeds.join(",")));
        s.push_str(&format!("fout={}\n", self.fout.name()));
        s.push_str(&format!("train_input={}\n", self.train_input));
        s.push_str(&format!("standardize={}\n", self.standardize.name()));
        s.push_str(&format!(
            "fit_on_train_only={}\n",
            self.fit_scope == FitScope::TrainOnly
        ));
        if let Some(spec) = &self.shift {
            for m in &spec.mutations {
                s.push_str(&format!("inject={}\n", m.describe()));
            }
        }
        if let Some(k) = self.eval_every {
            s.push_str(&format!("eval_every={k}\n"));
        }
        s.push_str(&format!(
            "reset_momentum_each_round={}\n",
            self.reset_momentum_each_round
        ));
        s
    }
}

pub fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

pub fn parse_seed_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| Error::config(format!("invalid seed '{t}'")))
        })
        .collect()
}

/// FNV-1a over the canonical config text plus a dataset fingerprint.
pub fn config_hash(canonical: &str, dataset_fingerprint: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical.bytes().chain(dataset_fingerprint.bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reproduce_the_standard_regime() {
        let c = ExperimentConfig::default();
        assert_eq!(c.rounds, 1000);
        assert_eq!(c.base_lr, 0.002);
        assert_eq!(c.momentum, 0.5);
        assert_eq!(c.alpha, 0.5);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.dropout, 0.2);
        assert_eq!(c.seeds, vec![2934384, 10231938, 8273, 2019231, 62739]);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn apfl_momentum_is_forced_off() {
        let mut c = ExperimentConfig::default();
        c.algorithm = Algorithm::Apfl;
        assert_eq!(c.effective_momentum(), 0.0);
        c.algorithm = Algorithm::FedAvg;
        assert_eq!(c.effective_momentum(), 0.5);
    }

    #[test]
    fn kv_round_trips_through_canonical_string() {
        let mut c = ExperimentConfig::default();
        assert!(c.apply_kv("algorithm", "apfl").unwrap());
        assert!(c.apply_kv("rounds", "20").unwrap());
        assert!(c.apply_kv("seeds", "1, 2,3").unwrap());
        assert!(c.apply_kv("fout", "scalar-weight").unwrap());
        assert!(!c.apply_kv("dataset", "d.csv").unwrap());
        assert_eq!(c.seeds, vec![1, 2, 3]);
        let mut c2 = ExperimentConfig::default();
        for line in c.canonical_string().lines() {
            let (k, v) = line.split_once('=').unwrap();
            c2.apply_kv(k, v).unwrap();
        }
        assert_eq!(c2.canonical_string(), c.canonical_string());
    }

    #[test]
    fn validation_rejects_bad_ranges() {
        let mut c = ExperimentConfig::default();
        c.alpha = 1.5;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.base_lr = 0.0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.seeds.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let c = ExperimentConfig::default();
        let h1 = config_hash(&c.canonical_string(), "rows=10");
        let h2 = config_hash(&c.canonical_string(), "rows=10");
        let h3 = config_hash(&c.canonical_string(), "rows=11");
        assert_eq!(h1, h2);
        assert_ne!(h1, h3);
    }
}
