//! The simulated round protocol: broadcast, parallel client phase,
//! aggregation barrier.

use crate::data::{class_weights, ClientDataset, FederatedData};
use crate::error::{Error, Result};
use crate::fed::client::{
    apfl_step, local_epoch, predictor_params, ApflState, ClientState, ClientUpdate, EpochSettings,
};
use crate::fed::config::{Algorithm, ExperimentConfig};
use crate::matrix::Matrix;
use crate::metrics::{balanced_accuracy, f1_weighted, roc_auc_ovo, ClientScore};
use crate::nn::{lr_schedule, predict, softmax_rows, OptimizerState, PersonalParams, SharedParams};
use crate::rng::{stream, Rng};

/// Unweighted parameter-wise mean of the clients' shared blocks. Sample
/// counts are carried in the updates but ignored under uniform weighting.
pub fn aggregate_uniform(updates: &[ClientUpdate]) -> Result<SharedParams> {
    let first = updates
        .first()
        .ok_or_else(|| Error::data("aggregation needs at least one update"))?;
    let mut out = SharedParams::zeros(first.shared.d, first.shared.k);
    for u in updates {
        if !u.shared.same_shape(&out) {
            return Err(Error::shape(format!(
                "update from client {} has mismatched dimensions",
                u.client_id
            )));
        }
        for (acc, t) in out.tensors_mut().into_iter().zip(u.shared.tensors()) {
            for (a, v) in acc.iter_mut().zip(t) {
                *a += *v;
            }
        }
    }
    let n = updates.len() as f64;
    for t in out.tensors_mut() {
        for v in t {
            *v /= n;
        }
    }
    Ok(out)
}

/// One seeded federation mid-training.
#[derive(Clone, Debug)]
pub struct FederationState {
    pub seed: u64,
    pub round: usize,
    pub config: ExperimentConfig,
    pub server_shared: SharedParams,
    pub clients: Vec<ClientState>,
    /// Original per-client datasets, kept for evaluation when training runs
    /// on a pooled pseudo-client (the centralized regime).
    pub eval_datasets: Option<Vec<ClientDataset>>,
}

fn pooled_training_client(data: &FederatedData) -> Result<ClientDataset> {
    let nf = data.n_features;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    for c in &data.clients {
        for &i in &c.train_idx {
            rows.push(c.x.row(i).to_vec());
            y.push(c.y[i]);
        }
    }
    let n = rows.len();
    let first = data
        .clients
        .first()
        .ok_or_else(|| Error::data("no clients to pool"))?;
    Ok(ClientDataset {
        label: "pooled".to_string(),
        x: Matrix::from_rows(&rows)?,
        y,
        train_idx: (0..n).collect(),
        test_idx: Vec::new(),
        feature_names: first.feature_names.clone(),
        kinds: first.kinds.clone(),
        stats: vec![(0.0, 1.0); nf],
    })
}

impl FederationState {
    /// Builds the round-0 state: seeded shared init broadcast to every
    /// client, identity personal layers with trainability from the config,
    /// zeroed optimizers, per-client class weights on training labels.
    pub fn setup(config: &ExperimentConfig, data: &FederatedData, seed: u64) -> Result<Self> {
        config.validate()?;
        if data.clients.is_empty() {
            return Err(Error::data("federation needs at least one client"));
        }
        let d = data.n_features;
        let k = data.n_classes;
        let mut init_rng = Rng::derive(seed, &[stream::INIT]);
        let server_shared = SharedParams::init(d, k, &mut init_rng);

        let algorithm = config.algorithm;
        let (train_input, fout) = if algorithm == Algorithm::IFedAvg {
            (config.train_input, config.fout)
        } else {
            (false, crate::nn::FOutMode::None)
        };
        let momentum = config.effective_momentum();

        let mut eval_datasets = None;
        let train_sets: Vec<ClientDataset> = if algorithm == Algorithm::Centralized {
            let pooled = pooled_training_client(data)?;
            eval_datasets = Some(data.clients.clone());
            vec![pooled]
        } else {
            data.clients.clone()
        };

        let clients = train_sets
            .into_iter()
            .enumerate()
            .map(|(index, ds)| {
                let train_labels: Vec<u32> = ds.train_idx.iter().map(|&i| ds.y[i]).collect();
                let weights = class_weights(&train_labels, k).map_err(|e| {
                    Error::data(format!("client '{}': {e}", ds.label))
                })?;
                let personal = PersonalParams::identity(d, k, train_input, fout);
                let opt = OptimizerState::new(&personal, d, k, config.base_lr, momentum);
                let apfl = (algorithm == Algorithm::Apfl).then(|| ApflState {
                    local: server_shared.clone(),
                    opt: OptimizerState::new(&personal, d, k, config.base_lr, 0.0),
                });
                Ok(ClientState {
                    index,
                    label: ds.label.clone(),
                    data: ds,
                    class_weights: weights,
                    shared: server_shared.clone(),
                    personal,
                    opt,
                    apfl,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(FederationState {
            seed,
            round: 0,
            config: config.clone(),
            server_shared,
            clients,
            eval_datasets,
        })
    }

    fn client_phase(&mut self, settings: EpochSettings) -> Result<Vec<ClientUpdate>> {
        let alpha = self.config.alpha;
        let algorithm = self.config.algorithm;
        let run_one = move |c: &mut ClientState| -> Result<ClientUpdate> {
            match algorithm {
                Algorithm::Apfl => apfl_step(c, &settings, alpha),
                _ => local_epoch(c, &settings),
            }
        };

        let threads = match self.config.threads {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
        .min(self.clients.len());

        let results: Vec<Result<ClientUpdate>> = if threads <= 1 || self.clients.len() <= 1 {
            self.clients.iter_mut().map(run_one).collect()
        } else {
            // Chunked scoped threads: client order inside the result vector
            // is fixed, so scheduling cannot affect aggregation order.
            let chunk = self.clients.len().div_ceil(threads);
            std::thread::scope(|s| {
                let handles: Vec<_> = self
                    .clients
                    .chunks_mut(chunk)
                    .map(|part| s.spawn(move || part.iter_mut().map(run_one).collect::<Vec<_>>()))
                    .collect();
                handles
                    .into_iter()
                    .flat_map(|h| h.join().expect("client thread panicked"))
                    .collect()
            })
        };
        results.into_iter().collect()
    }

    /// One protocol round: schedule the learning rate, run every client's
    /// local epoch from the current broadcast, aggregate, broadcast. The
    /// local regime skips aggregation entirely.
    pub fn run_round(&mut self) -> Result<()> {
        let lr = lr_schedule(self.round, self.config.base_lr, self.config.rounds);
        if self.config.reset_momentum_each_round {
            for c in &mut self.clients {
                c.opt.reset_velocities();
                if let Some(apfl) = &mut c.apfl {
                    apfl.opt.reset_velocities();
                }
            }
        }
        let settings = EpochSettings {
            seed: self.seed,
            round: self.round,
            lr,
            batch_size: self.config.batch_size,
            dropout: self.config.dropout,
        };
        let updates = self.client_phase(settings)?;
        if self.config.algorithm != Algorithm::Local {
            self.server_shared = aggregate_uniform(&updates)?;
            for c in &mut self.clients {
                c.shared = self.server_shared.clone();
            }
        }
        self.round += 1;
        Ok(())
    }

    /// Runs all configured rounds.
    pub fn run_to_completion(&mut self) -> Result<()> {
        while self.round < self.config.rounds {
            self.run_round()?;
        }
        Ok(())
    }

    /// Test-set scores of every client. Evaluation is deterministic
    /// (dropout off) and never consumes randomness.
    pub fn evaluate(&self) -> Result<Vec<ClientScore>> {
        match (&self.eval_datasets, self.config.algorithm) {
            (Some(datasets), _) => {
                // pooled training: evaluate the server model on each
                // original client's held-out rows
                let personal = PersonalParams::frozen_identity(
                    self.server_shared.d,
                    self.server_shared.k,
                );
                datasets
                    .iter()
                    .map(|ds| score_client(&self.server_shared, &personal, ds, self.seed))
                    .collect()
            }
            (None, Algorithm::Apfl) => self
                .clients
                .iter()
                .map(|c| {
                    let params = predictor_params(c, self.config.alpha);
                    score_client(&params, &c.personal, &c.data, self.seed)
                })
                .collect(),
            (None, _) => self
                .clients
                .iter()
                .map(|c| score_client(&c.shared, &c.personal, &c.data, self.seed))
                .collect(),
        }
    }
}

/// Scores one client's held-out rows with the given parameters.
pub fn score_client(
    shared: &SharedParams,
    personal: &PersonalParams,
    data: &ClientDataset,
    seed: u64,
) -> Result<ClientScore> {
    if data.test_idx.is_empty() {
        return Err(Error::data(format!(
            "client '{}' has no held-out rows to evaluate",
            data.label
        )));
    }
    let batch = data.x.gather_rows(&data.test_idx);
    let y_true: Vec<u32> = data.test_idx.iter().map(|&i| data.y[i]).collect();
    let logits = predict(shared, personal, &batch)?;
    let probs = softmax_rows(&logits);
    let y_pred: Vec<u32> = (0..probs.rows())
        .map(|r| {
            let row = probs.row(r);
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect();
    Ok(ClientScore {
        client: data.label.clone(),
        seed,
        f1: f1_weighted(&y_true, &y_pred)?,
        roc_auc: roc_auc_ovo(&y_true, &probs)?,
        balanced_acc: balanced_accuracy(&y_true, &y_pred)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn update(vals: [f64; 2], id: usize) -> ClientUpdate {
        let mut p = SharedParams::zeros(1, 1);
        p.b1[0] = vals[0];
        p.b2[0] = vals[1];
        ClientUpdate { client_id: id, n_samples: 10, shared: p }
    }

    #[test]
    fn mean_of_one_is_identity() {
        let u = update([0.25, -1.5], 0);
        let agg = aggregate_uniform(std::slice::from_ref(&u)).unwrap();
        assert!(agg.bits_eq(&u.shared));
    }

    #[test]
    fn opposite_updates_cancel() {
        let a = update([1.0, 2.0], 0);
        let b = update([-1.0, -2.0], 1);
        let agg = aggregate_uniform(&[a, b]).unwrap();
        assert_eq!(agg.b1[0], 0.0);
        assert_eq!(agg.b2[0], 0.0);
    }

    #[test]
    fn three_scalars_average_to_their_mean() {
        let agg = aggregate_uniform(&[update([1.0, 0.0], 0), update([3.0, 0.0], 1), update([5.0, 0.0], 2)])
            .unwrap();
        assert_eq!(agg.b1[0], 3.0);
    }

    #[test]
    fn empty_aggregation_is_an_error() {
        assert!(aggregate_uniform(&[]).is_err());
    }
}
