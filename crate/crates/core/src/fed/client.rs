//! Client-side training: one local epoch per round, personal layers retained
//! locally, only the shared block leaves the client.

use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::nn::{
    backward, forward, sgd_step, Gradients, OptimizerState, PersonalParams, SharedParams, WOut,
};
use crate::rng::{stream, Rng};

/// What a client discloses after its local epoch: the shared block only.
/// The message type has no personal-layer slot, so personalization cannot
/// cross the client boundary.
#[derive(Clone, Debug)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub n_samples: usize,
    pub shared: SharedParams,
}

/// APFL's private model and its optimizer.
#[derive(Clone, Debug)]
pub struct ApflState {
    pub local: SharedParams,
    pub opt: OptimizerState,
}

/// One client's full local state.
#[derive(Clone, Debug)]
pub struct ClientState {
    pub index: usize,
    pub label: String,
    pub data: ClientDataset,
    pub class_weights: Vec<f64>,
    pub shared: SharedParams,
    pub personal: PersonalParams,
    pub opt: OptimizerState,
    pub apfl: Option<ApflState>,
}

/// Shared hyper-parameters of one epoch.
#[derive(Clone, Copy, Debug)]
pub struct EpochSettings {
    pub seed: u64,
    pub round: usize,
    pub lr: f64,
    /// 0 means full batch.
    pub batch_size: usize,
    pub dropout: f64,
}

fn shuffled_batches(state: &ClientState, rng: &mut Rng, batch_size: usize) -> Result<Vec<Vec<usize>>> {
    if state.data.train_idx.is_empty() {
        return Err(Error::data(format!(
            "client '{}' has an empty training set",
            state.label
        )));
    }
    let mut order = state.data.train_idx.clone();
    rng.shuffle(&mut order);
    let bs = if batch_size == 0 { order.len() } else { batch_size };
    Ok(order.chunks(bs).map(<[usize]>::to_vec).collect())
}

/// One epoch of mini-batch SGD over the client's shuffled training rows,
/// updating the shared block and every enabled personal vector together.
/// Returns the post-epoch shared block.
pub fn local_epoch(state: &mut ClientState, s: &EpochSettings) -> Result<ClientUpdate> {
    state.opt.lr = s.lr;
    let mut rng = Rng::derive(s.seed, &[stream::EPOCH, state.index as u64, s.round as u64]);
    let batches = shuffled_batches(state, &mut rng, s.batch_size)?;
    let n_samples = state.data.train_idx.len();
    for idx in &batches {
        let batch = state.data.x.gather_rows(idx);
        let targets: Vec<u32> = idx.iter().map(|&i| state.data.y[i]).collect();
        let (_, cache) = forward(&state.shared, &state.personal, &batch, true, s.dropout, &mut rng)?;
        let (_, grads) = backward(&state.shared, &state.personal, &cache, &targets, &state.class_weights)?;
        sgd_step(&mut state.shared, &mut state.personal, &grads, &mut state.opt);
    }
    Ok(ClientUpdate {
        client_id: state.index,
        n_samples,
        shared: state.shared.clone(),
    })
}

fn scale_gradients(grads: &mut Gradients, factor: f64) {
    for t in grads.shared.tensors_mut() {
        for g in t {
            *g *= factor;
        }
    }
    for v in [&mut grads.b_in, &mut grads.w_in, &mut grads.b_out]
        .into_iter()
        .flatten()
    {
        for g in v {
            *g *= factor;
        }
    }
    if let Some(w) = &mut grads.w_out {
        match w {
            WOut::Vector(v) => {
                for g in v {
                    *g *= factor;
                }
            }
            WOut::Scalar(g) => *g *= factor,
        }
    }
}

/// APFL epoch: per batch the client's copy of the global model takes a plain
/// SGD step, then the private model takes a step on the loss of the blended
/// predictor `alpha·local + (1-alpha)·global` (chain rule puts a factor
/// `alpha` on the private gradient). Only the global copy is disclosed.
///
/// The blended pass draws its dropout from a separate stream so the global
/// copy consumes exactly the randomness a plain FedAvg client would.
pub fn apfl_step(state: &mut ClientState, s: &EpochSettings, alpha: f64) -> Result<ClientUpdate> {
    state.opt.lr = s.lr;
    let mut rng = Rng::derive(s.seed, &[stream::EPOCH, state.index as u64, s.round as u64]);
    let mut local_rng = Rng::derive(
        s.seed,
        &[stream::APFL_LOCAL, state.index as u64, s.round as u64],
    );
    let batches = shuffled_batches(state, &mut rng, s.batch_size)?;
    let n_samples = state.data.train_idx.len();
    for idx in &batches {
        let batch = state.data.x.gather_rows(idx);
        let targets: Vec<u32> = idx.iter().map(|&i| state.data.y[i]).collect();

        // (a) global copy
        let (_, cache) = forward(&state.shared, &state.personal, &batch, true, s.dropout, &mut rng)?;
        let (_, grads) = backward(&state.shared, &state.personal, &cache, &targets, &state.class_weights)?;
        sgd_step(&mut state.shared, &mut state.personal, &grads, &mut state.opt);

        // (b) private model, on the blended predictor (post-step global)
        let apfl = state
            .apfl
            .as_mut()
            .ok_or_else(|| Error::config("APFL step without APFL state"))?;
        apfl.opt.lr = s.lr;
        let blended = SharedParams::blend(alpha, &apfl.local, &state.shared);
        let (_, cache) = forward(&blended, &state.personal, &batch, true, s.dropout, &mut local_rng)?;
        let (_, mut grads) =
            backward(&blended, &state.personal, &cache, &targets, &state.class_weights)?;
        scale_gradients(&mut grads, alpha);
        let mut unused_personal = state.personal.clone();
        sgd_step(&mut apfl.local, &mut unused_personal, &grads, &mut apfl.opt);
    }
    Ok(ClientUpdate {
        client_id: state.index,
        n_samples,
        shared: state.shared.clone(),
    })
}

/// The parameters this client predicts with at evaluation time.
pub fn predictor_params(state: &ClientState, alpha: f64) -> SharedParams {
    match &state.apfl {
        Some(apfl) => SharedParams::blend(alpha, &apfl.local, &state.shared),
        None => state.shared.clone(),
    }
}
