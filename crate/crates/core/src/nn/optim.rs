//! Classical-momentum SGD and the stepped learning-rate schedule.

use crate::nn::backward::Gradients;
use crate::nn::params::{PersonalParams, SharedParams, WOut};

/// Velocity buffers mirroring every parameter, plus the current step size.
///
/// Velocities are zero at construction and persist for the lifetime of the
/// state (per client, across rounds). `momentum = 0` reduces to vanilla SGD.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub lr: f64,
    pub momentum: f64,
    v_shared: SharedParams,
    v_b_in: Vec<f64>,
    v_w_in: Vec<f64>,
    v_b_out: Vec<f64>,
    v_w_out: WOut,
}

impl OptimizerState {
    pub fn new(personal: &PersonalParams, d: usize, k: usize, lr: f64, momentum: f64) -> Self {
        let v_w_out = match personal.w_out {
            WOut::Vector(_) => WOut::Vector(vec![0.0; k]),
            WOut::Scalar(_) => WOut::Scalar(0.0),
        };
        OptimizerState {
            lr,
            momentum,
            v_shared: SharedParams::zeros(d, k),
            v_b_in: vec![0.0; d],
            v_w_in: vec![0.0; d],
            v_b_out: vec![0.0; k],
            v_w_out,
        }
    }

    /// Resets every velocity buffer to zero.
    pub fn reset_velocities(&mut self) {
        let (d, k) = (self.v_shared.d, self.v_shared.k);
        self.v_shared = SharedParams::zeros(d, k);
        self.v_b_in.fill(0.0);
        self.v_w_in.fill(0.0);
        self.v_b_out.fill(0.0);
        self.v_w_out = match self.v_w_out {
            WOut::Vector(_) => WOut::Vector(vec![0.0; k]),
            WOut::Scalar(_) => WOut::Scalar(0.0),
        };
    }
}

#[inline]
fn step_slice(params: &mut [f64], grads: &[f64], vel: &mut [f64], lr: f64, mu: f64) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), vel.len());
    for ((p, g), v) in params.iter_mut().zip(grads).zip(vel.iter_mut()) {
        *v = mu * *v + *g;
        *p -= lr * *v;
    }
}

/// One update: `v ← μ·v + g; p ← p − lr·v`, applied to the shared block and
/// every personal vector that has a gradient.
pub fn sgd_step(
    shared: &mut SharedParams,
    personal: &mut PersonalParams,
    grads: &Gradients,
    opt: &mut OptimizerState,
) {
    let (lr, mu) = (opt.lr, opt.momentum);
    for ((p, g), v) in shared
        .tensors_mut()
        .into_iter()
        .zip(grads.shared.tensors())
        .zip(opt.v_shared.tensors_mut())
    {
        step_slice(p, g, v, lr, mu);
    }
    if let Some(g) = &grads.b_in {
        step_slice(&mut personal.b_in, g, &mut opt.v_b_in, lr, mu);
    }
    if let Some(g) = &grads.w_in {
        step_slice(&mut personal.w_in, g, &mut opt.v_w_in, lr, mu);
    }
    if let Some(g) = &grads.b_out {
        step_slice(&mut personal.b_out, g, &mut opt.v_b_out, lr, mu);
    }
    if let Some(g) = &grads.w_out {
        match (&mut personal.w_out, g, &mut opt.v_w_out) {
            (WOut::Vector(p), WOut::Vector(g), WOut::Vector(v)) => step_slice(p, g, v, lr, mu),
            (WOut::Scalar(p), WOut::Scalar(g), WOut::Scalar(v)) => {
                *v = mu * *v + *g;
                *p -= lr * *v;
            }
            _ => panic!("w_out gradient/velocity mode mismatch"),
        }
    }
}

/// Stepped decay: `base_lr * 0.9^floor(round * 50 / total_rounds)`,
/// i.e. fifty 0.9 steps spread evenly over the full horizon.
pub fn lr_schedule(round: usize, base_lr: f64, total_rounds: usize) -> f64 {
    if total_rounds == 0 {
        return base_lr;
    }
    let exponent = (round * 50 / total_rounds) as i32;
    base_lr * 0.9f64.powi(exponent)
}
