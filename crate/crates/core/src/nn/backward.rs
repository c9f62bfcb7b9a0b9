//! Backpropagation through the combined model.
//!
//! One pass produces gradients for the shared block and every *trainable*
//! personal vector; frozen vectors get no gradient. The input-affine
//! gradients stay element-wise: feature `j`'s slots see only feature `j`'s
//! chain.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::forward::ForwardCache;
use crate::nn::loss::loss_and_grad;
use crate::nn::params::{PersonalParams, SharedParams, WOut};

/// Gradient set, shaped like the parameters it belongs to.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub shared: SharedParams,
    pub b_in: Option<Vec<f64>>,
    pub w_in: Option<Vec<f64>>,
    pub b_out: Option<Vec<f64>>,
    pub w_out: Option<WOut>,
}

fn mul_mask(m: &Matrix, mask: Option<&[f64]>) -> Matrix {
    match mask {
        None => m.clone(),
        Some(mask) => {
            let mut out = Matrix::zeros(m.rows(), m.cols());
            for (o, (v, f)) in out.as_mut_slice().iter_mut().zip(m.as_slice().iter().zip(mask)) {
                *o = *v * *f;
            }
            out
        }
    }
}

/// Backpropagates the weighted NLL loss through a cached forward pass.
/// Returns the loss value alongside the gradients.
pub fn backward(
    shared: &SharedParams,
    personal: &PersonalParams,
    cache: &ForwardCache,
    targets: &[u32],
    class_weights: &[f64],
) -> Result<(f64, Gradients)> {
    if targets.len() != cache.batch_size() {
        return Err(Error::shape(format!(
            "{} targets for a cached batch of {} rows",
            targets.len(),
            cache.batch_size()
        )));
    }
    let (loss, g_logits) = loss_and_grad(&cache.logits, targets, class_weights)?;
    let b = cache.batch_size();
    let k = shared.k;

    // Output affine: logits[.,k] = (y[.,k] + b_out[k]) * w_out[k]
    let g_b_out = personal.train_b_out.then(|| {
        (0..k)
            .map(|j| {
                let w = personal.w_out.at(j);
                (0..b).map(|r| g_logits.get(r, j) * w).sum()
            })
            .collect::<Vec<f64>>()
    });
    let g_w_out = personal.train_w_out.then(|| match &personal.w_out {
        WOut::Vector(_) => WOut::Vector(
            (0..k)
                .map(|j| {
                    (0..b)
                        .map(|r| g_logits.get(r, j) * (cache.shared_out.get(r, j) + personal.b_out[j]))
                        .sum()
                })
                .collect(),
        ),
        WOut::Scalar(_) => {
            let mut acc = 0.0;
            for r in 0..b {
                for j in 0..k {
                    acc += g_logits.get(r, j) * (cache.shared_out.get(r, j) + personal.b_out[j]);
                }
            }
            WOut::Scalar(acc)
        }
    });

    // Into the shared block: dy = g_logits * w_out (per column).
    let mut g_y = g_logits;
    for r in 0..b {
        let row = g_y.row_mut(r);
        for (j, v) in row.iter_mut().enumerate() {
            *v *= personal.w_out.at(j);
        }
    }

    let mut grads = Gradients {
        shared: SharedParams::zeros(shared.d, shared.k),
        b_in: None,
        w_in: None,
        b_out: g_b_out,
        w_out: g_w_out,
    };

    // Layer 3 (linear).
    cache
        .h2
        .matmul_transpose_self_into(&g_y, &mut grads.shared.w3);
    grads.shared.b3 = g_y.column_sums();
    let g_h2 = g_y.matmul(&shared.w3.transposed());

    // Dropout 2 + tanh 2.
    let mut g_z2 = mul_mask(&g_h2, cache.mask2.as_deref());
    for (g, t) in g_z2.as_mut_slice().iter_mut().zip(cache.t2.as_slice()) {
        *g *= 1.0 - t * t;
    }

    // Layer 2.
    cache
        .h1
        .matmul_transpose_self_into(&g_z2, &mut grads.shared.w2);
    grads.shared.b2 = g_z2.column_sums();
    let g_h1 = g_z2.matmul(&shared.w2.transposed());

    // Dropout 1 + tanh 1.
    let mut g_z1 = mul_mask(&g_h1, cache.mask1.as_deref());
    for (g, t) in g_z1.as_mut_slice().iter_mut().zip(cache.t1.as_slice()) {
        *g *= 1.0 - t * t;
    }

    // Layer 1.
    cache
        .h0
        .matmul_transpose_self_into(&g_z1, &mut grads.shared.w1);
    grads.shared.b1 = g_z1.column_sums();

    // Input affine, only when trained: d a0[.,j] arrives via dropout 0;
    // b_in[j] sees w_in[j] * g, w_in[j] sees (x[.,j] + b_in[j]) * g.
    if personal.train_b_in || personal.train_w_in {
        let g_h0 = g_z1.matmul(&shared.w1.transposed());
        let g_a0 = mul_mask(&g_h0, cache.mask0.as_deref());
        let d = shared.d;
        if personal.train_b_in {
            let mut g_b_in = vec![0.0; d];
            for r in 0..b {
                let row = g_a0.row(r);
                for j in 0..d {
                    g_b_in[j] += row[j] * personal.w_in[j];
                }
            }
            grads.b_in = Some(g_b_in);
        }
        if personal.train_w_in {
            let mut g_w_in = vec![0.0; d];
            for r in 0..b {
                let row = g_a0.row(r);
                let xrow = cache.x.row(r);
                for j in 0..d {
                    g_w_in[j] += row[j] * (xrow[j] + personal.b_in[j]);
                }
            }
            grads.w_in = Some(g_w_in);
        }
    }

    Ok((loss, grads))
}
