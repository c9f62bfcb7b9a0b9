//! Model parameters: the shared MLP block and the per-client affine layers.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// First hidden width of the shared block.
pub const HIDDEN1: usize = 128;
/// Second hidden width of the shared block.
pub const HIDDEN2: usize = 64;

/// Weights and biases of the shared MLP `D -> 128 -> 64 -> K`
/// (tanh on the two hidden layers, linear output).
///
/// Weight matrices are stored `(in, out)` row-major so a batch forward is a
/// plain `batch · W` product.
#[derive(Clone, Debug, PartialEq)]
pub struct SharedParams {
    pub d: usize,
    pub k: usize,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub w3: Matrix,
    pub b3: Vec<f64>,
}

impl SharedParams {
    pub fn zeros(d: usize, k: usize) -> Self {
        SharedParams {
            d,
            k,
            w1: Matrix::zeros(d, HIDDEN1),
            b1: vec![0.0; HIDDEN1],
            w2: Matrix::zeros(HIDDEN1, HIDDEN2),
            b2: vec![0.0; HIDDEN2],
            w3: Matrix::zeros(HIDDEN2, k),
            b3: vec![0.0; k],
        }
    }

    /// Seeded init: every weight and bias uniform in `±1/√fan_in` of its
    /// layer, drawn in a fixed order from `rng`.
    pub fn init(d: usize, k: usize, rng: &mut Rng) -> Self {
        let mut p = SharedParams::zeros(d, k);
        let fill = |xs: &mut [f64], bound: f64, rng: &mut Rng| {
            for x in xs {
                *x = rng.uniform_in(-bound, bound);
            }
        };
        let bound1 = 1.0 / (d as f64).sqrt();
        let bound2 = 1.0 / (HIDDEN1 as f64).sqrt();
        let bound3 = 1.0 / (HIDDEN2 as f64).sqrt();
        fill(p.w1.as_mut_slice(), bound1, rng);
        fill(&mut p.b1, bound1, rng);
        fill(p.w2.as_mut_slice(), bound2, rng);
        fill(&mut p.b2, bound2, rng);
        fill(p.w3.as_mut_slice(), bound3, rng);
        fill(&mut p.b3, bound3, rng);
        p
    }

    /// All six tensors in a fixed order (w1, b1, w2, b2, w3, b3).
    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
            self.w3.as_slice(),
            &self.b3,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
            self.w3.as_mut_slice(),
            &mut self.b3,
        ]
    }

    pub fn param_count(&self) -> usize {
        shared_param_count(self.d, self.k)
    }

    pub fn same_shape(&self, other: &SharedParams) -> bool {
        self.d == other.d && self.k == other.k
    }

    pub fn bits_eq(&self, other: &SharedParams) -> bool {
        self.same_shape(other)
            && self
                .tensors()
                .iter()
                .zip(other.tensors().iter())
                .all(|(a, b)| {
                    a.iter()
                        .zip(b.iter())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
                })
    }

    /// Parameter-wise blend `alpha * local + (1 - alpha) * global`
    /// (the APFL personalized predictor).
    pub fn blend(alpha: f64, local: &SharedParams, global: &SharedParams) -> SharedParams {
        assert!(local.same_shape(global), "blend shape");
        let mut out = local.clone();
        for (o, g) in out.tensors_mut().into_iter().zip(global.tensors()) {
            for (ov, gv) in o.iter_mut().zip(g) {
                *ov = alpha * *ov + (1.0 - alpha) * *gv;
            }
        }
        out
    }
}

/// Number of parameters in the shared block.
pub fn shared_param_count(d: usize, k: usize) -> usize {
    d * HIDDEN1 + HIDDEN1 + HIDDEN1 * HIDDEN2 + HIDDEN2 + HIDDEN2 * k + k
}

/// Number of parameters in the personal layers: `2D + 2K` in vector mode,
/// `2D + K + 1` when the output weight is a single scalar.
pub fn personal_param_count(d: usize, k: usize, scalar_w_out: bool) -> usize {
    if scalar_w_out {
        2 * d + k + 1
    } else {
        2 * d + 2 * k
    }
}

/// Which parts of the output layer a client trains locally.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FOutMode {
    /// Output layer frozen at identity.
    None,
    /// Train the output bias only.
    Bias,
    /// Train the output weight vector only.
    Weight,
    /// Train output bias and weight vector.
    Both,
    /// Train a single scalar output weight.
    ScalarWeight,
}

impl FOutMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FOutMode::None),
            "bias" => Ok(FOutMode::Bias),
            "weight" => Ok(FOutMode::Weight),
            "both" => Ok(FOutMode::Both),
            "scalar-weight" => Ok(FOutMode::ScalarWeight),
            other => Err(Error::config(format!(
                "unknown f_out mode '{other}' (expected none|bias|weight|both|scalar-weight)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FOutMode::None => "none",
            FOutMode::Bias => "bias",
            FOutMode::Weight => "weight",
            FOutMode::Both => "both",
            FOutMode::ScalarWeight => "scalar-weight",
        }
    }
}

/// Output-layer weight: one value per logit, or a single shared scalar.
#[derive(Clone, Debug, PartialEq)]
pub enum WOut {
    Vector(Vec<f64>),
    Scalar(f64),
}

impl WOut {
    /// Value applied to logit `j`.
    #[inline]
    pub fn at(&self, j: usize) -> f64 {
        match self {
            WOut::Vector(v) => v[j],
            WOut::Scalar(s) => *s,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            WOut::Vector(v) => v.clone(),
            WOut::Scalar(s) => vec![*s],
        }
    }
}

/// Per-client element-wise affine layers around the shared block.
///
/// The input map is `(x + b_in) ⊙ w_in`, the output map `(y + b_out) ⊙ w_out`.
/// Fresh layers are the identity (bias 0, weight 1) so an untrained client is
/// indistinguishable from the bare shared model. The `train_*` flags mark
/// which vectors receive gradients; frozen vectors are still applied.
#[derive(Clone, Debug, PartialEq)]
pub struct PersonalParams {
    pub b_in: Vec<f64>,
    pub w_in: Vec<f64>,
    pub b_out: Vec<f64>,
    pub w_out: WOut,
    pub train_b_in: bool,
    pub train_w_in: bool,
    pub train_b_out: bool,
    pub train_w_out: bool,
}

impl PersonalParams {
    /// Identity layers with trainability derived from the run configuration.
    pub fn identity(d: usize, k: usize, train_input: bool, fout: FOutMode) -> Self {
        let w_out = match fout {
            FOutMode::ScalarWeight => WOut::Scalar(1.0),
            _ => WOut::Vector(vec![1.0; k]),
        };
        PersonalParams {
            b_in: vec![0.0; d],
            w_in: vec![1.0; d],
            b_out: vec![0.0; k],
            w_out,
            train_b_in: train_input,
            train_w_in: train_input,
            train_b_out: matches!(fout, FOutMode::Bias | FOutMode::Both),
            train_w_out: matches!(
                fout,
                FOutMode::Weight | FOutMode::Both | FOutMode::ScalarWeight
            ),
        }
    }

    /// Fully frozen identity layers (the plain-FedAvg configuration).
    pub fn frozen_identity(d: usize, k: usize) -> Self {
        Self::identity(d, k, false, FOutMode::None)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.b_in.len(), self.b_out.len())
    }

    pub fn is_scalar_w_out(&self) -> bool {
        matches!(self.w_out, WOut::Scalar(_))
    }

    /// Total personal parameter count (trainable or not).
    pub fn param_count(&self) -> usize {
        let (d, k) = self.dims();
        personal_param_count(d, k, self.is_scalar_w_out())
    }

    pub fn any_trainable(&self) -> bool {
        self.train_b_in || self.train_w_in || self.train_b_out || self.train_w_out
    }
}
