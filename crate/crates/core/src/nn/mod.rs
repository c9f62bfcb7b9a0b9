//! Neural-network primitives: the fixed MLP with per-client affine layers,
//! weighted NLL loss, backpropagation, and momentum SGD. Everything is
//! deterministic given an explicit random stream.

pub mod backward;
pub mod forward;
pub mod loss;
pub mod optim;
pub mod params;

pub use backward::{backward, Gradients};
pub use forward::{affine_apply, forward, predict, ForwardCache};
pub use loss::{log_softmax_rows, loss_and_grad, loss_weighted_nll, softmax_rows};
pub use optim::{lr_schedule, sgd_step, OptimizerState};
pub use params::{
    personal_param_count, shared_param_count, FOutMode, PersonalParams, SharedParams, WOut,
    HIDDEN1, HIDDEN2,
};
