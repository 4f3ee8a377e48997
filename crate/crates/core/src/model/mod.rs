//! The deep unconstrained features model: parameters, cross-entropy loss,
//! gradient flow, initializers, the gradient-descent trainer and its logged
//! diagnostics.

mod diagnostics;
mod flow;
mod init;
mod loss;
mod params;
mod train;

pub use diagnostics::{
    balancedness_residual, class_mean_logits, margins, normalized_modes, Margins, RunLog, RunRow,
};
pub(crate) use diagnostics::fmt_float;
pub use flow::{euler_step, flow_rhs, logit_velocity, FlowBundle};
pub use init::{haar_orthogonal, hadamard_init, ones_completion, random_init};
pub use loss::{ce_loss, ce_loss_of_logits, softmax_matrix};
pub use params::{ModelParams, ProblemSpec};
pub use train::{train, TrainOutcome, TrainSchedule, DEFAULT_STOP_LOSS, MAX_HALVINGS};
