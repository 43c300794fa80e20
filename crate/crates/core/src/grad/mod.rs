//! Loss, hand-derived gradients through the layer recursion, forward-mode
//! J-channel tangents, and optimizers.

mod algebra;
mod backward;
mod jvp;
mod link;
mod optim;

pub use algebra::{grad_in_algebra_residual, grad_in_algebra_residual_with};
pub use backward::{backward, backward_trace, GradientSet, StructuredGrad};
pub use jvp::{channel_push, jvp_b, ChannelPush};
pub use link::{link, loss, loss_and_grad, loss_grad_z, LinkParams};
pub use optim::{step, OptimizerSpec, OptimizerState, Schedule};
