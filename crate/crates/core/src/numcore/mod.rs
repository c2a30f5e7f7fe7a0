//! Dense tensors, feed-forward and recurrent networks with analytic
//! gradients, Adam, finite-difference checks and JSON checkpoints.

mod adam;
mod checkpoint;
pub mod gradcheck;
pub mod kernels;
mod lstm;
mod mlp;
mod params;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GradCheck};
pub use lstm::{Lstm, LstmCache};
pub use mlp::{Activation, Dense, Mlp, MlpCache};
pub use params::Parameters;
pub use tensor::{dot, gemm, l2_norm, sigmoid, softplus, Tensor};
