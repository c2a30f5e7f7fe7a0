//! Out-of-dynamics imitation learning.
//!
//! State-only demonstrations gathered under mixed, unknown dynamics are
//! clustered by a contrastively trained sequence encoder ([`cluster`]); a
//! GAIL discriminator trained per cluster in the imitator's own environment
//! scores how reproducible each demonstration transition is
//! ([`transfer`]); the final policy imitates demonstrations resampled in
//! proportion to those scores ([`imitate`]).

pub mod error;
pub mod numcore;
pub mod par;
pub mod rl;

pub use error::{Error, Result};
pub mod cluster;
pub mod demos;
pub mod envs;
pub mod imitate;
pub mod transfer;

/// Generator used for every stochastic choice in the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;
