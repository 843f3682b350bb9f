//! Dense networks, Adam, Polyak averaging, gradient checks and seeded streams.

pub mod grad_check;
pub mod mlp;
pub mod optim;
pub mod rng;

pub use grad_check::{grad_check, grad_check_flat, GradCheckReport};
pub use mlp::{backward, forward, forward_batch, Activation, Dense, ForwardCache, MlpParams, MlpShape, Mode, NormAffine, OutputHead};
pub use optim::{adam_step, polyak_update, AdamState};
pub use rng::RngStream;
