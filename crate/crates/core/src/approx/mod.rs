//! Differentiable approximators: a squashed-Gaussian policy, quantile critics,
//! their losses, and finite-difference gradient checking.

pub mod critic;
pub mod gradcheck;
pub mod loss;
pub mod mlp;
pub mod policy;
pub mod snapshot;

pub use critic::{quantile_means, CriticTape, QuantileCritic};
pub use gradcheck::{gradient_check, gradient_check_with, GradCheckReport};
pub use loss::{mse_batch, quantile_huber, quantile_huber_batch, quantile_huber_loss, quantile_midpoints};
pub use mlp::{Mlp, MlpTape};
pub use policy::{GaussianTanhPolicy, PolicySample, LOG_VAR_MAX, LOG_VAR_MIN, TANH_EPS};
pub use snapshot::{TensorArchive, TensorEntry};

/// Hidden layer widths used by default for both policy and critics.
pub const DEFAULT_HIDDEN: [usize; 3] = [256, 256, 256];
/// Default number of quantile outputs.
pub const DEFAULT_QUANTILES: usize = 32;
