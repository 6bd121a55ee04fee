//! Evidential regression in one forward pass.
//!
//! A small neural network emits the parameters of a higher-order
//! distribution over the likelihood's own parameters — Normal-Inverse-Gamma
//! for scalar targets, Normal-Inverse-Wishart for vector targets — so a
//! single evaluation yields a prediction together with separated aleatoric
//! and epistemic uncertainty.
//!
//! The crate is organized around that pipeline:
//!
//! - [`special`]: stable softplus/log-gamma/digamma primitives;
//! - [`rng`]: a small deterministic generator so every experiment is
//!   reproducible bit for bit;
//! - [`nig`]: the four-channel evidential head, its positivity transforms,
//!   predictive moments, and the marginal Student-t;
//! - [`loss`]: the marginal likelihood loss, the evidence regularizer, the
//!   saturation-escaping uncertainty regularizer, and exact closed-form
//!   gradients for all of them;
//! - [`multi`]: the multivariate head, its Cholesky-factor parameterization,
//!   loss, and gradients;
//! - [`net`]: a minimal MLP with manual backprop, Adam, and bit-exact JSON
//!   checkpoints;
//! - [`data`]: deterministic dataset generators and a CSV
//!   standardize-and-split loader;
//! - [`metrics`]: RMSE, predictive log-loss, cutoff and calibration curves,
//!   entropy histograms, and saturation diagnostics.

pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod multi;
pub mod net;
pub mod nig;
pub mod rng;
pub mod special;

pub use error::{EviregError, Result};
pub use loss::{
    grad_check, grad_head, nll_loss, total_loss, unc_grad_alpha, HeadGradient, LossBreakdown,
    LossWeights,
};
pub use multi::{
    grad_multi, mern_nll, predict_multi, transform_multi, unc_grad_p_nu, unc_reg_multi, NiwParams,
    RawHeadM,
};
pub use nig::{
    activate_head, marginal_params, predict, student_t_logpdf, ActivationKind, NigParams,
    PredictionSummary, RawHead, StudentTParams,
};
pub use rng::Rng;
