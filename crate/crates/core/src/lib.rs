//! Tuning-free optimization via scale-mixture EM: latent observation and
//! parameter weights act as model-derived step sizes and weight decay, so the
//! EM iteration needs no learning-rate, momentum, or decay schedules.
//!
//! The crate bundles the solver with everything needed to benchmark it:
//!
//! - [`linalg`]: dense symmetric solves, Jacobi eigenvalues, and weighted Gram
//!   assembly from cached sufficient statistics
//! - [`kernels`]: loss/penalty families and the gradient-to-weight kernels
//! - [`engine`]: the EM loop, its Nesterov-accelerated variant, active-set
//!   pruning, and the amortized regularization path
//! - [`baselines`]: Adam/AdamW, heavy-ball and Nesterov SGD, and proximal
//!   Robbins–Monro (implicit SGD) reference optimizers
//! - [`prox`]: proximal operators, Moreau envelopes, half-quadratic
//!   minimizers, ISTA/FISTA, and Bregman divergences
//! - [`synth`]: deterministic synthetic logistic benchmarks with controlled
//!   condition numbers
//! - [`selection`]: effective degrees of freedom, GCV, and shrinkage profiles

pub mod baselines;
pub mod engine;
pub mod kernels;
pub mod linalg;
pub mod prox;
pub mod selection;
pub mod synth;

pub use engine::{
    estep, mstep, reg_path, run_smem, run_smem_nesterov, EngineError, MixtureSpec, RunTrace,
    SmemState, StoppingRule, TraceRecord,
};
pub use kernels::{LossFamily, PenaltyFamily, WeightKernelParams};
pub use linalg::{chol_solve, gram_build, spectral_cond, trace_inverse, DenseMatrix, GramCache};
pub use synth::Dataset;
