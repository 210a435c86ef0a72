//! Lipschitz continuity tooling for model-based reinforcement learning on
//! finite metric MDPs.
//!
//! - [`mdp`]: metric MDPs, distributions, deterministic model classes
//! - [`metrics`]: Wasserstein (primal, dual, 1-D), total variation, KL
//! - [`decomposition`]: any finite kernel as a distribution over deterministic maps
//! - [`lipschitz`]: kernel, operator and layer constants; error bounds
//! - [`gvi`]: generalized value iteration and MRP evaluation
//! - [`em`]: EM learner for mixtures of Lipschitz-capped regressors
//! - [`experiments`]: verification harnesses writing CSV reports
//! - [`cli`]: the `lipmbrl` command line

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod decomposition;
pub mod em;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod gvi;
pub mod lipschitz;
pub mod mdp;
pub mod metrics;
pub mod rng;

pub use error::{Error, Result};
pub use mdp::{
    model_class_to_kernel, push_forward, push_forward_n, DeterministicModelClass, Distribution,
    FiniteMetricMDP, GroundMetric, TransitionKernel,
};
