//! Ensemble-mean temporal-difference learning.
//!
//! `K` value estimators share one replay buffer but each samples it through
//! its own priority tree. Targets and the behaviour policy both use the
//! ensemble mean `max_a mean_k Q_k(s, a)`. Single-network DQN, snapshot
//! averaging and shared-batch ensembles fall out as configurations of the same
//! [`learner::Agent`].
//!
//! Learning code is generic over [`Scalar`] (`f32` or `f64`); environments and
//! diagnostics work in `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod distributional;
pub mod environments;
pub mod error;
pub mod exploration;
pub mod learner;
pub mod replay;
pub mod rng;
pub mod scalar;
pub mod value_model;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Agent64 = learner::Agent<f64>;
pub type Agent32 = learner::Agent<f32>;
pub type Ensemble64 = value_model::Ensemble<f64>;
pub type Ensemble32 = value_model::Ensemble<f32>;
pub type ReplayMemory64 = replay::ReplayMemory<f64>;
pub type ReplayMemory32 = replay::ReplayMemory<f32>;
