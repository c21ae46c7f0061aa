//! Value estimators, their ensembles, target copies and optimizers.

mod checkpoint;
mod ensemble;
mod mlp;
mod optimizer;
mod table;

pub use checkpoint::{load_ensemble, save_ensemble, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use ensemble::{mean_over_members, std_over_members, Ensemble, SnapshotHistory, TargetEnsemble, TargetMode};
pub use mlp::{Activation, ForwardCache, MlpQNetwork};
pub use optimizer::{clip_grad_norm, LrSchedule, Optimizer, OptimizerKind, DEFAULT_LEARNING_RATE};
pub use table::ActionValueTable;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One value model: a lookup table or a small MLP over one-hot state features.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator<S> {
    Table(ActionValueTable<S>),
    Mlp(MlpQNetwork<S>),
}

/// Outputs of a forward pass kept for the matching backward pass.
#[derive(Debug, Clone)]
pub struct TrainingPass<S> {
    state: usize,
    outputs: Vec<S>,
    cache: Option<ForwardCache<S>>,
}

impl<S> TrainingPass<S> {
    pub fn outputs(&self) -> &[S] {
        &self.outputs
    }
}

/// One-hot feature vector for a discrete state.
pub fn one_hot<S: Scalar>(state: usize, dim: usize) -> Result<Vec<S>> {
    if state >= dim {
        return Err(Error::StateOutOfRange { state, n_states: dim });
    }
    let mut x = vec![S::zero(); dim];
    x[state] = S::one();
    Ok(x)
}

impl<S: Scalar> Estimator<S> {
    pub fn n_actions(&self) -> usize {
        match self {
            Estimator::Table(t) => t.n_actions(),
            Estimator::Mlp(m) => m.n_actions(),
        }
    }

    /// Outputs per action: 1 for scalar values, the atom count for categorical heads.
    pub fn outputs_per_action(&self) -> usize {
        match self {
            Estimator::Table(t) => t.outputs_per_action(),
            Estimator::Mlp(m) => m.output_dim() / m.n_actions(),
        }
    }

    pub fn params(&self) -> &[S] {
        match self {
            Estimator::Table(t) => t.params(),
            Estimator::Mlp(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        match self {
            Estimator::Table(t) => t.params_mut(),
            Estimator::Mlp(m) => m.params_mut(),
        }
    }

    /// Raw outputs at `state`: action values for scalar heads, per-action
    /// logits for categorical heads.
    pub fn predict(&self, state: usize) -> Result<Vec<S>> {
        match self {
            Estimator::Table(t) => Ok(t.row(state)?.to_vec()),
            Estimator::Mlp(m) => {
                let x = one_hot(state, m.input_dim())?;
                Ok(m.forward(&x)?.output().to_vec())
            }
        }
    }

    pub fn forward_for_training(&self, state: usize) -> Result<TrainingPass<S>> {
        match self {
            Estimator::Table(t) => Ok(TrainingPass { state, outputs: t.row(state)?.to_vec(), cache: None }),
            Estimator::Mlp(m) => {
                let x = one_hot(state, m.input_dim())?;
                let cache = m.forward(&x)?;
                Ok(TrainingPass { state, outputs: cache.output().to_vec(), cache: Some(cache) })
            }
        }
    }

    /// Accumulates `d(output_gradient · outputs)/dθ` for the pass into `grads`.
    pub fn backward(&self, pass: &TrainingPass<S>, output_gradient: &[S], grads: &mut [S]) -> Result<()> {
        match (self, &pass.cache) {
            (Estimator::Table(t), _) => t.accumulate_gradient(pass.state, output_gradient, grads),
            (Estimator::Mlp(m), Some(cache)) => m.backward(cache, output_gradient, grads),
            (Estimator::Mlp(_), None) => Err(Error::ShapeMismatch("training pass was not produced by an MLP".into())),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        match (self, other) {
            (Estimator::Table(a), Estimator::Table(b)) => {
                a.n_states() == b.n_states()
                    && a.n_actions() == b.n_actions()
                    && a.outputs_per_action() == b.outputs_per_action()
            }
            (Estimator::Mlp(a), Estimator::Mlp(b)) => {
                a.layer_sizes() == b.layer_sizes() && a.n_actions() == b.n_actions() && a.activation() == b.activation()
            }
            _ => false,
        }
    }
}
