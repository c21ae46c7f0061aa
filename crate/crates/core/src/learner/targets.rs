//! TD targets and per-sample losses.

use crate::distributional::{
    action_distributions, distributional_greedy_action, mean_distribution, project, ProjectedTarget, Support,
};
use crate::error::{Error, Result};
use crate::replay::MultiStepSample;
use crate::scalar::Scalar;
use crate::value_model::Ensemble;

/// Regression target for one sampled transition.
#[derive(Debug, Clone, PartialEq)]
pub enum TdTarget<S> {
    Scalar(S),
    Distribution(ProjectedTarget<S>),
}

/// `Σ_m γ^m r^(m)` in temporal order.
pub fn multi_step_reward<S: Scalar>(rewards: &[S], gamma: S) -> S {
    let mut total = S::zero();
    let mut discount = S::one();
    for &r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

/// `y = r_M + γ^M' · max_a mean_k Q̄_k(s^(M), a)`, or `r_M` when the walk ended
/// in a terminal state. `M'` is the sample's effective step count.
pub fn compute_scalar_targets<S: Scalar>(
    batch: &[MultiStepSample<S>],
    targets: &Ensemble<S>,
    gamma: S,
) -> Result<Vec<S>> {
    batch
        .iter()
        .map(|sample| {
            let reward = multi_step_reward(&sample.rewards, gamma);
            let y = if sample.terminal {
                reward
            } else {
                reward + gamma.powi(sample.effective_steps as i32) * targets.value(sample.bootstrap_state)?
            };
            if !y.is_finite() {
                return Err(Error::NonFinite("TD target"));
            }
            Ok(y)
        })
        .collect()
}

/// Categorical targets: the ensemble-mean distribution of the greedy next
/// action, projected through the multi-step Bellman map.
pub fn compute_distributional_targets<S: Scalar>(
    batch: &[MultiStepSample<S>],
    targets: &Ensemble<S>,
    support: &Support<S>,
    gamma: S,
) -> Result<Vec<ProjectedTarget<S>>> {
    batch
        .iter()
        .map(|sample| {
            let member_dists = targets
                .members()
                .iter()
                .map(|m| action_distributions(&m.predict(sample.bootstrap_state)?, support))
                .collect::<Result<Vec<_>>>()?;
            let best = distributional_greedy_action(&member_dists, support)?;
            let at_best: Vec<&[S]> = member_dists.iter().map(|actions| actions[best].as_slice()).collect();
            let mixed = mean_distribution(&at_best, support)?;
            let reward = multi_step_reward(&sample.rewards, gamma);
            let discount = gamma.powi(sample.effective_steps as i32);
            project(mixed.probs(), reward, discount, sample.terminal, support)
        })
        .collect()
}

/// Weighted squared TD error for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarLoss<S> {
    /// `w·(y − q)²`.
    pub loss: S,
    /// `∂loss/∂q = −2·w·(y − q)`.
    pub grad: S,
    /// Unweighted `|y − q|`, the priority input.
    pub priority: S,
}

pub fn scalar_loss<S: Scalar>(target: S, prediction: S, is_weight: S) -> ScalarLoss<S> {
    let err = target - prediction;
    ScalarLoss { loss: is_weight * err * err, grad: -(S::lit(2.0) * is_weight * err), priority: err.abs() }
}
