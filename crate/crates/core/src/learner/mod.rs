//! Ensemble TD learning: configuration, targets, losses and the training loop.
//!
//! One [`Agent`] covers every variant. The ensemble size, target mode,
//! sampling mode and ensemble mode select between the ensemble-mean learner,
//! single-network DQN with or without a target copy, snapshot averaging, and
//! shared-batch ensembles.

mod agent;
mod targets;

pub use agent::{Agent, IterationMetrics, MemberMetrics};
pub use targets::{
    compute_distributional_targets, compute_scalar_targets, multi_step_reward, scalar_loss, ScalarLoss, TdTarget,
};

use serde::{Deserialize, Serialize};

use crate::distributional::SupportSpec;
use crate::error::{Error, Result};
use crate::replay::PriorityParams;
use crate::value_model::{Activation, LrSchedule, OptimizerKind, TargetMode, DEFAULT_LEARNING_RATE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueMode {
    #[default]
    Scalar,
    Distributional(SupportSpec),
}

/// Which batches the members train on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Member k draws from its own priority tree over the shared buffer.
    #[default]
    Independent,
    /// One batch per pass, seen by every member.
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    /// K live networks.
    #[default]
    TrueEnsemble,
    /// One live network; targets and the policy average its last K snapshots.
    Snapshot,
}

/// `updates` gradient passes every `interactions` environment steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateRatio {
    pub updates: u32,
    pub interactions: u32,
}

impl Default for UpdateRatio {
    fn default() -> Self {
        Self { updates: 1, interactions: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Table,
    Mlp { hidden: Vec<usize>, activation: Activation },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Mlp { hidden: vec![64, 64], activation: Activation::Relu }
    }
}

const DEFAULT_MLP_CLIP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    /// Discount; owned by the environment when loaded from an experiment file.
    #[serde(skip)]
    pub gamma: f64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub lr_schedule: LrSchedule,
    pub ensemble_size: usize,
    pub batch_size: usize,
    pub multi_step: usize,
    pub target: TargetMode,
    pub value_mode: ValueMode,
    pub sampling: SamplingMode,
    pub ensemble_mode: EnsembleMode,
    pub updates_per_interaction: UpdateRatio,
    /// Transitions required before the first pass; `max(B, 1000)` when unset.
    pub warmup: Option<usize>,
    /// Gradient-norm bound; 10 for MLPs and off for tables when unset.
    pub grad_clip: Option<f64>,
    pub replay_capacity: usize,
    pub priority: PriorityParams,
    pub beta_start: f64,
    /// Steps over which β anneals to 1.
    pub beta_horizon: u64,
    pub model: ModelSpec,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            learning_rate: DEFAULT_LEARNING_RATE,
            optimizer: OptimizerKind::default(),
            lr_schedule: LrSchedule::Constant,
            ensemble_size: 5,
            batch_size: 32,
            multi_step: 1,
            target: TargetMode::Online,
            value_mode: ValueMode::Scalar,
            sampling: SamplingMode::Independent,
            ensemble_mode: EnsembleMode::TrueEnsemble,
            updates_per_interaction: UpdateRatio::default(),
            warmup: None,
            grad_clip: None,
            replay_capacity: 100_000,
            priority: PriorityParams::default(),
            beta_start: 0.4,
            beta_horizon: 100_000,
            model: ModelSpec::default(),
        }
    }
}

impl LearnerConfig {
    pub fn effective_warmup(&self) -> usize {
        self.warmup.unwrap_or(self.batch_size.max(1000))
    }

    pub fn effective_grad_clip(&self) -> Option<f64> {
        match (self.grad_clip, &self.model) {
            (Some(c), _) if c.is_finite() => Some(c),
            (Some(_), _) => None,
            (None, ModelSpec::Mlp { .. }) => Some(DEFAULT_MLP_CLIP),
            (None, ModelSpec::Table) => None,
        }
    }

    /// Number of live networks: 1 in snapshot mode, K otherwise.
    pub fn live_members(&self) -> usize {
        match self.ensemble_mode {
            EnsembleMode::Snapshot => 1,
            EnsembleMode::TrueEnsemble => self.ensemble_size,
        }
    }

    /// Priority trees kept by the replay memory.
    pub fn samplers(&self) -> usize {
        match (self.ensemble_mode, self.sampling) {
            (EnsembleMode::TrueEnsemble, SamplingMode::Independent) => self.ensemble_size,
            _ => 1,
        }
    }

    /// `β(t) = β₀ + (1 − β₀)·min(t / horizon, 1)`.
    pub fn beta_at(&self, t: u64) -> f64 {
        let frac = if self.beta_horizon == 0 { 1.0 } else { (t as f64 / self.beta_horizon as f64).min(1.0) };
        self.beta_start + (1.0 - self.beta_start) * frac
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if self.ensemble_size == 0 || self.batch_size == 0 || self.multi_step == 0 {
            return fail("ensemble_size, batch_size and multi_step must all be at least 1".into());
        }
        if self.updates_per_interaction.interactions == 0 {
            return fail("updates_per_interaction.interactions must be positive".into());
        }
        if self.replay_capacity == 0 {
            return fail("replay_capacity must be positive".into());
        }
        if let TargetMode::Lagging { period: 0 } = self.target {
            return fail("target period must be positive".into());
        }
        if self.ensemble_mode == EnsembleMode::Snapshot && self.sampling == SamplingMode::Shared {
            return fail("snapshot mode trains one network; sampling must be independent".into());
        }
        if self.ensemble_mode == EnsembleMode::Snapshot && self.target != TargetMode::Online {
            return fail("snapshot mode reads targets from its history; target must be online".into());
        }
        if !(0.0..=1.0).contains(&self.beta_start) {
            return fail(format!("beta_start must lie in [0, 1], got {}", self.beta_start));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return fail(format!("grad_clip must be positive, got {c}"));
            }
        }
        if let ModelSpec::Mlp { hidden, .. } = &self.model {
            if hidden.contains(&0) {
                return fail("MLP hidden widths must be positive".into());
            }
        }
        if let ValueMode::Distributional(spec) = self.value_mode {
            crate::distributional::Support::<f64>::from_spec(&spec)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = LearnerConfig::default();
        assert_eq!(c.learning_rate, 6.25e-5);
        assert_eq!(c.effective_warmup(), 1000);
        assert_eq!(c.effective_grad_clip(), Some(10.0));
        assert_eq!(c.multi_step, 1);
        c.validate().unwrap();
        let table = LearnerConfig { model: ModelSpec::Table, batch_size: 2000, ..c };
        assert_eq!(table.effective_grad_clip(), None);
        assert_eq!(table.effective_warmup(), 2000);
    }

    #[test]
    fn invariants_rejected() {
        for bad in [
            LearnerConfig { ensemble_size: 0, ..Default::default() },
            LearnerConfig { batch_size: 0, ..Default::default() },
            LearnerConfig { multi_step: 0, ..Default::default() },
            LearnerConfig { gamma: 1.0, ..Default::default() },
            LearnerConfig {
                ensemble_mode: EnsembleMode::Snapshot,
                target: TargetMode::Lagging { period: 10 },
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn snapshot_mode_has_one_live_network() {
        let c = LearnerConfig { ensemble_mode: EnsembleMode::Snapshot, ..Default::default() };
        assert_eq!((c.live_members(), c.samplers()), (1, 1));
        let c = LearnerConfig { sampling: SamplingMode::Shared, ..Default::default() };
        assert_eq!((c.live_members(), c.samplers()), (5, 1));
    }

    #[test]
    fn beta_anneals_to_one() {
        let c = LearnerConfig { beta_horizon: 100, ..Default::default() };
        assert_eq!(c.beta_at(0), 0.4);
        assert!((c.beta_at(50) - 0.7).abs() < 1e-12);
        assert_eq!(c.beta_at(1000), 1.0);
    }
}
