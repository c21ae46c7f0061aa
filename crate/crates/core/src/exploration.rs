//! Behaviour policies built on the ensemble mean.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{argmax, Scalar};
use crate::value_model::{mean_over_members, std_over_members};

/// Linear annealing of ε from `start` to `end` over `horizon` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { start: 1.0, end: 0.1, horizon: 200_000 }
    }
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.start >= self.end && self.end >= 0.0 && self.start <= 1.0) || self.horizon == 0 {
            return Err(Error::InvalidConfig(format!(
                "epsilon schedule needs 1 ≥ start ≥ end ≥ 0 and horizon > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn epsilon_at(&self, t: u64) -> f64 {
        let frac = (t as f64 / self.horizon as f64).min(1.0);
        (self.start + (self.end - self.start) * frac).clamp(self.end, self.start)
    }
}

/// UCB bonus coefficient λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UcbConfig {
    pub lambda: f64,
}

impl Default for UcbConfig {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

/// Behaviour policy used while training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExplorationPolicy {
    EpsilonGreedy(EpsilonSchedule),
    Ucb(UcbConfig),
}

impl Default for ExplorationPolicy {
    fn default() -> Self {
        ExplorationPolicy::EpsilonGreedy(EpsilonSchedule::default())
    }
}

impl ExplorationPolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            ExplorationPolicy::EpsilonGreedy(schedule) => schedule.validate(),
            ExplorationPolicy::Ucb(ucb) if !(ucb.lambda >= 0.0 && ucb.lambda.is_finite()) => {
                Err(Error::InvalidConfig(format!("UCB coefficient must be non-negative, got {}", ucb.lambda)))
            }
            ExplorationPolicy::Ucb(_) => Ok(()),
        }
    }

    /// Action at environment step `t` from a member × action value matrix.
    /// Only the ε-greedy branch consumes randomness.
    pub fn select<S: Scalar, R: Rng + ?Sized>(&self, member_values: &[Vec<S>], t: u64, rng: &mut R) -> Result<usize> {
        match self {
            ExplorationPolicy::EpsilonGreedy(schedule) => {
                epsilon_greedy_action(member_values, schedule.epsilon_at(t), rng)
            }
            ExplorationPolicy::Ucb(ucb) => ucb_action(member_values, ucb.lambda),
        }
    }
}

/// Greedy action of the member-mean values.
pub fn greedy_from_members<S: Scalar>(member_values: &[Vec<S>]) -> Result<usize> {
    let mean = mean_over_members(member_values)?;
    argmax(&mean).ok_or(Error::NonFinite("ensemble mean values"))
}

/// With probability ε a uniform action, otherwise the ensemble-mean greedy
/// action. Draws exactly one uniform variate, plus one action index when exploring.
pub fn epsilon_greedy_action<S: Scalar, R: Rng + ?Sized>(
    member_values: &[Vec<S>],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    let n_actions = member_values.first().ok_or(Error::EmptyEnsemble)?.len();
    if rng.random::<f64>() < epsilon {
        Ok(rng.random_range(0..n_actions))
    } else {
        greedy_from_members(member_values)
    }
}

/// `argmax_a mean_k Q_k(a) + λ·std_k Q_k(a)` with population std, lowest index on ties.
pub fn ucb_action<S: Scalar>(member_values: &[Vec<S>], lambda: f64) -> Result<usize> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("UCB coefficient must be non-negative, got {lambda}")));
    }
    let mean = mean_over_members(member_values)?;
    let std = std_over_members(member_values)?;
    let l = S::lit(lambda);
    let scores: Vec<S> = mean.iter().zip(&std).map(|(&m, &s)| m + l * s).collect();
    argmax(&scores).ok_or(Error::NonFinite("UCB scores"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn default_schedule_values() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.epsilon_at(0), 1.0);
        assert!((s.epsilon_at(100_000) - 0.55).abs() < 1e-15);
        assert!((s.epsilon_at(200_000) - 0.1).abs() < 1e-15);
        assert!((s.epsilon_at(10_000_000) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn invalid_schedules_rejected() {
        assert!(EpsilonSchedule { start: 0.1, end: 0.5, horizon: 10 }.validate().is_err());
        assert!(EpsilonSchedule { start: 1.0, end: 0.5, horizon: 0 }.validate().is_err());
    }

    #[test]
    fn zero_epsilon_is_greedy() {
        let values = vec![vec![0.0, 1.0, 0.5]];
        let mut rng = substream(0, "t", 0);
        for _ in 0..100 {
            assert_eq!(epsilon_greedy_action(&values, 0.0, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn ucb_examples() {
        let members = vec![vec![0.0, 1.0], vec![0.0, -1.0]];
        assert_eq!(ucb_action(&members, 1.0).unwrap(), 1);
        assert_eq!(ucb_action(&members, 0.0).unwrap(), greedy_from_members(&members).unwrap());
        let single = vec![vec![3.0, 1.0, 3.5]];
        assert_eq!(ucb_action(&single, 10.0).unwrap(), 2);
        assert!(ucb_action(&single, -1.0).is_err());
    }
}
