//! Small, fully specified MDPs and their exact and Monte-Carlo oracles.

mod catalogue;
mod handle;
mod mdp;

pub use catalogue::{EnvSpec, RewardNoise, CLIFF_DOWN, CLIFF_LEFT, CLIFF_RIGHT, CLIFF_UP};
pub use handle::{
    monte_carlo_return, run_episode, EnvironmentHandle, MonteCarloEstimate, StepOutcome, Trajectory,
    DEFAULT_EPISODE_CAP,
};
pub use mdp::{value_iteration, TabularMdp, ValueIterationResult};
