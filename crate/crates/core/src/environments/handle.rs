use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{EnvSpec, RewardNoise, TabularMdp};
use crate::error::{Error, Result};
use crate::rng::Rng as StreamRng;

pub const DEFAULT_EPISODE_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: usize,
    pub reward: f64,
    pub terminal: bool,
    /// The episode cap was reached without a terminal state.
    pub truncated: bool,
}

/// Interactive view of a [`TabularMdp`] with its own random stream.
#[derive(Debug, Clone)]
pub struct EnvironmentHandle {
    mdp: TabularMdp,
    noise: RewardNoise,
    state: usize,
    steps: usize,
    cap: usize,
    done: bool,
    rng: StreamRng,
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

impl EnvironmentHandle {
    pub fn new(mdp: TabularMdp, noise: RewardNoise, cap: usize, rng: StreamRng) -> Self {
        Self { mdp, noise, state: 0, steps: 0, cap, done: true, rng }
    }

    pub fn from_spec(spec: &EnvSpec, cap: usize, rng: StreamRng) -> Result<Self> {
        Ok(Self::new(spec.build()?, spec.noise(), cap, rng))
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reset(&mut self) -> usize {
        self.state = sample_index(self.mdp.initial_distribution(), &mut self.rng);
        self.steps = 0;
        self.done = false;
        self.state
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeOver);
        }
        if action >= self.mdp.n_actions() {
            return Err(Error::ActionOutOfRange { action, n_actions: self.mdp.n_actions() });
        }
        let s = self.state;
        let next_state = sample_index(self.mdp.transition_row(s, action), &mut self.rng);
        let mut reward = self.mdp.reward(s, action);
        if let RewardNoise::Gaussian { sigma } = self.noise {
            let normal = Normal::new(0.0, sigma).map_err(|_| Error::InvalidMdp("bad noise scale".into()))?;
            reward += normal.sample(&mut self.rng);
        }
        self.state = next_state;
        self.steps += 1;
        let terminal = self.mdp.is_terminal(next_state);
        let truncated = !terminal && self.steps >= self.cap;
        self.done = terminal || truncated;
        Ok(StepOutcome { next_state, reward, terminal, truncated })
    }
}

/// One rolled-out episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub initial_state: usize,
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub discounted_return: f64,
    pub undiscounted_return: f64,
}

/// Resets `env` and follows `policy` for at most `max_steps` steps.
pub fn run_episode(
    env: &mut EnvironmentHandle,
    policy: &mut dyn FnMut(usize) -> usize,
    max_steps: usize,
    gamma: f64,
) -> Result<Trajectory> {
    let mut s = env.reset();
    let mut traj = Trajectory { initial_state: s, ..Default::default() };
    let mut discount = 1.0;
    for _ in 0..max_steps {
        let a = policy(s);
        let out = env.step(a)?;
        traj.states.push(s);
        traj.actions.push(a);
        traj.rewards.push(out.reward);
        traj.discounted_return += discount * out.reward;
        traj.undiscounted_return += out.reward;
        discount *= gamma;
        s = out.next_state;
        if out.terminal || out.truncated {
            break;
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean_discounted: f64,
    pub mean_undiscounted: f64,
    /// Sample standard deviation (divisor n − 1) of the discounted return; 0 for one episode.
    pub std_discounted: f64,
    pub episodes: usize,
}

pub fn monte_carlo_return(
    env: &mut EnvironmentHandle,
    policy: &mut dyn FnMut(usize) -> usize,
    n_episodes: usize,
    gamma: f64,
) -> Result<MonteCarloEstimate> {
    if n_episodes == 0 {
        return Err(Error::InvalidConfig("at least one episode required".into()));
    }
    let mut disc = Vec::with_capacity(n_episodes);
    let mut undisc = 0.0;
    for _ in 0..n_episodes {
        let t = run_episode(env, policy, usize::MAX, gamma)?;
        disc.push(t.discounted_return);
        undisc += t.undiscounted_return;
    }
    let n = n_episodes as f64;
    let mean = disc.iter().sum::<f64>() / n;
    let std = if n_episodes > 1 {
        (disc.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(MonteCarloEstimate { mean_discounted: mean, mean_undiscounted: undisc / n, std_discounted: std, episodes: n_episodes })
}
