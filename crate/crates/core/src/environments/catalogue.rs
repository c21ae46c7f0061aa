//! Built-in environments, each with an exact tabular description and an
//! interactive reward-noise model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TabularMdp;
use crate::error::{Error, Result};

/// Declarative environment descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    /// `n` states in a line; `right` from `n − 2` pays 1 and ends the episode.
    ChainWalk { n: usize, #[serde(default = "default_gamma")] gamma: f64 },
    /// `ChainWalk` with zero-mean Gaussian noise of scale `sigma` on every reward.
    NoisyChain { n: usize, sigma: f64, #[serde(default = "default_gamma")] gamma: f64 },
    /// Gridworld with a cliff along the bottom edge between start and goal.
    CliffGrid { width: usize, height: usize, slip: f64, #[serde(default = "default_gamma")] gamma: f64 },
    /// One self-looping state with `actions` arms of equal mean reward.
    BiasedBandit {
        actions: usize,
        mean: f64,
        sigma: f64,
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
}

fn default_gamma() -> f64 {
    0.9
}

/// Zero-mean reward perturbation applied by the interactive layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardNoise {
    None,
    Gaussian { sigma: f64 },
}

pub const CLIFF_UP: usize = 0;
pub const CLIFF_RIGHT: usize = 1;
pub const CLIFF_DOWN: usize = 2;
pub const CLIFF_LEFT: usize = 3;

impl EnvSpec {
    pub fn gamma(&self) -> f64 {
        match *self {
            EnvSpec::ChainWalk { gamma, .. }
            | EnvSpec::NoisyChain { gamma, .. }
            | EnvSpec::CliffGrid { gamma, .. }
            | EnvSpec::BiasedBandit { gamma, .. } => gamma,
        }
    }

    pub fn noise(&self) -> RewardNoise {
        match *self {
            EnvSpec::NoisyChain { sigma, .. } | EnvSpec::BiasedBandit { sigma, .. } if sigma > 0.0 => {
                RewardNoise::Gaussian { sigma }
            }
            _ => RewardNoise::None,
        }
    }

    pub fn build(&self) -> Result<TabularMdp> {
        match *self {
            EnvSpec::ChainWalk { n, gamma } => chain(n, gamma),
            EnvSpec::NoisyChain { n, sigma, gamma } => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::InvalidMdp(format!("noise scale must be finite and ≥ 0, got {sigma}")));
                }
                chain(n, gamma)
            }
            EnvSpec::CliffGrid { width, height, slip, gamma } => cliff_grid(width, height, slip, gamma),
            EnvSpec::BiasedBandit { actions, mean, sigma, gamma } => {
                if actions == 0 || !(sigma >= 0.0) || !mean.is_finite() {
                    return Err(Error::InvalidMdp("bandit needs ≥ 1 action, finite mean, σ ≥ 0".into()));
                }
                TabularMdp::new(
                    1,
                    actions,
                    vec![1.0; actions],
                    vec![mean; actions],
                    gamma,
                    vec![1.0],
                    vec![false],
                )
            }
        }
    }
}

fn chain(n: usize, gamma: f64) -> Result<TabularMdp> {
    if n < 2 {
        return Err(Error::InvalidMdp(format!("chain needs at least 2 states, got {n}")));
    }
    let goal = n - 1;
    let mut transition = vec![0.0; n * 2 * n];
    let mut reward = vec![0.0; n * 2];
    for s in 0..n {
        let (left, right) = if s == goal { (s, s) } else { (s.saturating_sub(1), s + 1) };
        transition[(s * 2) * n + left] = 1.0;
        transition[(s * 2 + 1) * n + right] = 1.0;
        if s + 1 == goal {
            reward[s * 2 + 1] = 1.0;
        }
    }
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    let mut terminal = vec![false; n];
    terminal[goal] = true;
    TabularMdp::new(n, 2, transition, reward, gamma, initial, terminal)
}

fn cliff_grid(width: usize, height: usize, slip: f64, gamma: f64) -> Result<TabularMdp> {
    if width < 3 || height < 2 {
        return Err(Error::InvalidMdp("cliff grid needs width ≥ 3 and height ≥ 2".into()));
    }
    if !(0.0..=1.0).contains(&slip) {
        return Err(Error::InvalidMdp(format!("slip probability {slip} outside [0, 1]")));
    }
    let n = width * height;
    let idx = |row: usize, col: usize| row * width + col;
    let bottom = height - 1;
    let start = idx(bottom, 0);
    let goal = idx(bottom, width - 1);
    let is_cliff = |s: usize| s / width == bottom && !s.is_multiple_of(width) && s % width != width - 1;
    let mut terminal = vec![false; n];
    for (s, t) in terminal.iter_mut().enumerate() {
        *t = is_cliff(s) || s == goal;
    }
    let moved = |s: usize, a: usize| -> usize {
        let (row, col) = (s / width, s % width);
        match a {
            CLIFF_UP if row > 0 => idx(row - 1, col),
            CLIFF_RIGHT if col + 1 < width => idx(row, col + 1),
            CLIFF_DOWN if row + 1 < height => idx(row + 1, col),
            CLIFF_LEFT if col > 0 => idx(row, col - 1),
            _ => s,
        }
    };
    let payoff = |next: usize| -> f64 {
        if next == goal {
            1.0
        } else if is_cliff(next) {
            -1.0
        } else {
            0.0
        }
    };
    let mut transition = vec![0.0; n * 4 * n];
    let mut reward = vec![0.0; n * 4];
    for s in 0..n {
        for a in 0..4 {
            let row = &mut transition[(s * 4 + a) * n..(s * 4 + a + 1) * n];
            if terminal[s] {
                row[s] = 1.0;
                continue;
            }
            for executed in 0..4 {
                let p = if executed == a { 1.0 - slip + slip / 4.0 } else { slip / 4.0 };
                if p > 0.0 {
                    let next = moved(s, executed);
                    row[next] += p;
                    reward[s * 4 + a] += p * payoff(next);
                }
            }
        }
    }
    let mut initial = vec![0.0; n];
    initial[start] = 1.0;
    TabularMdp::new(n, 4, transition, reward, gamma, initial, terminal)
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvSpec::ChainWalk { n, gamma } => write!(f, "chain_walk:n={n},gamma={gamma}"),
            EnvSpec::NoisyChain { n, sigma, gamma } => write!(f, "noisy_chain:n={n},sigma={sigma},gamma={gamma}"),
            EnvSpec::CliffGrid { width, height, slip, gamma } => {
                write!(f, "cliff_grid:width={width},height={height},slip={slip},gamma={gamma}")
            }
            EnvSpec::BiasedBandit { actions, mean, sigma, gamma } => {
                write!(f, "biased_bandit:actions={actions},mean={mean},sigma={sigma},gamma={gamma}")
            }
        }
    }
}

/// Parses the compact descriptor `name:key=value,key=value`.
impl FromStr for EnvSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let (name, params) = text.split_once(':').unwrap_or((text, ""));
        let mut map = serde_json::Map::new();
        map.insert("name".into(), serde_json::Value::String(name.trim().to_string()));
        for pair in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("expected key=value, got `{pair}`")))?;
            let value: serde_json::Value = serde_json::from_str(value.trim())
                .map_err(|_| Error::InvalidConfig(format!("`{key}` needs a numeric value, got `{value}`")))?;
            map.insert(key.trim().to_string(), value);
        }
        serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| Error::InvalidConfig(format!("environment descriptor `{text}`: {e}")))
    }
}
