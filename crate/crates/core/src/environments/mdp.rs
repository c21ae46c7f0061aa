use crate::error::{Error, Result};

const ROW_TOLERANCE: f64 = 1e-12;

/// Exact finite MDP with expected rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// `p(s'|s,a)` at `(s * n_actions + a) * n_states + s'`.
    transition: Vec<f64>,
    /// `r(s,a)` at `s * n_actions + a`.
    reward: Vec<f64>,
    gamma: f64,
    initial: Vec<f64>,
    terminal: Vec<bool>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        initial: Vec<f64>,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp("state and action counts must be positive".into()));
        }
        if transition.len() != n_states * n_actions * n_states
            || reward.len() != n_states * n_actions
            || initial.len() != n_states
            || terminal.len() != n_states
        {
            return Err(Error::InvalidMdp("array shapes do not match state/action counts".into()));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidMdp(format!("discount {gamma} outside [0, 1]")));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidMdp("rewards must be finite".into()));
        }
        let mdp = Self { n_states, n_actions, transition, reward, gamma, initial, terminal };
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = mdp.transition_row(s, a);
                if row.iter().any(|&p| !(p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > ROW_TOLERANCE {
                    return Err(Error::InvalidMdp(format!("transition row ({s}, {a}) is not a distribution")));
                }
                if mdp.terminal[s] && (row[s] != 1.0 || mdp.reward(s, a) != 0.0) {
                    return Err(Error::InvalidMdp(format!("terminal state {s} must self-absorb with zero reward")));
                }
            }
        }
        if mdp.initial.iter().any(|&p| !(p >= 0.0)) || (mdp.initial.iter().sum::<f64>() - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::InvalidMdp("initial distribution must sum to 1".into()));
        }
        Ok(mdp)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }
}

/// Optimal action values from value iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueIterationResult {
    n_actions: usize,
    q_star: Vec<f64>,
    pub v_star: Vec<f64>,
    pub iterations: usize,
    /// `‖T Q − Q‖_∞` of the returned `Q`.
    pub residual: f64,
}

impl ValueIterationResult {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q_star[s * self.n_actions + a]
    }

    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.q_star[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Row-major `n_states × n_actions` table.
    pub fn q_table(&self) -> &[f64] {
        &self.q_star
    }

    /// Greedy optimal action, lowest index on ties.
    pub fn greedy_action(&self, s: usize) -> usize {
        crate::scalar::argmax(self.q_row(s)).unwrap_or(0)
    }

    /// `Σ_s μ(s) V*(s)` under the MDP's initial distribution.
    pub fn initial_value(&self, mdp: &TabularMdp) -> f64 {
        mdp.initial_distribution().iter().zip(&self.v_star).map(|(p, v)| p * v).sum()
    }
}

fn bellman(mdp: &TabularMdp, q: &[f64], out: &mut [f64]) {
    let v: Vec<f64> = q.chunks(mdp.n_actions).map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let next: f64 = mdp.transition_row(s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
            out[s * mdp.n_actions + a] = mdp.reward(s, a) + mdp.gamma * next;
        }
    }
}

/// Iterates the Bellman optimality operator from zero until the returned
/// table's sup-norm residual is below `tolerance`.
pub fn value_iteration(mdp: &TabularMdp, tolerance: f64) -> Result<ValueIterationResult> {
    if mdp.gamma >= 1.0 {
        return Err(Error::DiscountNotBelowOne(mdp.gamma));
    }
    if !(tolerance > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tolerance}")));
    }
    const MAX_SWEEPS: usize = 10_000_000;
    let n = mdp.n_states * mdp.n_actions;
    let mut q = vec![0.0; n];
    let mut next = vec![0.0; n];
    for iterations in 0..MAX_SWEEPS {
        bellman(mdp, &q, &mut next);
        let residual = q.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if residual < tolerance {
            let v_star = q.chunks(mdp.n_actions).map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
            return Ok(ValueIterationResult { n_actions: mdp.n_actions, q_star: q, v_star, iterations, residual });
        }
        std::mem::swap(&mut q, &mut next);
    }
    Err(Error::NoConvergence { tolerance, iterations: MAX_SWEEPS })
}
