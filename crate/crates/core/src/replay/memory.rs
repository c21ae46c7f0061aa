use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SumTree;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub state: usize,
    pub action: usize,
    pub reward: S,
    pub next_state: usize,
    pub terminal: bool,
    pub episode_id: u64,
}

/// A transition followed forward for up to M steps within its episode.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStepSample<S> {
    pub state: usize,
    pub action: usize,
    /// `r^(0) .. r^(effective_steps-1)` in temporal order.
    pub rewards: Vec<S>,
    /// State to bootstrap from: the next state of the last walked transition.
    pub bootstrap_state: usize,
    /// The last walked transition ended its episode.
    pub terminal: bool,
    /// A terminal was reached before M steps.
    pub terminated_early: bool,
    pub effective_steps: usize,
    pub index: usize,
    pub is_weight: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorityParams {
    /// Exponent ω applied to `error + floor`.
    pub exponent: f64,
    /// Floor ε_p added to every error.
    pub floor: f64,
    /// Running maximum before any update; new items enter at the running maximum.
    #[serde(default = "default_initial_priority")]
    pub initial: f64,
}

fn default_initial_priority() -> f64 {
    1.0
}

impl Default for PriorityParams {
    fn default() -> Self {
        Self { exponent: 0.5, floor: 1e-6, initial: default_initial_priority() }
    }
}

/// Ring buffer of transitions shared by `n_samplers` independent sum-trees.
#[derive(Debug, Clone)]
pub struct ReplayMemory<S> {
    capacity: usize,
    storage: Vec<Transition<S>>,
    write_cursor: usize,
    trees: Vec<SumTree<S>>,
    priority: PriorityParams,
}

/// `w_b = (size · P(b))^(−β)` normalized by the batch maximum.
pub fn importance_weights<S: Scalar>(probabilities: &[S], size: usize, beta: S) -> Result<Vec<S>> {
    if let Some(i) = probabilities.iter().position(|&p| !(p > S::zero())) {
        return Err(Error::ZeroProbability(i));
    }
    let n = S::lit(size as f64);
    let raw: Vec<S> = probabilities.iter().map(|&p| (n * p).powf(-beta)).collect();
    let max = raw.iter().copied().fold(S::zero(), S::max);
    Ok(raw.into_iter().map(|w| w / max).collect())
}

impl<S: Scalar> ReplayMemory<S> {
    pub fn new(capacity: usize, n_samplers: usize, priority: PriorityParams) -> Result<Self> {
        if capacity == 0 || n_samplers == 0 {
            return Err(Error::InvalidConfig("replay capacity and sampler count must be positive".into()));
        }
        if !(priority.floor > 0.0 && priority.exponent >= 0.0 && priority.initial > 0.0) {
            return Err(Error::InvalidConfig(
                "priority floor and initial priority must be positive, exponent non-negative".into(),
            ));
        }
        Ok(Self {
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 20)),
            write_cursor: 0,
            trees: (0..n_samplers).map(|_| SumTree::with_initial_max(capacity, S::lit(priority.initial))).collect(),
            priority,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn n_samplers(&self) -> usize {
        self.trees.len()
    }

    pub fn tree(&self, member: usize) -> &SumTree<S> {
        &self.trees[member]
    }

    pub fn get(&self, index: usize) -> Result<&Transition<S>> {
        self.storage.get(index).ok_or(Error::UnoccupiedIndex(index))
    }

    /// Stores `transition` at the write cursor, entering every sampler at its
    /// current maximum priority. Returns the slot written.
    pub fn push(&mut self, transition: Transition<S>) -> usize {
        let index = self.write_cursor;
        if self.storage.len() < self.capacity {
            self.storage.push(transition);
        } else {
            self.storage[index] = transition;
        }
        for tree in &mut self.trees {
            let p = tree.max_priority();
            tree.set(index, p);
        }
        self.write_cursor = (index + 1) % self.capacity;
        index
    }

    /// Transitions from oldest to newest.
    pub fn iter_chronological(&self) -> impl Iterator<Item = &Transition<S>> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.write_cursor };
        self.storage[split..].iter().chain(self.storage[..split].iter())
    }

    fn check_member(&self, member: usize) -> Result<()> {
        if member >= self.trees.len() {
            return Err(Error::MemberOutOfRange { member, members: self.trees.len() });
        }
        Ok(())
    }

    /// Follows `index` forward for up to `steps` transitions of the same episode.
    pub fn multi_step_assemble(&self, index: usize, steps: usize) -> Result<MultiStepSample<S>> {
        let first = self.get(index)?;
        let steps = steps.max(1);
        let mut rewards = Vec::with_capacity(steps);
        let mut current = first;
        rewards.push(current.reward);
        let mut pos = index;
        while rewards.len() < steps && !current.terminal {
            let next = (pos + 1) % self.capacity;
            if next == self.write_cursor || next >= self.storage.len() {
                break;
            }
            let candidate = &self.storage[next];
            if candidate.episode_id != current.episode_id {
                break;
            }
            current = candidate;
            pos = next;
            rewards.push(current.reward);
        }
        let effective_steps = rewards.len();
        Ok(MultiStepSample {
            state: first.state,
            action: first.action,
            rewards,
            bootstrap_state: current.next_state,
            terminal: current.terminal,
            terminated_early: current.terminal && effective_steps < steps,
            effective_steps,
            index,
            is_weight: S::one(),
        })
    }

    /// Stratified proportional draw of `batch_size` slots from sampler
    /// `member`, returned with their sampling probabilities.
    pub fn sample_indices<R: Rng + ?Sized>(
        &self,
        member: usize,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<(usize, S)>> {
        self.check_member(member)?;
        if self.storage.is_empty() || batch_size == 0 {
            return Err(Error::InsufficientFill { size: self.storage.len(), required: batch_size.max(1) });
        }
        let tree = &self.trees[member];
        let total = tree.total();
        let segment = total / S::lit(batch_size as f64);
        Ok((0..batch_size)
            .map(|i| {
                let u = S::lit(rng.random::<f64>());
                let mass = (S::lit(i as f64) + u) * segment;
                let leaf = tree.descend(mass.min(total));
                (leaf, tree.get(leaf) / total)
            })
            .collect())
    }

    /// Draws a prioritized multi-step batch for `member` with importance
    /// weights `(size · P)^(−β)` normalized by the batch maximum.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        member: usize,
        batch_size: usize,
        steps: usize,
        beta: S,
        warmup: usize,
        rng: &mut R,
    ) -> Result<Vec<MultiStepSample<S>>> {
        let required = warmup.max(1);
        if self.storage.len() < required {
            return Err(Error::InsufficientFill { size: self.storage.len(), required });
        }
        let drawn = self.sample_indices(member, batch_size, rng)?;
        let probs: Vec<S> = drawn.iter().map(|&(_, p)| p).collect();
        let weights = importance_weights(&probs, self.storage.len(), beta)?;
        drawn
            .iter()
            .zip(weights)
            .map(|(&(index, _), w)| {
                let mut sample = self.multi_step_assemble(index, steps)?;
                sample.is_weight = w;
                Ok(sample)
            })
            .collect()
    }

    /// Sets sampler `member`'s priorities at `indices` to `(error + ε_p)^ω`.
    pub fn update_priorities(&mut self, member: usize, indices: &[usize], errors: &[S]) -> Result<()> {
        self.check_member(member)?;
        if indices.len() != errors.len() {
            return Err(Error::ShapeMismatch("one error per index required".into()));
        }
        if let Some(&e) = errors.iter().find(|&&e| !(e >= S::zero())) {
            return Err(Error::NegativePriority(e.to_f64_lossy()));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= self.storage.len()) {
            return Err(Error::UnoccupiedIndex(i));
        }
        let (floor, exponent) = (S::lit(self.priority.floor), S::lit(self.priority.exponent));
        let tree = &mut self.trees[member];
        for (&i, &e) in indices.iter().zip(errors) {
            tree.set(i, (e + floor).powf(exponent));
        }
        Ok(())
    }

    /// Writes one JSON object per line, oldest first. See [`TransitionRecord`].
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for t in self.iter_chronological() {
            let record = TransitionRecord {
                episode_id: t.episode_id,
                s: t.state,
                a: t.action,
                r: t.reward.to_f64_lossy(),
                s_next: t.next_state,
                terminal: t.terminal,
            };
            serde_json::to_writer(&mut w, &record).map_err(|e| Error::Io(e.into()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Line schema of the replay dump:
/// `{"episode_id":u64,"s":usize,"a":usize,"r":f64,"s_next":usize,"terminal":bool}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionRecord {
    pub episode_id: u64,
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    pub terminal: bool,
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TransitionRecord>> {
    r.lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|line| {
            let line = line?;
            serde_json::from_str(&line).map_err(|e| Error::Io(e.into()))
        })
        .collect()
}
