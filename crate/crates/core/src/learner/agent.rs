use super::targets::{compute_distributional_targets, compute_scalar_targets, scalar_loss, TdTarget};
use super::{EnsembleMode, LearnerConfig, ModelSpec, SamplingMode, ValueMode};
use crate::distributional::{cross_entropy_loss, Support, ValueHead};
use crate::error::{Error, Result};
use crate::exploration::{greedy_from_members, ExplorationPolicy};
use crate::replay::{MultiStepSample, ReplayMemory, Transition};
use crate::rng::{substream, tags, Rng};
use crate::scalar::{max_value, Scalar};
use crate::value_model::{
    clip_grad_norm, mean_over_members, ActionValueTable, Ensemble, Estimator, MlpQNetwork, Optimizer,
    SnapshotHistory, TargetEnsemble,
};

/// Outcome of one gradient update of one member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemberMetrics<S> {
    pub member: usize,
    /// Batch mean of the weighted per-sample losses.
    pub loss: S,
    /// Batch mean of the unweighted priority inputs.
    pub priority: S,
}

/// Everything that happened after one environment step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationMetrics<S> {
    pub passes: u32,
    pub updates: Vec<MemberMetrics<S>>,
    pub synced: bool,
}

impl<S: Scalar> IterationMetrics<S> {
    pub fn mean_loss(&self) -> Option<S> {
        if self.updates.is_empty() {
            return None;
        }
        let total: S = self.updates.iter().map(|m| m.loss).sum();
        Some(total / S::lit(self.updates.len() as f64))
    }
}

/// Ensemble learner with shared replay, configured per [`LearnerConfig`].
#[derive(Debug, Clone)]
pub struct Agent<S> {
    config: LearnerConfig,
    head: ValueHead<S>,
    live: Ensemble<S>,
    targets: TargetEnsemble<S>,
    snapshots: Option<SnapshotHistory<S>>,
    optimizers: Vec<Optimizer<S>>,
    memory: ReplayMemory<S>,
    sampler_rngs: Vec<Rng>,
    grads: Vec<S>,
    env_steps: u64,
}

fn build_member<S: Scalar>(
    model: &ModelSpec,
    n_states: usize,
    n_actions: usize,
    outputs_per_action: usize,
    rng: &mut Rng,
) -> Result<Estimator<S>> {
    Ok(match model {
        ModelSpec::Table => {
            Estimator::Table(ActionValueTable::zeros_with_outputs(n_states, n_actions, outputs_per_action)?)
        }
        ModelSpec::Mlp { hidden, activation } => {
            let mut sizes = Vec::with_capacity(hidden.len() + 2);
            sizes.push(n_states);
            sizes.extend_from_slice(hidden);
            sizes.push(n_actions * outputs_per_action);
            Estimator::Mlp(MlpQNetwork::random(sizes, n_actions, *activation, rng)?)
        }
    })
}

impl<S: Scalar> Agent<S> {
    /// Fresh agent for a discrete environment. Member `k` is initialized from
    /// stream `(seed, init, k)` and samples replay from `(seed, replay, k)`.
    pub fn new(config: LearnerConfig, n_states: usize, n_actions: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidConfig("environment needs at least one state and one action".into()));
        }
        let head = match config.value_mode {
            ValueMode::Scalar => ValueHead::Scalar,
            ValueMode::Distributional(spec) => ValueHead::Categorical(Support::from_spec(&spec)?),
        };
        let members = (0..config.live_members())
            .map(|k| {
                let mut rng = substream(seed, tags::INIT, k as u64);
                build_member(&config.model, n_states, n_actions, head.outputs_per_action(), &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let live = Ensemble::new(members)?;
        let targets = TargetEnsemble::new(config.target, &live)?;
        let snapshots = match config.ensemble_mode {
            EnsembleMode::Snapshot => {
                let mut history = SnapshotHistory::new(config.ensemble_size)?;
                history.push(live.member(0));
                Some(history)
            }
            EnsembleMode::TrueEnsemble => None,
        };
        let n_params = live.member(0).params().len();
        let optimizers = (0..live.len())
            .map(|_| Ok(Optimizer::new(config.optimizer, config.learning_rate, n_params)?.with_schedule(config.lr_schedule)))
            .collect::<Result<Vec<_>>>()?;
        let memory = ReplayMemory::new(config.replay_capacity, config.samplers(), config.priority)?;
        let sampler_rngs = (0..config.samplers()).map(|k| substream(seed, tags::REPLAY, k as u64)).collect();
        Ok(Self {
            config,
            head,
            live,
            targets,
            snapshots,
            optimizers,
            memory,
            sampler_rngs,
            grads: vec![S::zero(); n_params],
            env_steps: 0,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn head(&self) -> &ValueHead<S> {
        &self.head
    }

    /// Live networks being trained.
    pub fn live(&self) -> &Ensemble<S> {
        &self.live
    }

    pub fn live_mut(&mut self) -> &mut Ensemble<S> {
        &mut self.live
    }

    pub fn memory(&self) -> &ReplayMemory<S> {
        &self.memory
    }

    pub fn optimizer(&self, member: usize) -> &Optimizer<S> {
        &self.optimizers[member]
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    /// Parameters that TD targets bootstrap from.
    pub fn target_ensemble(&self) -> Result<&Ensemble<S>> {
        match &self.snapshots {
            Some(history) => history.as_ensemble(),
            None => Ok(self.targets.view(&self.live)),
        }
    }

    /// Ensemble whose mean defines the acting and evaluation policy: the
    /// snapshot history in snapshot mode, the live members otherwise.
    pub fn policy_ensemble(&self) -> Result<&Ensemble<S>> {
        match &self.snapshots {
            Some(history) => history.as_ensemble(),
            None => Ok(&self.live),
        }
    }

    /// Member × action values of the policy ensemble.
    pub fn member_values(&self, state: usize) -> Result<Vec<Vec<S>>> {
        self.head.member_values(self.policy_ensemble()?, state)
    }

    /// Ensemble-mean action values.
    pub fn mean_values(&self, state: usize) -> Result<Vec<S>> {
        mean_over_members(&self.member_values(state)?)
    }

    /// `V(s) = max_a mean_k Q_k(s, a)`.
    pub fn value(&self, state: usize) -> Result<S> {
        max_value(&self.mean_values(state)?).ok_or(Error::NonFinite("ensemble values"))
    }

    pub fn greedy_action(&self, state: usize) -> Result<usize> {
        greedy_from_members(&self.member_values(state)?)
    }

    /// Behaviour action at the current environment step.
    pub fn act<R: rand::Rng + ?Sized>(&self, state: usize, policy: &ExplorationPolicy, rng: &mut R) -> Result<usize> {
        policy.select(&self.member_values(state)?, self.env_steps, rng)
    }

    /// Stores one environment transition, then trains per the update ratio
    /// and refreshes lagging targets.
    pub fn observe(&mut self, transition: Transition<S>) -> Result<IterationMetrics<S>> {
        if !transition.reward.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        self.memory.push(transition);
        self.env_steps += 1;
        self.train_iteration()
    }

    /// Gradient passes due at the current step followed by a target sync.
    pub fn train_iteration(&mut self) -> Result<IterationMetrics<S>> {
        let mut metrics = IterationMetrics::default();
        let ratio = self.config.updates_per_interaction;
        if self.memory.len() >= self.config.effective_warmup() && self.env_steps.is_multiple_of(u64::from(ratio.interactions)) {
            for _ in 0..ratio.updates {
                self.gradient_pass(&mut metrics)?;
                metrics.passes += 1;
            }
        }
        metrics.synced = self.targets.sync(&self.live, self.env_steps);
        Ok(metrics)
    }

    fn gradient_pass(&mut self, metrics: &mut IterationMetrics<S>) -> Result<()> {
        match (self.config.ensemble_mode, self.config.sampling) {
            (EnsembleMode::Snapshot, _) => {
                metrics.updates.push(self.train_member(0)?);
                let history = self.snapshots.as_mut().expect("snapshot mode keeps a history");
                history.push(self.live.member(0));
            }
            (EnsembleMode::TrueEnsemble, SamplingMode::Independent) => {
                for k in 0..self.live.len() {
                    metrics.updates.push(self.train_member(k)?);
                }
            }
            (EnsembleMode::TrueEnsemble, SamplingMode::Shared) => {
                let batch = self.sample(0)?;
                let mut errors = vec![S::zero(); batch.len()];
                for k in 0..self.live.len() {
                    let (m, e) = self.update_member(k, &batch)?;
                    for (acc, e) in errors.iter_mut().zip(e) {
                        *acc += e;
                    }
                    metrics.updates.push(m);
                }
                let k = S::lit(self.live.len() as f64);
                errors.iter_mut().for_each(|e| *e /= k);
                let indices: Vec<usize> = batch.iter().map(|s| s.index).collect();
                self.memory.update_priorities(0, &indices, &errors)?;
            }
        }
        Ok(())
    }

    fn sampler_for(&self, member: usize) -> usize {
        if self.memory.n_samplers() == 1 {
            0
        } else {
            member
        }
    }

    fn sample(&mut self, sampler: usize) -> Result<Vec<MultiStepSample<S>>> {
        let beta = S::lit(self.config.beta_at(self.env_steps));
        self.memory.sample_batch(
            sampler,
            self.config.batch_size,
            self.config.multi_step,
            beta,
            self.config.effective_warmup(),
            &mut self.sampler_rngs[sampler],
        )
    }

    /// Samples from member `k`'s priority tree, takes one optimizer step on
    /// member `k`, and rewrites that tree's priorities for the batch. Nothing
    /// else is mutated.
    pub fn train_member(&mut self, k: usize) -> Result<MemberMetrics<S>> {
        if k >= self.live.len() {
            return Err(Error::MemberOutOfRange { member: k, members: self.live.len() });
        }
        let sampler = self.sampler_for(k);
        let batch = self.sample(sampler)?;
        let (metrics, errors) = self.update_member(k, &batch)?;
        let indices: Vec<usize> = batch.iter().map(|s| s.index).collect();
        self.memory.update_priorities(sampler, &indices, &errors)?;
        Ok(metrics)
    }

    fn targets_for(&self, batch: &[MultiStepSample<S>]) -> Result<Vec<TdTarget<S>>> {
        let ensemble = self.target_ensemble()?;
        let gamma = S::lit(self.config.gamma);
        Ok(match &self.head {
            ValueHead::Scalar => {
                compute_scalar_targets(batch, ensemble, gamma)?.into_iter().map(TdTarget::Scalar).collect()
            }
            ValueHead::Categorical(support) => compute_distributional_targets(batch, ensemble, support, gamma)?
                .into_iter()
                .map(TdTarget::Distribution)
                .collect(),
        })
    }

    /// One optimizer step on member `k` against `batch`. Returns metrics and
    /// the per-sample priority inputs.
    fn update_member(&mut self, k: usize, batch: &[MultiStepSample<S>]) -> Result<(MemberMetrics<S>, Vec<S>)> {
        let targets = self.targets_for(batch)?;
        let inv_b = S::one() / S::lit(batch.len() as f64);
        let opa = self.head.outputs_per_action();
        let member = self.live.member(k);
        let n_actions = member.n_actions();
        self.grads.iter_mut().for_each(|g| *g = S::zero());
        let mut loss = S::zero();
        let mut errors = Vec::with_capacity(batch.len());
        for (sample, target) in batch.iter().zip(&targets) {
            if sample.action >= n_actions {
                return Err(Error::ActionOutOfRange { action: sample.action, n_actions });
            }
            let pass = member.forward_for_training(sample.state)?;
            let mut out_grad = vec![S::zero(); pass.outputs().len()];
            let block = sample.action * opa..(sample.action + 1) * opa;
            match target {
                TdTarget::Scalar(y) => {
                    let l = scalar_loss(*y, pass.outputs()[sample.action], sample.is_weight);
                    out_grad[sample.action] = l.grad * inv_b;
                    loss += l.loss;
                    errors.push(l.priority);
                }
                TdTarget::Distribution(c) => {
                    let (ce, g) = cross_entropy_loss(c.probs(), &pass.outputs()[block.clone()])?;
                    for (o, g) in out_grad[block].iter_mut().zip(g) {
                        *o = sample.is_weight * g * inv_b;
                    }
                    loss += sample.is_weight * ce;
                    errors.push(ce.max(S::zero()));
                }
            }
            member.backward(&pass, &out_grad, &mut self.grads)?;
        }
        if let Some(c) = self.config.effective_grad_clip() {
            clip_grad_norm(&mut self.grads, S::lit(c));
        }
        self.optimizers[k].step(self.live.member_mut(k).params_mut(), &self.grads)?;
        let priority = errors.iter().copied().sum::<S>() * inv_b;
        Ok((MemberMetrics { member: k, loss: loss * inv_b, priority }, errors))
    }
}
