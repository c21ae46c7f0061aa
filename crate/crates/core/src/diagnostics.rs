//! Evaluation, estimation bias, cross-run variance of `V(s₀)` and the Jensen gap.
//!
//! Every aggregate here is a pure function of per-run records, so tables can
//! be recomputed from logged CSVs alone.

use serde::{Deserialize, Serialize};

use crate::distributional::ValueHead;
use crate::environments::EnvironmentHandle;
use crate::error::{Error, Result};
use crate::exploration::greedy_from_members;
use crate::scalar::{max_value, Scalar};
use crate::value_model::{mean_over_members, Ensemble};

pub const DEFAULT_EVAL_EPISODES: usize = 20;
pub const DEFAULT_S0_RESETS: usize = 50;

/// One evaluation point of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub run_id: u64,
    pub step: u64,
    pub eval_return_undiscounted: f64,
    pub eval_return_discounted: f64,
    /// Mean over evaluation episodes of `V(s₀)` at each episode's own start.
    pub v_s0: f64,
    pub bias: f64,
    /// Mean member loss over updates since the previous checkpoint; empty before training.
    pub loss_mean: Option<f64>,
    pub gradient_updates: u64,
}

/// Matched-checkpoint statistics across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRunStat {
    pub step: u64,
    pub n_runs: usize,
    pub n_s0_resets: usize,
    pub mean_eval_return: f64,
    pub mean_bias: f64,
    pub std_v_s0: f64,
    pub relative_std_v_s0: Option<f64>,
    pub jensen_gap: f64,
    pub relative_jensen_gap: Option<f64>,
}

/// Returns that map to standardized performance 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRefs {
    pub low: f64,
    pub high: f64,
}

impl NormalizationRefs {
    /// `(perf − low) / (high − low)`, undefined when it vanishes.
    pub fn standardize(&self, performance: f64) -> Result<Option<f64>> {
        let span = self.high - self.low;
        if !(span.abs() > 0.0) || !span.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "normalization references must differ, got low {} high {}",
                self.low, self.high
            )));
        }
        let z = (performance - self.low) / span;
        Ok(if z.abs() < 1e-12 || !z.is_finite() { None } else { Some(z) })
    }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample standard deviation (divisor n − 1); `None` below two values.
pub fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub mean_undiscounted: f64,
    pub mean_discounted: f64,
    /// Mean of `V(s₀) − Σ γᵗ rₜ` over episodes.
    pub bias: f64,
    /// Mean of `V(s₀)` over episodes.
    pub v_s0: f64,
    pub episodes: usize,
}

/// Runs `n_eval` episodes of `policy`, scoring `value` at each episode's start.
pub fn evaluate(
    env: &mut EnvironmentHandle,
    n_eval: usize,
    gamma: f64,
    policy: &mut dyn FnMut(usize) -> Result<usize>,
    value: &mut dyn FnMut(usize) -> Result<f64>,
) -> Result<EvalResult> {
    if n_eval == 0 {
        return Err(Error::InvalidConfig("at least one evaluation episode required".into()));
    }
    let (mut undisc, mut disc, mut bias, mut v0) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n_eval {
        let mut s = env.reset();
        let v = value(s)?;
        let (mut g, mut g_disc, mut discount) = (0.0, 0.0, 1.0);
        loop {
            let out = env.step(policy(s)?)?;
            g += out.reward;
            g_disc += discount * out.reward;
            discount *= gamma;
            s = out.next_state;
            if out.terminal || out.truncated {
                break;
            }
        }
        undisc += g;
        disc += g_disc;
        bias += v - g_disc;
        v0 += v;
    }
    let n = n_eval as f64;
    Ok(EvalResult {
        mean_undiscounted: undisc / n,
        mean_discounted: disc / n,
        bias: bias / n,
        v_s0: v0 / n,
        episodes: n_eval,
    })
}

/// Greedy evaluation of the ensemble-mean policy with its own `V(s₀)`.
pub fn evaluate_ensemble<S: Scalar>(
    ensemble: &Ensemble<S>,
    head: &ValueHead<S>,
    env: &mut EnvironmentHandle,
    n_eval: usize,
    gamma: f64,
) -> Result<EvalResult> {
    evaluate(
        env,
        n_eval,
        gamma,
        &mut |s| greedy_from_members(&head.member_values(ensemble, s)?),
        &mut |s| Ok(head.ensemble_value(ensemble, s)?.to_f64_lossy()),
    )
}

/// `(undiscounted mean, discounted mean)` of greedy-policy returns.
pub fn eval_performance<S: Scalar>(
    ensemble: &Ensemble<S>,
    head: &ValueHead<S>,
    env: &mut EnvironmentHandle,
    n_eval: usize,
    gamma: f64,
) -> Result<(f64, f64)> {
    let r = evaluate_ensemble(ensemble, head, env, n_eval, gamma)?;
    Ok((r.mean_undiscounted, r.mean_discounted))
}

pub fn estimation_bias<S: Scalar>(
    ensemble: &Ensemble<S>,
    head: &ValueHead<S>,
    env: &mut EnvironmentHandle,
    n_eval: usize,
    gamma: f64,
) -> Result<f64> {
    Ok(evaluate_ensemble(ensemble, head, env, n_eval, gamma)?.bias)
}

/// Ensemble-mean action values at `state` as f64.
pub fn mean_action_values<S: Scalar>(ensemble: &Ensemble<S>, head: &ValueHead<S>, state: usize) -> Result<Vec<f64>> {
    Ok(mean_over_members(&head.member_values(ensemble, state)?)?.into_iter().map(|q| q.to_f64_lossy()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceStat {
    pub std: f64,
    /// `std` over standardized performance; `None` when that is zero.
    pub relative: Option<f64>,
}

fn check_runs<T>(runs: &[T]) -> Result<()> {
    if runs.len() < 2 {
        return Err(Error::InsufficientRuns { required: 2, got: runs.len() });
    }
    Ok(())
}

/// Cross-run sample std of `V(s₀)` per s₀ draw, averaged over draws.
/// `v_s0` is indexed run × reset.
pub fn cross_run_std(v_s0: &[Vec<f64>]) -> Result<f64> {
    check_runs(v_s0)?;
    let resets = v_s0[0].len();
    if resets == 0 || v_s0.iter().any(|r| r.len() != resets) {
        return Err(Error::ShapeMismatch("every run needs the same non-zero number of s0 draws".into()));
    }
    let per_reset: Vec<f64> = (0..resets)
        .map(|j| {
            let column: Vec<f64> = v_s0.iter().map(|run| run[j]).collect();
            sample_std(&column).unwrap_or(0.0)
        })
        .collect();
    Ok(mean(&per_reset).unwrap_or(0.0))
}

/// [`cross_run_std`] plus its ratio to the standardized `performance`
/// (the runs' mean return).
pub fn estimation_variance(v_s0: &[Vec<f64>], performance: f64, refs: NormalizationRefs) -> Result<VarianceStat> {
    let std = cross_run_std(v_s0)?;
    let relative = refs.standardize(performance)?.map(|z| std / z);
    Ok(VarianceStat { std, relative })
}

/// `mean_r max_a Q_r(a) − max_a mean_r Q_r(a)` over runs `r`. Reported as
/// computed, including small negative values.
pub fn jensen_gap(runs: &[Vec<f64>]) -> Result<f64> {
    check_runs(runs)?;
    let n_actions = runs[0].len();
    if n_actions == 0 || runs.iter().any(|r| r.len() != n_actions) {
        return Err(Error::ShapeMismatch("runs must share one non-empty action space".into()));
    }
    let max_of_each: Vec<f64> = runs.iter().map(|r| max_value(r).unwrap_or(f64::NAN)).collect();
    let mean_of_max = mean(&max_of_each).unwrap_or(f64::NAN);
    let mean_q = mean_over_members(runs)?;
    let max_of_mean = max_value(&mean_q).unwrap_or(f64::NAN);
    let gap = mean_of_max - max_of_mean;
    if !gap.is_finite() {
        return Err(Error::NonFinite("Jensen gap"));
    }
    Ok(gap)
}

/// Jensen gap averaged over s₀ draws; input is run × reset × action.
pub fn jensen_gap_over_resets(runs: &[Vec<Vec<f64>>]) -> Result<f64> {
    check_runs(runs)?;
    let resets = runs[0].len();
    if resets == 0 || runs.iter().any(|r| r.len() != resets) {
        return Err(Error::ShapeMismatch("every run needs the same non-zero number of s0 draws".into()));
    }
    let gaps = (0..resets)
        .map(|j| jensen_gap(&runs.iter().map(|run| run[j].clone()).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&gaps).unwrap_or(0.0))
}

/// Action values at s₀ of every run at one checkpoint; run × reset × action.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedProbe {
    pub step: u64,
    pub q_s0: Vec<Vec<Vec<f64>>>,
    pub eval_returns: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Statistics of one matched checkpoint. Without references the relative
/// forms are left undefined.
pub fn cross_run_stat(probe: &MatchedProbe, refs: Option<NormalizationRefs>) -> Result<CrossRunStat> {
    check_runs(&probe.q_s0)?;
    let v_s0: Vec<Vec<f64>> = probe
        .q_s0
        .iter()
        .map(|run| run.iter().map(|q| max_value(q).unwrap_or(f64::NAN)).collect())
        .collect();
    let performance = mean(&probe.eval_returns).ok_or(Error::InsufficientRuns { required: 2, got: 0 })?;
    let std = cross_run_std(&v_s0)?;
    let gap = jensen_gap_over_resets(&probe.q_s0)?;
    let z = match refs {
        Some(refs) => refs.standardize(performance)?,
        None => None,
    };
    Ok(CrossRunStat {
        step: probe.step,
        n_runs: probe.q_s0.len(),
        n_s0_resets: probe.q_s0[0].len(),
        mean_eval_return: performance,
        mean_bias: mean(&probe.biases).unwrap_or(f64::NAN),
        std_v_s0: std,
        relative_std_v_s0: z.map(|z| std / z),
        jensen_gap: gap,
        relative_jensen_gap: z.map(|z| gap / z),
    })
}

/// Within-group statistics and their across-group mean and spread.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedStat {
    pub groups: Vec<f64>,
    pub mean: f64,
    /// Sample std across groups; `None` for a single group.
    pub spread: Option<f64>,
}

/// Splits `runs` into consecutive groups of `group_size` and applies `stat` to each.
pub fn grouped_stats<T>(
    runs: &[T],
    group_size: usize,
    stat: impl Fn(&[T]) -> Result<f64>,
) -> Result<GroupedStat> {
    if group_size == 0 || runs.is_empty() || !runs.len().is_multiple_of(group_size) {
        return Err(Error::IndivisibleGroups { runs: runs.len(), group_size });
    }
    let groups = runs.chunks(group_size).map(stat).collect::<Result<Vec<_>>>()?;
    Ok(GroupedStat { mean: mean(&groups).unwrap_or(0.0), spread: sample_std(&groups), groups })
}
