//! Seeded training runs, checkpoint evaluation and CSV/manifest output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use meanq::diagnostics::{
    cross_run_stat, evaluate_ensemble, mean_action_values, CheckpointRecord, CrossRunStat, MatchedProbe,
    NormalizationRefs,
};
use meanq::environments::{monte_carlo_return, value_iteration, EnvSpec, EnvironmentHandle};
use meanq::learner::Agent;
use meanq::replay::Transition;
use meanq::rng::{substream, tags};
use meanq::Scalar;

use crate::config::{ExperimentConfig, Precision, Variant};

const REFERENCE_EPISODES: usize = 2_000;
const REFERENCE_TAG: &str = "reference";

/// One `(step, reset, action)` entry of a run's s₀ probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub step: u64,
    pub reset: usize,
    pub s0: usize,
    pub action: usize,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeedRun {
    pub records: Vec<CheckpointRecord>,
    pub probes: Vec<ProbeRow>,
}

/// A run that stopped early; keeps everything logged before the failure.
#[derive(Debug)]
pub struct SeedFailure {
    pub step: u64,
    pub error: meanq::Error,
    pub partial: SeedRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStatus {
    pub seed: u64,
    pub ok: bool,
    pub error: Option<String>,
    pub failed_step: Option<u64>,
    pub csv: String,
    pub probe_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub variant: Variant,
    pub environment: String,
    pub output_dir: String,
    pub references: NormalizationRefs,
    pub seeds: Vec<SeedStatus>,
    pub cross_run_csv: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output_dir: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub manifest: RunManifest,
    pub runs: BTreeMap<u64, SeedRun>,
    pub cross_run: Vec<CrossRunStat>,
}

/// Undiscounted Monte-Carlo returns of the uniform random policy (low) and
/// the value-iteration greedy policy (high).
pub fn normalization_refs(spec: &EnvSpec, cap: usize) -> meanq::Result<NormalizationRefs> {
    let mdp = spec.build()?;
    let n_actions = mdp.n_actions();
    let vi = value_iteration(&mdp, 1e-10)?;
    let mut env = EnvironmentHandle::from_spec(spec, cap, substream(0, REFERENCE_TAG, 0))?;
    let mut pick = substream(0, REFERENCE_TAG, 1);
    let low = monte_carlo_return(
        &mut env,
        &mut |_| rand::Rng::random_range(&mut pick, 0..n_actions),
        REFERENCE_EPISODES,
        spec.gamma(),
    )?;
    let high = monte_carlo_return(&mut env, &mut |s| vi.greedy_action(s), REFERENCE_EPISODES, spec.gamma())?;
    Ok(NormalizationRefs { low: low.mean_undiscounted, high: high.mean_undiscounted })
}

/// Initial states probed at every checkpoint. Shared by all seeds so reset
/// `j` names the same state in every run.
pub fn s0_draws(config: &ExperimentConfig) -> meanq::Result<Vec<usize>> {
    let mut env =
        EnvironmentHandle::from_spec(&config.environment, config.max_episode_steps, substream(0, tags::S0_RESETS, 0))?;
    Ok((0..config.s0_resets).map(|_| env.reset()).collect())
}

pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedRun, SeedFailure> {
    match config.precision {
        Precision::F64 => run_seed_typed::<f64>(config, seed),
        Precision::F32 => run_seed_typed::<f32>(config, seed),
    }
}

#[allow(clippy::too_many_arguments)]
fn checkpoint<S: Scalar>(
    agent: &Agent<S>,
    eval_env: &mut EnvironmentHandle,
    config: &ExperimentConfig,
    s0: &[usize],
    step: u64,
    seed: u64,
    losses: (f64, u64),
    run: &mut SeedRun,
) -> meanq::Result<()> {
    let ensemble = agent.policy_ensemble()?;
    let gamma = config.environment.gamma();
    let eval = evaluate_ensemble(ensemble, agent.head(), eval_env, config.eval_episodes, gamma)?;
    run.records.push(CheckpointRecord {
        run_id: seed,
        step,
        eval_return_undiscounted: eval.mean_undiscounted,
        eval_return_discounted: eval.mean_discounted,
        v_s0: eval.v_s0,
        bias: eval.bias,
        loss_mean: (losses.1 > 0).then(|| losses.0 / losses.1 as f64),
        gradient_updates: losses.1,
    });
    for (reset, &state) in s0.iter().enumerate() {
        for (action, q) in mean_action_values(ensemble, agent.head(), state)?.into_iter().enumerate() {
            run.probes.push(ProbeRow { step, reset, s0: state, action, q });
        }
    }
    Ok(())
}

fn run_seed_typed<S: Scalar>(config: &ExperimentConfig, seed: u64) -> Result<SeedRun, SeedFailure> {
    let mut run = SeedRun::default();
    let mut step = 0u64;
    let outcome = (|| -> meanq::Result<()> {
        let spec = &config.environment;
        let cap = config.max_episode_steps;
        let mut env = EnvironmentHandle::from_spec(spec, cap, substream(seed, tags::ENV, 0))?;
        let mut eval_env = EnvironmentHandle::from_spec(spec, cap, substream(seed, tags::EVAL, 0))?;
        let mut explore = substream(seed, tags::EXPLORE, 0);
        let s0 = s0_draws(config)?;
        let mut agent = Agent::<S>::new(config.learner.clone(), env.n_states(), env.n_actions(), seed)?;
        let mut losses = (0.0, 0u64);
        checkpoint(&agent, &mut eval_env, config, &s0, 0, seed, losses, &mut run)?;
        let mut episode_id = 0u64;
        let mut state = env.reset();
        while step < config.total_steps {
            let action = agent.act(state, &config.exploration, &mut explore)?;
            let out = env.step(action)?;
            step += 1;
            let metrics = agent.observe(Transition {
                state,
                action,
                reward: S::lit(out.reward),
                next_state: out.next_state,
                terminal: out.terminal,
                episode_id,
            })?;
            for m in &metrics.updates {
                losses.0 += m.loss.to_f64_lossy();
                losses.1 += 1;
            }
            if out.terminal || out.truncated {
                episode_id += 1;
                state = env.reset();
            } else {
                state = out.next_state;
            }
            if step.is_multiple_of(config.eval_every) || step == config.total_steps {
                checkpoint(&agent, &mut eval_env, config, &s0, step, seed, losses, &mut run)?;
                losses = (0.0, 0);
            }
        }
        Ok(())
    })();
    match outcome {
        Ok(()) => Ok(run),
        Err(error) => Err(SeedFailure { step, error, partial: run }),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const CHECKPOINT_HEADER: [&str; 8] = [
    "run_id",
    "step",
    "eval_return_undiscounted",
    "eval_return_discounted",
    "v_s0",
    "bias",
    "loss_mean",
    "gradient_updates",
];
pub const PROBE_HEADER: [&str; 5] = ["step", "reset", "s0", "action", "q"];
pub const CROSS_RUN_HEADER: [&str; 9] = [
    "step",
    "n_runs",
    "n_s0_resets",
    "mean_eval_return",
    "mean_bias",
    "std_v_s0",
    "relative_std_v_s0",
    "jensen_gap",
    "relative_jensen_gap",
];

/// Cross-run statistics at every step checkpointed by all of `runs`.
pub fn cross_run_stats(
    runs: &BTreeMap<u64, SeedRun>,
    refs: Option<NormalizationRefs>,
) -> meanq::Result<Vec<CrossRunStat>> {
    if runs.len() < 2 {
        return Ok(Vec::new());
    }
    let mut by_step: BTreeMap<u64, MatchedProbe> = BTreeMap::new();
    for run in runs.values() {
        let mut q_by_step: BTreeMap<u64, Vec<Vec<f64>>> = BTreeMap::new();
        for row in &run.probes {
            let resets = q_by_step.entry(row.step).or_default();
            if resets.len() <= row.reset {
                resets.resize(row.reset + 1, Vec::new());
            }
            resets[row.reset].push(row.q);
        }
        for record in &run.records {
            let probe = by_step.entry(record.step).or_insert_with(|| MatchedProbe {
                step: record.step,
                q_s0: Vec::new(),
                eval_returns: Vec::new(),
                biases: Vec::new(),
            });
            probe.q_s0.push(q_by_step.remove(&record.step).unwrap_or_default());
            probe.eval_returns.push(record.eval_return_undiscounted);
            probe.biases.push(record.bias);
        }
    }
    by_step
        .values()
        .filter(|p| p.q_s0.len() == runs.len())
        .map(|p| cross_run_stat(p, refs))
        .collect()
}

/// Runs every seed, writes per-seed CSVs, the cross-run CSV and `manifest.json`.
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> anyhow::Result<ExperimentOutcome> {
    let mut config = config.clone();
    if let Some(dir) = &options.output_dir {
        config.output_dir = dir.to_string_lossy().into_owned();
    }
    if let Some(seeds) = &options.seeds {
        config.seeds = seeds.clone();
    }
    let out_dir = PathBuf::from(&config.output_dir);
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("config.toml"), config.to_toml())?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(options.jobs).build()?;
    let results: Vec<(u64, Result<SeedRun, SeedFailure>)> =
        pool.install(|| config.seeds.par_iter().map(|&seed| (seed, run_seed(&config, seed))).collect());

    let mut statuses = Vec::new();
    let mut runs = BTreeMap::new();
    for (seed, result) in results {
        let csv_name = format!("seed-{seed}.csv");
        let probe_name = format!("seed-{seed}-s0.csv");
        let (run, status) = match result {
            Ok(run) => (run, SeedStatus { seed, ok: true, error: None, failed_step: None, csv: csv_name, probe_csv: probe_name }),
            Err(f) => {
                let status = SeedStatus {
                    seed,
                    ok: false,
                    error: Some(f.error.to_string()),
                    failed_step: Some(f.step),
                    csv: csv_name,
                    probe_csv: probe_name,
                };
                (f.partial, status)
            }
        };
        write_csv(&out_dir.join(&status.csv), &run.records, &CHECKPOINT_HEADER)?;
        write_csv(&out_dir.join(&status.probe_csv), &run.probes, &PROBE_HEADER)?;
        if status.ok {
            runs.insert(seed, run);
        }
        statuses.push(status);
    }

    let refs = normalization_refs(&config.environment, config.max_episode_steps)?;
    let usable = (refs.high - refs.low).abs() > 0.0;
    let cross_run = cross_run_stats(&runs, usable.then_some(refs))?;
    let cross_run_csv = "cross_run.csv".to_string();
    write_csv(&out_dir.join(&cross_run_csv), &cross_run, &CROSS_RUN_HEADER)?;

    let manifest = RunManifest {
        config_hash: config.hash(),
        variant: config.variant,
        environment: config.environment.to_string(),
        output_dir: config.output_dir.clone(),
        references: refs,
        seeds: statuses,
        cross_run_csv,
        config,
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(ExperimentOutcome { manifest, runs, cross_run })
}
