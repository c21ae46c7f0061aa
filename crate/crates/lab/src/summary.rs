//! Final and best evaluation return per variant across completed runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;

use meanq::diagnostics::{mean, sample_std, CheckpointRecord};

use crate::config::Variant;
use crate::runner::RunManifest;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub variant: Variant,
    pub environment: String,
    pub runs: usize,
    pub final_mean: f64,
    pub final_std: f64,
    pub best_mean: f64,
    pub best_std: f64,
}

/// Mean and sample std; a single value has std 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    (mean(values).unwrap_or(f64::NAN), sample_std(values).unwrap_or(0.0))
}

/// `(final, best)` undiscounted evaluation return of one run.
pub fn final_and_best(records: &[CheckpointRecord]) -> Option<(f64, f64)> {
    let last = records.last()?.eval_return_undiscounted;
    let best = records.iter().map(|r| r.eval_return_undiscounted).fold(f64::NEG_INFINITY, f64::max);
    Some((last, best))
}

pub fn summarize_runs(variant: Variant, environment: &str, runs: &[Vec<CheckpointRecord>]) -> anyhow::Result<SummaryRow> {
    let pairs: Vec<(f64, f64)> = runs.iter().filter_map(|r| final_and_best(r)).collect();
    if pairs.is_empty() {
        bail!("no completed runs for variant {variant}");
    }
    let finals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let bests: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (final_mean, final_std) = mean_std(&finals);
    let (best_mean, best_std) = mean_std(&bests);
    Ok(SummaryRow { variant, environment: environment.to_string(), runs: pairs.len(), final_mean, final_std, best_mean, best_std })
}

pub fn read_records(path: &Path) -> anyhow::Result<Vec<CheckpointRecord>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    reader.deserialize().map(|r| r.map_err(Into::into)).collect()
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// One row per (variant, environment) over the successful seeds of `manifests`.
pub fn summarize(manifests: &[PathBuf]) -> anyhow::Result<Vec<SummaryRow>> {
    if manifests.is_empty() {
        bail!("no manifests given");
    }
    let mut groups: BTreeMap<(Variant, String), Vec<Vec<CheckpointRecord>>> = BTreeMap::new();
    for path in manifests {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let manifest: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let dir = manifest_dir(path);
        let runs = groups.entry((manifest.variant, manifest.environment.clone())).or_default();
        for seed in manifest.seeds.iter().filter(|s| s.ok) {
            runs.push(read_records(&dir.join(&seed.csv))?);
        }
    }
    let rows = groups
        .iter()
        .map(|((variant, env), runs)| summarize_runs(*variant, env, runs))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if rows.is_empty() {
        bail!("manifests hold no runs");
    }
    Ok(rows)
}

pub fn render_table(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:<28} {:>4}  {:>20}  {:>20}", "variant", "environment", "runs", "final", "best");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<16} {:<28} {:>4}  {:>9.4} ± {:<8.4}  {:>9.4} ± {:<8.4}",
            r.variant.name(),
            r.environment,
            r.runs,
            r.final_mean,
            r.final_std,
            r.best_mean,
            r.best_std
        );
    }
    out
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(returns: &[f64]) -> Vec<CheckpointRecord> {
        returns
            .iter()
            .enumerate()
            .map(|(i, &g)| CheckpointRecord {
                run_id: 0,
                step: i as u64,
                eval_return_undiscounted: g,
                eval_return_discounted: g,
                v_s0: 0.0,
                bias: 0.0,
                loss_mean: None,
                gradient_updates: 0,
            })
            .collect()
    }

    #[test]
    fn five_runs() {
        let runs: Vec<_> = (1..=5).map(|g| run(&[0.0, 10.0, f64::from(g)])).collect();
        let row = summarize_runs(Variant::Meanq, "x", &runs).unwrap();
        assert_eq!(row.final_mean, 3.0);
        assert!((row.final_std - 1.5811388300841898).abs() < 1e-12);
        assert_eq!((row.best_mean, row.best_std), (10.0, 0.0));
    }

    #[test]
    fn single_and_identical_runs() {
        let row = summarize_runs(Variant::Dqn, "x", &[run(&[2.0])]).unwrap();
        assert_eq!((row.final_mean, row.final_std), (2.0, 0.0));
        let row = summarize_runs(Variant::Dqn, "x", &[run(&[2.0]), run(&[2.0])]).unwrap();
        assert_eq!((row.final_mean, row.final_std), (2.0, 0.0));
        assert!(summarize_runs(Variant::Dqn, "x", &[]).is_err());
        assert!(summarize(&[]).is_err());
    }
}
