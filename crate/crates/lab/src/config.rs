//! Experiment files: TOML with a fixed schema, resolved against the chosen variant.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use meanq::diagnostics::{DEFAULT_EVAL_EPISODES, DEFAULT_S0_RESETS};
use meanq::environments::{EnvSpec, DEFAULT_EPISODE_CAP};
use meanq::exploration::ExplorationPolicy;
use meanq::learner::{EnsembleMode, LearnerConfig, SamplingMode};
use meanq::value_model::TargetMode;

/// Target refresh period used when a variant needs lagging targets and the file names none.
pub const DEFAULT_TARGET_PERIOD: u64 = 500;
const DEFAULT_ENSEMBLE_SIZE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Meanq,
    MeanqNoTarget,
    Dqn,
    DqnNoTarget,
    AvgDqn,
    EnsDqn,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Meanq => "meanq",
            Variant::MeanqNoTarget => "meanq_no_target",
            Variant::Dqn => "dqn",
            Variant::DqnNoTarget => "dqn_no_target",
            Variant::AvgDqn => "avg_dqn",
            Variant::EnsDqn => "ens_dqn",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    #[serde(default = "default_total_steps")]
    pub total_steps: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_s0_resets")]
    pub s0_resets: usize,
    #[serde(default = "default_episode_cap")]
    pub max_episode_steps: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub precision: Precision,
    pub environment: EnvSpec,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub exploration: ExplorationPolicy,
}

fn default_total_steps() -> u64 {
    100_000
}
fn default_eval_every() -> u64 {
    2_000
}
fn default_eval_episodes() -> usize {
    DEFAULT_EVAL_EPISODES
}
fn default_s0_resets() -> usize {
    DEFAULT_S0_RESETS
}
fn default_episode_cap() -> usize {
    DEFAULT_EPISODE_CAP
}
fn default_output_dir() -> String {
    "runs".into()
}

/// A parse or validation failure, anchored to a 1-based line when one is known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = …` inside `[section]` (top level for `None`). Falls back to
/// the section header; an empty `key` asks for the header itself.
fn key_line(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            let name = line.trim_matches(['[', ']']).trim().to_string();
            if section == Some(name.as_str()) {
                header = Some(i + 1);
            }
            if !key.is_empty() && section.is_some_and(|s| name == format!("{s}.{key}")) {
                return Some(i + 1);
            }
            current = Some(name);
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let lhs = lhs.trim().trim_matches('"');
        let hit = match section {
            None => current.is_none() && lhs == key,
            Some(s) => {
                (current.as_deref() == Some(s) && (lhs == key || lhs.starts_with(&format!("{key}."))))
                    || (current.is_none() && lhs == format!("{s}.{key}"))
            }
        };
        if hit && !key.is_empty() {
            return Some(i + 1);
        }
    }
    header
}

fn section_has(raw: &toml::Table, section: &str, key: &str) -> bool {
    raw.get(section).and_then(|v| v.as_table()).is_some_and(|t| t.contains_key(key))
}

/// Parses and resolves an experiment file. Variant defaults fill keys the
/// file omits; keys the file sets must agree with the variant.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: toml::Table = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
    let mut config: ExperimentConfig = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
    let set = |key: &str| section_has(&raw, "learner", key);
    let anchored = |section: Option<&str>, key: &str, message: String| ConfigError {
        line: key_line(text, section, key),
        message,
    };
    let learner_err = |key: &str, message: String| anchored(Some("learner"), key, message);

    let l = &mut config.learner;
    l.gamma = config.environment.gamma();
    match config.variant {
        Variant::Dqn | Variant::DqnNoTarget => {
            if set("ensemble_size") && l.ensemble_size != 1 {
                return Err(learner_err(
                    "ensemble_size",
                    format!("variant {} trains one network; ensemble_size must be 1, got {}", config.variant, l.ensemble_size),
                ));
            }
            l.ensemble_size = 1;
        }
        _ => {
            if !set("ensemble_size") {
                l.ensemble_size = DEFAULT_ENSEMBLE_SIZE;
            }
            if l.ensemble_size < 2 {
                return Err(learner_err(
                    "ensemble_size",
                    format!("variant {} needs ensemble_size ≥ 2, got {}", config.variant, l.ensemble_size),
                ));
            }
        }
    }

    let wants_lagging = match config.variant {
        Variant::Meanq | Variant::Dqn => Some(true),
        Variant::MeanqNoTarget | Variant::DqnNoTarget | Variant::AvgDqn => Some(false),
        Variant::EnsDqn => None,
    };
    if set("target") {
        let lagging = matches!(l.target, TargetMode::Lagging { .. });
        if wants_lagging.is_some_and(|w| w != lagging) {
            return Err(learner_err(
                "target",
                format!("variant {} requires {} targets", config.variant, if lagging { "online" } else { "lagging" }),
            ));
        }
    } else {
        l.target = match wants_lagging {
            Some(false) => TargetMode::Online,
            _ => TargetMode::Lagging { period: DEFAULT_TARGET_PERIOD },
        };
    }

    let (sampling, mode) = match config.variant {
        Variant::EnsDqn => (SamplingMode::Shared, EnsembleMode::TrueEnsemble),
        Variant::AvgDqn => (SamplingMode::Independent, EnsembleMode::Snapshot),
        _ => (SamplingMode::Independent, EnsembleMode::TrueEnsemble),
    };
    for (key, ok) in [("sampling", !set("sampling") || l.sampling == sampling), ("ensemble_mode", !set("ensemble_mode") || l.ensemble_mode == mode)] {
        if !ok {
            return Err(learner_err(key, format!("{key} contradicts variant {}", config.variant)));
        }
    }
    l.sampling = sampling;
    l.ensemble_mode = mode;
    if !set("beta_horizon") {
        l.beta_horizon = config.total_steps;
    }
    l.warmup = Some(l.effective_warmup());
    l.validate().map_err(|e| ConfigError { line: key_line(text, Some("learner"), ""), message: e.to_string() })?;

    config
        .exploration
        .validate()
        .map_err(|e| anchored(Some("exploration"), "", e.to_string()))?;
    config
        .environment
        .build()
        .map_err(|e| anchored(Some("environment"), "", e.to_string()))?;
    if config.seeds.is_empty() {
        return Err(anchored(None, "seeds", "at least one seed is required".into()));
    }
    let mut sorted = config.seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != config.seeds.len() {
        return Err(anchored(None, "seeds", "seeds must be distinct".into()));
    }
    for (key, value) in [
        ("total_steps", config.total_steps),
        ("eval_every", config.eval_every),
        ("eval_episodes", config.eval_episodes as u64),
        ("s0_resets", config.s0_resets as u64),
        ("max_episode_steps", config.max_episode_steps as u64),
    ] {
        if value == 0 {
            return Err(anchored(None, key, format!("{key} must be positive")));
        }
    }
    Ok(config)
}

fn toml_error(text: &str, e: &toml::de::Error) -> ConfigError {
    ConfigError { line: e.span().map(|s| line_at(text, s.start)), message: e.message().trim().to_string() }
}

impl ExperimentConfig {
    /// Canonical TOML; reparses to an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment configs always serialize")
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir.clear();
        let json = serde_json::to_string(&canonical).expect("experiment configs always serialize");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
variant = "meanq"
seeds = [1, 2]

[environment]
name = "chain_walk"
n = 5
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.learner.learning_rate, 6.25e-5);
        assert_eq!(c.learner.ensemble_size, 5);
        assert_eq!(c.learner.gamma, 0.9);
        assert_eq!(c.learner.target, TargetMode::Lagging { period: DEFAULT_TARGET_PERIOD });
        match c.exploration {
            ExplorationPolicy::EpsilonGreedy(s) => assert_eq!((s.start, s.end, s.horizon), (1.0, 0.1, 200_000)),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!((c.eval_every, c.eval_episodes, c.s0_resets), (2000, 20, 50));
    }

    #[test]
    fn round_trip() {
        let c = parse_config(MINIMAL).unwrap();
        let again = parse_config(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
    }

    #[test]
    fn hash_ignores_formatting_but_not_values() {
        let spaced = MINIMAL.replace("seeds = [1, 2]", "# comment\nseeds   =   [ 1,2 ]");
        assert_eq!(parse_config(MINIMAL).unwrap().hash(), parse_config(&spaced).unwrap().hash());
        let other = MINIMAL.replace("n = 5", "n = 6");
        assert_ne!(parse_config(MINIMAL).unwrap().hash(), parse_config(&other).unwrap().hash());
    }

    #[test]
    fn contradictions_are_rejected_with_lines() {
        let text = MINIMAL.replace("meanq", "ens_dqn") + "\n[learner]\nsampling = \"independent\"\n";
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.line, Some(10));
        assert!(err.message.contains("sampling"));

        let text = MINIMAL.replace("meanq", "dqn") + "\n[learner]\nensemble_size = 5\n";
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.line, Some(10));

        let text = MINIMAL.replace("meanq", "meanq_no_target") + "\n[learner]\ntarget = { lagging = { period = 5 } }\n";
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn unknown_and_missing_keys() {
        let err = parse_config(&(MINIMAL.to_string() + "colour = 3\n")).unwrap_err();
        assert!(err.message.contains("colour"), "{err}");
        assert!(err.line.is_some());
        let err = parse_config(&MINIMAL.replace("seeds = [1, 2]", "")).unwrap_err();
        assert!(err.message.contains("seeds"), "{err}");
        let err = parse_config(&(MINIMAL.to_string() + "\n[learner]\nbatchsize = 3\n")).unwrap_err();
        assert_eq!(err.line, Some(10), "{err}");
    }

    #[test]
    fn variant_settings_are_applied() {
        let c = parse_config(&MINIMAL.replace("meanq", "avg_dqn")).unwrap();
        assert_eq!((c.learner.ensemble_mode, c.learner.target), (EnsembleMode::Snapshot, TargetMode::Online));
        let c = parse_config(&MINIMAL.replace("meanq", "dqn_no_target")).unwrap();
        assert_eq!((c.learner.ensemble_size, c.learner.target), (1, TargetMode::Online));
        let c = parse_config(&MINIMAL.replace("meanq", "ens_dqn")).unwrap();
        assert_eq!(c.learner.sampling, SamplingMode::Shared);
    }
}
