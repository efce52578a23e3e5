//! Flat `key = value` config files with `#` comments.
//!
//! Unknown keys are errors that name the key and line; missing keys take
//! the documented defaults. Every key can be overridden through the
//! environment as `RPG_<KEY>` (uppercased).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::envs::Task;
use crate::error::{Error, Result};
use crate::learners::{Algo, LearnerConfig};
use crate::nets::CoreKind;

/// Everything a training run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub task: Task,
    pub algorithm: Algo,
    pub core: CoreKind,
    /// Episodes to train (M).
    pub episodes: u64,
    pub hidden: usize,
    pub embed: usize,
    pub learner: LearnerConfig,
    pub env_seed: u64,
    pub learner_seed: u64,
    pub out_dir: String,
    /// Checkpoint every this many episodes; 0 = final checkpoint only.
    pub checkpoint_interval: u64,
    /// Evaluate every this many episodes; 0 = never.
    pub eval_interval: u64,
    pub eval_episodes: u64,
}

pub const KNOWN_KEYS: [&str; 20] = [
    "task",
    "algorithm",
    "core",
    "episodes",
    "hidden",
    "embed",
    "gamma",
    "tau_soft",
    "minibatch_episodes",
    "sigma_explore",
    "actor_lr",
    "critic_lr",
    "updates_per_episode",
    "replay_capacity",
    "env_seed",
    "learner_seed",
    "out_dir",
    "checkpoint_interval",
    "eval_interval",
    "eval_episodes",
];

struct RawConfig {
    /// key -> (value, 1-based line for diagnostics)
    values: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut values: BTreeMap<String, (String, usize)> = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: Some(line_no),
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Config {
                    line: Some(line_no),
                    message: format!("unknown key {key:?}"),
                });
            }
            if values.contains_key(key) {
                return Err(Error::Config {
                    line: Some(line_no),
                    message: format!("duplicate key {key:?}"),
                });
            }
            values.insert(key.to_string(), (value.to_string(), line_no));
        }
        Ok(RawConfig { values })
    }

    fn apply_overrides(&mut self, source: &dyn Fn(&str) -> Option<String>) {
        for key in KNOWN_KEYS {
            let var = format!("RPG_{}", key.to_uppercase());
            if let Some(value) = source(&var) {
                self.values.insert(key.to_string(), (value, 0));
            }
        }
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.values.remove(key)
    }
}

fn parse_with<T, F: Fn(&str) -> Option<T>>(
    raw: Option<(String, usize)>,
    key: &str,
    default: T,
    f: F,
) -> Result<T> {
    match raw {
        None => Ok(default),
        Some((text, line)) => f(&text).ok_or_else(|| Error::Config {
            line: if line == 0 { None } else { Some(line) },
            message: format!("bad value {text:?} for key {key:?}"),
        }),
    }
}

fn config_err(key: &str, line: usize, message: String) -> Error {
    Error::Config { line: if line == 0 { None } else { Some(line) }, message: format!("{key}: {message}") }
}

impl TrainingConfig {
    /// Parse from text only (no environment overrides).
    pub fn parse_str(text: &str) -> Result<Self> {
        Self::from_raw(RawConfig::parse(text)?)
    }

    /// Parse a file, then apply `RPG_*` environment overrides.
    pub fn parse_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        let mut raw = RawConfig::parse(&text)?;
        raw.apply_overrides(&|var| std::env::var(var).ok());
        Self::from_raw(raw)
    }

    /// Parse text with an explicit override source (tests).
    pub fn parse_str_with_overrides(
        text: &str,
        source: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self> {
        let mut raw = RawConfig::parse(text)?;
        raw.apply_overrides(source);
        Self::from_raw(raw)
    }

    fn from_raw(mut raw: RawConfig) -> Result<Self> {
        let (task_text, task_line) = raw
            .take("task")
            .ok_or_else(|| Error::Config { line: None, message: "missing required key \"task\"".into() })?;
        let task = Task::parse(&task_text)
            .map_err(|_| config_err("task", task_line, format!("unknown task {task_text:?}")))?;

        let (algo_text, algo_line) = raw.take("algorithm").ok_or_else(|| Error::Config {
            line: None,
            message: "missing required key \"algorithm\"".into(),
        })?;
        let algorithm = Algo::parse(&algo_text)
            .map_err(|_| config_err("algorithm", algo_line, format!("unknown algorithm {algo_text:?}")))?;

        let core = match raw.take("core") {
            None => match algorithm {
                Algo::DdpgFeedforward => CoreKind::Feedforward,
                _ => CoreKind::Lstm,
            },
            Some((text, line)) => {
                let core = CoreKind::parse(&text)
                    .map_err(|_| config_err("core", line, format!("unknown core {text:?}")))?;
                if algorithm == Algo::DdpgFeedforward && core != CoreKind::Feedforward {
                    return Err(config_err(
                        "core",
                        line,
                        "ddpg-feedforward requires core = feedforward".into(),
                    ));
                }
                core
            }
        };

        let episodes = parse_with(raw.take("episodes"), "episodes", 1000, |s| s.parse().ok())?;
        let hidden = parse_with(raw.take("hidden"), "hidden", 64, |s| s.parse().ok())?;
        let embed = parse_with(raw.take("embed"), "embed", 64, |s| s.parse().ok())?;
        let defaults = LearnerConfig::default();
        let gamma = parse_with(raw.take("gamma"), "gamma", defaults.gamma, |s| s.parse().ok())?;
        let tau_soft = parse_with(raw.take("tau_soft"), "tau_soft", defaults.tau_soft, |s| s.parse().ok())?;
        let minibatch = parse_with(raw.take("minibatch_episodes"), "minibatch_episodes", defaults.minibatch, |s| {
            s.parse().ok()
        })?;
        let sigma_explore = match raw.take("sigma_explore") {
            None => None,
            Some((text, line)) => Some(text.parse::<f64>().map_err(|_| {
                config_err("sigma_explore", line, format!("bad value {text:?}"))
            })?),
        };
        let actor_lr = parse_with(raw.take("actor_lr"), "actor_lr", defaults.actor_lr, |s| s.parse().ok())?;
        let critic_lr = parse_with(raw.take("critic_lr"), "critic_lr", defaults.critic_lr, |s| s.parse().ok())?;
        let updates_per_episode = parse_with(
            raw.take("updates_per_episode"),
            "updates_per_episode",
            defaults.updates_per_episode,
            |s| s.parse().ok(),
        )?;
        let replay_capacity = parse_with(
            raw.take("replay_capacity"),
            "replay_capacity",
            defaults.replay_capacity,
            |s| s.parse().ok(),
        )?;
        let env_seed = parse_with(raw.take("env_seed"), "env_seed", 0, |s| s.parse().ok())?;
        let learner_seed = parse_with(raw.take("learner_seed"), "learner_seed", 0, |s| s.parse().ok())?;
        let out_dir = parse_with(raw.take("out_dir"), "out_dir", "out".to_string(), |s| {
            if s.is_empty() {
                None
            } else {
                Some(s.to_string())
            }
        })?;
        let checkpoint_interval =
            parse_with(raw.take("checkpoint_interval"), "checkpoint_interval", 0, |s| s.parse().ok())?;
        let eval_interval = parse_with(raw.take("eval_interval"), "eval_interval", 10, |s| s.parse().ok())?;
        let eval_episodes = parse_with(raw.take("eval_episodes"), "eval_episodes", 2, |s| s.parse().ok())?;

        let config = TrainingConfig {
            task,
            algorithm,
            core,
            episodes,
            hidden,
            embed,
            learner: LearnerConfig {
                gamma,
                tau_soft,
                minibatch,
                sigma_explore,
                actor_lr,
                critic_lr,
                updates_per_episode,
                replay_capacity,
            },
            env_seed,
            learner_seed,
            out_dir,
            checkpoint_interval,
            eval_interval,
            eval_episodes,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config { line: None, message: "episodes must be at least 1".into() });
        }
        if self.hidden == 0 || self.embed == 0 {
            return Err(Error::Config { line: None, message: "hidden and embed must be positive".into() });
        }
        if self.eval_interval > 0 && self.eval_episodes == 0 {
            return Err(Error::Config {
                line: None,
                message: "eval_episodes must be positive when eval_interval > 0".into(),
            });
        }
        self.learner.validate().map_err(|e| Error::Config { line: None, message: e.to_string() })?;
        Ok(())
    }

    /// Canonical `key = value` text; parsing it reproduces this config.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        writeln!(out, "task = {}", self.task.spec().name).unwrap();
        writeln!(out, "algorithm = {}", self.algorithm.name()).unwrap();
        writeln!(out, "core = {}", self.core.name()).unwrap();
        writeln!(out, "episodes = {}", self.episodes).unwrap();
        writeln!(out, "hidden = {}", self.hidden).unwrap();
        writeln!(out, "embed = {}", self.embed).unwrap();
        writeln!(out, "gamma = {}", self.learner.gamma).unwrap();
        writeln!(out, "tau_soft = {}", self.learner.tau_soft).unwrap();
        writeln!(out, "minibatch_episodes = {}", self.learner.minibatch).unwrap();
        if let Some(s) = self.learner.sigma_explore {
            writeln!(out, "sigma_explore = {s}").unwrap();
        }
        writeln!(out, "actor_lr = {}", self.learner.actor_lr).unwrap();
        writeln!(out, "critic_lr = {}", self.learner.critic_lr).unwrap();
        writeln!(out, "updates_per_episode = {}", self.learner.updates_per_episode).unwrap();
        writeln!(out, "replay_capacity = {}", self.learner.replay_capacity).unwrap();
        writeln!(out, "env_seed = {}", self.env_seed).unwrap();
        writeln!(out, "learner_seed = {}", self.learner_seed).unwrap();
        writeln!(out, "out_dir = {}", self.out_dir).unwrap();
        writeln!(out, "checkpoint_interval = {}", self.checkpoint_interval).unwrap();
        writeln!(out, "eval_interval = {}", self.eval_interval).unwrap();
        writeln!(out, "eval_episodes = {}", self.eval_episodes).unwrap();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults_and_round_trips() {
        let cfg = TrainingConfig::parse_str("task = pendulum-novel\nalgorithm = rdpg\n").unwrap();
        assert_eq!(cfg.task, Task::PendulumNoVel);
        assert_eq!(cfg.core, CoreKind::Lstm);
        assert_eq!(cfg.hidden, 64);
        assert_eq!(cfg.learner.gamma, 0.99);
        assert_eq!(cfg.learner.sigma_explore, None);
        let text = cfg.serialize();
        let back = TrainingConfig::parse_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_key_is_an_error_naming_it() {
        let err = TrainingConfig::parse_str("task = pendulum-novel\nalgorithm = rdpg\ngama = 0.5\n")
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gama"), "error should name the key: {msg}");
        assert!(msg.contains("line 3"), "error should name the line: {msg}");
    }

    #[test]
    fn gamma_out_of_range_is_an_error() {
        let err = TrainingConfig::parse_str("task = pendulum-novel\nalgorithm = rdpg\ngamma = 1.5\n")
            .unwrap_err();
        assert!(err.to_string().contains("gamma"));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = TrainingConfig::parse_str(
            "# experiment\ntask = watermaze # the memory task\n\nalgorithm = rsvg0\n",
        )
        .unwrap();
        assert_eq!(cfg.task, Task::Watermaze);
        assert_eq!(cfg.algorithm, Algo::Rsvg0);
    }

    #[test]
    fn ddpg_feedforward_forces_core() {
        let cfg =
            TrainingConfig::parse_str("task = watermaze\nalgorithm = ddpg-feedforward\n").unwrap();
        assert_eq!(cfg.core, CoreKind::Feedforward);
        let err = TrainingConfig::parse_str(
            "task = watermaze\nalgorithm = ddpg-feedforward\ncore = lstm\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("feedforward"));
    }

    #[test]
    fn env_overrides_apply() {
        let cfg = TrainingConfig::parse_str_with_overrides(
            "task = pendulum-novel\nalgorithm = rdpg\ngamma = 0.9\n",
            &|var| match var {
                "RPG_GAMMA" => Some("0.95".to_string()),
                "RPG_HIDDEN" => Some("32".to_string()),
                _ => None,
            },
        )
        .unwrap();
        assert_eq!(cfg.learner.gamma, 0.95);
        assert_eq!(cfg.hidden, 32);
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = TrainingConfig::parse_str(
            "task = pendulum-novel\nalgorithm = rdpg\ngamma = 0.9\ngamma = 0.8\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn missing_required_keys_rejected() {
        assert!(TrainingConfig::parse_str("algorithm = rdpg\n").is_err());
        assert!(TrainingConfig::parse_str("task = watermaze\n").is_err());
    }
}
