//! Seeded experiment execution: the outer episode loop plus metrics,
//! checkpoints, scheduled evaluation and the final summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainingConfig;
use super::evaluate::evaluate_params;
use super::metrics::{MetricsRecord, MetricsWriter};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::learners::{load_checkpoint, save_checkpoint, Learner};

const EVAL_SEED_SALT: u64 = 0x517c_c1b7_2722_0a95;

/// What a finished run reports; everything here is also in summary.txt.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub episodes: u64,
    pub final_window: u64,
    pub final_window_mean_train_return: f64,
    pub final_window_mean_eval_return: Option<f64>,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

/// Execute a full training run into `config.out_dir`. Identical configs
/// and seeds produce byte-identical metrics, checkpoints and summary.
pub fn run(config: &TrainingConfig) -> Result<RunSummary> {
    run_with(config, None, false)
}

/// `resume` warm-starts parameters, optimizer state and the episode
/// counter from a checkpoint; the replay buffer starts empty. `quiet`
/// suppresses console progress.
pub fn run_with(config: &TrainingConfig, resume: Option<&Path>, quiet: bool) -> Result<RunSummary> {
    config.validate()?;
    let out_dir = PathBuf::from(&config.out_dir);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("cannot create {out_dir:?}: {e}"))))?;

    let spec = config.task.spec();
    let mut learner = match resume {
        None => Learner::new(
            config.algorithm,
            config.core,
            spec,
            config.embed,
            config.hidden,
            config.learner,
            config.learner_seed,
        )?,
        Some(path) => {
            let data = load_checkpoint(path)?;
            if data.algo != config.algorithm || data.core != config.core {
                return Err(Error::invalid(
                    "resume",
                    format!(
                        "checkpoint is {}/{}, config wants {}/{}",
                        data.algo.name(),
                        data.core.name(),
                        config.algorithm.name(),
                        config.core.name()
                    ),
                ));
            }
            Learner::from_checkpoint(data, config.learner, spec, config.learner_seed)?
        }
    };

    let start_episode = learner.episode_counter();
    if start_episode >= config.episodes {
        return Err(Error::invalid(
            "resume",
            format!("checkpoint already has {start_episode} episodes, config asks for {}", config.episodes),
        ));
    }

    let mut env = Env::new(config.task);
    let mut episode_seeds = ChaCha8Rng::seed_from_u64(config.env_seed);
    // A resumed run continues the same episode-seed stream.
    for _ in 0..start_episode {
        let _: u64 = episode_seeds.gen();
    }

    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics = MetricsWriter::create(&metrics_path)?;
    let checkpoint_path = out_dir.join("checkpoint.rpg");

    let mut train_returns: Vec<f64> = Vec::with_capacity(config.episodes as usize);
    let mut eval_points: Vec<(u64, f64)> = Vec::new();
    let started = Instant::now();
    let mut last_report = Instant::now();

    for episode in (start_episode + 1)..=config.episodes {
        let seed: u64 = episode_seeds.gen();
        let outcome = learner.train_episode(&mut env, seed)?;
        train_returns.push(outcome.episode_return);

        let (critic_loss, mean_q) = if outcome.reports.is_empty() {
            (None, None)
        } else {
            let n = outcome.reports.len() as f64;
            (
                Some(outcome.reports.iter().map(|r| r.critic_loss).sum::<f64>() / n),
                Some(outcome.reports.iter().map(|r| r.mean_q).sum::<f64>() / n),
            )
        };

        let eval_return = if config.eval_interval > 0 && episode % config.eval_interval == 0 {
            let eval_seed = config.env_seed ^ EVAL_SEED_SALT ^ episode;
            let summary = evaluate_params(
                &learner.actor_net,
                &learner.actor.live,
                config.task,
                config.eval_episodes,
                eval_seed,
                None,
            )?;
            eval_points.push((episode, summary.mean));
            Some(summary.mean)
        } else {
            None
        };

        metrics.write(&MetricsRecord {
            episode,
            train_return: outcome.episode_return,
            critic_loss,
            mean_q,
            eval_return,
        })?;

        if config.checkpoint_interval > 0 && episode % config.checkpoint_interval == 0 {
            let path = out_dir.join(format!("checkpoint-ep{episode:06}.rpg"));
            save_checkpoint(&path, &learner.to_checkpoint())?;
        }

        if !quiet && (last_report.elapsed().as_secs() >= 5 || episode == config.episodes) {
            let ms_per_ep = started.elapsed().as_millis() as f64 / (episode - start_episode) as f64;
            println!(
                "[{}] episode {episode}/{} return {:.2} critic_loss {:.4} ({:.0} ms/episode)",
                config.task.spec().name,
                config.episodes,
                outcome.episode_return,
                critic_loss.unwrap_or(f64::NAN),
                ms_per_ep
            );
            last_report = Instant::now();
        }
    }
    metrics.finish()?;
    save_checkpoint(&checkpoint_path, &learner.to_checkpoint())?;

    let window = train_returns.len().min(100);
    let tail = &train_returns[train_returns.len() - window..];
    let mean_train = tail.iter().sum::<f64>() / window as f64;
    let window_start = config.episodes.saturating_sub(window as u64) + 1;
    let tail_evals: Vec<f64> = eval_points
        .iter()
        .filter(|(ep, _)| *ep >= window_start)
        .map(|(_, v)| *v)
        .collect();
    let mean_eval = if tail_evals.is_empty() {
        None
    } else {
        Some(tail_evals.iter().sum::<f64>() / tail_evals.len() as f64)
    };

    let summary = RunSummary {
        episodes: config.episodes,
        final_window: window as u64,
        final_window_mean_train_return: mean_train,
        final_window_mean_eval_return: mean_eval,
        metrics_path,
        checkpoint_path,
    };
    write_summary(&out_dir.join("summary.txt"), config, &summary)?;
    Ok(summary)
}

fn write_summary(path: &Path, config: &TrainingConfig, summary: &RunSummary) -> Result<()> {
    let mut text = String::new();
    writeln!(text, "task = {}", config.task.spec().name).unwrap();
    writeln!(text, "algorithm = {}", config.algorithm.name()).unwrap();
    writeln!(text, "core = {}", config.core.name()).unwrap();
    writeln!(text, "episodes = {}", summary.episodes).unwrap();
    writeln!(text, "final_window = {}", summary.final_window).unwrap();
    writeln!(text, "final_window_mean_train_return = {}", summary.final_window_mean_train_return)
        .unwrap();
    match summary.final_window_mean_eval_return {
        Some(v) => writeln!(text, "final_window_mean_eval_return = {v}").unwrap(),
        None => writeln!(text, "final_window_mean_eval_return =").unwrap(),
    }
    std::fs::write(path, text)?;
    Ok(())
}
