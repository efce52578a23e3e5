//! Exploration-free policy evaluation with optional trajectory dumps.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::ParameterSet;
use crate::envs::{write_trajectory_csv, Env, Task};
use crate::error::{Error, Result};
use crate::learners::{greedy_rollout, load_checkpoint};
use crate::nets::ActorNetwork;

/// Summary statistics over evaluation episode returns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSummary {
    pub episodes: u64,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Evaluate an actor over `episodes` deterministic rollouts (exploration
/// disabled: RDPG noise off, RSVG(0) at its mean action). When `dump_dir`
/// is given, every trajectory is written as `ep-NNNN.csv`.
pub fn evaluate_params(
    actor_net: &ActorNetwork,
    params: &ParameterSet,
    task: Task,
    episodes: u64,
    seed: u64,
    dump_dir: Option<&Path>,
) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::invalid("evaluate", "episodes must be at least 1"));
    }
    let spec = task.spec();
    if actor_net.obs_dim != spec.obs_dim || actor_net.act_dim != spec.act_dim {
        return Err(Error::invalid(
            "evaluate",
            format!(
                "actor is ({} obs, {} act), task {} needs ({}, {})",
                actor_net.obs_dim, actor_net.act_dim, spec.name, spec.obs_dim, spec.act_dim
            ),
        ));
    }
    if let Some(dir) = dump_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut env = Env::new(task);
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(episodes as usize);
    for i in 0..episodes {
        let episode_seed: u64 = seeds.gen();
        let episode = greedy_rollout(actor_net, params, &mut env, episode_seed, i)?;
        returns.push(episode.total_reward());
        if let Some(dir) = dump_dir {
            write_trajectory_csv(dir.join(format!("ep-{i:04}.csv")), &episode)?;
        }
    }
    Ok(summarize(&returns))
}

/// Load a checkpoint and evaluate it on `task`, validating dimensions.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    task: Task,
    episodes: u64,
    seed: u64,
    dump_dir: Option<&Path>,
) -> Result<EvalSummary> {
    let data = load_checkpoint(checkpoint)?;
    let spec = task.spec();
    if data.obs_dim != spec.obs_dim || data.act_dim != spec.act_dim || data.bound != spec.bound {
        return Err(Error::invalid(
            "evaluate",
            format!(
                "checkpoint dims ({}, {}, bound {}) do not match task {} ({}, {}, bound {})",
                data.obs_dim, data.act_dim, data.bound, spec.name, spec.obs_dim, spec.act_dim, spec.bound
            ),
        ));
    }
    let actor_net = ActorNetwork::new(
        data.obs_dim,
        data.act_dim,
        data.bound,
        data.embed_width,
        data.hidden,
        data.core,
        data.sigma,
    )?;
    evaluate_params(&actor_net, &data.actor.live, task, episodes, seed, dump_dir)
}

fn summarize(returns: &[f64]) -> EvalSummary {
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = if returns.len() > 1 {
        returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    EvalSummary {
        episodes: returns.len() as u64,
        mean,
        std: var.sqrt(),
        min: returns.iter().copied().fold(f64::INFINITY, f64::min),
        max: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}
