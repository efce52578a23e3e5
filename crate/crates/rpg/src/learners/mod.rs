//! RDPG and RSVG(0): target computation, critic regression, actor ascent
//! through the critic's action gradient, exploration, and the training
//! loop that ties them to the replay buffer.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointData};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{
    adam_step, AdamHyper, AdamState, Gradients, NodeId, ParameterSet, RealArray, Tape,
};
use crate::envs::{Env, EnvSpec};
use crate::error::{Error, Result};
use crate::nets::{
    ActionValueFn, ActorNetwork, ActorSession, CoreKind, CriticNetwork, CriticRef, NetworkPair,
    SigmaMode,
};
use crate::replay::{BehaviorTag, Episode, ReplayBuffer};

/// Algorithm selector. `DdpgFeedforward` is the RDPG update with the
/// memoryless feedforward core — the baseline the paper's comparisons use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algo {
    Rdpg,
    Rsvg0,
    DdpgFeedforward,
}

impl Algo {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rdpg" => Ok(Algo::Rdpg),
            "rsvg0" => Ok(Algo::Rsvg0),
            "ddpg-feedforward" => Ok(Algo::DdpgFeedforward),
            other => Err(Error::invalid("Algo::parse", format!("unknown algorithm {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algo::Rdpg => "rdpg",
            Algo::Rsvg0 => "rsvg0",
            Algo::DdpgFeedforward => "ddpg-feedforward",
        }
    }

    pub fn behavior_tag(&self) -> BehaviorTag {
        match self {
            Algo::Rsvg0 => BehaviorTag::Rsvg0,
            _ => BehaviorTag::RdpgNoise,
        }
    }
}

/// Hyperparameters of the update rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub tau_soft: f64,
    /// Minibatch size N in episodes.
    pub minibatch: usize,
    /// RDPG exploration noise std, or the RSVG(0) initial policy sigma.
    /// `None` means 0.3 x action bound.
    pub sigma_explore: Option<f64>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub updates_per_episode: usize,
    pub replay_capacity: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            gamma: 0.99,
            tau_soft: 0.01,
            minibatch: 8,
            sigma_explore: None,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            updates_per_episode: 10,
            replay_capacity: 5000,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid("LearnerConfig", format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if !(self.tau_soft > 0.0 && self.tau_soft <= 1.0) {
            return Err(Error::invalid("LearnerConfig", format!("tau_soft {} outside (0, 1]", self.tau_soft)));
        }
        if self.minibatch == 0 {
            return Err(Error::invalid("LearnerConfig", "minibatch must be at least 1"));
        }
        if self.actor_lr <= 0.0 || self.critic_lr <= 0.0 {
            return Err(Error::invalid("LearnerConfig", "learning rates must be positive"));
        }
        if let Some(s) = self.sigma_explore {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::invalid("LearnerConfig", format!("sigma_explore {s}")));
            }
        }
        if self.replay_capacity == 0 {
            return Err(Error::invalid("LearnerConfig", "replay capacity must be positive"));
        }
        Ok(())
    }

    pub fn effective_sigma(&self, bound: f64) -> f64 {
        self.sigma_explore.unwrap_or(0.3 * bound)
    }
}

/// Diagnostics from one critic + actor update.
#[derive(Clone, Copy, Debug)]
pub struct UpdateReport {
    /// Mean squared Bellman error over the N*T regression terms.
    pub critic_loss: f64,
    /// Mean of the critic outputs on the sampled batch.
    pub mean_q: f64,
    /// Mean Q under the actor's fresh actions (the ascent objective).
    pub actor_objective: f64,
    pub critic_grad_norm: f64,
    pub actor_grad_norm: f64,
}

/// A sampled minibatch stacked into time-major batched arrays.
///
/// Row b of every per-step array belongs to sampled episode b. Previous
/// actions follow the history convention: zeros at t = 1, then the stored
/// action from the step before.
pub struct Minibatch {
    pub observations: Vec<RealArray>,
    pub prev_actions: Vec<RealArray>,
    pub actions: Vec<RealArray>,
    /// rewards[t] has one entry per episode.
    pub rewards: Vec<Vec<f64>>,
    pub episodes: usize,
    pub steps: usize,
}

impl Minibatch {
    pub fn from_episodes(episodes: &[&Episode]) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::invalid("Minibatch::from_episodes", "no episodes"));
        }
        let t_len = episodes[0].len();
        if episodes.iter().any(|e| e.len() != t_len) {
            return Err(Error::shape(
                "Minibatch::from_episodes",
                "episodes in one minibatch must share a length",
            ));
        }
        let act_dim = episodes[0].actions[0].len();
        let mut observations = Vec::with_capacity(t_len);
        let mut prev_actions = Vec::with_capacity(t_len);
        let mut actions = Vec::with_capacity(t_len);
        let mut rewards = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let obs_rows: Vec<&[f64]> = episodes.iter().map(|e| e.observations[t].as_slice()).collect();
            observations.push(RealArray::stack_rows(&obs_rows)?);
            if t == 0 {
                prev_actions.push(RealArray::zeros(episodes.len(), act_dim));
            } else {
                let rows: Vec<&[f64]> = episodes.iter().map(|e| e.actions[t - 1].as_slice()).collect();
                prev_actions.push(RealArray::stack_rows(&rows)?);
            }
            let act_rows: Vec<&[f64]> = episodes.iter().map(|e| e.actions[t].as_slice()).collect();
            actions.push(RealArray::stack_rows(&act_rows)?);
            rewards.push(episodes.iter().map(|e| e.rewards[t]).collect());
        }
        Ok(Minibatch { observations, prev_actions, actions, rewards, episodes: episodes.len(), steps: t_len })
    }
}

/// Select an RDPG action: mean plus IID Gaussian exploration noise,
/// clipped to the bounds. The clip stays outside the gradient path.
pub fn select_action_rdpg(
    session: &mut ActorSession,
    observation: &[f64],
    prev_action: &[f64],
    sigma_explore: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let bound = session.net().bound;
    let out = session.step(observation, prev_action)?;
    Ok(out
        .mean
        .iter()
        .map(|m| {
            let eps: f64 = rng.sample(StandardNormal);
            (m + sigma_explore * eps).clamp(-bound, bound)
        })
        .collect())
}

/// Select an RSVG(0) action: the policy's own re-parameterized noise is
/// the only exploration.
pub fn select_action_rsvg0(
    session: &mut ActorSession,
    observation: &[f64],
    prev_action: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let bound = session.net().bound;
    let out = session.step(observation, prev_action)?;
    let sigma = out
        .sigma
        .ok_or_else(|| Error::invalid("select_action_rsvg0", "actor has no stochastic head"))?;
    Ok(out
        .mean
        .iter()
        .zip(sigma.iter())
        .map(|(m, s)| {
            let nu: f64 = rng.sample(StandardNormal);
            (m + s * nu).clamp(-bound, bound)
        })
        .collect())
}

fn standard_normal_seq(
    rng: &mut ChaCha8Rng,
    steps: usize,
    rows: usize,
    cols: usize,
) -> Vec<RealArray> {
    (0..steps)
        .map(|_| {
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
            RealArray::from_vec(rows, cols, data).expect("finite noise")
        })
        .collect()
}

/// Bootstrap targets from the target networks:
/// y_t = r_t + gamma * Q'(h_{t+1}, a'_{t+1}) for t < T, y_T = r_T, where
/// a' is the target policy's action (with one fresh nu per (episode, step)
/// in rsvg0 mode). Entirely value-level: no gradient can flow back.
pub fn compute_targets(
    actor_net: &ActorNetwork,
    critic_net: &CriticNetwork,
    actor_target: &ParameterSet,
    critic_target: &ParameterSet,
    batch: &Minibatch,
    gamma: f64,
    algo: Algo,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<RealArray>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid("compute_targets", format!("gamma {gamma} outside [0, 1)")));
    }
    let mut tape = Tape::new();
    let noise = match algo {
        Algo::Rsvg0 => Some(standard_normal_seq(rng, batch.steps, batch.episodes, actor_net.act_dim)),
        _ => None,
    };
    let actor_out = actor_net.unroll_frozen(
        &mut tape,
        actor_target,
        &batch.observations,
        &batch.prev_actions,
        noise.as_deref(),
    )?;
    let critic_out = critic_net.unroll_frozen(
        &mut tape,
        critic_target,
        &batch.observations,
        &batch.prev_actions,
        crate::nets::ActionInput::Nodes(&actor_out.actions),
    )?;
    let q_next: Vec<&RealArray> = critic_out.q.iter().map(|&q| tape.value(q)).collect();

    let mut targets = Vec::with_capacity(batch.steps);
    for t in 0..batch.steps {
        let mut col = Vec::with_capacity(batch.episodes);
        for b in 0..batch.episodes {
            let bootstrap =
                if t + 1 < batch.steps { gamma * q_next[t + 1].get(b, 0) } else { 0.0 };
            col.push(batch.rewards[t][b] + bootstrap);
        }
        targets.push(RealArray::from_vec(batch.episodes, 1, col)?);
    }
    Ok(targets)
}

fn check_gradients_finite(grads: &Gradients, context: &'static str) -> Result<()> {
    for (name, g) in grads {
        g.check_finite(context)
            .map_err(|_| Error::non_finite(context, format!("gradient for {name:?}")))?;
    }
    Ok(())
}

fn gradient_norm(grads: &Gradients) -> f64 {
    grads.values().map(|g| g.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
}

/// Gradient of the actor objective J = (1/NT) sum_{i,t} Q(h_t^i, a_t^i)
/// where a are the actor's fresh outputs; returns (dJ/dtheta, J).
///
/// No discount weighting across t: every step counts equally.
pub fn actor_gradient<Q: ActionValueFn>(
    actor_net: &ActorNetwork,
    actor_params: &ParameterSet,
    critic: &Q,
    batch: &Minibatch,
    noise: Option<&[RealArray]>,
) -> Result<(Gradients, f64)> {
    let mut tape = Tape::new();
    let unrolled = actor_net.unroll(
        &mut tape,
        actor_params,
        "actor",
        &batch.observations,
        &batch.prev_actions,
        noise,
    )?;
    let q_nodes = critic.q_nodes(&mut tape, &batch.observations, &batch.prev_actions, &unrolled.actions)?;
    let mut total: Option<NodeId> = None;
    for &q in &q_nodes {
        let s = tape.sum(q)?;
        total = Some(match total {
            None => s,
            Some(acc) => tape.add(acc, s)?,
        });
    }
    let objective = tape.scale(total.unwrap(), 1.0 / (batch.episodes * batch.steps) as f64)?;
    let value = tape.value(objective).as_scalar()?;
    tape.backward(objective, &RealArray::scalar(1.0)?)?;
    let grads = unrolled.binding.gradients(&tape);
    Ok((grads, value))
}

/// One learner: networks, their targets, optimizers, replay, and RNG
/// streams. Minibatch sampling and noise use independent streams so the
/// deterministic limit of RSVG(0) replays RDPG's exact data order.
pub struct Learner {
    pub algo: Algo,
    pub config: LearnerConfig,
    pub spec: EnvSpec,
    pub actor_net: ActorNetwork,
    pub critic_net: CriticNetwork,
    pub actor: NetworkPair,
    pub critic: NetworkPair,
    pub actor_adam: AdamState,
    pub critic_adam: AdamState,
    pub replay: ReplayBuffer,
    sample_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    episode_counter: u64,
}

const SAMPLE_STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const NOISE_STREAM_SALT: u64 = 0x6a09_e667_f3bc_c909;

/// Outcome of one training episode: the rollout return and the reports of
/// the updates that followed it.
pub struct EpisodeOutcome {
    pub episode_index: u64,
    pub episode_return: f64,
    pub reports: Vec<UpdateReport>,
}

impl Learner {
    pub fn new(
        algo: Algo,
        core: CoreKind,
        spec: EnvSpec,
        embed_width: usize,
        hidden: usize,
        config: LearnerConfig,
        learner_seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if algo == Algo::DdpgFeedforward && core != CoreKind::Feedforward {
            return Err(Error::invalid(
                "Learner::new",
                "ddpg-feedforward requires the feedforward core",
            ));
        }
        let sigma = match algo {
            Algo::Rsvg0 => SigmaMode::Learned { init: config.effective_sigma(spec.bound) },
            _ => SigmaMode::Deterministic,
        };
        let actor_net =
            ActorNetwork::new(spec.obs_dim, spec.act_dim, spec.bound, embed_width, hidden, core, sigma)?;
        let critic_net = CriticNetwork::new(spec.obs_dim, spec.act_dim, embed_width, hidden, core)?;
        use rand::SeedableRng;
        let mut init_rng = ChaCha8Rng::seed_from_u64(learner_seed);
        let actor = NetworkPair::new(actor_net.init_params(&mut init_rng));
        let critic = NetworkPair::new(critic_net.init_params(&mut init_rng));
        let actor_adam = AdamState::new(&actor.live, AdamHyper::with_alpha(config.actor_lr));
        let critic_adam = AdamState::new(&critic.live, AdamHyper::with_alpha(config.critic_lr));
        Ok(Learner {
            algo,
            config,
            spec,
            actor_net,
            critic_net,
            actor,
            critic,
            actor_adam,
            critic_adam,
            replay: ReplayBuffer::new(config.replay_capacity, spec.bound),
            sample_rng: ChaCha8Rng::seed_from_u64(learner_seed ^ SAMPLE_STREAM_SALT),
            noise_rng: ChaCha8Rng::seed_from_u64(learner_seed ^ NOISE_STREAM_SALT),
            episode_counter: 0,
        })
    }

    pub fn episode_counter(&self) -> u64 {
        self.episode_counter
    }

    pub(crate) fn set_episode_counter(&mut self, value: u64) {
        self.episode_counter = value;
    }

    /// Roll one exploratory episode, store it, then run the configured
    /// number of update iterations.
    pub fn train_episode(&mut self, env: &mut Env, episode_seed: u64) -> Result<EpisodeOutcome> {
        let episode = self.rollout_exploring(env, episode_seed)?;
        let episode_return = episode.total_reward();
        self.replay.store_episode(episode)?;
        self.episode_counter += 1;

        let mut reports = Vec::with_capacity(self.config.updates_per_episode);
        for _ in 0..self.config.updates_per_episode {
            reports.push(self.update_once()?);
        }
        Ok(EpisodeOutcome { episode_index: self.episode_counter, episode_return, reports })
    }

    /// One iteration of {sample, targets, critic update, actor update,
    /// soft updates}.
    pub fn update_once(&mut self) -> Result<UpdateReport> {
        let sampled = self.replay.sample_minibatch(self.config.minibatch, &mut self.sample_rng)?;
        let batch = Minibatch::from_episodes(&sampled)?;
        let targets = compute_targets(
            &self.actor_net,
            &self.critic_net,
            &self.actor.target,
            &self.critic.target,
            &batch,
            self.config.gamma,
            self.algo,
            &mut self.noise_rng,
        )?;
        let (critic_loss, mean_q, critic_grad_norm) = self.critic_update(&batch, &targets)?;
        let (actor_objective, actor_grad_norm) = self.actor_update(&batch)?;
        self.critic.soft_update(self.config.tau_soft)?;
        self.actor.soft_update(self.config.tau_soft)?;
        let report =
            UpdateReport { critic_loss, mean_q, actor_objective, critic_grad_norm, actor_grad_norm };
        if !(report.critic_loss.is_finite()
            && report.mean_q.is_finite()
            && report.actor_objective.is_finite())
        {
            return Err(Error::non_finite("update_once", format!("{report:?}")));
        }
        Ok(report)
    }

    /// Regress the live critic toward the targets: one Adam step on
    /// (1/NT) sum (y - Q)^2 / 2. Only omega and its Adam state change.
    pub fn critic_update(
        &mut self,
        batch: &Minibatch,
        targets: &[RealArray],
    ) -> Result<(f64, f64, f64)> {
        if targets.len() != batch.steps {
            return Err(Error::shape(
                "critic_update",
                format!("{} targets for {} steps", targets.len(), batch.steps),
            ));
        }
        let mut tape = Tape::new();
        let binding = self.critic_net.bind(&mut tape, &self.critic.live, "critic")?;
        let unrolled = self.critic_net.unroll_bound(
            &mut tape,
            &binding,
            &batch.observations,
            &batch.prev_actions,
            crate::nets::ActionInput::Stored(&batch.actions),
        )?;
        let mut sq_sum: Option<NodeId> = None;
        let mut q_sum = 0.0;
        for (t, &q) in unrolled.q.iter().enumerate() {
            q_sum += tape.value(q).data().iter().sum::<f64>();
            let y = tape.constant(targets[t].clone());
            let err = tape.sub(q, y)?;
            let sq = tape.mul(err, err)?;
            let s = tape.sum(sq)?;
            sq_sum = Some(match sq_sum {
                None => s,
                Some(acc) => tape.add(acc, s)?,
            });
        }
        let count = (batch.episodes * batch.steps) as f64;
        let loss = tape.scale(sq_sum.unwrap(), 1.0 / (2.0 * count))?;
        let msbe = 2.0 * tape.value(loss).as_scalar()?;
        if !msbe.is_finite() {
            return Err(Error::non_finite("critic_update", format!("loss {msbe}")));
        }
        tape.backward(loss, &RealArray::scalar(1.0)?)?;
        let grads = binding.gradients(&tape);
        check_gradients_finite(&grads, "critic_update")?;
        let norm = gradient_norm(&grads);
        adam_step(&mut self.critic.live, &grads, &mut self.critic_adam)?;
        Ok((msbe, q_sum / count, norm))
    }

    /// One Adam ascent step on theta maximizing mean Q over the actor's
    /// fresh actions; the critic receives no step.
    pub fn actor_update(&mut self, batch: &Minibatch) -> Result<(f64, f64)> {
        let noise = match self.algo {
            Algo::Rsvg0 => Some(standard_normal_seq(
                &mut self.noise_rng,
                batch.steps,
                batch.episodes,
                self.actor_net.act_dim,
            )),
            _ => None,
        };
        let critic = CriticRef { net: &self.critic_net, params: &self.critic.live };
        let (grads, objective) =
            actor_gradient(&self.actor_net, &self.actor.live, &critic, batch, noise.as_deref())?;
        check_gradients_finite(&grads, "actor_update")?;
        let norm = gradient_norm(&grads);
        // Ascent: Adam minimizes, so feed the negated gradient.
        let neg: Gradients = grads
            .into_iter()
            .map(|(name, g)| {
                let data: Vec<f64> = g.data().iter().map(|v| -v).collect();
                (name.clone(), RealArray::from_vec(g.rows(), g.cols(), data).expect("finite"))
            })
            .collect();
        adam_step(&mut self.actor.live, &neg, &mut self.actor_adam)?;
        Ok((objective, norm))
    }

    /// Exploratory rollout following the learner's behavior policy.
    pub fn rollout_exploring(&mut self, env: &mut Env, episode_seed: u64) -> Result<Episode> {
        if env.spec() != self.spec {
            return Err(Error::invalid("rollout_exploring", "environment/learner spec mismatch"));
        }
        let sigma_explore = self.config.effective_sigma(self.spec.bound);
        let mut session = ActorSession::new(&self.actor_net, &self.actor.live)?;
        let mut obs = env.reset(episode_seed);
        let mut prev = vec![0.0; self.spec.act_dim];
        let mut episode = Episode {
            id: self.episode_counter,
            tag: self.algo.behavior_tag(),
            observations: Vec::with_capacity(self.spec.horizon),
            actions: Vec::with_capacity(self.spec.horizon),
            rewards: Vec::with_capacity(self.spec.horizon),
            flags: Vec::with_capacity(self.spec.horizon),
        };
        loop {
            let action = match self.algo {
                Algo::Rsvg0 => select_action_rsvg0(&mut session, &obs, &prev, &mut self.noise_rng)?,
                _ => select_action_rdpg(&mut session, &obs, &prev, sigma_explore, &mut self.noise_rng)?,
            };
            let result = env.step(&action)?;
            episode.observations.push(obs);
            episode.actions.push(action.clone());
            episode.rewards.push(result.reward);
            episode.flags.push(if result.on_platform { 1.0 } else { 0.0 });
            obs = result.observation;
            prev = action;
            if result.terminal {
                return Ok(episode);
            }
        }
    }
}

/// Roll one evaluation episode with exploration disabled: the mean action
/// for both algorithm families (nu = 0 for RSVG(0)).
pub fn greedy_rollout(
    actor_net: &ActorNetwork,
    params: &ParameterSet,
    env: &mut Env,
    episode_seed: u64,
    id: u64,
) -> Result<Episode> {
    let spec = env.spec();
    let mut session = ActorSession::new(actor_net, params)?;
    let mut obs = env.reset(episode_seed);
    let mut prev = vec![0.0; spec.act_dim];
    let mut episode = Episode {
        id,
        tag: BehaviorTag::Scripted,
        observations: Vec::with_capacity(spec.horizon),
        actions: Vec::with_capacity(spec.horizon),
        rewards: Vec::with_capacity(spec.horizon),
        flags: Vec::with_capacity(spec.horizon),
    };
    loop {
        let out = session.step(&obs, &prev)?;
        let action: Vec<f64> =
            out.mean.iter().map(|m| m.clamp(-spec.bound, spec.bound)).collect();
        let result = env.step(&action)?;
        episode.observations.push(obs);
        episode.actions.push(action.clone());
        episode.rewards.push(result.reward);
        episode.flags.push(if result.on_platform { 1.0 } else { 0.0 });
        obs = result.observation;
        prev = action;
        if result.terminal {
            return Ok(episode);
        }
    }
}

