//! Full training-state checkpoints on top of the named-array container:
//! live and target parameter sets for both networks, both Adam states, and
//! enough metadata to rebuild the architecture.

use std::collections::BTreeMap;
use std::path::Path;

use super::Algo;
use crate::autodiff::{AdamHyper, AdamState, ParameterSet, RealArray};
use crate::error::{Error, Result};
use crate::nets::checkpoint::{read_container, write_container};
use crate::nets::{CoreKind, NetworkPair, SigmaMode};

#[derive(Clone, Debug)]
pub struct CheckpointData {
    pub algo: Algo,
    pub core: CoreKind,
    pub embed_width: usize,
    pub hidden: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub bound: f64,
    pub sigma: SigmaMode,
    /// Episodes completed when the checkpoint was written.
    pub episode: u64,
    pub actor: NetworkPair,
    pub critic: NetworkPair,
    pub actor_adam: AdamState,
    pub critic_adam: AdamState,
}

fn algo_code(a: Algo) -> f64 {
    match a {
        Algo::Rdpg => 0.0,
        Algo::Rsvg0 => 1.0,
        Algo::DdpgFeedforward => 2.0,
    }
}

fn algo_from(code: f64) -> Result<Algo> {
    match code as i64 {
        0 => Ok(Algo::Rdpg),
        1 => Ok(Algo::Rsvg0),
        2 => Ok(Algo::DdpgFeedforward),
        other => Err(Error::format("checkpoint", format!("bad algorithm code {other}"))),
    }
}

fn core_code(c: CoreKind) -> f64 {
    match c {
        CoreKind::Lstm => 0.0,
        CoreKind::Rnn => 1.0,
        CoreKind::Feedforward => 2.0,
    }
}

fn core_from(code: f64) -> Result<CoreKind> {
    match code as i64 {
        0 => Ok(CoreKind::Lstm),
        1 => Ok(CoreKind::Rnn),
        2 => Ok(CoreKind::Feedforward),
        other => Err(Error::format("checkpoint", format!("bad core code {other}"))),
    }
}

fn sigma_encode(s: SigmaMode) -> [f64; 2] {
    match s {
        SigmaMode::Deterministic => [0.0, 0.0],
        SigmaMode::Learned { init } => [1.0, init],
        SigmaMode::Fixed { value } => [2.0, value],
    }
}

fn sigma_decode(v: &[f64]) -> Result<SigmaMode> {
    match v[0] as i64 {
        0 => Ok(SigmaMode::Deterministic),
        1 => Ok(SigmaMode::Learned { init: v[1] }),
        2 => Ok(SigmaMode::Fixed { value: v[1] }),
        other => Err(Error::format("checkpoint", format!("bad sigma code {other}"))),
    }
}

fn push_set(entries: &mut Vec<(String, RealArray)>, prefix: &str, set: &ParameterSet) {
    for (name, arr) in set.iter() {
        entries.push((format!("{prefix}/{name}"), arr.clone()));
    }
}

fn push_adam(entries: &mut Vec<(String, RealArray)>, prefix: &str, set: &ParameterSet, adam: &AdamState) {
    for (name, arr) in set.iter() {
        let (m, v) = adam.moments(name).expect("adam aligned with parameters");
        entries.push((
            format!("{prefix}/m/{name}"),
            RealArray::from_vec(arr.rows(), arr.cols(), m.to_vec()).expect("finite"),
        ));
        entries.push((
            format!("{prefix}/v/{name}"),
            RealArray::from_vec(arr.rows(), arr.cols(), v.to_vec()).expect("finite"),
        ));
    }
    let h = adam.hyper;
    entries.push((
        format!("{prefix}/hyper"),
        RealArray::row(&[h.alpha, h.beta1, h.beta2, h.epsilon]).expect("finite"),
    ));
    entries.push((format!("{prefix}/t"), RealArray::scalar(adam.step_count() as f64).expect("finite")));
}

pub fn save_checkpoint<P: AsRef<Path>>(path: P, data: &CheckpointData) -> Result<()> {
    let mut entries: Vec<(String, RealArray)> = vec![
        ("meta/version".into(), RealArray::scalar(1.0)?),
        ("meta/algorithm".into(), RealArray::scalar(algo_code(data.algo))?),
        ("meta/core".into(), RealArray::scalar(core_code(data.core))?),
        ("meta/embed".into(), RealArray::scalar(data.embed_width as f64)?),
        ("meta/hidden".into(), RealArray::scalar(data.hidden as f64)?),
        ("meta/obs_dim".into(), RealArray::scalar(data.obs_dim as f64)?),
        ("meta/act_dim".into(), RealArray::scalar(data.act_dim as f64)?),
        ("meta/bound".into(), RealArray::scalar(data.bound)?),
        ("meta/sigma".into(), RealArray::row(&sigma_encode(data.sigma))?),
        ("meta/episode".into(), RealArray::scalar(data.episode as f64)?),
    ];
    push_set(&mut entries, "actor/live", &data.actor.live);
    push_set(&mut entries, "actor/target", &data.actor.target);
    push_set(&mut entries, "critic/live", &data.critic.live);
    push_set(&mut entries, "critic/target", &data.critic.target);
    push_adam(&mut entries, "actor/adam", &data.actor.live, &data.actor_adam);
    push_adam(&mut entries, "critic/adam", &data.critic.live, &data.critic_adam);
    let refs: Vec<(String, &RealArray)> = entries.iter().map(|(n, a)| (n.clone(), a)).collect();
    write_container(path, &refs)
}

struct Loaded {
    by_name: BTreeMap<String, RealArray>,
}

impl Loaded {
    fn scalar(&self, name: &str) -> Result<f64> {
        self.by_name
            .get(name)
            .ok_or_else(|| Error::format("checkpoint", format!("missing record {name:?}")))?
            .as_scalar()
    }

    fn row(&self, name: &str) -> Result<&RealArray> {
        self.by_name
            .get(name)
            .ok_or_else(|| Error::format("checkpoint", format!("missing record {name:?}")))
    }

    fn set_with_prefix(&self, prefix: &str) -> Result<ParameterSet> {
        let mut set = ParameterSet::new();
        let want = format!("{prefix}/");
        for (name, arr) in self.by_name.range(want.clone()..) {
            if !name.starts_with(&want) {
                break;
            }
            set.insert(&name[want.len()..], arr.clone())?;
        }
        if set.is_empty() {
            return Err(Error::format("checkpoint", format!("no records under {prefix:?}")));
        }
        Ok(set)
    }

    fn adam(&self, prefix: &str, params: &ParameterSet) -> Result<AdamState> {
        let hyper_row = self.row(&format!("{prefix}/hyper"))?;
        if hyper_row.len() != 4 {
            return Err(Error::format("checkpoint", format!("{prefix}/hyper has {} values", hyper_row.len())));
        }
        let h = hyper_row.data();
        let hyper = AdamHyper { alpha: h[0], beta1: h[1], beta2: h[2], epsilon: h[3] };
        let t = self.scalar(&format!("{prefix}/t"))? as u64;
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (name, arr) in params.iter() {
            let m_arr = self.row(&format!("{prefix}/m/{name}"))?;
            let v_arr = self.row(&format!("{prefix}/v/{name}"))?;
            if m_arr.shape() != arr.shape() || v_arr.shape() != arr.shape() {
                return Err(Error::format("checkpoint", format!("moment shape mismatch for {name:?}")));
            }
            m.insert(name.clone(), m_arr.data().to_vec());
            v.insert(name.clone(), v_arr.data().to_vec());
        }
        Ok(AdamState::restore(hyper, t, m, v))
    }
}

pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<CheckpointData> {
    let entries = read_container(path)?;
    let loaded = Loaded { by_name: entries.into_iter().collect() };
    let version = loaded.scalar("meta/version")?;
    if version != 1.0 {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let algo = algo_from(loaded.scalar("meta/algorithm")?)?;
    let core = core_from(loaded.scalar("meta/core")?)?;
    let sigma_row = loaded.row("meta/sigma")?;
    if sigma_row.len() != 2 {
        return Err(Error::format("checkpoint", "meta/sigma must have 2 values"));
    }
    let sigma = sigma_decode(sigma_row.data())?;

    let actor_live = loaded.set_with_prefix("actor/live")?;
    let actor_target = loaded.set_with_prefix("actor/target")?;
    let critic_live = loaded.set_with_prefix("critic/live")?;
    let critic_target = loaded.set_with_prefix("critic/target")?;
    if !actor_live.same_shapes(&actor_target) || !critic_live.same_shapes(&critic_target) {
        return Err(Error::format("checkpoint", "live/target layouts differ"));
    }
    let actor_adam = loaded.adam("actor/adam", &actor_live)?;
    let critic_adam = loaded.adam("critic/adam", &critic_live)?;
    Ok(CheckpointData {
        algo,
        core,
        embed_width: loaded.scalar("meta/embed")? as usize,
        hidden: loaded.scalar("meta/hidden")? as usize,
        obs_dim: loaded.scalar("meta/obs_dim")? as usize,
        act_dim: loaded.scalar("meta/act_dim")? as usize,
        bound: loaded.scalar("meta/bound")?,
        sigma,
        episode: loaded.scalar("meta/episode")? as u64,
        actor: NetworkPair { live: actor_live, target: actor_target },
        critic: NetworkPair { live: critic_live, target: critic_target },
        actor_adam,
        critic_adam,
    })
}

impl super::Learner {
    pub fn to_checkpoint(&self) -> CheckpointData {
        CheckpointData {
            algo: self.algo,
            core: self.actor_net.core,
            embed_width: self.actor_net.embed_width,
            hidden: self.actor_net.hidden,
            obs_dim: self.spec.obs_dim,
            act_dim: self.spec.act_dim,
            bound: self.spec.bound,
            sigma: self.actor_net.sigma,
            episode: self.episode_counter(),
            actor: self.actor.clone(),
            critic: self.critic.clone(),
            actor_adam: self.actor_adam.clone(),
            critic_adam: self.critic_adam.clone(),
        }
    }

    /// Rebuild a learner from checkpoint data, keeping the stored
    /// parameters, Adam moments and episode counter. The replay buffer
    /// starts empty.
    pub fn from_checkpoint(
        data: CheckpointData,
        config: super::LearnerConfig,
        spec: crate::envs::EnvSpec,
        learner_seed: u64,
    ) -> Result<Self> {
        if data.obs_dim != spec.obs_dim || data.act_dim != spec.act_dim || data.bound != spec.bound {
            return Err(Error::invalid(
                "Learner::from_checkpoint",
                format!(
                    "checkpoint dims ({}, {}, {}) do not match task ({}, {}, {})",
                    data.obs_dim, data.act_dim, data.bound, spec.obs_dim, spec.act_dim, spec.bound
                ),
            ));
        }
        if data.algo == Algo::Rsvg0 && !data.sigma.is_stochastic() {
            return Err(Error::format("checkpoint", "rsvg0 checkpoint has a deterministic actor"));
        }
        let mut learner = super::Learner::new(
            data.algo,
            data.core,
            spec,
            data.embed_width,
            data.hidden,
            config,
            learner_seed,
        )?;
        // The sigma mode travels with the checkpoint (a fixed-sigma actor
        // must stay fixed); rebuild the layout reference under it.
        learner.actor_net.sigma = data.sigma;
        let mut layout_rng = {
            use rand::SeedableRng;
            rand_chacha::ChaCha8Rng::seed_from_u64(0)
        };
        let actor_layout = learner.actor_net.init_params(&mut layout_rng);
        let critic_layout = learner.critic_net.init_params(&mut layout_rng);
        if !actor_layout.same_shapes(&data.actor.live) || !critic_layout.same_shapes(&data.critic.live) {
            return Err(Error::format("checkpoint", "stored parameter layout does not match architecture"));
        }
        learner.actor = data.actor;
        learner.critic = data.critic;
        learner.actor_adam = data.actor_adam;
        learner.critic_adam = data.critic_adam;
        learner.set_episode_counter(data.episode);
        Ok(learner)
    }
}
