//! Episodic replay: whole trajectories in, minibatches of episodes out.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;

use crate::autodiff::RealArray;
use crate::error::{Error, Result};
use crate::nets::checkpoint::{read_container, write_container};

/// Which policy produced an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BehaviorTag {
    RdpgNoise,
    Rsvg0,
    Scripted,
}

impl BehaviorTag {
    pub fn name(&self) -> &'static str {
        match self {
            BehaviorTag::RdpgNoise => "rdpg-noise",
            BehaviorTag::Rsvg0 => "rsvg0",
            BehaviorTag::Scripted => "scripted",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rdpg-noise" => Ok(BehaviorTag::RdpgNoise),
            "rsvg0" => Ok(BehaviorTag::Rsvg0),
            "scripted" => Ok(BehaviorTag::Scripted),
            other => Err(Error::invalid("BehaviorTag::parse", format!("unknown tag {other:?}"))),
        }
    }
}

/// One rollout: (o_t, a_t, r_t) for t = 1..T plus a per-step info flag
/// (on-platform for the water maze, zero elsewhere).
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub id: u64,
    pub tag: BehaviorTag,
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub flags: Vec<f64>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Structural invariants: equal lengths, T >= 1, finite rewards and
    /// observations, actions finite and within `action_bound` per
    /// dimension.
    pub fn validate(&self, action_bound: f64) -> Result<()> {
        let t = self.rewards.len();
        if t == 0 {
            return Err(Error::invalid("Episode::validate", "episode length 0"));
        }
        if self.observations.len() != t || self.actions.len() != t || self.flags.len() != t {
            return Err(Error::shape(
                "Episode::validate",
                format!(
                    "lengths differ: {} obs, {} actions, {} rewards, {} flags",
                    self.observations.len(),
                    self.actions.len(),
                    t,
                    self.flags.len()
                ),
            ));
        }
        let obs_dim = self.observations[0].len();
        let act_dim = self.actions[0].len();
        for (i, r) in self.rewards.iter().enumerate() {
            if !r.is_finite() {
                return Err(Error::non_finite("Episode::validate", format!("reward {i} is {r}")));
            }
        }
        for (i, o) in self.observations.iter().enumerate() {
            if o.len() != obs_dim {
                return Err(Error::shape("Episode::validate", format!("observation {i} width")));
            }
            if o.iter().any(|v| !v.is_finite()) {
                return Err(Error::non_finite("Episode::validate", format!("observation {i}")));
            }
        }
        for (i, a) in self.actions.iter().enumerate() {
            if a.len() != act_dim {
                return Err(Error::shape("Episode::validate", format!("action {i} width")));
            }
            for v in a {
                if !v.is_finite() || v.abs() > action_bound + 1e-12 {
                    return Err(Error::invalid(
                        "Episode::validate",
                        format!("action {i} value {v} outside ±{action_bound}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Bounded FIFO store of whole episodes with uniform with-replacement
/// sampling. Stored episodes are never mutated; sampling hands out shared
/// references.
pub struct ReplayBuffer {
    episodes: VecDeque<Episode>,
    capacity: usize,
    action_bound: f64,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, action_bound: f64) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        ReplayBuffer { episodes: VecDeque::new(), capacity, action_bound, inserted: 0 }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of accepted episodes, including evicted ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn iter(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter()
    }

    /// Append an episode, evicting the oldest when full. Rejects episodes
    /// violating the [`Episode`] invariants, leaving the buffer unchanged.
    pub fn store_episode(&mut self, episode: Episode) -> Result<()> {
        episode.validate(self.action_bound)?;
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
        self.inserted += 1;
        Ok(())
    }

    /// N episodes drawn uniformly with replacement; deterministic given
    /// the RNG state.
    pub fn sample_minibatch<'a>(&'a self, n: usize, rng: &mut impl Rng) -> Result<Vec<&'a Episode>> {
        if self.episodes.is_empty() {
            return Err(Error::invalid("sample_minibatch", "buffer is empty"));
        }
        if n == 0 {
            return Err(Error::invalid("sample_minibatch", "N must be at least 1"));
        }
        Ok((0..n).map(|_| &self.episodes[rng.gen_range(0..self.episodes.len())]).collect())
    }

    /// Persist every stored episode into the named-array container, one
    /// record per episode. Columns are [observation..., action..., reward,
    /// flag]; the tag rides in the record name.
    pub fn dump<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut owned: Vec<(String, RealArray)> = Vec::with_capacity(self.episodes.len());
        for (i, ep) in self.episodes.iter().enumerate() {
            let t = ep.len();
            let obs_dim = ep.observations[0].len();
            let act_dim = ep.actions[0].len();
            let width = obs_dim + act_dim + 2;
            let mut data = Vec::with_capacity(t * width);
            for step in 0..t {
                data.extend_from_slice(&ep.observations[step]);
                data.extend_from_slice(&ep.actions[step]);
                data.push(ep.rewards[step]);
                data.push(ep.flags[step]);
            }
            let name = format!("ep/{:06}/{}/{}/{}", i, ep.id, ep.tag.name(), obs_dim);
            owned.push((name, RealArray::from_vec(t, width, data)?));
        }
        let entries: Vec<(String, &RealArray)> =
            owned.iter().map(|(n, a)| (n.clone(), a)).collect();
        write_container(path, &entries)
    }

    /// Rebuild a buffer from [`ReplayBuffer::dump`] output.
    pub fn load<P: AsRef<Path>>(path: P, capacity: usize, action_bound: f64) -> Result<Self> {
        let mut buffer = ReplayBuffer::new(capacity, action_bound);
        for (name, arr) in read_container(path)? {
            let parts: Vec<&str> = name.split('/').collect();
            if parts.len() != 5 || parts[0] != "ep" {
                return Err(Error::format("ReplayBuffer::load", format!("bad record name {name:?}")));
            }
            let id: u64 = parts[2]
                .parse()
                .map_err(|_| Error::format("ReplayBuffer::load", format!("bad id in {name:?}")))?;
            let tag = BehaviorTag::parse(parts[3])?;
            let obs_dim: usize = parts[4]
                .parse()
                .map_err(|_| Error::format("ReplayBuffer::load", format!("bad obs dim in {name:?}")))?;
            let width = arr.cols();
            if width < obs_dim + 2 {
                return Err(Error::format("ReplayBuffer::load", format!("record {name:?} too narrow")));
            }
            let act_dim = width - obs_dim - 2;
            let t = arr.rows();
            let mut ep = Episode {
                id,
                tag,
                observations: Vec::with_capacity(t),
                actions: Vec::with_capacity(t),
                rewards: Vec::with_capacity(t),
                flags: Vec::with_capacity(t),
            };
            for step in 0..t {
                let row = arr.row_slice(step);
                ep.observations.push(row[..obs_dim].to_vec());
                ep.actions.push(row[obs_dim..obs_dim + act_dim].to_vec());
                ep.rewards.push(row[obs_dim + act_dim]);
                ep.flags.push(row[obs_dim + act_dim + 1]);
            }
            buffer.store_episode(ep)?;
        }
        Ok(buffer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_episode(id: u64, reward: f64) -> Episode {
        Episode {
            id,
            tag: BehaviorTag::Scripted,
            observations: vec![vec![0.1, 0.2], vec![0.3, 0.4]],
            actions: vec![vec![0.5], vec![-0.5]],
            rewards: vec![reward, reward],
            flags: vec![0.0, 0.0],
        }
    }

    #[test]
    fn fifo_eviction_is_oldest_first() {
        let mut buf = ReplayBuffer::new(2, 1.0);
        buf.store_episode(toy_episode(1, 0.0)).unwrap();
        buf.store_episode(toy_episode(2, 0.0)).unwrap();
        buf.store_episode(toy_episode(3, 0.0)).unwrap();
        let ids: Vec<u64> = buf.iter().map(|e| e.id).collect();
        assert_eq!(ids, vec![2, 3]);
        assert_eq!(buf.inserted(), 3);
    }

    #[test]
    fn nan_reward_rejected_buffer_unchanged() {
        let mut buf = ReplayBuffer::new(4, 1.0);
        buf.store_episode(toy_episode(1, 0.5)).unwrap();
        let bad = toy_episode(2, f64::NAN);
        assert!(buf.store_episode(bad).is_err());
        assert_eq!(buf.len(), 1);
    }

    #[test]
    fn out_of_bounds_action_rejected() {
        let mut buf = ReplayBuffer::new(4, 0.3);
        assert!(buf.store_episode(toy_episode(1, 0.0)).is_err());
    }

    #[test]
    fn sample_returns_stored_episodes_unmodified() {
        let mut buf = ReplayBuffer::new(4, 1.0);
        let ep = toy_episode(7, 0.25);
        buf.store_episode(ep.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            let batch = buf.sample_minibatch(1, &mut rng).unwrap();
            assert_eq!(batch[0], &ep);
        }
    }

    #[test]
    fn single_episode_buffer_samples_it_n_times() {
        let mut buf = ReplayBuffer::new(4, 1.0);
        buf.store_episode(toy_episode(9, 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = buf.sample_minibatch(4, &mut rng).unwrap();
        assert_eq!(batch.len(), 4);
        assert!(batch.iter().all(|e| e.id == 9));
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let mut buf = ReplayBuffer::new(8, 1.0);
        for i in 0..5 {
            buf.store_episode(toy_episode(i, 0.0)).unwrap();
        }
        let draw = |seed: u64| -> Vec<u64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .flat_map(|_| buf.sample_minibatch(3, &mut rng).unwrap())
                .map(|e| e.id)
                .collect()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn empty_buffer_sampling_is_error() {
        let buf = ReplayBuffer::new(2, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(buf.sample_minibatch(1, &mut rng).is_err());
    }

    #[test]
    fn sampling_frequencies_are_binomial() {
        // 10,000 draws from a 4-episode buffer: each frequency within four
        // standard deviations of 2500 (sigma = sqrt(n p (1-p)) ~ 43.3).
        let mut buf = ReplayBuffer::new(4, 1.0);
        for i in 0..4 {
            buf.store_episode(toy_episode(i, 0.0)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            let batch = buf.sample_minibatch(1, &mut rng).unwrap();
            counts[batch[0].id as usize] += 1;
        }
        let sigma = (10_000.0_f64 * 0.25 * 0.75).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - 2500.0).abs() <= 4.0 * sigma,
                "episode {i} drawn {c} times"
            );
        }
    }

    #[test]
    fn dump_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.rpg");
        let mut buf = ReplayBuffer::new(4, 1.0);
        buf.store_episode(toy_episode(3, 0.1)).unwrap();
        buf.store_episode(toy_episode(4, -0.2)).unwrap();
        buf.dump(&path).unwrap();
        let back = ReplayBuffer::load(&path, 4, 1.0).unwrap();
        assert_eq!(back.len(), 2);
        let orig: Vec<&Episode> = buf.iter().collect();
        let loaded: Vec<&Episode> = back.iter().collect();
        assert_eq!(orig, loaded);
    }
}
