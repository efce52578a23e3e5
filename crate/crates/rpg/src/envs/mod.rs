//! Closed-form POMDP benchmark suite behind one sequential interface.
//!
//! Four fixed-horizon tasks with hand-written dynamics (see `dynamics.md`
//! at the repository root for the frozen constants): pendulum swing-up
//! without velocity, cart-pole swing-up with a hidden episode-varying pole
//! length, a point-mass reacher whose target is shown only at t = 1, and a
//! simplified Morris water maze.

pub mod cartpole;
pub mod pendulum;
pub mod reacher;
pub mod scripted;
pub mod watermaze;

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::replay::{BehaviorTag, Episode};

/// Static description of a task's interface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Symmetric per-dimension action bound.
    pub bound: f64,
    pub horizon: usize,
}

/// The four benchmark tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    PendulumNoVel,
    CartpoleVarlen,
    ReacherHidden,
    Watermaze,
}

pub const ALL_TASKS: [Task; 4] =
    [Task::PendulumNoVel, Task::CartpoleVarlen, Task::ReacherHidden, Task::Watermaze];

impl Task {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "pendulum-novel" => Ok(Task::PendulumNoVel),
            "cartpole-varlen" => Ok(Task::CartpoleVarlen),
            "reacher-hidden" => Ok(Task::ReacherHidden),
            "watermaze" => Ok(Task::Watermaze),
            other => Err(Error::invalid("Task::parse", format!("unknown task {other:?}"))),
        }
    }

    pub fn spec(&self) -> EnvSpec {
        match self {
            Task::PendulumNoVel => EnvSpec {
                name: "pendulum-novel",
                obs_dim: 2,
                act_dim: 1,
                bound: pendulum::MAX_TORQUE,
                horizon: pendulum::HORIZON,
            },
            Task::CartpoleVarlen => EnvSpec {
                name: "cartpole-varlen",
                obs_dim: 3,
                act_dim: 1,
                bound: cartpole::MAX_FORCE,
                horizon: cartpole::HORIZON,
            },
            Task::ReacherHidden => EnvSpec {
                name: "reacher-hidden",
                obs_dim: 7,
                act_dim: 2,
                bound: reacher::MAX_ACCEL,
                horizon: reacher::HORIZON,
            },
            Task::Watermaze => EnvSpec {
                name: "watermaze",
                obs_dim: 5,
                act_dim: 2,
                bound: 1.0,
                horizon: watermaze::HORIZON,
            },
        }
    }
}

/// Output of one environment step.
#[derive(Clone, Debug)]
pub struct StepResult {
    /// The next observation (o_{t+1}); unused after the terminal step.
    pub observation: Vec<f64>,
    pub reward: f64,
    /// True exactly when the step counter reaches the horizon.
    pub terminal: bool,
    /// Water maze: the position reached this step was on the platform.
    pub on_platform: bool,
    /// The supplied action was clipped or projected into bounds.
    pub clipped: bool,
}

enum TaskState {
    Pendulum(pendulum::PendulumState),
    Cartpole(cartpole::CartpoleState),
    Reacher(reacher::ReacherState),
    Watermaze(watermaze::WatermazeState),
}

/// One sequential environment instance. Owns its RNG; `(seed, action
/// sequence)` determines the trajectory bit for bit.
pub struct Env {
    task: Task,
    spec: EnvSpec,
    rng: ChaCha8Rng,
    state: Option<TaskState>,
    steps: usize,
}

impl Env {
    pub fn new(task: Task) -> Self {
        Env { task, spec: task.spec(), rng: ChaCha8Rng::seed_from_u64(0), state: None, steps: 0 }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn spec(&self) -> EnvSpec {
        self.spec
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Draw a fresh hidden state from the task's initial distribution and
    /// return the first observation. Deterministic given the seed.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.steps = 0;
        let state = match self.task {
            Task::PendulumNoVel => TaskState::Pendulum(pendulum::reset(&mut self.rng)),
            Task::CartpoleVarlen => TaskState::Cartpole(cartpole::reset(&mut self.rng)),
            Task::ReacherHidden => TaskState::Reacher(reacher::reset(&mut self.rng)),
            Task::Watermaze => TaskState::Watermaze(watermaze::reset(&mut self.rng)),
        };
        self.state = Some(state);
        self.observe()
    }

    fn observe(&self) -> Vec<f64> {
        match self.state.as_ref().expect("reset before observe") {
            TaskState::Pendulum(s) => pendulum::observe(s),
            TaskState::Cartpole(s) => cartpole::observe(s),
            TaskState::Reacher(s) => reacher::observe(s, self.steps == 0),
            TaskState::Watermaze(s) => watermaze::observe(s),
        }
    }

    /// Dispatch one step of the task dynamics. Out-of-bounds actions are
    /// clipped (recorded in the result), non-finite actions and stepping
    /// past the horizon are errors.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.state.is_none() {
            return Err(Error::Env("step before reset".into()));
        }
        if self.steps >= self.spec.horizon {
            return Err(Error::Env(format!(
                "step {} past horizon {} — episode is terminal",
                self.steps + 1,
                self.spec.horizon
            )));
        }
        if action.len() != self.spec.act_dim {
            return Err(Error::shape(
                "Env::step",
                format!("action has {} dims, task needs {}", action.len(), self.spec.act_dim),
            ));
        }
        if action.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("Env::step", format!("action {action:?}")));
        }

        let bound = self.spec.bound;
        let mut clipped = false;
        let (reward, on_platform) = match self.state.as_mut().unwrap() {
            TaskState::Pendulum(s) => {
                let u = clamp_tracking(action[0], bound, &mut clipped);
                (pendulum::step(s, u), false)
            }
            TaskState::Cartpole(s) => {
                let f = clamp_tracking(action[0], bound, &mut clipped);
                (cartpole::step(s, f), false)
            }
            TaskState::Reacher(s) => {
                let a = [
                    clamp_tracking(action[0], bound, &mut clipped),
                    clamp_tracking(action[1], bound, &mut clipped),
                ];
                (reacher::step(s, &a), false)
            }
            TaskState::Watermaze(s) => {
                // Acceleration bounded by Euclidean norm: project, not clamp.
                let norm = (action[0] * action[0] + action[1] * action[1]).sqrt();
                let a = if norm > 1.0 {
                    clipped = true;
                    [action[0] / norm, action[1] / norm]
                } else {
                    [action[0], action[1]]
                };
                watermaze::step(s, &a, &mut self.rng)
            }
        };
        self.steps += 1;
        let terminal = self.steps == self.spec.horizon;
        Ok(StepResult { observation: self.observe(), reward, terminal, on_platform, clipped })
    }

    /// Diagnostic access to the hidden state, used by scripted reference
    /// controllers and the physics tests. Layouts:
    /// pendulum [theta, theta_dot]; cartpole [x, x_dot, theta, theta_dot,
    /// length]; reacher [px, py, vx, vy, tx, ty]; watermaze [px, py, vx,
    /// vy, cx, cy, streak].
    pub fn hidden_state(&self) -> Vec<f64> {
        match self.state.as_ref().expect("reset before hidden_state") {
            TaskState::Pendulum(s) => vec![s.theta, s.theta_dot],
            TaskState::Cartpole(s) => vec![s.x, s.x_dot, s.theta, s.theta_dot, s.length],
            TaskState::Reacher(s) => {
                vec![s.pos[0], s.pos[1], s.vel[0], s.vel[1], s.target[0], s.target[1]]
            }
            TaskState::Watermaze(s) => vec![
                s.pos[0],
                s.pos[1],
                s.vel[0],
                s.vel[1],
                s.platform[0],
                s.platform[1],
                s.streak as f64,
            ],
        }
    }

    /// Overwrite the hidden state (same layout as [`Env::hidden_state`]);
    /// a hook for the partial-observability and physics tests.
    pub fn force_state(&mut self, values: &[f64]) -> Result<()> {
        let state = self.state.as_mut().ok_or_else(|| Error::Env("force_state before reset".into()))?;
        let expect = match state {
            TaskState::Pendulum(_) => 2,
            TaskState::Cartpole(_) => 5,
            TaskState::Reacher(_) => 6,
            TaskState::Watermaze(_) => 7,
        };
        if values.len() != expect {
            return Err(Error::shape("Env::force_state", format!("{} values, need {expect}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("Env::force_state", format!("{values:?}")));
        }
        match state {
            TaskState::Pendulum(s) => {
                s.theta = values[0];
                s.theta_dot = values[1];
            }
            TaskState::Cartpole(s) => {
                s.x = values[0];
                s.x_dot = values[1];
                s.theta = values[2];
                s.theta_dot = values[3];
                s.length = values[4];
            }
            TaskState::Reacher(s) => {
                s.pos = [values[0], values[1]];
                s.vel = [values[2], values[3]];
                s.target = [values[4], values[5]];
            }
            TaskState::Watermaze(s) => {
                s.pos = [values[0], values[1]];
                s.vel = [values[2], values[3]];
                s.platform = [values[4], values[5]];
                s.streak = values[6] as u32;
            }
        }
        Ok(())
    }
}

fn clamp_tracking(v: f64, bound: f64, clipped: &mut bool) -> f64 {
    if v.abs() > bound {
        *clipped = true;
        v.clamp(-bound, bound)
    } else {
        v
    }
}

/// Write one episode as CSV: `t, o..., a..., r, on_platform` with a header
/// naming every dimension.
pub fn write_trajectory_csv<P: AsRef<Path>>(path: P, episode: &Episode) -> Result<()> {
    let obs_dim = episode.observations.first().map(|o| o.len()).unwrap_or(0);
    let act_dim = episode.actions.first().map(|a| a.len()).unwrap_or(0);
    let mut out = String::new();
    out.push('t');
    for i in 0..obs_dim {
        write!(out, ",o{i}").unwrap();
    }
    for i in 0..act_dim {
        write!(out, ",a{i}").unwrap();
    }
    out.push_str(",r,on_platform\n");
    for t in 0..episode.len() {
        write!(out, "{}", t + 1).unwrap();
        for v in &episode.observations[t] {
            write!(out, ",{v}").unwrap();
        }
        for v in &episode.actions[t] {
            write!(out, ",{v}").unwrap();
        }
        writeln!(out, ",{},{}", episode.rewards[t], episode.flags[t]).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parse a trajectory dump written by [`write_trajectory_csv`].
pub fn read_trajectory_csv<P: AsRef<Path>>(path: P) -> Result<Episode> {
    let text = std::fs::read_to_string(&path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format("trajectory", "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"t") || cols.last() != Some(&"on_platform") {
        return Err(Error::format("trajectory", format!("unexpected header {header:?}")));
    }
    let obs_dim = cols.iter().filter(|c| c.starts_with('o') && c[1..].parse::<usize>().is_ok()).count();
    let act_dim = cols.iter().filter(|c| c.starts_with('a') && c[1..].parse::<usize>().is_ok()).count();
    let expected = 1 + obs_dim + act_dim + 2;
    if cols.len() != expected {
        return Err(Error::format("trajectory", format!("header has {} columns, expected {expected}", cols.len())));
    }
    let mut episode = Episode {
        id: 0,
        tag: BehaviorTag::Scripted,
        observations: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        flags: Vec::new(),
    };
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(Error::format(
                "trajectory",
                format!("line {} has {} fields, expected {expected}", lineno + 2, fields.len()),
            ));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::format("trajectory", format!("bad number {s:?} on line {}", lineno + 2)))
        };
        let mut idx = 1;
        let mut obs = Vec::with_capacity(obs_dim);
        for _ in 0..obs_dim {
            obs.push(parse(fields[idx])?);
            idx += 1;
        }
        let mut act = Vec::with_capacity(act_dim);
        for _ in 0..act_dim {
            act.push(parse(fields[idx])?);
            idx += 1;
        }
        episode.observations.push(obs);
        episode.actions.push(act);
        episode.rewards.push(parse(fields[idx])?);
        episode.flags.push(parse(fields[idx + 1])?);
    }
    if episode.is_empty() {
        return Err(Error::format("trajectory", "no data rows"));
    }
    Ok(episode)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_trajectory() {
        for task in ALL_TASKS {
            let mut a = Env::new(task);
            let mut b = Env::new(task);
            let oa = a.reset(7);
            let ob = b.reset(7);
            assert_eq!(oa, ob, "{task:?} reset mismatch");
            let dim = task.spec().act_dim;
            let action: Vec<f64> = (0..dim).map(|i| 0.1 * (i as f64 + 1.0)).collect();
            for t in 0..20 {
                let ra = a.step(&action).unwrap();
                let rb = b.step(&action).unwrap();
                assert_eq!(ra.observation, rb.observation, "{task:?} step {t}");
                assert_eq!(ra.reward.to_bits(), rb.reward.to_bits());
            }
        }
    }

    #[test]
    fn terminal_exactly_at_horizon_and_error_after() {
        let mut env = Env::new(Task::ReacherHidden);
        env.reset(3);
        let horizon = env.spec().horizon;
        for t in 1..=horizon {
            let r = env.step(&[0.1, -0.1]).unwrap();
            assert_eq!(r.terminal, t == horizon, "step {t}");
        }
        assert!(env.step(&[0.0, 0.0]).is_err(), "step past horizon must fail");
    }

    #[test]
    fn nan_action_rejected() {
        let mut env = Env::new(Task::PendulumNoVel);
        env.reset(0);
        assert!(env.step(&[f64::NAN]).is_err());
    }

    #[test]
    fn step_before_reset_rejected() {
        let mut env = Env::new(Task::PendulumNoVel);
        assert!(env.step(&[0.0]).is_err());
    }

    #[test]
    fn out_of_bounds_action_clips_not_errors() {
        let mut env = Env::new(Task::PendulumNoVel);
        env.reset(0);
        let r = env.step(&[100.0]).unwrap();
        assert!(r.clipped);
    }

    #[test]
    fn replaying_actions_reproduces_rewards_bit_exactly() {
        let mut env = Env::new(Task::Watermaze);
        env.reset(11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let actions: Vec<[f64; 2]> = (0..watermaze::HORIZON)
            .map(|_| [rand::Rng::gen_range(&mut rng, -1.0..1.0), rand::Rng::gen_range(&mut rng, -1.0..1.0)])
            .collect();
        let run = |env: &mut Env| -> Vec<u64> {
            env.reset(11);
            actions.iter().map(|a| env.step(a).unwrap().reward.to_bits()).collect()
        };
        let first = run(&mut env);
        let second = run(&mut env);
        assert_eq!(first, second);
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let mut env = Env::new(Task::Watermaze);
        let mut obs = env.reset(2);
        let mut ep = Episode {
            id: 1,
            tag: BehaviorTag::Scripted,
            observations: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            flags: Vec::new(),
        };
        for _ in 0..10 {
            let action = vec![0.3, -0.2];
            let r = env.step(&action).unwrap();
            ep.observations.push(obs);
            ep.actions.push(action);
            ep.rewards.push(r.reward);
            ep.flags.push(if r.on_platform { 1.0 } else { 0.0 });
            obs = r.observation;
        }
        write_trajectory_csv(&path, &ep).unwrap();
        let back = read_trajectory_csv(&path).unwrap();
        assert_eq!(back.observations, ep.observations);
        assert_eq!(back.actions, ep.actions);
        assert_eq!(back.rewards, ep.rewards);
        assert_eq!(back.flags, ep.flags);
    }

    #[test]
    fn malformed_trajectory_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,o0,a0,r,on_platform\n1,0.1,oops,0.0,0\n").unwrap();
        assert!(read_trajectory_csv(&path).is_err());
    }
}
