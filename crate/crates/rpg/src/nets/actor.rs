use rand::Rng;

use super::CoreKind;
use crate::autodiff::{
    lstm_cell, rnn_cell, uniform_fan_in, LstmCellNodes, LstmCellParams, NodeId, ParameterSet,
    RealArray, Tape, GATES,
};
use crate::error::{Error, Result};

/// Noise head of the policy.
///
/// `Deterministic` is the RDPG actor. `Learned` adds a state-independent
/// log-sigma parameter per action dimension (the RSVG(0) actor). `Fixed`
/// pins sigma to a constant that is not a parameter, which gives the exact
/// deterministic limit at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaMode {
    Deterministic,
    Learned { init: f64 },
    Fixed { value: f64 },
}

impl SigmaMode {
    pub fn is_stochastic(&self) -> bool {
        !matches!(self, SigmaMode::Deterministic)
    }
}

/// Policy network: embedding -> core -> tanh head scaled to the action
/// bound, with an optional Gaussian noise path.
///
/// The per-step input is (observation, previous action) for recurrent
/// cores. The feedforward core sees only the current observation, which is
/// what makes it the memoryless baseline.
#[derive(Clone, Debug)]
pub struct ActorNetwork {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub bound: f64,
    pub embed_width: usize,
    pub hidden: usize,
    pub core: CoreKind,
    pub sigma: SigmaMode,
}

/// Tape handles for one bound actor parameter set.
pub struct ActorBinding {
    params: crate::autodiff::BoundParams,
    embed_w: NodeId,
    embed_b: NodeId,
    core: CoreNodes,
    head_w: NodeId,
    head_b: NodeId,
    /// Sigma as a (1, act_dim) node: exp(log_sigma) when learned, a
    /// constant when fixed, absent when deterministic.
    sigma: Option<NodeId>,
}

impl ActorBinding {
    /// Gradients for every bound parameter after a backward pass.
    pub fn gradients(&self, tape: &Tape) -> crate::autodiff::Gradients {
        self.params.gradients(tape)
    }
}

enum CoreNodes {
    Lstm(LstmCellNodes),
    Rnn { wx: NodeId, wh: NodeId, b: NodeId },
    Feedforward { w: NodeId, b: NodeId },
}

/// Recurrent state carried across steps; empty for the feedforward core.
pub struct CoreState {
    h: Option<NodeId>,
    c: Option<NodeId>,
}

/// Result of a full-sequence unroll: one action node per step.
pub struct ActorUnroll {
    pub actions: Vec<NodeId>,
    pub binding: ActorBinding,
}

/// Mean and (when stochastic) sigma produced by one session step.
#[derive(Clone, Debug)]
pub struct PolicyOut {
    pub mean: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl ActorNetwork {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        bound: f64,
        embed_width: usize,
        hidden: usize,
        core: CoreKind,
        sigma: SigmaMode,
    ) -> Result<Self> {
        if obs_dim == 0 || act_dim == 0 || embed_width == 0 || hidden == 0 {
            return Err(Error::invalid("ActorNetwork::new", "dimensions must be positive"));
        }
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::invalid("ActorNetwork::new", format!("bound {bound}")));
        }
        if let SigmaMode::Learned { init } = sigma {
            if !(init.is_finite() && init > 0.0) {
                return Err(Error::invalid("ActorNetwork::new", format!("sigma init {init}")));
            }
        }
        Ok(ActorNetwork { obs_dim, act_dim, bound, embed_width, hidden, core, sigma })
    }

    /// Width of the per-step input: the feedforward baseline sees only the
    /// observation, recurrent cores also get the previous action.
    pub fn input_width(&self) -> usize {
        match self.core {
            CoreKind::Feedforward => self.obs_dim,
            _ => self.obs_dim + self.act_dim,
        }
    }

    pub fn init_params(&self, rng: &mut impl Rng) -> ParameterSet {
        let mut p = ParameterSet::new();
        let input = self.input_width();
        p.insert("embed.w", uniform_fan_in(self.embed_width, input, rng)).unwrap();
        p.insert("embed.b", RealArray::zeros(1, self.embed_width)).unwrap();
        match self.core {
            CoreKind::Lstm => {
                let cell = LstmCellParams::init(self.embed_width, self.hidden, rng);
                cell.store(&mut p, "lstm").unwrap();
            }
            CoreKind::Rnn => {
                p.insert("rnn.wx", uniform_fan_in(self.hidden, self.embed_width, rng)).unwrap();
                p.insert("rnn.wh", uniform_fan_in(self.hidden, self.hidden, rng)).unwrap();
                p.insert("rnn.b", RealArray::zeros(1, self.hidden)).unwrap();
            }
            CoreKind::Feedforward => {
                p.insert("ff.w", uniform_fan_in(self.hidden, self.embed_width, rng)).unwrap();
                p.insert("ff.b", RealArray::zeros(1, self.hidden)).unwrap();
            }
        }
        p.insert("head.w", uniform_fan_in(self.act_dim, self.hidden, rng)).unwrap();
        p.insert("head.b", RealArray::zeros(1, self.act_dim)).unwrap();
        if let SigmaMode::Learned { init } = self.sigma {
            p.insert("log_sigma", RealArray::from_vec(1, self.act_dim, vec![init.ln(); self.act_dim]).unwrap())
                .unwrap();
        }
        p
    }

    pub fn bind(&self, tape: &mut Tape, params: &ParameterSet, namespace: &str) -> Result<ActorBinding> {
        let bound = params.bind(tape, namespace)?;
        self.resolve_binding(tape, bound)
    }

    /// Bind with the parameters as constants (no gradients), for target
    /// unrolls.
    pub fn bind_frozen(&self, tape: &mut Tape, params: &ParameterSet) -> Result<ActorBinding> {
        let bound = params.bind_const(tape);
        self.resolve_binding(tape, bound)
    }

    fn resolve_binding(&self, tape: &mut Tape, bound: crate::autodiff::BoundParams) -> Result<ActorBinding> {
        let core = match self.core {
            CoreKind::Lstm => {
                let mut wx = [NodeId(0); 4];
                let mut wh = [NodeId(0); 4];
                let mut b = [NodeId(0); 4];
                for k in 0..4 {
                    wx[k] = bound.node(&format!("lstm.wx_{}", GATES[k]))?;
                    wh[k] = bound.node(&format!("lstm.wh_{}", GATES[k]))?;
                    b[k] = bound.node(&format!("lstm.b_{}", GATES[k]))?;
                }
                CoreNodes::Lstm(LstmCellNodes { wx, wh, b })
            }
            CoreKind::Rnn => CoreNodes::Rnn {
                wx: bound.node("rnn.wx")?,
                wh: bound.node("rnn.wh")?,
                b: bound.node("rnn.b")?,
            },
            CoreKind::Feedforward => {
                CoreNodes::Feedforward { w: bound.node("ff.w")?, b: bound.node("ff.b")? }
            }
        };
        let sigma = match self.sigma {
            SigmaMode::Deterministic => None,
            SigmaMode::Learned { .. } => {
                let log_sigma = bound.node("log_sigma")?;
                Some(tape.exp(log_sigma)?)
            }
            SigmaMode::Fixed { value } => {
                Some(tape.constant(RealArray::from_vec(1, self.act_dim, vec![value; self.act_dim])?))
            }
        };
        Ok(ActorBinding {
            embed_w: bound.node("embed.w")?,
            embed_b: bound.node("embed.b")?,
            core,
            head_w: bound.node("head.w")?,
            head_b: bound.node("head.b")?,
            sigma,
            params: bound,
        })
    }

    fn initial_state(&self, tape: &mut Tape, batch: usize) -> CoreState {
        match self.core {
            CoreKind::Lstm => CoreState {
                h: Some(tape.constant(RealArray::zeros(batch, self.hidden))),
                c: Some(tape.constant(RealArray::zeros(batch, self.hidden))),
            },
            CoreKind::Rnn => {
                CoreState { h: Some(tape.constant(RealArray::zeros(batch, self.hidden))), c: None }
            }
            CoreKind::Feedforward => CoreState { h: None, c: None },
        }
    }

    /// One step of the mean path: embed -> core -> tanh head. Returns the
    /// (batch, act_dim) mean-action node; the noise path is applied by the
    /// caller where required.
    fn mean_step(
        &self,
        tape: &mut Tape,
        binding: &ActorBinding,
        state: &mut CoreState,
        obs: NodeId,
        prev_action: NodeId,
    ) -> Result<NodeId> {
        let input = match self.core {
            CoreKind::Feedforward => obs,
            _ => tape.concat_cols(&[obs, prev_action])?,
        };
        let pre = tape.affine(input, binding.embed_w, binding.embed_b)?;
        let embedded = tape.relu(pre)?;
        let features = match &binding.core {
            CoreNodes::Lstm(cell) => {
                let (h, c) = (state.h.unwrap(), state.c.unwrap());
                let (h2, c2) = lstm_cell(tape, embedded, h, c, cell)?;
                state.h = Some(h2);
                state.c = Some(c2);
                h2
            }
            CoreNodes::Rnn { wx, wh, b } => {
                let h = state.h.unwrap();
                let h2 = rnn_cell(tape, embedded, h, *wx, *wh, *b)?;
                state.h = Some(h2);
                h2
            }
            CoreNodes::Feedforward { w, b } => {
                let pre = tape.affine(embedded, *w, *b)?;
                tape.relu(pre)?
            }
        };
        let head = tape.affine(features, binding.head_w, binding.head_b)?;
        let squashed = tape.tanh(head)?;
        tape.scale(squashed, self.bound)
    }

    /// Unroll over a whole sequence. `observations[t]` is (batch, obs_dim)
    /// and `prev_actions[t]` is (batch, act_dim) with `prev_actions[0]`
    /// all zeros by the history convention. Stochastic modes require one
    /// (batch, act_dim) noise array per step; the deterministic mode
    /// forbids noise.
    pub fn unroll(
        &self,
        tape: &mut Tape,
        params: &ParameterSet,
        namespace: &str,
        observations: &[RealArray],
        prev_actions: &[RealArray],
        noise: Option<&[RealArray]>,
    ) -> Result<ActorUnroll> {
        let binding = self.bind(tape, params, namespace)?;
        self.unroll_bound(tape, binding, observations, prev_actions, noise)
    }

    /// Unroll with the parameters held constant (target networks).
    pub fn unroll_frozen(
        &self,
        tape: &mut Tape,
        params: &ParameterSet,
        observations: &[RealArray],
        prev_actions: &[RealArray],
        noise: Option<&[RealArray]>,
    ) -> Result<ActorUnroll> {
        let binding = self.bind_frozen(tape, params)?;
        self.unroll_bound(tape, binding, observations, prev_actions, noise)
    }

    fn unroll_bound(
        &self,
        tape: &mut Tape,
        binding: ActorBinding,
        observations: &[RealArray],
        prev_actions: &[RealArray],
        noise: Option<&[RealArray]>,
    ) -> Result<ActorUnroll> {
        let t_len = observations.len();
        if t_len == 0 {
            return Err(Error::invalid("ActorNetwork::unroll", "sequence length 0"));
        }
        if prev_actions.len() != t_len {
            return Err(Error::shape(
                "ActorNetwork::unroll",
                format!("{} observations vs {} previous actions", t_len, prev_actions.len()),
            ));
        }
        let batch = observations[0].rows();
        match (self.sigma.is_stochastic(), noise) {
            (true, Some(n)) if n.len() != t_len => {
                return Err(Error::shape(
                    "ActorNetwork::unroll",
                    format!("noise length {} vs sequence length {}", n.len(), t_len),
                ));
            }
            (true, None) => {
                return Err(Error::invalid("ActorNetwork::unroll", "stochastic mode requires noise"));
            }
            (false, Some(_)) => {
                return Err(Error::invalid("ActorNetwork::unroll", "deterministic mode forbids noise"));
            }
            _ => {}
        }

        let mut state = self.initial_state(tape, batch);
        let mut actions = Vec::with_capacity(t_len);
        for t in 0..t_len {
            if observations[t].shape() != (batch, self.obs_dim) {
                return Err(Error::shape(
                    "ActorNetwork::unroll",
                    format!("observation {t} is {:?}", observations[t].shape()),
                ));
            }
            if prev_actions[t].shape() != (batch, self.act_dim) {
                return Err(Error::shape(
                    "ActorNetwork::unroll",
                    format!("previous action {t} is {:?}", prev_actions[t].shape()),
                ));
            }
            let obs = tape.constant(observations[t].clone());
            let prev = tape.constant(prev_actions[t].clone());
            let mean = self.mean_step(tape, &binding, &mut state, obs, prev)?;
            let action = match (binding.sigma, noise) {
                (Some(sigma), Some(noise_seq)) => {
                    if noise_seq[t].shape() != (batch, self.act_dim) {
                        return Err(Error::shape(
                            "ActorNetwork::unroll",
                            format!("noise {t} is {:?}", noise_seq[t].shape()),
                        ));
                    }
                    let nu = tape.constant(noise_seq[t].clone());
                    let scaled = tape.mul_row(sigma, nu)?;
                    tape.add(mean, scaled)?
                }
                _ => mean,
            };
            actions.push(action);
        }
        Ok(ActorUnroll { actions, binding })
    }
}

/// Step-at-a-time forward pass for rollouts. Owns its tape; the recurrent
/// state lives on it between steps and no backward pass ever runs.
pub struct ActorSession<'n> {
    net: &'n ActorNetwork,
    tape: Tape,
    binding: ActorBinding,
    state: CoreState,
}

impl<'n> ActorSession<'n> {
    pub fn new(net: &'n ActorNetwork, params: &ParameterSet) -> Result<Self> {
        let mut tape = Tape::new();
        let binding = net.bind(&mut tape, params, "actor")?;
        let state = net.initial_state(&mut tape, 1);
        Ok(ActorSession { net, tape, binding, state })
    }

    /// Advance one step: returns the mean action and, for stochastic
    /// policies, the current sigma. Noise and clipping are applied by the
    /// caller, outside the gradient path.
    pub fn step(&mut self, observation: &[f64], prev_action: &[f64]) -> Result<PolicyOut> {
        if observation.len() != self.net.obs_dim || prev_action.len() != self.net.act_dim {
            return Err(Error::shape(
                "ActorSession::step",
                format!("obs {} / prev {}", observation.len(), prev_action.len()),
            ));
        }
        let obs = self.tape.constant(RealArray::row(observation)?);
        let prev = self.tape.constant(RealArray::row(prev_action)?);
        let mean = self.net.mean_step(&mut self.tape, &self.binding, &mut self.state, obs, prev)?;
        let sigma = self.binding.sigma.map(|s| self.tape.value(s).data().to_vec());
        Ok(PolicyOut { mean: self.tape.value(mean).data().to_vec(), sigma })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_actor(core: CoreKind, sigma: SigmaMode) -> ActorNetwork {
        ActorNetwork::new(3, 2, 1.5, 4, 3, core, sigma).unwrap()
    }

    fn zero_params(net: &ActorNetwork) -> ParameterSet {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = net.init_params(&mut rng);
        // Overwrite with zeros, keeping the layout.
        let names: Vec<String> = p.names().cloned().collect();
        for n in names {
            let shape = p.get(&n).unwrap().shape();
            let zero = RealArray::zeros(shape.0, shape.1);
            p = {
                let mut q = ParameterSet::new();
                for (name, arr) in p.iter() {
                    q.insert(name, if *name == n { zero.clone() } else { arr.clone() }).unwrap();
                }
                q
            };
        }
        p
    }

    fn seq(rows: &[&[f64]]) -> Vec<RealArray> {
        rows.iter().map(|r| RealArray::row(r).unwrap()).collect()
    }

    #[test]
    fn zero_weights_yield_zero_action() {
        let net = small_actor(CoreKind::Lstm, SigmaMode::Deterministic);
        let params = zero_params(&net);
        let mut tape = Tape::new();
        let obs = seq(&[&[0.4, -0.2, 1.0]]);
        let prev = seq(&[&[0.0, 0.0]]);
        let out = net.unroll(&mut tape, &params, "actor", &obs, &prev, None).unwrap();
        assert_eq!(tape.value(out.actions[0]).data(), &[0.0, 0.0]);
    }

    #[test]
    fn empty_sequence_rejected() {
        let net = small_actor(CoreKind::Lstm, SigmaMode::Deterministic);
        let params = zero_params(&net);
        let mut tape = Tape::new();
        assert!(net.unroll(&mut tape, &params, "actor", &[], &[], None).is_err());
    }

    #[test]
    fn causality_future_observation_cannot_leak() {
        let net = small_actor(CoreKind::Lstm, SigmaMode::Deterministic);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = net.init_params(&mut rng);
        let mut make_obs = |perturb: bool| -> Vec<RealArray> {
            let mut rows = vec![
                vec![0.1, 0.2, 0.3],
                vec![-0.5, 0.0, 0.4],
                vec![0.9, -0.1, 0.2],
                vec![0.3, 0.3, -0.3],
                vec![0.0, 1.0, 0.5],
            ];
            if perturb {
                rows[4][1] += 10.0;
            }
            rows.iter().map(|r| RealArray::row(r).unwrap()).collect()
        };
        let prev: Vec<RealArray> = (0..5).map(|_| RealArray::zeros(1, 2)).collect();

        let run = |obs: Vec<RealArray>| -> Vec<Vec<u64>> {
            let mut tape = Tape::new();
            let out = net.unroll(&mut tape, &params, "actor", &obs, &prev, None).unwrap();
            out.actions
                .iter()
                .map(|&a| tape.value(a).data().iter().map(|v| v.to_bits()).collect())
                .collect()
        };
        let base = run(make_obs(false));
        let pert = run(make_obs(true));
        for t in 0..4 {
            assert_eq!(base[t], pert[t], "action {t} must ignore a perturbation at t=5");
        }
        assert_ne!(base[4], pert[4], "the perturbed step itself should change");
    }

    #[test]
    fn sigma_zero_matches_deterministic_exactly() {
        let det = small_actor(CoreKind::Lstm, SigmaMode::Deterministic);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = det.init_params(&mut rng);
        let sto = small_actor(CoreKind::Lstm, SigmaMode::Fixed { value: 0.0 });

        let obs = seq(&[&[0.1, -0.3, 0.7], &[0.2, 0.2, -0.2]]);
        let prev = seq(&[&[0.0, 0.0], &[0.4, -0.4]]);
        let noise = seq(&[&[1.3, -0.8], &[0.5, 2.0]]);

        let mut t1 = Tape::new();
        let det_out = det.unroll(&mut t1, &params, "actor", &obs, &prev, None).unwrap();
        let mut t2 = Tape::new();
        let sto_out = sto.unroll(&mut t2, &params, "actor", &obs, &prev, Some(&noise)).unwrap();
        for t in 0..2 {
            let a = t1.value(det_out.actions[t]).data();
            let b = t2.value(sto_out.actions[t]).data();
            assert_eq!(a, b, "step {t}");
        }
    }

    #[test]
    fn outputs_respect_action_bounds() {
        let net = small_actor(CoreKind::Rnn, SigmaMode::Deterministic);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let params = net.init_params(&mut rng);
        for trial in 0..20 {
            let obs: Vec<RealArray> = (0..4)
                .map(|_| {
                    let row: Vec<f64> = (0..3).map(|_| rng.gen_range(-50.0..50.0)).collect();
                    RealArray::row(&row).unwrap()
                })
                .collect();
            let prev: Vec<RealArray> = (0..4)
                .map(|_| {
                    let row: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.5..1.5)).collect();
                    RealArray::row(&row).unwrap()
                })
                .collect();
            let mut tape = Tape::new();
            let out = net.unroll(&mut tape, &params, "actor", &obs, &prev, None).unwrap();
            for &a in &out.actions {
                for v in tape.value(a).data() {
                    assert!(v.abs() <= 1.5 + 1e-12, "trial {trial}: action {v} out of bounds");
                }
            }
        }
    }

    #[test]
    fn session_matches_unroll_bit_for_bit() {
        let net = small_actor(CoreKind::Lstm, SigmaMode::Deterministic);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let params = net.init_params(&mut rng);
        let obs_rows = [[0.2, -0.1, 0.5], [0.0, 0.3, -0.6], [0.7, 0.7, 0.1]];
        let prev_rows = [[0.0, 0.0], [0.1, -0.2], [-0.3, 0.5]];

        let mut session = ActorSession::new(&net, &params).unwrap();
        let session_out: Vec<Vec<u64>> = (0..3)
            .map(|t| {
                session
                    .step(&obs_rows[t], &prev_rows[t])
                    .unwrap()
                    .mean
                    .iter()
                    .map(|v| v.to_bits())
                    .collect()
            })
            .collect();

        let obs = seq(&[&obs_rows[0], &obs_rows[1], &obs_rows[2]]);
        let prev = seq(&[&prev_rows[0], &prev_rows[1], &prev_rows[2]]);
        let mut tape = Tape::new();
        let out = net.unroll(&mut tape, &params, "actor", &obs, &prev, None).unwrap();
        for t in 0..3 {
            let unrolled: Vec<u64> = tape.value(out.actions[t]).data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(session_out[t], unrolled, "step {t}");
        }
    }

    #[test]
    fn reparameterization_variance_is_zero_at_sigma_zero() {
        let net = small_actor(CoreKind::Lstm, SigmaMode::Fixed { value: 0.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let params = net.init_params(&mut rng);
        let obs = seq(&[&[0.3, 0.3, 0.3]]);
        let prev = seq(&[&[0.0, 0.0]]);
        let mut first: Option<Vec<u64>> = None;
        for draw in 0..8 {
            let noise = seq(&[&[draw as f64 * 0.77 - 2.0, -(draw as f64) * 0.31 + 1.0]]);
            let mut tape = Tape::new();
            let out = net.unroll(&mut tape, &params, "actor", &obs, &prev, Some(&noise)).unwrap();
            let bits: Vec<u64> = tape.value(out.actions[0]).data().iter().map(|v| v.to_bits()).collect();
            match &first {
                None => first = Some(bits),
                Some(f) => assert_eq!(f, &bits),
            }
        }
    }
}
