use rand::Rng;

use super::CoreKind;
use crate::autodiff::{
    lstm_cell, rnn_cell, uniform_fan_in, LstmCellNodes, LstmCellParams, NodeId, ParameterSet,
    RealArray, Tape, GATES,
};
use crate::error::{Error, Result};

/// Action-value network: per step it embeds (observation, previous
/// action, action), runs the core, and reads out one scalar.
///
/// The previous action arrives through the history convention and the
/// current action is the Q argument; the feedforward core drops the
/// previous action. q_t depends only on the history prefix and a_t.
#[derive(Clone, Debug)]
pub struct CriticNetwork {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub embed_width: usize,
    pub hidden: usize,
    pub core: CoreKind,
}

/// Per-step action inputs for a critic unroll: stored arrays from replay,
/// or nodes already on the tape (fresh actor outputs, watched constants).
pub enum ActionInput<'a> {
    Stored(&'a [RealArray]),
    Nodes(&'a [NodeId]),
}

pub struct CriticBinding {
    embed_w: NodeId,
    embed_b: NodeId,
    core: CriticCoreNodes,
    head_w: NodeId,
    head_b: NodeId,
}

enum CriticCoreNodes {
    Lstm(LstmCellNodes),
    Rnn { wx: NodeId, wh: NodeId, b: NodeId },
    Feedforward { w: NodeId, b: NodeId },
}

/// Result of a critic unroll: one (batch, 1) Q node per step.
pub struct CriticUnroll {
    pub q: Vec<NodeId>,
}

impl CriticNetwork {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        embed_width: usize,
        hidden: usize,
        core: CoreKind,
    ) -> Result<Self> {
        if obs_dim == 0 || act_dim == 0 || embed_width == 0 || hidden == 0 {
            return Err(Error::invalid("CriticNetwork::new", "dimensions must be positive"));
        }
        Ok(CriticNetwork { obs_dim, act_dim, embed_width, hidden, core })
    }

    pub fn input_width(&self) -> usize {
        match self.core {
            CoreKind::Feedforward => self.obs_dim + self.act_dim,
            _ => self.obs_dim + 2 * self.act_dim,
        }
    }

    pub fn init_params(&self, rng: &mut impl Rng) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("embed.w", uniform_fan_in(self.embed_width, self.input_width(), rng)).unwrap();
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
        p.insert("head.w", uniform_fan_in(1, self.hidden, rng)).unwrap();
        p.insert("head.b", RealArray::zeros(1, 1)).unwrap();
        p
    }

    pub fn bind(&self, tape: &mut Tape, params: &ParameterSet, namespace: &str) -> Result<CriticBinding> {
        let bound = params.bind(tape, namespace)?;
        self.resolve_binding(bound)
    }

    /// Bind with the parameters as constants (no gradients): target
    /// critics, and the critic inside an actor update.
    pub fn bind_frozen(&self, tape: &mut Tape, params: &ParameterSet) -> Result<CriticBinding> {
        let bound = params.bind_const(tape);
        self.resolve_binding(bound)
    }

    fn resolve_binding(&self, bound: crate::autodiff::BoundParams) -> Result<CriticBinding> {
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
                CriticCoreNodes::Lstm(LstmCellNodes { wx, wh, b })
            }
            CoreKind::Rnn => CriticCoreNodes::Rnn {
                wx: bound.node("rnn.wx")?,
                wh: bound.node("rnn.wh")?,
                b: bound.node("rnn.b")?,
            },
            CoreKind::Feedforward => {
                CriticCoreNodes::Feedforward { w: bound.node("ff.w")?, b: bound.node("ff.b")? }
            }
        };
        Ok(CriticBinding {
            embed_w: bound.node("embed.w")?,
            embed_b: bound.node("embed.b")?,
            core,
            head_w: bound.node("head.w")?,
            head_b: bound.node("head.b")?,
        })
    }

    /// Unroll Q over a sequence. All three sequences must share length T;
    /// actions may be stored arrays or existing tape nodes.
    pub fn unroll(
        &self,
        tape: &mut Tape,
        params: &ParameterSet,
        namespace: &str,
        observations: &[RealArray],
        prev_actions: &[RealArray],
        actions: ActionInput<'_>,
    ) -> Result<CriticUnroll> {
        let binding = self.bind(tape, params, namespace)?;
        self.unroll_bound(tape, &binding, observations, prev_actions, actions)
    }

    /// Unroll with the parameters held constant.
    pub fn unroll_frozen(
        &self,
        tape: &mut Tape,
        params: &ParameterSet,
        observations: &[RealArray],
        prev_actions: &[RealArray],
        actions: ActionInput<'_>,
    ) -> Result<CriticUnroll> {
        let binding = self.bind_frozen(tape, params)?;
        self.unroll_bound(tape, &binding, observations, prev_actions, actions)
    }

    fn unroll_bound(
        &self,
        tape: &mut Tape,
        binding: &CriticBinding,
        observations: &[RealArray],
        prev_actions: &[RealArray],
        actions: ActionInput<'_>,
    ) -> Result<CriticUnroll> {
        let t_len = observations.len();
        if t_len == 0 {
            return Err(Error::invalid("CriticNetwork::unroll", "sequence length 0"));
        }
        let action_len = match &actions {
            ActionInput::Stored(a) => a.len(),
            ActionInput::Nodes(a) => a.len(),
        };
        if prev_actions.len() != t_len || action_len != t_len {
            return Err(Error::shape(
                "CriticNetwork::unroll",
                format!("lengths differ: {} obs, {} prev, {} actions", t_len, prev_actions.len(), action_len),
            ));
        }
        let batch = observations[0].rows();
        let mut state = self.initial_state(tape, batch);
        let mut q = Vec::with_capacity(t_len);
        for t in 0..t_len {
            if observations[t].shape() != (batch, self.obs_dim)
                || prev_actions[t].shape() != (batch, self.act_dim)
            {
                return Err(Error::shape(
                    "CriticNetwork::unroll",
                    format!("step {t} shapes {:?} / {:?}", observations[t].shape(), prev_actions[t].shape()),
                ));
            }
            let obs = tape.constant(observations[t].clone());
            let prev = tape.constant(prev_actions[t].clone());
            let action = match &actions {
                ActionInput::Stored(arr) => {
                    if arr[t].shape() != (batch, self.act_dim) {
                        return Err(Error::shape(
                            "CriticNetwork::unroll",
                            format!("action {t} is {:?}", arr[t].shape()),
                        ));
                    }
                    tape.constant(arr[t].clone())
                }
                ActionInput::Nodes(ids) => {
                    if tape.value(ids[t]).shape() != (batch, self.act_dim) {
                        return Err(Error::shape(
                            "CriticNetwork::unroll",
                            format!("action node {t} is {:?}", tape.value(ids[t]).shape()),
                        ));
                    }
                    ids[t]
                }
            };
            q.push(self.q_step(tape, binding, &mut state, obs, prev, action)?);
        }
        Ok(CriticUnroll { q })
    }

    fn initial_state(&self, tape: &mut Tape, batch: usize) -> CriticState {
        match self.core {
            CoreKind::Lstm => CriticState {
                h: Some(tape.constant(RealArray::zeros(batch, self.hidden))),
                c: Some(tape.constant(RealArray::zeros(batch, self.hidden))),
            },
            CoreKind::Rnn => {
                CriticState { h: Some(tape.constant(RealArray::zeros(batch, self.hidden))), c: None }
            }
            CoreKind::Feedforward => CriticState { h: None, c: None },
        }
    }

    fn q_step(
        &self,
        tape: &mut Tape,
        binding: &CriticBinding,
        state: &mut CriticState,
        obs: NodeId,
        prev_action: NodeId,
        action: NodeId,
    ) -> Result<NodeId> {
        let input = match self.core {
            CoreKind::Feedforward => tape.concat_cols(&[obs, action])?,
            _ => tape.concat_cols(&[obs, prev_action, action])?,
        };
        let pre = tape.affine(input, binding.embed_w, binding.embed_b)?;
        let embedded = tape.relu(pre)?;
        let features = match &binding.core {
            CriticCoreNodes::Lstm(cell) => {
                let (h, c) = (state.h.unwrap(), state.c.unwrap());
                let (h2, c2) = lstm_cell(tape, embedded, h, c, cell)?;
                state.h = Some(h2);
                state.c = Some(c2);
                h2
            }
            CriticCoreNodes::Rnn { wx, wh, b } => {
                let h = state.h.unwrap();
                let h2 = rnn_cell(tape, embedded, h, *wx, *wh, *b)?;
                state.h = Some(h2);
                h2
            }
            CriticCoreNodes::Feedforward { w, b } => {
                let pre = tape.affine(embedded, *w, *b)?;
                tape.relu(pre)?
            }
        };
        tape.affine(features, binding.head_w, binding.head_b)
    }
}

struct CriticState {
    h: Option<NodeId>,
    c: Option<NodeId>,
}

/// Anything that can lay Q nodes on a tape for a sequence of actions. The
/// real critic implements this; tests plant closed-form action-value
/// functions to isolate the actor update.
pub trait ActionValueFn {
    fn q_nodes(
        &self,
        tape: &mut Tape,
        observations: &[RealArray],
        prev_actions: &[RealArray],
        actions: &[NodeId],
    ) -> Result<Vec<NodeId>>;
}

/// A critic network paired with a concrete parameter set.
pub struct CriticRef<'a> {
    pub net: &'a CriticNetwork,
    pub params: &'a ParameterSet,
}

impl ActionValueFn for CriticRef<'_> {
    /// Lays down the critic with its parameters as constants: inside an
    /// actor update the critic is held fixed, only the action path carries
    /// gradient.
    fn q_nodes(
        &self,
        tape: &mut Tape,
        observations: &[RealArray],
        prev_actions: &[RealArray],
        actions: &[NodeId],
    ) -> Result<Vec<NodeId>> {
        let unrolled = self.net.unroll_frozen(
            tape,
            self.params,
            observations,
            prev_actions,
            ActionInput::Nodes(actions),
        )?;
        Ok(unrolled.q)
    }
}

/// Gradient of the summed Q outputs with respect to every action input,
/// via one backward pass: element s of the result is d(sum_t q_t)/d(a_s).
/// Causality makes d(q_t)/d(a_s) vanish for s > t.
pub fn action_gradient(
    critic: &CriticNetwork,
    params: &ParameterSet,
    observations: &[RealArray],
    prev_actions: &[RealArray],
    actions: &[RealArray],
) -> Result<Vec<RealArray>> {
    let mut tape = Tape::new();
    let action_nodes: Vec<NodeId> =
        actions.iter().map(|a| tape.watched(a.clone())).collect();
    let unrolled = critic.unroll(
        &mut tape,
        params,
        "critic",
        observations,
        prev_actions,
        ActionInput::Nodes(&action_nodes),
    )?;
    let mut total: Option<NodeId> = None;
    for &q in &unrolled.q {
        let s = tape.sum(q)?;
        total = Some(match total {
            None => s,
            Some(acc) => tape.add(acc, s)?,
        });
    }
    tape.backward(total.unwrap(), &RealArray::scalar(1.0)?)?;
    Ok(action_nodes.iter().map(|&n| tape.grad_array(n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_critic(core: CoreKind) -> CriticNetwork {
        CriticNetwork::new(2, 1, 4, 3, core).unwrap()
    }

    fn rand_seq(rng: &mut ChaCha8Rng, t: usize, cols: usize) -> Vec<RealArray> {
        (0..t)
            .map(|_| {
                let row: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
                RealArray::row(&row).unwrap()
            })
            .collect()
    }

    #[test]
    fn zero_weights_give_zero_q() {
        let critic = small_critic(CoreKind::Lstm);
        let mut params = ParameterSet::new();
        {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            for (name, arr) in critic.init_params(&mut rng).iter() {
                params.insert(name, RealArray::zeros(arr.rows(), arr.cols())).unwrap();
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = rand_seq(&mut rng, 3, 2);
        let prev = rand_seq(&mut rng, 3, 1);
        let act = rand_seq(&mut rng, 3, 1);
        let mut tape = Tape::new();
        let out = critic
            .unroll(&mut tape, &params, "critic", &obs, &prev, ActionInput::Stored(&act))
            .unwrap();
        for &q in &out.q {
            assert_eq!(tape.value(q).data(), &[0.0]);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let critic = small_critic(CoreKind::Lstm);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = critic.init_params(&mut rng);
        let obs = rand_seq(&mut rng, 3, 2);
        let prev = rand_seq(&mut rng, 2, 1);
        let act = rand_seq(&mut rng, 3, 1);
        let mut tape = Tape::new();
        assert!(critic
            .unroll(&mut tape, &params, "critic", &obs, &prev, ActionInput::Stored(&act))
            .is_err());
    }

    #[test]
    fn causality_future_action_cannot_leak() {
        let critic = small_critic(CoreKind::Lstm);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = critic.init_params(&mut rng);
        let obs = rand_seq(&mut rng, 8, 2);
        let prev = rand_seq(&mut rng, 8, 1);
        let mut act = rand_seq(&mut rng, 8, 1);

        let run = |critic: &CriticNetwork, act: &[RealArray]| -> Vec<Vec<u64>> {
            let mut tape = Tape::new();
            let out = critic
                .unroll(&mut tape, &params, "critic", &obs, &prev, ActionInput::Stored(act))
                .unwrap();
            out.q
                .iter()
                .map(|&q| tape.value(q).data().iter().map(|v| v.to_bits()).collect())
                .collect()
        };
        let base = run(&critic, &act);
        act[6] = RealArray::row(&[5.0]).unwrap(); // perturb a_7 (1-indexed)
        let pert = run(&critic, &act);
        for t in 0..6 {
            assert_eq!(base[t], pert[t], "q_{} must ignore a perturbation at step 7", t + 1);
        }
        assert_ne!(base[6], pert[6]);
    }

    #[test]
    fn unroll_matches_step_by_step_oracle() {
        // Re-run the cells one step at a time outside the unroller and
        // compare against the batched unroll.
        let critic = small_critic(CoreKind::Lstm);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = critic.init_params(&mut rng);
        let obs = rand_seq(&mut rng, 3, 2);
        let prev = rand_seq(&mut rng, 3, 1);
        let act = rand_seq(&mut rng, 3, 1);

        let mut tape = Tape::new();
        let out = critic
            .unroll(&mut tape, &params, "critic", &obs, &prev, ActionInput::Stored(&act))
            .unwrap();
        let unrolled: Vec<f64> = out.q.iter().map(|&q| tape.value(q).data()[0]).collect();

        // Oracle: fresh tape per step, state threaded by value.
        let mut oracle = Vec::new();
        let mut h_val = RealArray::zeros(1, critic.hidden);
        let mut c_val = RealArray::zeros(1, critic.hidden);
        for t in 0..3 {
            let mut tape = Tape::new();
            let binding = critic.bind(&mut tape, &params, "critic").unwrap();
            let obs_n = tape.constant(obs[t].clone());
            let prev_n = tape.constant(prev[t].clone());
            let act_n = tape.constant(act[t].clone());
            let mut state = CriticState {
                h: Some(tape.constant(h_val.clone())),
                c: Some(tape.constant(c_val.clone())),
            };
            let q = critic.q_step(&mut tape, &binding, &mut state, obs_n, prev_n, act_n).unwrap();
            oracle.push(tape.value(q).data()[0]);
            h_val = tape.value(state.h.unwrap()).clone();
            c_val = tape.value(state.c.unwrap()).clone();
        }
        for t in 0..3 {
            assert!(
                (unrolled[t] - oracle[t]).abs() <= 1e-12,
                "step {t}: {} vs {}",
                unrolled[t],
                oracle[t]
            );
        }
    }

    #[test]
    fn action_gradient_is_causal() {
        let critic = small_critic(CoreKind::Lstm);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = critic.init_params(&mut rng);
        let obs = rand_seq(&mut rng, 2, 2);
        let prev = rand_seq(&mut rng, 2, 1);
        let act = rand_seq(&mut rng, 2, 1);

        // Seed restricted to q_1: gradient of q_1 alone w.r.t. a_2 is 0.
        let mut tape = Tape::new();
        let nodes: Vec<NodeId> = act.iter().map(|a| tape.watched(a.clone())).collect();
        let out = critic
            .unroll(&mut tape, &params, "critic", &obs, &prev, ActionInput::Nodes(&nodes))
            .unwrap();
        tape.backward(out.q[0], &RealArray::scalar(1.0).unwrap()).unwrap();
        assert_eq!(tape.grad_array(nodes[1]).data(), &[0.0]);
        assert_ne!(tape.grad_array(nodes[0]).data(), &[0.0]);
    }

    #[test]
    fn action_gradient_hand_computed_single_path() {
        // Zero every weight except one embedding row reading the action and
        // a matching head weight: with relu active, dq/da is the product of
        // the two live weights at every step, constant across t.
        let critic = CriticNetwork::new(1, 1, 2, 2, CoreKind::Feedforward).unwrap();
        let mut params = ParameterSet::new();
        {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            for (name, arr) in critic.init_params(&mut rng).iter() {
                params.insert(name, RealArray::zeros(arr.rows(), arr.cols())).unwrap();
            }
        }
        // Feedforward critic input is (obs, action): columns 0 and 1.
        let embed_w = RealArray::from_vec(2, 2, vec![0.0, 0.7, 0.0, 0.0]).unwrap();
        let ff_w = RealArray::from_vec(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let head_w = RealArray::from_vec(1, 2, vec![0.9, 0.0]).unwrap();
        let mut fixed = ParameterSet::new();
        for (name, arr) in params.iter() {
            let replaced = match name.as_str() {
                "embed.w" => embed_w.clone(),
                "ff.w" => ff_w.clone(),
                "head.w" => head_w.clone(),
                _ => arr.clone(),
            };
            fixed.insert(name, replaced).unwrap();
        }

        let obs: Vec<RealArray> = (0..3).map(|_| RealArray::row(&[0.2]).unwrap()).collect();
        let prev: Vec<RealArray> = (0..3).map(|_| RealArray::row(&[0.0]).unwrap()).collect();
        let act: Vec<RealArray> = (0..3).map(|_| RealArray::row(&[0.5]).unwrap()).collect();
        let grads = action_gradient(&critic, &fixed, &obs, &prev, &act).unwrap();
        // Chain: action -> 0.7 (embed, relu active since 0.35 > 0)
        //        -> 1.0 (ff, relu active) -> 0.9 (head) = 0.63.
        for g in &grads {
            assert!((g.data()[0] - 0.63).abs() < 1e-12, "got {}", g.data()[0]);
        }
    }
}
