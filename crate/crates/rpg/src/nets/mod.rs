//! Actor and critic networks over observation-action histories.
//!
//! Both networks share the same skeleton: an embedding layer (affine +
//! relu) over the per-step input, a core (LSTM, plain RNN, or a
//! feedforward layer for the memoryless baseline), and a head. The actor
//! head is tanh scaled to the action bounds, optionally plus learned
//! per-dimension Gaussian noise for the stochastic policy; the critic head
//! is a scalar linear readout per timestep.

mod actor;
pub mod checkpoint;
mod critic;

pub use actor::{ActorNetwork, ActorSession, ActorUnroll, PolicyOut, SigmaMode};
pub use critic::{ActionInput, ActionValueFn, CriticNetwork, CriticRef, CriticUnroll};

use crate::autodiff::ParameterSet;
use crate::error::{Error, Result};

/// Core selector: the recurrent cells carry history, the feedforward core
/// is the DDPG-style memoryless baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoreKind {
    Lstm,
    Rnn,
    Feedforward,
}

impl CoreKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(CoreKind::Lstm),
            "rnn" => Ok(CoreKind::Rnn),
            "feedforward" => Ok(CoreKind::Feedforward),
            other => Err(Error::invalid("CoreKind::parse", format!("unknown core {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CoreKind::Lstm => "lstm",
            CoreKind::Rnn => "rnn",
            CoreKind::Feedforward => "feedforward",
        }
    }
}

/// Live parameters plus their delayed target copy.
///
/// Immediately after construction the target equals the live set exactly;
/// afterwards only [`NetworkPair::soft_update`] moves it.
#[derive(Clone, Debug)]
pub struct NetworkPair {
    pub live: ParameterSet,
    pub target: ParameterSet,
}

impl NetworkPair {
    pub fn new(live: ParameterSet) -> Self {
        let target = live.clone();
        NetworkPair { live, target }
    }

    /// target <- tau * live + (1 - tau) * target, elementwise. The live
    /// set is never touched.
    pub fn soft_update(&mut self, tau_soft: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau_soft) {
            return Err(Error::invalid("soft_update", format!("tau_soft {tau_soft} outside [0, 1]")));
        }
        if tau_soft == 0.0 {
            return Ok(());
        }
        if tau_soft == 1.0 {
            self.target = self.live.clone();
            return Ok(());
        }
        for (name, target_arr) in self.target.iter_mut() {
            let live_arr = self.live.get(name)?;
            for (t, l) in target_arr.data_mut().iter_mut().zip(live_arr.data()) {
                *t = tau_soft * l + (1.0 - tau_soft) * *t;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::RealArray;

    fn pair_with(live: f64, target: f64) -> NetworkPair {
        let mut p = ParameterSet::new();
        p.insert("w", RealArray::scalar(live).unwrap()).unwrap();
        let mut pair = NetworkPair::new(p);
        pair.target = {
            let mut t = ParameterSet::new();
            t.insert("w", RealArray::scalar(target).unwrap()).unwrap();
            t
        };
        pair
    }

    #[test]
    fn target_equals_live_after_construction() {
        let mut p = ParameterSet::new();
        p.insert("w", RealArray::row(&[0.3, -0.7]).unwrap()).unwrap();
        let pair = NetworkPair::new(p);
        assert_eq!(pair.live.max_abs_diff(&pair.target), 0.0);
    }

    #[test]
    fn soft_update_boundary_cases() {
        let mut pair = pair_with(1.0, 0.0);
        pair.soft_update(0.0).unwrap();
        assert_eq!(pair.target.get("w").unwrap().data()[0], 0.0);

        pair.soft_update(0.25).unwrap();
        assert_eq!(pair.target.get("w").unwrap().data()[0], 0.25);

        pair.soft_update(1.0).unwrap();
        assert_eq!(pair.target.get("w").unwrap().data()[0], 1.0);
        // Live side is never written.
        assert_eq!(pair.live.get("w").unwrap().data()[0], 1.0);
    }

    #[test]
    fn soft_update_rejects_out_of_range_tau() {
        let mut pair = pair_with(1.0, 0.0);
        assert!(pair.soft_update(-0.1).is_err());
        assert!(pair.soft_update(1.1).is_err());
    }
}
