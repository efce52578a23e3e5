use std::collections::BTreeMap;

use super::params::{Gradients, ParameterSet};
use crate::error::{Error, Result};

/// Adam hyperparameters. The step size differs between actor and critic;
/// the moment rates and epsilon never change in this crate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn with_alpha(alpha: f64) -> Self {
        AdamHyper { alpha, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self::with_alpha(1e-3)
    }
}

/// First/second moment accumulators plus the step counter, aligned with a
/// specific [`ParameterSet`] layout.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub hyper: AdamHyper,
    t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParameterSet, hyper: AdamHyper) -> Self {
        let m = params.iter().map(|(n, a)| (n.clone(), vec![0.0; a.len()])).collect();
        let v = params.iter().map(|(n, a)| (n.clone(), vec![0.0; a.len()])).collect();
        AdamState { hyper, t: 0, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn moments(&self, name: &str) -> Option<(&[f64], &[f64])> {
        Some((self.m.get(name)?.as_slice(), self.v.get(name)?.as_slice()))
    }

    pub(crate) fn restore(
        hyper: AdamHyper,
        t: u64,
        m: BTreeMap<String, Vec<f64>>,
        v: BTreeMap<String, Vec<f64>>,
    ) -> Self {
        AdamState { hyper, t, m, v }
    }
}

/// One Adam update with bias correction, in the descent direction for
/// minimization. Callers doing gradient ascent negate their gradients.
pub fn adam_step(params: &mut ParameterSet, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if grads.len() != state.m.len() || !params.names().eq(grads.keys()) {
        let missing: Vec<&String> = params.names().filter(|n| !grads.contains_key(*n)).collect();
        let extra: Vec<&String> = grads.keys().filter(|n| !params.contains(n)).collect();
        return Err(Error::invalid(
            "adam_step",
            format!("gradient keys do not match parameters (missing {missing:?}, extra {extra:?})"),
        ));
    }
    state.t += 1;
    let t = state.t;
    let h = state.hyper;
    let bc1 = 1.0 - h.beta1.powi(t as i32);
    let bc2 = 1.0 - h.beta2.powi(t as i32);
    for (name, arr) in params.iter_mut() {
        let g = &grads[name];
        if g.shape() != arr.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("gradient for {name:?} is {:?}, parameter is {:?}", g.shape(), arr.shape()),
            ));
        }
        let m = state.m.get_mut(name).expect("aligned state");
        let v = state.v.get_mut(name).expect("aligned state");
        let data = arr.data_mut();
        for i in 0..data.len() {
            let gi = g.data()[i];
            m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
            v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            data[i] -= h.alpha * m_hat / (v_hat.sqrt() + h.epsilon);
            if !data[i].is_finite() {
                return Err(Error::non_finite("adam_step", format!("parameter {name:?}[{i}]")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::RealArray;

    fn scalar_params(v: f64) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("theta", RealArray::scalar(v).unwrap()).unwrap();
        p
    }

    fn scalar_grad(g: f64) -> Gradients {
        let mut m = Gradients::new();
        m.insert("theta".into(), RealArray::scalar(g).unwrap());
        m
    }

    /// Scalar Adam transcription used as the independent reference.
    fn adam_reference(theta: f64, g: f64, steps: usize, h: AdamHyper) -> f64 {
        let (mut th, mut m, mut v) = (theta, 0.0, 0.0);
        for t in 1..=steps {
            m = h.beta1 * m + (1.0 - h.beta1) * g;
            v = h.beta2 * v + (1.0 - h.beta2) * g * g;
            let m_hat = m / (1.0 - h.beta1.powi(t as i32));
            let v_hat = v / (1.0 - h.beta2.powi(t as i32));
            th -= h.alpha * m_hat / (v_hat.sqrt() + h.epsilon);
        }
        th
    }

    #[test]
    fn zero_gradient_leaves_everything_unchanged() {
        let mut p = scalar_params(0.7);
        let mut st = AdamState::new(&p, AdamHyper::default());
        adam_step(&mut p, &scalar_grad(0.0), &mut st).unwrap();
        assert_eq!(p.get("theta").unwrap().data()[0], 0.7);
        let (m, v) = st.moments("theta").unwrap();
        assert_eq!((m[0], v[0]), (0.0, 0.0));
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_matches_scalar_reference() {
        let h = AdamHyper::with_alpha(1e-3);
        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(&p, h);
        adam_step(&mut p, &scalar_grad(0.5), &mut st).unwrap();
        let expect = adam_reference(0.0, 0.5, 1, h);
        let got = p.get("theta").unwrap().data()[0];
        assert!((got - expect).abs() < 1e-18, "{got} vs {expect}");
        // First step is approximately -alpha * sign(g), up to epsilon.
        assert!((got + 1e-3).abs() < 1e-7);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let h = AdamHyper::with_alpha(1e-3);
        let mut p = scalar_params(1.0);
        let mut st = AdamState::new(&p, h);
        let mut prev = 1.0;
        for _ in 0..2 {
            adam_step(&mut p, &scalar_grad(0.25), &mut st).unwrap();
            let cur = p.get("theta").unwrap().data()[0];
            assert!(cur < prev, "movement must follow -sign(g)");
            prev = cur;
        }
    }

    #[test]
    fn key_mismatch_rejected() {
        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(&p, AdamHyper::default());
        let mut g = Gradients::new();
        g.insert("not_theta".into(), RealArray::scalar(1.0).unwrap());
        assert!(adam_step(&mut p, &g, &mut st).is_err());
    }
}
