//! Point-mass reacher whose target is visible only in the first
//! observation of the episode.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const DT: f64 = 0.1;
pub const MOMENTUM: f64 = 0.9;
pub const ACCEL_GAIN: f64 = 0.1;
pub const MAX_ACCEL: f64 = 1.0;
pub const HORIZON: usize = 80;

#[derive(Clone, Debug)]
pub struct ReacherState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub target: [f64; 2],
}

pub fn reset(rng: &mut ChaCha8Rng) -> ReacherState {
    ReacherState {
        pos: [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
        vel: [0.0, 0.0],
        target: [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
    }
}

/// v' = 0.9 v + 0.1 a, p' = clamp(p + dt v') to the unit square. Returns
/// the reward -(distance to target) for the reached position.
pub fn step(state: &mut ReacherState, accel: &[f64; 2]) -> f64 {
    for i in 0..2 {
        state.vel[i] = MOMENTUM * state.vel[i] + ACCEL_GAIN * accel[i];
        state.pos[i] = (state.pos[i] + DT * state.vel[i]).clamp(0.0, 1.0);
    }
    -distance_to_target(state)
}

pub fn distance_to_target(state: &ReacherState) -> f64 {
    let dx = state.pos[0] - state.target[0];
    let dy = state.pos[1] - state.target[1];
    (dx * dx + dy * dy).sqrt()
}

/// Observation: position, velocity, target coordinates only on the first
/// step (zeros afterwards), and a first-step indicator.
pub fn observe(state: &ReacherState, first_step: bool) -> Vec<f64> {
    let (tx, ty, flag) =
        if first_step { (state.target[0], state.target[1], 1.0) } else { (0.0, 0.0, 0.0) };
    vec![state.pos[0], state.pos[1], state.vel[0], state.vel[1], tx, ty, flag]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_slots_zero_after_first_step() {
        let s = ReacherState { pos: [0.5, 0.5], vel: [0.0, 0.0], target: [0.9, 0.1] };
        let first = observe(&s, true);
        assert_eq!(&first[4..], &[0.9, 0.1, 1.0]);
        let later = observe(&s, false);
        assert_eq!(&later[4..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn frozen_at_target_scores_zero() {
        let mut s = ReacherState { pos: [0.4, 0.6], vel: [0.0, 0.0], target: [0.4, 0.6] };
        let r = step(&mut s, &[0.0, 0.0]);
        assert_eq!(r, 0.0);
    }
}
