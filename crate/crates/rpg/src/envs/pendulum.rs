//! Pendulum swing-up without velocity observation.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const DT: f64 = 0.05;
pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const MAX_SPEED: f64 = 8.0;
pub const MAX_TORQUE: f64 = 2.0;
pub const HORIZON: usize = 200;

#[derive(Clone, Debug)]
pub struct PendulumState {
    /// Angle from upright, unwrapped.
    pub theta: f64,
    pub theta_dot: f64,
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    PI - (PI - theta).rem_euclid(2.0 * PI)
}

pub fn reset(rng: &mut ChaCha8Rng) -> PendulumState {
    PendulumState { theta: rng.gen_range(-PI..PI), theta_dot: rng.gen_range(-1.0..1.0) }
}

/// Angular acceleration for a given state and torque.
pub fn acceleration(theta: f64, torque: f64) -> f64 {
    -(3.0 * GRAVITY / (2.0 * LENGTH)) * (theta + PI).sin()
        + 3.0 / (MASS * LENGTH * LENGTH) * torque
}

/// Semi-implicit Euler step; returns the reward for the reached state.
pub fn step(state: &mut PendulumState, torque: f64) -> f64 {
    let accel = acceleration(state.theta, torque);
    state.theta_dot = (state.theta_dot + accel * DT).clamp(-MAX_SPEED, MAX_SPEED);
    state.theta += state.theta_dot * DT;
    let w = wrap_angle(state.theta);
    -(w * w + 0.1 * state.theta_dot * state.theta_dot + 0.001 * torque * torque)
}

/// Observation is angle only: (cos theta, sin theta). No velocity.
pub fn observe(state: &PendulumState) -> Vec<f64> {
    vec![state.theta.cos(), state.theta.sin()]
}
