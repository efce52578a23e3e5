//! Cart-pole swing-up with a hidden, episode-varying pole length and no
//! velocity observation.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const DT: f64 = 0.02;
pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
pub const MAX_FORCE: f64 = 10.0;
pub const X_LIMIT: f64 = 2.4;
pub const LENGTH_MIN: f64 = 0.5;
pub const LENGTH_MAX: f64 = 1.5;
pub const HORIZON: usize = 350;

#[derive(Clone, Debug)]
pub struct CartpoleState {
    pub x: f64,
    pub x_dot: f64,
    /// Angle from upright; starts near pi (hanging).
    pub theta: f64,
    pub theta_dot: f64,
    /// Hidden pole length, fixed for the episode, invisible to the agent.
    pub length: f64,
}

pub fn reset(rng: &mut ChaCha8Rng) -> CartpoleState {
    CartpoleState {
        x: 0.0,
        x_dot: 0.0,
        theta: PI + rng.gen_range(-0.05..0.05),
        theta_dot: rng.gen_range(-0.05..0.05),
        length: rng.gen_range(LENGTH_MIN..LENGTH_MAX),
    }
}

/// Accelerations (x_ddot, theta_ddot) for the classic cart-pole.
pub fn accelerations(state: &CartpoleState, force: f64) -> (f64, f64) {
    let total = CART_MASS + POLE_MASS;
    let (sin_t, cos_t) = state.theta.sin_cos();
    let temp = (force + POLE_MASS * state.length * state.theta_dot * state.theta_dot * sin_t) / total;
    let theta_ddot = (GRAVITY * sin_t - cos_t * temp)
        / (state.length * (4.0 / 3.0 - POLE_MASS * cos_t * cos_t / total));
    let x_ddot = temp - POLE_MASS * state.length * theta_ddot * cos_t / total;
    (x_ddot, theta_ddot)
}

/// Explicit Euler step (positions first, then velocities); the cart is
/// clamped to ±X_LIMIT with its velocity zeroed at the walls. Returns the
/// reward for the reached state.
pub fn step(state: &mut CartpoleState, force: f64) -> f64 {
    let (x_ddot, theta_ddot) = accelerations(state, force);
    state.x += DT * state.x_dot;
    state.x_dot += DT * x_ddot;
    state.theta += DT * state.theta_dot;
    state.theta_dot += DT * theta_ddot;
    if state.x.abs() > X_LIMIT {
        state.x = state.x.clamp(-X_LIMIT, X_LIMIT);
        state.x_dot = 0.0;
    }
    state.theta.cos() - 0.01 * state.x * state.x
}

/// Observation: cart position and pole angle, no velocities, no length.
pub fn observe(state: &CartpoleState) -> Vec<f64> {
    vec![state.x, state.theta.cos(), state.theta.sin()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_static_pole_scores_one() {
        let mut s = CartpoleState { x: 0.0, x_dot: 0.0, theta: 0.0, theta_dot: 0.0, length: 1.0 };
        let r = step(&mut s, 0.0);
        assert_eq!(r, 1.0);
        assert_eq!(s.theta, 0.0);
    }

    #[test]
    fn observation_hides_length_and_velocities() {
        let a = CartpoleState { x: 0.3, x_dot: 2.0, theta: 1.0, theta_dot: -3.0, length: 0.5 };
        let b = CartpoleState { x: 0.3, x_dot: -1.0, theta: 1.0, theta_dot: 0.7, length: 1.5 };
        assert_eq!(observe(&a), observe(&b));
    }

    #[test]
    fn wall_zeroes_cart_velocity() {
        let mut s =
            CartpoleState { x: 2.39, x_dot: 5.0, theta: PI, theta_dot: 0.0, length: 1.0 };
        step(&mut s, MAX_FORCE);
        assert_eq!(s.x, X_LIMIT);
        assert_eq!(s.x_dot, 0.0);
    }
}
