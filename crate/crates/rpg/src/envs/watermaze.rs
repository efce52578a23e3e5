//! Simplified Morris water maze: a unit-disk tank with an invisible
//! platform. Five consecutive steps on the platform teleport the agent to
//! a fresh random position while the platform stays put.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const PLATFORM_RADIUS: f64 = 0.12;
pub const PLATFORM_PLACEMENT_RADIUS: f64 = 0.8;
pub const SPEED_CAP: f64 = 0.2;
pub const MOMENTUM: f64 = 0.9;
pub const ACCEL_GAIN: f64 = 0.1;
pub const RESET_AFTER_STEPS: u32 = 5;
pub const HORIZON: usize = 200;

#[derive(Clone, Debug)]
pub struct WatermazeState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub platform: [f64; 2],
    /// Consecutive on-platform steps so far.
    pub streak: u32,
}

fn sample_disk(rng: &mut ChaCha8Rng, radius: f64) -> [f64; 2] {
    let r = radius * rng.gen_range(0.0..1.0_f64).sqrt();
    let angle = rng.gen_range(0.0..TAU);
    [r * angle.cos(), r * angle.sin()]
}

fn sample_agent_position(rng: &mut ChaCha8Rng, platform: &[f64; 2]) -> [f64; 2] {
    loop {
        let p = sample_disk(rng, 1.0);
        if !on_platform_at(&p, platform) {
            return p;
        }
    }
}

pub fn on_platform_at(pos: &[f64; 2], platform: &[f64; 2]) -> bool {
    let dx = pos[0] - platform[0];
    let dy = pos[1] - platform[1];
    dx * dx + dy * dy <= PLATFORM_RADIUS * PLATFORM_RADIUS
}

pub fn reset(rng: &mut ChaCha8Rng) -> WatermazeState {
    let platform = sample_disk(rng, PLATFORM_PLACEMENT_RADIUS);
    let pos = sample_agent_position(rng, &platform);
    WatermazeState { pos, vel: [0.0, 0.0], platform, streak: 0 }
}

/// Advance one step. `accel` must already be projected to the unit disk.
/// Returns (reward, was_on_platform_this_step).
pub fn step(state: &mut WatermazeState, accel: &[f64; 2], rng: &mut ChaCha8Rng) -> (f64, bool) {
    for i in 0..2 {
        state.vel[i] = MOMENTUM * state.vel[i] + ACCEL_GAIN * accel[i];
    }
    let speed = (state.vel[0] * state.vel[0] + state.vel[1] * state.vel[1]).sqrt();
    if speed > SPEED_CAP {
        let scale = SPEED_CAP / speed;
        state.vel[0] *= scale;
        state.vel[1] *= scale;
    }
    state.pos[0] += state.vel[0];
    state.pos[1] += state.vel[1];
    let r2 = state.pos[0] * state.pos[0] + state.pos[1] * state.pos[1];
    if r2 > 1.0 {
        let r = r2.sqrt();
        state.pos[0] /= r;
        state.pos[1] /= r;
        // Zero the radial velocity component against the tank wall.
        let radial = state.vel[0] * state.pos[0] + state.vel[1] * state.pos[1];
        state.vel[0] -= radial * state.pos[0];
        state.vel[1] -= radial * state.pos[1];
    }

    let on = on_platform_at(&state.pos, &state.platform);
    let reward = if on { 1.0 } else { 0.0 };
    if on {
        state.streak += 1;
        if state.streak >= RESET_AFTER_STEPS {
            state.pos = sample_agent_position(rng, &state.platform);
            state.vel = [0.0, 0.0];
            state.streak = 0;
        }
    } else {
        state.streak = 0;
    }
    (reward, on)
}

/// Observation: position, velocity and the on-platform indicator for the
/// position in the observation. The platform itself is never observable.
pub fn observe(state: &WatermazeState) -> Vec<f64> {
    let flag = if on_platform_at(&state.pos, &state.platform) { 1.0 } else { 0.0 };
    vec![state.pos[0], state.pos[1], state.vel[0], state.vel[1], flag]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn reset_places_agent_off_platform_inside_disk() {
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = reset(&mut rng);
            assert!(s.pos[0] * s.pos[0] + s.pos[1] * s.pos[1] <= 1.0);
            let pr = s.platform[0] * s.platform[0] + s.platform[1] * s.platform[1];
            assert!(pr.sqrt() <= PLATFORM_PLACEMENT_RADIUS);
            assert!(!on_platform_at(&s.pos, &s.platform));
        }
    }

    #[test]
    fn five_consecutive_steps_teleport_agent_not_platform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = reset(&mut rng);
        let platform = s.platform;
        // Park the agent on the platform with zero velocity.
        s.pos = platform;
        s.vel = [0.0, 0.0];
        for k in 0..5 {
            let (r, on) = step(&mut s, &[0.0, 0.0], &mut rng);
            assert_eq!(r, 1.0, "step {k}");
            assert!(on);
        }
        assert_eq!(s.platform, platform, "platform must stay in place");
        assert!(!on_platform_at(&s.pos, &s.platform), "agent must be teleported off");
        assert_eq!(s.vel, [0.0, 0.0]);
        assert_eq!(s.streak, 0);
    }

    #[test]
    fn far_from_platform_reward_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = reset(&mut rng);
        s.pos = [-s.platform[0], -s.platform[1]]; // opposite side
        if on_platform_at(&s.pos, &s.platform) {
            s.pos = [0.99, 0.0];
        }
        let (r, on) = step(&mut s, &[0.1, 0.0], &mut rng);
        assert_eq!(r, 0.0);
        assert!(!on);
    }

    #[test]
    fn boundary_projection_keeps_agent_in_tank() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = reset(&mut rng);
        s.pos = [0.999, 0.0];
        s.vel = [0.2, 0.0];
        step(&mut s, &[1.0, 0.0], &mut rng);
        assert!(s.pos[0] * s.pos[0] + s.pos[1] * s.pos[1] <= 1.0 + 1e-12);
        // Radial component has been zeroed.
        let radial = s.vel[0] * s.pos[0] + s.vel[1] * s.pos[1];
        assert!(radial.abs() < 1e-12);
    }
}
