//! A one-engine-plus-two-thrusters lander descending onto a pad.
//!
//! Semi-implicit Euler: velocities update first, positions use the new
//! velocities. Only the initial lateral offset is random.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{parse_toml, run_controller, Environment, Transition};
use crate::error::{Error, Result};

pub const OBS_DIM: usize = 5;
pub const NUM_ACTIONS: usize = 4;
pub const LANDING_REWARD: f64 = 100.0;
pub const CRASH_REWARD: f64 = -100.0;
const LATERAL_VELOCITY_SCALE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LanderAction {
    Noop,
    Main,
    /// Pushes toward negative offsets.
    Left,
    Right,
}

impl LanderAction {
    pub const ALL: [LanderAction; NUM_ACTIONS] =
        [LanderAction::Noop, LanderAction::Main, LanderAction::Left, LanderAction::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Usage(format!("lander action {i} out of range")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LanderConfig {
    pub gravity: f64,
    pub main_thrust: f64,
    pub side_thrust: f64,
    pub main_cost: f64,
    pub side_cost: f64,
    pub safe_speed: f64,
    pub safe_offset: f64,
    pub step_cap: usize,
    pub initial_altitude: f64,
    pub initial_velocity: f64,
    pub initial_fuel: f64,
    /// Initial offset is uniform in `[-max_initial_offset, max_initial_offset]`.
    pub max_initial_offset: f64,
    /// Leaving the flight box (altitude above `ceiling` or |offset| above
    /// `offset_bound`) counts as a crash.
    pub ceiling: f64,
    pub offset_bound: f64,
}

impl Default for LanderConfig {
    fn default() -> Self {
        LanderConfig {
            gravity: 0.05,
            main_thrust: 0.12,
            side_thrust: 0.04,
            main_cost: 0.3,
            side_cost: 0.03,
            safe_speed: 0.5,
            safe_offset: 0.5,
            step_cap: 500,
            initial_altitude: 10.0,
            initial_velocity: 0.0,
            initial_fuel: 60.0,
            max_initial_offset: 2.0,
            ceiling: 20.0,
            offset_bound: 4.0,
        }
    }
}

impl LanderConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gravity", self.gravity),
            ("main_thrust", self.main_thrust),
            ("side_thrust", self.side_thrust),
            ("main_cost", self.main_cost),
            ("side_cost", self.side_cost),
            ("safe_speed", self.safe_speed),
            ("safe_offset", self.safe_offset),
            ("initial_altitude", self.initial_altitude),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.initial_fuel.is_finite() && self.initial_fuel >= 0.0) {
            return Err(Error::config("initial_fuel must be non-negative"));
        }
        if !(self.max_initial_offset.is_finite() && self.max_initial_offset >= 0.0) {
            return Err(Error::config("max_initial_offset must be non-negative"));
        }
        if self.ceiling.partial_cmp(&self.initial_altitude) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::config("ceiling must exceed initial_altitude"));
        }
        if self.offset_bound.partial_cmp(&self.max_initial_offset) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::config("offset_bound must exceed max_initial_offset"));
        }
        if !self.initial_velocity.is_finite() {
            return Err(Error::config("initial_velocity must be finite"));
        }
        if self.step_cap == 0 {
            return Err(Error::config("step_cap must be at least 1"));
        }
        Ok(())
    }

    /// Flat keys named after the fields; missing keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: LanderConfig = parse_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Lowest possible episode return: every step fires the main engine and
    /// the episode still ends in a crash.
    pub fn min_return(&self) -> f64 {
        CRASH_REWARD - self.main_cost * self.step_cap as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LanderState {
    pub altitude: f64,
    pub velocity: f64,
    pub fuel: f64,
    pub offset: f64,
    pub lateral_velocity: f64,
}

#[derive(Clone, Debug)]
pub struct LanderEnv {
    config: LanderConfig,
    state: LanderState,
    steps: usize,
    done: bool,
}

impl LanderEnv {
    pub fn new(config: LanderConfig) -> Result<Self> {
        config.validate()?;
        let state = LanderState {
            altitude: config.initial_altitude,
            velocity: config.initial_velocity,
            fuel: config.initial_fuel,
            offset: 0.0,
            lateral_velocity: 0.0,
        };
        Ok(LanderEnv {
            config,
            state,
            steps: 0,
            done: true,
        })
    }

    pub fn config(&self) -> &LanderConfig {
        &self.config
    }

    pub fn state(&self) -> LanderState {
        self.state
    }

    /// Each component divided by a scale that maps its typical range to about [-1, 1].
    pub fn observation(&self) -> Vec<f64> {
        let s = &self.state;
        let c = &self.config;
        let fuel_scale = if c.initial_fuel > 0.0 { c.initial_fuel } else { 1.0 };
        let offset_scale = if c.max_initial_offset > 0.0 { c.max_initial_offset } else { 1.0 };
        vec![
            s.altitude / c.initial_altitude,
            s.velocity,
            s.fuel / fuel_scale,
            s.offset / offset_scale,
            s.lateral_velocity / LATERAL_VELOCITY_SCALE,
        ]
    }

    /// Inverse of [`observation`](Self::observation) for hand-written controllers.
    pub fn state_from_observation(config: &LanderConfig, obs: &[f64]) -> LanderState {
        let fuel_scale = if config.initial_fuel > 0.0 { config.initial_fuel } else { 1.0 };
        let offset_scale = if config.max_initial_offset > 0.0 { config.max_initial_offset } else { 1.0 };
        LanderState {
            altitude: obs[0] * config.initial_altitude,
            velocity: obs[1],
            fuel: obs[2] * fuel_scale,
            offset: obs[3] * offset_scale,
            lateral_velocity: obs[4] * LATERAL_VELOCITY_SCALE,
        }
    }
}

impl Environment for LanderEnv {
    fn observation_dim(&self) -> usize {
        OBS_DIM
    }

    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let c = &self.config;
        let m = c.max_initial_offset;
        let offset = if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
        self.state = LanderState {
            altitude: c.initial_altitude,
            velocity: c.initial_velocity,
            fuel: c.initial_fuel,
            offset,
            lateral_velocity: 0.0,
        };
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, _rng: &mut R) -> Result<Transition> {
        if self.done {
            return Err(Error::Usage("landing is over; call reset".into()));
        }
        let mut action = LanderAction::from_index(action)?;
        let c = &self.config;
        let s = &mut self.state;
        if action != LanderAction::Noop && s.fuel < 1.0 {
            action = LanderAction::Noop;
        }
        let (thrust, lateral, cost) = match action {
            LanderAction::Noop => (0.0, 0.0, 0.0),
            LanderAction::Main => (c.main_thrust, 0.0, c.main_cost),
            LanderAction::Left => (0.0, -c.side_thrust, c.side_cost),
            LanderAction::Right => (0.0, c.side_thrust, c.side_cost),
        };
        if action != LanderAction::Noop {
            s.fuel -= 1.0;
        }
        s.velocity += thrust - c.gravity;
        s.altitude += s.velocity;
        s.lateral_velocity += lateral;
        s.offset += s.lateral_velocity;
        self.steps += 1;

        let mut reward = -cost;
        if s.altitude <= 0.0 {
            s.altitude = 0.0;
            let safe = s.velocity.abs() <= c.safe_speed && s.offset.abs() <= c.safe_offset;
            reward += if safe { LANDING_REWARD } else { CRASH_REWARD };
            self.done = true;
        } else if s.altitude > c.ceiling || s.offset.abs() > c.offset_bound || self.steps >= c.step_cap {
            reward += CRASH_REWARD;
            self.done = true;
        }
        Ok(Transition {
            observation: self.observation(),
            reward,
            done: self.done,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HoverReport {
    pub episodes: usize,
    pub landing_rate: f64,
    pub mean_return: f64,
    pub mean_length: f64,
    pub min_return: f64,
    pub max_return: f64,
}

/// Rolls out `controller` for `episodes` episodes and summarizes them.
pub fn optimal_hover_check<R, P>(config: &LanderConfig, episodes: usize, rng: &mut R, mut controller: P) -> Result<HoverReport>
where
    R: Rng + ?Sized,
    P: FnMut(&[f64], &mut R) -> usize,
{
    if episodes == 0 {
        return Err(Error::config("optimal_hover_check needs at least one episode"));
    }
    let mut env = LanderEnv::new(config.clone())?;
    let (mut landed, mut total, mut length) = (0usize, 0.0, 0usize);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..episodes {
        let rewards = run_controller(&mut env, rng, &mut controller)?;
        let ret: f64 = rewards.iter().sum();
        if rewards.last().is_some_and(|&r| r > 0.0) {
            landed += 1;
        }
        total += ret;
        length += rewards.len();
        lo = lo.min(ret);
        hi = hi.max(ret);
    }
    let n = episodes as f64;
    Ok(HoverReport {
        episodes,
        landing_rate: landed as f64 / n,
        mean_return: total / n,
        mean_length: length as f64 / n,
        min_return: lo,
        max_return: hi,
    })
}

/// Hand-written controller: brakes to a descent rate that shrinks near the
/// ground, otherwise steers the lateral velocity toward the pad.
pub fn bang_bang_controller(config: &LanderConfig, obs: &[f64]) -> LanderAction {
    let s = LanderEnv::state_from_observation(config, obs);
    let max_descent = if s.altitude < 2.0 { 0.25 } else { 0.4 };
    if s.velocity < -max_descent {
        return LanderAction::Main;
    }
    let target = (-0.05 * s.offset).clamp(-0.08, 0.08);
    let err = target - s.lateral_velocity;
    if err > 0.5 * config.side_thrust {
        LanderAction::Right
    } else if err < -0.5 * config.side_thrust {
        LanderAction::Left
    } else {
        LanderAction::Noop
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fresh(rng: &mut ChaCha8Rng) -> LanderEnv {
        let mut env = LanderEnv::new(LanderConfig::default()).unwrap();
        env.reset(rng);
        env
    }

    #[test]
    fn reset_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut env = LanderEnv::new(LanderConfig::default()).unwrap();
        for _ in 0..100 {
            let o = env.reset(&mut rng);
            assert_eq!(o.len(), OBS_DIM);
            assert_eq!(env.state().altitude, 10.0);
            assert!(env.state().offset.abs() <= 2.0);
            assert!(o.iter().all(|x| x.abs() <= 1.0));
        }
        let a = LanderEnv::new(LanderConfig::default()).unwrap().reset(&mut ChaCha8Rng::seed_from_u64(5));
        let b = LanderEnv::new(LanderConfig::default()).unwrap().reset(&mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn single_step_dynamics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut env = fresh(&mut rng);
        let tr = env.step(LanderAction::Noop.index(), &mut rng).unwrap();
        assert!((env.state().velocity + 0.05).abs() < 1e-15);
        assert!((env.state().altitude - 9.95).abs() < 1e-15);
        assert_eq!((tr.reward, tr.done), (0.0, false));

        let mut env = fresh(&mut rng);
        let tr = env.step(LanderAction::Main.index(), &mut rng).unwrap();
        assert!((env.state().velocity - 0.07).abs() < 1e-15);
        assert_eq!(tr.reward, -0.3);
        assert_eq!(env.state().fuel, 59.0);

        let mut env = fresh(&mut rng);
        let before = env.state().offset;
        let tr = env.step(LanderAction::Left.index(), &mut rng).unwrap();
        assert!((env.state().lateral_velocity + 0.04).abs() < 1e-15);
        assert!((env.state().offset - (before - 0.04)).abs() < 1e-15);
        assert_eq!(tr.reward, -0.03);
    }

    #[test]
    fn free_fall_crashes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut env = fresh(&mut rng);
        let mut t = 0;
        loop {
            let v = env.state().velocity;
            let tr = env.step(LanderAction::Noop.index(), &mut rng).unwrap();
            t += 1;
            // no thrust: exactly one gravity step of velocity change
            assert_eq!(env.state().velocity, v - 0.05);
            if tr.done {
                assert_eq!(tr.reward, CRASH_REWARD);
                break;
            }
            assert_eq!(tr.reward, 0.0);
        }
        // Σ_{k=1..n} 0.05k ≥ 10 first holds at n = 20
        assert_eq!(t, 20);
        assert!((env.state().velocity + 1.0).abs() < 1e-12);
        assert!(env.step(0, &mut rng).is_err());
    }

    #[test]
    fn empty_tank_degrades_to_noop() {
        let cfg = LanderConfig {
            initial_fuel: 0.0,
            ..LanderConfig::default()
        };
        let mut env = LanderEnv::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        env.reset(&mut rng);
        let tr = env.step(LanderAction::Main.index(), &mut rng).unwrap();
        assert_eq!(tr.reward, 0.0);
        assert!((env.state().velocity + 0.05).abs() < 1e-15);
        assert_eq!(env.state().fuel, 0.0);
    }

    #[test]
    fn step_cap_is_a_crash() {
        let cfg = LanderConfig {
            step_cap: 3,
            ..LanderConfig::default()
        };
        let mut env = LanderEnv::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        env.reset(&mut rng);
        env.step(1, &mut rng).unwrap();
        env.step(1, &mut rng).unwrap();
        let tr = env.step(1, &mut rng).unwrap();
        assert!(tr.done);
        assert!((tr.reward - (CRASH_REWARD - 0.3)).abs() < 1e-12);
    }

    #[test]
    fn leaving_the_flight_box_is_a_crash() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut env = fresh(&mut rng);
        let mut t = 0;
        let tr = loop {
            let tr = env.step(LanderAction::Main.index(), &mut rng).unwrap();
            t += 1;
            if tr.done {
                break tr;
            }
        };
        assert!(env.state().altitude > 20.0);
        assert!((tr.reward - (CRASH_REWARD - 0.3)).abs() < 1e-12);
        // 10 + 0.07·n(n+1)/2 > 20 first holds at n = 17
        assert_eq!(t, 17);

        let cfg = LanderConfig {
            max_initial_offset: 0.0,
            initial_altitude: 19.0,
            ..LanderConfig::default()
        };
        let mut env = LanderEnv::new(cfg).unwrap();
        env.reset(&mut rng);
        let mut done = false;
        while !done {
            done = env.step(LanderAction::Right.index(), &mut rng).unwrap().done;
        }
        assert!(env.state().offset > 4.0 && env.state().altitude > 0.0);
    }

    #[test]
    fn flight_box_must_contain_the_start() {
        let low = LanderConfig {
            ceiling: 10.0,
            ..LanderConfig::default()
        };
        assert!(LanderEnv::new(low).is_err());
        let narrow = LanderConfig {
            offset_bound: 2.0,
            ..LanderConfig::default()
        };
        assert!(narrow.validate().is_err());
    }

    #[test]
    fn always_noop_never_lands() {
        let cfg = LanderConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = optimal_hover_check(&cfg, 100, &mut rng, |_, _| 0).unwrap();
        assert_eq!(r.landing_rate, 0.0);
        assert_eq!(r.mean_return, -100.0);
        assert_eq!(r.mean_length, 20.0);
    }

    #[test]
    fn bang_bang_controller_lands() {
        let cfg = LanderConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = optimal_hover_check(&cfg, 1000, &mut rng, |o, _| bang_bang_controller(&cfg, o).index()).unwrap();
        assert!(r.landing_rate > 0.9, "{r:?}");
    }

    #[test]
    fn random_policy_returns_within_bounds_and_mostly_crashes() {
        let cfg = LanderConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = optimal_hover_check(&cfg, 2000, &mut rng, |_, rng| rng.random_range(0..NUM_ACTIONS)).unwrap();
        assert!(r.min_return >= cfg.min_return() && r.max_return <= LANDING_REWARD, "{r:?}");
        assert!(r.landing_rate < 0.1, "{r:?}");
    }

    #[test]
    fn trajectories_are_reproducible() {
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut env = fresh(&mut rng);
            let mut states = vec![env.state()];
            for k in 0..40 {
                let tr = env.step(k % NUM_ACTIONS, &mut rng).unwrap();
                states.push(env.state());
                if tr.done {
                    break;
                }
            }
            states
        };
        assert_eq!(run(11), run(11));
    }

    #[test]
    fn config_from_toml() {
        let cfg = LanderConfig::from_toml("gravity = 0.04\nstep_cap = 100").unwrap();
        assert_eq!(cfg.gravity, 0.04);
        assert_eq!(cfg.step_cap, 100);
        assert_eq!(cfg.main_thrust, 0.12);
        assert!(matches!(LanderConfig::from_toml("gravty = 0.04"), Err(Error::Config(_))));
        assert!(matches!(LanderConfig::from_toml("gravity = -1.0"), Err(Error::Config(_))));
    }
}
