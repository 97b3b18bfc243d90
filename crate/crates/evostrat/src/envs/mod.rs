//! Desk-scale evaluation suite: black-box test functions, an episodic
//! pole-balance task, a delayed-reward decision chain, frame skipping, and
//! dynamic episode capping.
//!
//! Environments are deterministic state machines over `(seed, action
//! sequence)`; replaying a logged action sequence reproduces the return
//! bit-exactly. One instance runs per evaluation, so instances never need
//! to be shared across threads.

mod cartpole;
mod chain;

pub use cartpole::{CartPole, CartPoleParams};
pub use chain::{chain_eval, ChainEnv};

use crate::error::{Error, Result};

/// Outcome of one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutResult {
    /// Total undiscounted return F.
    pub total_return: f64,
    /// Underlying environment steps consumed.
    pub steps: u64,
    /// True when the episode was cut by the cap in force at rollout start.
    pub truncated: bool,
}

/// Result of advancing an environment.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// Underlying steps consumed by this call; in [1, budget].
    pub steps_taken: u64,
}

/// An episodic environment.
pub trait Env {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Per-component action bounds (same for every component).
    fn action_bounds(&self) -> (f64, f64);
    /// Natural episode length limit.
    fn horizon(&self) -> u64;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    /// Advances by at most `budget` underlying steps (`budget >= 1`).
    /// Plain environments take exactly one.
    fn step(&mut self, action: &[f64], budget: u64) -> Result<StepOutcome>;
}

/// Repeats each chosen action `skip` underlying steps, summing rewards.
/// Step accounting stays in underlying steps, so caps and step budgets mean
/// the same thing with or without skipping.
pub struct FrameSkip<E> {
    inner: E,
    skip: u64,
}

impl<E: Env> FrameSkip<E> {
    pub fn new(inner: E, skip: u64) -> Result<Self> {
        if skip == 0 {
            return Err(Error::argument("frame skip must be >= 1"));
        }
        Ok(FrameSkip { inner, skip })
    }
}

impl<E: Env> Env for FrameSkip<E> {
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }
    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }
    fn action_bounds(&self) -> (f64, f64) {
        self.inner.action_bounds()
    }
    fn horizon(&self) -> u64 {
        self.inner.horizon()
    }
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.inner.reset(seed)
    }
    fn step(&mut self, action: &[f64], budget: u64) -> Result<StepOutcome> {
        let repeats = self.skip.min(budget).max(1);
        let mut total_reward = 0.0;
        let mut taken = 0;
        let mut last;
        loop {
            let out = self.inner.step(action, 1)?;
            total_reward += out.reward;
            taken += out.steps_taken;
            last = out;
            if last.done || taken >= repeats {
                break;
            }
        }
        Ok(StepOutcome { obs: last.obs, reward: total_reward, done: last.done, steps_taken: taken })
    }
}

/// Runs one episode. `act` maps an observation to an action; `cap` bounds
/// the underlying step count. The cap in force at rollout start is never
/// exceeded.
pub fn rollout(
    env: &mut dyn Env,
    act: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    seed: u64,
    cap: Option<u64>,
) -> Result<RolloutResult> {
    let cap_steps = cap.unwrap_or(u64::MAX).max(1);
    let mut obs = env.reset(seed)?;
    let mut steps = 0u64;
    let mut total = 0.0;
    loop {
        let action = act(&obs)?;
        let out = env.step(&action, cap_steps - steps)?;
        steps += out.steps_taken;
        total += out.reward;
        if out.done {
            return Ok(RolloutResult { total_return: total, steps, truncated: false });
        }
        if steps >= cap_steps {
            return Ok(RolloutResult { total_return: total, steps, truncated: true });
        }
        obs = out.obs;
    }
}

/// Standard black-box test functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlackboxKind {
    Sphere,
    Rosenbrock,
    Rastrigin,
}

/// Evaluates the negated test function, so larger is better:
///
/// - sphere: `sum x_i^2`
/// - rosenbrock: `sum 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2`
/// - rastrigin: `10 d + sum x_i^2 - 10 cos(2 pi x_i)`
pub fn blackbox_eval(kind: BlackboxKind, x: &[f64]) -> f64 {
    let v = match kind {
        BlackboxKind::Sphere => x.iter().map(|v| v * v).sum::<f64>(),
        BlackboxKind::Rosenbrock => x
            .windows(2)
            .map(|w| {
                let a = w[1] - w[0] * w[0];
                let b = 1.0 - w[0];
                100.0 * a * a + b * b
            })
            .sum::<f64>(),
        BlackboxKind::Rastrigin => {
            10.0 * x.len() as f64
                + x.iter()
                    .map(|v| v * v - 10.0 * libm::cos(2.0 * std::f64::consts::PI * v))
                    .sum::<f64>()
        }
    };
    -v
}

/// Dynamic episode cap: twice (by default) the running mean episode length.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeCap {
    m: u64,
    mean_steps: f64,
    factor: f64,
    floor: u64,
}

/// EMA weight for the observed episode length.
const CAP_EMA_BETA: f64 = 0.1;

impl EpisodeCap {
    pub fn new(factor: f64, floor: u64, initial_mean_steps: f64) -> Self {
        let mut cap = EpisodeCap { m: 1, mean_steps: initial_mean_steps, factor, floor };
        cap.recompute();
        cap
    }

    /// Cap in force, in steps.
    pub fn current(&self) -> u64 {
        self.m
    }

    pub fn mean_steps(&self) -> f64 {
        self.mean_steps
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn floor(&self) -> u64 {
        self.floor
    }

    /// Folds one observed episode length into the running mean and
    /// recomputes the cap.
    pub fn update(&mut self, observed_steps: u64) {
        self.mean_steps =
            (1.0 - CAP_EMA_BETA) * self.mean_steps + CAP_EMA_BETA * observed_steps as f64;
        self.recompute();
    }

    /// Restores a checkpointed cap verbatim.
    pub fn restore(factor: f64, floor: u64, mean_steps: f64) -> Self {
        let mut cap = EpisodeCap { m: 1, mean_steps, factor, floor };
        cap.recompute();
        cap
    }

    fn recompute(&mut self) {
        self.m = ((self.factor * self.mean_steps).round() as u64).max(self.floor).max(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blackbox_optima_are_zero() {
        assert_eq!(blackbox_eval(BlackboxKind::Sphere, &[0.0; 8]), 0.0);
        assert_eq!(blackbox_eval(BlackboxKind::Rosenbrock, &[1.0; 8]), 0.0);
        assert!(blackbox_eval(BlackboxKind::Rastrigin, &[0.0; 8]).abs() < 1e-12);
    }

    #[test]
    fn blackbox_is_negated() {
        assert!(blackbox_eval(BlackboxKind::Sphere, &[1.0, 2.0]) < 0.0);
        assert_eq!(blackbox_eval(BlackboxKind::Sphere, &[1.0, 2.0]), -5.0);
    }

    #[test]
    fn cap_examples() {
        let cap = EpisodeCap::new(2.0, 1, 100.0);
        assert_eq!(cap.current(), 200);
        let low = EpisodeCap::new(2.0, 50, 10.0);
        assert_eq!(low.current(), 50);
    }

    #[test]
    fn cap_converges_to_twice_stationary_length() {
        let mut cap = EpisodeCap::new(2.0, 1, 10.0);
        let stationary = 30u64;
        for _ in 0..50 {
            cap.update(stationary);
        }
        let target = 2.0 * stationary as f64;
        assert!(
            (cap.current() as f64 - target).abs() <= 0.01 * target,
            "cap {} vs target {target}",
            cap.current()
        );
    }

    struct CountEnv {
        t: u64,
        horizon: u64,
    }

    impl Env for CountEnv {
        fn obs_dim(&self) -> usize {
            1
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn action_bounds(&self) -> (f64, f64) {
            (-1.0, 1.0)
        }
        fn horizon(&self) -> u64 {
            self.horizon
        }
        fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
            self.t = 0;
            Ok(vec![0.0])
        }
        fn step(&mut self, _action: &[f64], _budget: u64) -> Result<StepOutcome> {
            self.t += 1;
            Ok(StepOutcome {
                obs: vec![self.t as f64],
                reward: 1.0,
                done: self.t >= self.horizon,
                steps_taken: 1,
            })
        }
    }

    #[test]
    fn rollout_truncation_hits_cap_exactly() {
        let mut env = CountEnv { t: 0, horizon: 1000 };
        let r = rollout(&mut env, &mut |_| Ok(vec![0.0]), 0, Some(37)).unwrap();
        assert!(r.truncated);
        assert_eq!(r.steps, 37);
        assert_eq!(r.total_return, 37.0);
    }

    #[test]
    fn frameskip_never_exceeds_cap() {
        let env = CountEnv { t: 0, horizon: 1000 };
        let mut skipped = FrameSkip::new(env, 4).unwrap();
        let r = rollout(&mut skipped, &mut |_| Ok(vec![0.0]), 0, Some(10)).unwrap();
        assert!(r.truncated);
        assert_eq!(r.steps, 10);
    }

    #[test]
    fn frameskip_bounds_decision_count() {
        let env = CountEnv { t: 0, horizon: 1000 };
        let mut skipped = FrameSkip::new(env, 4).unwrap();
        let mut decisions = 0u64;
        let r = rollout(
            &mut skipped,
            &mut |_| {
                decisions += 1;
                Ok(vec![0.0])
            },
            0,
            None,
        )
        .unwrap();
        assert_eq!(r.steps, 1000);
        assert_eq!(decisions, 250); // ceil(1000 / 4)
    }

    #[test]
    fn frameskip_zero_is_an_argument_error() {
        let env = CountEnv { t: 0, horizon: 10 };
        assert!(matches!(FrameSkip::new(env, 0), Err(Error::Argument(_))));
    }
}
