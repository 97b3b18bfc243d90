//! A T-step decision chain with terminal-only reward.
//!
//! Each step presents a standard-normal observation and takes a binary
//! action; the "correct" action is the sign of the observation. Reward is
//! emitted only at the final step, as the fraction of correct actions over a
//! fixed number of evenly spaced scoring steps.
//!
//! Scoring a fixed number of steps (rather than all of them) keeps the
//! return's variance independent of the horizon. Padding steps still consume
//! observations and, for an action-sampling learner, still accumulate
//! score-function noise, so stretching the horizon isolates exactly the
//! estimator-variance effect the variance experiments measure.

use super::{Env, RolloutResult, StepOutcome};
use crate::error::{Error, Result};
use crate::rng::{mix_seeds, SeedStream};

/// Default number of scored steps.
pub const DEFAULT_SCORED_STEPS: u64 = 10;

pub struct ChainEnv {
    horizon: u64,
    scored_steps: u64,
    stream: SeedStream,
    t: u64,
    current_obs: f64,
    correct_count: u64,
}

impl ChainEnv {
    pub fn new(horizon: u64, scored_steps: u64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::argument("chain horizon must be >= 1"));
        }
        if scored_steps == 0 {
            return Err(Error::argument("chain scored_steps must be >= 1"));
        }
        Ok(ChainEnv {
            horizon,
            scored_steps: scored_steps.min(horizon),
            stream: SeedStream::new(0),
            t: 0,
            current_obs: 0.0,
            correct_count: 0,
        })
    }

    /// Whether step `t` counts toward the return: the `k` evenly spaced
    /// indices `floor(j * T / k)` for `j = 0..k`.
    fn scored(&self, t: u64) -> bool {
        let k = self.scored_steps;
        let horizon = self.horizon;
        // t is scored iff floor(j*T/k) == t for some j, i.e. the scored-index
        // count strictly below t+1 exceeds the count strictly below t.
        let below = |x: u64| ((x as u128 * k as u128) + horizon as u128 - 1) / horizon as u128;
        below(t + 1) > below(t)
    }

    pub fn scored_step_count(&self) -> u64 {
        self.scored_steps
    }
}

impl Env for ChainEnv {
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

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.stream = SeedStream::new(mix_seeds(seed, &[0x6368_6169_6e]));
        self.t = 0;
        self.correct_count = 0;
        self.current_obs = self.stream.next_normal();
        Ok(vec![self.current_obs])
    }

    fn step(&mut self, action: &[f64], _budget: u64) -> Result<StepOutcome> {
        if action.len() != 1 {
            return Err(Error::argument("chain takes a 1-dimensional action"));
        }
        let chose_positive = action[0] > 0.0;
        let correct = chose_positive == (self.current_obs > 0.0);
        if correct && self.scored(self.t) {
            self.correct_count += 1;
        }
        self.t += 1;
        let done = self.t >= self.horizon;
        let reward =
            if done { self.correct_count as f64 / self.scored_steps as f64 } else { 0.0 };
        self.current_obs = self.stream.next_normal();
        Ok(StepOutcome { obs: vec![self.current_obs], reward, done, steps_taken: 1 })
    }
}

/// Evaluates the deterministic linear policy `a = [w0 * x + w1 > 0]` on the
/// chain for one episode.
pub fn chain_eval(w: &[f64], horizon: u64, seed: u64) -> Result<RolloutResult> {
    if w.len() != 2 {
        return Err(Error::argument("chain policy takes exactly 2 parameters"));
    }
    let mut env = ChainEnv::new(horizon, DEFAULT_SCORED_STEPS)?;
    let (w0, w1) = (w[0], w[1]);
    super::rollout(
        &mut env,
        &mut |obs| Ok(vec![if w0 * obs[0] + w1 > 0.0 { 1.0 } else { -1.0 }]),
        seed,
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::rollout;

    #[test]
    fn always_correct_policy_scores_one() {
        let mut env = ChainEnv::new(100, 10).unwrap();
        let r = rollout(
            &mut env,
            &mut |obs| Ok(vec![if obs[0] > 0.0 { 1.0 } else { -1.0 }]),
            3,
            None,
        )
        .unwrap();
        assert_eq!(r.total_return, 1.0);
        assert_eq!(r.steps, 100);
    }

    #[test]
    fn always_wrong_policy_scores_zero() {
        let mut env = ChainEnv::new(100, 10).unwrap();
        let r = rollout(
            &mut env,
            &mut |obs| Ok(vec![if obs[0] > 0.0 { -1.0 } else { 1.0 }]),
            3,
            None,
        )
        .unwrap();
        assert_eq!(r.total_return, 0.0);
    }

    #[test]
    fn uniform_random_policy_scores_half() {
        let episodes = 10_000u64;
        let mut total = 0.0;
        for ep in 0..episodes {
            let mut env = ChainEnv::new(100, 10).unwrap();
            let mut coin = SeedStream::new(mix_seeds(5, &[ep]));
            let r = rollout(
                &mut env,
                &mut |_| Ok(vec![if coin.next_unit() < 0.5 { 1.0 } else { -1.0 }]),
                mix_seeds(6, &[ep]),
                None,
            )
            .unwrap();
            total += r.total_return;
        }
        let mean = total / episodes as f64;
        // Per-episode variance is 0.25/10; three standard errors of the mean.
        let se = (0.025f64 / episodes as f64).sqrt();
        assert!((mean - 0.5).abs() <= 3.0 * se, "mean {mean}, 3se {}", 3.0 * se);
    }

    #[test]
    fn scored_steps_are_evenly_spaced() {
        let env = ChainEnv::new(100, 10).unwrap();
        let scored: Vec<u64> = (0..100).filter(|&t| env.scored(t)).collect();
        assert_eq!(scored, vec![0, 10, 20, 30, 40, 50, 60, 70, 80, 90]);
        let tiny = ChainEnv::new(3, 10).unwrap();
        assert_eq!((0..3).filter(|&t| tiny.scored(t)).count(), 3);
    }

    #[test]
    fn chain_eval_is_seed_deterministic() {
        let a = chain_eval(&[0.4, -0.1], 50, 9).unwrap();
        let b = chain_eval(&[0.4, -0.1], 50, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps, 50);
        assert!(!a.truncated);
    }
}
