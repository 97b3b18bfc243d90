//! Pole balancing on a cart, with closed-form dynamics integrated by
//! semi-implicit Euler. The action is a horizontal force on the cart.

use serde::{Deserialize, Serialize};

use super::{Env, StepOutcome};
use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Physical constants and termination thresholds. All overridable from the
/// `[env]` config section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length (the pivot-to-center distance the dynamics use).
    pub pole_half_length: f64,
    pub force_mag: f64,
    /// Integration step in seconds.
    pub dt: f64,
    pub angle_threshold: f64,
    pub x_threshold: f64,
    pub horizon: u64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            force_mag: 10.0,
            dt: 0.02,
            angle_threshold: 0.21,
            x_threshold: 2.4,
            horizon: 1000,
        }
    }
}

/// State is `[x, x_dot, theta, theta_dot]`, which is also the observation.
pub struct CartPole {
    params: CartPoleParams,
    state: [f64; 4],
    steps: u64,
}

impl CartPole {
    pub fn new(params: CartPoleParams) -> Self {
        CartPole { params, state: [0.0; 4], steps: 0 }
    }

    pub fn params(&self) -> &CartPoleParams {
        &self.params
    }

    /// Places the cart in an explicit state; used by tests.
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
    }

    fn violated(&self) -> bool {
        let [x, _, theta, _] = self.state;
        theta.abs() >= self.params.angle_threshold || x.abs() >= self.params.x_threshold
    }
}

impl Env for CartPole {
    fn obs_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_bounds(&self) -> (f64, f64) {
        (-self.params.force_mag, self.params.force_mag)
    }

    fn horizon(&self) -> u64 {
        self.params.horizon
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let mut s = SeedStream::new(seed);
        for v in self.state.iter_mut() {
            *v = s.next_unit() * 0.1 - 0.05;
        }
        self.steps = 0;
        Ok(self.state.to_vec())
    }

    fn step(&mut self, action: &[f64], _budget: u64) -> Result<StepOutcome> {
        if action.len() != 1 {
            return Err(Error::argument(format!(
                "cartpole takes a 1-dimensional action, got {}",
                action.len()
            )));
        }
        let p = self.params;
        let force = action[0].clamp(-p.force_mag, p.force_mag);
        let [x, x_dot, theta, theta_dot] = self.state;

        let total_mass = p.cart_mass + p.pole_mass;
        let polemass_length = p.pole_mass * p.pole_half_length;
        let cos = libm::cos(theta);
        let sin = libm::sin(theta);
        let temp = (force + polemass_length * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (p.gravity * sin - cos * temp)
            / (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total_mass));
        let x_acc = temp - polemass_length * theta_acc * cos / total_mass;

        // Semi-implicit: velocities first, then positions with the new
        // velocities.
        let x_dot = x_dot + p.dt * x_acc;
        let x = x + p.dt * x_dot;
        let theta_dot = theta_dot + p.dt * theta_acc;
        let theta = theta + p.dt * theta_dot;

        self.state = [x, x_dot, theta, theta_dot];
        if self.state.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("cartpole state diverged to non-finite values"));
        }
        self.steps += 1;

        let (reward, done) = if self.violated() {
            (0.0, true)
        } else {
            (1.0, self.steps >= p.horizon)
        };
        Ok(StepOutcome { obs: self.state.to_vec(), reward, done, steps_taken: 1 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::rollout;

    #[test]
    fn upright_equilibrium_survives_one_step() {
        let mut env = CartPole::new(CartPoleParams::default());
        env.reset(0).unwrap();
        env.set_state([0.0; 4]);
        let out = env.step(&[0.0], 1).unwrap();
        assert_eq!(out.reward, 1.0);
        assert!(!out.done);
    }

    #[test]
    fn over_threshold_angle_terminates_with_zero_reward() {
        let mut env = CartPole::new(CartPoleParams::default());
        env.reset(0).unwrap();
        env.set_state([0.0, 0.0, 0.25, 0.0]);
        let out = env.step(&[0.0], 1).unwrap();
        assert!(out.done);
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn reset_is_seed_deterministic() {
        let mut a = CartPole::new(CartPoleParams::default());
        let mut b = CartPole::new(CartPoleParams::default());
        assert_eq!(a.reset(42).unwrap(), b.reset(42).unwrap());
        assert_ne!(a.reset(1).unwrap(), b.reset(2).unwrap());
    }

    /// Regression constant: random-policy average return over 100 episodes,
    /// seed 0. Measured once with the reference build and frozen.
    #[test]
    fn random_policy_reference_return() {
        let mut total = 0.0;
        for ep in 0..100u64 {
            let mut env = CartPole::new(CartPoleParams::default());
            let mut policy_stream = SeedStream::new(crate::rng::mix_seeds(0, &[ep]));
            let r = rollout(
                &mut env,
                &mut |_obs| Ok(vec![policy_stream.next_unit() * 20.0 - 10.0]),
                crate::rng::mix_seeds(0, &[7, ep]),
                None,
            )
            .unwrap();
            total += r.total_return;
        }
        let mean = total / 100.0;
        // Frozen reference value; see test comment above.
        assert!((mean - REFERENCE_RANDOM_RETURN).abs() < 1e-9, "mean {mean}");
    }

    const REFERENCE_RANDOM_RETURN: f64 = 24.29;

    #[test]
    fn replayed_actions_reproduce_return_bitwise() {
        let run = || {
            let mut env = CartPole::new(CartPoleParams::default());
            let mut t = 0u64;
            rollout(
                &mut env,
                &mut |_obs| {
                    t += 1;
                    Ok(vec![if t % 3 == 0 { 4.0 } else { -2.0 }])
                },
                99,
                None,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.total_return.to_bits(), b.total_return.to_bits());
        assert_eq!(a.steps, b.steps);
    }
}
