//! Deterministic MLP policies over flat parameter vectors.
//!
//! A policy is tanh-activated hidden layers over an (optionally
//! virtual-batch-normalized) observation, with either a clamped continuous
//! output or per-component discretized bins decided by argmax. Forward is a
//! pure function of `(spec, reference statistics, theta, obs)`.

use serde::{Deserialize, Serialize};

use crate::envs::Env;
use crate::error::{Error, Result};
use crate::rng::{self, mix_seeds, SeedStream};

/// Stabilizer added to reference variances before the square root.
pub const EPSILON_BN: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ActionMode {
    Continuous { action_dim: usize, low: f64, high: f64 },
    Discretized { action_dim: usize, bins: usize, low: f64, high: f64 },
}

impl ActionMode {
    pub fn action_dim(&self) -> usize {
        match *self {
            ActionMode::Continuous { action_dim, .. } => action_dim,
            ActionMode::Discretized { action_dim, .. } => action_dim,
        }
    }

    /// Width of the network's output layer.
    fn output_dim(&self) -> usize {
        match *self {
            ActionMode::Continuous { action_dim, .. } => action_dim,
            ActionMode::Discretized { action_dim, bins, .. } => action_dim * bins,
        }
    }
}

/// Architecture description; serializes under the `[policy]` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub obs_dim: usize,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    pub action_mode: ActionMode,
    /// Whether the input layer is virtual-batch-normalized. The trainable
    /// per-feature scale and shift live inside theta.
    pub vbn: bool,
}

impl PolicySpec {
    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 {
            return Err(Error::config("policy.obs_dim must be >= 1"));
        }
        if self.hidden.iter().any(|w| *w == 0) {
            return Err(Error::config("policy hidden widths must be >= 1"));
        }
        match self.action_mode {
            ActionMode::Continuous { action_dim, low, high } => {
                if action_dim == 0 {
                    return Err(Error::config("policy.action_dim must be >= 1"));
                }
                if !(low < high) {
                    return Err(Error::config("policy action bounds require low < high"));
                }
            }
            ActionMode::Discretized { action_dim, bins, low, high } => {
                if action_dim == 0 {
                    return Err(Error::config("policy.action_dim must be >= 1"));
                }
                if bins < 2 {
                    return Err(Error::config("policy.bins must be >= 2"));
                }
                if !(low < high) {
                    return Err(Error::config("policy action bounds require low < high"));
                }
            }
        }
        Ok(())
    }

    /// Affine layer dimensions `(fan_in, fan_out)` from input to output.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.obs_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.action_mode.output_dim()));
        dims
    }
}

/// Exact number of parameters a spec consumes: weights and biases of every
/// affine layer, plus per-feature scale and shift when VBN is on.
pub fn param_count(spec: &PolicySpec) -> usize {
    let vbn = if spec.vbn { 2 * spec.obs_dim } else { 0 };
    vbn + spec.layer_dims().iter().map(|(i, o)| i * o + o).sum::<usize>()
}

/// Per-component bin centers: `bins` equal-width intervals over
/// `[low, high]`, centers at `low + (k + 0.5) * (high - low) / bins`.
/// Returned as one row per action component.
pub fn discretize_bounds(
    action_dim: usize,
    bins: usize,
    low: f64,
    high: f64,
) -> Result<Vec<Vec<f64>>> {
    if bins < 2 {
        return Err(Error::argument("discretization requires bins >= 2"));
    }
    if !(low < high) {
        return Err(Error::argument("discretization requires low < high"));
    }
    let width = (high - low) / bins as f64;
    let row: Vec<f64> = (0..bins).map(|k| low + (k as f64 + 0.5) * width).collect();
    Ok(vec![row; action_dim])
}

/// Fixed reference batch for virtual batch normalization, chosen once at
/// training start. Immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBatch {
    observations: Vec<f64>,
    batch: usize,
    obs_dim: usize,
    mean: Vec<f64>,
    variance: Vec<f64>,
}

impl ReferenceBatch {
    /// Computes per-feature statistics from a flat row-major batch.
    pub fn from_observations(observations: Vec<f64>, obs_dim: usize) -> Result<Self> {
        if obs_dim == 0 || observations.is_empty() || observations.len() % obs_dim != 0 {
            return Err(Error::argument("reference batch shape mismatch"));
        }
        let batch = observations.len() / obs_dim;
        let mut mean = vec![0.0; obs_dim];
        for row in observations.chunks(obs_dim) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in mean.iter_mut() {
            *m /= batch as f64;
        }
        let mut variance = vec![0.0; obs_dim];
        for row in observations.chunks(obs_dim) {
            for ((v, x), m) in variance.iter_mut().zip(row).zip(&mean) {
                let dx = x - m;
                *v += dx * dx;
            }
        }
        for v in variance.iter_mut() {
            *v /= batch as f64;
        }
        Ok(ReferenceBatch { observations, batch, obs_dim, mean, variance })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn observations(&self) -> impl Iterator<Item = &[f64]> {
        self.observations.chunks(self.obs_dim)
    }
}

/// Collects a reference batch by rolling a uniformly random policy in `env`.
/// Deterministic given `(seed, batch_size)` and the environment definition.
pub fn build_reference(env: &mut dyn Env, seed: u64, batch_size: usize) -> Result<ReferenceBatch> {
    if batch_size == 0 {
        return Err(Error::argument("reference batch size must be >= 1"));
    }
    let obs_dim = env.obs_dim();
    let (low, high) = env.action_bounds();
    let action_dim = env.action_dim();
    let mut observations = Vec::with_capacity(batch_size * obs_dim);
    let mut episode = 0u64;
    while observations.len() < batch_size * obs_dim {
        let ep_seed = mix_seeds(seed, &[rng::domain::VBN, episode]);
        let mut actions = SeedStream::new(mix_seeds(seed, &[rng::domain::VBN, episode, 1]));
        let mut obs = env.reset(ep_seed)?;
        loop {
            observations.extend_from_slice(&obs);
            if observations.len() >= batch_size * obs_dim {
                break;
            }
            let action: Vec<f64> =
                (0..action_dim).map(|_| low + actions.next_unit() * (high - low)).collect();
            let out = env.step(&action, 1)?;
            if out.done {
                break;
            }
            obs = out.obs;
        }
        episode += 1;
    }
    observations.truncate(batch_size * obs_dim);
    ReferenceBatch::from_observations(observations, obs_dim)
}

/// A spec bound to its reference statistics, ready to run forward passes.
#[derive(Debug, Clone)]
pub struct Policy {
    spec: PolicySpec,
    reference: Option<ReferenceBatch>,
}

impl Policy {
    pub fn new(spec: PolicySpec, reference: Option<ReferenceBatch>) -> Result<Self> {
        spec.validate()?;
        if spec.vbn && reference.is_none() {
            return Err(Error::argument("vbn policy requires a reference batch"));
        }
        if let Some(r) = &reference {
            if r.obs_dim != spec.obs_dim {
                return Err(Error::argument("reference batch obs_dim mismatch"));
            }
        }
        Ok(Policy { spec, reference })
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.spec)
    }

    /// Deterministic forward pass: normalized input, tanh hidden layers,
    /// then clamped affine (continuous) or per-component argmax over bin
    /// scores (discretized; ties take the lowest bin).
    pub fn forward(&self, theta: &[f64], obs: &[f64]) -> Result<Vec<f64>> {
        let spec = &self.spec;
        if obs.len() != spec.obs_dim {
            return Err(Error::argument(format!(
                "observation has {} features, spec wants {}",
                obs.len(),
                spec.obs_dim
            )));
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("non-finite observation"));
        }
        if theta.len() != param_count(spec) {
            return Err(Error::argument(format!(
                "theta has {} parameters, spec wants {}",
                theta.len(),
                param_count(spec)
            )));
        }

        let mut pos = 0usize;
        let mut x: Vec<f64> = if spec.vbn {
            let reference = self.reference.as_ref().expect("checked in constructor");
            let gamma = &theta[pos..pos + spec.obs_dim];
            let beta = &theta[pos + spec.obs_dim..pos + 2 * spec.obs_dim];
            pos += 2 * spec.obs_dim;
            obs.iter()
                .enumerate()
                .map(|(i, &v)| {
                    let z = (v - reference.mean[i]) / (reference.variance[i] + EPSILON_BN).sqrt();
                    gamma[i] * z + beta[i]
                })
                .collect()
        } else {
            obs.to_vec()
        };

        let dims = spec.layer_dims();
        for (layer, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let weights = &theta[pos..pos + fan_in * fan_out];
            pos += fan_in * fan_out;
            let bias = &theta[pos..pos + fan_out];
            pos += fan_out;
            let last = layer == dims.len() - 1;
            let mut next = vec![0.0; fan_out];
            for (o, n) in next.iter_mut().enumerate() {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                let mut acc = bias[o];
                for (w, v) in row.iter().zip(&x) {
                    acc += w * v;
                }
                *n = if last { acc } else { libm::tanh(acc) };
            }
            x = next;
        }
        debug_assert_eq!(pos, theta.len());

        match spec.action_mode {
            ActionMode::Continuous { low, high, .. } => {
                Ok(x.iter().map(|v| v.clamp(low, high)).collect())
            }
            ActionMode::Discretized { action_dim, bins, low, high } => {
                let centers = discretize_bounds(action_dim, bins, low, high)?;
                let mut action = Vec::with_capacity(action_dim);
                for c in 0..action_dim {
                    let scores = &x[c * bins..(c + 1) * bins];
                    let mut best = 0usize;
                    for (k, s) in scores.iter().enumerate() {
                        if *s > scores[best] {
                            best = k;
                        }
                    }
                    action.push(centers[c][best]);
                }
                Ok(action)
            }
        }
    }
}

/// Spec-shaped view of a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyWeights {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    /// Per layer: (row-major weights with one row per output unit, biases).
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Splits a flat vector into spec-shaped weights.
pub fn unflatten(spec: &PolicySpec, theta: &[f64]) -> Result<PolicyWeights> {
    if theta.len() != param_count(spec) {
        return Err(Error::argument("theta length does not match spec"));
    }
    let mut pos = 0usize;
    let (gamma, beta) = if spec.vbn {
        let g = theta[pos..pos + spec.obs_dim].to_vec();
        let b = theta[pos + spec.obs_dim..pos + 2 * spec.obs_dim].to_vec();
        pos += 2 * spec.obs_dim;
        (g, b)
    } else {
        (Vec::new(), Vec::new())
    };
    let mut layers = Vec::new();
    for (fan_in, fan_out) in spec.layer_dims() {
        let w = theta[pos..pos + fan_in * fan_out].to_vec();
        pos += fan_in * fan_out;
        let b = theta[pos..pos + fan_out].to_vec();
        pos += fan_out;
        layers.push((w, b));
    }
    Ok(PolicyWeights { gamma, beta, layers })
}

/// Packs spec-shaped weights back into a flat vector. Inverse of
/// [`unflatten`].
pub fn flatten(weights: &PolicyWeights) -> Vec<f64> {
    let mut out = Vec::new();
    out.extend_from_slice(&weights.gamma);
    out.extend_from_slice(&weights.beta);
    for (w, b) in &weights.layers {
        out.extend_from_slice(w);
        out.extend_from_slice(b);
    }
    out
}

/// Deterministic initial parameters for a spec: VBN scale 1 and shift 0,
/// per-layer weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases 0.
pub fn init_params(spec: &PolicySpec, run_seed: u64) -> Vec<f64> {
    let mut stream = SeedStream::new(mix_seeds(run_seed, &[rng::domain::INIT]));
    let mut theta = Vec::with_capacity(param_count(spec));
    if spec.vbn {
        theta.extend(std::iter::repeat(1.0).take(spec.obs_dim));
        theta.extend(std::iter::repeat(0.0).take(spec.obs_dim));
    }
    for (fan_in, fan_out) in spec.layer_dims() {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            theta.push((stream.next_unit() * 2.0 - 1.0) * bound);
        }
        theta.extend(std::iter::repeat(0.0).take(fan_out));
    }
    theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{CartPole, CartPoleParams};
    use crate::noise::{self, NoiseTable};
    use proptest::prelude::*;

    fn continuous_spec(obs_dim: usize, hidden: Vec<usize>, action_dim: usize) -> PolicySpec {
        PolicySpec {
            obs_dim,
            hidden,
            action_mode: ActionMode::Continuous { action_dim, low: -1.0, high: 1.0 },
            vbn: false,
        }
    }

    #[test]
    fn param_count_examples() {
        let small = continuous_spec(3, vec![2], 1);
        assert_eq!(param_count(&small), 11);
        let with_vbn = PolicySpec { vbn: true, ..small };
        assert_eq!(param_count(&with_vbn), 17);
        // Discretized: 4 -> 64 -> 64 -> 2 components x 10 bins.
        let disc = PolicySpec {
            obs_dim: 4,
            hidden: vec![64, 64],
            action_mode: ActionMode::Discretized { action_dim: 2, bins: 10, low: -1.0, high: 1.0 },
            vbn: false,
        };
        assert_eq!(param_count(&disc), 4 * 64 + 64 + 64 * 64 + 64 + 64 * 20 + 20);
        assert_eq!(param_count(&disc), 5780);
    }

    #[test]
    fn discretize_bounds_examples() {
        let centers = discretize_bounds(1, 10, -1.0, 1.0).unwrap();
        let expected: Vec<f64> = (0..10).map(|k| -0.9 + 0.2 * k as f64).collect();
        for (c, e) in centers[0].iter().zip(&expected) {
            assert!((c - e).abs() < 1e-12);
        }
        let two = discretize_bounds(1, 2, 0.0, 1.0).unwrap();
        assert_eq!(two[0], vec![0.25, 0.75]);
        assert!(matches!(discretize_bounds(1, 1, 0.0, 1.0), Err(Error::Argument(_))));
        assert!(matches!(discretize_bounds(1, 4, 1.0, 1.0), Err(Error::Argument(_))));
    }

    #[test]
    fn zero_theta_gives_zero_continuous_action() {
        let spec = continuous_spec(4, vec![8, 8], 2);
        let policy = Policy::new(spec.clone(), None).unwrap();
        let theta = vec![0.0; param_count(&spec)];
        let action = policy.forward(&theta, &[0.3, -0.2, 1.0, 0.5]).unwrap();
        assert_eq!(action, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_theta_discretized_ties_take_lowest_bin() {
        let spec = PolicySpec {
            obs_dim: 2,
            hidden: vec![4],
            action_mode: ActionMode::Discretized { action_dim: 1, bins: 10, low: -1.0, high: 1.0 },
            vbn: false,
        };
        let policy = Policy::new(spec.clone(), None).unwrap();
        let theta = vec![0.0; param_count(&spec)];
        let action = policy.forward(&theta, &[0.5, -0.5]).unwrap();
        assert!((action[0] + 0.9).abs() < 1e-12, "got {}", action[0]);
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let spec = continuous_spec(3, vec![2], 1);
        let policy = Policy::new(spec.clone(), None).unwrap();
        let theta = vec![0.0; param_count(&spec)];
        assert!(policy.forward(&theta, &[0.0, 0.0]).is_err());
        assert!(policy.forward(&theta, &[0.0, f64::NAN, 0.0]).is_err());
        assert!(policy.forward(&theta[1..], &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn vbn_normalizes_the_reference_batch() {
        let mut env = CartPole::new(CartPoleParams::default());
        let reference = build_reference(&mut env, 1, 128).unwrap();
        assert_eq!(reference.batch_size(), 128);
        let obs_dim = 4;
        for feature in 0..obs_dim {
            let (mean, var) = (reference.mean()[feature], reference.variance()[feature]);
            assert!(var > 0.0);
            // Normalize the batch itself with gamma=1, beta=0.
            let z: Vec<f64> = reference
                .observations()
                .map(|row| (row[feature] - mean) / (var + EPSILON_BN).sqrt())
                .collect();
            let z_mean: f64 = z.iter().sum::<f64>() / z.len() as f64;
            let z_var: f64 = z.iter().map(|v| (v - z_mean) * (v - z_mean)).sum::<f64>()
                / z.len() as f64;
            let expected_var = 1.0 / (1.0 + EPSILON_BN / var);
            assert!(z_mean.abs() < 1e-10, "feature {feature} mean {z_mean}");
            assert!((z_var - expected_var).abs() < 1e-10, "feature {feature} var {z_var}");
        }
    }

    #[test]
    fn degenerate_variance_falls_back_to_epsilon() {
        // Constant observations: variance 0, normalization divides by
        // sqrt(epsilon) and stays finite.
        let reference =
            ReferenceBatch::from_observations(vec![2.0; 12], 3).unwrap();
        assert_eq!(reference.variance(), &[0.0, 0.0, 0.0]);
        let spec = PolicySpec { vbn: true, ..continuous_spec(3, vec![2], 1) };
        let policy = Policy::new(spec.clone(), Some(reference)).unwrap();
        let mut theta = vec![0.0; param_count(&spec)];
        theta[0] = 1.0; // gamma_0
        theta[6] = 1.0; // first hidden weight
        theta[14] = 1.0; // output weight
        let action = policy.forward(&theta, &[2.5, 2.0, 2.0]).unwrap();
        assert!(action[0].is_finite());
        // (2.5 - 2.0)/sqrt(eps) saturates the tanh, so the action pins at 1.
        assert!(action[0] > 0.99);
    }

    #[test]
    fn build_reference_is_deterministic() {
        let build = || {
            let mut env = CartPole::new(CartPoleParams::default());
            build_reference(&mut env, 7, 64).unwrap()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn forward_is_reproducible_bitwise() {
        let mut env = CartPole::new(CartPoleParams::default());
        let reference = build_reference(&mut env, 1, 128).unwrap();
        let spec = PolicySpec {
            obs_dim: 4,
            hidden: vec![16],
            action_mode: ActionMode::Continuous { action_dim: 1, low: -10.0, high: 10.0 },
            vbn: true,
        };
        let theta = init_params(&spec, 5);
        let policy = Policy::new(spec, Some(reference)).unwrap();
        let obs = [0.01, -0.02, 0.005, 0.03];
        let a = policy.forward(&theta, &obs).unwrap();
        let b = policy.forward(&theta, &obs).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    /// Discretized policies are piecewise constant in theta: small enough
    /// perturbations leave the action on a probe set unchanged.
    #[test]
    fn discretized_forward_is_piecewise_constant() {
        let spec = PolicySpec {
            obs_dim: 4,
            hidden: vec![8],
            action_mode: ActionMode::Discretized { action_dim: 1, bins: 10, low: -10.0, high: 10.0 },
            vbn: false,
        };
        let theta = init_params(&spec, 3);
        let policy = Policy::new(spec.clone(), None).unwrap();
        let mut probes = Vec::new();
        let mut s = SeedStream::new(17);
        for _ in 0..8 {
            probes.push(vec![
                s.next_normal() * 0.5,
                s.next_normal() * 0.5,
                s.next_normal() * 0.1,
                s.next_normal() * 0.5,
            ]);
        }
        let base: Vec<Vec<f64>> =
            probes.iter().map(|p| policy.forward(&theta, p).unwrap()).collect();
        let d = theta.len();
        let mut delta = 1e-3;
        let mut witness = None;
        'search: while delta > 1e-15 {
            let mut dirs = SeedStream::new(23);
            for _ in 0..20 {
                let mut dir: Vec<f64> = (0..d).map(|_| dirs.next_normal()).collect();
                let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in dir.iter_mut() {
                    *v *= delta / norm;
                }
                let perturbed: Vec<f64> = theta.iter().zip(&dir).map(|(t, e)| t + e).collect();
                for (p, b) in probes.iter().zip(&base) {
                    if policy.forward(&perturbed, p).unwrap() != *b {
                        delta /= 2.0;
                        continue 'search;
                    }
                }
            }
            witness = Some(delta);
            break;
        }
        assert!(witness.is_some(), "no stability radius found above 1e-15");
    }

    /// Parameter perturbations at sigma = 0.02 flip the discretized argmax
    /// on a probe set for a healthy fraction of sampled policies; the
    /// exploration signal ES relies on.
    #[test]
    fn perturbation_sensitivity_on_pole_balance() {
        let mut env = CartPole::new(CartPoleParams::default());
        let reference = build_reference(&mut env, 11, 128).unwrap();
        let spec = PolicySpec {
            obs_dim: 4,
            hidden: vec![16, 16],
            action_mode: ActionMode::Discretized { action_dim: 1, bins: 10, low: -10.0, high: 10.0 },
            vbn: true,
        };
        let theta = init_params(&spec, 29);
        let d = theta.len();
        let policy = Policy::new(spec, Some(reference)).unwrap();

        // Probe observations from random rollouts.
        let mut probe_env = CartPole::new(CartPoleParams::default());
        let mut probes = Vec::new();
        let mut ep = 0u64;
        let mut actions = SeedStream::new(41);
        while probes.len() < 32 {
            let mut obs = probe_env.reset(mix_seeds(31, &[ep])).unwrap();
            loop {
                probes.push(obs.clone());
                if probes.len() >= 32 {
                    break;
                }
                let out = probe_env.step(&[actions.next_unit() * 20.0 - 10.0], 1).unwrap();
                if out.done {
                    break;
                }
                obs = out.obs;
            }
            ep += 1;
        }

        let base: Vec<Vec<f64>> =
            probes.iter().map(|p| policy.forward(&theta, p).unwrap()).collect();
        let table = NoiseTable::build(4, d + 2000).unwrap();
        let sigma = 0.02;
        let mut stream = SeedStream::new(noise::ref_stream_seed(47, 0));
        let mut changed = 0usize;
        let trials = 1000;
        for _ in 0..trials {
            let r = noise::draw_ref(&table, d, &mut stream).unwrap();
            let eps = noise::materialize(&table, &r, d, 1.0).unwrap();
            let perturbed: Vec<f64> =
                theta.iter().zip(&eps).map(|(t, e)| t + sigma * e).collect();
            let differs = probes
                .iter()
                .zip(&base)
                .any(|(p, b)| policy.forward(&perturbed, p).unwrap() != *b);
            if differs {
                changed += 1;
            }
        }
        let fraction = changed as f64 / trials as f64;
        assert!(fraction >= 0.10, "only {fraction} of perturbed policies changed actions");
    }

    proptest! {
        #[test]
        fn flatten_unflatten_round_trip(
            obs_dim in 1usize..6,
            h1 in 1usize..8,
            h2 in 0usize..8,
            action_dim in 1usize..4,
            vbn in proptest::bool::ANY,
            seed in proptest::num::u64::ANY,
        ) {
            let hidden = if h2 == 0 { vec![h1] } else { vec![h1, h2] };
            let spec = PolicySpec {
                obs_dim,
                hidden,
                action_mode: ActionMode::Continuous { action_dim, low: -1.0, high: 1.0 },
                vbn,
            };
            let mut s = SeedStream::new(seed);
            let theta: Vec<f64> = (0..param_count(&spec)).map(|_| s.next_normal()).collect();
            let weights = unflatten(&spec, &theta).unwrap();
            prop_assert_eq!(flatten(&weights), theta);
        }
    }
}
