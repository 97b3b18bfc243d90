//! Gradient estimation from perturbed returns, fitness shaping, and
//! parameter updates.
//!
//! The one rule that everything here obeys: a generation's update is a pure,
//! deterministic fold over its result records in canonical (offset, sign)
//! order. Single-process runs, in-process workers and TCP workers all call
//! [`fold_generation`] with the same records and therefore produce bitwise
//! identical parameters.

use serde::{Deserialize, Serialize};

use crate::envs::{EpisodeCap, RolloutResult};
use crate::error::{Error, Result};
use crate::noise::{self, mirror_ref, NoiseTable, PerturbationRef, Sign};
use crate::rng::SeedStream;

/// Return shaping applied before the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shaping {
    /// Centered fractional ranks in [-0.5, 0.5]; the default.
    CenteredRanks,
    /// Use raw returns as utilities.
    Raw,
}

/// Ascent-direction rule applied to the gradient estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam_default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Hyperparameters of the estimator and update step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsConfig {
    /// Perturbation standard deviation. Fixed for the whole run.
    pub sigma: f64,
    /// Learning rate.
    pub alpha: f64,
    /// Number of antithetic pairs per generation (n = 2 * pop_pairs returns).
    pub pop_pairs: usize,
    /// Decoupled weight decay coefficient.
    pub l2_coeff: f64,
    pub shaping: Shaping,
    pub optimizer: OptimizerKind,
    /// Bernoulli keep-probability for subset perturbation; 1.0 disables
    /// masking entirely (no subset seeds are drawn).
    pub subset_density: f64,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig {
            sigma: 0.02,
            alpha: 0.01,
            pop_pairs: 32,
            l2_coeff: 0.005,
            shaping: Shaping::CenteredRanks,
            optimizer: OptimizerKind::adam_default(),
            subset_density: 1.0,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::config("es.sigma must be > 0"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::config("es.alpha must be > 0"));
        }
        if self.pop_pairs < 1 {
            return Err(Error::config("es.pop_pairs must be >= 1"));
        }
        if !(self.l2_coeff >= 0.0) {
            return Err(Error::config("es.l2_coeff must be >= 0"));
        }
        if !(self.subset_density > 0.0 && self.subset_density <= 1.0) {
            return Err(Error::config("es.subset_density must be in (0, 1]"));
        }
        match self.optimizer {
            OptimizerKind::SgdMomentum { momentum } => {
                if !(0.0..1.0).contains(&momentum) {
                    return Err(Error::config("es.momentum must be in [0, 1)"));
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if !(0.0..1.0).contains(&beta1)
                    || !(0.0..1.0).contains(&beta2)
                    || !(eps > 0.0)
                {
                    return Err(Error::config("es.adam parameters out of range"));
                }
            }
            OptimizerKind::Sgd => {}
        }
        Ok(())
    }
}

/// Flat parameter vector with its generation counter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub version: u64,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector { values, version: 0 }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct GradientEstimate {
    pub values: Vec<f64>,
    /// Number of evaluations combined into this estimate.
    pub n_used: usize,
}

/// Per-coordinate accumulators for the chosen optimizer.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd,
    SgdMomentum { velocity: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, step: u64 },
}

impl OptimizerState {
    pub fn new(kind: &OptimizerKind, d: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::SgdMomentum { .. } => {
                OptimizerState::SgdMomentum { velocity: vec![0.0; d] }
            }
            OptimizerKind::Adam { .. } => {
                OptimizerState::Adam { m: vec![0.0; d], v: vec![0.0; d], step: 0 }
            }
        }
    }

    /// Consumes a gradient and yields the ascent direction.
    fn step_direction(&mut self, kind: &OptimizerKind, g: &[f64]) -> Vec<f64> {
        match (self, kind) {
            (OptimizerState::Sgd, OptimizerKind::Sgd) => g.to_vec(),
            (OptimizerState::SgdMomentum { velocity }, OptimizerKind::SgdMomentum { momentum }) => {
                for (v, gi) in velocity.iter_mut().zip(g) {
                    *v = *momentum * *v + gi;
                }
                velocity.clone()
            }
            (OptimizerState::Adam { m, v, step }, OptimizerKind::Adam { beta1, beta2, eps }) => {
                *step += 1;
                let t = *step as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                let mut dir = vec![0.0; g.len()];
                for k in 0..g.len() {
                    m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                    v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                    dir[k] = (m[k] / bc1) / ((v[k] / bc2).sqrt() + eps);
                }
                dir
            }
            _ => unreachable!("optimizer state does not match configured kind"),
        }
    }
}

/// Centered fractional ranks: utilities in [-0.5, 0.5] that sum to zero,
/// with ties receiving the average of their rank positions. For a single
/// return the utility is 0.
pub fn centered_ranks(returns: &[f64]) -> Result<Vec<f64>> {
    if returns.is_empty() {
        return Err(Error::argument("centered_ranks requires at least one return"));
    }
    if returns.iter().any(|r| r.is_nan()) {
        return Err(Error::argument("centered_ranks: NaN in returns"));
    }
    let n = returns.len();
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| returns[a].partial_cmp(&returns[b]).expect("NaN screened above"));
    let mut utilities = vec![0.0; n];
    let denom = (n - 1) as f64;
    let mut i = 0;
    while i < n {
        // Run of tied values shares the average rank position.
        let mut j = i + 1;
        while j < n && returns[order[j]] == returns[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j - 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            utilities[idx] = avg_rank / denom - 0.5;
        }
        i = j;
    }
    Ok(utilities)
}

/// One perturbation with its (already shaped) utility.
#[derive(Debug, Clone)]
pub struct WeightedRef {
    pub pref: PerturbationRef,
    pub utility: f64,
}

/// Core combination: `g = 1/(n*sigma) * sum_i u_i * eps_i`, folded in
/// canonical ascending (offset, sign) order regardless of input order.
/// `n` is the number of entries, matching the population size.
pub fn es_gradient_entries(
    entries: &[WeightedRef],
    sigma: f64,
    subset_density: f64,
    table: &NoiseTable,
    d: usize,
) -> Result<GradientEstimate> {
    if entries.is_empty() {
        return Err(Error::argument("es_gradient requires at least one entry"));
    }
    if !(sigma > 0.0) {
        return Err(Error::argument("sigma must be > 0"));
    }
    let mut ordered: Vec<&WeightedRef> = entries.iter().collect();
    ordered.sort_by_key(|e| e.pref.sort_key());
    let mut acc = vec![0.0; d];
    for e in &ordered {
        let eps = noise::materialize(table, &e.pref, d, subset_density)?;
        for (a, x) in acc.iter_mut().zip(&eps) {
            *a += e.utility * x;
        }
    }
    let scale = 1.0 / (entries.len() as f64 * sigma);
    for a in acc.iter_mut() {
        *a *= scale;
    }
    Ok(GradientEstimate { values: acc, n_used: entries.len() })
}

/// An antithetic pair of shaped returns.
#[derive(Debug, Clone)]
pub struct PairSample {
    pub pos: PerturbationRef,
    pub pos_utility: f64,
    pub neg: PerturbationRef,
    pub neg_utility: f64,
}

/// Gradient estimate over antithetic pairs. Each `neg` must be the exact
/// mirror of its `pos`; utilities are expected to be shaped already (over
/// the flat list of all 2 * pop_pairs returns).
pub fn es_gradient(
    pairs: &[PairSample],
    cfg: &EsConfig,
    table: &NoiseTable,
    d: usize,
) -> Result<GradientEstimate> {
    if pairs.is_empty() {
        return Err(Error::argument("es_gradient requires at least one pair"));
    }
    let mut entries = Vec::with_capacity(pairs.len() * 2);
    for p in pairs {
        if p.neg != mirror_ref(p.pos) {
            return Err(Error::protocol(format!(
                "pair mismatch: {:?} is not the mirror of {:?}",
                p.neg, p.pos
            )));
        }
        entries.push(WeightedRef { pref: p.pos, utility: p.pos_utility });
        entries.push(WeightedRef { pref: p.neg, utility: p.neg_utility });
    }
    es_gradient_entries(&entries, cfg.sigma, cfg.subset_density, table, d)
}

/// Applies decoupled weight decay followed by the optimizer's ascent step:
/// `theta' = (1 - alpha * l2) * theta + alpha * step(g)`. Increments the
/// version counter. Aborts (never clamps) on a non-finite result.
pub fn apply_update(
    theta: &ParamVector,
    g: &GradientEstimate,
    cfg: &EsConfig,
    state: &mut OptimizerState,
) -> Result<ParamVector> {
    if theta.dim() != g.values.len() {
        return Err(Error::argument(format!(
            "gradient dimension {} does not match parameter dimension {}",
            g.values.len(),
            theta.dim()
        )));
    }
    if g.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite gradient estimate"));
    }
    let dir = state.step_direction(&cfg.optimizer, &g.values);
    let decay = 1.0 - cfg.alpha * cfg.l2_coeff;
    let values: Vec<f64> = theta
        .values
        .iter()
        .zip(&dir)
        .map(|(t, s)| decay * t + cfg.alpha * s)
        .collect();
    let out = ParamVector { values, version: theta.version + 1 };
    if !out.is_finite() {
        return Err(Error::numeric(format!(
            "non-finite parameters after update at generation {}",
            theta.version
        )));
    }
    Ok(out)
}

/// One evaluation's scalar outcome, keyed by the perturbation identity.
/// This is exactly what crosses the wire per evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub offset: u64,
    pub sign: Sign,
    pub ret: f64,
    pub steps: u64,
    pub truncated: bool,
}

impl EvalRecord {
    pub fn sort_key(&self) -> (u64, Sign) {
        (self.offset, self.sign)
    }
}

/// All evaluation records of one generation. Any node holding this plus the
/// run seed reconstructs the identical next parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationUpdate {
    pub generation: u64,
    pub records: Vec<EvalRecord>,
}

/// Mutable optimization state owned by one logical updater.
#[derive(Debug, Clone)]
pub struct EsState {
    pub theta: ParamVector,
    pub opt: OptimizerState,
    pub cap: Option<EpisodeCap>,
    pub timesteps_total: u64,
}

impl EsState {
    pub fn new(theta: ParamVector, cfg: &EsConfig, cap: Option<EpisodeCap>) -> Self {
        let opt = OptimizerState::new(&cfg.optimizer, theta.dim());
        EsState { theta, opt, cap, timesteps_total: 0 }
    }
}

/// Per-generation summary written to the progress log.
#[derive(Debug, Clone, Copy)]
pub struct GenStats {
    pub generation: u64,
    pub mean_return: f64,
    pub max_return: f64,
    pub n_evals: usize,
    pub steps: u64,
}

/// Applies one generation's records to the state. The single deterministic
/// code path shared by every backend:
///
/// 1. sort records in canonical (offset, sign) order;
/// 2. shape the flat list of returns;
/// 3. combine into a gradient estimate;
/// 4. decay + ascent step;
/// 5. fold episode lengths into the cap, still in canonical order.
pub fn fold_generation(
    state: &mut EsState,
    cfg: &EsConfig,
    table: &NoiseTable,
    run_seed: u64,
    upd: &GenerationUpdate,
) -> Result<GenStats> {
    if upd.generation != state.theta.version {
        return Err(Error::Consistency(format!(
            "update for generation {} applied to parameters at version {}",
            upd.generation, state.theta.version
        )));
    }
    let n = upd.records.len();
    if n == 0 || n % 2 != 0 {
        return Err(Error::protocol(format!("generation holds {n} records, expected 2*pairs")));
    }
    if let Some(bad) = upd.records.iter().find(|r| !r.ret.is_finite()) {
        return Err(Error::numeric(format!(
            "non-finite return {} for offset={} sign={}",
            bad.ret,
            bad.offset,
            bad.sign.as_i8()
        )));
    }

    let mut records = upd.records.clone();
    records.sort_by_key(|r| r.sort_key());
    // Canonical order interleaves each pair as (offset, Neg), (offset, Pos).
    for pair in records.chunks(2) {
        if pair[0].offset != pair[1].offset
            || pair[0].sign != Sign::Neg
            || pair[1].sign != Sign::Pos
        {
            return Err(Error::protocol(format!(
                "records do not form antithetic pairs near offset {}",
                pair[0].offset
            )));
        }
    }

    let returns: Vec<f64> = records.iter().map(|r| r.ret).collect();
    let utilities = match cfg.shaping {
        Shaping::CenteredRanks => centered_ranks(&returns)?,
        Shaping::Raw => returns.clone(),
    };

    let d = state.theta.dim();
    let entries: Vec<WeightedRef> = records
        .iter()
        .zip(&utilities)
        .map(|(r, &u)| WeightedRef {
            pref: PerturbationRef {
                offset: r.offset,
                sign: r.sign,
                subset_seed: subset_seed_for(cfg, run_seed, upd.generation, r.offset),
            },
            utility: u,
        })
        .collect();
    let g = es_gradient_entries(&entries, cfg.sigma, cfg.subset_density, table, d)?;
    state.theta = apply_update(&state.theta, &g, cfg, &mut state.opt)?;

    let mut steps = 0u64;
    for r in &records {
        steps += r.steps;
        if let Some(cap) = &mut state.cap {
            cap.update(r.steps);
        }
    }
    state.timesteps_total += steps;

    let mean_return = returns.iter().sum::<f64>() / n as f64;
    let max_return = returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(GenStats { generation: upd.generation, mean_return, max_return, n_evals: n, steps })
}

fn subset_seed_for(cfg: &EsConfig, run_seed: u64, generation: u64, offset: u64) -> Option<u64> {
    if cfg.subset_density < 1.0 {
        Some(noise::subset_seed(run_seed, generation, offset))
    } else {
        None
    }
}

/// Black-box objective evaluated at perturbed parameters.
pub trait Evaluator: Send + Sync {
    /// Runs one evaluation. `seed` fixes all stochasticity; `cap` is the
    /// episode step limit in force, if any.
    fn evaluate(&self, theta: &[f64], seed: u64, cap: Option<u64>) -> Result<RolloutResult>;
}

/// The generation plan: perturbation handles for each of the `pop_pairs`
/// slots, identical on every node for a given `(run_seed, t)`.
pub fn plan_refs(
    table: &NoiseTable,
    d: usize,
    cfg: &EsConfig,
    run_seed: u64,
    generation: u64,
) -> Result<Vec<PerturbationRef>> {
    let mut stream = SeedStream::new(noise::ref_stream_seed(run_seed, generation));
    let mut refs = noise::draw_distinct_refs(table, d, &mut stream, cfg.pop_pairs)?;
    for r in refs.iter_mut() {
        r.subset_seed = subset_seed_for(cfg, run_seed, generation, r.offset);
    }
    Ok(refs)
}

/// Evaluates one perturbation direction and packages the record.
pub fn evaluate_ref(
    state_theta: &[f64],
    cfg: &EsConfig,
    table: &NoiseTable,
    run_seed: u64,
    generation: u64,
    pref: &PerturbationRef,
    cap: Option<u64>,
    evaluator: &dyn Evaluator,
) -> Result<EvalRecord> {
    let d = state_theta.len();
    let eps = noise::materialize(table, pref, d, cfg.subset_density)?;
    let perturbed: Vec<f64> =
        state_theta.iter().zip(&eps).map(|(t, e)| t + cfg.sigma * e).collect();
    let seed = noise::eval_seed(run_seed, generation, pref.offset, pref.sign);
    let rr = evaluator
        .evaluate(&perturbed, seed, cap)
        .map_err(|e| Error::Eval { offset: pref.offset, sign: pref.sign.as_i8(), msg: e.to_string() })?;
    Ok(EvalRecord {
        offset: pref.offset,
        sign: pref.sign,
        ret: rr.total_return,
        steps: rr.steps,
        truncated: rr.truncated,
    })
}

/// One full generation in a single process: draw, evaluate both mirror
/// directions, fold. Equivalent to the distributed path by construction.
pub fn generation(
    state: &mut EsState,
    cfg: &EsConfig,
    table: &NoiseTable,
    run_seed: u64,
    evaluator: &dyn Evaluator,
) -> Result<GenStats> {
    let t = state.theta.version;
    let d = state.theta.dim();
    let refs = plan_refs(table, d, cfg, run_seed, t)?;
    let cap = state.cap.as_ref().map(|c| c.current());
    let mut records = Vec::with_capacity(refs.len() * 2);
    for r in &refs {
        for dir in [mirror_ref(*r), *r] {
            records.push(evaluate_ref(
                &state.theta.values,
                cfg,
                table,
                run_seed,
                t,
                &dir,
                cap,
                evaluator,
            )?);
        }
    }
    let upd = GenerationUpdate { generation: t, records };
    fold_generation(state, cfg, table, run_seed, &upd)
}
