//! Shared Gaussian noise table and compact perturbation handles.
//!
//! Every process in a run builds the same table from `(seed, length)` and can
//! therefore turn a `(offset, sign)` pair back into the full perturbation
//! vector locally. That is what lets workers exchange only scalars: a
//! perturbation never crosses the wire, only its identity does.

use crate::error::{Error, Result};
use crate::rng::{self, mix64, SeedStream};

/// Default table length: 10^7 samples (~80 MB of f64).
pub const DEFAULT_TABLE_LEN: usize = 10_000_000;

/// Hard ceiling on table allocation, as a guard against config typos.
const MAX_TABLE_LEN: usize = 1 << 31;

/// A pregenerated block of standard-normal samples, identical on every node
/// that builds it from the same `(seed, length)`.
#[derive(Debug, Clone)]
pub struct NoiseTable {
    seed: u64,
    values: Vec<f64>,
}

impl NoiseTable {
    /// Builds the table. Sample `i` is `rng::normal_at(seed, i)`, so the
    /// result is bitwise identical across rebuilds, platforms and thread
    /// counts.
    pub fn build(seed: u64, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::argument("noise table length must be >= 1"));
        }
        if length > MAX_TABLE_LEN {
            return Err(Error::Resource(format!(
                "noise table length {length} exceeds the {MAX_TABLE_LEN} ceiling"
            )));
        }
        let mut values = Vec::new();
        values
            .try_reserve_exact(length)
            .map_err(|e| Error::Resource(format!("noise table allocation failed: {e}")))?;
        values.extend((0..length as u64).map(|i| rng::normal_at(seed, i)));
        Ok(NoiseTable { seed, values })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[cfg(test)]
    pub(crate) fn from_values(seed: u64, values: Vec<f64>) -> Self {
        NoiseTable { seed, values }
    }
}

/// Antithetic direction of a perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    /// The mirrored direction, -epsilon. Sorts before `Pos` so that the
    /// canonical (offset, sign) order is ascending numeric sign.
    Neg,
    Pos,
}

impl Sign {
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Neg => -1.0,
            Sign::Pos => 1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Neg => -1,
            Sign::Pos => 1,
        }
    }

    pub fn from_i8(v: i8) -> Result<Self> {
        match v {
            -1 => Ok(Sign::Neg),
            1 => Ok(Sign::Pos),
            other => Err(Error::protocol(format!("invalid sign byte {other}"))),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Sign::Neg => Sign::Pos,
            Sign::Pos => Sign::Neg,
        }
    }
}

/// Compact handle identifying one perturbation without materializing it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PerturbationRef {
    /// Start index into the noise table.
    pub offset: u64,
    /// Antithetic mirror flag.
    pub sign: Sign,
    /// When present, only a pseudo-random subset of coordinates is perturbed;
    /// the mask is derived from this seed (see [`materialize`]).
    pub subset_seed: Option<u64>,
}

impl PerturbationRef {
    pub fn new(offset: u64, sign: Sign) -> Self {
        PerturbationRef { offset, sign, subset_seed: None }
    }

    /// Canonical sort key: ascending offset, then sign with `Neg` first.
    pub fn sort_key(&self) -> (u64, Sign) {
        (self.offset, self.sign)
    }
}

/// Returns the antithetic mirror of `r`: same fields, negated sign.
/// Involutive.
pub fn mirror_ref(r: PerturbationRef) -> PerturbationRef {
    PerturbationRef { sign: r.sign.flipped(), ..r }
}

/// Draws one perturbation handle with offset uniform over
/// `[0, table.len() - d]`. The mirror is not drawn here; pair it with
/// [`mirror_ref`].
pub fn draw_ref(table: &NoiseTable, d: usize, stream: &mut SeedStream) -> Result<PerturbationRef> {
    if d == 0 {
        return Err(Error::argument("perturbation dimension must be >= 1"));
    }
    if d > table.len() {
        return Err(Error::argument(format!(
            "dimension {d} exceeds noise table length {}",
            table.len()
        )));
    }
    let range = (table.len() - d + 1) as u64;
    Ok(PerturbationRef::new(stream.next_below(range), Sign::Pos))
}

/// Draws `count` handles with pairwise-distinct offsets by rejecting repeats
/// from the stream. Distinctness is required because results travel the wire
/// keyed by (offset, sign). Every node replaying the same stream sees the
/// same accepted sequence, so a worker can reproduce any contiguous slice of
/// a generation's draws without knowing how slots were assigned.
pub fn draw_distinct_refs(
    table: &NoiseTable,
    d: usize,
    stream: &mut SeedStream,
    count: usize,
) -> Result<Vec<PerturbationRef>> {
    if d > table.len() {
        return Err(Error::argument(format!(
            "dimension {d} exceeds noise table length {}",
            table.len()
        )));
    }
    let possible = table.len() - d + 1;
    if count > possible / 2 + 1 {
        // Rejection would thrash (or never finish); the table is too small
        // for this population.
        return Err(Error::argument(format!(
            "cannot draw {count} distinct offsets from a range of {possible}"
        )));
    }
    let mut seen = std::collections::HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let r = draw_ref(table, d, stream)?;
        if seen.insert(r.offset) {
            out.push(r);
        }
    }
    Ok(out)
}

/// Reconstructs the perturbation vector for `r`.
///
/// Without a subset seed, `eps[k] = sign * table[offset + k]`. With one, a
/// Bernoulli(`subset_density`) keep-mask is derived per coordinate from the
/// seed's counter stream and masked-out coordinates are exactly zero. The
/// estimator consumes the result unchanged either way.
pub fn materialize(
    table: &NoiseTable,
    r: &PerturbationRef,
    d: usize,
    subset_density: f64,
) -> Result<Vec<f64>> {
    let end = r
        .offset
        .checked_add(d as u64)
        .ok_or_else(|| Error::argument("offset + d overflows"))?;
    if end > table.len() as u64 {
        return Err(Error::argument(format!(
            "offset {} + d {} exceeds table length {}",
            r.offset,
            d,
            table.len()
        )));
    }
    let s = r.sign.as_f64();
    let base = &table.values()[r.offset as usize..r.offset as usize + d];
    let mut eps: Vec<f64> = base.iter().map(|&v| s * v).collect();
    if let Some(mask_seed) = r.subset_seed {
        let mut mask_stream = SeedStream::new(mix64(mask_seed));
        for e in eps.iter_mut() {
            if mask_stream.next_unit() >= subset_density {
                *e = 0.0;
            }
        }
    }
    Ok(eps)
}

/// Seed of the offset-draw stream for generation `t`. A function of
/// `(run_seed, t)` only, so the generation plan never depends on worker
/// count or assignment.
pub fn ref_stream_seed(run_seed: u64, generation: u64) -> u64 {
    rng::mix_seeds(run_seed, &[rng::domain::REFS, generation])
}

/// Seed for the environment rollout of one evaluation. Keyed by the
/// perturbation identity so any topology evaluates identical episodes.
pub fn eval_seed(run_seed: u64, generation: u64, offset: u64, sign: Sign) -> u64 {
    let sign_word = match sign {
        Sign::Neg => 0,
        Sign::Pos => 1,
    };
    rng::mix_seeds(run_seed, &[rng::domain::EVAL, generation, offset, sign_word])
}

/// Subset-mask seed for a perturbation at `(generation, offset)`. Derived
/// rather than transmitted, so refs stay reconstructible from scalar results.
pub fn subset_seed(run_seed: u64, generation: u64, offset: u64) -> u64 {
    rng::mix_seeds(run_seed, &[rng::domain::SUBSET, generation, offset])
}
