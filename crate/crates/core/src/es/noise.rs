use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{input, structure, Result};
use crate::policy::ParameterVector;
use crate::rng;

/// Desk-scale default table length.
pub const DEFAULT_NOISE_LEN: usize = 10_000_000;

/// Pregenerated standard-normal values shared by every evaluator. A
/// perturbation travels as an offset into the table instead of a vector.
#[derive(Clone, Debug)]
pub struct NoiseTable {
    seed: u64,
    data: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Pos,
    Neg,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Pos => 1.0,
            Sign::Neg => -1.0,
        }
    }
}

impl NoiseTable {
    pub fn build(seed: u64, length: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..length).map(|_| rng.sample(StandardNormal)).collect();
        Self { seed, data }
    }

    /// Table with explicit contents, e.g. loaded from elsewhere.
    pub fn from_vec(seed: u64, data: Vec<f64>) -> Self {
        Self { seed, data }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn slice(&self, index: usize, len: usize) -> Result<&[f64]> {
        index
            .checked_add(len)
            .and_then(|end| self.data.get(index..end))
            .ok_or_else(|| structure(format!("noise slice {index}+{len} exceeds table of {}", self.data.len())))
    }

    /// Largest valid start offset for a genome of `genome_len`.
    pub fn max_index(&self, genome_len: usize) -> Result<usize> {
        self.data
            .len()
            .checked_sub(genome_len)
            .ok_or_else(|| structure("noise table shorter than the genome"))
    }

    /// Start offsets for one iteration's mirrored pairs, drawn from a stream
    /// keyed by `(run_seed, iteration)`.
    pub fn sample_indices(&self, run_seed: u64, iteration: u64, pairs: usize, genome_len: usize) -> Result<Vec<usize>> {
        let max = self.max_index(genome_len)?;
        let mut rng = rng::stream(&[rng::tag::NOISE_INDEX, run_seed, iteration]);
        Ok((0..pairs).map(|_| rng.random_range(0..=max)).collect())
    }
}

/// `theta + sign * sigma * table[index..index + len]`.
pub fn perturb(theta: &ParameterVector, table: &NoiseTable, index: usize, sign: Sign, sigma: f64) -> Result<ParameterVector> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(input("sigma must be finite and non-negative"));
    }
    let eps = table.slice(index, theta.len())?;
    let s = sign.value() * sigma;
    Ok(ParameterVector::from_raw(
        theta.as_slice().iter().zip(eps).map(|(t, e)| t + s * e).collect(),
    ))
}
