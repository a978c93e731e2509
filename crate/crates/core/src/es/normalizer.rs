use crate::error::{input, structure, Result};

pub const STD_FLOOR: f64 = 1e-6;

/// Per-dimension standardization fitted once on a reference batch, then
/// frozen.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub frozen: bool,
}

impl ObsNormalizer {
    pub fn from_parts(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() {
            return Err(structure("normalizer mean/std lengths differ"));
        }
        if mean.iter().chain(&std).any(|v| !v.is_finite()) || std.iter().any(|&s| s < STD_FLOOR) {
            return Err(input("normalizer statistics must be finite with std >= 1e-6"));
        }
        Ok(Self { mean, std, frozen: true })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let mut out = obs.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, obs: &mut [f64]) -> Result<()> {
        if obs.len() != self.dim() {
            return Err(structure("observation length differs from normalizer"));
        }
        for ((o, m), s) in obs.iter_mut().zip(&self.mean).zip(&self.std) {
            *o = (*o - m) / s;
        }
        Ok(())
    }
}

/// Fits mean and (population) std per dimension; std is floored at 1e-6.
pub fn normalizer_fit(batch: &[Vec<f64>]) -> Result<ObsNormalizer> {
    let first = batch.first().ok_or_else(|| input("cannot fit a normalizer on an empty batch"))?;
    let dim = first.len();
    if dim == 0 || batch.iter().any(|row| row.len() != dim) {
        return Err(structure("ragged observation batch"));
    }
    if batch.iter().flatten().any(|v| !v.is_finite()) {
        return Err(input("observation batch is not finite"));
    }
    let n = batch.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|j| batch.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let std = (0..dim)
        .map(|j| {
            let var = batch.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            var.sqrt().max(STD_FLOOR)
        })
        .collect();
    Ok(ObsNormalizer { mean, std, frozen: true })
}

/// Convenience alias matching the fit/apply pairing.
pub fn normalizer_apply(norm: &ObsNormalizer, obs: &[f64]) -> Result<Vec<f64>> {
    norm.apply(obs)
}
