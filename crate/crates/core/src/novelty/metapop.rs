use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::archive::{Archive, BehaviorCharacteristic};
use crate::error::{input, Result};
use crate::es::EsState;

pub const DEFAULT_METAPOP: usize = 5;

/// One search distribution plus what its mean did when last evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct Member {
    pub state: EsState,
    pub bc: BehaviorCharacteristic,
    pub fitness: f64,
    pub novelty: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metapopulation {
    pub members: Vec<Member>,
}

impl Metapopulation {
    pub fn new(members: Vec<Member>) -> Result<Self> {
        if members.is_empty() {
            return Err(input("metapopulation needs at least one member"));
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn refresh_novelty(&mut self, archive: &Archive) {
        for m in &mut self.members {
            m.novelty = archive.novelty(m.bc);
        }
    }

    pub fn novelties(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.novelty).collect()
    }

    /// Refreshes cached novelty against `archive`, then draws a member.
    pub fn select<R: Rng + ?Sized>(&mut self, archive: &Archive, rng: &mut R) -> Result<usize> {
        self.refresh_novelty(archive);
        select_member(&self.novelties(), rng)
    }
}

/// `P(i) = novelty_i / sum(novelty)`. All-zero novelties give a uniform
/// distribution; infinite ones share the mass among themselves.
pub fn selection_probabilities(novelties: &[f64]) -> Result<Vec<f64>> {
    if novelties.is_empty() {
        return Err(input("no members to select from"));
    }
    if novelties.iter().any(|n| n.is_nan() || *n < 0.0) {
        return Err(input("novelties must be non-negative"));
    }
    let n = novelties.len() as f64;
    let inf = novelties.iter().filter(|v| v.is_infinite()).count();
    if inf > 0 {
        return Ok(novelties.iter().map(|v| if v.is_infinite() { 1.0 / inf as f64 } else { 0.0 }).collect());
    }
    let total: f64 = novelties.iter().sum();
    if total == 0.0 {
        return Ok(vec![1.0 / n; novelties.len()]);
    }
    Ok(novelties.iter().map(|v| v / total).collect())
}

pub fn select_member<R: Rng + ?Sized>(novelties: &[f64], rng: &mut R) -> Result<usize> {
    let p = selection_probabilities(novelties)?;
    let dist = WeightedIndex::new(&p).map_err(|e| input(format!("selection weights: {e}")))?;
    Ok(dist.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frequencies(novelties: &[f64], draws: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut counts = vec![0usize; novelties.len()];
        for _ in 0..draws {
            counts[select_member(novelties, &mut rng).unwrap()] += 1;
        }
        counts.into_iter().map(|c| c as f64 / draws as f64).collect()
    }

    #[test]
    fn probabilities() {
        assert_eq!(selection_probabilities(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
        assert_eq!(selection_probabilities(&[2.0, 2.0, 4.0]).unwrap(), vec![0.25, 0.25, 0.5]);
        assert_eq!(selection_probabilities(&[0.0; 3]).unwrap(), vec![1.0 / 3.0; 3]);
        assert_eq!(selection_probabilities(&[1.0, f64::INFINITY]).unwrap(), vec![0.0, 1.0]);
        assert!(selection_probabilities(&[-1.0]).is_err());
    }

    #[test]
    fn empirical_frequencies() {
        for (nov, want) in [
            (vec![1.0, 3.0], vec![0.25, 0.75]),
            (vec![0.0, 0.0, 0.0], vec![1.0 / 3.0; 3]),
            (vec![2.0, 2.0, 4.0], vec![0.25, 0.25, 0.5]),
        ] {
            let got = frequencies(&nov, 100_000);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 0.01, "{got:?} vs {want:?}");
            }
        }
    }
}
