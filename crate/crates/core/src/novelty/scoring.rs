use std::fmt;
use std::str::FromStr;

use super::archive::{Archive, BehaviorCharacteristic};
use super::metapop::Metapopulation;
use crate::error::{input, validation, Error, Result};
use crate::es::{adam_step, estimate_update, shape_scores, NoiseTable, Sign};
use crate::parallel::Execution;
use crate::policy::ParameterVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Es,
    NsEs,
    NsrEs,
}

impl Algorithm {
    /// Weight on shaped fitness; the rest goes to shaped novelty. `nsr_weight`
    /// only applies to NSR-ES.
    pub fn fitness_weight(self, nsr_weight: f64) -> f64 {
        match self {
            Algorithm::Es => 1.0,
            Algorithm::NsEs => 0.0,
            Algorithm::NsrEs => nsr_weight,
        }
    }

    pub fn uses_metapopulation(self) -> bool {
        self != Algorithm::Es
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Es => "es",
            Algorithm::NsEs => "ns-es",
            Algorithm::NsrEs => "nsr-es",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "es" | "openai-es" => Ok(Algorithm::Es),
            "ns-es" | "nses" => Ok(Algorithm::NsEs),
            "nsr-es" | "nsres" => Ok(Algorithm::NsrEs),
            other => Err(validation(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// `w * fitness + (1 - w) * novelty`, elementwise.
pub fn combine_scores(fitness_shaped: &[f64], novelty_shaped: &[f64], w: f64) -> Result<Vec<f64>> {
    if fitness_shaped.len() != novelty_shaped.len() {
        return Err(input("fitness and novelty score lists differ in length"));
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(input("score weight must lie in [0, 1]"));
    }
    Ok(fitness_shaped.iter().zip(novelty_shaped).map(|(f, n)| w * f + (1.0 - w) * n).collect())
}

/// One evaluated perturbation in canonical order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluated {
    pub noise_index: usize,
    pub sign: Sign,
    pub fitness: f64,
    pub bc: BehaviorCharacteristic,
}

/// Shaped fitness and shaped novelty (against the iteration-start archive)
/// mixed with weight `w` on fitness.
pub fn score_evaluations(evals: &[Evaluated], archive: &Archive, w: f64, exec: Execution) -> Result<Vec<f64>> {
    if evals.iter().any(|e| !e.fitness.is_finite() || !e.bc.is_finite()) {
        return Err(Error::Aggregation("evaluation with missing or non-finite fitness/BC".into()));
    }
    let fitness: Vec<f64> = evals.iter().map(|e| e.fitness).collect();
    let bcs: Vec<BehaviorCharacteristic> = evals.iter().map(|e| e.bc).collect();
    let novelty = super::archive::novelty_batch(exec, &bcs, archive);
    combine_scores(&shape_scores(&fitness)?, &shape_scores(&novelty)?, w)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationOutcome {
    pub scores: Vec<f64>,
    pub eval_fitness: f64,
    pub bc: BehaviorCharacteristic,
    /// Novelty of the updated mean against the archive before its own BC was
    /// added.
    pub novelty: f64,
}

/// Updates `member` from its evaluated perturbations, evaluates the new mean
/// with `evaluate_mean`, appends that BC to the archive and refreshes cached
/// novelties. ES (`w = 1`), NS-ES (`w = 0`) and NSR-ES all run through here.
#[allow(clippy::too_many_arguments)]
pub fn ns_iteration<F>(
    metapop: &mut Metapopulation,
    archive: &mut Archive,
    member: usize,
    evals: &[Evaluated],
    w: f64,
    table: &NoiseTable,
    exec: Execution,
    evaluate_mean: F,
) -> Result<IterationOutcome>
where
    F: FnOnce(&ParameterVector) -> Result<(f64, BehaviorCharacteristic)>,
{
    let m = metapop
        .members
        .get_mut(member)
        .ok_or_else(|| input(format!("member {member} out of range")))?;
    let scores = score_evaluations(evals, archive, w, exec)?;
    let indices: Vec<usize> = evals.iter().map(|e| e.noise_index).collect();
    let signs: Vec<Sign> = evals.iter().map(|e| e.sign).collect();
    let grad = estimate_update(&scores, &indices, &signs, m.state.sigma, table, m.state.theta.len())?;
    adam_step(&mut m.state, &grad)?;
    let (eval_fitness, bc) = evaluate_mean(&m.state.theta)?;
    m.bc = bc;
    m.fitness = eval_fitness;
    let novelty = archive.novelty(bc);
    archive.add(bc)?;
    metapop.refresh_novelty(archive);
    Ok(IterationOutcome { scores, eval_fitness, bc, novelty })
}
