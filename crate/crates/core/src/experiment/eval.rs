use serde::{Deserialize, Serialize};

use crate::env::{evaluate, EnvSpec};
use crate::error::{validation, Result};
use crate::parallel::{self, Execution};
use crate::policy::checkpoint::Checkpoint;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberEval {
    pub member: usize,
    pub mean_return: f64,
    pub mean_steps: f64,
    pub mean_distance: f64,
    pub reach_rate: f64,
    pub mean_bc: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub env: String,
    pub episodes: usize,
    /// Member with the largest mean distance from the start.
    pub best_member: usize,
    pub members: Vec<MemberEval>,
}

/// `n` episode seeds derived from `seed`.
pub fn eval_seeds(seed: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| rng::derive_seed(&[rng::tag::MEAN_EVAL, seed, i])).collect()
}

/// Evaluates every member of `ckpt` on the same seeds.
pub fn eval_checkpoint(ckpt: &Checkpoint, env: &EnvSpec, seeds: &[u64], rtg_target: f64, exec: Execution) -> Result<EvalReport> {
    if ckpt.spec.obs_dim != env.obs_dim() || ckpt.spec.act_dim != env.act_dim() {
        return Err(validation("checkpoint dimensions do not match the environment"));
    }
    if seeds.is_empty() {
        return Err(validation("need at least one evaluation episode"));
    }
    let idx: Vec<usize> = (0..ckpt.members.len()).collect();
    let members = parallel::try_map(exec, &idx, |&m| {
        let policy = ckpt.policy(m)?;
        let s = evaluate(&mut policy.actor(), env, seeds, rtg_target)?;
        Ok::<_, crate::Error>(MemberEval {
            member: m,
            mean_return: s.mean_return,
            mean_steps: s.mean_steps,
            mean_distance: s.mean_distance,
            reach_rate: s.reach_rate,
            mean_bc: (s.mean_bc.x, s.mean_bc.y),
        })
    })?;
    let best_member = members
        .iter()
        .fold(0, |best, m| if m.mean_distance > members[best].mean_distance { m.member } else { best });
    Ok(EvalReport { env: env.id(), episodes: seeds.len(), best_member, members })
}
