use rand::seq::index;

use crate::env::{reset, step, EnvKind, EnvSpec, ACT_DIM};
use crate::error::{validation, Result};
use crate::es::{adam_step, estimate_update, perturb, shape_scores, EsState, NoiseTable, Sign};
use crate::parallel::{self, Execution};
use crate::policy::checkpoint::{Checkpoint, MemberCheckpoint};
use crate::policy::{dt_forward, init_params, mlp_forward, update_context, DtContext, ParameterVector, Policy, PolicyKind, PolicySpec};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub env: EnvKind,
    pub episodes: usize,
    pub iterations: u64,
    pub pop_pairs: usize,
    pub sigma: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub minibatch: usize,
    pub seed: u64,
    pub init_from_teacher: bool,
    pub rtg_target: f64,
    pub noise_seed: u64,
    pub noise_len: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            env: EnvKind::DeceptiveMaze,
            episodes: 50,
            iterations: 200,
            pop_pairs: 50,
            sigma: 0.01,
            lr: 0.01,
            weight_decay: 0.0,
            minibatch: 256,
            seed: 0,
            init_from_teacher: false,
            rtg_target: super::DEFAULT_RTG_TARGET,
            noise_seed: super::DEFAULT_NOISE_SEED,
            noise_len: 1_000_000,
        }
    }
}

/// One teacher decision with the student's view of the history.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Teacher-forced context for a Decision Transformer student.
    pub context: Option<DtContext>,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainReport {
    /// Imitation fitness of the mean on each iteration's minibatch, before
    /// that iteration's update.
    pub fitness: Vec<f64>,
    /// Mean squared action error of the final student over the dataset.
    pub final_mse: f64,
    pub samples: usize,
}

/// Rolls out `teacher` and records every decision. Rewards feed the
/// student's return-to-go exactly as during training.
pub fn collect_dataset(teacher: &Policy, student: &PolicySpec, env: &EnvSpec, episodes: usize, seed: u64, rtg_target: f64) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut action = [0.0; ACT_DIM];
    for ep in 0..episodes as u64 {
        let (mut state, mut obs) = reset(env, rng::derive_seed(&[rng::tag::PRETRAIN, seed, ep]))?;
        let mut actor = teacher.actor();
        actor.begin(&obs, rtg_target)?;
        let mut ctx = (student.kind == PolicyKind::DecisionTransformer).then(|| DtContext::start(student, rtg_target, &obs));
        loop {
            actor.act(&obs, &mut action)?;
            samples.push(Sample { context: ctx.clone(), obs: obs.to_vec(), action: action.to_vec() });
            let out = step(env, &mut state, &action)?;
            if out.done {
                break;
            }
            let scaled = out.reward / env.reward_scale;
            actor.record(&action, scaled, &out.obs)?;
            if let Some(c) = ctx.as_mut() {
                update_context(c, &action, scaled, &out.obs)?;
            }
            obs = out.obs;
        }
    }
    Ok(Dataset { samples })
}

/// Negative mean squared action error over `batch`.
pub fn imitation_fitness(spec: &PolicySpec, params: &ParameterVector, data: &Dataset, batch: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for &i in batch {
        let s = &data.samples[i];
        let a = match &s.context {
            Some(ctx) => dt_forward(spec, params, ctx, &s.obs)?,
            None => mlp_forward(spec, params, &s.obs)?,
        };
        total += a.iter().zip(&s.action).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    }
    Ok(-total / batch.len() as f64)
}

fn minibatch(data: &Dataset, size: usize, seed: u64, iteration: u64) -> Vec<usize> {
    let n = data.samples.len();
    if size >= n {
        return (0..n).collect();
    }
    let mut r = rng::stream(&[rng::tag::PRETRAIN, seed, iteration]);
    let mut idx = index::sample(&mut r, n, size).into_vec();
    idx.sort_unstable();
    idx
}

/// Clones `teacher` (its first member) into a `student` policy with ES on
/// the imitation loss and returns a checkpoint flagged as pretrained.
pub fn pretrain(teacher: &Checkpoint, student: &PolicySpec, cfg: &PretrainConfig, exec: Execution) -> Result<(Checkpoint, PretrainReport)> {
    if teacher.spec.act_dim != student.act_dim || teacher.spec.obs_dim != student.obs_dim {
        return Err(validation("teacher and student dimensions differ"));
    }
    student.validate().map_err(|e| validation(e.to_string()))?;
    let env = EnvSpec::for_kind(cfg.env);
    if student.obs_dim != env.obs_dim() || student.act_dim != env.act_dim() {
        return Err(validation("student dimensions do not match the environment"));
    }
    if cfg.episodes == 0 || cfg.minibatch == 0 {
        return Err(validation("pretraining needs episodes and a minibatch"));
    }
    let teacher_policy = teacher.policy(0)?;
    let data = collect_dataset(&teacher_policy, student, &env, cfg.episodes, cfg.seed, cfg.rtg_target)?;
    let theta = if cfg.init_from_teacher {
        if teacher.spec != *student {
            return Err(validation("initializing from the teacher needs identical specs"));
        }
        teacher_policy.params.clone()
    } else {
        init_params(student, &mut rng::stream(&[rng::tag::PRETRAIN, cfg.seed, rng::tag::INIT]))?
    };
    let table = NoiseTable::build(cfg.noise_seed, cfg.noise_len);
    let mut es = EsState::new(theta, cfg.sigma, cfg.lr, cfg.weight_decay, cfg.pop_pairs)?;
    let mut fitness = Vec::new();
    for it in 0..cfg.iterations {
        let batch = minibatch(&data, cfg.minibatch, cfg.seed, it);
        fitness.push(imitation_fitness(student, &es.theta, &data, &batch)?);
        let indices = table.sample_indices(cfg.seed, it, cfg.pop_pairs, es.theta.len())?;
        let jobs: Vec<(usize, Sign)> = indices.iter().flat_map(|&i| [(i, Sign::Pos), (i, Sign::Neg)]).collect();
        let raw = parallel::try_map(exec, &jobs, |&(i, sign)| {
            let g = perturb(&es.theta, &table, i, sign, es.sigma)?;
            imitation_fitness(student, &g, &data, &batch)
        })?;
        let shaped = shape_scores(&raw)?;
        let idx: Vec<usize> = jobs.iter().map(|j| j.0).collect();
        let signs: Vec<Sign> = jobs.iter().map(|j| j.1).collect();
        let grad = estimate_update(&shaped, &idx, &signs, es.sigma, &table, es.theta.len())?;
        adam_step(&mut es, &grad)?;
    }
    let all: Vec<usize> = (0..data.samples.len()).collect();
    let final_mse = -imitation_fitness(student, &es.theta, &data, &all)?;
    let ckpt = Checkpoint {
        spec: student.clone(),
        members: vec![MemberCheckpoint { params: es.theta, optimizer: None }],
        normalizer: None,
        pretrained: true,
    };
    Ok((ckpt, PretrainReport { fitness, final_mse, samples: data.samples.len() }))
}
