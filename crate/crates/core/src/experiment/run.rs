use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::config::{Resolved, RunConfig};
use super::eval::{eval_checkpoint, eval_seeds, EvalReport};
use super::export::archive_import;
use super::runlog::RunLog;
use super::{ARCHIVE_FILE, CHECKPOINT_FILE, CONFIG_FILE, FINAL_EVAL_FILE, RUNLOG_FILE, STATE_FILE};
use crate::dist::{Backend, Cluster, Coordinator, CoordinatorSettings, EvalContext, IterationRecord, RunSetup, SequentialBackend};
use crate::env::{random_observations, EnvSpec};
use crate::error::{format_err, validation, Result};
use crate::es::{normalizer_fit, EsState, NoiseTable};
use crate::novelty::{Archive, BehaviorCharacteristic, Member, Metapopulation};
use crate::parallel::Execution;
use crate::policy::checkpoint::{Checkpoint, MemberCheckpoint};
use crate::policy::{init_params, ParameterVector};
use crate::rng;

/// Observations gathered by a random policy to fit the normalizer.
const NORMALIZER_BATCH: usize = 1000;

/// How iterations are executed.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum BackendChoice {
    /// Inline for one worker, worker threads otherwise.
    #[default]
    Auto,
    Sequential,
    Threads,
    /// Listen on this address and wait for `workers` TCP workers.
    Tcp(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct MemberState {
    bc: BehaviorCharacteristic,
    fitness: f64,
}

/// Coordinator state not covered by the checkpoint and archive files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub iteration: u64,
    pub archive_len: usize,
    members: Vec<MemberState>,
}

/// A run held in memory: resolved settings plus its coordinator.
pub struct Run {
    pub config: RunConfig,
    pub resolved: Resolved,
    pub coordinator: Coordinator,
}

fn shared_table(config: &RunConfig, table: Option<Arc<NoiseTable>>) -> Arc<NoiseTable> {
    table
        .filter(|t| t.seed() == config.noise_seed && t.len() == config.noise_len)
        .unwrap_or_else(|| Arc::new(NoiseTable::build(config.noise_seed, config.noise_len)))
}

fn settings(config: &RunConfig, exec: Execution) -> CoordinatorSettings {
    CoordinatorSettings {
        run_id: format!("{}-{}-{}-s{}", config.algorithm, config.policy, config.env, config.seed),
        algorithm: config.algorithm,
        nsr_weight: config.nsr_weight,
        rtg_target: config.rtg_target,
        eval_episodes: config.eval_episodes,
        exec,
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Run {
    /// Builds the initial metapopulation. `table` is reused when it matches
    /// the configured noise seed and length.
    pub fn start(config: &RunConfig, table: Option<Arc<NoiseTable>>, exec: Execution) -> Result<Self> {
        let resolved = config.resolve()?;
        let spec = config.policy_spec()?;
        let env = EnvSpec::for_kind(config.env);
        let table = shared_table(config, table);
        if table.len() < spec.param_count() {
            return Err(validation("noise_len is shorter than the genome"));
        }
        let thetas: Vec<ParameterVector> = match &config.pretrained {
            Some(path) => {
                let ck = Checkpoint::load(path)?;
                if ck.spec != spec {
                    return Err(validation("pretrained checkpoint spec differs from the configured policy"));
                }
                (0..resolved.metapop_size).map(|m| ck.members[m % ck.members.len()].params.clone()).collect()
            }
            None => (0..resolved.metapop_size)
                .map(|m| init_params(&spec, &mut rng::stream(&[rng::tag::INIT, config.seed, m as u64])))
                .collect::<Result<_>>()?,
        };
        let normalizer = if resolved.normalize_obs {
            Some(normalizer_fit(&random_observations(&env, NORMALIZER_BATCH, config.seed)?)?)
        } else {
            None
        };
        let ctx = Arc::new(EvalContext { run_seed: config.seed, spec, env, table, normalizer });
        let archive = match &config.archive_import {
            Some(p) => archive_import(p, config)?,
            None => Archive::new(config.k)?,
        };
        let states = thetas
            .into_iter()
            .map(|t| EsState::new(t, resolved.sigma, resolved.lr, config.weight_decay, resolved.pop_pairs))
            .collect::<Result<Vec<_>>>()?;
        let coordinator = Coordinator::start(settings(config, exec), ctx, states, archive)?;
        Ok(Self { config: config.clone(), resolved, coordinator })
    }

    /// Reloads a run directory written by [`Run::save`].
    pub fn restore(run_dir: &Path, table: Option<Arc<NoiseTable>>, exec: Execution) -> Result<Self> {
        let config = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
        let resolved = config.resolve()?;
        let spec = config.policy_spec()?;
        let ck = Checkpoint::load(&run_dir.join(CHECKPOINT_FILE))?;
        if ck.spec != spec {
            return Err(validation("checkpoint spec differs from the run config; refusing to resume"));
        }
        let state: RunState = serde_json::from_str(&fs::read_to_string(run_dir.join(STATE_FILE))?)?;
        if state.members.len() != ck.members.len() {
            return Err(format_err("state and checkpoint disagree on the member count"));
        }
        let saved = Archive::load(&run_dir.join(ARCHIVE_FILE))?;
        if saved.len() < state.archive_len {
            return Err(format_err("archive is shorter than the saved state"));
        }
        let archive = Archive::with_entries(saved.k(), saved.entries()[..state.archive_len].to_vec())?;
        let mut members = Vec::new();
        for (mc, ms) in ck.members.into_iter().zip(&state.members) {
            let mut es = EsState::new(mc.params, resolved.sigma, resolved.lr, config.weight_decay, resolved.pop_pairs)?;
            es.adam = mc.optimizer.ok_or_else(|| format_err("checkpoint lacks optimizer state"))?;
            es.validate()?;
            members.push(Member { state: es, bc: ms.bc, fitness: ms.fitness, novelty: 0.0 });
        }
        let env = EnvSpec::for_kind(config.env);
        let ctx = Arc::new(EvalContext { run_seed: config.seed, spec, env, table: shared_table(&config, table), normalizer: ck.normalizer });
        let coordinator = Coordinator::restore(settings(&config, exec), ctx, Metapopulation::new(members)?, archive, state.iteration);
        Ok(Self { config, resolved, coordinator })
    }

    pub fn setup(&self) -> RunSetup {
        let ctx = &self.coordinator.ctx;
        RunSetup {
            run_id: self.coordinator.settings.run_id.clone(),
            run_seed: self.config.seed,
            noise_seed: ctx.table.seed(),
            noise_len: ctx.table.len(),
            policy_spec: ctx.spec.to_text(),
            env: ctx.env.id(),
            normalizer: ctx.normalizer.as_ref().map(|n| (n.mean.clone(), n.std.clone())),
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            spec: self.coordinator.ctx.spec.clone(),
            members: self
                .coordinator
                .metapop
                .members
                .iter()
                .map(|m| MemberCheckpoint { params: m.state.theta.clone(), optimizer: Some(m.state.adam.clone()) })
                .collect(),
            normalizer: self.coordinator.ctx.normalizer.clone(),
            pretrained: false,
        }
    }

    pub fn state(&self) -> RunState {
        RunState {
            iteration: self.coordinator.iteration,
            archive_len: self.coordinator.archive.len(),
            members: self.coordinator.metapop.members.iter().map(|m| MemberState { bc: m.bc, fitness: m.fitness }).collect(),
        }
    }

    /// Archive and checkpoint first; the state file commits the iteration.
    pub fn save(&self, run_dir: &Path) -> Result<()> {
        write_atomic(&run_dir.join(ARCHIVE_FILE), self.coordinator.archive.to_text().as_bytes())?;
        write_atomic(&run_dir.join(CHECKPOINT_FILE), &self.checkpoint().to_bytes()?)?;
        write_atomic(&run_dir.join(STATE_FILE), serde_json::to_string_pretty(&self.state())?.as_bytes())
    }

    pub fn backend(&self, choice: &BackendChoice, exec: Execution) -> Result<Box<dyn Backend>> {
        let ctx = self.coordinator.ctx.clone();
        let workers = self.config.workers;
        let deadline = Duration::from_secs_f64(self.config.deadline_secs);
        Ok(match choice {
            BackendChoice::Auto if workers == 1 => Box::new(SequentialBackend::new(ctx, 1, exec)),
            BackendChoice::Sequential => Box::new(SequentialBackend::new(ctx, workers, exec)),
            BackendChoice::Auto | BackendChoice::Threads => {
                Box::new(Cluster::in_process(ctx, workers, Execution::Sequential, deadline))
            }
            BackendChoice::Tcp(addr) => {
                let listener = TcpListener::bind(addr)?;
                Box::new(Cluster::listen(&listener, &self.setup(), workers, deadline)?)
            }
        })
    }

    pub fn step(&mut self, backend: &mut dyn Backend) -> Result<IterationRecord> {
        self.coordinator.run_iteration(backend)
    }

    pub fn is_finished(&self) -> bool {
        self.coordinator.iteration >= self.config.iterations
    }
}

pub struct TrainOptions<'a> {
    pub exec: Execution,
    pub backend: BackendChoice,
    pub table: Option<Arc<NoiseTable>>,
    /// Run at most this many iterations in this call.
    pub max_iterations: Option<u64>,
    pub progress: Option<&'a mut dyn FnMut(&IterationRecord)>,
}

impl Default for TrainOptions<'_> {
    fn default() -> Self {
        Self { exec: Execution::default(), backend: BackendChoice::Auto, table: None, max_iterations: None, progress: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub records: Vec<IterationRecord>,
    pub iterations: u64,
    pub success_iteration: Option<u64>,
    pub final_eval: Option<EvalReport>,
}

/// Starts a fresh run in `run_dir`, which must not already hold one.
pub fn train(config: &RunConfig, run_dir: &Path, opts: TrainOptions<'_>) -> Result<TrainSummary> {
    config.resolve()?;
    if run_dir.join(CONFIG_FILE).exists() {
        return Err(validation(format!("{} already holds a run; resume it instead", run_dir.display())));
    }
    fs::create_dir_all(run_dir)?;
    let run = Run::start(config, opts.table.clone(), opts.exec)?;
    fs::write(run_dir.join(CONFIG_FILE), config.to_text())?;
    let log = RunLog::create(&run_dir.join(RUNLOG_FILE))?;
    run.save(run_dir)?;
    drive(run, log, run_dir, opts)
}

/// Continues the run in `run_dir` from its last saved iteration.
pub fn resume(run_dir: &Path, opts: TrainOptions<'_>) -> Result<TrainSummary> {
    let run = Run::restore(run_dir, opts.table.clone(), opts.exec)?;
    let log = RunLog::reopen(&run_dir.join(RUNLOG_FILE), run.coordinator.iteration)?;
    drive(run, log, run_dir, opts)
}

fn drive(mut run: Run, mut log: RunLog, run_dir: &Path, mut opts: TrainOptions<'_>) -> Result<TrainSummary> {
    let mut backend = run.backend(&opts.backend, opts.exec)?;
    let mut records = Vec::new();
    let mut success_iteration = None;
    let budget_end = opts.max_iterations.map(|m| run.coordinator.iteration + m);
    while !run.is_finished() && budget_end.is_none_or(|end| run.coordinator.iteration < end) {
        let rec = run.step(backend.as_mut())?;
        log.append(&rec)?;
        if let Some(p) = opts.progress.as_mut() {
            p(&rec);
        }
        if run.config.checkpoint_every > 0 && rec.iteration % run.config.checkpoint_every == 0 {
            run.save(run_dir)?;
        }
        let reached = rec.eval_reach_rate >= 0.5;
        records.push(rec);
        if reached && success_iteration.is_none() {
            success_iteration = Some(run.coordinator.iteration);
            if run.config.stop_on_success {
                break;
            }
        }
    }
    backend.shutdown()?;
    run.save(run_dir)?;
    let final_eval = if run.is_finished() || success_iteration.is_some() {
        let c = &run.config;
        let report = eval_checkpoint(
            &run.checkpoint(),
            &run.coordinator.ctx.env,
            &eval_seeds(c.seed, c.eval_episodes),
            c.rtg_target,
            opts.exec,
        )?;
        fs::write(run_dir.join(FINAL_EVAL_FILE), serde_json::to_string_pretty(&report)?)?;
        Some(report)
    } else {
        None
    };
    Ok(TrainSummary { records, iterations: run.coordinator.iteration, success_iteration, final_eval })
}
