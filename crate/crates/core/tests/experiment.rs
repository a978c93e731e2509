use std::path::Path;
use std::sync::Arc;

use nses_core::env::{EnvSpec, OBS_DIM};
use nses_core::es::NoiseTable;
use nses_core::experiment::{
    archive_export, archive_import, eval_checkpoint, eval_seeds, pretrain, read_runlog, resume, train, PretrainConfig,
    RunConfig, TrainOptions, CHECKPOINT_FILE, CONFIG_FILE, RUNLOG_FILE,
};
use nses_core::novelty::Archive;
use nses_core::parallel::Execution;
use nses_core::policy::checkpoint::{Checkpoint, MemberCheckpoint};
use nses_core::policy::{ParameterVector, PolicySpec};

const SMALL: &str = "algorithm = nsr-es\niterations = 6\npop_pairs = 10\nseed = 8\nnoise_len = 200000\neval_episodes = 3\ncheckpoint_every = 2\n";

fn opts(table: &Arc<NoiseTable>) -> TrainOptions<'static> {
    TrainOptions { exec: Execution::Sequential, table: Some(table.clone()), ..TrainOptions::default() }
}

fn table(cfg: &RunConfig) -> Arc<NoiseTable> {
    Arc::new(NoiseTable::build(cfg.noise_seed, cfg.noise_len))
}

fn numeric_log(dir: &Path) -> Vec<String> {
    read_runlog(&dir.join(RUNLOG_FILE))
        .unwrap()
        .into_iter()
        .map(|mut r| {
            r.wall_ms = 0.0;
            serde_json::to_string(&r).unwrap()
        })
        .collect()
}

#[test]
fn smoke_run_writes_one_record_per_iteration() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::from_text(SMALL).unwrap();
    cfg.iterations = 5;
    let summary = train(&cfg, tmp.path(), opts(&table(&cfg))).unwrap();
    let log = read_runlog(&tmp.path().join(RUNLOG_FILE)).unwrap();
    assert_eq!(log.len(), 5);
    assert_eq!(log.iter().map(|r| r.iteration).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    assert_eq!(summary.records, log);
    assert!(summary.final_eval.is_some());
    // refuses to overwrite
    assert!(train(&cfg, tmp.path(), opts(&table(&cfg))).unwrap_err().is_validation());
}

#[test]
fn reruns_are_identical_and_resume_is_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_text(SMALL).unwrap();
    let t = table(&cfg);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    train(&cfg, &a, opts(&t)).unwrap();
    train(&cfg, &b, opts(&t)).unwrap();
    assert_eq!(numeric_log(&a), numeric_log(&b));

    // stop after 3 iterations, then resume to the end
    train(&cfg, &c, TrainOptions { max_iterations: Some(3), ..opts(&t) }).unwrap();
    assert_eq!(read_runlog(&c.join(RUNLOG_FILE)).unwrap().len(), 3);
    resume(&c, opts(&t)).unwrap();
    assert_eq!(numeric_log(&a), numeric_log(&c));
    let full = Checkpoint::load(&a.join(CHECKPOINT_FILE)).unwrap();
    let resumed = Checkpoint::load(&c.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(full.to_bytes().unwrap(), resumed.to_bytes().unwrap());
}

#[test]
fn resume_with_a_different_spec_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_text(SMALL).unwrap();
    let t = table(&cfg);
    train(&cfg, tmp.path(), TrainOptions { max_iterations: Some(2), ..opts(&t) }).unwrap();
    let mut changed = cfg.clone();
    changed.mlp_hidden = vec![8, 8];
    std::fs::write(tmp.path().join(CONFIG_FILE), changed.to_text()).unwrap();
    assert!(resume(tmp.path(), opts(&t)).unwrap_err().is_validation());
}

#[test]
fn invalid_config_fails_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let cfg = RunConfig::from_text("algorithm = es\nk = 0\n").unwrap();
    assert!(train(&cfg, &dir, TrainOptions::default()).unwrap_err().is_validation());
    assert!(!dir.exists());
    assert!(RunConfig::from_text("algorithm = es\nunknown = 1\n").unwrap_err().is_validation());
}

#[test]
fn resolution_rules() {
    let es = RunConfig::from_text("algorithm = es\nmetapop_size = 5\n").unwrap().resolve().unwrap();
    assert_eq!(es.metapop_size, 1);
    let dt = RunConfig::from_text("algorithm = ns-es\npolicy = dt\n").unwrap().resolve().unwrap();
    assert_eq!(dt.pop_pairs, 400);
    let dt = RunConfig::from_text("algorithm = ns-es\npolicy = dt\npop_pairs = 30\n").unwrap().resolve().unwrap();
    assert_eq!(dt.pop_pairs, 30);
    let text = RunConfig::from_text(SMALL).unwrap().to_text();
    assert_eq!(RunConfig::from_text(&text).unwrap().to_text(), text);
}

#[test]
fn eval_is_deterministic_and_picks_the_farthest_member() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_text(SMALL).unwrap();
    train(&cfg, tmp.path(), opts(&table(&cfg))).unwrap();
    let ckpt = Checkpoint::load(&tmp.path().join(CHECKPOINT_FILE)).unwrap();
    let env = EnvSpec::deceptive_maze();
    let seeds = eval_seeds(1, 10);
    let a = eval_checkpoint(&ckpt, &env, &seeds, cfg.rtg_target, Execution::Sequential).unwrap();
    let b = eval_checkpoint(&ckpt, &env, &seeds, cfg.rtg_target, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.members.len(), 5);
    let mut best = 0;
    for (i, m) in a.members.iter().enumerate() {
        if m.mean_distance > a.members[best].mean_distance {
            best = i;
        }
    }
    assert_eq!(a.best_member, best);

    let single = Checkpoint { members: vec![ckpt.members[2].clone()], ..ckpt.clone() };
    let one = eval_checkpoint(&single, &env, &seeds, cfg.rtg_target, Execution::Sequential).unwrap();
    assert_eq!(one.best_member, 0);
    assert_eq!(one.members[0].mean_distance, a.members[2].mean_distance);
}

#[test]
fn archive_export_import_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_text(SMALL).unwrap();
    train(&cfg, &tmp.path().join("run"), opts(&table(&cfg))).unwrap();
    let out = tmp.path().join("archive.txt");
    let exported = archive_export(&tmp.path().join("run"), &out).unwrap();
    assert_eq!(exported.len(), 5 + 6);
    let imported = archive_import(&out, &cfg).unwrap();
    assert_eq!(imported.entries(), exported.entries());
    assert_eq!(Archive::load(&out).unwrap(), exported);

    // a point already archived is less novel than against an empty archive
    let p = exported.entries()[0];
    assert!(imported.novelty(p) < Archive::new(cfg.k).unwrap().novelty(p));
}

fn constant_teacher(spec: &PolicySpec, action: [f64; 2]) -> Checkpoint {
    let mut params = vec![0.0; spec.param_count()];
    let n = params.len();
    // output biases are the last act_dim entries of an MLP
    params[n - 2] = action[0].atanh();
    params[n - 1] = action[1].atanh();
    Checkpoint {
        spec: spec.clone(),
        members: vec![MemberCheckpoint { params: ParameterVector::new(params).unwrap(), optimizer: None }],
        normalizer: None,
        pretrained: false,
    }
}

#[test]
fn pretraining_clones_a_constant_teacher() {
    let teacher_spec = PolicySpec::mlp(OBS_DIM, &[16, 16], 2);
    let teacher = constant_teacher(&teacher_spec, [0.6, -0.3]);
    let student = PolicySpec::desk_dt(OBS_DIM, 2);
    let cfg = PretrainConfig { episodes: 10, ..PretrainConfig::default() };
    let (ckpt, report) = pretrain(&teacher, &student, &cfg, Execution::Parallel).unwrap();
    assert!(ckpt.pretrained);
    assert_eq!(ckpt.spec, student);
    assert_eq!(report.fitness.len(), 200);
    assert!(report.final_mse < 1e-3, "final mse {}", report.final_mse);

    // the dataset is frozen, so a rerun retraces the same fitness sequence
    let cfg_short = PretrainConfig { iterations: 5, ..cfg.clone() };
    let (_, a) = pretrain(&teacher, &student, &cfg_short, Execution::Sequential).unwrap();
    let (_, b) = pretrain(&teacher, &student, &cfg_short, Execution::Parallel).unwrap();
    assert_eq!(a.fitness, b.fitness);
    assert_eq!(a.fitness[..], report.fitness[..5]);
}

#[test]
fn pretraining_rejects_mismatched_action_dims() {
    let teacher = constant_teacher(&PolicySpec::mlp(OBS_DIM, &[4], 2), [0.1, 0.1]);
    let student = PolicySpec::desk_dt(OBS_DIM, 3);
    let err = pretrain(&teacher, &student, &PretrainConfig::default(), Execution::Sequential).unwrap_err();
    assert!(err.is_validation());
}
