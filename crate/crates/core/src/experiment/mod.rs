//! Runs, run directories and the exports built on top of them.
//!
//! A run directory holds `config.txt`, `runlog.jsonl`, `checkpoint.ckpt`,
//! `archive.txt`, `state.json` and, once finished, `final_eval.json`.

mod config;
mod eval;
mod export;
mod pretrain;
mod run;
mod runlog;

pub use config::{
    Resolved, RunConfig, DEFAULT_EVAL_EPISODES, DEFAULT_ITERATIONS, DEFAULT_LR, DEFAULT_NOISE_SEED, DEFAULT_POP_PAIRS,
    DEFAULT_RTG_TARGET, DEFAULT_SIGMA, DEFAULT_WEIGHT_DECAY, DT_POP_FACTOR, PRETRAINED_STEP,
};
pub use eval::{eval_checkpoint, eval_seeds, EvalReport, MemberEval};
pub use export::{archive_export, archive_import, plot_export, DistanceRow, FitnessRow, PlotTables, StepsRow};
pub use pretrain::{collect_dataset, imitation_fitness, pretrain, Dataset, PretrainConfig, PretrainReport, Sample};
pub use run::{resume, train, BackendChoice, Run, RunState, TrainOptions, TrainSummary};
pub use runlog::{read_runlog, RunLog};

pub const CONFIG_FILE: &str = "config.txt";
pub const RUNLOG_FILE: &str = "runlog.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const ARCHIVE_FILE: &str = "archive.txt";
pub const STATE_FILE: &str = "state.json";
pub const FINAL_EVAL_FILE: &str = "final_eval.json";
