use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use nses_core::dist::run_worker;
use nses_core::env::{EnvKind, EnvSpec};
use nses_core::experiment::{
    archive_export, archive_import, eval_checkpoint, eval_seeds, plot_export, pretrain, resume, train, BackendChoice,
    PretrainConfig, RunConfig, TrainOptions, DEFAULT_RTG_TARGET,
};
use nses_core::parallel::Execution;
use nses_core::policy::checkpoint::Checkpoint;
use nses_core::policy::PolicySpec;

#[derive(Parser)]
#[command(name = "nses", version, about = "Novelty-search evolution strategies on desk-scale mazes")]
struct Cli {
    /// Evaluate on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a config file, or resume an existing run directory.
    Train(TrainArgs),
    /// Serve evaluation tasks for a listening coordinator.
    Worker {
        #[arg(long)]
        connect: String,
    },
    /// Evaluate every member of a checkpoint.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value = "deceptive-maze")]
        env: EnvKind,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_RTG_TARGET)]
        rtg_target: f64,
        /// Write the JSON report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Clone a teacher checkpoint into a student architecture.
    Pretrain(PretrainArgs),
    #[command(subcommand)]
    Archive(ArchiveCommand),
    /// Write fitness, steps and distance CSV tables for a set of runs.
    PlotExport {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, required_unless_present = "resume")]
    config: Option<PathBuf>,
    /// Continue the run stored in `--run-dir`.
    #[arg(long, conflicts_with = "config")]
    resume: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Wait for TCP workers on this address.
    #[arg(long)]
    listen: Option<String>,
    #[arg(long, default_value = "run")]
    run_dir: PathBuf,
    /// Train this many consecutive seeds, each in `<run-dir>/seed-<n>`.
    #[arg(long, default_value_t = 1)]
    repeats: u64,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    teacher: PathBuf,
    #[arg(long)]
    student_spec: PathBuf,
    #[arg(long, default_value = "pretrained.ckpt")]
    out: PathBuf,
    #[arg(long, default_value = "deceptive-maze")]
    env: EnvKind,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    pop_pairs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Start the student from the teacher weights (same spec only).
    #[arg(long)]
    init_from_teacher: bool,
}

#[derive(Subcommand)]
enum ArchiveCommand {
    /// Copy a run's behavior archive to a file.
    Export {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Point a run config at an exported archive so the run starts from it.
    Import {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Updated config path; defaults to rewriting `--config`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match dispatch(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e.chain().any(|c| c.downcast_ref::<nses_core::Error>().is_some_and(|e| e.is_validation()));
            ExitCode::from(if validation { 2 } else { 3 })
        }
    }
}

fn dispatch(command: Command, exec: Execution) -> anyhow::Result<()> {
    match command {
        Command::Train(args) => train_cmd(args, exec),
        Command::Worker { connect } => Ok(run_worker(&connect, exec)?),
        Command::Eval { ckpt, env, episodes, seed, rtg_target, out } => {
            let checkpoint = Checkpoint::load(&ckpt)?;
            let report = eval_checkpoint(&checkpoint, &EnvSpec::for_kind(env), &eval_seeds(seed, episodes), rtg_target, exec)?;
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(out) = out {
                std::fs::write(&out, &json).with_context(|| format!("writing {}", out.display()))?;
            }
            println!("{json}");
            Ok(())
        }
        Command::Pretrain(args) => pretrain_cmd(args, exec),
        Command::Archive(ArchiveCommand::Export { run_dir, out }) => {
            let archive = archive_export(&run_dir, &out)?;
            println!("exported {} behaviors to {}", archive.len(), out.display());
            Ok(())
        }
        Command::Archive(ArchiveCommand::Import { archive, config, out }) => {
            let mut cfg = RunConfig::load(&config)?;
            let loaded = archive_import(&archive, &cfg)?;
            cfg.archive_import = Some(archive.clone());
            cfg.resolve()?;
            let out = out.unwrap_or(config);
            std::fs::write(&out, cfg.to_text()).with_context(|| format!("writing {}", out.display()))?;
            println!("{} will start from {} archived behaviors", out.display(), loaded.len());
            Ok(())
        }
        Command::PlotExport { runs, out } => {
            let tables = plot_export(&runs, &out)?;
            println!("wrote {} iterations from {} runs to {}", tables.fitness.len(), runs.len(), out.display());
            Ok(())
        }
    }
}

fn train_cmd(args: TrainArgs, exec: Execution) -> anyhow::Result<()> {
    if args.resume {
        return train_one(None, &args.run_dir, &args, exec);
    }
    let path = args.config.as_deref().expect("clap requires --config without --resume");
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(workers) = args.workers {
        config.workers = workers;
    }
    config.resolve()?;
    if args.repeats == 0 {
        bail!(nses_core::Error::Validation("--repeats must be at least 1".into()));
    }
    if args.repeats == 1 {
        return train_one(Some(&config), &args.run_dir, &args, exec);
    }
    let first = config.seed;
    for seed in first..first + args.repeats {
        config.seed = seed;
        train_one(Some(&config), &args.run_dir.join(format!("seed-{seed}")), &args, exec)?;
    }
    Ok(())
}

fn train_one(config: Option<&RunConfig>, run_dir: &Path, args: &TrainArgs, exec: Execution) -> anyhow::Result<()> {
    let quiet = args.quiet;
    let mut progress = |r: &nses_core::dist::IterationRecord| {
        if !quiet {
            eprintln!(
                "iter {:>4} member {} eval {:+.4} reach {:.2} novelty {:.3} archive {} ({} ms)",
                r.iteration, r.member_index, r.eval_fitness, r.eval_reach_rate, r.novelty, r.archive_size, r.wall_ms
            );
        }
    };
    let opts = TrainOptions {
        exec,
        backend: match &args.listen {
            Some(addr) => BackendChoice::Tcp(addr.clone()),
            None => BackendChoice::Auto,
        },
        progress: Some(&mut progress),
        ..TrainOptions::default()
    };
    let summary = match config {
        Some(c) => train(c, run_dir, opts),
        None => resume(run_dir, opts),
    }
    .with_context(|| format!("run in {}", run_dir.display()))?;
    match summary.success_iteration {
        Some(it) => println!("{}: goal reached at iteration {it}", run_dir.display()),
        None => println!("{}: finished {} iterations", run_dir.display(), summary.iterations),
    }
    if let Some(report) = summary.final_eval {
        let best = &report.members[report.best_member];
        println!(
            "best member {} mean distance {:.3} reach rate {:.2}",
            best.member, best.mean_distance, best.reach_rate
        );
    }
    Ok(())
}

fn pretrain_cmd(args: PretrainArgs, exec: Execution) -> anyhow::Result<()> {
    let teacher = Checkpoint::load(&args.teacher)?;
    let text = std::fs::read_to_string(&args.student_spec)
        .with_context(|| format!("reading {}", args.student_spec.display()))?;
    let student = PolicySpec::from_text(&text)?;
    let d = PretrainConfig::default();
    let cfg = PretrainConfig {
        env: args.env,
        iterations: args.iterations.unwrap_or(d.iterations),
        episodes: args.episodes.unwrap_or(d.episodes),
        pop_pairs: args.pop_pairs.unwrap_or(d.pop_pairs),
        seed: args.seed,
        init_from_teacher: args.init_from_teacher,
        ..d
    };
    let (ckpt, report) = pretrain(&teacher, &student, &cfg, exec)?;
    ckpt.save(&args.out)?;
    println!(
        "pretrained on {} samples: fitness {:.6} -> {:.6}, final mse {:.6}, saved {}",
        report.samples,
        report.fitness.first().copied().unwrap_or(f64::NAN),
        report.fitness.last().copied().unwrap_or(f64::NAN),
        report.final_mse,
        args.out.display()
    );
    Ok(())
}
