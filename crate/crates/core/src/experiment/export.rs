use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::runlog::read_runlog;
use super::{ARCHIVE_FILE, RUNLOG_FILE};
use crate::dist::IterationRecord;
use crate::error::{validation, Result};
use crate::novelty::Archive;
use crate::stats::{quantile_sorted, mean};

/// Copies the archive of `run_dir` to `out` after checking it parses.
pub fn archive_export(run_dir: &Path, out: &Path) -> Result<Archive> {
    let archive = Archive::load(&run_dir.join(ARCHIVE_FILE))?;
    archive.save(out)?;
    Ok(archive)
}

/// Loads an exported archive as the initial archive of a run using
/// `config.k`.
pub fn archive_import(path: &Path, config: &RunConfig) -> Result<Archive> {
    let loaded = Archive::load(path)?;
    Archive::with_entries(config.k, loaded.entries().to_vec())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitnessRow {
    pub iteration: u64,
    pub runs: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepsRow {
    pub iteration: u64,
    pub samples: usize,
    pub mean: f64,
    pub p2_5: f64,
    pub p97_5: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceRow {
    pub run: String,
    pub iterations: u64,
    pub final_eval_distance: f64,
    pub best_member_distance: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotTables {
    pub fitness: Vec<FitnessRow>,
    pub steps: Vec<StepsRow>,
    pub distance: Vec<DistanceRow>,
}

impl PlotTables {
    /// Per iteration: median and quartiles of the evaluated mean's fitness
    /// across runs, and the mean with 2.5/97.5 percentiles of every
    /// population episode length pooled across runs. Plus the final
    /// distance of each run.
    pub fn from_runs(runs: &[(String, Vec<IterationRecord>)]) -> Result<Self> {
        if runs.is_empty() {
            return Err(validation("plot export needs at least one run"));
        }
        let last = runs.iter().filter_map(|(_, r)| r.last().map(|x| x.iteration)).max().unwrap_or(0);
        let mut tables = PlotTables::default();
        for it in 1..=last {
            let recs: Vec<&IterationRecord> = runs.iter().filter_map(|(_, r)| r.iter().find(|x| x.iteration == it)).collect();
            if recs.is_empty() {
                continue;
            }
            let mut fit: Vec<f64> = recs.iter().map(|r| r.eval_fitness).collect();
            fit.sort_by(f64::total_cmp);
            tables.fitness.push(FitnessRow {
                iteration: it,
                runs: fit.len(),
                median: quantile_sorted(&fit, 0.5),
                q1: quantile_sorted(&fit, 0.25),
                q3: quantile_sorted(&fit, 0.75),
            });
            let mut steps: Vec<f64> = recs.iter().flat_map(|r| r.steps.iter().map(|&s| s as f64)).collect();
            if !steps.is_empty() {
                steps.sort_by(f64::total_cmp);
                tables.steps.push(StepsRow {
                    iteration: it,
                    samples: steps.len(),
                    mean: mean(&steps),
                    p2_5: quantile_sorted(&steps, 0.025),
                    p97_5: quantile_sorted(&steps, 0.975),
                });
            }
        }
        for (name, recs) in runs {
            if let Some(r) = recs.last() {
                tables.distance.push(DistanceRow {
                    run: name.clone(),
                    iterations: r.iteration,
                    final_eval_distance: r.eval_distance,
                    best_member_distance: r.member_distances.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                });
            }
        }
        Ok(tables)
    }

    pub fn fitness_csv(&self) -> String {
        let mut s = String::from("iteration,runs,median,q1,q3\n");
        for r in &self.fitness {
            let _ = writeln!(s, "{},{},{},{},{}", r.iteration, r.runs, r.median, r.q1, r.q3);
        }
        s
    }

    pub fn steps_csv(&self) -> String {
        let mut s = String::from("iteration,samples,mean,p2_5,p97_5\n");
        for r in &self.steps {
            let _ = writeln!(s, "{},{},{},{},{}", r.iteration, r.samples, r.mean, r.p2_5, r.p97_5);
        }
        s
    }

    pub fn distance_csv(&self) -> String {
        let mut s = String::from("run,iterations,final_eval_distance,best_member_distance\n");
        for r in &self.distance {
            let _ = writeln!(s, "{},{},{},{}", r.run, r.iterations, r.final_eval_distance, r.best_member_distance);
        }
        s
    }
}

/// Reads the run logs of `run_dirs` and writes `fitness.csv`, `steps.csv`
/// and `distance.csv` into `out_dir`.
pub fn plot_export(run_dirs: &[PathBuf], out_dir: &Path) -> Result<PlotTables> {
    let runs = run_dirs
        .iter()
        .map(|d| {
            let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| d.display().to_string());
            Ok((name, read_runlog(&d.join(RUNLOG_FILE))?))
        })
        .collect::<Result<Vec<_>>>()?;
    let tables = PlotTables::from_runs(&runs)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("fitness.csv"), tables.fitness_csv())?;
    fs::write(out_dir.join("steps.csv"), tables.steps_csv())?;
    fs::write(out_dir.join("distance.csv"), tables.distance_csv())?;
    Ok(tables)
}
