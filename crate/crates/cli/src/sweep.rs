//! Grids over sample size, seed and method.
//!
//! Runs execute in parallel on a pool sized by `IRKM_THREADS` (default: all
//! cores). Output order does not depend on scheduling.

use std::path::Path;

use rayon::prelude::*;

use crate::config::{Config, DistributionKind, Method};
use crate::runner::{execute, write_top_summary, RunResult};
use crate::CliError;

/// One row of `plotdata.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub n: usize,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

pub fn thread_count() -> Option<usize> {
    std::env::var("IRKM_THREADS").ok()?.trim().parse().ok().filter(|&t| t > 0)
}

/// Executes every `(n, seed, method)` combination.
pub fn run_grid(cfg: &Config) -> Result<Vec<RunResult>, CliError> {
    let sizes = match cfg.distribution {
        DistributionKind::Csv => vec![0],
        _ => cfg.sample_sizes()?,
    };
    let mut jobs = Vec::new();
    for &n in &sizes {
        for &seed in &cfg.seeds {
            for method in cfg.method.list() {
                jobs.push((method, n, seed));
            }
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_count() {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(|&(m, n, s)| execute(cfg, m, n, s)).collect())
}

/// Mean and spread of the best test MSE per `(method, n)`, in first-seen order.
pub fn aggregate(results: &[RunResult]) -> Vec<Aggregate> {
    let mut keys: Vec<(Method, usize)> = Vec::new();
    for r in results {
        if !keys.contains(&(r.method, r.n)) {
            keys.push((r.method, r.n));
        }
    }
    keys.into_iter()
        .map(|(method, n)| {
            let v: Vec<f64> = results
                .iter()
                .filter(|r| r.method == method && r.n == n)
                .map(|r| r.best().test_mse)
                .collect();
            let count = v.len();
            let mean = v.iter().sum::<f64>() / count as f64;
            let std = if count > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
            } else {
                0.0
            };
            Aggregate { method, n, count, mean, std }
        })
        .collect()
}

/// Writes `sweep.csv`, `plotdata.csv`, `summary.json` and one directory per run.
pub fn write_outputs(dir: &Path, cfg: &Config, results: &[RunResult]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for r in results {
        r.write(&dir.join(format!("n{}", r.n)).join(r.dir_name()), cfg)?;
    }
    let csv_err = |e: csv::Error| CliError::Runtime(format!("csv output: {e}"));

    let mut w = csv::Writer::from_path(dir.join("sweep.csv")).map_err(csv_err)?;
    w.write_record(["method", "d", "n", "seed", "step_best", "test_mse"]).map_err(csv_err)?;
    for r in results {
        w.write_record([
            r.method.name().to_string(),
            r.d.to_string(),
            r.n.to_string(),
            r.seed.to_string(),
            r.trace.best_step.to_string(),
            r.best().test_mse.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("plotdata.csv")).map_err(csv_err)?;
    w.write_record(["method", "n", "count", "mean_test_mse", "std_test_mse"]).map_err(csv_err)?;
    for a in aggregate(results) {
        w.write_record([
            a.method.name().to_string(),
            a.n.to_string(),
            a.count.to_string(),
            a.mean.to_string(),
            a.std.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    write_top_summary(dir, cfg, results)?;
    Ok(())
}

/// `irkm sweep`.
pub fn cmd_sweep(cfg: &Config) -> Result<Vec<RunResult>, CliError> {
    let results = run_grid(cfg)?;
    write_outputs(&cfg.out_dir, cfg, &results)?;
    Ok(results)
}
