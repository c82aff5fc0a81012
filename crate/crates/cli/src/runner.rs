//! Single experiment runs and their on-disk artifacts.
//!
//! A run directory holds `trace.jsonl` (one object per step, deterministic
//! given config and seed), `timing.jsonl` (wall-clock per step) and
//! `summary.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use irkm_core::data::{load_csv, random_rotation, tagged_stream, Dataset, Distribution, StreamTag, TargetSpec};
use irkm_core::kernels::Weights;
use irkm_core::trainers::{irkm_run, krr_baseline, rfm_run, DataSource, FixedSource, GroundTruth, PoolSource, StepRecord, SyntheticSource, TrainTrace};
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::config::{Config, DistributionKind, Method};
use crate::target::parse_target;
use crate::{version_string, CliError};

/// Everything a run needs besides the trainer settings.
pub struct Experiment {
    pub source: Box<dyn DataSource + Send>,
    pub test: Dataset,
    pub target: Option<TargetSpec>,
    pub distribution: Option<Distribution>,
    /// Training rows per step when fixed by the data (csv).
    pub fixed_n: Option<usize>,
}

/// Builds data source and test set for `seed`.
pub fn build_experiment(cfg: &Config, n: usize, seed: u64) -> Result<Experiment, CliError> {
    match cfg.distribution {
        DistributionKind::Csv => {
            let csv = cfg.csv.as_ref().expect("validated");
            let data = load_csv(&csv.path, &cfg.csv_schema().expect("validated"))?;
            let total = data.len();
            let n_test = ((total as f64) * csv.test_fraction).round() as usize;
            if n_test == 0 || n_test >= total {
                return Err(CliError::Config(format!("csv.test_fraction: leaves an empty split for {total} rows")));
            }
            let mut order: Vec<usize> = (0..total).collect();
            order.shuffle(&mut tagged_stream(seed, StreamTag::Pool, 1));
            let take = |idx: &[usize], meta: &str| {
                Dataset::new(data.x.select_rows(idx), data.y.select_rows(idx), meta.to_string())
            };
            let test = take(&order[..n_test], "csv-test")?;
            let train = take(&order[n_test..], "csv-train")?;
            Ok(Experiment {
                fixed_n: Some(train.len()),
                source: Box::new(FixedSource(train)),
                test,
                target: None,
                distribution: None,
            })
        }
        kind => {
            let d = cfg.d.expect("validated");
            let dist = if kind == DistributionKind::Gaussian {
                Distribution::Gaussian
            } else {
                Distribution::Hypercube
            };
            let f = parse_target(cfg.target.as_deref().expect("validated"), d).map_err(|e| CliError::Config(format!("target: {e}")))?;
            let rotation = cfg
                .rotation
                .then(|| random_rotation(d, &mut tagged_stream(seed, StreamTag::Rotation, 0)));
            let target = TargetSpec::new(f, rotation, cfg.noise_sigma)?;
            let tx = dist.sample(cfg.test_size_for(n), d, &mut tagged_stream(seed, StreamTag::Test, 0));
            let ty = target.clean(&tx)?;
            let test = Dataset::new(tx, ty, "test")?;
            let source: Box<dyn DataSource + Send> = if cfg.finite_pool {
                Box::new(PoolSource::synthetic(&target, dist, seed, n)?)
            } else {
                Box::new(SyntheticSource {
                    target: target.clone(),
                    distribution: dist,
                    seed,
                })
            };
            Ok(Experiment {
                source,
                test,
                target: Some(target),
                distribution: Some(dist),
                fixed_n: None,
            })
        }
    }
}

#[derive(Serialize)]
struct TraceLine<'a> {
    step: usize,
    test_mse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diag: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eigvals: Option<&'a [f64]>,
    w1_raw: &'a [f64],
    w2_raw: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    jitter: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    agop_rel_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    principal_angle: Option<f64>,
}

#[derive(Serialize)]
struct TimingLine {
    step: usize,
    wall_ms: f64,
}

/// Outcome of one `(method, n, seed)` run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub method: Method,
    pub n: usize,
    pub seed: u64,
    pub d: usize,
    pub trace: TrainTrace,
    pub final_weights: Weights,
}

impl RunResult {
    pub fn best(&self) -> &StepRecord {
        self.trace.best().expect("nonempty trace")
    }

    pub fn final_record(&self) -> &StepRecord {
        self.trace.last().expect("nonempty trace")
    }

    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.trace.records {
            let rfm = self.method == Method::Rfm;
            let line = TraceLine {
                step: r.step,
                test_mse: r.test_mse,
                weights: (!rfm).then_some(r.weights.as_slice()),
                diag: rfm.then_some(r.weights.as_slice()),
                eigvals: r.eigvals.as_deref(),
                w1_raw: &r.w1_raw,
                w2_raw: &r.w2_raw,
                sigma: r.sigma,
                jitter: r.jitter,
                agop_rel_error: r.agop_rel_error,
                principal_angle: r.principal_angle,
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn timing_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.trace.records {
            out.push_str(&serde_json::to_string(&TimingLine { step: r.step, wall_ms: r.wall_ms }).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn summary(&self, cfg: &Config) -> serde_json::Value {
        let final_weights = match &self.final_weights {
            Weights::Vector(w) => serde_json::json!({ "weights": w.values() }),
            Weights::Matrix(m) => serde_json::json!({
                "diag": m.matrix().diagonal(),
                "eigvals": m.matrix().eigenvalues(),
            }),
        };
        serde_json::json!({
            "version": version_string(),
            "method": self.method.name(),
            "seed": self.seed,
            "n": self.n,
            "d": self.d,
            "steps_run": self.trace.records.len(),
            "stopped_early": self.trace.stopped_early,
            "best_step": self.trace.best_step,
            "best_test_mse": self.best().test_mse,
            "final_test_mse": self.final_record().test_mse,
            "final": final_weights,
            "config": cfg,
        })
    }

    pub fn dir_name(&self) -> String {
        format!("{}-seed{}", self.method.name(), self.seed)
    }

    /// Writes `trace.jsonl`, `timing.jsonl` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path, cfg: &Config) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("trace.jsonl"), self.trace_jsonl())?;
        fs::write(dir.join("timing.jsonl"), self.timing_jsonl())?;
        let mut f = fs::File::create(dir.join("summary.json"))?;
        writeln!(f, "{}", serde_json::to_string_pretty(&self.summary(cfg)).expect("serializable"))?;
        Ok(())
    }
}

/// Runs one method on the experiment defined by `cfg` at sample size `n`.
pub fn execute(cfg: &Config, method: Method, n: usize, seed: u64) -> Result<RunResult, CliError> {
    let mut exp = build_experiment(cfg, n, seed)?;
    let n = exp.fixed_n.unwrap_or(n);
    let d = exp.source.dim();
    let tc = cfg.train_config(n, seed)?;
    let (trace, final_weights) = match method {
        Method::Krr => {
            let batch = exp.source.batch(1, n)?;
            let start = std::time::Instant::now();
            let (model, mse) = krr_baseline(&tc, &batch.x, &batch.y, &exp.test)?;
            let record = StepRecord {
                step: 1,
                test_mse: mse,
                weights: vec![1.0; d],
                eigvals: None,
                w1_raw: Vec::new(),
                w2_raw: Vec::new(),
                sigma: model.spec().bandwidth(),
                jitter: model.jitter_used(),
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
                agop_rel_error: None,
                principal_angle: None,
            };
            let trace = TrainTrace {
                records: vec![record],
                best_step: 1,
                stopped_early: false,
            };
            (trace, model.weights().clone())
        }
        Method::Irkm => {
            let out = irkm_run(&tc, exp.source.as_mut(), &exp.test)?;
            (out.trace, out.final_weights)
        }
        Method::Rfm => {
            let truth = match (&exp.target, exp.distribution) {
                (Some(t), Some(dist)) => {
                    let g = t.ground_truth_agop(dist, cfg.gt_samples, &mut tagged_stream(seed, StreamTag::GroundTruth, 0))?;
                    Some(GroundTruth::new(g, cfg.top_k.min(d))?)
                }
                _ => None,
            };
            let out = rfm_run(&tc, exp.source.as_mut(), &exp.test, truth.as_ref())?;
            (out.trace, out.final_weights)
        }
    };
    Ok(RunResult {
        method,
        n,
        seed,
        d,
        trace,
        final_weights,
    })
}

/// `irkm run`: every method × seed at the single configured `n`.
pub fn cmd_run(cfg: &Config) -> Result<Vec<RunResult>, CliError> {
    let sizes = match cfg.distribution {
        DistributionKind::Csv => vec![0],
        _ => cfg.sample_sizes()?,
    };
    if sizes.len() != 1 {
        return Err(CliError::Config("n: `run` takes a single sample size; use `sweep` for a grid".into()));
    }
    let n = sizes[0];
    let mut results = Vec::new();
    for &seed in &cfg.seeds {
        for method in cfg.method.list() {
            let r = execute(cfg, method, n, seed)?;
            r.write(&cfg.out_dir.join(r.dir_name()), cfg)?;
            results.push(r);
        }
    }
    write_top_summary(&cfg.out_dir, cfg, &results)?;
    Ok(results)
}

pub(crate) fn write_top_summary(dir: &Path, cfg: &Config, results: &[RunResult]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let runs: Vec<serde_json::Value> = results
        .iter()
        .map(|r| {
            serde_json::json!({
                "method": r.method.name(),
                "n": r.n,
                "seed": r.seed,
                "dir": r.dir_name(),
                "best_step": r.trace.best_step,
                "best_test_mse": r.best().test_mse,
                "final_test_mse": r.final_record().test_mse,
            })
        })
        .collect();
    let summary = serde_json::json!({
        "version": version_string(),
        "config": cfg,
        "runs": runs,
    });
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary).expect("serializable") + "\n")?;
    Ok(path)
}
