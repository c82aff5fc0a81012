//! The IRKM(α) and RFM(α) training loops and the plain KRR baseline.
//!
//! A step fits KRR under the current weights, records the test loss, and then
//! updates the weights from that fit. The weights stored in step `t`'s record
//! are therefore the ones used by step `t + 1`.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::data::{tagged_stream, Dataset, Distribution, StreamTag, TargetSpec};
use crate::error::{Error, Result};
use crate::estimators::{irkm_update, rfm_update};
use crate::kernels::{Bandwidth, KernelChoice, KernelSpec, WeightMatrix, WeightVector, Weights};
use crate::krr::KrrModel;
use crate::numerics::{principal_angle, relative_matrix_error, top_k_eigenspace, Subspace, SymmetricMatrix};

/// Safeguard `ε_s`, either fixed or `d^p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsRule {
    Fixed(f64),
    Power(f64),
}

impl Default for EpsRule {
    fn default() -> Self {
        EpsRule::Power(-0.75)
    }
}

impl EpsRule {
    pub fn value(&self, d: usize) -> f64 {
        match *self {
            EpsRule::Fixed(v) => v,
            EpsRule::Power(p) => (d as f64).powf(p),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub eps_s: EpsRule,
    /// Maximum number of steps `T`.
    pub steps: usize,
    pub lambda: f64,
    pub kernel: KernelChoice,
    pub n_per_step: usize,
    /// Draw a fresh batch every step; otherwise the first batch is reused.
    pub resample: bool,
    /// Stop after this many consecutive steps without a new best test loss;
    /// 0 disables early stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            eps_s: EpsRule::default(),
            steps: 20,
            lambda: 1e-3,
            kernel: KernelChoice::Laplacian(Bandwidth::default()),
            n_per_step: 100,
            resample: true,
            early_stop_patience: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::AlphaOutOfRange(self.alpha));
        }
        let eps = self.eps_s.value(d);
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Config(format!("eps_s must be > 0, got {eps}")));
        }
        if self.steps == 0 {
            return Err(Error::Config("T must be at least 1".into()));
        }
        if self.n_per_step == 0 {
            return Err(Error::Config("n_per_step must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Supplies training batches.
pub trait DataSource {
    fn dim(&self) -> usize;
    /// The batch for 1-based `step`, of `n` rows where the source allows it.
    fn batch(&mut self, step: usize, n: usize) -> Result<Dataset>;
}

/// Unlimited synthetic data: step `t` draws inputs from stream `(seed, Train, t)`
/// and label noise from `(seed, TrainNoise, t)`.
#[derive(Clone, Debug)]
pub struct SyntheticSource {
    pub target: TargetSpec,
    pub distribution: Distribution,
    pub seed: u64,
}

impl DataSource for SyntheticSource {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn batch(&mut self, step: usize, n: usize) -> Result<Dataset> {
        let idx = step as u32;
        let x = self.distribution.sample(n, self.dim(), &mut tagged_stream(self.seed, StreamTag::Train, idx));
        let y = self.target.label(&x, &mut tagged_stream(self.seed, StreamTag::TrainNoise, idx))?;
        Dataset::new(x, y, format!("synthetic:{:?}:step{step}", self.distribution))
    }
}

/// A fixed dataset returned whole at every step.
#[derive(Clone, Debug)]
pub struct FixedSource(pub Dataset);

impl DataSource for FixedSource {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn batch(&mut self, _step: usize, _n: usize) -> Result<Dataset> {
        if self.0.is_empty() {
            return Err(Error::EmptyDataSource);
        }
        Ok(self.0.clone())
    }
}

/// A finite pool cycled in consecutive blocks of `n` rows.
#[derive(Clone, Debug)]
pub struct PoolSource {
    pool: Dataset,
}

impl PoolSource {
    pub fn new(pool: Dataset) -> Self {
        Self { pool }
    }

    /// A pool of `2n` synthetic samples drawn from stream `(seed, Pool, 0)`.
    pub fn synthetic(target: &TargetSpec, distribution: Distribution, seed: u64, n: usize) -> Result<Self> {
        let mut rng = tagged_stream(seed, StreamTag::Pool, 0);
        let x = distribution.sample(2 * n, target.dim(), &mut rng);
        let y = target.label(&x, &mut rng)?;
        Ok(Self::new(Dataset::new(x, y, "pool")?))
    }
}

impl DataSource for PoolSource {
    fn dim(&self) -> usize {
        self.pool.dim()
    }

    fn batch(&mut self, step: usize, n: usize) -> Result<Dataset> {
        let total = self.pool.len();
        if total == 0 || n == 0 {
            return Err(Error::EmptyDataSource);
        }
        let n = n.min(total);
        let blocks = (total / n).max(1);
        let start = ((step.max(1) - 1) % blocks) * n;
        Dataset::new(
            self.pool.x.rows(start, n).into_owned(),
            self.pool.y.rows(start, n).into_owned(),
            format!("pool[{start}..{}]", start + n),
        )
    }
}

/// Reference AGOP for RFM diagnostics.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    agop: SymmetricMatrix,
    subspace: Subspace,
}

impl GroundTruth {
    pub fn new(agop: SymmetricMatrix, top_k: usize) -> Result<Self> {
        let subspace = top_k_eigenspace(&agop, top_k)?;
        Ok(Self { agop, subspace })
    }

    pub fn agop(&self) -> &SymmetricMatrix {
        &self.agop
    }

    pub fn top_k(&self) -> usize {
        self.subspace.rank()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub test_mse: f64,
    /// Weight vector after this step's update; the diagonal of `M` for RFM.
    pub weights: Vec<f64>,
    /// Eigenvalues of `M` after the update, nonincreasing (RFM only).
    pub eigvals: Option<Vec<f64>>,
    /// First estimator before the safeguard (AGOP diagonal for RFM).
    pub w1_raw: Vec<f64>,
    /// Second estimator before clamping and the safeguard (diagonal for RFM).
    pub w2_raw: Vec<f64>,
    pub sigma: Option<f64>,
    pub jitter: f64,
    pub wall_ms: f64,
    pub agop_rel_error: Option<f64>,
    pub principal_angle: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<StepRecord>,
    /// 1-based step whose model had the lowest test loss.
    pub best_step: usize,
    pub stopped_early: bool,
}

impl TrainTrace {
    pub fn best(&self) -> Option<&StepRecord> {
        self.records.get(self.best_step.checked_sub(1)?)
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// The model with the lowest test loss.
    pub model: KrrModel,
    pub trace: TrainTrace,
    /// Weights after the last executed update.
    pub final_weights: Weights,
}

struct Fitted {
    model: KrrModel,
    spec: KernelSpec,
    test_mse: f64,
}

fn fit_step(config: &TrainConfig, weights: &Weights, batch: &Dataset, test: &Dataset) -> Result<Fitted> {
    let spec = config.kernel.resolve(&batch.x, weights)?;
    let model = KrrModel::fit(spec, weights.clone(), &batch.x, &batch.y, config.lambda)?;
    let test_mse = model.test_mse(&test.x, &test.y)?;
    Ok(Fitted { model, spec, test_mse })
}

/// Shared driver: `update` turns a fitted model into the next weights and the
/// step record's estimator fields.
fn run_loop(
    config: &TrainConfig,
    source: &mut dyn DataSource,
    test: &Dataset,
    init: Weights,
    mut update: impl FnMut(&KrrModel) -> Result<(Weights, StepRecord)>,
) -> Result<TrainOutcome> {
    let d = source.dim();
    config.validate(d)?;
    if test.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "test set columns",
            expected: d,
            found: test.dim(),
        });
    }
    let mut weights = init;
    let mut trace = TrainTrace::default();
    let mut best: Option<(f64, KrrModel)> = None;
    let mut since_best = 0;
    let mut fixed_batch: Option<Dataset> = None;

    for step in 1..=config.steps {
        let start = Instant::now();
        let batch = if config.resample {
            source.batch(step, config.n_per_step)?
        } else {
            fixed_batch.get_or_insert(source.batch(1, config.n_per_step)?).clone()
        };
        if batch.is_empty() {
            return Err(Error::EmptyDataSource);
        }
        let fitted = fit_step(config, &weights, &batch, test)?;
        let (next, mut record) = update(&fitted.model)?;
        record.step = step;
        record.test_mse = fitted.test_mse;
        record.sigma = fitted.spec.bandwidth();
        record.jitter = fitted.model.jitter_used();
        record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        trace.records.push(record);
        weights = next;

        if best.as_ref().is_none_or(|(b, _)| fitted.test_mse < *b) {
            best = Some((fitted.test_mse, fitted.model));
            trace.best_step = step;
            since_best = 0;
        } else {
            since_best += 1;
            if config.early_stop_patience > 0 && since_best >= config.early_stop_patience {
                trace.stopped_early = step < config.steps;
                break;
            }
        }
    }
    let (_, model) = best.expect("at least one step");
    Ok(TrainOutcome {
        model,
        trace,
        final_weights: weights,
    })
}

fn blank_record() -> StepRecord {
    StepRecord {
        step: 0,
        test_mse: 0.0,
        weights: Vec::new(),
        eigvals: None,
        w1_raw: Vec::new(),
        w2_raw: Vec::new(),
        sigma: None,
        jitter: 0.0,
        wall_ms: 0.0,
        agop_rel_error: None,
        principal_angle: None,
    }
}

/// IRKM(α) starting from `w = 1_d`.
pub fn irkm_run(config: &TrainConfig, source: &mut dyn DataSource, test: &Dataset) -> Result<TrainOutcome> {
    let d = source.dim();
    let eps = config.eps_s.value(d);
    run_loop(config, source, test, WeightVector::ones(d).into(), |model| {
        let up = irkm_update(model, eps, config.alpha)?;
        let record = StepRecord {
            weights: up.weights.values().to_vec(),
            w1_raw: up.gradient_raw,
            w2_raw: up.dn_raw,
            ..blank_record()
        };
        Ok((up.weights.into(), record))
    })
}

/// RFM(α) starting from `M = I_d`. With `truth`, each step also records the
/// relative error of the model AGOP and the principal angle between the
/// top-`k` eigenspaces of the model and reference AGOPs.
pub fn rfm_run(
    config: &TrainConfig,
    source: &mut dyn DataSource,
    test: &Dataset,
    truth: Option<&GroundTruth>,
) -> Result<TrainOutcome> {
    let d = source.dim();
    let eps = config.eps_s.value(d);
    run_loop(config, source, test, WeightMatrix::identity(d).into(), |model| {
        let up = rfm_update(model, eps, config.alpha)?;
        let (agop_rel_error, angle) = match truth {
            Some(gt) => {
                let err = relative_matrix_error(&up.agop_raw, &gt.agop)?;
                let sub = top_k_eigenspace(&up.agop_raw, gt.top_k())?;
                (Some(err), Some(principal_angle(&sub, &gt.subspace)?))
            }
            None => (None, None),
        };
        let record = StepRecord {
            weights: up.weights.matrix().diagonal(),
            eigvals: Some(up.weights.matrix().eigenvalues()),
            w1_raw: up.agop_raw.diagonal(),
            w2_raw: up.dn_raw.diagonal(),
            agop_rel_error,
            principal_angle: angle,
            ..blank_record()
        };
        Ok((up.weights.into(), record))
    })
}

/// A single unweighted fit. Returns the model and its test loss.
pub fn krr_baseline(config: &TrainConfig, x: &DMatrix<f64>, y: &nalgebra::DVector<f64>, test: &Dataset) -> Result<(KrrModel, f64)> {
    if x.nrows() == 0 {
        return Err(Error::EmptyDataSource);
    }
    let batch = Dataset::new(x.clone(), y.clone(), "baseline")?;
    let fitted = fit_step(config, &WeightVector::ones(x.ncols()).into(), &batch, test)?;
    Ok((fitted.model, fitted.test_mse))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthopoly::FourierPolynomial;

    fn fig1_target(d: usize, noise: f64) -> TargetSpec {
        let f = FourierPolynomial::from_terms(d, [(vec![0], 1.0), (vec![1], 1.0), (vec![2], 1.0), (vec![0, 1, 2], 1.0)]).unwrap();
        TargetSpec::new(f, None, noise).unwrap()
    }

    fn test_set(target: &TargetSpec, n: usize, seed: u64) -> Dataset {
        let x = Distribution::Hypercube.sample(n, target.dim(), &mut tagged_stream(seed, StreamTag::Test, 0));
        let y = target.clean(&x).unwrap();
        Dataset::new(x, y, "test").unwrap()
    }

    fn source(target: &TargetSpec, seed: u64) -> SyntheticSource {
        SyntheticSource {
            target: target.clone(),
            distribution: Distribution::Hypercube,
            seed,
        }
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            steps: 4,
            n_per_step: 60,
            early_stop_patience: 0,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn validation() {
        let bad = TrainConfig {
            alpha: 1.5,
            ..small_config()
        };
        assert!(matches!(bad.validate(4), Err(Error::AlphaOutOfRange(_))));
        let bad = TrainConfig {
            eps_s: EpsRule::Fixed(0.0),
            ..small_config()
        };
        assert!(matches!(bad.validate(4), Err(Error::Config(_))));
        let bad = TrainConfig {
            steps: 0,
            ..small_config()
        };
        assert!(bad.validate(4).is_err());
    }

    #[test]
    fn one_step_equals_baseline() {
        let target = fig1_target(8, 0.1);
        let test = test_set(&target, 200, 1);
        let config = TrainConfig {
            steps: 1,
            ..small_config()
        };
        let mut src = source(&target, 3);
        let out = irkm_run(&config, &mut src, &test).unwrap();
        let batch = src.batch(1, config.n_per_step).unwrap();
        let (model, mse) = krr_baseline(&config, &batch.x, &batch.y, &test).unwrap();
        assert_eq!(out.model.beta(), model.beta());
        assert_eq!(out.trace.records[0].test_mse, mse);
        assert!(krr_baseline(&config, &DMatrix::zeros(0, 8), &nalgebra::DVector::zeros(0), &test).is_err());
    }

    #[test]
    fn deterministic_and_normalized() {
        let target = fig1_target(10, 0.1);
        let test = test_set(&target, 200, 1);
        let config = small_config();
        let a = irkm_run(&config, &mut source(&target, 3), &test).unwrap();
        let b = irkm_run(&config, &mut source(&target, 3), &test).unwrap();
        let strip = |t: &TrainTrace| {
            t.records
                .iter()
                .map(|r| StepRecord { wall_ms: 0.0, ..r.clone() })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a.trace), strip(&b.trace));
        let d = 10.0;
        let eps = config.eps_s.value(10);
        for r in &a.trace.records {
            let total: f64 = r.weights.iter().sum();
            assert!((total - d).abs() <= 1e-9 * d);
            let v1: f64 = r.w1_raw.iter().sum();
            let bound = d * eps / (v1 + d * eps);
            let min = r.weights.iter().copied().fold(f64::INFINITY, f64::min);
            // the mixed weights dominate the smaller of the two floors
            let v2: f64 = r.w2_raw.iter().map(|v| v.max(0.0)).sum();
            let bound2 = d * eps / (v2 + d * eps);
            assert!(min >= bound.min(bound2) * (1.0 - 1e-12) && min > 0.0);
            assert!(r.test_mse >= 0.0);
        }
        assert_eq!(a.trace.records.len(), 4);
    }

    #[test]
    fn rfm_trace_normalized() {
        let target = fig1_target(6, 0.0);
        let test = test_set(&target, 100, 2);
        let config = TrainConfig {
            steps: 3,
            ..small_config()
        };
        let out = rfm_run(&config, &mut source(&target, 4), &test, None).unwrap();
        for r in &out.trace.records {
            let tr: f64 = r.eigvals.as_ref().unwrap().iter().sum();
            assert!((tr - 6.0).abs() <= 1e-9 * 6.0);
        }
    }

    #[test]
    fn rfm_with_zero_model_stays_identity() {
        let target = fig1_target(5, 1.0);
        let test = test_set(&target, 50, 2);
        let config = TrainConfig {
            steps: 3,
            lambda: 1e12,
            ..small_config()
        };
        let out = rfm_run(&config, &mut source(&target, 4), &test, None).unwrap();
        match out.final_weights {
            Weights::Matrix(m) => assert!((m.matrix().as_matrix() - DMatrix::identity(5, 5)).amax() < 1e-12),
            _ => unreachable!(),
        }
    }

    #[test]
    fn early_stopping_keeps_best() {
        let target = fig1_target(6, 0.5);
        let test = test_set(&target, 100, 2);
        let config = TrainConfig {
            steps: 30,
            early_stop_patience: 1,
            ..small_config()
        };
        let out = irkm_run(&config, &mut source(&target, 9), &test).unwrap();
        let best = out.trace.best().unwrap();
        assert!(out.trace.records.iter().all(|r| r.test_mse >= best.test_mse));
        assert_eq!(out.model.test_mse(&test.x, &test.y).unwrap(), best.test_mse);
        if out.trace.stopped_early {
            assert!(out.trace.records.len() < 30);
        }
    }

    #[test]
    fn fixed_and_pool_sources() {
        let target = fig1_target(4, 0.0);
        let mut pool = PoolSource::synthetic(&target, Distribution::Hypercube, 1, 5).unwrap();
        let b1 = pool.batch(1, 5).unwrap();
        let b2 = pool.batch(2, 5).unwrap();
        let b3 = pool.batch(3, 5).unwrap();
        assert_eq!(b1.x, b3.x);
        assert_ne!(b1.x, b2.x);
        let mut fixed = FixedSource(b1.clone());
        assert_eq!(fixed.batch(7, 3).unwrap(), b1);

        let test = test_set(&target, 30, 2);
        let config = TrainConfig {
            resample: false,
            n_per_step: 5,
            ..small_config()
        };
        let mut fixed = FixedSource(b2.clone());
        let out = irkm_run(&config, &mut fixed, &test).unwrap();
        assert_eq!(out.model.x_train(), &b2.x);
    }
}
