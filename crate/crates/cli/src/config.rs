//! JSON experiment configuration.
//!
//! Unknown keys are rejected. Every validation message starts with the name
//! of the offending key.

use std::path::{Path, PathBuf};

use irkm_core::data::{CsvSchema, Normalization};
use irkm_core::kernels::{Bandwidth, KernelChoice, DEFAULT_MEDIAN_SCALE};
use irkm_core::trainers::{EpsRule, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Krr,
    Irkm,
    Rfm,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Krr => "krr",
            Method::Irkm => "irkm",
            Method::Rfm => "rfm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Methods {
    One(Method),
    Many(Vec<Method>),
}

impl Methods {
    pub fn list(&self) -> Vec<Method> {
        match self {
            Methods::One(m) => vec![*m],
            Methods::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionKind {
    Hypercube,
    Gaussian,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSize {
    One(usize),
    Many(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsSpec {
    Value(f64),
    /// `"d^p"`, e.g. `"d^-0.75"`.
    Rule(String),
}

impl Default for EpsSpec {
    fn default() -> Self {
        EpsSpec::Rule("d^-0.75".into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[serde(alias = "laplacian")]
    LaplacianRadial,
    #[serde(alias = "gaussian")]
    GaussianRadial,
    #[serde(alias = "exponential")]
    ExponentialInner,
    #[serde(alias = "polynomial")]
    PolynomialInner,
    #[serde(alias = "linear")]
    LinearInner,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MedianScale {
    pub median_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Value(f64),
    /// `"auto"`: median heuristic with the default scale.
    Auto(String),
    Median(MedianScale),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<SigmaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: Family::LaplacianRadial,
            sigma: None,
            degree: None,
            offset: None,
            scale: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationKind {
    None,
    Zscore,
    MinusOneOne,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvConfig {
    pub path: PathBuf,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
    #[serde(default = "default_normalization")]
    pub normalization: NormalizationKind,
    /// Fraction of rows held out as the test set.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_normalization() -> NormalizationKind {
    NormalizationKind::Zscore
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_distribution() -> DistributionKind {
    DistributionKind::Hypercube
}

fn default_steps() -> usize {
    20
}

fn default_alpha() -> f64 {
    0.5
}

fn default_lambda() -> f64 {
    1e-3
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_true() -> bool {
    true
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("irkm-out")
}

fn default_patience() -> usize {
    3
}

fn default_top_k() -> usize {
    4
}

fn default_gt_samples() -> usize {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub method: Methods,
    #[serde(default = "default_distribution")]
    pub distribution: DistributionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<SampleSize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_exponents: Option<Vec<f64>>,
    #[serde(rename = "T", default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub eps_s: EpsSpec,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default)]
    pub rotation: bool,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_size: Option<usize>,
    #[serde(default = "default_true")]
    pub resample: bool,
    /// Cycle a fixed pool of `2n` samples instead of drawing fresh batches.
    #[serde(default)]
    pub finite_pool: bool,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// 0 disables early stopping.
    #[serde(default = "default_patience")]
    pub early_stop_patience: usize,
    /// Rank of the eigenspaces compared in RFM diagnostics.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Monte-Carlo samples for the reference AGOP in RFM diagnostics.
    #[serde(default = "default_gt_samples")]
    pub gt_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvConfig>,
}

fn config_error(key: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {message}"))
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." { "config".to_string() } else { path };
            config_error(&key, e.inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.method.list().is_empty() {
            return Err(config_error("method", "at least one method is required"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(config_error("alpha", format!("must lie in [0, 1], got {}", self.alpha)));
        }
        if self.steps == 0 {
            return Err(config_error("T", "must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(config_error("lambda", format!("must be >= 0, got {}", self.lambda)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(config_error("noise_sigma", format!("must be >= 0, got {}", self.noise_sigma)));
        }
        if self.seeds.is_empty() {
            return Err(config_error("seeds", "at least one seed is required"));
        }
        if self.test_size == Some(0) {
            return Err(config_error("test_size", "must be at least 1"));
        }
        if self.top_k == 0 {
            return Err(config_error("top_k", "must be at least 1"));
        }
        if self.gt_samples == 0 {
            return Err(config_error("gt_samples", "must be at least 1"));
        }
        self.eps_rule()?;
        self.kernel_choice()?;
        match self.distribution {
            DistributionKind::Csv => {
                let csv = self.csv.as_ref().ok_or_else(|| config_error("csv", "required when distribution is \"csv\""))?;
                if !(csv.test_fraction > 0.0 && csv.test_fraction < 1.0) {
                    return Err(config_error("csv.test_fraction", "must lie strictly between 0 and 1"));
                }
                if self.rotation {
                    return Err(config_error("rotation", "not available for csv data"));
                }
                if self.n.is_some() || self.n_exponents.is_some() {
                    return Err(config_error("n", "not used for csv data; the split sizes follow csv.test_fraction"));
                }
                if self.finite_pool {
                    return Err(config_error("finite_pool", "not available for csv data"));
                }
            }
            _ => {
                let d = self.d.ok_or_else(|| config_error("d", "required for synthetic data"))?;
                if d == 0 {
                    return Err(config_error("d", "must be at least 1"));
                }
                let target = self.target.as_deref().ok_or_else(|| config_error("target", "required for synthetic data"))?;
                crate::target::parse_target(target, d).map_err(|e| config_error("target", e))?;
                if self.csv.is_some() {
                    return Err(config_error("csv", "only valid when distribution is \"csv\""));
                }
                let sizes = self.sample_sizes()?;
                if sizes.contains(&0) {
                    return Err(config_error("n", "sample sizes must be at least 1"));
                }
            }
        }
        if self.n.is_some() && self.n_exponents.is_some() {
            return Err(config_error("n_exponents", "give either n or n_exponents, not both"));
        }
        Ok(())
    }

    /// Sample sizes of the grid: explicit `n`, or `round(d^δ)` per exponent.
    pub fn sample_sizes(&self) -> Result<Vec<usize>, CliError> {
        match (&self.n, &self.n_exponents) {
            (Some(SampleSize::One(n)), None) => Ok(vec![*n]),
            (Some(SampleSize::Many(v)), None) if !v.is_empty() => Ok(v.clone()),
            (Some(SampleSize::Many(_)), None) => Err(config_error("n", "list must not be empty")),
            (None, Some(exps)) if !exps.is_empty() => {
                let d = self.d.ok_or_else(|| config_error("d", "required with n_exponents"))? as f64;
                exps.iter()
                    .map(|&e| {
                        if !e.is_finite() || e < 0.0 {
                            return Err(config_error("n_exponents", format!("invalid exponent {e}")));
                        }
                        Ok(d.powf(e).round() as usize)
                    })
                    .collect()
            }
            (None, Some(_)) => Err(config_error("n_exponents", "list must not be empty")),
            (None, None) => Err(config_error("n", "required (or n_exponents)")),
            (Some(_), Some(_)) => Err(config_error("n_exponents", "give either n or n_exponents, not both")),
        }
    }

    pub fn eps_rule(&self) -> Result<EpsRule, CliError> {
        match &self.eps_s {
            EpsSpec::Value(v) if *v > 0.0 && v.is_finite() => Ok(EpsRule::Fixed(*v)),
            EpsSpec::Value(v) => Err(config_error("eps_s", format!("must be > 0, got {v}"))),
            EpsSpec::Rule(s) => {
                let p = s
                    .trim()
                    .strip_prefix("d^")
                    .and_then(|p| p.trim().parse::<f64>().ok())
                    .filter(|p| p.is_finite())
                    .ok_or_else(|| config_error("eps_s", format!("expected a positive number or \"d^p\", got {s:?}")))?;
                Ok(EpsRule::Power(p))
            }
        }
    }

    pub fn kernel_choice(&self) -> Result<KernelChoice, CliError> {
        let k = &self.kernel;
        let radial = matches!(k.family, Family::LaplacianRadial | Family::GaussianRadial);
        if !radial && k.sigma.is_some() {
            return Err(config_error("kernel.sigma", "only valid for radial families"));
        }
        if k.family != Family::PolynomialInner && (k.degree.is_some() || k.offset.is_some()) {
            return Err(config_error("kernel.degree", "degree/offset only valid for polynomial_inner"));
        }
        if k.family != Family::ExponentialInner && k.scale.is_some() {
            return Err(config_error("kernel.scale", "only valid for exponential_inner"));
        }
        let bandwidth = || -> Result<Bandwidth, CliError> {
            match &k.sigma {
                None => Ok(Bandwidth::Median {
                    scale: DEFAULT_MEDIAN_SCALE,
                }),
                Some(SigmaSpec::Auto(s)) if s == "auto" => Ok(Bandwidth::Median {
                    scale: DEFAULT_MEDIAN_SCALE,
                }),
                Some(SigmaSpec::Auto(s)) => Err(config_error("kernel.sigma", format!("expected a number, \"auto\" or {{\"median_scale\": s}}, got {s:?}"))),
                Some(SigmaSpec::Value(v)) if *v > 0.0 && v.is_finite() => Ok(Bandwidth::Fixed(*v)),
                Some(SigmaSpec::Value(v)) => Err(config_error("kernel.sigma", format!("must be > 0, got {v}"))),
                Some(SigmaSpec::Median(m)) if m.median_scale > 0.0 && m.median_scale.is_finite() => Ok(Bandwidth::Median { scale: m.median_scale }),
                Some(SigmaSpec::Median(m)) => Err(config_error("kernel.sigma.median_scale", format!("must be > 0, got {}", m.median_scale))),
            }
        };
        Ok(match k.family {
            Family::LaplacianRadial => KernelChoice::Laplacian(bandwidth()?),
            Family::GaussianRadial => KernelChoice::Gaussian(bandwidth()?),
            Family::ExponentialInner => {
                let scale = k.scale.unwrap_or(1.0);
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(config_error("kernel.scale", format!("must be > 0, got {scale}")));
                }
                KernelChoice::Exponential { scale }
            }
            Family::PolynomialInner => {
                let degree = k.degree.unwrap_or(2);
                if degree == 0 {
                    return Err(config_error("kernel.degree", "must be at least 1"));
                }
                let offset = k.offset.unwrap_or(1.0);
                if !(offset >= 0.0 && offset.is_finite()) {
                    return Err(config_error("kernel.offset", format!("must be >= 0, got {offset}")));
                }
                KernelChoice::Polynomial { degree, offset }
            }
            Family::LinearInner => KernelChoice::Linear,
        })
    }

    pub fn csv_schema(&self) -> Option<CsvSchema> {
        self.csv.as_ref().map(|c| CsvSchema {
            label: c.label.clone(),
            features: c.features.clone(),
            normalization: match c.normalization {
                NormalizationKind::None => Normalization::None,
                NormalizationKind::Zscore => Normalization::ZScore,
                NormalizationKind::MinusOneOne => Normalization::MinusOneOne,
            },
        })
    }

    /// Trainer settings for one `(n, seed)` run.
    pub fn train_config(&self, n: usize, seed: u64) -> Result<TrainConfig, CliError> {
        Ok(TrainConfig {
            alpha: self.alpha,
            eps_s: self.eps_rule()?,
            steps: self.steps,
            lambda: self.lambda,
            kernel: self.kernel_choice()?,
            n_per_step: n,
            resample: self.resample,
            early_stop_patience: self.early_stop_patience,
            seed,
        })
    }

    /// `min(10 n, 10 000)` unless set explicitly.
    pub fn test_size_for(&self, n: usize) -> usize {
        self.test_size.unwrap_or_else(|| (10 * n).min(10_000))
    }
}
