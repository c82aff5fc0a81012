//! Kernel families with analytic value, input-gradient and weight-derivative
//! evaluation under a coordinate weight vector `w` or a PSD weight matrix `M`.
//!
//! Weighted kernels are evaluated on transformed points: `√w ⊙ x` for vector
//! weights and `√M x` for matrix weights. Input gradients are pulled back
//! through the same linear map, so `∇ₓ K_w(x, z) = √w ⊙ ∇K(√w⊙x, √w⊙z)`.
//!
//! Inner-product families evaluate `g(⟨x̃, z̃⟩ / d)`. Radial families evaluate
//! `k(‖x̃ − z̃‖)` directly so they stay correct off the hypercube, where norms
//! vary. At `r = 0` the Laplacian has no derivative; every radial derivative
//! term is set to zero there.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::numerics::{psd_sqrt, SymmetricMatrix};

/// Default multiple of the median pairwise distance used as radial bandwidth.
pub const DEFAULT_MEDIAN_SCALE: f64 = 10.0;

/// Number of leading points used to calibrate the median heuristic.
pub const MEDIAN_CALIBRATION_POINTS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelFamily {
    /// `exp(−r/σ)`
    Laplacian { sigma: f64 },
    /// `exp(−r²/2σ²)`
    Gaussian { sigma: f64 },
    /// `g(t) = exp(a·t)`
    Exponential { scale: f64 },
    /// `g(t) = (b + t)^m`
    Polynomial { degree: u32, offset: f64 },
    /// `g(t) = t`
    Linear,
}

/// A fully parameterized kernel on `R^d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    dim: usize,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("kernel ambient dimension must be at least 1".into()));
        }
        match family {
            KernelFamily::Laplacian { sigma } | KernelFamily::Gaussian { sigma } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::Config(format!("bandwidth must be positive, got {sigma}")));
                }
            }
            KernelFamily::Exponential { scale } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::Config(format!("exponential scale must be positive, got {scale}")));
                }
            }
            KernelFamily::Polynomial { degree, offset } => {
                if degree == 0 {
                    return Err(Error::Config("polynomial degree must be at least 1".into()));
                }
                if !(offset >= 0.0 && offset.is_finite()) {
                    return Err(Error::Config(format!("polynomial offset must be >= 0, got {offset}")));
                }
            }
            KernelFamily::Linear => {}
        }
        Ok(Self { family, dim })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.family, KernelFamily::Laplacian { .. } | KernelFamily::Gaussian { .. })
    }

    /// Bandwidth of a radial family.
    pub fn bandwidth(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Laplacian { sigma } | KernelFamily::Gaussian { sigma } => Some(sigma),
            _ => None,
        }
    }

    /// `g(t)` or `k(r)`.
    fn profile(&self, s: f64) -> f64 {
        match self.family {
            KernelFamily::Laplacian { sigma } => (-s / sigma).exp(),
            KernelFamily::Gaussian { sigma } => (-s * s / (2.0 * sigma * sigma)).exp(),
            KernelFamily::Exponential { scale } => (scale * s).exp(),
            KernelFamily::Polynomial { degree, offset } => (offset + s).powi(degree as i32),
            KernelFamily::Linear => s,
        }
    }

    /// `g'(t)` for inner-product families.
    fn inner_slope(&self, t: f64) -> f64 {
        match self.family {
            KernelFamily::Exponential { scale } => scale * (scale * t).exp(),
            KernelFamily::Polynomial { degree, offset } => degree as f64 * (offset + t).powi(degree as i32 - 1),
            KernelFamily::Linear => 1.0,
            _ => unreachable!("inner_slope on a radial family"),
        }
    }

    /// `k'(r)/r` for radial families, zero at `r = 0`.
    fn radial_ratio(&self, r: f64, value: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        match self.family {
            KernelFamily::Laplacian { sigma } => -value / (sigma * r),
            KernelFamily::Gaussian { sigma } => -value / (sigma * sigma),
            _ => unreachable!("radial_ratio on an inner-product family"),
        }
    }

    /// Kernel value and the pair coefficient `c` from transformed points.
    ///
    /// `c = g'(t)/d` for inner-product families and `c = k'(r)/r` for radial
    /// ones. Both the input gradient and the weight derivatives are linear in
    /// `c`, which lets the estimators share one coefficient matrix.
    fn value_and_coefficient(&self, a: &[f64], b: &[f64]) -> (f64, f64) {
        if self.is_radial() {
            let r = sq_dist(a, b).sqrt();
            let v = self.profile(r);
            (v, self.radial_ratio(r, v))
        } else {
            let t = dot(a, b) / self.dim as f64;
            (self.profile(t), self.inner_slope(t) / self.dim as f64)
        }
    }

    fn value_transformed(&self, a: &[f64], b: &[f64]) -> f64 {
        if self.is_radial() {
            self.profile(sq_dist(a, b).sqrt())
        } else {
            self.profile(dot(a, b) / self.dim as f64)
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let t = x - y;
            t * t
        })
        .sum()
}

/// Per-coordinate importance weights, all nonnegative.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    w: Vec<f64>,
    sqrt: Vec<f64>,
}

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = w.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::NonnegViolation { index, value });
        }
        let sqrt = w.iter().map(|v| v.sqrt()).collect();
        Ok(Self { w, sqrt })
    }

    pub fn ones(dim: usize) -> Self {
        Self {
            w: vec![1.0; dim],
            sqrt: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    pub fn sqrt_values(&self) -> &[f64] {
        &self.sqrt
    }

    pub fn l1_norm(&self) -> f64 {
        self.w.iter().sum()
    }
}

/// A PSD importance matrix with its cached square root.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    m: SymmetricMatrix,
    sqrt: SymmetricMatrix,
}

impl WeightMatrix {
    pub fn new(m: SymmetricMatrix) -> Self {
        let sqrt = psd_sqrt(&m);
        Self { m, sqrt }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: SymmetricMatrix::identity(dim),
            sqrt: SymmetricMatrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.m
    }

    pub fn sqrt(&self) -> &SymmetricMatrix {
        &self.sqrt
    }
}

/// Either kind of coordinate reweighting.
#[derive(Clone, Debug, PartialEq)]
pub enum Weights {
    Vector(WeightVector),
    Matrix(WeightMatrix),
}

impl From<WeightVector> for Weights {
    fn from(w: WeightVector) -> Self {
        Weights::Vector(w)
    }
}

impl From<WeightMatrix> for Weights {
    fn from(m: WeightMatrix) -> Self {
        Weights::Matrix(m)
    }
}

impl Weights {
    pub fn dim(&self) -> usize {
        match self {
            Weights::Vector(w) => w.dim(),
            Weights::Matrix(m) => m.dim(),
        }
    }

    /// Applies `√w ⊙ ·` or `√M ·` to every row of `x`.
    pub(crate) fn transform_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Weights::Vector(w) => {
                let mut out = x.clone();
                for (mut col, s) in out.column_iter_mut().zip(w.sqrt_values()) {
                    col *= *s;
                }
                out
            }
            // rows are xᵀ, and (√M x)ᵀ = xᵀ √M because √M is symmetric
            Weights::Matrix(m) => x * m.sqrt().as_matrix(),
        }
    }

    pub(crate) fn transform(&self, x: &DMatrix<f64>) -> Points {
        Points::from_matrix(&self.transform_matrix(x))
    }

    fn transform_point(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Weights::Vector(w) => x.iter().zip(w.sqrt_values()).map(|(a, s)| a * s).collect(),
            Weights::Matrix(m) => {
                let s = m.sqrt().as_matrix();
                (0..x.len()).map(|i| (0..x.len()).map(|j| s[(i, j)] * x[j]).sum()).collect()
            }
        }
    }

    /// Pulls a gradient with respect to transformed coordinates back to the
    /// original coordinates (multiplication by the symmetric map `J`).
    pub(crate) fn pullback(&self, g: &[f64]) -> Vec<f64> {
        // same linear map as the forward transform
        self.transform_point(g)
    }
}

/// Row-major point cloud, one contiguous slice per point.
#[derive(Clone, Debug)]
pub(crate) struct Points {
    pub n: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Points {
    pub fn from_matrix(x: &DMatrix<f64>) -> Self {
        let (n, dim) = x.shape();
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            data.extend(x.row(i).iter());
        }
        Self { n, dim, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn check_weights(spec: &KernelSpec, weights: &Weights) -> Result<()> {
    check_dim("kernel weights", spec.dim(), weights.dim())
}

fn check_points(spec: &KernelSpec, x: &DMatrix<f64>) -> Result<()> {
    check_dim("kernel input columns", spec.dim(), x.ncols())
}

/// `K_w(x, z)`.
pub fn kernel_value(spec: &KernelSpec, x: &[f64], z: &[f64], weights: &Weights) -> Result<f64> {
    check_weights(spec, weights)?;
    check_dim("kernel_value (x)", spec.dim(), x.len())?;
    check_dim("kernel_value (z)", spec.dim(), z.len())?;
    let a = weights.transform_point(x);
    let b = weights.transform_point(z);
    Ok(spec.value_transformed(&a, &b))
}

/// `K_M(x, z) = K(√M x, √M z)`.
pub fn matrix_kernel_value(spec: &KernelSpec, x: &[f64], z: &[f64], m: &WeightMatrix) -> Result<f64> {
    kernel_value(spec, x, z, &Weights::Matrix(m.clone()))
}

/// `∇ₓ K_w(x, z)`; zero for radial families when the two points coincide.
pub fn kernel_input_gradient(spec: &KernelSpec, x: &[f64], z: &[f64], weights: &Weights) -> Result<Vec<f64>> {
    check_weights(spec, weights)?;
    check_dim("kernel_input_gradient (x)", spec.dim(), x.len())?;
    check_dim("kernel_input_gradient (z)", spec.dim(), z.len())?;
    let a = weights.transform_point(x);
    let b = weights.transform_point(z);
    let (_, c) = spec.value_and_coefficient(&a, &b);
    let g: Vec<f64> = if spec.is_radial() {
        a.iter().zip(&b).map(|(p, q)| c * (p - q)).collect()
    } else {
        b.iter().map(|q| c * q).collect()
    };
    Ok(weights.pullback(&g))
}

pub(crate) fn gram_points(spec: &KernelSpec, a: &Points, b: &Points) -> DMatrix<f64> {
    let mut out = vec![0.0; a.n * b.n];
    out.par_chunks_mut(b.n.max(1)).enumerate().for_each(|(i, row)| {
        let p = a.row(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = spec.value_transformed(p, b.row(j));
        }
    });
    DMatrix::from_row_slice(a.n, b.n, &out)
}

/// Pair-coefficient matrix between two point clouds (see [`gram_and_coefficients`]).
pub(crate) fn coefficients_points(spec: &KernelSpec, a: &Points, b: &Points) -> DMatrix<f64> {
    let mut out = vec![0.0; a.n * b.n];
    out.par_chunks_mut(b.n.max(1)).enumerate().for_each(|(i, row)| {
        let p = a.row(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = spec.value_and_coefficient(p, b.row(j)).1;
        }
    });
    DMatrix::from_row_slice(a.n, b.n, &out)
}

/// Symmetric Gram matrix and the pair-coefficient matrix of one point cloud.
///
/// The coefficient matrix holds `g'(t)/d` (inner-product families) or
/// `k'(r)/r` with zero diagonal (radial families).
pub(crate) fn gram_and_coefficients(spec: &KernelSpec, pts: &Points) -> (SymmetricMatrix, SymmetricMatrix) {
    let n = pts.n;
    let rows: Vec<Vec<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = pts.row(i);
            (i..n).map(|j| spec.value_and_coefficient(p, pts.row(j))).collect()
        })
        .collect();
    let mut k = DMatrix::zeros(n, n);
    let mut c = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (off, &(v, s)) in row.iter().enumerate() {
            let j = i + off;
            k[(i, j)] = v;
            k[(j, i)] = v;
            c[(i, j)] = s;
            c[(j, i)] = s;
        }
    }
    (
        SymmetricMatrix::new(k).expect("square"),
        SymmetricMatrix::new(c).expect("square"),
    )
}

/// `K_w(X, Z)`, an `n×m` matrix.
pub fn gram(spec: &KernelSpec, x: &DMatrix<f64>, z: &DMatrix<f64>, weights: &Weights) -> Result<DMatrix<f64>> {
    check_weights(spec, weights)?;
    check_points(spec, x)?;
    check_points(spec, z)?;
    Ok(gram_points(spec, &weights.transform(x), &weights.transform(z)))
}

/// `K_w(X, X)`, exactly symmetric.
pub fn gram_symmetric(spec: &KernelSpec, x: &DMatrix<f64>, weights: &Weights) -> Result<SymmetricMatrix> {
    check_weights(spec, weights)?;
    check_points(spec, x)?;
    Ok(gram_and_coefficients(spec, &weights.transform(x)).0)
}

/// Pair-coefficient matrix of `X` under `weights` (see [`gram_and_coefficients`]).
pub fn coefficient_gram(spec: &KernelSpec, x: &DMatrix<f64>, weights: &Weights) -> Result<SymmetricMatrix> {
    check_weights(spec, weights)?;
    check_points(spec, x)?;
    Ok(gram_and_coefficients(spec, &weights.transform(x)).1)
}

/// `∂K_w(X, X)/∂w_j`.
///
/// Inner-product: `g'(t)·x_j z_j / d`. Radial: `k'(r)/(2r)·(x_j − z_j)²`, which
/// is `−K·(x_j − z_j)²/(2σr)` for the Laplacian and `−K·(x_j − z_j)²/(2σ²)` for
/// the Gaussian; zero when `r = 0`.
pub fn weight_derivative_gram(spec: &KernelSpec, x: &DMatrix<f64>, w: &WeightVector, j: usize) -> Result<SymmetricMatrix> {
    if j >= spec.dim() {
        return Err(Error::IndexOutOfRange {
            index: j,
            bound: spec.dim(),
        });
    }
    let weights = Weights::Vector(w.clone());
    let coeff = coefficient_gram(spec, x, &weights)?;
    let n = x.nrows();
    let radial = spec.is_radial();
    Ok(SymmetricMatrix::from_upper_fn(n, |a, b| {
        let c = coeff.get(a, b);
        if radial {
            let t = x[(a, j)] - x[(b, j)];
            0.5 * c * t * t
        } else {
            c * x[(a, j)] * x[(b, j)]
        }
    }))
}

/// `∂K_M(X, X)/∂M_{ij}`, symmetrized in `(i, j)`.
///
/// Inner-product: `g'(xᵀMz/d)·(x_i z_j + x_j z_i)/(2d)`. Radial:
/// `k'(r)/(2r)·(x_i − z_i)(x_j − z_j)` with `r² = (x − z)ᵀM(x − z)`.
pub fn matrix_weight_derivative_gram(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    m: &WeightMatrix,
    i: usize,
    j: usize,
) -> Result<SymmetricMatrix> {
    let d = spec.dim();
    for idx in [i, j] {
        if idx >= d {
            return Err(Error::IndexOutOfRange { index: idx, bound: d });
        }
    }
    let weights = Weights::Matrix(m.clone());
    let coeff = coefficient_gram(spec, x, &weights)?;
    let n = x.nrows();
    let radial = spec.is_radial();
    Ok(SymmetricMatrix::from_upper_fn(n, |a, b| {
        let c = coeff.get(a, b);
        if radial {
            0.5 * c * (x[(a, i)] - x[(b, i)]) * (x[(a, j)] - x[(b, j)])
        } else {
            0.5 * c * (x[(a, i)] * x[(b, j)] + x[(a, j)] * x[(b, i)])
        }
    }))
}

/// Median of the pairwise weighted distances among the first
/// [`MEDIAN_CALIBRATION_POINTS`] rows of `x`. `None` with fewer than two rows.
pub fn median_pairwise_distance(x: &DMatrix<f64>, weights: &Weights) -> Result<Option<f64>> {
    check_dim("median_pairwise_distance", weights.dim(), x.ncols())?;
    let m = x.nrows().min(MEDIAN_CALIBRATION_POINTS);
    if m < 2 {
        return Ok(None);
    }
    let pts = weights.transform(&x.rows(0, m).into_owned());
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for a in 0..m {
        for b in (a + 1)..m {
            dists.push(sq_dist(pts.row(a), pts.row(b)).sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let k = dists.len();
    Ok(Some(if k % 2 == 1 {
        dists[k / 2]
    } else {
        0.5 * (dists[k / 2 - 1] + dists[k / 2])
    }))
}

/// How a radial bandwidth is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// `scale ×` median pairwise weighted distance, recomputed per call.
    Median { scale: f64 },
}

impl Default for Bandwidth {
    fn default() -> Self {
        Bandwidth::Median {
            scale: DEFAULT_MEDIAN_SCALE,
        }
    }
}

impl Bandwidth {
    /// Falls back to `σ = 1` when the median is undefined or zero.
    pub fn resolve(&self, x: &DMatrix<f64>, weights: &Weights) -> Result<f64> {
        match *self {
            Bandwidth::Fixed(s) => Ok(s),
            Bandwidth::Median { scale } => {
                let med = median_pairwise_distance(x, weights)?.unwrap_or(0.0);
                Ok(if med > 0.0 { scale * med } else { 1.0 })
            }
        }
    }
}

/// A kernel family whose bandwidth may still depend on the data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelChoice {
    Laplacian(Bandwidth),
    Gaussian(Bandwidth),
    Exponential { scale: f64 },
    Polynomial { degree: u32, offset: f64 },
    Linear,
}

impl KernelChoice {
    pub fn is_radial(&self) -> bool {
        matches!(self, KernelChoice::Laplacian(_) | KernelChoice::Gaussian(_))
    }

    /// Fixes the bandwidth (if any) against `x` under `weights`.
    pub fn resolve(&self, x: &DMatrix<f64>, weights: &Weights) -> Result<KernelSpec> {
        let dim = x.ncols();
        let family = match *self {
            KernelChoice::Laplacian(bw) => KernelFamily::Laplacian {
                sigma: bw.resolve(x, weights)?,
            },
            KernelChoice::Gaussian(bw) => KernelFamily::Gaussian {
                sigma: bw.resolve(x, weights)?,
            },
            KernelChoice::Exponential { scale } => KernelFamily::Exponential { scale },
            KernelChoice::Polynomial { degree, offset } => KernelFamily::Polynomial { degree, offset },
            KernelChoice::Linear => KernelFamily::Linear,
        };
        KernelSpec::new(family, dim)
    }
}
