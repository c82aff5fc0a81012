//! Coordinate and direction importance estimators built from a fitted model,
//! plus the safeguarded normalizations and convex mixing of the updates.
//!
//! Both the derivative-norm (DN) estimator and the AGOP reduce to products of
//! the pair-coefficient matrix `C` with the training inputs. Writing
//! `W = Q ⊙ ββᵀ` where `Q = C` for inner-product kernels and `Q = C/2` for
//! radial ones:
//!
//! | kernel | `D_j(w)` | `D(M)` |
//! |---|---|---|
//! | inner-product | `(XᵀWX)_jj` | `XᵀWX` |
//! | radial | `2 Σ_a (W1)_a x_aj² − 2(XᵀWX)_jj` | `2Xᵀ diag(W1) X − 2XᵀWX` |
//!
//! which costs `O(n²d)` instead of `d` separate `n×n` quadratic forms.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{WeightMatrix, WeightVector, Weights};
use crate::krr::KrrModel;
use crate::numerics::{psd_clamp, SymmetricMatrix};

fn gradients_at(model: &KrrModel, x_eval: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x_eval.nrows() == 0 {
        return Err(Error::EmptyDataSource);
    }
    check_dim("estimator inputs", model.dim(), x_eval.ncols())?;
    if x_eval == model.x_train() {
        Ok(model.train_gradients())
    } else {
        model.predict_gradient(x_eval)
    }
}

/// `(1/n) Σ_i [∇f̂(x_i)]^{⊙2}` over the rows of `x_eval`.
pub fn empirical_sq_gradient_weights(model: &KrrModel, x_eval: &DMatrix<f64>) -> Result<Vec<f64>> {
    let g = gradients_at(model, x_eval)?;
    let n = g.nrows() as f64;
    Ok(g.column_iter().map(|c| c.norm_squared() / n).collect())
}

/// Average gradient outer product `(1/n) Σ_i ∇f̂(x_i) ∇f̂(x_i)ᵀ`.
pub fn agop(model: &KrrModel, x_eval: &DMatrix<f64>) -> Result<SymmetricMatrix> {
    let g = gradients_at(model, x_eval)?;
    let n = g.nrows() as f64;
    SymmetricMatrix::new(g.transpose() * &g / n)
}

/// `W = Q ⊙ ββᵀ` and its row sums.
fn weighted_pairs(model: &KrrModel) -> (DMatrix<f64>, DVector<f64>) {
    let beta = model.beta();
    let half = if model.spec().is_radial() { 0.5 } else { 1.0 };
    let c = model.train_coefficients().as_matrix();
    let n = beta.len();
    let w = DMatrix::from_fn(n, n, |a, b| half * c[(a, b)] * beta[a] * beta[b]);
    let rows = DVector::from_iterator(n, w.row_iter().map(|r| r.sum()));
    (w, rows)
}

/// `D_j = βᵀ ∂K_w(X, X)/∂w_j β` for every coordinate `j`, without the `1/n`.
///
/// For a matrix-weighted model this is the diagonal of [`dn_matrix`].
pub fn dn_vector(model: &KrrModel) -> Vec<f64> {
    let x = model.x_train();
    let (w, rows) = weighted_pairs(model);
    let wx = &w * x;
    (0..x.ncols())
        .map(|j| {
            let cross = x.column(j).dot(&wx.column(j));
            if model.spec().is_radial() {
                let sq: f64 = x.column(j).iter().zip(rows.iter()).map(|(v, r)| r * v * v).sum();
                2.0 * sq - 2.0 * cross
            } else {
                cross
            }
        })
        .collect()
}

/// `D(M)_ij = βᵀ ∂K_M(X, X)/∂M_ij β` (symmetrized derivative), without the `1/n`.
pub fn dn_matrix(model: &KrrModel) -> SymmetricMatrix {
    let x = model.x_train();
    let (w, rows) = weighted_pairs(model);
    let cross = x.transpose() * (&w * x);
    let d = if model.spec().is_radial() {
        let mut dx = x.clone();
        for (mut row, r) in dx.row_iter_mut().zip(rows.iter()) {
            row *= *r;
        }
        (x.transpose() * dx - cross) * 2.0
    } else {
        cross
    };
    SymmetricMatrix::new(d).expect("square")
}

fn check_eps(eps_s: f64) -> Result<()> {
    if eps_s > 0.0 && eps_s.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("eps_s must be > 0, got {eps_s}")))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

/// `d (v + ε_s 1) / ‖v + ε_s 1‖₁`.
pub fn safeguard_normalize(v: &[f64], eps_s: f64) -> Result<WeightVector> {
    check_eps(eps_s)?;
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
        return Err(Error::NonnegViolation { index, value });
    }
    let d = v.len() as f64;
    let shifted: Vec<f64> = v.iter().map(|x| x + eps_s).collect();
    let total: f64 = shifted.iter().sum();
    WeightVector::new(shifted.into_iter().map(|x| d * x / total).collect())
}

/// `(1 − α) w₁ + α w₂`.
pub fn mix(w1: &WeightVector, w2: &WeightVector, alpha: f64) -> Result<WeightVector> {
    check_alpha(alpha)?;
    check_dim("mix", w1.dim(), w2.dim())?;
    WeightVector::new(
        w1.values()
            .iter()
            .zip(w2.values())
            .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
            .collect(),
    )
}

/// `d (M + ε_s I) / tr(M + ε_s I)`.
pub fn safeguard_normalize_matrix(m: &SymmetricMatrix, eps_s: f64) -> Result<WeightMatrix> {
    check_eps(eps_s)?;
    let shifted = m.shifted(eps_s);
    let d = m.dim() as f64;
    Ok(WeightMatrix::new(shifted.scaled(d / shifted.trace())))
}

/// `(1 − α) M₁ + α M₂`.
pub fn mix_matrix(m1: &WeightMatrix, m2: &WeightMatrix, alpha: f64) -> Result<WeightMatrix> {
    check_alpha(alpha)?;
    Ok(WeightMatrix::new(m1.matrix().combine(1.0 - alpha, m2.matrix(), alpha)?))
}

/// One IRKM weight update with its raw ingredients.
#[derive(Clone, Debug)]
pub struct VectorUpdate {
    pub weights: WeightVector,
    /// `(1/n) Σ [∇f̂]^{⊙2}` before the safeguard.
    pub gradient_raw: Vec<f64>,
    /// `(1/n) D(w) ⊙ w` before clamping and the safeguard.
    pub dn_raw: Vec<f64>,
}

/// `w ← (1−α)·normalize(ε_s + grad²) + α·normalize(ε_s + max(0, D(w)⊙w/n))`
/// from a model fitted with vector weights on its training inputs.
pub fn irkm_update(model: &KrrModel, eps_s: f64, alpha: f64) -> Result<VectorUpdate> {
    check_alpha(alpha)?;
    let w = match model.weights() {
        Weights::Vector(w) => w,
        Weights::Matrix(_) => return Err(Error::Config("irkm_update needs a vector-weighted model".into())),
    };
    let n = model.n_train() as f64;
    let gradient_raw = empirical_sq_gradient_weights(model, model.x_train())?;
    let dn_raw: Vec<f64> = dn_vector(model).iter().zip(w.values()).map(|(d, wj)| d * wj / n).collect();
    let clamped: Vec<f64> = dn_raw.iter().map(|v| v.max(0.0)).collect();
    let w1 = safeguard_normalize(&gradient_raw, eps_s)?;
    let w2 = safeguard_normalize(&clamped, eps_s)?;
    Ok(VectorUpdate {
        weights: mix(&w1, &w2, alpha)?,
        gradient_raw,
        dn_raw,
    })
}

/// One RFM update with its raw ingredients.
#[derive(Clone, Debug)]
pub struct MatrixUpdate {
    pub weights: WeightMatrix,
    /// AGOP on the training inputs, before the safeguard.
    pub agop_raw: SymmetricMatrix,
    /// `(1/n) √M D(M) √M` before clamping and the safeguard.
    pub dn_raw: SymmetricMatrix,
}

/// `M ← (1−α)·normalize(ε_s I + AGOP) + α·normalize(ε_s I + [√M D(M) √M / n]₊)`
/// where `[·]₊` zeroes negative eigenvalues.
pub fn rfm_update(model: &KrrModel, eps_s: f64, alpha: f64) -> Result<MatrixUpdate> {
    check_alpha(alpha)?;
    let s = match model.weights() {
        Weights::Matrix(m) => m.sqrt().as_matrix().clone(),
        Weights::Vector(w) => DMatrix::from_diagonal(&DVector::from_column_slice(w.sqrt_values())),
    };
    let n = model.n_train() as f64;
    let agop_raw = agop(model, model.x_train())?;
    let dn = dn_matrix(model);
    let dn_raw = SymmetricMatrix::new(&s * dn.as_matrix() * &s / n)?;
    let m1 = safeguard_normalize_matrix(&agop_raw, eps_s)?;
    let m2 = safeguard_normalize_matrix(&psd_clamp(&dn_raw), eps_s)?;
    Ok(MatrixUpdate {
        weights: mix_matrix(&m1, &m2, alpha)?,
        agop_raw,
        dn_raw,
    })
}
