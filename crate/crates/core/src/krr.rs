//! Weighted kernel ridge regression.
//!
//! `f̂(z) = K_w(z, X) β` with `β = (K_w(X, X) + λI)⁻¹ y`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{coefficients_points, gram_and_coefficients, gram_points, KernelSpec, Points, Weights};
use crate::numerics::{solve_spd_vec, SymmetricMatrix};

/// A fitted ridge regressor. Immutable once fitted.
#[derive(Clone, Debug)]
pub struct KrrModel {
    spec: KernelSpec,
    weights: Weights,
    x_train: DMatrix<f64>,
    x_tilde: DMatrix<f64>,
    points: Points,
    beta: DVector<f64>,
    lambda: f64,
    jitter_used: f64,
    // pair coefficients on the training set, shared by the estimators
    train_coefficients: SymmetricMatrix,
}

impl KrrModel {
    /// Fits `β` by a Cholesky solve of `K_w(X, X) + λI`. If that matrix is
    /// numerically indefinite the ridge is escalated and the value used is
    /// reported by [`KrrModel::jitter_used`].
    pub fn fit(spec: KernelSpec, weights: Weights, x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::EmptyDataSource);
        }
        check_dim("fit (weights)", spec.dim(), weights.dim())?;
        check_dim("fit (input columns)", spec.dim(), x.ncols())?;
        check_dim("fit (labels)", x.nrows(), y.len())?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        let x_tilde = weights.transform_matrix(x);
        let points = Points::from_matrix(&x_tilde);
        let (k, train_coefficients) = gram_and_coefficients(&spec, &points);
        let (beta, jitter_used) = solve_spd_vec(&k, y, lambda)?;
        Ok(Self {
            spec,
            weights,
            x_train: x.clone(),
            x_tilde,
            points,
            beta,
            lambda,
            jitter_used,
            train_coefficients,
        })
    }

    /// Rebuilds a model from its parts (used for hand-built fixtures).
    pub fn from_parts(spec: KernelSpec, weights: Weights, x: &DMatrix<f64>, beta: DVector<f64>, lambda: f64) -> Result<Self> {
        check_dim("from_parts (weights)", spec.dim(), weights.dim())?;
        check_dim("from_parts (input columns)", spec.dim(), x.ncols())?;
        check_dim("from_parts (beta)", x.nrows(), beta.len())?;
        let x_tilde = weights.transform_matrix(x);
        let points = Points::from_matrix(&x_tilde);
        let (_, train_coefficients) = gram_and_coefficients(&spec, &points);
        Ok(Self {
            spec,
            weights,
            x_train: x.clone(),
            x_tilde,
            points,
            beta,
            lambda,
            jitter_used: lambda,
            train_coefficients,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn x_train(&self) -> &DMatrix<f64> {
        &self.x_train
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn n_train(&self) -> usize {
        self.x_train.nrows()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub(crate) fn train_coefficients(&self) -> &SymmetricMatrix {
        &self.train_coefficients
    }

    /// `K_w(Z, X) β`.
    pub fn predict(&self, z: &DMatrix<f64>) -> Result<DVector<f64>> {
        check_dim("predict (input columns)", self.dim(), z.ncols())?;
        let zt = self.weights.transform(z);
        Ok(gram_points(&self.spec, &zt, &self.points) * &self.beta)
    }

    /// Row `i` is `∇f̂(z_i) = Σ_k β_k ∇ₓK_w(z_i, x_k)`.
    pub fn predict_gradient(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("predict_gradient (input columns)", self.dim(), z.ncols())?;
        let z_tilde = self.weights.transform_matrix(z);
        let c = coefficients_points(&self.spec, &Points::from_matrix(&z_tilde), &self.points);
        Ok(self.gradients_from(&c, &z_tilde))
    }

    /// Gradients at the training inputs, reusing the cached coefficients.
    pub(crate) fn train_gradients(&self) -> DMatrix<f64> {
        self.gradients_from(self.train_coefficients.as_matrix(), &self.x_tilde)
    }

    /// With pair coefficients `C` (rows: evaluation points), the gradient in
    /// transformed coordinates is `C diag(β) X̃` for inner-product kernels and
    /// `diag(Cβ) Z̃ − C diag(β) X̃` for radial ones; it is then pulled back
    /// through the weight map.
    fn gradients_from(&self, c: &DMatrix<f64>, z_tilde: &DMatrix<f64>) -> DMatrix<f64> {
        let mut bx = self.x_tilde.clone();
        for (mut row, b) in bx.row_iter_mut().zip(self.beta.iter()) {
            row *= *b;
        }
        let mut g = c * bx;
        if self.spec.is_radial() {
            let cb = c * &self.beta;
            for (i, s) in cb.iter().enumerate() {
                for j in 0..g.ncols() {
                    g[(i, j)] = s * z_tilde[(i, j)] - g[(i, j)];
                }
            }
        }
        self.weights.transform_matrix(&g)
    }

    /// `(1/m) Σ (f̂(z_i) − y_i)²`.
    pub fn test_mse(&self, z: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
        check_dim("test_mse (labels)", z.nrows(), y.len())?;
        if y.is_empty() {
            return Err(Error::EmptyDataSource);
        }
        let pred = self.predict(z)?;
        Ok((pred - y).norm_squared() / y.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_gaussian, sample_hypercube, substream};
    use crate::kernels::{kernel_input_gradient, kernel_value, KernelFamily, WeightMatrix, WeightVector};

    fn lap(sigma: f64, d: usize) -> KernelSpec {
        KernelSpec::new(KernelFamily::Laplacian { sigma }, d).unwrap()
    }

    fn ones(d: usize) -> Weights {
        WeightVector::ones(d).into()
    }

    #[test]
    fn single_point_interpolates() {
        let x = DMatrix::from_row_slice(1, 2, &[0.3, -1.0]);
        let y = DVector::from_vec(vec![2.5]);
        let m = KrrModel::fit(lap(1.0, 2), ones(2), &x, &y, 0.0).unwrap();
        assert_eq!(m.beta()[0], 2.5);
    }

    #[test]
    fn huge_ridge_shrinks_to_zero() {
        let mut rng = substream(1, 0);
        let x = sample_hypercube(10, 4, &mut rng);
        let y = sample_gaussian(10, 1, &mut rng).column(0).into_owned();
        let m = KrrModel::fit(lap(2.0, 4), ones(4), &x, &y, 1e12).unwrap();
        assert!(m.beta().norm() <= y.norm() / 1e12);
        assert!(m.predict(&x).unwrap().amax() < 1e-10);
    }

    #[test]
    fn two_point_hand_inverse() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let y = DVector::from_vec(vec![1.0, -2.0]);
        let m = KrrModel::fit(lap(1.0, 2), ones(2), &x, &y, 0.0).unwrap();
        let k = (-2.0f64).exp();
        let det = 1.0 - k * k;
        let b0 = (y[0] - k * y[1]) / det;
        let b1 = (y[1] - k * y[0]) / det;
        assert!((m.beta()[0] - b0).abs() < 1e-14);
        assert!((m.beta()[1] - b1).abs() < 1e-14);
        // test loss at the training points of the zero predictor and of the fit
        assert!(m.test_mse(&x, &y).unwrap() < 1e-28);
        let zero = KrrModel::from_parts(lap(1.0, 2), ones(2), &x, DVector::zeros(2), 0.0).unwrap();
        assert!((zero.test_mse(&x, &y).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn residual_within_tolerance() {
        let mut rng = substream(2, 0);
        let x = sample_gaussian(40, 6, &mut rng);
        let y = sample_gaussian(40, 1, &mut rng).column(0).into_owned();
        let spec = KernelSpec::new(KernelFamily::Exponential { scale: 1.0 }, 6).unwrap();
        let w: Weights = WeightVector::new(vec![0.5, 1.0, 2.0, 0.1, 1.0, 1.4]).unwrap().into();
        let m = KrrModel::fit(spec, w.clone(), &x, &y, 1e-3).unwrap();
        let k = crate::kernels::gram_symmetric(&spec, &x, &w).unwrap();
        let r = k.shifted(m.jitter_used()).as_matrix() * m.beta() - &y;
        assert!(r.norm() <= 1e-6 * y.norm());
    }

    #[test]
    fn prediction_matches_direct_sum() {
        let mut rng = substream(3, 0);
        let x = sample_gaussian(8, 3, &mut rng);
        let y = sample_gaussian(8, 1, &mut rng).column(0).into_owned();
        let w: Weights = WeightVector::new(vec![0.5, 1.0, 2.0]).unwrap().into();
        let spec = lap(1.5, 3);
        let m = KrrModel::fit(spec, w.clone(), &x, &y, 1e-2).unwrap();
        let z = [0.1, -0.2, 0.7];
        let direct: f64 = (0..8)
            .map(|k| m.beta()[k] * kernel_value(&spec, &z, x.row(k).transpose().as_slice(), &w).unwrap())
            .sum();
        let p = m.predict(&DMatrix::from_row_slice(1, 3, &z)).unwrap();
        assert!((p[0] - direct).abs() < 1e-13);

        let g = m.predict_gradient(&DMatrix::from_row_slice(1, 3, &z)).unwrap();
        for j in 0..3 {
            let direct: f64 = (0..8)
                .map(|k| m.beta()[k] * kernel_input_gradient(&spec, &z, x.row(k).transpose().as_slice(), &w).unwrap()[j])
                .sum();
            assert!((g[(0, j)] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_beta_gives_zero_outputs() {
        let x = sample_gaussian(5, 3, &mut substream(4, 0));
        let m = KrrModel::from_parts(lap(1.0, 3), ones(3), &x, DVector::zeros(5), 0.0).unwrap();
        assert_eq!(m.predict(&x).unwrap(), DVector::zeros(5));
        assert_eq!(m.predict_gradient(&x).unwrap(), DMatrix::zeros(5, 3));
    }

    #[test]
    fn linear_kernel_gradient_is_constant() {
        let mut rng = substream(5, 0);
        let x = sample_gaussian(6, 4, &mut rng);
        let y = sample_gaussian(6, 1, &mut rng).column(0).into_owned();
        let spec = KernelSpec::new(KernelFamily::Linear, 4).unwrap();
        let m = KrrModel::fit(spec, ones(4), &x, &y, 0.5).unwrap();
        let expect = x.transpose() * m.beta() / 4.0;
        let g = m.predict_gradient(&sample_gaussian(3, 4, &mut rng)).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert!((g[(i, j)] - expect[j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = 5;
        let mut rng = substream(6, 0);
        let x = sample_gaussian(20, d, &mut rng);
        let y = sample_gaussian(20, 1, &mut rng).column(0).into_owned();
        let z = sample_gaussian(4, d, &mut rng);
        let mat = {
            let g = sample_gaussian(d, d, &mut rng);
            WeightMatrix::new(SymmetricMatrix::new(&g * g.transpose() / d as f64 + DMatrix::identity(d, d)).unwrap())
        };
        for spec in [
            KernelSpec::new(KernelFamily::Gaussian { sigma: 2.0 }, d).unwrap(),
            KernelSpec::new(KernelFamily::Exponential { scale: 1.0 }, d).unwrap(),
            lap(3.0, d),
        ] {
            for w in [ones(d), mat.clone().into()] {
                let m = KrrModel::fit(spec, w, &x, &y, 1e-2).unwrap();
                let g = m.predict_gradient(&z).unwrap();
                let h = 1e-5;
                let mut err = 0.0;
                let mut norm = 0.0;
                for j in 0..d {
                    let mut zp = z.clone();
                    let mut zm = z.clone();
                    zp.column_mut(j).add_scalar_mut(h);
                    zm.column_mut(j).add_scalar_mut(-h);
                    let fd = (m.predict(&zp).unwrap() - m.predict(&zm).unwrap()) / (2.0 * h);
                    err += (fd - g.column(j)).norm_squared();
                    norm += g.column(j).norm_squared();
                }
                assert!((err / norm).sqrt() <= 1e-5, "{spec:?}");
            }
        }
    }

    #[test]
    fn train_gradients_match_generic_path() {
        let mut rng = substream(7, 0);
        let x = sample_gaussian(12, 4, &mut rng);
        let y = sample_gaussian(12, 1, &mut rng).column(0).into_owned();
        for spec in [lap(2.0, 4), KernelSpec::new(KernelFamily::Polynomial { degree: 2, offset: 1.0 }, 4).unwrap()] {
            let m = KrrModel::fit(spec, ones(4), &x, &y, 1e-3).unwrap();
            assert!((m.train_gradients() - m.predict_gradient(&x).unwrap()).amax() < 1e-12);
        }
    }

    #[test]
    fn interpolation_and_shrinkage() {
        let mut rng = substream(8, 0);
        let x = sample_hypercube(60, 30, &mut rng);
        let y = sample_gaussian(60, 1, &mut rng).column(0).into_owned();
        let w = ones(30);
        let sigma = crate::kernels::median_pairwise_distance(&x, &w).unwrap().unwrap();
        let spec = lap(sigma, 30);
        let m = KrrModel::fit(spec, w.clone(), &x, &y, 1e-12).unwrap();
        assert!(m.test_mse(&x, &y).unwrap() <= 1e-8);
        let mut prev = f64::INFINITY;
        for lambda in [1e-3, 1e-1, 10.0] {
            let b = KrrModel::fit(spec, w.clone(), &x, &y, lambda).unwrap().beta().norm();
            assert!(b <= prev);
            prev = b;
        }
    }

    #[test]
    fn fit_validation() {
        let x = DMatrix::<f64>::zeros(0, 2);
        let y = DVector::<f64>::zeros(0);
        assert!(matches!(KrrModel::fit(lap(1.0, 2), ones(2), &x, &y, 0.0), Err(Error::EmptyDataSource)));
        let x = DMatrix::<f64>::zeros(2, 2);
        assert!(KrrModel::fit(lap(1.0, 2), ones(2), &x, &DVector::zeros(3), 0.0).is_err());
        assert!(KrrModel::fit(lap(1.0, 2), ones(2), &x, &DVector::zeros(2), -1.0).is_err());
    }
}
