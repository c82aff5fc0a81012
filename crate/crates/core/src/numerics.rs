//! Dense symmetric linear algebra shared by the learners.
//!
//! Everything here is a thin layer over `nalgebra` that pins down the
//! conventions the rest of the crate relies on: exact symmetry, a jitter
//! ladder for near-singular Gram matrices, clamped PSD square roots, and
//! largest-principal-angle comparisons of eigenspaces.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};

/// Orthonormality tolerance for [`Subspace`] bases (Frobenius norm of `BᵀB − I`).
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Number of ×10 escalations attempted by [`solve_spd`] after the first failure.
pub const JITTER_ESCALATIONS: u32 = 6;

/// A square matrix whose entries satisfy `a[i][j] == a[j][i]` bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Symmetrizes `a` as `(A + Aᵀ)/2`.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        check_dim("SymmetricMatrix::new (square)", a.nrows(), a.ncols())?;
        let n = a.nrows();
        let mut s = a;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        Ok(Self(s))
    }

    /// Builds the matrix from its upper triangle; `f(i, j)` is called for `i <= j` only.
    pub fn from_upper_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for i in 0..=j {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal().iter().copied().collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        check_dim("SymmetricMatrix::combine", self.dim(), other.dim())?;
        Ok(Self(&self.0 * a + &other.0 * b))
    }

    /// `self + c·I`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += c;
        }
        Self(m)
    }

    /// `vᵀ A v`.
    pub fn quadratic_form(&self, v: &DVector<f64>) -> Result<f64> {
        check_dim("SymmetricMatrix::quadratic_form", self.dim(), v.len())?;
        Ok(v.dot(&(&self.0 * v)))
    }

    /// Eigenpairs sorted by nonincreasing eigenvalue; eigenvectors are the columns.
    pub fn sorted_eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let eig = SymmetricEigen::new(self.0.clone());
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        (values, vectors)
    }

    /// Eigenvalues in nonincreasing order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.sorted_eigen().0
    }

    /// `V·diag(f(λ))·Vᵀ`, symmetrized.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Self {
        let eig = SymmetricEigen::new(self.0.clone());
        let mapped = DVector::from_iterator(self.dim(), eig.eigenvalues.iter().map(|&l| f(l)));
        let v = &eig.eigenvectors;
        let out = v * DMatrix::from_diagonal(&mapped) * v.transpose();
        Self::new(out).expect("square by construction")
    }
}

/// A `k`-dimensional subspace of `R^d` with an orthonormal basis.
#[derive(Clone, Debug)]
pub struct Subspace {
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl Subspace {
    /// Wraps a `d×k` basis, checking `BᵀB = I_k`.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        let k = basis.ncols();
        let gram = basis.transpose() * &basis;
        let err = (gram - DMatrix::<f64>::identity(k, k)).norm();
        if err > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal(err));
        }
        Ok(Self {
            basis,
            eigenvalues: Vec::new(),
        })
    }

    /// Orthonormalizes the columns of `vectors` (thin QR) and wraps the result.
    pub fn span(vectors: DMatrix<f64>) -> Result<Self> {
        let k = vectors.ncols();
        let q = vectors.qr().q();
        Self::from_orthonormal(q.columns(0, k).into_owned())
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Eigenvalues attached by [`top_k_eigenspace`], nonincreasing; empty otherwise.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
}

/// Solution of a jittered SPD system together with the jitter that succeeded.
#[derive(Clone, Debug)]
pub struct SpdSolution {
    pub x: DMatrix<f64>,
    pub jitter: f64,
}

/// Solves `(A + jitter·I) X = B` by Cholesky.
///
/// When the factorization fails the jitter climbs a ladder: starting from
/// `max(jitter, 1e-12·tr(A)/dim)` and multiplying by 10 up to
/// [`JITTER_ESCALATIONS`] times. The jitter actually used is returned.
pub fn solve_spd(a: &SymmetricMatrix, b: &DMatrix<f64>, jitter: f64) -> Result<SpdSolution> {
    let n = a.dim();
    check_dim("solve_spd (rhs rows)", n, b.nrows())?;
    if !(jitter >= 0.0) {
        return Err(Error::Config(format!("jitter must be nonnegative, got {jitter}")));
    }
    if let Some(x) = try_cholesky_solve(a, b, jitter) {
        return Ok(SpdSolution { x, jitter });
    }
    let base = jitter.max(1e-12 * a.trace() / n.max(1) as f64);
    let mut current = base;
    for _ in 0..=JITTER_ESCALATIONS {
        if current > 0.0 {
            if let Some(x) = try_cholesky_solve(a, b, current) {
                return Ok(SpdSolution { x, jitter: current });
            }
        }
        current *= 10.0;
    }
    Err(Error::NotPositiveDefinite {
        jitter: base * 10f64.powi(JITTER_ESCALATIONS as i32),
    })
}

fn try_cholesky_solve(a: &SymmetricMatrix, b: &DMatrix<f64>, jitter: f64) -> Option<DMatrix<f64>> {
    let chol = a.shifted(jitter).into_inner().cholesky()?;
    let x = chol.solve(b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Convenience wrapper of [`solve_spd`] for a single right-hand side.
pub fn solve_spd_vec(a: &SymmetricMatrix, b: &DVector<f64>, jitter: f64) -> Result<(DVector<f64>, f64)> {
    let rhs = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let sol = solve_spd(a, &rhs, jitter)?;
    Ok((sol.x.column(0).into_owned(), sol.jitter))
}

/// PSD square root with negative eigenvalues clamped to zero.
pub fn psd_sqrt(m: &SymmetricMatrix) -> SymmetricMatrix {
    m.map_spectrum(|l| l.max(0.0).sqrt())
}

/// Projection onto the PSD cone (negative eigenvalues set to zero).
pub fn psd_clamp(m: &SymmetricMatrix) -> SymmetricMatrix {
    m.map_spectrum(|l| l.max(0.0))
}

/// Span of the eigenvectors belonging to the `k` largest eigenvalues.
pub fn top_k_eigenspace(m: &SymmetricMatrix, k: usize) -> Result<Subspace> {
    if k == 0 || k > m.dim() {
        return Err(Error::DimensionMismatch {
            context: "top_k_eigenspace (k must lie in 1..=dim)",
            expected: m.dim(),
            found: k,
        });
    }
    let (values, vectors) = m.sorted_eigen();
    Ok(Subspace {
        basis: vectors.columns(0, k).into_owned(),
        eigenvalues: values[..k].to_vec(),
    })
}

/// Largest principal angle between two subspaces of equal rank, in `[0, π/2]`.
pub fn principal_angle(u: &Subspace, v: &Subspace) -> Result<f64> {
    check_dim("principal_angle (ambient dim)", u.ambient_dim(), v.ambient_dim())?;
    check_dim("principal_angle (rank)", u.rank(), v.rank())?;
    let cross = u.basis.transpose() * &v.basis;
    let sigma_min = cross
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(sigma_min.clamp(0.0, 1.0).acos())
}

/// `‖A − B‖_F / ‖B‖_F`.
pub fn relative_matrix_error(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<f64> {
    check_dim("relative_matrix_error", b.dim(), a.dim())?;
    let denom = b.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((a.as_matrix() - b.as_matrix()).norm() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let sol = solve_spd(&SymmetricMatrix::identity(3), &col(&[1.0, 2.0, 3.0]), 0.0).unwrap();
        assert_eq!(sol.x.as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(sol.jitter, 0.0);

        let a = SymmetricMatrix::from_diagonal(&[2.0, 4.0]);
        let sol = solve_spd(&a, &col(&[2.0, 4.0]), 0.0).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-15 && (sol.x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn solve_two_by_two_hand_case() {
        // [[2,1],[1,2]] x = (3,3): x = (1,1); multiply back as the check.
        let a = SymmetricMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let b = col(&[3.0, 3.0]);
        let sol = solve_spd(&a, &b, 0.0).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-14 && (sol.x[1] - 1.0).abs() < 1e-14);
        let back = a.as_matrix() * &sol.x;
        assert!((back - b).norm() < 1e-14);
    }

    #[test]
    fn singular_matrix_escalates_jitter() {
        // rank-1 PSD matrix: plain Cholesky fails, the ladder rescues it
        let a = SymmetricMatrix::new(DMatrix::from_element(3, 3, 1.0)).unwrap();
        let sol = solve_spd(&a, &col(&[1.0, 1.0, 1.0]), 0.0).unwrap();
        assert!(sol.jitter > 0.0);
        assert!(sol.jitter <= 1e-12 * 10f64.powi(6) + 1e-30);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = SymmetricMatrix::from_diagonal(&[1.0, -5.0]);
        let err = solve_spd(&a, &col(&[1.0, 1.0]), 0.0).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn rhs_shape_is_checked() {
        let err = solve_spd(&SymmetricMatrix::identity(2), &col(&[1.0, 2.0, 3.0]), 0.0).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn sqrt_examples() {
        let s = psd_sqrt(&SymmetricMatrix::identity(4));
        assert!((s.as_matrix() - DMatrix::<f64>::identity(4, 4)).norm() < 1e-12);

        let s = psd_sqrt(&SymmetricMatrix::from_diagonal(&[4.0, 9.0]));
        assert!((s.get(0, 0) - 2.0).abs() < 1e-12 && (s.get(1, 1) - 3.0).abs() < 1e-12);
        assert!(s.get(0, 1).abs() < 1e-12);

        // projector is its own square root
        let v = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        let p = SymmetricMatrix::new(&v * v.transpose()).unwrap();
        let s = psd_sqrt(&p);
        assert!((s.as_matrix() - p.as_matrix()).norm() < 1e-8);
        assert!((s.as_matrix() * s.as_matrix() - p.as_matrix()).norm() < 1e-8);
    }

    #[test]
    fn sqrt_clamps_negative_spectrum() {
        let m = SymmetricMatrix::from_diagonal(&[4.0, -1.0]);
        let s = psd_sqrt(&m);
        assert!((s.get(0, 0) - 2.0).abs() < 1e-12);
        assert!(s.get(1, 1).abs() < 1e-12);
    }

    #[test]
    fn eigenspace_examples() {
        let m = SymmetricMatrix::from_diagonal(&[3.0, 2.0, 1.0]);
        let sub = top_k_eigenspace(&m, 2).unwrap();
        assert_eq!(sub.eigenvalues(), &[3.0, 2.0]);
        let target = Subspace::span(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0])).unwrap();
        assert!(principal_angle(&sub, &target).unwrap() < 1e-12);

        let m = SymmetricMatrix::from_diagonal(&[1.0, 5.0, 2.0]);
        let sub = top_k_eigenspace(&m, 1).unwrap();
        assert!((sub.basis()[(1, 0)].abs() - 1.0).abs() < 1e-12);

        // fully degenerate: any unit vector is acceptable
        let sub = top_k_eigenspace(&SymmetricMatrix::identity(4), 1).unwrap();
        assert!((sub.basis().norm() - 1.0).abs() < 1e-12);

        assert!(top_k_eigenspace(&m, 0).is_err());
        assert!(top_k_eigenspace(&m, 4).is_err());
    }

    #[test]
    fn principal_angle_examples() {
        let e1 = Subspace::span(col(&[1.0, 0.0])).unwrap();
        let e2 = Subspace::span(col(&[0.0, 1.0])).unwrap();
        let diag = Subspace::span(col(&[1.0, 1.0])).unwrap();
        assert!(principal_angle(&e1, &e1).unwrap().abs() < 1e-7);
        assert!((principal_angle(&e1, &e2).unwrap() - FRAC_PI_2).abs() < 1e-12);
        assert!((principal_angle(&e1, &diag).unwrap() - FRAC_PI_4).abs() < 1e-12);

        let e3 = Subspace::span(col(&[1.0, 0.0, 0.0])).unwrap();
        assert!(principal_angle(&e1, &e3).is_err());
    }

    #[test]
    fn relative_error_examples() {
        let b = SymmetricMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0])).unwrap();
        assert_eq!(relative_matrix_error(&b, &b).unwrap(), 0.0);
        assert!((relative_matrix_error(&b.scaled(2.0), &b).unwrap() - 1.0).abs() < 1e-15);
        let r = relative_matrix_error(&SymmetricMatrix::zeros(2), &SymmetricMatrix::identity(2)).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
        assert!(matches!(
            relative_matrix_error(&b, &SymmetricMatrix::zeros(2)),
            Err(Error::ZeroReference)
        ));
    }

    #[test]
    fn construction_symmetrizes() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 1.0]);
        let s = SymmetricMatrix::new(a).unwrap();
        assert_eq!(s.get(0, 1), 3.0);
        assert_eq!(s.get(1, 0), 3.0);
        assert!(SymmetricMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }
}
