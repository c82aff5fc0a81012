//! Reproducible random streams, synthetic samplers, target functions and
//! CSV ingestion.
//!
//! Every random draw comes from a [`substream`]: a ChaCha8 generator keyed by
//! the run seed with the ChaCha stream id selecting an independent sequence.
//! Two stream ids never share keystream, so a sweep can hand out streams in
//! any order without perturbing individual runs.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::numerics::SymmetricMatrix;
use crate::orthopoly::FourierPolynomial;

pub type StreamRng = ChaCha8Rng;

/// Independent generator number `stream` under `seed`.
pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Purpose tags for stream ids; the id is `tag << 32 | index`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    Train = 1,
    TrainNoise = 2,
    Test = 3,
    Rotation = 4,
    GroundTruth = 5,
    Pool = 6,
}

pub fn stream_id(tag: StreamTag, index: u32) -> u64 {
    (tag as u64) << 32 | index as u64
}

/// Tagged convenience wrapper around [`substream`].
pub fn tagged_stream(seed: u64, tag: StreamTag, index: u32) -> StreamRng {
    substream(seed, stream_id(tag, index))
}

/// `n×d` matrix of independent uniform signs, drawn in row order.
pub fn sample_hypercube(n: usize, d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_row_iterator(n, d, (0..n * d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }))
}

/// `n×d` matrix of independent standard normals, drawn in row order.
pub fn sample_gaussian(n: usize, d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_row_iterator(n, d, (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
/// of `R`'s diagonal folded into `Q`.
pub fn random_rotation(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = sample_gaussian(d, d, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Input distribution for synthetic data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distribution {
    Hypercube,
    Gaussian,
}

impl Distribution {
    pub fn sample(&self, n: usize, d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        match self {
            Distribution::Hypercube => sample_hypercube(n, d, rng),
            Distribution::Gaussian => sample_gaussian(n, d, rng),
        }
    }
}

/// Ground-truth regression target `y = f(Ux) + σ ξ`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSpec {
    f: FourierPolynomial,
    rotation: Option<DMatrix<f64>>,
    noise_sigma: f64,
}

impl TargetSpec {
    pub fn new(f: FourierPolynomial, rotation: Option<DMatrix<f64>>, noise_sigma: f64) -> Result<Self> {
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {noise_sigma}")));
        }
        if let Some(u) = &rotation {
            let d = f.dim();
            check_dim("target rotation rows", d, u.nrows())?;
            check_dim("target rotation columns", d, u.ncols())?;
            let err = (u.transpose() * u - DMatrix::identity(d, d)).norm();
            if err > 1e-10 {
                return Err(Error::NotOrthonormal(err));
            }
        }
        Ok(Self { f, rotation, noise_sigma })
    }

    pub fn polynomial(&self) -> &FourierPolynomial {
        &self.f
    }

    pub fn rotation(&self) -> Option<&DMatrix<f64>> {
        self.rotation.as_ref()
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    /// Rows `Ux_i` (or `x_i` without rotation).
    fn rotated(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.rotation {
            Some(u) => x * u.transpose(),
            None => x.clone(),
        }
    }

    /// Noiseless values `f(Ux_i)`.
    pub fn clean(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        check_dim("target input columns", self.dim(), x.ncols())?;
        let z = self.rotated(x);
        let mut row = vec![0.0; self.dim()];
        Ok(DVector::from_iterator(
            x.nrows(),
            (0..x.nrows()).map(|i| {
                row.iter_mut().zip(z.row(i).iter()).for_each(|(a, b)| *a = *b);
                self.f.eval_unchecked(&row)
            }),
        ))
    }

    /// `f(Ux_i) + σ ξ_i`, noise drawn from `rng` in row order.
    pub fn label(&self, x: &DMatrix<f64>, rng: &mut impl Rng) -> Result<DVector<f64>> {
        let mut y = self.clean(x)?;
        if self.noise_sigma > 0.0 {
            for v in y.iter_mut() {
                *v += self.noise_sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(y)
    }

    /// Rows `∇ₓ f(Ux_i) = Uᵀ ∇f(Ux_i)`.
    pub fn gradients(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("target input columns", self.dim(), x.ncols())?;
        let d = self.dim();
        let z = self.rotated(x);
        let mut g = DMatrix::zeros(x.nrows(), d);
        let mut row = vec![0.0; d];
        let mut grad = vec![0.0; d];
        for i in 0..x.nrows() {
            row.iter_mut().zip(z.row(i).iter()).for_each(|(a, b)| *a = *b);
            self.f.gradient_into(&row, &mut grad);
            for j in 0..d {
                g[(i, j)] = grad[j];
            }
        }
        Ok(match &self.rotation {
            Some(u) => g * u,
            None => g,
        })
    }

    /// Monte-Carlo estimate of `E[∇f ∇fᵀ]` over `samples` draws from `dist`.
    pub fn ground_truth_agop(&self, dist: Distribution, samples: usize, rng: &mut impl Rng) -> Result<SymmetricMatrix> {
        const CHUNK: usize = 10_000;
        let d = self.dim();
        if samples == 0 {
            return Err(Error::EmptyDataSource);
        }
        let mut acc = DMatrix::zeros(d, d);
        let mut left = samples;
        while left > 0 {
            let m = left.min(CHUNK);
            let g = self.gradients(&dist.sample(m, d, rng))?;
            acc += g.transpose() * &g;
            left -= m;
        }
        SymmetricMatrix::new(acc / samples as f64)
    }
}

/// A design matrix with responses.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub meta: String,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, meta: impl Into<String>) -> Result<Self> {
        check_dim("dataset rows", x.nrows(), y.len())?;
        Ok(Self { x, y, meta: meta.into() })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// Per-column feature scaling fitted on the loaded rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Normalization {
    None,
    /// Mean 0, population standard deviation 1 (std below 1e-12 is treated as 1).
    #[default]
    ZScore,
    /// Affine map of `[min, max]` onto `[−1, 1]`; constant columns become 0.
    MinusOneOne,
}

/// Which CSV columns to read.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvSchema {
    pub label: String,
    /// `None` selects every non-label column in file order.
    pub features: Option<Vec<String>>,
    pub normalization: Normalization,
}

/// Loads a headerful CSV. Parse errors report the 1-based data row (the
/// header is row 0) and the column name.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    if !path.is_file() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| csv_error(e, 0, ""))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(e, 0, ""))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let label_idx = find(&schema.label)?;
    let feature_idx: Vec<usize> = match &schema.features {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&i| i != label_idx).collect(),
    };

    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| csv_error(e, row, ""))?;
        let cell = |i: usize| -> Result<f64> {
            let raw = record.get(i).ok_or_else(|| Error::Parse {
                row,
                column: headers[i].clone(),
                message: "missing field".into(),
            })?;
            raw.trim().parse::<f64>().map_err(|e| Error::Parse {
                row,
                column: headers[i].clone(),
                message: format!("{raw:?}: {e}"),
            })
        };
        labels.push(cell(label_idx)?);
        for &i in &feature_idx {
            values.push(cell(i)?);
        }
    }
    let n = labels.len();
    let mut x = DMatrix::from_row_slice(n, feature_idx.len(), &values);
    normalize_columns(&mut x, schema.normalization);
    Dataset::new(x, DVector::from_vec(labels), format!("csv:{}", path.display()))
}

fn csv_error(e: csv::Error, row: usize, column: &str) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        },
        _ => Error::Parse {
            row,
            column: column.to_string(),
            message: e.to_string(),
        },
    }
}

/// Applies `norm` to each column of `x` in place.
pub fn normalize_columns(x: &mut DMatrix<f64>, norm: Normalization) {
    let n = x.nrows();
    if n == 0 {
        return;
    }
    for mut col in x.column_iter_mut() {
        match norm {
            Normalization::None => {}
            Normalization::ZScore => {
                let mean = col.sum() / n as f64;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                let sd = var.sqrt();
                let sd = if sd < 1e-12 { 1.0 } else { sd };
                col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
            }
            Normalization::MinusOneOne => {
                let lo = col.min();
                let hi = col.max();
                let span = hi - lo;
                col.iter_mut().for_each(|v| *v = if span > 0.0 { 2.0 * (*v - lo) / span - 1.0 } else { 0.0 });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a = sample_gaussian(4, 3, &mut substream(7, 1));
        let b = sample_gaussian(4, 3, &mut substream(7, 1));
        let c = sample_gaussian(4, 3, &mut substream(7, 2));
        let e = sample_gaussian(4, 3, &mut substream(8, 1));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, e);
    }

    #[test]
    fn consuming_one_stream_does_not_touch_another() {
        let mut s1 = substream(3, 10);
        let mut s2 = substream(3, 11);
        let head: Vec<u64> = (0..4).map(|_| s2.random()).collect();
        let _burn: Vec<u64> = (0..1000).map(|_| s1.random()).collect();
        let tail: Vec<u64> = (0..4).map(|_| s2.random()).collect();
        let mut fresh = substream(3, 11);
        let expect: Vec<u64> = (0..8).map(|_| fresh.random()).collect();
        assert_eq!([head, tail].concat(), expect);
        // distinct streams: sample correlation of uniforms near zero
        let mut u1 = substream(3, 20);
        let mut u2 = substream(3, 21);
        let n = 100_000;
        let (a, b): (Vec<f64>, Vec<f64>) = (0..n).map(|_| (u1.random::<f64>() - 0.5, u2.random::<f64>() - 0.5)).unzip();
        let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / (n as f64 / 12.0);
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "{corr}");
    }

    #[test]
    fn tagged_ids_do_not_collide() {
        assert_ne!(stream_id(StreamTag::Train, 0), stream_id(StreamTag::Test, 0));
        assert_ne!(stream_id(StreamTag::Train, 1), stream_id(StreamTag::Train, 2));
    }

    #[test]
    fn hypercube_entries_and_mean() {
        let x = sample_hypercube(100_000, 1, &mut substream(1, 0));
        assert!(x.iter().all(|v| *v == 1.0 || *v == -1.0));
        let mean = x.sum() / 1e5;
        assert!(mean.abs() < 0.02, "{mean}");
    }

    #[test]
    fn gaussian_moments() {
        let x = sample_gaussian(1000, 1000, &mut substream(2, 0));
        let n = 1e6;
        let mean = x.sum() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.005);
        assert!((0.99..=1.01).contains(&var), "{var}");
    }

    #[test]
    fn rotation_is_orthogonal_isometry() {
        let mut rng = substream(5, 0);
        let u = random_rotation(12, &mut rng);
        assert!((u.transpose() * &u - DMatrix::identity(12, 12)).norm() <= 1e-10);
        assert!((u.determinant().abs() - 1.0).abs() <= 1e-8);
        let x = sample_gaussian(12, 1, &mut rng).column(0).into_owned();
        assert!(((&u * &x).norm() - x.norm()).abs() < 1e-12);
    }

    fn fig1(d: usize) -> FourierPolynomial {
        FourierPolynomial::from_terms(d, [(vec![0], 1.0), (vec![1], 1.0), (vec![2], 1.0), (vec![0, 1, 2], 1.0)]).unwrap()
    }

    #[test]
    fn labels_on_full_cube() {
        let t = TargetSpec::new(fig1(3), None, 0.0).unwrap();
        let pts: Vec<f64> = (0..8u32).flat_map(|m| (0..3).map(move |i| if m >> i & 1 == 1 { 1.0 } else { -1.0 })).collect();
        let x = DMatrix::from_row_slice(8, 3, &pts);
        let y = t.label(&x, &mut substream(0, 0)).unwrap();
        for i in 0..8 {
            let (a, b, c) = (x[(i, 0)], x[(i, 1)], x[(i, 2)]);
            assert_eq!(y[i], a + b + c + a * b * c);
        }
        let mut sorted: Vec<f64> = y.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, vec![-4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0]);
    }

    #[test]
    fn label_noise_and_identity_rotation() {
        let c = FourierPolynomial::from_terms(4, [(Vec::<usize>::new(), 2.0)]).unwrap();
        let t = TargetSpec::new(c, None, 0.0).unwrap();
        let x = sample_gaussian(5, 4, &mut substream(1, 0));
        assert!(t.label(&x, &mut substream(1, 1)).unwrap().iter().all(|v| *v == 2.0));

        let plain = TargetSpec::new(fig1(4), None, 0.3).unwrap();
        let ident = TargetSpec::new(fig1(4), Some(DMatrix::identity(4, 4)), 0.3).unwrap();
        assert_eq!(
            plain.label(&x, &mut substream(1, 2)).unwrap(),
            ident.label(&x, &mut substream(1, 2)).unwrap()
        );

        let n = 100_000;
        let x = sample_hypercube(n, 4, &mut substream(2, 0));
        let t = TargetSpec::new(fig1(4), None, 0.1).unwrap();
        let resid = t.label(&x, &mut substream(2, 1)).unwrap() - t.clean(&x).unwrap();
        let var = resid.norm_squared() / n as f64;
        assert!((var / 0.01 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn rotated_gradients_match_finite_differences() {
        let mut rng = substream(3, 0);
        let u = random_rotation(5, &mut rng);
        let t = TargetSpec::new(fig1(5), Some(u), 0.0).unwrap();
        let x = sample_gaussian(3, 5, &mut rng);
        let g = t.gradients(&x).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..5 {
                let mut p = x.rows(i, 1).into_owned();
                let mut m = p.clone();
                p[(0, j)] += h;
                m[(0, j)] -= h;
                let fd = (t.clean(&p).unwrap()[0] - t.clean(&m).unwrap()[0]) / (2.0 * h);
                assert!((fd - g[(i, j)]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn ground_truth_agop_unrotated_cube() {
        // on the cube, E[∂_i f ∂_j f] = Σ_S b_{S∪i} b_{S∪j} over S avoiding i, j
        let t = TargetSpec::new(fig1(4), None, 0.0).unwrap();
        let g = t.ground_truth_agop(Distribution::Hypercube, 50_000, &mut substream(4, 0)).unwrap();
        assert!((g.get(0, 0) - 2.0).abs() < 0.05);
        assert!(g.get(3, 3).abs() < 1e-15);
        assert!((g.get(0, 1) - 1.0).abs() < 0.05);
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_round_trip() {
        let f = write_tmp("a,b,y\n1.5,-2,3\n4,5e-1,-6\n");
        let schema = CsvSchema {
            label: "y".into(),
            features: None,
            normalization: Normalization::None,
        };
        let ds = load_csv(f.path(), &schema).unwrap();
        assert_eq!(ds.x, DMatrix::from_row_slice(2, 2, &[1.5, -2.0, 4.0, 0.5]));
        assert_eq!(ds.y, DVector::from_vec(vec![3.0, -6.0]));
    }

    #[test]
    fn csv_zscore_and_range() {
        let f = write_tmp("y,u,v,c\n0,1,10,5\n1,2,20,5\n0,3,60,5\n1,4,10,5\n");
        let mut schema = CsvSchema {
            label: "y".into(),
            features: Some(vec!["u".into(), "v".into(), "c".into()]),
            normalization: Normalization::ZScore,
        };
        let ds = load_csv(f.path(), &schema).unwrap();
        for j in 0..2 {
            let col = ds.x.column(j);
            let mean = col.sum() / 4.0;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
            assert!(mean.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
        }
        assert!(ds.x.column(2).iter().all(|v| *v == 0.0));
        schema.normalization = Normalization::MinusOneOne;
        let ds = load_csv(f.path(), &schema).unwrap();
        for (got, want) in ds.x.column(0).iter().zip([-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn csv_errors() {
        let f = write_tmp("a,y\n1,2\nzz,3\n");
        let schema = CsvSchema {
            label: "y".into(),
            features: None,
            normalization: Normalization::None,
        };
        match load_csv(f.path(), &schema) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("{other:?}"),
        }
        let missing = CsvSchema {
            label: "nope".into(),
            ..schema.clone()
        };
        assert!(matches!(load_csv(f.path(), &missing), Err(Error::MissingColumn(c)) if c == "nope"));
        assert!(matches!(
            load_csv(Path::new("/definitely/not/here.csv"), &schema),
            Err(Error::FileNotFound(_))
        ));
    }
}
