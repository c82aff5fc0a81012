//! Fast self-checks of the numerical core against independent oracles.
//!
//! Every check compares a library routine with a brute-force or
//! finite-difference computation on a small fixture. `gradient_perturbation`
//! adds a constant to the analytic gradients before comparison, which must
//! make the gradient checks fail.

use irkm_core::estimators::{agop, dn_vector, safeguard_normalize};
use irkm_core::kernels::{gram_symmetric, kernel_input_gradient, kernel_value, KernelFamily, KernelSpec, WeightVector, Weights};
use irkm_core::krr::KrrModel;
use irkm_core::numerics::{principal_angle, solve_spd, SymmetricMatrix, Subspace};
use irkm_core::orthopoly::{hermite_eval, FourierPolynomial};
use irkm_core::data::{sample_hypercube, substream};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::config::{Config, Method};
use crate::runner::execute;

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    pub gradient_perturbation: f64,
}

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(&VerifyOptions) -> Result<String, String>;

const CHECKS: &[(&str, Check)] = &[
    ("kernel input gradient vs finite differences", check_kernel_gradient),
    ("predictor gradient vs finite differences", check_predictor_gradient),
    ("DN vector vs finite-difference quadratic form", check_dn),
    ("AGOP vs mean outer product of gradients", check_agop),
    ("safeguard normalization sum and ranking", check_safeguard),
    ("SPD solve residual", check_solve),
    ("principal angle of known subspaces", check_angle),
    ("Hermite orthonormality by quadrature", check_hermite),
    ("Fourier coefficients vs cube enumeration", check_fourier),
    ("leap complexity vs brute-force orderings", check_leap),
    ("rerun reproduces trace bytes", check_determinism),
];

pub fn run_checks(opts: &VerifyOptions) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(name, f)| match f(opts) {
            Ok(detail) => CheckOutcome { name, passed: true, detail },
            Err(detail) => CheckOutcome { name, passed: false, detail },
        })
        .collect()
}

pub fn render(outcomes: &[CheckOutcome]) -> String {
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for o in outcomes {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        out.push_str(&format!("{tag}  {:width$}  {}\n", o.name, o.detail));
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    out.push_str(&format!("{} checks, {} failed\n", outcomes.len(), failed));
    out
}

fn specs(d: usize) -> Vec<KernelSpec> {
    [
        KernelFamily::Laplacian { sigma: 1.7 },
        KernelFamily::Gaussian { sigma: 1.3 },
        KernelFamily::Polynomial { degree: 3, offset: 1.0 },
        KernelFamily::Exponential { scale: 1.0 },
        KernelFamily::Linear,
    ]
    .into_iter()
    .map(|f| KernelSpec::new(f, d).expect("valid fixture"))
    .collect()
}

fn fixture(seed: u64, n: usize, d: usize) -> (DMatrix<f64>, DVector<f64>, WeightVector) {
    let mut rng = substream(seed, 0);
    let x = sample_hypercube(n, d, &mut rng);
    let y = DVector::from_fn(n, |i, _| x[(i, 0)] * x[(i, 1 % d)] + 0.3 * x[(i, d - 1)]);
    let w = WeightVector::new((0..d).map(|_| rng.random_range(0.3..1.7)).collect()).expect("positive");
    (x, y, w)
}

fn ensure(ok: bool, msg: String) -> Result<String, String> {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn check_kernel_gradient(opts: &VerifyOptions) -> Result<String, String> {
    let d = 5;
    let (x, _, w) = fixture(1, 2, d);
    let weights = Weights::Vector(w);
    let (a, b) = (x.row(0).iter().copied().collect::<Vec<_>>(), x.row(1).iter().copied().collect::<Vec<_>>());
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for spec in specs(d) {
        let g = kernel_input_gradient(&spec, &a, &b, &weights).map_err(|e| e.to_string())?;
        for j in 0..d {
            let (mut p, mut m) = (a.clone(), a.clone());
            p[j] += h;
            m[j] -= h;
            let fd = (kernel_value(&spec, &p, &b, &weights).unwrap() - kernel_value(&spec, &m, &b, &weights).unwrap()) / (2.0 * h);
            let an = g[j] + opts.gradient_perturbation;
            worst = worst.max((an - fd).abs() / fd.abs().max(1.0));
        }
    }
    ensure(worst <= 1e-6, format!("max rel err {worst:.2e} (tol 1e-6)"))
}

fn check_predictor_gradient(opts: &VerifyOptions) -> Result<String, String> {
    let d = 4;
    let (x, y, w) = fixture(2, 25, d);
    let (z, _, _) = fixture(3, 5, d);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for spec in specs(d) {
        let model = KrrModel::fit(spec, w.clone().into(), &x, &y, 1e-2).map_err(|e| e.to_string())?;
        let g = model.predict_gradient(&z).map_err(|e| e.to_string())?;
        for j in 0..d {
            let (mut p, mut m) = (z.clone(), z.clone());
            p.column_mut(j).add_scalar_mut(h);
            m.column_mut(j).add_scalar_mut(-h);
            let fd = (model.predict(&p).unwrap() - model.predict(&m).unwrap()) / (2.0 * h);
            for i in 0..z.nrows() {
                let an = g[(i, j)] + opts.gradient_perturbation;
                worst = worst.max((an - fd[i]).abs() / fd[i].abs().max(1.0));
            }
        }
    }
    ensure(worst <= 1e-5, format!("max rel err {worst:.2e} (tol 1e-5)"))
}

fn check_dn(_: &VerifyOptions) -> Result<String, String> {
    let d = 4;
    let (x, y, w) = fixture(4, 12, d);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for spec in specs(d) {
        let model = KrrModel::fit(spec, w.clone().into(), &x, &y, 1e-2).map_err(|e| e.to_string())?;
        let fast = dn_vector(&model);
        let beta = model.beta();
        for j in 0..d {
            let q = |delta: f64| {
                let mut v = w.values().to_vec();
                v[j] += delta;
                let k = gram_symmetric(&spec, &x, &Weights::Vector(WeightVector::new(v).unwrap())).unwrap();
                k.quadratic_form(beta).unwrap()
            };
            let fd = (q(h) - q(-h)) / (2.0 * h);
            worst = worst.max((fast[j] - fd).abs() / fd.abs().max(1.0));
        }
    }
    ensure(worst <= 1e-5, format!("max rel err {worst:.2e} (tol 1e-5)"))
}

fn check_agop(_: &VerifyOptions) -> Result<String, String> {
    let d = 4;
    let (x, y, w) = fixture(5, 20, d);
    let mut worst: f64 = 0.0;
    for spec in specs(d) {
        let model = KrrModel::fit(spec, w.clone().into(), &x, &y, 1e-2).map_err(|e| e.to_string())?;
        let g = model.predict_gradient(&x).map_err(|e| e.to_string())?;
        let oracle = g.transpose() * &g / x.nrows() as f64;
        let fast = agop(&model, &x).map_err(|e| e.to_string())?;
        let err = (fast.as_matrix() - &oracle).amax() / oracle.amax().max(1e-12);
        worst = worst.max(err);
    }
    ensure(worst <= 1e-10, format!("max rel err {worst:.2e} (tol 1e-10)"))
}

fn check_safeguard(_: &VerifyOptions) -> Result<String, String> {
    let v = [3.0, 0.0, 1.0, 5.0, 0.5];
    let w = safeguard_normalize(&v, 0.01).map_err(|e| e.to_string())?;
    let s: f64 = w.values().iter().sum();
    let ranked = (0..v.len()).all(|i| (0..v.len()).all(|j| v[i] >= v[j] || w.values()[i] < w.values()[j]));
    let positive = w.values().iter().all(|&x| x > 0.0);
    ensure(
        (s - v.len() as f64).abs() <= 1e-12 && ranked && positive,
        format!("sum {s:.15} (want {}), ranking kept: {ranked}, positive: {positive}", v.len()),
    )
}

fn check_solve(_: &VerifyOptions) -> Result<String, String> {
    let n = 30;
    let mut rng = substream(6, 0);
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let a = SymmetricMatrix::new(&b * b.transpose() + DMatrix::identity(n, n) * 1e-3).map_err(|e| e.to_string())?;
    let rhs = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
    let sol = solve_spd(&a, &rhs, 0.0).map_err(|e| e.to_string())?;
    let res = (a.as_matrix() * &sol.x - &rhs).amax();
    ensure(res <= 1e-8 && sol.jitter == 0.0, format!("residual {res:.2e}, jitter {}", sol.jitter))
}

fn check_angle(_: &VerifyOptions) -> Result<String, String> {
    let theta: f64 = 0.3;
    let u = Subspace::span(DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0])).map_err(|e| e.to_string())?;
    let v = Subspace::span(DMatrix::from_column_slice(3, 1, &[theta.cos(), theta.sin(), 0.0])).map_err(|e| e.to_string())?;
    let got = principal_angle(&u, &v).map_err(|e| e.to_string())?;
    ensure((got - theta).abs() <= 1e-10, format!("angle {got:.12} (want {theta})"))
}

fn check_hermite(_: &VerifyOptions) -> Result<String, String> {
    // composite Simpson on [-12, 12] against the standard normal density
    let (lo, hi, m) = (-12.0, 12.0, 24_000usize);
    let h = (hi - lo) / m as f64;
    let mut worst: f64 = 0.0;
    for j in 0..6 {
        for k in 0..=j {
            let mut s = 0.0;
            for i in 0..=m {
                let x = lo + i as f64 * h;
                let wgt = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                s += wgt * hermite_eval(j, x) * hermite_eval(k, x) * phi;
            }
            let ip = s * h / 3.0;
            let want = if j == k { 1.0 } else { 0.0 };
            worst = worst.max((ip - want).abs());
        }
    }
    ensure(worst <= 1e-9, format!("max |<h_j, h_k> - delta_jk| {worst:.2e}"))
}

fn cube_points(d: usize) -> impl Iterator<Item = Vec<f64>> {
    (0..1usize << d).map(move |mask| (0..d).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect())
}

fn check_fourier(_: &VerifyOptions) -> Result<String, String> {
    let d = 5;
    let f = FourierPolynomial::from_terms(d, [(vec![0], 1.0), (vec![1, 2], -0.5), (vec![0, 3, 4], 2.0), (vec![], 0.25)])
        .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for mask in 0..1usize << d {
        let set: Vec<usize> = (0..d).filter(|i| mask >> i & 1 == 1).collect();
        let mut mean = 0.0;
        for x in cube_points(d) {
            mean += f.eval(&x).unwrap() * set.iter().map(|&i| x[i]).product::<f64>();
        }
        mean /= (1usize << d) as f64;
        let got = f.discrete_derivative_expectation(&set).map_err(|e| e.to_string())?;
        worst = worst.max((got - mean).abs());
    }
    for j in 0..d {
        let mut e = 0.0;
        for x in cube_points(d) {
            e += f.gradient(&x).unwrap()[j].powi(2);
        }
        e /= (1usize << d) as f64;
        worst = worst.max((f.coordinate_weight(j, None).unwrap() - e).abs());
    }
    ensure(worst <= 1e-12, format!("max abs err {worst:.2e} over all 32 subsets and 5 weights"))
}

fn brute_leap(sets: &[Vec<usize>]) -> usize {
    fn go(sets: &[Vec<usize>], used: &mut Vec<bool>, covered: &mut Vec<usize>, best_so_far: usize, best: &mut usize) {
        if used.iter().all(|&u| u) {
            *best = (*best).min(best_so_far);
            return;
        }
        for t in 0..sets.len() {
            if used[t] {
                continue;
            }
            let fresh: Vec<usize> = sets[t].iter().copied().filter(|i| !covered.contains(i)).collect();
            used[t] = true;
            let len = covered.len();
            covered.extend(&fresh);
            go(sets, used, covered, best_so_far.max(fresh.len()), best);
            covered.truncate(len);
            used[t] = false;
        }
    }
    let mut best = usize::MAX;
    go(sets, &mut vec![false; sets.len()], &mut Vec::new(), 0, &mut best);
    best
}

fn check_leap(_: &VerifyOptions) -> Result<String, String> {
    let cases: Vec<Vec<Vec<usize>>> = vec![
        vec![vec![0], vec![1], vec![2], vec![0, 1, 2]],
        vec![vec![0], vec![0, 1], vec![0, 1, 2], vec![0, 1, 2, 3]],
        vec![vec![0, 1, 2]],
        vec![vec![0], vec![1, 2, 3], vec![0, 4], vec![4, 5, 1]],
        vec![vec![0, 1], vec![2, 3], vec![0, 2, 4, 5]],
    ];
    for sets in &cases {
        let f = FourierPolynomial::from_terms(6, sets.iter().map(|s| (s.clone(), 1.0))).map_err(|e| e.to_string())?;
        let (got, want) = (f.leap_complexity(), brute_leap(sets));
        if got != want {
            return Err(format!("{f}: got {got}, brute force {want}"));
        }
    }
    Ok(format!("{} polynomials agree", cases.len()))
}

fn check_determinism(_: &VerifyOptions) -> Result<String, String> {
    let cfg = Config::from_json(r#"{"method": "irkm", "d": 6, "n": 40, "T": 3, "target": "x1 + x1*x2", "test_size": 100, "seeds": [7]}"#)
        .map_err(|e| e.to_string())?;
    let a = execute(&cfg, Method::Irkm, 40, 7).map_err(|e| e.to_string())?.trace_jsonl();
    let b = execute(&cfg, Method::Irkm, 40, 7).map_err(|e| e.to_string())?.trace_jsonl();
    ensure(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}
