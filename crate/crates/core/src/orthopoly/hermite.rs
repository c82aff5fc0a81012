use std::collections::BTreeMap;

use crate::error::{check_dim, Error, Result};

/// Normalized probabilists' Hermite polynomial `h_k(x)`, orthonormal under
/// the standard Gaussian measure.
pub fn hermite_eval(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for j in 0..k {
        let jf = j as f64;
        let next = (x * cur - jf.sqrt() * prev) / (jf + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// `h_α(x) = Π_i h_{α_i}(x_i)`.
pub fn hermite_eval_multi(alpha: &[usize], x: &[f64]) -> Result<f64> {
    check_dim("hermite_eval_multi", alpha.len(), x.len())?;
    Ok(alpha.iter().zip(x).map(|(&k, &v)| hermite_eval(k, v)).product())
}

/// `f(x) = Σ_α b_α h_α(x)` over multi-indices `α ∈ ℕ^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitePolynomial {
    dim: usize,
    terms: BTreeMap<Vec<usize>, f64>,
}

impl HermitePolynomial {
    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, f64)>,
    {
        let mut map = BTreeMap::new();
        for (alpha, coef) in terms {
            check_dim("HermitePolynomial multi-index", dim, alpha.len())?;
            *map.entry(alpha).or_insert(0.0) += coef;
        }
        map.retain(|_, c| *c != 0.0);
        Ok(Self { dim, terms: map })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|a| a.iter().sum()).max().unwrap_or(0)
    }

    pub fn coefficient(&self, alpha: &[usize]) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.terms.iter().map(|(a, c)| (a.as_slice(), *c))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim("HermitePolynomial::eval", self.dim, x.len())?;
        Ok(self
            .terms
            .iter()
            .map(|(a, c)| c * a.iter().zip(x).map(|(&k, &v)| hermite_eval(k, v)).product::<f64>())
            .sum())
    }
}

/// `E (∂_r f_{≤p})²` under the Gaussian measure, for `p ≤ 2`.
///
/// `p = 1`: `b_{e_r}²`. `p = 2`: `b_{e_r}² + 2 b_{2e_r}² + Σ_{j≠r} b_{e_j+e_r}²`.
pub fn hermite_coordinate_weight(f: &HermitePolynomial, r: usize, p: usize) -> Result<f64> {
    if p > 2 {
        return Err(Error::UnsupportedP(p));
    }
    if r >= f.dim {
        return Err(Error::IndexOutOfRange { index: r, bound: f.dim });
    }
    let mut total = 0.0;
    for (alpha, c) in &f.terms {
        let deg: usize = alpha.iter().sum();
        if deg == 0 || deg > p || alpha[r] == 0 {
            continue;
        }
        // ∂_r h_k = √k h_{k−1}, so a degree-2 pure term contributes 2 b²
        total += alpha[r] as f64 * c * c;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_gaussian, substream};

    #[test]
    fn low_order_closed_forms() {
        assert_eq!(hermite_eval(0, 3.7), 1.0);
        assert_eq!(hermite_eval(1, -0.4), -0.4);
        assert!(hermite_eval(2, 1.0).abs() < 1e-15);
        let x: f64 = 1.3;
        assert!((hermite_eval(2, x) - (x * x - 1.0) / 2f64.sqrt()).abs() < 1e-14);
        assert!((hermite_eval(3, x) - (x.powi(3) - 3.0 * x) / 6f64.sqrt()).abs() < 1e-14);
        assert!((hermite_eval(4, x) - (x.powi(4) - 6.0 * x * x + 3.0) / 24f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn multi_eval_is_product() {
        let v = hermite_eval_multi(&[2, 0, 1], &[0.5, 9.0, -1.5]).unwrap();
        assert!((v - hermite_eval(2, 0.5) * hermite_eval(1, -1.5)).abs() < 1e-15);
        assert!(hermite_eval_multi(&[1], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn monte_carlo_orthonormality() {
        let n = 1_000_000;
        let mut rng = substream(31, 0);
        let z = sample_gaussian(n, 1, &mut rng);
        let vals: Vec<[f64; 6]> = z
            .iter()
            .map(|&x| std::array::from_fn(|k| hermite_eval(k, x)))
            .collect();
        for j in 0..=5 {
            for k in j..=5 {
                let prods: Vec<f64> = vals.iter().map(|v| v[j] * v[k]).collect();
                let mean = prods.iter().sum::<f64>() / n as f64;
                let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let se = (var / n as f64).sqrt();
                let target = if j == k { 1.0 } else { 0.0 };
                assert!((mean - target).abs() <= 3.0 * se, "<h{j},h{k}> = {mean} (se {se})");
            }
        }
    }

    #[test]
    fn coordinate_weight_examples() {
        let f = HermitePolynomial::from_terms(2, [(vec![1, 0], 1.0)]).unwrap();
        assert_eq!(hermite_coordinate_weight(&f, 0, 1).unwrap(), 1.0);
        assert_eq!(hermite_coordinate_weight(&f, 1, 2).unwrap(), 0.0);
        let g = HermitePolynomial::from_terms(1, [(vec![2], 2f64.sqrt())]).unwrap();
        assert!((hermite_coordinate_weight(&g, 0, 2).unwrap() - 4.0).abs() < 1e-14);
        assert_eq!(hermite_coordinate_weight(&g, 0, 1).unwrap(), 0.0);
        assert!(matches!(hermite_coordinate_weight(&g, 0, 3), Err(Error::UnsupportedP(3))));
    }

    #[test]
    fn coordinate_weight_matches_monte_carlo_gradient() {
        // f_{≤2} has an explicit derivative: ∂_r h_α = √α_r h_{α−e_r}
        let f = HermitePolynomial::from_terms(
            3,
            [
                (vec![1, 0, 0], 0.7),
                (vec![2, 0, 0], -1.1),
                (vec![1, 1, 0], 0.4),
                (vec![0, 1, 1], 2.0),
                (vec![3, 0, 0], 5.0),
            ],
        )
        .unwrap();
        let n = 400_000;
        let mut rng = substream(32, 0);
        let x = sample_gaussian(n, 3, &mut rng);
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for i in 0..n {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let mut g = 0.0;
            for (alpha, c) in f.terms() {
                if alpha.iter().sum::<usize>() > 2 || alpha[0] == 0 {
                    continue;
                }
                let mut lowered = alpha.to_vec();
                lowered[0] -= 1;
                g += c * (alpha[0] as f64).sqrt() * hermite_eval_multi(&lowered, &row).unwrap();
            }
            acc += g * g;
            acc2 += g.powi(4);
        }
        let mean = acc / n as f64;
        let se = ((acc2 / n as f64 - mean * mean) / n as f64).sqrt();
        let closed = hermite_coordinate_weight(&f, 0, 2).unwrap();
        assert!((mean - closed).abs() <= 4.0 * se, "{mean} vs {closed}");
    }
}
