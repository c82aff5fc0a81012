use std::collections::BTreeMap;
use std::fmt;

use crate::error::{check_dim, Error, Result};

/// A sparse multilinear polynomial `f(x) = Σ_S b_S Π_{i∈S} x_i`.
///
/// On `{±1}^d` the monomials are the orthonormal Fourier-Walsh basis, so
/// `b_S = E[f(x) x^S]`. Evaluation is also defined off the cube.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierPolynomial {
    dim: usize,
    terms: BTreeMap<Vec<usize>, f64>,
}

impl FourierPolynomial {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    /// Builds a polynomial from `(subset, coefficient)` pairs. Subsets are
    /// sorted; repeated subsets add up; zero coefficients are dropped.
    pub fn from_terms<I, S>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<[usize]>,
    {
        let mut f = Self::zero(dim);
        for (set, coef) in terms {
            f.add_term(set.as_ref(), coef)?;
        }
        Ok(f)
    }

    pub fn add_term(&mut self, set: &[usize], coef: f64) -> Result<()> {
        let mut key = set.to_vec();
        key.sort_unstable();
        for w in key.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateIndex(w[0]));
            }
        }
        if let Some(&i) = key.last() {
            if i >= self.dim {
                return Err(Error::IndexOutOfRange { index: i, bound: self.dim });
            }
        }
        let entry = self.terms.entry(key).or_insert(0.0);
        *entry += coef;
        if *entry == 0.0 {
            self.terms.retain(|_, c| *c != 0.0);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in lexicographic subset order.
    pub fn terms(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.terms.iter().map(|(s, c)| (s.as_slice(), *c))
    }

    pub fn coefficient(&self, set: &[usize]) -> f64 {
        let mut key = set.to_vec();
        key.sort_unstable();
        self.terms.get(&key).copied().unwrap_or(0.0)
    }

    /// Largest monomial size (0 for constants and the zero polynomial).
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Vec::len).max().unwrap_or(0)
    }

    /// The constant coefficient, i.e. `E f` under the uniform measure on the cube.
    pub fn constant(&self) -> f64 {
        self.coefficient(&[])
    }

    /// Parseval: `E f² = Σ b_S²` on the cube.
    pub fn squared_norm(&self) -> f64 {
        self.terms.values().map(|c| c * c).sum()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim("FourierPolynomial::eval", self.dim, x.len())?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(s, c)| c * s.iter().map(|&i| x[i]).product::<f64>())
            .sum()
    }

    /// Gradient of the multilinear extension: `∂_j f = Σ_{S∋j} b_S Π_{i∈S∖j} x_i`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("FourierPolynomial::gradient", self.dim, x.len())?;
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        Ok(g)
    }

    pub(crate) fn gradient_into(&self, x: &[f64], g: &mut [f64]) {
        g.iter_mut().for_each(|v| *v = 0.0);
        for (s, c) in &self.terms {
            for (pos, &j) in s.iter().enumerate() {
                let rest: f64 = s
                    .iter()
                    .enumerate()
                    .filter(|&(q, _)| q != pos)
                    .map(|(_, &i)| x[i])
                    .product();
                g[j] += c * rest;
            }
        }
    }

    fn filtered(&self, keep: impl Fn(&[usize]) -> bool) -> Self {
        Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .filter(|(s, _)| keep(s))
                .map(|(s, c)| (s.clone(), *c))
                .collect(),
        }
    }

    /// `f_{≤p}`: terms of degree at most `p`.
    pub fn truncate(&self, p: usize) -> Self {
        self.filtered(|s| s.len() <= p)
    }

    /// Terms of degree exactly `p`.
    pub fn slice(&self, p: usize) -> Self {
        self.filtered(|s| s.len() == p)
    }

    /// `Σ_{S∋j, |S|≤p} b_S²`, which equals `E (∂_j f_{≤p})²` on the cube.
    /// `p = None` means no truncation.
    pub fn coordinate_weight(&self, j: usize, p: Option<usize>) -> Result<f64> {
        if j >= self.dim {
            return Err(Error::IndexOutOfRange { index: j, bound: self.dim });
        }
        let p = p.unwrap_or(usize::MAX);
        Ok(self
            .terms
            .iter()
            .filter(|(s, _)| s.len() <= p && s.binary_search(&j).is_ok())
            .map(|(_, c)| c * c)
            .sum())
    }

    /// `D_S f` by the Fourier rule: each superset `T ⊇ S` maps to `T ∖ S`,
    /// every other term vanishes.
    pub fn discrete_derivative(&self, set: &[usize]) -> Result<Self> {
        let mut key = set.to_vec();
        key.sort_unstable();
        key.dedup();
        if let Some(&i) = key.last() {
            if i >= self.dim {
                return Err(Error::IndexOutOfRange { index: i, bound: self.dim });
            }
        }
        let mut out = Self::zero(self.dim);
        for (t, c) in &self.terms {
            if key.iter().all(|i| t.binary_search(i).is_ok()) {
                let rest: Vec<usize> = t.iter().copied().filter(|i| key.binary_search(i).is_err()).collect();
                out.terms.insert(rest, *c);
            }
        }
        Ok(out)
    }

    /// `E[D_S f] = b_S`.
    pub fn discrete_derivative_expectation(&self, set: &[usize]) -> Result<f64> {
        Ok(self.discrete_derivative(set)?.constant())
    }

    /// Greedy closure for leap threshold `k`: starting from an empty cover,
    /// keep adding any term that brings at most `k` new coordinates.
    ///
    /// Whether a term is addable only gets easier as the cover grows, so the
    /// order of additions does not change the final set. If some ordering of
    /// a subfamily has every step adding at most `k` new coordinates, the
    /// first of its terms missing from the closure would be addable against
    /// the closure's cover, a contradiction. Hence the closure is the unique
    /// maximal leap-`k` subfamily, and `Leap(f) ≤ k` iff it contains every
    /// term. The constant term adds no coordinates and is always included.
    fn leap_closure(&self, k: usize) -> Vec<bool> {
        let keys: Vec<&Vec<usize>> = self.terms.keys().collect();
        let mut covered = vec![false; self.dim];
        let mut added = vec![false; keys.len()];
        loop {
            let mut progress = false;
            for (t, s) in keys.iter().enumerate() {
                if added[t] {
                    continue;
                }
                let fresh = s.iter().filter(|&&i| !covered[i]).count();
                if fresh <= k {
                    added[t] = true;
                    progress = true;
                    for &i in s.iter() {
                        covered[i] = true;
                    }
                }
            }
            if !progress {
                return added;
            }
        }
    }

    /// Smallest `k` such that the terms can be ordered with each one adding at
    /// most `k` coordinates not already covered by its predecessors.
    pub fn leap_complexity(&self) -> usize {
        // closure(k) is monotone in k and complete at k = degree
        let (mut lo, mut hi) = (0, self.degree());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.leap_closure(mid).iter().all(|&a| a) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }

    /// The maximal sub-polynomial with leap complexity at most `k`.
    pub fn max_leap_component(&self, k: usize) -> Self {
        let added = self.leap_closure(k);
        Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .zip(added)
                .filter(|(_, a)| *a)
                .map(|((s, c), _)| (s.clone(), *c))
                .collect(),
        }
    }
}

impl fmt::Display for FourierPolynomial {
    /// `coef * x1*x2 + coef * x4 - coef`, with 1-based variable names.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // constant last, larger monomials later, mirroring how targets are written
        let mut order: Vec<(&Vec<usize>, f64)> = self.terms.iter().map(|(s, c)| (s, *c)).collect();
        order.sort_by(|a, b| match (a.0.is_empty(), b.0.is_empty()) {
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            _ => (a.0.len(), a.0).cmp(&(b.0.len(), b.0)),
        });
        for (pos, (s, c)) in order.into_iter().enumerate() {
            let mag = c.abs();
            if pos == 0 {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if c < 0.0 { '-' } else { '+' })?;
            }
            if s.is_empty() {
                write!(f, "{mag}")?;
                continue;
            }
            if mag != 1.0 {
                write!(f, "{mag} * ")?;
            }
            let vars: Vec<String> = s.iter().map(|i| format!("x{}", i + 1)).collect();
            write!(f, "{}", vars.join("*"))?;
        }
        Ok(())
    }
}
