//! Ground-truth polynomials.
//!
//! Coordinates are 0-based throughout: the monomial `x₁x₂x₃` is the subset
//! `[0, 1, 2]`. Text forms (`Display`, the CLI parser) use 1-based names.

mod fourier;
mod hermite;

pub use fourier::FourierPolynomial;
pub use hermite::{hermite_coordinate_weight, hermite_eval, hermite_eval_multi, HermitePolynomial};
