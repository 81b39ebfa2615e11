//! The q-deformed Segal–Bargmann transform and its companions: q-Gaussian measures and
//! q-Hermite polynomials, Wick calculus for jointly q-Gaussian families, mixed Q-Fock spaces,
//! and Monte Carlo random matrix approximations.
//!
//! Exact identities run over [`Rational`] / [`ComplexRational`]; numerical paths use `f64` and
//! [`C64`].

pub mod combinat;
pub mod criteria;
pub mod error;
pub mod gauss;
pub mod linsolve;
pub mod mixedfock;
pub mod ncpoly;
pub mod poly;
pub mod qalgebra;
pub mod qfun;
pub mod rmt;
pub mod scalar;
pub mod transform1d;

pub use error::{QsbError, Result};
pub use ncpoly::NcPoly;
pub use poly::Polynomial;
pub use scalar::{ComplexScalar, Real, Scalar};

/// Exact rational numbers.
pub type Rational = num_rational::BigRational;
/// Exact Gaussian rationals `a + bi`.
pub type ComplexRational = num_complex::Complex<Rational>;
/// Double-precision complex numbers.
pub type C64 = num_complex::Complex64;

pub type RationalPoly = Polynomial<Rational>;
pub type RealPoly = Polynomial<f64>;
pub type ComplexPoly = Polynomial<C64>;
