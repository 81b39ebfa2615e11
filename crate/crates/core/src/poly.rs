//! Dense univariate polynomials with ascending coefficients.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::Serialize;

use crate::error::{QsbError, Result};
use crate::scalar::{Real, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polynomial<S> {
    /// `coeffs[k]` multiplies `x^k`; trailing zeros are trimmed.
    coeffs: Vec<S>,
}

impl<S: Scalar> Polynomial<S> {
    pub fn new(coeffs: Vec<S>) -> Self {
        let mut p = Polynomial { coeffs };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn constant(c: S) -> Self {
        Self::new(vec![c])
    }

    pub fn x() -> Self {
        Self::monomial(1)
    }

    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![S::zero(); k + 1];
        coeffs[k] = S::one();
        Polynomial { coeffs }
    }

    fn trim(&mut self) {
        while self.coeffs.last().is_some_and(|c| c.is_zero()) {
            self.coeffs.pop();
        }
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> S {
        self.coeffs.get(k).cloned().unwrap_or_else(S::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval<T>(&self, x: &T) -> T
    where
        T: Scalar,
        S: Into<T>,
    {
        let mut acc = T::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x.clone() + c.clone().into();
        }
        acc
    }

    pub fn scale(&self, c: &S) -> Self {
        Self::new(self.coeffs.iter().map(|a| a.clone() * c.clone()).collect())
    }

    pub fn mul_x(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(S::zero());
        coeffs.extend(self.coeffs.iter().cloned());
        Polynomial { coeffs }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Polynomial<T> {
        Polynomial::new(self.coeffs.iter().map(f).collect())
    }

    /// Largest coefficient modulus of `self - other`.
    pub fn max_deviation(&self, other: &Self) -> f64 {
        let n = self.coeffs.len().max(other.coeffs.len());
        (0..n).map(|k| (self.coeff(k) - other.coeff(k)).modulus()).fold(0.0, f64::max)
    }
}

impl<S: Real> Polynomial<S> {
    /// Parses comma-separated ascending coefficients, e.g. `"0,0,0,1"` for `x³`.
    pub fn parse_coeffs(s: &str) -> Result<Self> {
        if s.trim().is_empty() {
            return Err(QsbError::parse(s, "comma-separated coefficients"));
        }
        let coeffs = s.split(',').map(S::parse_decimal).collect::<Result<Vec<_>>>()?;
        Ok(Self::new(coeffs))
    }
}

impl<S: Scalar> Add for &Polynomial<S> {
    type Output = Polynomial<S>;
    fn add(self, rhs: Self) -> Polynomial<S> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl<S: Scalar> Sub for &Polynomial<S> {
    type Output = Polynomial<S>;
    fn sub(self, rhs: Self) -> Polynomial<S> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl<S: Scalar> Mul for &Polynomial<S> {
    type Output = Polynomial<S>;
    fn mul(self, rhs: Self) -> Polynomial<S> {
        if self.is_zero() || rhs.is_zero() {
            return Polynomial::zero();
        }
        let mut coeffs = vec![S::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                coeffs[i + j] = coeffs[i + j].clone() + a.clone() * b.clone();
            }
        }
        Polynomial::new(coeffs)
    }
}

impl<S: Scalar> Neg for &Polynomial<S> {
    type Output = Polynomial<S>;
    fn neg(self) -> Polynomial<S> {
        Polynomial::new(self.coeffs.iter().map(|c| -c.clone()).collect())
    }
}

impl<S: Scalar + fmt::Display> fmt::Display for Polynomial<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match k {
                0 => write!(f, "{c}")?,
                1 => write!(f, "({c})x")?,
                _ => write!(f, "({c})x^{k}")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;
    use num_complex::Complex64;
    use num_rational::BigRational;

    #[test]
    fn arithmetic_and_trimming() {
        let p = Polynomial::new(vec![rat(1, 1), rat(2, 1), rat(0, 1)]);
        assert_eq!(p.degree(), Some(1));
        let sq = &p * &p;
        assert_eq!(sq.coeffs(), &[rat(1, 1), rat(4, 1), rat(4, 1)]);
        assert!((&p - &p).is_zero());
        assert_eq!(p.mul_x().coeffs(), &[rat(0, 1), rat(1, 1), rat(2, 1)]);
    }

    #[test]
    fn evaluation_into_complex() {
        let p: Polynomial<f64> = Polynomial::new(vec![1.0, 0.0, 1.0]);
        let z = Complex64::new(0.0, 1.0);
        assert_eq!(p.eval(&z), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn parses_coefficients() {
        let p: Polynomial<BigRational> = Polynomial::parse_coeffs("0, 0.5,1/3").unwrap();
        assert_eq!(p.coeffs(), &[rat(0, 1), rat(1, 2), rat(1, 3)]);
        assert!(Polynomial::<f64>::parse_coeffs("1,x").is_err());
        assert!(Polynomial::<f64>::parse_coeffs("").is_err());
    }
}
