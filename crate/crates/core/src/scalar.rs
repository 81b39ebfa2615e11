//! Scalar abstractions shared by the exact and floating-point code paths.

use std::fmt::Debug;
use std::ops::Neg;

use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};

use crate::error::{QsbError, Result};

/// A field element usable as a coefficient: `f64`, exact rationals, or complex numbers over either.
pub trait Scalar: Clone + Debug + PartialEq + Num + Neg<Output = Self> + Send + Sync + 'static {
    fn from_i64(v: i64) -> Self;

    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num) / Self::from_i64(den)
    }

    fn conj(&self) -> Self;

    /// Absolute value as a double (used for tolerances and reporting).
    fn modulus(&self) -> f64;

    fn to_c64(&self) -> Complex64;

    /// Exact types answer `is_zero`; floating types compare against `scale * 1e-12`.
    fn is_negligible(&self, scale: f64) -> bool;

    fn powi(&self, n: u32) -> Self {
        let mut acc = Self::one();
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }
}

/// Totally ordered scalars (the real line, exactly or approximately).
pub trait Real: Scalar + PartialOrd {
    fn to_f64(&self) -> f64;

    /// Nearest representable value; exact types convert the binary expansion of `v` exactly.
    fn from_f64(v: f64) -> Self;

    /// Parses decimals (`0.3`, `-1.5e-2`) and fractions (`1/3`); exact types keep them exact.
    fn parse_decimal(s: &str) -> Result<Self>;

    fn abs_val(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }
}

impl Scalar for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn conj(&self) -> Self {
        *self
    }
    fn modulus(&self) -> f64 {
        self.abs()
    }
    fn to_c64(&self) -> Complex64 {
        Complex64::new(*self, 0.0)
    }
    fn is_negligible(&self, scale: f64) -> bool {
        self.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE)
    }
}

impl Real for f64 {
    fn to_f64(&self) -> f64 {
        *self
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn parse_decimal(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: f64 = n.trim().parse().map_err(|_| QsbError::parse(s, "number"))?;
            let d: f64 = d.trim().parse().map_err(|_| QsbError::parse(s, "number"))?;
            return Ok(n / d);
        }
        s.parse().map_err(|_| QsbError::parse(s, "number"))
    }
}

impl Scalar for BigRational {
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn conj(&self) -> Self {
        self.clone()
    }
    fn modulus(&self) -> f64 {
        ToPrimitive::to_f64(&self.abs()).unwrap_or(f64::INFINITY)
    }
    fn to_c64(&self) -> Complex64 {
        Complex64::new(ToPrimitive::to_f64(self).unwrap_or(f64::NAN), 0.0)
    }
    fn is_negligible(&self, _scale: f64) -> bool {
        self.is_zero()
    }
}

impl Real for BigRational {
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).unwrap_or_else(BigRational::zero)
    }
    fn parse_decimal(s: &str) -> Result<Self> {
        parse_rational(s)
    }
}

fn parse_rational(raw: &str) -> Result<BigRational> {
    let s = raw.trim();
    let bad = || QsbError::parse(raw, "exact decimal or fraction");
    if let Some((n, d)) = s.split_once('/') {
        let n = parse_rational(n)?;
        let d = parse_rational(d)?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(n / d);
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: String = format!("{int_part}{frac_part}");
    let num: BigInt = if all.is_empty() { BigInt::zero() } else { all.parse().map_err(|_| bad())? };
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = BigRational::from_integer(num);
    if scale >= 0 {
        value *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if neg { -value } else { value })
}

impl<R: Real> Scalar for Complex<R> {
    fn from_i64(v: i64) -> Self {
        Complex::new(R::from_i64(v), R::zero())
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        Complex::new(R::from_ratio(num, den), R::zero())
    }
    fn conj(&self) -> Self {
        Complex::new(self.re.clone(), -self.im.clone())
    }
    fn modulus(&self) -> f64 {
        self.re.to_f64().hypot(self.im.to_f64())
    }
    fn to_c64(&self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }
    fn is_negligible(&self, scale: f64) -> bool {
        self.re.is_negligible(scale) && self.im.is_negligible(scale)
    }
}

/// Complex scalars built over a [`Real`] field.
pub trait ComplexScalar: Scalar {
    type Re: Real;
    fn i() -> Self;
    fn from_re(r: Self::Re) -> Self;
    fn from_parts(re: Self::Re, im: Self::Re) -> Self;
    fn re(&self) -> Self::Re;
    fn im(&self) -> Self::Re;
}

impl<R: Real> ComplexScalar for Complex<R> {
    type Re = R;
    fn i() -> Self {
        Complex::new(R::zero(), R::one())
    }
    fn from_re(r: R) -> Self {
        Complex::new(r, R::zero())
    }
    fn from_parts(re: R, im: R) -> Self {
        Complex::new(re, im)
    }
    fn re(&self) -> R {
        self.re.clone()
    }
    fn im(&self) -> R {
        self.im.clone()
    }
}

/// `q^n` with the convention `0^0 = 1`.
pub fn qpow<S: Scalar>(q: &S, n: u32) -> S {
    q.powi(n)
}

/// Table `[1, q, q^2, ..., q^max]`.
pub fn qpow_table<S: Scalar>(q: &S, max: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(max + 1);
    let mut cur = S::one();
    for _ in 0..=max {
        out.push(cur.clone());
        cur = cur * q.clone();
    }
    out
}

/// Exact rational from a signed integer pair, convenience for tests and constants.
pub fn rat(num: i64, den: i64) -> BigRational {
    <BigRational as Scalar>::from_ratio(num, den)
}

/// Gaussian rational `a + b i`.
pub fn crat(re: BigRational, im: BigRational) -> Complex<BigRational> {
    Complex::new(re, im)
}

/// Serializes an exact rational as its `num/den` string.
pub fn serialize_rational<S: serde::Serializer>(r: &BigRational, ser: S) -> std::result::Result<S::Ok, S::Error> {
    ser.collect_str(r)
}
