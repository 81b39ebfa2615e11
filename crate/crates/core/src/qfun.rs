//! q-Gaussian measures, q-Hermite polynomials, the q-Mehler function and the kernels Γ_q^{s,t}.

use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};
use std::collections::HashMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::combinat::{crossing_sum, q_factorial};
use crate::error::{ensure_cap, QsbError, Result};
use crate::gauss::gauss_legendre;
use crate::poly::Polynomial;
use crate::scalar::Scalar;

/// Largest |q| accepted by the density and quadrature routines.
pub const Q_MAX: f64 = 0.95;
/// Infinite products stop at the first k with |q|^k below this.
pub const PRODUCT_TOL: f64 = 1e-15;
/// Largest moment order computed by pairing enumeration.
pub const MAX_MOMENT_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QMeasureParams {
    pub q: f64,
    pub t: f64,
}

impl QMeasureParams {
    pub fn new(q: f64, t: f64) -> Result<Self> {
        if !(q > -1.0 && q < 1.0) {
            return Err(QsbError::invalid(format!("q = {q} must lie in (-1, 1)")));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(QsbError::invalid(format!("variance t = {t} must be positive")));
        }
        Ok(QMeasureParams { q, t })
    }

    /// Support radius 2√t/√(1−q).
    pub fn radius(&self) -> f64 {
        2.0 * self.t.sqrt() / (1.0 - self.q).sqrt()
    }

    fn check_accuracy_range(&self) -> Result<()> {
        if self.q.abs() > Q_MAX {
            return Err(QsbError::invalid(format!("|q| = {} exceeds q_max = {Q_MAX}", self.q.abs())));
        }
        Ok(())
    }
}

/// Π_{n≥1} (1−qⁿ)|1−qⁿe^{2iθ}|², truncated, together with a bound on the relative truncation error.
fn theta_product(q: f64, theta: f64) -> (f64, f64) {
    let c2 = (2.0 * theta).cos();
    let mut prod = 1.0;
    let mut qn = q;
    while qn.abs() >= PRODUCT_TOL {
        prod *= (1.0 - qn) * (1.0 - 2.0 * qn * c2 + qn * qn);
        qn *= q;
    }
    let a = q.abs();
    let bound = if a == 0.0 { 0.0 } else { 3.0 * qn.abs() / (1.0 - a) };
    (prod, bound)
}

/// Density of ν_q^t at `x`.
pub fn density(x: f64, p: &QMeasureParams) -> Result<f64> {
    Ok(density_with_bound(x, p)?.0)
}

/// Density together with an absolute bound on the product truncation error.
pub fn density_with_bound(x: f64, p: &QMeasureParams) -> Result<(f64, f64)> {
    p.check_accuracy_range()?;
    if !x.is_finite() {
        return Err(QsbError::invalid("density needs a finite argument"));
    }
    let r = p.radius();
    if x.abs() >= r {
        return Ok((0.0, 0.0));
    }
    let theta = (x / r).acos();
    let (prod, rel) = theta_product(p.q, theta);
    let value = (1.0 - p.q).sqrt() * theta.sin() * prod / (PI * p.t.sqrt());
    Ok((value, value * rel))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }

    pub fn integrate_complex<F: Fn(f64) -> Complex64>(&self, f: F) -> Complex64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| *w * f(*x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn moments(&self, max: usize) -> Vec<f64> {
        let mut out = vec![0.0; max + 1];
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let mut p = *w;
            for m in out.iter_mut() {
                *m += p;
                p *= x;
            }
        }
        out
    }
}

/// Gauss–Legendre in θ after the substitution x = R cos θ.
pub fn quadrature(p: &QMeasureParams, n_nodes: usize) -> Result<QuadratureRule> {
    p.check_accuracy_range()?;
    if n_nodes < 2 {
        return Err(QsbError::invalid("quadrature needs at least 2 nodes"));
    }
    let (u, w) = gauss_legendre(n_nodes);
    let r = p.radius();
    let mut nodes = Vec::with_capacity(n_nodes);
    let mut weights = Vec::with_capacity(n_nodes);
    for (ui, wi) in u.iter().zip(&w) {
        let theta = 0.5 * PI * (ui + 1.0);
        let s = theta.sin();
        let (prod, _) = theta_product(p.q, theta);
        nodes.push(r * theta.cos());
        weights.push(0.5 * PI * wi * (2.0 / PI) * s * s * prod);
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Highest moment compared while refining [`adaptive_quadrature`].
pub const REFINE_MOMENT_ORDER: usize = 12;
const REFINE_TOL: f64 = 1e-10;
const MAX_NODES: usize = 16384;

fn rule_cache() -> &'static Mutex<HashMap<(u64, u64), QuadratureRule>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u64), QuadratureRule>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Doubles the node count until successive moment vectors up to order 12 agree to 1e−10 (relative).
pub fn adaptive_quadrature(p: &QMeasureParams) -> Result<QuadratureRule> {
    p.check_accuracy_range()?;
    let key = (p.q.to_bits(), p.t.to_bits());
    if let Some(rule) = rule_cache().lock().expect("quadrature cache poisoned").get(&key) {
        return Ok(rule.clone());
    }
    let mut n = 32;
    let mut prev = quadrature(p, n)?;
    let mut prev_m = prev.moments(REFINE_MOMENT_ORDER);
    loop {
        n *= 2;
        let next = quadrature(p, n)?;
        let next_m = next.moments(REFINE_MOMENT_ORDER);
        let agree = prev_m.iter().zip(&next_m).all(|(a, b)| (a - b).abs() <= REFINE_TOL * b.abs().max(1.0));
        prev = next;
        prev_m = next_m;
        if agree || n >= MAX_NODES {
            break;
        }
    }
    rule_cache().lock().expect("quadrature cache poisoned").insert(key, prev.clone());
    Ok(prev)
}

/// t^{n/2} Σ_{π∈P₂(n)} q^{cr(π)}; zero for odd n.
pub fn moment<S: Scalar>(n: usize, q: &S, t: &S) -> Result<S> {
    ensure_cap("moment order", MAX_MOMENT_ORDER, n)?;
    if n % 2 == 1 {
        return Ok(S::zero());
    }
    Ok(crossing_sum(n, q)? * t.powi((n / 2) as u32))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QHermitePoly<S> {
    pub n: usize,
    pub q: S,
    pub t: S,
    pub poly: Polynomial<S>,
}

/// H_0, …, H_nmax for the recurrence H_{n+1} = x H_n − t[n]_q H_{n−1}; `t` may be negative.
pub fn hermite_family<S: Scalar>(nmax: usize, q: &S, t: &S) -> Vec<Polynomial<S>> {
    let mut out = vec![Polynomial::constant(S::one())];
    if nmax == 0 {
        return out;
    }
    out.push(Polynomial::x());
    let mut qn = S::one();
    let mut qint = S::zero();
    for n in 1..nmax {
        qint = qint + qn.clone();
        qn = qn * q.clone();
        let next = &out[n].mul_x() - &out[n - 1].scale(&(t.clone() * qint.clone()));
        out.push(next);
    }
    out
}

pub fn hermite<S: Scalar>(n: usize, q: &S, t: &S) -> QHermitePoly<S> {
    let poly = hermite_family(n, q, t).pop().expect("family is non-empty");
    QHermitePoly { n, q: q.clone(), t: t.clone(), poly }
}

/// Values H_0(x), …, H_nmax(x) by the recurrence, in the argument's scalar type.
pub fn hermite_values<T: Scalar>(nmax: usize, q: &T, t: &T, x: &T) -> Vec<T> {
    let mut out = Vec::with_capacity(nmax + 1);
    out.push(T::one());
    if nmax == 0 {
        return out;
    }
    out.push(x.clone());
    let mut qn = T::one();
    let mut qint = T::zero();
    for n in 1..nmax {
        qint = qint + qn.clone();
        qn = qn * q.clone();
        let next = x.clone() * out[n].clone() - t.clone() * qint.clone() * out[n - 1].clone();
        out.push(next);
    }
    out
}

/// Continuous q-Hermite polynomials h_{k+1}(u) = 2u h_k(u) − (1−q^k) h_{k−1}(u).
pub fn continuous_hermite_family<S: Scalar>(kmax: usize, q: &S) -> Vec<Polynomial<S>> {
    let two_x = Polynomial::new(vec![S::zero(), S::from_i64(2)]);
    let mut out = vec![Polynomial::constant(S::one())];
    if kmax == 0 {
        return out;
    }
    out.push(two_x.clone());
    let mut qk = S::one();
    for k in 1..kmax {
        qk = qk * q.clone();
        let next = &(&two_x * &out[k]) - &out[k - 1].scale(&(S::one() - qk.clone()));
        out.push(next);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Axis {
    Real,
    Imaginary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipseDomain {
    pub semi_major: f64,
    pub semi_minor: f64,
    pub major_axis_direction: Axis,
}

impl EllipseDomain {
    fn semi_axes(&self) -> (f64, f64) {
        match self.major_axis_direction {
            Axis::Real => (self.semi_major, self.semi_minor),
            Axis::Imaginary => (self.semi_minor, self.semi_major),
        }
    }

    /// (Re z / a)² + (Im z / b)², which is < 1 strictly inside.
    pub fn level(&self, z: Complex64) -> f64 {
        let (a, b) = self.semi_axes();
        (z.re / a).powi(2) + (z.im / b).powi(2)
    }

    pub fn contains(&self, z: Complex64) -> bool {
        self.level(z) < 1.0
    }

    pub fn contains_closed(&self, z: Complex64) -> bool {
        self.level(z) <= 1.0 + 1e-12
    }

    /// Ellipse with semi-axis `along_real` on the real axis and `along_imag` on the imaginary axis.
    pub fn from_semi_axes(along_real: f64, along_imag: f64) -> Self {
        if along_real >= along_imag {
            EllipseDomain { semi_major: along_real, semi_minor: along_imag, major_axis_direction: Axis::Real }
        } else {
            EllipseDomain { semi_major: along_imag, semi_minor: along_real, major_axis_direction: Axis::Imaginary }
        }
    }
}

/// The ellipse E_{s,t}: semi-axis (2s−t)/√(s(1−q)) along the real axis and t/√(s(1−q)) along the
/// imaginary axis.
pub fn ellipse_domain(q: f64, s: f64, t: f64) -> Result<EllipseDomain> {
    if !(q > -1.0 && q < 1.0) {
        return Err(QsbError::invalid(format!("q = {q} must lie in (-1, 1)")));
    }
    if !(t > 0.0 && s > t / 2.0) {
        return Err(QsbError::invalid(format!("need s > t/2 > 0, got s = {s}, t = {t}")));
    }
    let scale = (s * (1.0 - q)).sqrt();
    Ok(EllipseDomain::from_semi_axes((2.0 * s - t) / scale, t / scale))
}

/// Ω_{0,r}: the zero-free ellipse of the q-Mehler product, semi-axes (1/|r| ± |r|)/2.
pub fn mehler_domain(r: Complex64) -> EllipseDomain {
    let a = r.norm();
    EllipseDomain::from_semi_axes((1.0 / a + a) / 2.0, (1.0 / a - a) / 2.0)
}

/// (a;q)_∞ truncated at |q|^k < PRODUCT_TOL.
pub fn q_pochhammer_inf(a: Complex64, q: f64) -> Complex64 {
    let mut prod = Complex64::new(1.0, 0.0);
    let mut qk = 1.0;
    loop {
        prod *= 1.0 - a * qk;
        qk *= q;
        if qk.abs() < PRODUCT_TOL {
            break;
        }
    }
    prod
}

/// k-th denominator factor of Λ written through r² and w = r·y, which stays finite as r → 0.
fn mehler_factor(r2: Complex64, x: Complex64, w: Complex64, qk: f64) -> Complex64 {
    let xw = x * w;
    1.0 - 4.0 * qk * xw + 2.0 * qk * qk * (2.0 * r2 * x * x + 2.0 * w * w - r2) - 4.0 * r2 * qk.powi(3) * xw
        + r2 * r2 * qk.powi(4)
}

fn mehler_product_rw(r2: Complex64, x: Complex64, w: Complex64, q: f64) -> Complex64 {
    let mut den = Complex64::new(1.0, 0.0);
    let mut qk = 1.0;
    loop {
        den *= mehler_factor(r2, x, w, qk);
        qk *= q;
        if qk.abs() < PRODUCT_TOL {
            break;
        }
    }
    q_pochhammer_inf(r2, q) / den
}

fn validate_mehler_args(r: Complex64, x: f64, y: Complex64, q: f64) -> Result<()> {
    if !(q > -1.0 && q < 1.0) {
        return Err(QsbError::invalid(format!("q = {q} must lie in (-1, 1)")));
    }
    let a = r.norm();
    if !(a > 0.0 && a < 1.0) {
        return Err(QsbError::invalid(format!("need 0 < |r| < 1, got |r| = {a}")));
    }
    let real = r.im.abs() <= 1e-14 * a;
    let imaginary = r.re.abs() <= 1e-14 * a;
    if !real && !imaginary {
        return Err(QsbError::invalid(format!("r = {r} is neither real nor purely imaginary")));
    }
    if !(-1.0..=1.0).contains(&x) {
        return Err(QsbError::OutOfDomain { point: format!("x = {x}"), detail: "x must lie in [-1, 1]".into() });
    }
    if !mehler_domain(r).contains_closed(y) {
        return Err(QsbError::OutOfDomain { point: format!("y = {y}"), detail: "outside the closed ellipse Ω_{0,r}".into() });
    }
    Ok(())
}

/// Λ(r, x, y) by its product form.
pub fn mehler(r: Complex64, x: f64, y: Complex64, q: f64) -> Result<Complex64> {
    validate_mehler_args(r, x, y, q)?;
    Ok(mehler_product_rw(r * r, Complex64::new(x, 0.0), r * y, q))
}

/// Λ(r, x, y) by the series Σ_k h_k(x) h_k(y) r^k/(q;q)_k, truncated adaptively.
pub fn mehler_series(r: Complex64, x: f64, y: Complex64, q: f64) -> Result<Complex64> {
    validate_mehler_args(r, x, y, q)?;
    const MAX_TERMS: usize = 1 << 20;
    let two_x = Complex64::new(2.0 * x, 0.0);
    // h_k(x) stays bounded on [-1, 1]; h_k(y) is carried as u_k = h_k(y) r^k, which does not overflow.
    let (mut hx_prev, mut hx) = (Complex64::new(1.0, 0.0), two_x);
    let (mut u_prev, mut u) = (Complex64::new(1.0, 0.0), 2.0 * y * r);
    let r2 = r * r;
    let mut sum = Complex64::new(1.0, 0.0);
    let mut poch = 1.0;
    let mut qk = 1.0;
    let mut small_run = 0;
    for _ in 1..MAX_TERMS {
        qk *= q;
        poch *= 1.0 - qk;
        let term = hx * u / poch;
        sum += term;
        if term.norm() <= 1e-17 * sum.norm().max(1.0) {
            small_run += 1;
            if small_run >= 8 {
                return Ok(sum);
            }
        } else {
            small_run = 0;
        }
        let hx_next = two_x * hx - (1.0 - qk) * hx_prev;
        let u_next = 2.0 * y * r * u - (1.0 - qk) * r2 * u_prev;
        (hx_prev, hx) = (hx, hx_next);
        (u_prev, u) = (u, u_next);
    }
    Err(QsbError::invalid("q-Mehler series did not converge"))
}

/// The k = 0 denominator factor of Λ.
pub fn mehler_leading_factor(r: Complex64, x: f64, y: Complex64) -> Complex64 {
    mehler_factor(r * r, Complex64::new(x, 0.0), r * y, 1.0)
}

/// Both roots y of the k-th denominator factor of Λ for fixed x: y = x·c ± √(1−x²)√(1−c²) with
/// c = (1 + T²)/(2T), T = r q^k.
pub fn mehler_zero_locus(r: Complex64, x: f64, q: f64, k: u32) -> [Complex64; 2] {
    let tk = r * q.powi(k as i32);
    let c = (1.0 + tk * tk) / (2.0 * tk);
    let s = (1.0 - c * c).sqrt();
    let root = (1.0 - x * x).max(0.0).sqrt();
    [x * c + root * s, x * c - root * s]
}

fn validate_transform(q: f64, s: f64, t: f64) -> Result<()> {
    ellipse_domain(q, s, t).map(|_| ())
}

/// Γ_q^{s,t}(x, z) by the product form of Λ (with r² = 1 − t/s and r·y = z√(1−q)/(2√s)).
pub fn gamma_kernel(x: f64, z: Complex64, q: f64, s: f64, t: f64) -> Result<Complex64> {
    validate_transform(q, s, t)?;
    let radius = 2.0 * s.sqrt() / (1.0 - q).sqrt();
    if !(x.abs() <= radius * (1.0 + 1e-12)) {
        return Err(QsbError::OutOfDomain { point: format!("x = {x}"), detail: format!("outside the support [-{radius}, {radius}]") });
    }
    let ell = ellipse_domain(q, s, t)?;
    if !ell.contains_closed(z) {
        return Err(QsbError::OutOfDomain { point: format!("z = {z}"), detail: "outside the closed ellipse E_{s,t}".into() });
    }
    Ok(gamma_kernel_unchecked(x, z, q, s, t))
}

pub(crate) fn gamma_kernel_unchecked(x: f64, z: Complex64, q: f64, s: f64, t: f64) -> Complex64 {
    let c = (1.0 - q).sqrt() / (2.0 * s.sqrt());
    let r2 = Complex64::new(1.0 - t / s, 0.0);
    mehler_product_rw(r2, Complex64::new(x * c, 0.0), z * c, q)
}

/// Γ_q^{s,t}(x, z) by the series Σ_k H_k^{q,s−t}(z) H_k^{q,s}(x)/(s^k [k]_q!), truncated adaptively.
pub fn gamma_kernel_series(x: f64, z: Complex64, q: f64, s: f64, t: f64) -> Result<Complex64> {
    validate_transform(q, s, t)?;
    let mut kmax = 128;
    loop {
        let hz = hermite_values(kmax, &Complex64::new(q, 0.0), &Complex64::new(s - t, 0.0), &z);
        let hx = hermite_values(kmax, &q, &s, &x);
        let mut sum = Complex64::new(0.0, 0.0);
        let mut norm = 1.0;
        let mut qint = 0.0;
        let mut qk = 1.0;
        let mut small_run = 0;
        for k in 0..=kmax {
            if k > 0 {
                qint += qk;
                qk *= q;
                norm *= s * qint;
            }
            let term = hz[k] * hx[k] / norm;
            sum += term;
            if term.norm() <= 1e-17 * sum.norm().max(1.0) {
                small_run += 1;
                if small_run >= 8 {
                    return Ok(sum);
                }
            } else {
                small_run = 0;
            }
        }
        if kmax >= 4096 {
            return Err(QsbError::invalid("Γ series did not converge at this point"));
        }
        kmax *= 2;
    }
}

/// ‖H_n^{q,t}‖² = [n]_q! tⁿ.
pub fn hermite_norm_sq<S: Scalar>(n: usize, q: &S, t: &S) -> S {
    q_factorial(n, q) * t.powi(n as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;
    use num_rational::BigRational;

    #[test]
    fn semicircle_density_at_origin() {
        let p = QMeasureParams::new(0.0, 1.0).unwrap();
        assert!((density(0.0, &p).unwrap() - 1.0 / PI).abs() < 1e-15);
        assert_eq!(density(2.5, &p).unwrap(), 0.0);
        let p = QMeasureParams::new(0.5, 2.0).unwrap();
        assert_eq!(density(p.radius() + 1e-9, &p).unwrap(), 0.0);
        assert!(density(0.0, &QMeasureParams::new(0.97, 1.0).unwrap()).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        let p = QMeasureParams::new(0.5, 1.0).unwrap();
        let rule = adaptive_quadrature(&p).unwrap();
        let mass: f64 = rule.weights.iter().sum();
        assert!((mass - 1.0).abs() < 1e-10);
        // Same integral via the density in x, midpoint-free check through the θ-substitution.
        let r = p.radius();
        let (u, w) = gauss_legendre(400);
        let direct: f64 = u
            .iter()
            .zip(&w)
            .map(|(ui, wi)| {
                let theta = 0.5 * PI * (ui + 1.0);
                0.5 * PI * wi * density(r * theta.cos(), &p).unwrap() * r * theta.sin()
            })
            .sum();
        assert!((direct - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quadrature_low_moments() {
        for &(q, t) in &[(0.3, 1.5), (-0.4, 0.7), (0.8, 2.0)] {
            let rule = adaptive_quadrature(&QMeasureParams::new(q, t).unwrap()).unwrap();
            let m = rule.moments(4);
            assert!((m[0] - 1.0).abs() < 1e-10);
            assert!((m[2] - t).abs() < 1e-9);
            assert!((m[4] - (2.0 + q) * t * t).abs() < 1e-9);
            assert!(rule.nodes.iter().all(|x| x.abs() < 2.0 * t.sqrt() / (1.0 - q).sqrt()));
        }
    }

    #[test]
    fn pairing_moments() {
        let q = rat(1, 3);
        let t = rat(2, 1);
        assert_eq!(moment(2, &q, &t).unwrap(), t);
        assert_eq!(moment(3, &q, &t).unwrap(), rat(0, 1));
        let six = rat(5, 1) + rat(6, 1) * q.clone() + rat(3, 1) * q.powi(2) + q.powi(3);
        assert_eq!(moment(6, &q, &t).unwrap(), six * t.powi(3));
        assert!(moment(18, &q, &t).is_err());
    }

    #[test]
    fn hermite_examples() {
        let q = rat(2, 5);
        let t = rat(3, 2);
        assert_eq!(hermite(2, &q, &t).poly.coeffs(), &[-t.clone(), rat(0, 1), rat(1, 1)]);
        let h3 = hermite(3, &q, &t).poly;
        assert_eq!(h3.coeffs(), &[rat(0, 1), -(rat(2, 1) + q.clone()) * t.clone(), rat(0, 1), rat(1, 1)]);
        let one = BigRational::from_integer(1.into());
        let h4 = hermite(4, &one, &one).poly;
        assert_eq!(h4.coeffs(), &[rat(3, 1), rat(0, 1), rat(-6, 1), rat(0, 1), rat(1, 1)]);
    }

    #[test]
    fn hermite_parity_and_monic() {
        let q = rat(-1, 2);
        let t = rat(-3, 4);
        for (n, h) in hermite_family(8, &q, &t).iter().enumerate() {
            assert_eq!(h.degree(), Some(n));
            assert_eq!(h.coeff(n), rat(1, 1));
            for k in 0..n {
                if (n - k) % 2 == 1 {
                    assert_eq!(h.coeff(k), rat(0, 1));
                }
            }
        }
    }

    #[test]
    fn ellipse_examples() {
        let e = ellipse_domain(0.0, 2.0, 1.0).unwrap();
        assert!((e.semi_major - 3.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((e.semi_minor - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(e.major_axis_direction, Axis::Real);
        let e = ellipse_domain(0.0, 1.0, 1.5).unwrap();
        assert_eq!(e.major_axis_direction, Axis::Imaginary);
        assert!((e.semi_major - 1.5).abs() < 1e-15 && (e.semi_minor - 0.5).abs() < 1e-15);
        let e = ellipse_domain(0.3, 1.2, 1.2).unwrap();
        let radius = (1.2f64 / 0.7).sqrt();
        assert!((e.semi_major - radius).abs() < 1e-14 && (e.semi_minor - radius).abs() < 1e-14);
        assert!(ellipse_domain(0.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn gamma_examples() {
        let g = gamma_kernel(1.0, Complex64::new(0.5, 0.0), 0.0, 1.0, 1.0).unwrap();
        assert!((g - Complex64::new(4.0 / 3.0, 0.0)).norm() < 1e-15);
        let g0 = gamma_kernel(0.7, Complex64::new(0.0, 0.0), 0.4, 1.3, 1.3).unwrap();
        assert!((g0 - 1.0).norm() < 1e-14);
        // For s ≠ t the even Hermite values H_k^{q,s−t}(0) survive, so Γ(x, 0) ≠ 1 in general.
        let origin = Complex64::new(0.0, 0.0);
        let a = gamma_kernel(0.7, origin, 0.4, 1.0, 0.5).unwrap();
        let b = gamma_kernel_series(0.7, origin, 0.4, 1.0, 0.5).unwrap();
        assert!((a - b).norm() < 1e-10);
        let z = Complex64::new(0.2, 0.0);
        let a = gamma_kernel(0.3, z, 0.4, 1.0, 0.5).unwrap();
        let b = gamma_kernel_series(0.3, z, 0.4, 1.0, 0.5).unwrap();
        assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        assert!(gamma_kernel(0.3, Complex64::new(5.0, 0.0), 0.4, 1.0, 0.5).is_err());
        assert!(gamma_kernel(9.0, z, 0.4, 1.0, 0.5).is_err());
    }

    #[test]
    fn mehler_examples() {
        let r = Complex64::new(0.3, 0.0);
        let y = Complex64::new(-0.2, 0.0);
        let a = mehler(r, 0.5, y, 0.4).unwrap();
        let b = mehler_series(r, 0.5, y, 0.4).unwrap();
        assert!((a - b).norm() < 1e-10);
        let tiny = mehler_series(Complex64::new(1e-12, 0.0), 0.5, Complex64::new(0.1, 0.0), 0.4).unwrap();
        assert!((tiny - 1.0).norm() < 1e-10);
        assert!(mehler(Complex64::new(0.3, 0.3), 0.5, y, 0.4).is_err());
        assert!(mehler(r, 0.5, Complex64::new(10.0, 0.0), 0.4).is_err());
    }

    #[test]
    fn zero_locus_kills_leading_factor() {
        for r in [Complex64::new(0.4, 0.0), Complex64::new(0.0, 0.6)] {
            for x in [-0.9, 0.0, 0.35] {
                for y in mehler_zero_locus(r, x, 0.3, 0) {
                    assert!(mehler_leading_factor(r, x, y).norm() < 1e-10);
                }
            }
        }
    }
}
