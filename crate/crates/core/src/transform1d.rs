//! The one-dimensional q-deformed Segal–Bargmann transform 𝒮_q^{s,t}.

use num_complex::Complex64;
use serde::Serialize;

use crate::combinat::q_factorial;
use crate::error::{QsbError, Result};
use crate::poly::Polynomial;
use crate::qfun::{adaptive_quadrature, ellipse_domain, gamma_kernel_unchecked, hermite_family, quadrature, QMeasureParams};
use crate::scalar::{Real, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformParams<R> {
    pub q: R,
    pub s: R,
    pub t: R,
}

impl<R: Real> TransformParams<R> {
    pub fn new(q: R, s: R, t: R) -> Result<Self> {
        let (qf, sf, tf) = (q.to_f64(), s.to_f64(), t.to_f64());
        if !(q > -R::one() && q < R::one()) {
            return Err(QsbError::invalid(format!("q = {qf} must lie in (-1, 1)")));
        }
        let two = R::from_i64(2);
        if !(t > R::zero() && s.clone() * two > t) {
            return Err(QsbError::invalid(format!("need s > t/2 > 0, got s = {sf}, t = {tf}")));
        }
        Ok(TransformParams { q, s, t })
    }

    pub fn to_f64(&self) -> TransformParams<f64> {
        TransformParams { q: self.q.to_f64(), s: self.s.to_f64(), t: self.t.to_f64() }
    }

    fn lift<C: Scalar + From<R>>(&self) -> (C, C, C) {
        (self.q.clone().into(), self.s.clone().into(), self.t.clone().into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HermiteExpansion<S> {
    pub q: S,
    pub variance: S,
    /// `f = Σ coeffs[k] H_k^{q,variance}`.
    pub coeffs: Vec<S>,
}

impl<S: Scalar> HermiteExpansion<S> {
    /// Triangular change of basis from monomials.
    pub fn from_polynomial(p: &Polynomial<S>, q: &S, variance: &S) -> Self {
        let Some(deg) = p.degree() else {
            return HermiteExpansion { q: q.clone(), variance: variance.clone(), coeffs: Vec::new() };
        };
        let family = hermite_family(deg, q, variance);
        let mut rest = p.clone();
        let mut coeffs = vec![S::zero(); deg + 1];
        for k in (0..=deg).rev() {
            let c = rest.coeff(k);
            if !c.is_zero() {
                rest = &rest - &family[k].scale(&c);
            }
            coeffs[k] = c;
        }
        HermiteExpansion { q: q.clone(), variance: variance.clone(), coeffs }
    }

    pub fn to_polynomial(&self) -> Polynomial<S> {
        if self.coeffs.is_empty() {
            return Polynomial::zero();
        }
        let family = hermite_family(self.coeffs.len() - 1, &self.q, &self.variance);
        let mut out = Polynomial::zero();
        for (c, h) in self.coeffs.iter().zip(&family) {
            out = &out + &h.scale(c);
        }
        out
    }

    /// Same coefficients over a different variance parameter.
    pub fn relabel(&self, variance: &S) -> Self {
        HermiteExpansion { q: self.q.clone(), variance: variance.clone(), coeffs: self.coeffs.clone() }
    }
}

/// 𝒮_q^{s,t}P with explicit parameters in the coefficient field (no range validation).
pub fn sb_exact_with<S: Scalar>(p: &Polynomial<S>, q: &S, s: &S, t: &S) -> Polynomial<S> {
    HermiteExpansion::from_polynomial(p, q, s).relabel(&(s.clone() - t.clone())).to_polynomial()
}

/// Inverse relabeling H_k^{q,s−t} ↦ H_k^{q,s}.
pub fn sb_inverse_with<S: Scalar>(p: &Polynomial<S>, q: &S, s: &S, t: &S) -> Polynomial<S> {
    HermiteExpansion::from_polynomial(p, q, &(s.clone() - t.clone())).relabel(s).to_polynomial()
}

/// 𝒮_q^{s,t}P by Hermite relabeling; exact for exact coefficient types.
pub fn sb_exact<R, C>(p: &Polynomial<C>, params: &TransformParams<R>) -> Polynomial<C>
where
    R: Real,
    C: Scalar + From<R>,
{
    let (q, s, t) = params.lift::<C>();
    sb_exact_with(p, &q, &s, &t)
}

pub fn sb_inverse<R, C>(p: &Polynomial<C>, params: &TransformParams<R>) -> Polynomial<C>
where
    R: Real,
    C: Scalar + From<R>,
{
    let (q, s, t) = params.lift::<C>();
    sb_inverse_with(p, &q, &s, &t)
}

fn strictly_inside(z: Complex64, params: &TransformParams<f64>) -> Result<()> {
    let ell = ellipse_domain(params.q, params.s, params.t)?;
    if !ell.contains(z) {
        return Err(QsbError::OutOfDomain { point: format!("z = {z}"), detail: "not strictly inside the ellipse E_{s,t}".into() });
    }
    Ok(())
}

/// ∫ P(x) Γ_q^{s,t}(x, z) ν_q^s(dx) by quadrature.
pub fn sb_quadrature(p: &Polynomial<Complex64>, z: Complex64, params: &TransformParams<f64>) -> Result<Complex64> {
    strictly_inside(z, params)?;
    let measure = QMeasureParams::new(params.q, params.s)?;
    let integrand = |x: f64| p.eval(&Complex64::new(x, 0.0)) * gamma_kernel_unchecked(x, z, params.q, params.s, params.t);
    // The kernel sharpens as t/s → 0, so keep doubling past the moment-tuned rule until the value settles.
    let mut rule = adaptive_quadrature(&measure)?;
    let mut value = rule.integrate_complex(integrand);
    while rule.len() < MAX_KERNEL_NODES {
        rule = quadrature(&measure, 2 * rule.len())?;
        let next = rule.integrate_complex(integrand);
        let settled = (next - value).norm() <= KERNEL_TOL * next.norm().max(1.0);
        value = next;
        if settled {
            break;
        }
    }
    Ok(value)
}

const KERNEL_TOL: f64 = 1e-11;
const MAX_KERNEL_NODES: usize = 1 << 17;

/// Reproducing kernel of the range space.
pub fn kernel(z: Complex64, w: Complex64, params: &TransformParams<f64>) -> Result<Complex64> {
    let TransformParams { q, s, t } = *params;
    if s == t {
        return kernel_series_diagonal(z, w, q, t);
    }
    strictly_inside(z, params)?;
    strictly_inside(w, params)?;
    let rule = adaptive_quadrature(&QMeasureParams::new(q, s)?)?;
    Ok(rule.integrate_complex(|x| gamma_kernel_unchecked(x, z, q, s, t) * gamma_kernel_unchecked(x, w.conj(), q, s, t)))
}

/// Σ_k (z w̄ / t)^k / [k]_q!.
pub fn kernel_series_diagonal(z: Complex64, w: Complex64, q: f64, t: f64) -> Result<Complex64> {
    let u = z * w.conj() / t;
    if u.norm() * (1.0 - q) >= 1.0 {
        return Err(QsbError::OutOfDomain {
            point: format!("z w̄ = {}", z * w.conj()),
            detail: format!("kernel series diverges for |z w̄| ≥ t/(1−q) = {}", t / (1.0 - q)),
        });
    }
    let mut sum = Complex64::new(0.0, 0.0);
    let mut term = Complex64::new(1.0, 0.0);
    let mut qint = 0.0;
    let mut qk = 1.0;
    for k in 0..100_000 {
        if k > 0 {
            qint += qk;
            qk *= q;
            term = term * u / qint;
        }
        sum += term;
        if k > 4 && term.norm() <= 1e-17 * sum.norm().max(1.0) {
            return Ok(sum);
        }
    }
    Err(QsbError::invalid("kernel series did not converge"))
}

/// Max deviation between the quadrature Gram matrix of {H_k^{q,s}} and diag([k]_q! s^k).
pub fn unitarity_check(degree_cap: usize, params: &TransformParams<f64>) -> Result<f64> {
    if degree_cap > 8 {
        return Err(QsbError::cap("degree_cap", 8, degree_cap));
    }
    let TransformParams { q, s, .. } = *params;
    let rule = adaptive_quadrature(&QMeasureParams::new(q, s)?)?;
    let values: Vec<Vec<f64>> = rule.nodes.iter().map(|x| crate::qfun::hermite_values(degree_cap, &q, &s, x)).collect();
    let mut worst: f64 = 0.0;
    for m in 0..=degree_cap {
        for n in 0..=degree_cap {
            let g: f64 = values.iter().zip(&rule.weights).map(|(h, w)| w * h[m] * h[n]).sum();
            let target = if m == n { q_factorial(n, &q) * s.powi(n as i32) } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    Ok(worst)
}

/// ⟨F, K_w⟩ computed on the L² side: ∫ (𝒮⁻¹F)(x) Γ_q^{s,t}(x, w) ν_q^s(dx); equals F(w).
pub fn kernel_pairing(f: &Polynomial<Complex64>, w: Complex64, params: &TransformParams<f64>) -> Result<Complex64> {
    let pre = sb_inverse(f, params);
    sb_quadrature(&pre, w, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;
    use crate::Rational;
    use num_complex::Complex;

    fn exact(q: Rational, s: Rational, t: Rational) -> TransformParams<Rational> {
        TransformParams::new(q, s, t).unwrap()
    }

    #[test]
    fn exact_examples() {
        let params = exact(rat(3, 10), rat(1, 1), rat(2, 5));
        let one = Polynomial::constant(rat(1, 1));
        assert_eq!(sb_exact(&one, &params), one);
        let x2 = Polynomial::<Rational>::monomial(2);
        let expected = Polynomial::new(vec![rat(2, 5), rat(0, 1), rat(1, 1)]);
        assert_eq!(sb_exact(&x2, &params), expected);
        let h3 = crate::qfun::hermite(3, &params.q, &params.s).poly;
        let h3_image = crate::qfun::hermite(3, &params.q, &(params.s.clone() - params.t.clone())).poly;
        assert_eq!(sb_exact(&h3, &params), h3_image);
    }

    #[test]
    fn complex_coefficients_follow_the_same_map() {
        let params = exact(rat(1, 2), rat(2, 1), rat(1, 1));
        let p: Polynomial<Complex<Rational>> =
            Polynomial::new(vec![Complex::new(rat(0, 1), rat(1, 1)), Complex::new(rat(0, 1), rat(0, 1)), Complex::new(rat(1, 1), rat(0, 1))]);
        let image = sb_exact(&p, &params);
        assert_eq!(image.coeff(0), Complex::new(rat(1, 1), rat(1, 1)));
    }

    #[test]
    fn inverse_round_trip() {
        let params = exact(rat(-2, 7), rat(3, 2), rat(2, 1));
        let p = Polynomial::new((0..=10).map(|k| rat(k as i64 - 3, (k + 1) as i64)).collect());
        assert_eq!(sb_inverse(&sb_exact(&p, &params), &params), p);
        assert_eq!(sb_exact_with(&p, &rat(-2, 7), &rat(3, 2), &rat(0, 1)), p);
        assert!(TransformParams::new(rat(0, 1), rat(1, 1), rat(0, 1)).is_err());
    }

    #[test]
    fn quadrature_matches_exact() {
        let params = TransformParams::new(0.3, 1.0, 0.8).unwrap();
        let x3: Polynomial<Complex64> = Polynomial::monomial(3);
        let z = Complex64::new(0.2, 0.1);
        let exact = sb_exact(&x3, &params).eval(&z);
        assert!((sb_quadrature(&x3, z, &params).unwrap() - exact).norm() < 1e-7);
        let one: Polynomial<Complex64> = Polynomial::constant(Complex64::new(1.0, 0.0));
        assert!((sb_quadrature(&one, Complex64::new(0.3, -0.2), &params).unwrap() - 1.0).norm() < 1e-8);
        let h2 = crate::qfun::hermite(2, &Complex64::new(0.3, 0.0), &Complex64::new(1.0, 0.0)).poly;
        let v = sb_quadrature(&h2, Complex64::new(0.0, 0.0), &params).unwrap();
        assert!((v + 0.2).norm() < 1e-8);
        assert!(sb_quadrature(&x3, Complex64::new(5.0, 0.0), &params).is_err());
    }

    #[test]
    fn kernel_examples() {
        let p = TransformParams::new(0.0, 1.0, 1.0).unwrap();
        let half = Complex64::new(0.5, 0.0);
        assert!((kernel(half, half, &p).unwrap() - 4.0 / 3.0).norm() < 1e-14);
        assert!((kernel(Complex64::new(0.0, 0.0), Complex64::new(0.3, 0.7), &p).unwrap() - 1.0).norm() < 1e-15);
        let p = TransformParams::new(0.5, 1.0, 1.0).unwrap();
        let series = kernel(half, half, &p).unwrap();
        let rule = adaptive_quadrature(&QMeasureParams::new(0.5, 1.0).unwrap()).unwrap();
        let quad = rule.integrate_complex(|x| gamma_kernel_unchecked(x, half, 0.5, 1.0, 1.0) * gamma_kernel_unchecked(x, half, 0.5, 1.0, 1.0));
        assert!((series - quad).norm() < 1e-8);
        assert!(kernel(Complex64::new(1.5, 0.0), Complex64::new(1.5, 0.0), &p).is_err());
    }

    #[test]
    fn unitarity_examples() {
        let p = TransformParams::new(0.4, 1.0, 0.6).unwrap();
        assert!(unitarity_check(0, &p).unwrap() < 1e-12);
        assert!(unitarity_check(6, &p).unwrap() < 1e-8);
        assert!(unitarity_check(6, &TransformParams::new(0.0, 1.0, 1.0).unwrap()).unwrap() < 1e-8);
        assert!(unitarity_check(9, &p).is_err());
    }

    #[test]
    fn reproducing_property() {
        let p = TransformParams::new(0.3, 1.0, 1.0).unwrap();
        let f: Polynomial<Complex64> = Polynomial::new(vec![
            Complex64::new(1.0, 0.5),
            Complex64::new(-0.3, 0.0),
            Complex64::new(0.0, 2.0),
            Complex64::new(0.7, 0.0),
        ]);
        let w = Complex64::new(0.4, -0.3);
        assert!((kernel_pairing(&f, w, &p).unwrap() - f.eval(&w)).norm() < 1e-6);
    }
}
