//! Śniady's Gaussian random matrices on (ℂ^d)^{⊗N}: σ-weighted covariances, structured samplers,
//! hypothesis diagnostics, and Monte Carlo estimates of the transform approximation errors.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ensure_cap, QsbError, Result};
use crate::ncpoly::{NcPoly, Word};
use crate::poly::Polynomial;
use crate::qalgebra::{sb_multidim, tau, GaussianFamily};
use crate::scalar::serialize_rational;
use crate::{Rational, C64};

pub const MAX_MATRIX_DIM: usize = 4096;
pub const MAX_LAYER_SUBSETS: usize = 10_000;
pub const MAX_EXPLICIT_LEGS: usize = 12;
pub const MAX_HYPOTHESIS_LEGS: usize = 64;

/// a + b√m with rational a, b.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadSurd {
    pub a: Rational,
    pub b: Rational,
    pub m: u64,
}

impl QuadSurd {
    pub fn rational(a: Rational, m: u64) -> Self {
        QuadSurd { a, b: Rational::zero(), m }
    }

    /// c/√m = (c/m)·√m.
    pub fn over_sqrt(c: &Rational, m: u64) -> Self {
        QuadSurd { a: Rational::zero(), b: c / Rational::from_integer(BigInt::from(m)), m }
    }

    pub fn add(&self, o: &Self) -> Self {
        QuadSurd { a: &self.a + &o.a, b: &self.b + &o.b, m: self.m }
    }

    pub fn sub(&self, o: &Self) -> Self {
        QuadSurd { a: &self.a - &o.a, b: &self.b - &o.b, m: self.m }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let m = Rational::from_integer(BigInt::from(self.m));
        QuadSurd { a: &self.a * &o.a + &self.b * &o.b * m, b: &self.a * &o.b + &self.b * &o.a, m: self.m }
    }

    pub fn pow(&self, k: usize) -> Self {
        let mut out = QuadSurd::rational(Rational::one(), self.m);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    pub fn scale(&self, c: &Rational) -> Self {
        QuadSurd { a: &self.a * c, b: &self.b * c, m: self.m }
    }

    /// Exact equality with a rational, valid whether or not m is a perfect square.
    pub fn equals_rational(&self, r: &Rational) -> bool {
        if self.b.is_zero() {
            return self.a == *r;
        }
        let root = BigInt::from(self.m).sqrt();
        if &root * &root == BigInt::from(self.m) {
            return &self.a + &self.b * Rational::from_integer(root) == *r;
        }
        false
    }

    pub fn to_f64(&self) -> f64 {
        self.a.to_f64().unwrap_or(f64::NAN) + self.b.to_f64().unwrap_or(f64::NAN) * (self.m as f64).sqrt()
    }
}

fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

fn to_rational(v: &BigInt) -> Rational {
    Rational::from_integer(v.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Binomial,
    Layer,
}

impl FromStr for FamilyKind {
    type Err = QsbError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binomial" => Ok(FamilyKind::Binomial),
            "layer" => Ok(FamilyKind::Layer),
            _ => Err(QsbError::parse(s, "binomial or layer")),
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyKind::Binomial => "binomial",
            FamilyKind::Layer => "layer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SigmaKind {
    /// σ²_S = p^{|S|}(1−p)^{N−|S|} with p = c/√N.
    Binomial {
        #[serde(serialize_with = "serialize_rational")]
        c: Rational,
    },
    /// σ²_S = 1/C(N,k) on subsets of size k = ⌊c√N⌋.
    Layer {
        #[serde(serialize_with = "serialize_rational")]
        c: Rational,
        k: usize,
    },
    /// σ²_S given per subset, indexed by bitmask (leg r ↔ bit r).
    Explicit { weights: Vec<f64> },
}

/// The weights (σ_S²)_{S ⊂ {1..N}} on d^N × d^N matrices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaFamily {
    pub d: usize,
    pub n_legs: usize,
    pub kind: SigmaKind,
}

/// exp(c²/d² − c²).
pub fn target_q(c: f64, d: usize) -> f64 {
    let d2 = (d * d) as f64;
    (c * c / d2 - c * c).exp()
}

fn check_d(d: usize) -> Result<()> {
    if d < 2 {
        return Err(QsbError::invalid(format!("local dimension d = {d} must be at least 2")));
    }
    Ok(())
}

pub fn sigma_binomial(c: &Rational, d: usize, n_legs: usize) -> Result<SigmaFamily> {
    check_d(d)?;
    if n_legs == 0 {
        return Err(QsbError::invalid("N must be positive"));
    }
    if !c.is_positive() || c * c > Rational::from_integer(BigInt::from(n_legs)) {
        return Err(QsbError::invalid(format!("binomial family needs 0 < c ≤ √N (c = {c}, N = {n_legs})")));
    }
    Ok(SigmaFamily { d, n_legs, kind: SigmaKind::Binomial { c: c.clone() } })
}

pub fn sigma_layer(c: &Rational, d: usize, n_legs: usize) -> Result<SigmaFamily> {
    check_d(d)?;
    if !c.is_positive() || n_legs == 0 {
        return Err(QsbError::invalid("layer family needs c > 0 and N > 0"));
    }
    let c2n = c * c * Rational::from_integer(BigInt::from(n_legs));
    let mut k = 0usize;
    while Rational::from_integer(BigInt::from((k + 1) * (k + 1))) <= c2n {
        k += 1;
    }
    if k > n_legs {
        return Err(QsbError::invalid(format!("⌊c√N⌋ = {k} exceeds N = {n_legs}")));
    }
    Ok(SigmaFamily { d, n_legs, kind: SigmaKind::Layer { c: c.clone(), k } })
}

pub fn sigma_explicit(d: usize, n_legs: usize, weights: Vec<f64>) -> Result<SigmaFamily> {
    check_d(d)?;
    ensure_cap("legs of an explicit family", MAX_EXPLICIT_LEGS, n_legs)?;
    if weights.len() != 1 << n_legs {
        return Err(QsbError::invalid(format!("expected {} subset weights, got {}", 1usize << n_legs, weights.len())));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(QsbError::invalid("subset weights must be finite and nonnegative"));
    }
    Ok(SigmaFamily { d, n_legs, kind: SigmaKind::Explicit { weights } })
}

impl SigmaFamily {
    pub fn dim(&self) -> usize {
        self.d.pow(self.n_legs as u32)
    }

    pub fn c(&self) -> Option<&Rational> {
        match &self.kind {
            SigmaKind::Binomial { c } | SigmaKind::Layer { c, .. } => Some(c),
            SigmaKind::Explicit { .. } => None,
        }
    }

    pub fn target_q(&self) -> Option<f64> {
        self.c().map(|c| target_q(c.to_f64().unwrap_or(f64::NAN), self.d))
    }

    /// σ²_S for a single subset of size k, for exchangeable kinds.
    pub fn size_weight(&self, k: usize) -> Option<f64> {
        match &self.kind {
            SigmaKind::Binomial { c } => {
                let p = c.to_f64()? / (self.n_legs as f64).sqrt();
                Some(p.powi(k as i32) * (1.0 - p).powi((self.n_legs - k) as i32))
            }
            SigmaKind::Layer { k: layer, .. } => {
                Some(if k == *layer { 1.0 / binomial(self.n_legs, k).to_f64().unwrap_or(f64::INFINITY) } else { 0.0 })
            }
            SigmaKind::Explicit { .. } => None,
        }
    }

    pub fn subset_weight(&self, mask: usize) -> f64 {
        match &self.kind {
            SigmaKind::Explicit { weights } => weights[mask],
            _ => self.size_weight(mask.count_ones() as usize).unwrap_or(0.0),
        }
    }

    /// Subsets with nonzero weight, as (bitmask, σ_S²).
    pub fn support(&self) -> Result<Vec<(usize, f64)>> {
        match &self.kind {
            SigmaKind::Explicit { weights } => Ok(weights.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(m, w)| (m, *w)).collect()),
            SigmaKind::Layer { k, .. } => {
                let count = binomial(self.n_legs, *k).to_usize().unwrap_or(usize::MAX);
                ensure_cap("layer subsets", MAX_LAYER_SUBSETS, count)?;
                let w = 1.0 / count as f64;
                Ok(subsets_of_size(self.n_legs, *k).into_iter().map(|m| (m, w)).collect())
            }
            SigmaKind::Binomial { .. } => {
                ensure_cap("legs for subset enumeration", MAX_EXPLICIT_LEGS, self.n_legs)?;
                Ok((0..1usize << self.n_legs).map(|m| (m, self.subset_weight(m))).filter(|(_, w)| *w > 0.0).collect())
            }
        }
    }
}

fn subsets_of_size(n: usize, k: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![(0usize, 0usize, 0usize)];
    while let Some((start, mask, size)) = stack.pop() {
        if size == k {
            out.push(mask);
            continue;
        }
        for r in (start..n).rev() {
            if n - r >= k - size {
                stack.push((r + 1, mask | (1 << r), size + 1));
            }
        }
    }
    out.sort_unstable();
    out
}

/// ⟨E_{j,i}, E_{k,l}⟩_σ = Σ_S σ²_S Π_r T^S_r, with T = δ_il δ_jk / d on legs in S and δ_ij δ_kl
/// elsewhere; multi-indices are 0-based with leg 1 first.
pub fn covariance_entry(sigma: &SigmaFamily, i: &[usize], j: &[usize], k: &[usize], l: &[usize]) -> Result<f64> {
    let n = sigma.n_legs;
    for idx in [i, j, k, l] {
        if idx.len() != n || idx.iter().any(|&v| v >= sigma.d) {
            return Err(QsbError::invalid(format!("multi-index {idx:?} is not in {{0..{}}}^{n}", sigma.d - 1)));
        }
    }
    let d = sigma.d as f64;
    let inside: Vec<f64> = (0..n).map(|r| if i[r] == l[r] && j[r] == k[r] { 1.0 / d } else { 0.0 }).collect();
    let outside: Vec<f64> = (0..n).map(|r| if i[r] == j[r] && k[r] == l[r] { 1.0 } else { 0.0 }).collect();
    match &sigma.kind {
        SigmaKind::Explicit { weights } => Ok(weights
            .iter()
            .enumerate()
            .map(|(mask, w)| w * (0..n).map(|r| if mask >> r & 1 == 1 { inside[r] } else { outside[r] }).product::<f64>())
            .sum()),
        _ => {
            // coefficient of x^k in Π_r (outside_r + inside_r x)
            let mut e = vec![0.0; n + 1];
            e[0] = 1.0;
            for r in 0..n {
                for size in (0..=r + 1).rev() {
                    let keep = e[size] * outside[r];
                    let add = if size > 0 { e[size - 1] * inside[r] } else { 0.0 };
                    e[size] = keep + add;
                }
            }
            Ok((0..=n).map(|s| e[s] * sigma.size_weight(s).unwrap_or(0.0)).sum())
        }
    }
}

/// Pair covariance law and intersection law for a σ family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    /// Σ_S σ_S² evaluated exactly (binomial/layer) or in double precision (explicit).
    pub h1_sum: f64,
    pub h1_exact: Option<bool>,
    /// p̂_i = P(|S ∩ S′| = i) for independent σ²-distributed S, S′.
    pub intersection_law: Vec<f64>,
    /// q̂ = Σ_i p̂_i d^{−2i}, as an exact fraction string when available.
    pub q_hat: f64,
    pub q_hat_exact: Option<String>,
    pub target_q: Option<f64>,
    pub h2: &'static str,
    pub h4: &'static str,
}

pub fn check_hypotheses(sigma: &SigmaFamily) -> Result<HypothesisReport> {
    let n = sigma.n_legs;
    let d2 = Rational::from_integer(BigInt::from(sigma.d * sigma.d));
    let not_checked = "not checked";
    match &sigma.kind {
        SigmaKind::Binomial { c } => {
            ensure_cap("legs", MAX_HYPOTHESIS_LEGS, n)?;
            let p = QuadSurd::over_sqrt(c, n as u64);
            let one = QuadSurd::rational(Rational::one(), n as u64);
            let mut sum = QuadSurd::rational(Rational::zero(), n as u64);
            for k in 0..=n {
                let term = p.pow(k).mul(&one.sub(&p).pow(n - k)).scale(&to_rational(&binomial(n, k)));
                sum = sum.add(&term);
            }
            let p2 = c * c / Rational::from_integer(BigInt::from(n));
            let law: Vec<Rational> = (0..=n)
                .map(|i| {
                    to_rational(&binomial(n, i)) * pow_rat(&p2, i) * pow_rat(&(Rational::one() - &p2), n - i)
                })
                .collect();
            let q_hat = pow_rat(&(Rational::one() - &p2 + &p2 / &d2), n);
            Ok(HypothesisReport {
                h1_sum: sum.to_f64(),
                h1_exact: Some(sum.equals_rational(&Rational::one())),
                intersection_law: law.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
                q_hat: q_hat.to_f64().unwrap_or(f64::NAN),
                q_hat_exact: Some(q_hat.to_string()),
                target_q: sigma.target_q(),
                h2: not_checked,
                h4: not_checked,
            })
        }
        SigmaKind::Layer { k, .. } => {
            ensure_cap("legs", MAX_HYPOTHESIS_LEGS, n)?;
            let total = binomial(n, *k);
            let sum = to_rational(&total) / to_rational(&total);
            let law: Vec<Rational> = (0..=n)
                .map(|i| {
                    if i > *k {
                        Rational::zero()
                    } else {
                        to_rational(&(binomial(*k, i) * binomial(n - k, k - i))) / to_rational(&total)
                    }
                })
                .collect();
            let mut q_hat = Rational::zero();
            for (i, v) in law.iter().enumerate() {
                q_hat += v / pow_rat(&d2, i);
            }
            Ok(HypothesisReport {
                h1_sum: sum.to_f64().unwrap_or(f64::NAN),
                h1_exact: Some(sum.is_one()),
                intersection_law: law.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
                q_hat: q_hat.to_f64().unwrap_or(f64::NAN),
                q_hat_exact: Some(q_hat.to_string()),
                target_q: sigma.target_q(),
                h2: not_checked,
                h4: not_checked,
            })
        }
        SigmaKind::Explicit { weights } => {
            let sum: f64 = weights.iter().sum();
            let mut law = vec![0.0; n + 1];
            for (a, wa) in weights.iter().enumerate().filter(|(_, w)| **w > 0.0) {
                for (b, wb) in weights.iter().enumerate().filter(|(_, w)| **w > 0.0) {
                    law[(a & b).count_ones() as usize] += wa * wb;
                }
            }
            let d2 = (sigma.d * sigma.d) as f64;
            let q_hat = law.iter().enumerate().map(|(i, p)| p / d2.powi(i as i32)).sum();
            Ok(HypothesisReport {
                h1_sum: sum,
                h1_exact: None,
                intersection_law: law,
                q_hat,
                q_hat_exact: None,
                target_q: None,
                h2: not_checked,
                h4: not_checked,
            })
        }
    }
}

fn pow_rat(r: &Rational, k: usize) -> Rational {
    let mut out = Rational::one();
    for _ in 0..k {
        out *= r;
    }
    out
}

/// q̂(N) = (1 − p² + p²/d²)^N, p = c/√N, as an exact rational.
pub fn q_hat_binomial(c: &Rational, d: usize, n_legs: usize) -> Rational {
    let p2 = c * c / Rational::from_integer(BigInt::from(n_legs));
    let d2 = Rational::from_integer(BigInt::from(d * d));
    pow_rat(&(Rational::one() - &p2 + &p2 / d2), n_legs)
}

/// Draws from γ^{σ,t}: Hermitian X with E[Tr(MX)Tr(NX)] = t⟨M,N⟩_σ.
#[derive(Debug, Clone)]
pub struct HermitianSampler {
    d: usize,
    n_legs: usize,
    path: SamplerPath,
}

#[derive(Debug, Clone)]
enum SamplerPath {
    /// Per-leg map from d² real coordinates to the d² matrix entries, (T·G^{1/2}) with
    /// G = (p/d)I + (1−p)uuᵀ in an orthonormal Hermitian basis.
    ModeProduct { leg: Vec<C64> },
    /// Σ_S σ_S (G_S ⊗ I) with independent GUE blocks G_S.
    Embedded { subsets: Vec<(usize, f64)> },
}

/// A matrix draw with the variances it was drawn at.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSample {
    pub matrix: Array2<C64>,
    /// (t, 0) for Hermitian draws, (r, s) for elliptic draws Re + i·Im.
    pub variance: (f64, f64),
}

impl HermitianSampler {
    pub fn new(sigma: &SigmaFamily) -> Result<Self> {
        ensure_cap("matrix dimension d^N", MAX_MATRIX_DIM, sigma.d.checked_pow(sigma.n_legs as u32).unwrap_or(usize::MAX))?;
        let path = match &sigma.kind {
            SigmaKind::Binomial { c } => {
                let p = c.to_f64().unwrap_or(f64::NAN) / (sigma.n_legs as f64).sqrt();
                SamplerPath::ModeProduct { leg: binomial_leg_map(sigma.d, p) }
            }
            _ => SamplerPath::Embedded { subsets: sigma.support()?.into_iter().map(|(m, w)| (m, w.sqrt())).collect() },
        };
        Ok(HermitianSampler { d: sigma.d, n_legs: sigma.n_legs, path })
    }

    /// Forces the subset-sum path for any kind (used to cross-validate the factorised sampler).
    pub fn embedded(sigma: &SigmaFamily) -> Result<Self> {
        ensure_cap("matrix dimension d^N", MAX_MATRIX_DIM, sigma.dim())?;
        let subsets = sigma.support()?.into_iter().map(|(m, w)| (m, w.sqrt())).collect();
        Ok(HermitianSampler { d: sigma.d, n_legs: sigma.n_legs, path: SamplerPath::Embedded { subsets } })
    }

    pub fn dim(&self) -> usize {
        self.d.pow(self.n_legs as u32)
    }

    pub fn sample<R: Rng>(&self, t: f64, rng: &mut R) -> Array2<C64> {
        let mut x = match &self.path {
            SamplerPath::ModeProduct { leg } => self.sample_mode_product(leg, rng),
            SamplerPath::Embedded { subsets } => self.sample_embedded(subsets, rng),
        };
        let scale = t.sqrt();
        let xt = x.t().mapv(|v| v.conj());
        x = (&x + &xt).mapv(|v| v * 0.5 * scale);
        x
    }

    fn sample_mode_product<R: Rng>(&self, leg: &[C64], rng: &mut R) -> Array2<C64> {
        let d = self.d;
        let d2 = d * d;
        let n = self.n_legs;
        let total = d2.pow(n as u32);
        let mut tensor: Vec<C64> = (0..total).map(|_| C64::new(rng.sample(StandardNormal), 0.0)).collect();
        let mut scratch = vec![C64::new(0.0, 0.0); d2];
        for r in 0..n {
            let stride = d2.pow((n - 1 - r) as u32);
            let block = stride * d2;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (row, s) in scratch.iter_mut().enumerate() {
                        let mut acc = C64::new(0.0, 0.0);
                        for col in 0..d2 {
                            acc += leg[row * d2 + col] * tensor[base + col * stride];
                        }
                        *s = acc;
                    }
                    for (row, s) in scratch.iter().enumerate() {
                        tensor[base + row * stride] = *s;
                    }
                }
            }
        }
        let dim = self.dim();
        let mut x = Array2::zeros((dim, dim));
        for (flat, v) in tensor.into_iter().enumerate() {
            let (mut row, mut col, mut rest) = (0usize, 0usize, flat);
            let mut place = 1usize;
            for _ in 0..n {
                let m = rest % d2;
                rest /= d2;
                row += (m / d) * place;
                col += (m % d) * place;
                place *= d;
            }
            x[[row, col]] = v;
        }
        x
    }

    fn sample_embedded<R: Rng>(&self, subsets: &[(usize, f64)], rng: &mut R) -> Array2<C64> {
        let d = self.d;
        let n = self.n_legs;
        let dim = self.dim();
        let mut x = Array2::zeros((dim, dim));
        for &(mask, sigma) in subsets {
            let legs: Vec<usize> = (0..n).filter(|r| mask >> r & 1 == 1).collect();
            let m = d.pow(legs.len() as u32);
            let g = gue(m, rng);
            // leg r has place value d^{n-1-r} in the row/column index
            let places: Vec<usize> = legs.iter().map(|&r| d.pow((n - 1 - r) as u32)).collect();
            for row in 0..dim {
                let mut row_sub = 0usize;
                let mut row_rest = row;
                for &pl in &places {
                    let digit = (row / pl) % d;
                    row_sub = row_sub * d + digit;
                    row_rest -= digit * pl;
                }
                for col_sub in 0..m {
                    let mut col = row_rest;
                    let mut rem = col_sub;
                    for &pl in places.iter().rev() {
                        col += (rem % d) * pl;
                        rem /= d;
                    }
                    x[[row, col]] += g[[row_sub, col_sub]] * sigma;
                }
            }
        }
        x
    }

    pub fn sample_hermitian<R: Rng>(&self, t: f64, rng: &mut R) -> MatrixSample {
        MatrixSample { matrix: self.sample(t, rng), variance: (t, 0.0) }
    }

    /// Z = X_r + i X_s from μ^{σ,r,s}.
    pub fn sample_elliptic<R: Rng>(&self, r: f64, s: f64, rng: &mut R) -> Result<MatrixSample> {
        if !(r >= 0.0 && s >= 0.0) || r + s == 0.0 {
            return Err(QsbError::invalid(format!("elliptic variances ({r}, {s}) must be nonnegative and not both zero")));
        }
        let re = self.sample(r, rng);
        let im = self.sample(s, rng);
        Ok(MatrixSample { matrix: re + im.mapv(|v| v * C64::new(0.0, 1.0)), variance: (r, s) })
    }
}

/// GUE of size m with E|G_ab|² = 1/m.
fn gue<R: Rng>(m: usize, rng: &mut R) -> Array2<C64> {
    let mut g = Array2::zeros((m, m));
    let sd = (1.0 / m as f64).sqrt();
    let off = (1.0 / (2.0 * m as f64)).sqrt();
    for a in 0..m {
        g[[a, a]] = C64::new(sd * rng.sample::<f64, _>(StandardNormal), 0.0);
        for b in a + 1..m {
            let v = C64::new(off * rng.sample::<f64, _>(StandardNormal), off * rng.sample::<f64, _>(StandardNormal));
            g[[a, b]] = v;
            g[[b, a]] = v.conj();
        }
    }
    g
}

/// Row-major d²×d² map (entry index a·d + a′) ← (basis coordinate), i.e. T·G^{1/2}.
fn binomial_leg_map(d: usize, p: f64) -> Vec<C64> {
    let d2 = d * d;
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(d2);
    for k in 0..d {
        let mut e = vec![C64::new(0.0, 0.0); d2];
        e[k * d + k] = C64::new(1.0, 0.0);
        basis.push(e);
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for k in 0..d {
        for l in k + 1..d {
            let mut sym = vec![C64::new(0.0, 0.0); d2];
            sym[k * d + l] = C64::new(h, 0.0);
            sym[l * d + k] = C64::new(h, 0.0);
            basis.push(sym);
            let mut asym = vec![C64::new(0.0, 0.0); d2];
            asym[k * d + l] = C64::new(0.0, h);
            asym[l * d + k] = C64::new(0.0, -h);
            basis.push(asym);
        }
    }
    let a = (p / d as f64).sqrt();
    let c = ((p / d as f64 + (1.0 - p) * d as f64).sqrt() - a) / d as f64;
    let root = |b: usize, b2: usize| -> f64 {
        let diag = if b == b2 { a } else { 0.0 };
        diag + if b < d && b2 < d { c } else { 0.0 }
    };
    let mut out = vec![C64::new(0.0, 0.0); d2 * d2];
    for entry in 0..d2 {
        for col in 0..d2 {
            let mut acc = C64::new(0.0, 0.0);
            for (b, e) in basis.iter().enumerate() {
                acc += e[entry] * root(b, col);
            }
            out[entry * d2 + col] = acc;
        }
    }
    out
}

/// How to build σ^{(N)} for each N in an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaSpec {
    pub kind: FamilyKind,
    #[serde(serialize_with = "serialize_rational")]
    pub c: Rational,
    pub d: usize,
}

impl SigmaSpec {
    pub fn at(&self, n_legs: usize) -> Result<SigmaFamily> {
        match self.kind {
            FamilyKind::Binomial => sigma_binomial(&self.c, self.d, n_legs),
            FamilyKind::Layer => sigma_layer(&self.c, self.d, n_legs),
        }
    }

    pub fn target_q(&self) -> f64 {
        target_q(self.c.to_f64().unwrap_or(f64::NAN), self.d)
    }
}

/// Monte Carlo statistics for one N.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NRecord {
    #[serde(rename = "N")]
    pub n_legs: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub imag_estimate: f64,
    pub imag_stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub records: Vec<NRecord>,
    /// Limit value the estimates should approach.
    pub reference: f64,
    pub target_q: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the N-leg run of an experiment seeded with `seed`.
pub fn leg_seed(seed: u64, n_legs: usize) -> u64 {
    seed ^ splitmix64(n_legs as u64)
}

/// Private generator of sample `index` within a run.
pub fn sample_rng(run_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(index as u64);
    rng
}

/// Runs `per_sample` on every sample index (in parallel) and reduces in index order.
fn monte_carlo<F>(n_samples: usize, run_seed: u64, n_legs: usize, per_sample: F) -> Result<NRecord>
where
    F: Fn(&mut ChaCha8Rng) -> Result<C64> + Sync,
{
    if n_samples < 2 {
        return Err(QsbError::invalid("need at least 2 samples"));
    }
    let start = Instant::now();
    let values: Vec<C64> = (0..n_samples)
        .into_par_iter()
        .map(|i| per_sample(&mut sample_rng(run_seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let (re_mean, re_se) = mean_stderr(values.iter().map(|v| v.re));
    let (im_mean, im_se) = mean_stderr(values.iter().map(|v| v.im));
    Ok(NRecord {
        n_legs,
        estimate: re_mean,
        stderr: re_se,
        imag_estimate: im_mean,
        imag_stderr: im_se,
        n_samples,
        seed: run_seed,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn mean_stderr(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Evaluates a noncommutative polynomial at matrices, sharing word prefixes.
pub struct MatrixEvaluator<'a> {
    letters: &'a [Array2<C64>],
    cache: HashMap<Word, Array2<C64>>,
}

impl<'a> MatrixEvaluator<'a> {
    pub fn new(letters: &'a [Array2<C64>]) -> Self {
        MatrixEvaluator { letters, cache: HashMap::new() }
    }

    fn dim(&self) -> usize {
        self.letters[0].nrows()
    }

    fn word(&mut self, w: &[usize]) -> Array2<C64> {
        if w.is_empty() {
            return Array2::eye(self.dim()).mapv(|v: f64| C64::new(v, 0.0));
        }
        if w.len() == 1 {
            return self.letters[w[0]].clone();
        }
        if let Some(m) = self.cache.get(w) {
            return m.clone();
        }
        let prefix = self.word(&w[..w.len() - 1]);
        let m = prefix.dot(&self.letters[w[w.len() - 1]]);
        self.cache.insert(w.to_vec(), m.clone());
        m
    }

    pub fn eval(&mut self, p: &NcPoly<C64>) -> Array2<C64> {
        let dim = self.dim();
        let mut out: Array2<C64> = Array2::zeros((dim, dim));
        for (w, c) in p.terms() {
            if w.is_empty() {
                for i in 0..dim {
                    out[[i, i]] += *c;
                }
            } else {
                out.scaled_add(*c, &self.word(w));
            }
        }
        out
    }

    /// (1/dim) Tr p, splitting each word in halves A·B and using Tr(AB) = Σ A_ij B_ji.
    pub fn normalized_trace(&mut self, p: &NcPoly<C64>) -> C64 {
        let dim = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for (w, c) in p.terms() {
            let tr = match w.len() {
                0 => C64::new(dim as f64, 0.0),
                1 => self.letters[w[0]].diag().sum(),
                len => {
                    let a = self.word(&w[..len / 2]);
                    let b = self.word(&w[len / 2..]);
                    let mut s = C64::new(0.0, 0.0);
                    for (row, arow) in a.outer_iter().enumerate() {
                        for (x, y) in arow.iter().zip(b.column(row).iter()) {
                            s += x * y;
                        }
                    }
                    s
                }
            };
            acc += *c * tr;
        }
        acc / dim as f64
    }
}

/// Which N to run, how many samples at each, and the master seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct McPlan {
    pub n_list: Vec<usize>,
    pub samples: Vec<usize>,
    pub seed: u64,
    /// Average each factor over X ↦ ±X (and Y ↦ ±Y); unbiased since the law of X is symmetric.
    pub antithetic: bool,
}

impl McPlan {
    pub fn uniform(n_list: &[usize], n_samples: usize, seed: u64) -> Self {
        McPlan { n_list: n_list.to_vec(), samples: vec![n_samples; n_list.len()], seed, antithetic: false }
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(QsbError::invalid("N list must be non-empty with positive entries"));
        }
        if self.samples.len() != self.n_list.len() {
            return Err(QsbError::invalid("one sample count per N is required"));
        }
        Ok(())
    }

    fn runs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.n_list.iter().copied().zip(self.samples.iter().copied())
    }
}

/// Cholesky factor of a small covariance matrix (lower triangular), tolerating zero pivots.
fn cholesky(cov: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = cov.len();
    let mut l = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = cov[i][j];
            for p in 0..j {
                s -= l[i][p] * l[j][p];
            }
            if i == j {
                if s < -1e-12 {
                    return Err(QsbError::invalid("covariance is not positive semidefinite"));
                }
                l[i][i] = s.max(0.0).sqrt();
            } else if l[j][j] > 0.0 {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

/// E[(1/d^N) Tr P(X_1, …, X_k)] per N, with X_i jointly drawn so that
/// E[Tr(M X_i) Tr(N X_j)] = C_ij ⟨M,N⟩_σ; the reference is τ[P] for the q-Gaussian family (q, C).
pub fn moment_convergence(
    p: &NcPoly<f64>,
    sigma: &SigmaSpec,
    cov: &[Vec<f64>],
    plan: &McPlan,
) -> Result<ExperimentResult> {
    let k = cov.len();
    ensure_cap("number of letters", 3, k)?;
    if let Some(d) = p.degree() {
        ensure_cap("polynomial degree", 6, d)?;
    }
    if p.alphabet_size() > k {
        return Err(QsbError::invalid("polynomial uses more letters than the covariance provides"));
    }
    plan.validate()?;
    let q = sigma.target_q();
    let fam = GaussianFamily::new(q, cov.to_vec())?;
    let reference = tau(p, &fam)?;
    let chol = cholesky(cov)?;
    let pc = p.map_coeffs(|c| C64::new(*c, 0.0));
    let mut records = Vec::new();
    for (n, n_samples) in plan.runs() {
        let sampler = HermitianSampler::new(&sigma.at(n)?)?;
        let run_seed = leg_seed(plan.seed, n);
        records.push(monte_carlo(n_samples, run_seed, n, |rng| {
            let raw: Vec<Array2<C64>> = (0..k).map(|_| sampler.sample(1.0, rng)).collect();
            let letters: Vec<Array2<C64>> = (0..k)
                .map(|i| {
                    let mut m = Array2::zeros(raw[0].raw_dim());
                    for (j, r) in raw.iter().enumerate().take(i + 1) {
                        if chol[i][j] != 0.0 {
                            m.scaled_add(C64::new(chol[i][j], 0.0), r);
                        }
                    }
                    m
                })
                .collect();
            Ok(MatrixEvaluator::new(&letters).normalized_trace(&pc))
        })?);
    }
    Ok(ExperimentResult { records, reference, target_q: q })
}

/// P(Z + X), or its even part (P(Z + X) + P(Z − X))/2 in X.
fn shifted_eval(p: &NcPoly<C64>, z: &[Array2<C64>], x: &[Array2<C64>], antithetic: bool) -> Array2<C64> {
    let plus: Vec<Array2<C64>> = z.iter().zip(x).map(|(a, b)| a + b).collect();
    let value = MatrixEvaluator::new(&plus).eval(p);
    if !antithetic {
        return value;
    }
    let minus: Vec<Array2<C64>> = z.iter().zip(x).map(|(a, b)| a - b).collect();
    (value + MatrixEvaluator::new(&minus).eval(p)).mapv(|v| v * 0.5)
}

/// One-dimensional error statistic per N: (1/d^N) Tr[(P(Z+X) − Q(Z))(P(Z+Y) − Q(Z))^*], Q = 𝒮_q^{s,t}P,
/// with X, Y ~ γ^{σ,t} and Z ~ μ^{σ,s−t/2,t/2} independent.
pub fn theorem2_error(
    p: &Polynomial<f64>,
    sigma: &SigmaSpec,
    s: f64,
    t: f64,
    plan: &McPlan,
) -> Result<ExperimentResult> {
    if let Some(d) = p.degree() {
        ensure_cap("polynomial degree", 4, d)?;
    }
    let mut nc = NcPoly::zero();
    for (k, c) in p.coeffs().iter().enumerate() {
        nc.add_term(vec![0; k], *c);
    }
    theorem3_error(&nc, sigma, s, t, plan)
}

/// Multidirectional version over k orthonormal directions: independent X_j, Y_j, Z_j per
/// direction and Q = 𝒮_q^{s,t}P re-expressed in the Z-letters.
pub fn theorem3_error(
    p: &NcPoly<f64>,
    sigma: &SigmaSpec,
    s: f64,
    t: f64,
    plan: &McPlan,
) -> Result<ExperimentResult> {
    let k = p.alphabet_size().max(1);
    ensure_cap("number of directions", 2, k)?;
    if let Some(d) = p.degree() {
        ensure_cap("polynomial degree", 4, d)?;
    }
    if !(s > t / 2.0 && t > 0.0) {
        return Err(QsbError::invalid(format!("need s > t/2 > 0, got s = {s}, t = {t}")));
    }
    plan.validate()?;
    let q = sigma.target_q();
    let qhat = sb_multidim(p, &q, &s, &t)?;
    let pc = p.map_coeffs(|c| C64::new(*c, 0.0));
    let qc = qhat.map_coeffs(|c| C64::new(*c, 0.0));
    let mut records = Vec::new();
    for (n, n_samples) in plan.runs() {
        let sampler = HermitianSampler::new(&sigma.at(n)?)?;
        let run_seed = leg_seed(plan.seed, n);
        records.push(monte_carlo(n_samples, run_seed, n, |rng| {
            let x: Vec<Array2<C64>> = (0..k).map(|_| sampler.sample(t, rng)).collect();
            let y: Vec<Array2<C64>> = (0..k).map(|_| sampler.sample(t, rng)).collect();
            let z: Vec<Array2<C64>> = (0..k)
                .map(|_| sampler.sample_elliptic(s - t / 2.0, t / 2.0, rng).map(|m| m.matrix))
                .collect::<Result<_>>()?;
            let qz = MatrixEvaluator::new(&z).eval(&qc);
            let a = shifted_eval(&pc, &z, &x, plan.antithetic) - &qz;
            let b = shifted_eval(&pc, &z, &y, plan.antithetic) - &qz;
            let dim = a.nrows() as f64;
            let tr: C64 = a.iter().zip(b.iter()).map(|(u, v)| u * v.conj()).sum();
            Ok(tr / dim)
        })?);
    }
    Ok(ExperimentResult { records, reference: 0.0, target_q: q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    #[test]
    fn binomial_h1_is_exact() {
        for n in [1usize, 2, 3, 4, 9, 17, 64] {
            let sigma = sigma_binomial(&rat(1, 1), 2, n).unwrap();
            let rep = check_hypotheses(&sigma).unwrap();
            assert_eq!(rep.h1_exact, Some(true), "N = {n}");
            assert!((rep.intersection_law.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_examples() {
        let sigma = sigma_layer(&rat(1, 1), 2, 9).unwrap();
        assert!(matches!(sigma.kind, SigmaKind::Layer { k: 3, .. }));
        assert!((sigma.subset_weight(0b111) - 1.0 / 84.0).abs() < 1e-15);
        assert_eq!(sigma.subset_weight(0b11), 0.0);
        let rep = check_hypotheses(&sigma).unwrap();
        assert_eq!(rep.h1_exact, Some(true));
        assert!((rep.intersection_law.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn target_q_value() {
        assert!((target_q(1.0, 2) - (-0.75f64).exp()).abs() < 1e-15);
        let q256 = q_hat_binomial(&rat(1, 1), 2, 256).to_f64().unwrap();
        assert!((q256 - (-0.75f64).exp()).abs() < 0.01);
    }

    #[test]
    fn range_checks() {
        assert!(sigma_binomial(&rat(3, 1), 2, 4).is_err());
        assert!(sigma_binomial(&rat(1, 1), 1, 4).is_err());
        assert!(sigma_explicit(2, 2, vec![0.5, 0.5]).is_err());
        assert!(sigma_explicit(2, 1, vec![-0.5, 1.5]).is_err());
    }

    #[test]
    fn covariance_entry_examples() {
        let gue = sigma_explicit(2, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(covariance_entry(&gue, &[0], &[1], &[1], &[0]).unwrap(), 0.5);
        assert_eq!(covariance_entry(&gue, &[0], &[0], &[1], &[1]).unwrap(), 0.0);
        let scalar = sigma_explicit(2, 1, vec![1.0, 0.0]).unwrap();
        assert_eq!(covariance_entry(&scalar, &[0], &[0], &[1], &[1]).unwrap(), 1.0);
        let c = 1.0;
        let p = c / 2f64.sqrt();
        let sigma = sigma_binomial(&rat(1, 1), 2, 2).unwrap();
        let v = covariance_entry(&sigma, &[0, 0], &[0, 0], &[0, 0], &[0, 0]).unwrap();
        let expected = p * p / 4.0 + 2.0 * p * (1.0 - p) / 2.0 + (1.0 - p) * (1.0 - p);
        assert!((v - expected).abs() < 1e-14);
    }

    #[test]
    fn samples_are_hermitian_and_deterministic() {
        let sigma = sigma_binomial(&rat(1, 1), 2, 3).unwrap();
        let s = HermitianSampler::new(&sigma).unwrap();
        let a = s.sample(1.0, &mut sample_rng(7, 0));
        let b = s.sample(1.0, &mut sample_rng(7, 0));
        assert_eq!(a, b);
        let ah = a.t().mapv(|v| v.conj());
        assert_eq!(a, ah);
        let layer = HermitianSampler::new(&sigma_layer(&rat(1, 1), 2, 4).unwrap()).unwrap();
        let m = layer.sample(2.0, &mut sample_rng(1, 3));
        assert_eq!(m, m.t().mapv(|v| v.conj()));
        assert!(s.sample_elliptic(0.0, 0.0, &mut sample_rng(0, 0)).is_err());
    }

    #[test]
    fn quad_surd_arithmetic() {
        let x = QuadSurd::over_sqrt(&rat(1, 1), 4);
        assert!(x.pow(2).equals_rational(&rat(1, 4)));
        assert!(x.equals_rational(&rat(1, 2)));
        let y = QuadSurd::over_sqrt(&rat(1, 1), 2);
        assert!(!y.equals_rational(&rat(1, 2)));
        assert!(y.mul(&y).equals_rational(&rat(1, 2)));
    }

    #[test]
    fn linear_and_constant_errors() {
        let sigma = SigmaSpec { kind: FamilyKind::Binomial, c: rat(1, 1), d: 2 };
        let one = Polynomial::constant(1.0);
        let r = theorem2_error(&one, &sigma, 1.0, 1.0, &McPlan::uniform(&[2], 20, 3)).unwrap();
        assert!(r.records[0].estimate.abs() < 1e-12 && r.records[0].stderr < 1e-12);
        let x = Polynomial::monomial(1);
        let r = theorem2_error(&x, &sigma, 1.0, 0.5, &McPlan::uniform(&[2], 400, 3)).unwrap();
        assert!(r.records[0].estimate.abs() < 4.0 * r.records[0].stderr);
    }

    #[test]
    fn one_direction_reduces_to_theorem2() {
        let sigma = SigmaSpec { kind: FamilyKind::Binomial, c: rat(1, 1), d: 2 };
        let p = Polynomial::new(vec![0.5, 0.0, -1.0, 1.0]);
        let a = theorem2_error(&p, &sigma, 1.0, 0.6, &McPlan::uniform(&[2, 3], 30, 11).with_antithetic(true)).unwrap();
        let nc = NcPoly::<f64>::parse("0.5 - x1.x1 + x1.x1.x1").unwrap();
        let b = theorem3_error(&nc, &sigma, 1.0, 0.6, &McPlan::uniform(&[2, 3], 30, 11).with_antithetic(true)).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!((x.estimate, x.stderr), (y.estimate, y.stderr));
        }
    }
}
