//! Mixed q-Gaussian variables: the Q-Fock space, truncated creation/annihilation operators,
//! crossing-weighted mixed moments, and the mixture approximation of the q-deformed transform.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use num_traits::Zero;
use rand::distr::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::combinat::for_each_pairing;
use crate::error::{ensure_cap, QsbError, Result};
use crate::ncpoly::{NcPoly, Word};
use crate::poly::Polynomial;
use crate::qfun::hermite_family;
use crate::scalar::{Real, Scalar};
use crate::transform1d::sb_exact_with;
use crate::C64;

pub const MAX_INNER_LEN: usize = 8;
pub const MAX_FOCK_DEGREE: usize = 6;
pub const MAX_ALPHABET: usize = 6;
pub const MAX_MIXED_MOMENT_LEN: usize = 14;
pub const MAX_T4_DEGREE: usize = 4;
pub const MAX_T4_SIZE: usize = 10;
pub const MAX_CLT_ORDER: usize = 8;
pub const MAX_CLT_SIZE: usize = 12;

/// Symmetric matrix Q = (q_ij) with real entries in [−1, 1].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedQSpec<S> {
    q: Vec<Vec<S>>,
}

impl<S: Scalar> MixedQSpec<S> {
    pub fn new(q: Vec<Vec<S>>) -> Result<Self> {
        let n = q.len();
        if n == 0 || q.iter().any(|r| r.len() != n) {
            return Err(QsbError::invalid("Q must be a non-empty square matrix"));
        }
        for i in 0..n {
            for j in 0..n {
                let v = q[i][j].to_c64();
                if v.im != 0.0 || v.re.abs() > 1.0 {
                    return Err(QsbError::invalid(format!("q[{i}][{j}] = {v} is not a real number in [-1, 1]")));
                }
                if q[i][j] != q[j][i] {
                    return Err(QsbError::invalid(format!("Q is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(MixedQSpec { q })
    }

    /// All entries equal to `q`.
    pub fn constant(n: usize, q: S) -> Result<Self> {
        Self::new(vec![vec![q; n]; n])
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.q[i][j]
    }

    pub fn matrix(&self) -> &[Vec<S>] {
        &self.q
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> MixedQSpec<T> {
        MixedQSpec { q: self.q.iter().map(|r| r.iter().map(&f).collect()).collect() }
    }

    /// The leading `n × n` block.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n() {
            return Err(QsbError::invalid(format!("cannot restrict a size-{} spec to {n}", self.n())));
        }
        Ok(MixedQSpec { q: self.q[..n].iter().map(|r| r[..n].to_vec()).collect() })
    }

    /// Q ⊗ J_m with J_m the all-ones m×m matrix; index (i, a) sits at a·n + i.
    pub fn kron_ones(&self, m: usize) -> Self {
        let n = self.n();
        let q = (0..m * n).map(|r| (0..m * n).map(|c| self.q[r % n][c % n].clone()).collect()).collect();
        MixedQSpec { q }
    }
}

/// Q together with Q̃ = Q ⊗ J_2 and R = Q ⊗ J_4.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipticDoubling<S> {
    pub base: MixedQSpec<S>,
    pub doubled: MixedQSpec<S>,
    pub quadrupled: MixedQSpec<S>,
}

impl<S: Scalar> EllipticDoubling<S> {
    pub fn new(base: MixedQSpec<S>) -> Self {
        let doubled = base.kron_ones(2);
        let quadrupled = base.kron_ones(4);
        EllipticDoubling { base, doubled, quadrupled }
    }

    /// Position of e_{(i, a)} (slot a ∈ 0..copies) in the enlarged alphabet.
    pub fn index(&self, i: usize, slot: usize) -> usize {
        slot * self.base.n() + i
    }
}

/// A finitely supported vector of the Q-Fock space; the empty word is the vacuum Ω.
pub type FockVector<S> = NcPoly<S>;

pub fn vacuum<S: Scalar>() -> FockVector<S> {
    NcPoly::one()
}

/// ⟨e_u, e_v⟩_Q = Σ_{π: u = v∘π} Π_{(a,b) ∈ inv(π)} q_{u(a)u(b)}.
pub fn fock_inner<S: Scalar>(u: &[usize], v: &[usize], spec: &MixedQSpec<S>) -> Result<S> {
    ensure_cap("word length", MAX_INNER_LEN, u.len().max(v.len()))?;
    if u.len() != v.len() {
        return Ok(S::zero());
    }
    let mut image = Vec::with_capacity(u.len());
    let mut used = vec![false; v.len()];
    let mut acc = S::zero();
    match_permutations(u, v, spec, &mut image, &mut used, S::one(), &mut acc);
    Ok(acc)
}

fn match_permutations<S: Scalar>(
    u: &[usize],
    v: &[usize],
    spec: &MixedQSpec<S>,
    image: &mut Vec<usize>,
    used: &mut [bool],
    weight: S,
    acc: &mut S,
) {
    let a = image.len();
    if a == u.len() {
        *acc = acc.clone() + weight;
        return;
    }
    for x in 0..v.len() {
        if used[x] || v[x] != u[a] {
            continue;
        }
        let mut w = weight.clone();
        for (b, &pb) in image.iter().enumerate() {
            if pb > x {
                w = w * spec.q[u[b]][u[a]].clone();
            }
        }
        if w.is_zero() {
            continue;
        }
        used[x] = true;
        image.push(x);
        match_permutations(u, v, spec, image, used, w, acc);
        image.pop();
        used[x] = false;
    }
}

/// ⟨u, v⟩_Q extended linearly in `u` and conjugate-linearly in `v`.
pub fn fock_inner_vec<S: Scalar>(u: &FockVector<S>, v: &FockVector<S>, spec: &MixedQSpec<S>) -> Result<S> {
    let mut acc = S::zero();
    for (wu, cu) in u.terms() {
        for (wv, cv) in v.terms() {
            if wu.len() != wv.len() {
                continue;
            }
            acc = acc + cu.clone() * cv.conj() * fock_inner(wu, wv, spec)?;
        }
    }
    Ok(acc)
}

/// c_i v, with words of length ≥ `degree_cap` sent to zero.
pub fn create<S: Scalar>(i: usize, v: &FockVector<S>, degree_cap: usize) -> FockVector<S> {
    let mut out = NcPoly::zero();
    for (w, c) in v.terms() {
        if w.len() < degree_cap {
            let mut nw = Vec::with_capacity(w.len() + 1);
            nw.push(i);
            nw.extend_from_slice(w);
            out.add_term(nw, c.clone());
        }
    }
    out
}

/// c_i^* v: removes each occurrence of i, weighted by q_{i w_1} ⋯ q_{i w_{ℓ−1}}.
pub fn annihilate<S: Scalar>(i: usize, v: &FockVector<S>, spec: &MixedQSpec<S>) -> FockVector<S> {
    let mut out = NcPoly::zero();
    for (w, c) in v.terms() {
        let mut prefix = c.clone();
        for (l, &letter) in w.iter().enumerate() {
            if prefix.is_zero() {
                break;
            }
            if letter == i {
                let mut nw = w.clone();
                nw.remove(l);
                out.add_term(nw, prefix.clone());
            }
            prefix = prefix * spec.q[i][letter].clone();
        }
    }
    out
}

/// X_i v = (c_i + c_i^*) v.
pub fn apply_gaussian<S: Scalar>(i: usize, v: &FockVector<S>, spec: &MixedQSpec<S>, degree_cap: usize) -> FockVector<S> {
    create(i, v, degree_cap).add(&annihilate(i, v, spec))
}

/// Sparse matrix as (row, column, value) triplets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparseMatrix<S> {
    pub dim: usize,
    pub entries: Vec<(usize, usize, S)>,
}

impl<S: Scalar> SparseMatrix<S> {
    pub fn apply(&self, x: &[S]) -> Vec<S> {
        let mut y = vec![S::zero(); self.dim];
        for (r, c, v) in &self.entries {
            y[*r] = y[*r].clone() + v.clone() * x[*c].clone();
        }
        y
    }
}

/// c_i and c_i^* on the basis of words of length ≤ D.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FockOperators<S> {
    pub basis: Vec<Word>,
    pub create: Vec<SparseMatrix<S>>,
    pub annihilate: Vec<SparseMatrix<S>>,
}

impl<S: Scalar> FockOperators<S> {
    pub fn position(&self, w: &[usize]) -> Option<usize> {
        self.basis.binary_search_by(|b| b.len().cmp(&w.len()).then_with(|| b.as_slice().cmp(w))).ok()
    }
}

pub fn operators<S: Scalar>(spec: &MixedQSpec<S>, degree_cap: usize) -> Result<FockOperators<S>> {
    ensure_cap("Fock degree", MAX_FOCK_DEGREE, degree_cap)?;
    ensure_cap("alphabet size", MAX_ALPHABET, spec.n())?;
    let letters: Vec<usize> = (0..spec.n()).collect();
    let basis = NcPoly::<S>::all_words(&letters, degree_cap);
    let mut ops = FockOperators { basis, create: Vec::new(), annihilate: Vec::new() };
    let dim = ops.basis.len();
    for i in 0..spec.n() {
        let mut cr = SparseMatrix { dim, entries: Vec::new() };
        let mut an = SparseMatrix { dim, entries: Vec::new() };
        for (col, w) in ops.basis.iter().enumerate() {
            let e = NcPoly::<S>::word(w.clone());
            for (img, c) in create(i, &e, degree_cap).terms() {
                cr.entries.push((ops.position(img).expect("image lies in the basis"), col, c.clone()));
            }
            for (img, c) in annihilate(i, &e, spec).terms() {
                an.entries.push((ops.position(img).expect("image lies in the basis"), col, c.clone()));
            }
        }
        ops.create.push(cr);
        ops.annihilate.push(an);
    }
    Ok(ops)
}

/// τ[X_{i(1)} ⋯ X_{i(m)}] as a sum over index-matched pairings, weighting each crossing of
/// {a,b} with {c,d} by q_{i(a) i(c)}.
pub fn mixed_moment<S: Scalar>(word: &[usize], spec: &MixedQSpec<S>) -> Result<S> {
    ensure_cap("word length", MAX_MIXED_MOMENT_LEN, word.len())?;
    if word.len() % 2 == 1 {
        return Ok(S::zero());
    }
    let mut acc = S::zero();
    for_each_pairing(
        word.len(),
        |a, b| word[a] == word[b],
        |pairs, _, _| {
            let mut w = S::one();
            for (x, &(a, b)) in pairs.iter().enumerate() {
                for &(c, d) in &pairs[x + 1..] {
                    if crosses((a, b), (c, d)) {
                        w = w * spec.q[word[a]][word[c]].clone();
                    }
                }
            }
            acc = acc.clone() + w;
        },
    )?;
    Ok(acc)
}

fn crosses((a, b): (usize, usize), (c, d): (usize, usize)) -> bool {
    (a < c && c < b && b < d) || (c < a && a < d && d < b)
}

/// ⟨X_{i(1)} ⋯ X_{i(m)} Ω, Ω⟩_Q through the operators.
pub fn vacuum_expectation<S: Scalar>(word: &[usize], spec: &MixedQSpec<S>) -> Result<S> {
    ensure_cap("word length", MAX_MIXED_MOMENT_LEN, word.len())?;
    let mut v = vacuum::<S>();
    for &i in word.iter().rev() {
        v = apply_gaussian(i, &v, spec, word.len());
    }
    Ok(v.coeff(&[]))
}

/// P(X_i) Ω for a one-variable polynomial P.
pub fn polynomial_vacuum_vector<S: Scalar>(p: &Polynomial<S>, i: usize, spec: &MixedQSpec<S>, scale: &S) -> FockVector<S> {
    let deg = p.degree().unwrap_or(0);
    let mut power = vacuum();
    let mut out = NcPoly::zero();
    for k in 0..=deg {
        out = out.add(&power.scale(&p.coeff(k)));
        power = apply_gaussian(i, &power, spec, deg).scale(scale);
    }
    out
}

/// H_n^{q_ii, s}(√s X_i) Ω, with `sqrt_s` supplied by the caller so exact fields stay exact.
pub fn hermite_vacuum_vector<S: Scalar>(i: usize, n: usize, spec: &MixedQSpec<S>, s: &S, sqrt_s: &S) -> FockVector<S> {
    let h = hermite_family(n, spec.get(i, i), s).pop().expect("family is non-empty");
    polynomial_vacuum_vector(&h, i, spec, sqrt_s)
}

/// 𝒮_Q^{s,t} restricted to the direction e_i, i.e. 𝒮_{q_ii}^{s,t}.
pub fn mixed_sb_onedim<S: Scalar>(p: &Polynomial<S>, i: usize, spec: &MixedQSpec<S>, s: &S, t: &S) -> Result<Polynomial<S>> {
    if i >= spec.n() {
        return Err(QsbError::invalid(format!("direction {i} outside an alphabet of size {}", spec.n())));
    }
    Ok(sb_exact_with(p, spec.get(i, i), s, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryMode {
    Pm1,
    ZeroOne,
}

impl FromStr for EntryMode {
    type Err = QsbError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pm1" => Ok(EntryMode::Pm1),
            "zero_one" => Ok(EntryMode::ZeroOne),
            _ => Err(QsbError::parse(s, "pm1 or zero_one")),
        }
    }
}

impl fmt::Display for EntryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryMode::Pm1 => "pm1",
            EntryMode::ZeroOne => "zero_one",
        })
    }
}

/// Random Q with i.i.d. off-diagonal entries of mean `q` (±1 or 0/1 valued) and a fixed diagonal.
pub fn sample_q<R: Real>(n: usize, q: f64, mode: EntryMode, diag_value: R, seed: u64) -> Result<MixedQSpec<R>> {
    let (p_one, low) = match mode {
        EntryMode::Pm1 if (-1.0..=1.0).contains(&q) => ((1.0 + q) / 2.0, -1),
        EntryMode::ZeroOne if (0.0..=1.0).contains(&q) => (q, 0),
        _ => return Err(QsbError::invalid(format!("q = {q} is outside the range of mode {mode}"))),
    };
    let coin = Bernoulli::new(p_one).map_err(|e| QsbError::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = vec![vec![diag_value.clone(); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = R::from_i64(if coin.sample(&mut rng) { 1 } else { low });
            m[i][j] = v.clone();
            m[j][i] = v;
        }
    }
    MixedQSpec::new(m)
}

/// Crossing graph of a pairing listed in left-endpoint order: edges (u, v), u < v.
fn crossing_graph(pairs: &[(usize, usize)]) -> Vec<(u8, u8)> {
    let mut edges = Vec::new();
    for (x, &p) in pairs.iter().enumerate() {
        for (y, &r) in pairs.iter().enumerate().skip(x + 1) {
            if crosses(p, r) {
                edges.push((x as u8, y as u8));
            }
        }
    }
    edges
}

/// F_Q(π) = n^{−|π|} Σ_{colourings c of the pairs by 1..n} Π_{crossing pairs (u,v)} q_{c(u) c(v)},
/// the contribution of one pairing to a moment of the normalised sums; cached per crossing graph.
struct PairingWeights<'a, S> {
    spec: &'a MixedQSpec<S>,
    n: usize,
    cache: HashMap<(usize, Vec<(u8, u8)>), S>,
}

impl<'a, S: Scalar> PairingWeights<'a, S> {
    fn new(spec: &'a MixedQSpec<S>, n: usize) -> Self {
        PairingWeights { spec, n, cache: HashMap::new() }
    }

    fn weight(&mut self, pairs: &[(usize, usize)]) -> S {
        let key = (pairs.len(), crossing_graph(pairs));
        if let Some(v) = self.cache.get(&key) {
            return v.clone();
        }
        let v = self.evaluate(key.0, &key.1);
        self.cache.insert(key, v.clone());
        v
    }

    fn evaluate(&self, p: usize, edges: &[(u8, u8)]) -> S {
        let mut earlier: Vec<Vec<usize>> = vec![Vec::new(); p];
        for &(u, v) in edges {
            earlier[v as usize].push(u as usize);
        }
        // Pairs without crossings contribute a factor n each, cancelling n^{-1}.
        let involved: Vec<usize> = (0..p).filter(|&x| !earlier[x].is_empty() || edges.iter().any(|e| e.0 as usize == x)).collect();
        if involved.is_empty() {
            return S::one();
        }
        let mut colours = vec![0usize; p];
        let total = self.colour_sum(&involved, 0, &earlier, &mut colours, S::one());
        let denom = S::from_i64(self.n as i64).powi(involved.len() as u32);
        total / denom
    }

    fn colour_sum(&self, order: &[usize], k: usize, earlier: &[Vec<usize>], colours: &mut [usize], partial: S) -> S {
        if k == order.len() {
            return partial;
        }
        let x = order[k];
        let mut acc = S::zero();
        for c in 0..self.n {
            let mut w = partial.clone();
            for &u in &earlier[x] {
                w = w * self.spec.q[colours[u]][c].clone();
            }
            if w.is_zero() {
                continue;
            }
            colours[x] = c;
            acc = acc + self.colour_sum(order, k + 1, earlier, colours, w);
        }
        acc
    }
}

/// τ[(X^{(n)})^m] with X^{(n)} = (√s X_1 + ⋯ + √s X_n)/√n.
pub fn clt_moment<S: Scalar>(m: usize, spec: &MixedQSpec<S>, n: usize, s: &S) -> Result<S> {
    ensure_cap("moment order", MAX_CLT_ORDER, m)?;
    ensure_cap("number of summands", MAX_CLT_SIZE, n)?;
    check_size(spec, n)?;
    if m % 2 == 1 {
        return Ok(S::zero());
    }
    let mut weights = PairingWeights::new(spec, n);
    let mut acc = S::zero();
    for_each_pairing(m, |_, _| true, |pairs, _, _| acc = acc.clone() + weights.weight(pairs))?;
    Ok(acc * s.powi((m / 2) as u32))
}

fn check_size<S: Scalar>(spec: &MixedQSpec<S>, n: usize) -> Result<()> {
    if n == 0 || n > spec.n() {
        return Err(QsbError::invalid(format!("n = {n} must lie in 1..={}", spec.n())));
    }
    Ok(())
}

/// Slot layout of the per-index letters: Re Z (variance s − t/2), Im Z (t/2), Y (t), W (t).
const RE_Z: usize = 0;
const IM_Z: usize = 1;
const Y: usize = 2;
const W: usize = 3;

/// ‖𝒮_Q^{s,t}(P(X^{(n)})) − (𝒮_q^{s,t}P)(Z^{(n)})‖², evaluated exactly as
/// τ[(P(Z^{(n)}+Y^{(n)}) − Q̂(Z^{(n)}))^* (P(Z^{(n)}+W^{(n)}) − Q̂(Z^{(n)}))] with Q̂ = 𝒮_q^{s,t}P.
pub fn theorem4_error<R: Real>(p: &Polynomial<R>, spec: &MixedQSpec<R>, q_target: &R, s: &R, t: &R, n: usize) -> Result<R> {
    let value = theorem4_error_complex(p, spec, q_target, s, t, n)?;
    let scale = value.re.abs_val().to_f64().max(1.0);
    if !Complex::new(value.im.clone(), R::zero()).is_negligible(scale) {
        return Err(QsbError::invalid(format!("error has imaginary part {}", value.im.to_f64())));
    }
    Ok(value.re)
}

fn theorem4_error_complex<R: Real>(p: &Polynomial<R>, spec: &MixedQSpec<R>, q_target: &R, s: &R, t: &R, n: usize) -> Result<Complex<R>> {
    let deg = p.degree().unwrap_or(0);
    ensure_cap("polynomial degree", MAX_T4_DEGREE, deg)?;
    ensure_cap("number of summands", MAX_T4_SIZE, n)?;
    check_size(spec, n)?;
    let two = R::from_i64(2);
    if !(s.clone() > t.clone() / two.clone() && t.clone() > R::zero()) {
        return Err(QsbError::invalid("need s > t/2 > 0"));
    }
    let c = |x: &R| Complex::new(x.clone(), R::zero());
    let pc: Polynomial<Complex<R>> = p.map(c);
    let qhat = sb_exact_with(&pc, &c(q_target), &c(s), &c(t));
    let mut z: NcPoly<Complex<R>> = NcPoly::letter(RE_Z);
    z.add_term(vec![IM_Z], Complex::<R>::i());
    let u = z.add(&NcPoly::letter(Y));
    let v = z.add(&NcPoly::letter(W));
    let a = eval_poly(&pc, &u).sub(&eval_poly(&qhat, &z));
    let b = eval_poly(&pc, &v).sub(&eval_poly(&qhat, &z));
    let integrand = a.adjoint().mul(&b);
    let variances = [s.clone() - t.clone() / two.clone(), t.clone() / two, t.clone(), t.clone()];
    let cspec = spec.map(c);
    let mut weights = PairingWeights::new(&cspec, n);
    let mut acc = Complex::<R>::zero();
    for (word, coeff) in integrand.terms() {
        if word.len() % 2 == 1 {
            continue;
        }
        let mut counts = [0usize; 4];
        for &l in word {
            counts[l] += 1;
        }
        if counts.iter().any(|k| k % 2 == 1) {
            continue;
        }
        let mut var = R::one();
        for (slot, &k) in counts.iter().enumerate() {
            var = var * variances[slot].powi((k / 2) as u32);
        }
        let mut sum = Complex::<R>::zero();
        for_each_pairing(word.len(), |x, y| word[x] == word[y], |pairs, _, _| sum = sum.clone() + weights.weight(pairs))?;
        acc = acc + coeff.clone() * sum * c(&var);
    }
    Ok(acc)
}

fn eval_poly<S: Scalar>(p: &Polynomial<S>, x: &NcPoly<S>) -> NcPoly<S> {
    let mut out = NcPoly::zero();
    for k in (0..p.coeffs().len()).rev() {
        out = out.mul(x).add(&NcPoly::constant(p.coeff(k)));
    }
    out
}

/// The same error computed in Fock space: ‖δ_Q^{s,t}(P(X^{(n)})Ω) − Q̂(Z^{(n)})Ω‖² in ℱ_{Q̃}.
pub fn theorem4_error_fock(p: &Polynomial<f64>, spec: &MixedQSpec<f64>, q_target: f64, s: f64, t: f64, n: usize) -> Result<f64> {
    let deg = p.degree().unwrap_or(0);
    ensure_cap("polynomial degree", 3, deg)?;
    ensure_cap("number of summands", 4, n)?;
    check_size(spec, n)?;
    if !(s > t / 2.0 && t > 0.0) {
        return Err(QsbError::invalid("need s > t/2 > 0"));
    }
    let base = spec.truncate(n)?.map(|&x| C64::new(x, 0.0));
    let doubling = EllipticDoubling::new(base.clone());
    let scale = (s / n as f64).sqrt();
    let mut power = vacuum::<C64>();
    let mut x_part = NcPoly::zero();
    for k in 0..=deg {
        x_part = x_part.add(&power.scale(&C64::new(p.coeff(k), 0.0)));
        let mut next = NcPoly::zero();
        for i in 0..n {
            next = next.add(&apply_gaussian(i, &power, &base, deg).scale(&C64::new(scale, 0.0)));
        }
        power = next;
    }
    let re = C64::new((s - t / 2.0).sqrt(), 0.0);
    let im = C64::new(0.0, (t / 2.0).sqrt());
    let mut lifted = NcPoly::zero();
    for (w, c) in x_part.terms() {
        let mut acc = NcPoly::constant(*c / C64::new(s.powi(w.len() as i32).sqrt(), 0.0));
        for &i in w {
            let mut h = NcPoly::zero();
            h.add_term(vec![doubling.index(i, 0)], re);
            h.add_term(vec![doubling.index(i, 1)], im);
            acc = acc.mul(&h);
        }
        lifted = lifted.add(&acc);
    }
    let pc: Polynomial<C64> = p.map(|&x| C64::new(x, 0.0));
    let qhat = sb_exact_with(&pc, &C64::new(q_target, 0.0), &C64::new(s, 0.0), &C64::new(t, 0.0));
    let zscale = C64::new((1.0 / n as f64).sqrt(), 0.0);
    let mut power = vacuum::<C64>();
    let mut z_part = NcPoly::zero();
    for k in 0..=deg {
        z_part = z_part.add(&power.scale(&qhat.coeff(k)));
        let mut next = NcPoly::zero();
        for i in 0..n {
            let a = apply_gaussian(doubling.index(i, 0), &power, &doubling.doubled, deg).scale(&(re * zscale));
            let b = apply_gaussian(doubling.index(i, 1), &power, &doubling.doubled, deg).scale(&(im * zscale));
            next = next.add(&a).add(&b);
        }
        power = next;
    }
    let diff = lifted.sub(&z_part);
    Ok(fock_inner_vec(&diff, &diff, &doubling.doubled)?.re)
}

/// Mean mixed-Q error over several sampled Q for each n.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingRow<R> {
    pub n: usize,
    pub sample: usize,
    pub seed: u64,
    pub error: R,
}

/// Seeds for sample j are `seed + j`.
pub fn mixing_experiment<R: Real>(
    p: &Polynomial<R>,
    q_target: f64,
    mode: EntryMode,
    diag_value: R,
    s: &R,
    t: &R,
    n_list: &[usize],
    samples: usize,
    seed: u64,
) -> Result<Vec<MixingRow<R>>> {
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    ensure_cap("number of summands", MAX_T4_SIZE, n_max)?;
    let q = R::from_f64(q_target);
    let mut rows = Vec::new();
    for j in 0..samples {
        let sample_seed = seed.wrapping_add(j as u64);
        let spec = sample_q(n_max, q_target, mode, diag_value.clone(), sample_seed)?;
        for &n in n_list {
            let error = theorem4_error(p, &spec, &q, s, t, n)?;
            rows.push(MixingRow { n, sample: j, seed: sample_seed, error });
        }
    }
    Ok(rows)
}

/// Averages `rows` per n, in increasing n.
pub fn mean_by_n<R: Real>(rows: &[MixingRow<R>]) -> BTreeMap<usize, R> {
    let mut sums: BTreeMap<usize, (R, i64)> = BTreeMap::new();
    for r in rows {
        let e = sums.entry(r.n).or_insert((R::zero(), 0));
        e.0 = e.0.clone() + r.error.clone();
        e.1 += 1;
    }
    sums.into_iter().map(|(n, (s, k))| (n, s / R::from_i64(k))).collect()
}
