//! Jointly q-Gaussian families: crossing-weighted moments, Wick products, conditional
//! expectations and the multidimensional transform on Wick monomials.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::combinat::{for_each_feynman_diagram, for_each_pairing};
use crate::error::{ensure_cap, QsbError, Result};
use crate::linsolve::solve;
use crate::ncpoly::{NcPoly, Word};
use crate::scalar::{qpow_table, ComplexScalar, Scalar};

pub const MAX_MOMENT_LEN: usize = 16;
pub const MAX_WICK_LEN: usize = 10;
pub const MAX_INNER_LEN: usize = 8;
pub const MAX_CONDEXP_DEGREE: usize = 6;
pub const MAX_SB_DEGREE: usize = 6;

/// q together with the covariance C[i][j] = τ[g_i g_j] of self-adjoint generators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianFamily<S> {
    q: S,
    cov: Vec<Vec<S>>,
}

impl<S: Scalar> GaussianFamily<S> {
    /// Validated family: |q| ≤ 1, C real symmetric positive semidefinite (eigenvalues ≥ −1e−12).
    pub fn new(q: S, cov: Vec<Vec<S>>) -> Result<Self> {
        let fam = Self::symbolic(q, cov)?;
        let qc = fam.q.to_c64();
        if qc.im != 0.0 || qc.re.abs() > 1.0 {
            return Err(QsbError::invalid(format!("q = {qc} must be real in [-1, 1]")));
        }
        if fam.cov.iter().flatten().any(|c| c.to_c64().im != 0.0) {
            return Err(QsbError::invalid("covariance must be real"));
        }
        let dense: Vec<Vec<f64>> = fam.cov.iter().map(|r| r.iter().map(|c| c.to_c64().re).collect()).collect();
        if !is_psd(&dense, 1e-12) {
            return Err(QsbError::invalid("covariance is not positive semidefinite"));
        }
        Ok(fam)
    }

    /// Only checks shape and symmetry; used for formal families such as variance s−t < 0.
    pub fn symbolic(q: S, cov: Vec<Vec<S>>) -> Result<Self> {
        let k = cov.len();
        if cov.iter().any(|r| r.len() != k) {
            return Err(QsbError::invalid("covariance must be square"));
        }
        for i in 0..k {
            for j in 0..i {
                let scale = cov[i][j].modulus().max(cov[j][i].modulus()).max(1.0);
                if !(cov[i][j].clone() - cov[j][i].clone()).is_negligible(scale) {
                    return Err(QsbError::invalid("covariance must be symmetric"));
                }
            }
        }
        Ok(GaussianFamily { q, cov })
    }

    pub fn identity(q: S, k: usize, variance: S) -> Result<Self> {
        Self::new(q, diagonal(&vec![variance; k]))
    }

    pub fn q(&self) -> &S {
        &self.q
    }

    pub fn k(&self) -> usize {
        self.cov.len()
    }

    pub fn cov(&self, i: usize, j: usize) -> &S {
        &self.cov[i][j]
    }

    pub fn covariance(&self) -> &[Vec<S>] {
        &self.cov
    }

    /// τ[a b] = Σ a_i b_j C_ij for letters a, b.
    pub fn letter_cov(&self, a: &Letter<S>, b: &Letter<S>) -> S {
        let mut acc = S::zero();
        for (i, ai) in a.coeffs.iter().enumerate() {
            if ai.is_zero() {
                continue;
            }
            for (j, bj) in b.coeffs.iter().enumerate() {
                if bj.is_zero() || self.cov[i][j].is_zero() {
                    continue;
                }
                acc = acc + ai.clone() * bj.clone() * self.cov[i][j].clone();
            }
        }
        acc
    }

    /// Connected components of the graph with an edge wherever C_ij ≠ 0.
    pub fn components(&self) -> Vec<usize> {
        let k = self.k();
        let mut comp = vec![usize::MAX; k];
        let mut next = 0;
        for start in 0..k {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            comp[start] = next;
            while let Some(i) = stack.pop() {
                for j in 0..k {
                    if comp[j] == usize::MAX && !self.cov[i][j].is_zero() {
                        comp[j] = next;
                        stack.push(j);
                    }
                }
            }
            next += 1;
        }
        comp
    }
}

pub fn diagonal<S: Scalar>(entries: &[S]) -> Vec<Vec<S>> {
    let k = entries.len();
    (0..k).map(|i| (0..k).map(|j| if i == j { entries[i].clone() } else { S::zero() }).collect()).collect()
}

fn is_psd(a: &[Vec<f64>], tol: f64) -> bool {
    let k = a.len();
    let scale = a.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    let shift = tol * scale * k.max(1) as f64;
    let mut l = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let mut sum = a[i][j];
            for p in 0..j {
                sum -= l[i][p] * l[j][p];
            }
            if i == j {
                let d = sum + shift;
                if d < 0.0 {
                    return false;
                }
                l[i][i] = d.sqrt();
            } else if l[j][j] > 0.0 {
                l[i][j] = sum / l[j][j];
            } else if sum.abs() > shift.sqrt() {
                return false;
            }
        }
    }
    true
}

/// A complex-linear combination of the generators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Letter<S> {
    pub coeffs: Vec<S>,
}

impl<S: Scalar> Letter<S> {
    pub fn new(coeffs: Vec<S>) -> Self {
        Letter { coeffs }
    }

    pub fn generator(i: usize, k: usize) -> Self {
        let mut coeffs = vec![S::zero(); k];
        coeffs[i] = S::one();
        Letter { coeffs }
    }

    pub fn adjoint(&self) -> Self {
        Letter { coeffs: self.coeffs.iter().map(|c| c.conj()).collect() }
    }

    pub fn to_poly(&self) -> NcPoly<S> {
        NcPoly::linear(&self.coeffs)
    }
}

pub fn generator_letters<S: Scalar>(word: &[usize], k: usize) -> Vec<Letter<S>> {
    word.iter().map(|&i| Letter::generator(i, k)).collect()
}

fn pairing_sum<S: Scalar>(kappa: &[Vec<S>], qpows: &[S]) -> Result<S> {
    let m = kappa.len();
    ensure_cap("word length", MAX_MOMENT_LEN, m)?;
    let mut acc = S::zero();
    for_each_pairing(
        m,
        |a, b| !kappa[a][b].is_zero(),
        |pairs, cr, _| {
            let mut term = qpows[cr].clone();
            for &(a, b) in pairs {
                term = term * kappa[a][b].clone();
            }
            acc = acc.clone() + term;
        },
    )?;
    Ok(acc)
}

fn max_crossings(m: usize) -> usize {
    let p = m / 2;
    p * p.saturating_sub(1) / 2
}

/// τ[L_1 ⋯ L_m] = Σ_π q^{cr(π)} Π_{{a,b}∈π} τ[L_a L_b].
pub fn joint_moment<S: Scalar>(word: &[Letter<S>], fam: &GaussianFamily<S>) -> Result<S> {
    ensure_cap("word length", MAX_MOMENT_LEN, word.len())?;
    if word.len() % 2 == 1 {
        return Ok(S::zero());
    }
    let kappa: Vec<Vec<S>> = word.iter().map(|a| word.iter().map(|b| fam.letter_cov(a, b)).collect()).collect();
    pairing_sum(&kappa, &qpow_table(&fam.q, max_crossings(word.len())))
}

/// τ of a word over generator indices.
pub fn moment_of_word<S: Scalar>(word: &[usize], fam: &GaussianFamily<S>) -> Result<S> {
    ensure_cap("word length", MAX_MOMENT_LEN, word.len())?;
    if word.len() % 2 == 1 {
        return Ok(S::zero());
    }
    let kappa: Vec<Vec<S>> = word.iter().map(|&a| word.iter().map(|&b| fam.cov[a][b].clone()).collect()).collect();
    pairing_sum(&kappa, &qpow_table(&fam.q, max_crossings(word.len())))
}

/// τ extended linearly to polynomials over generator indices.
pub fn tau<S: Scalar>(p: &NcPoly<S>, fam: &GaussianFamily<S>) -> Result<S> {
    let mut acc = S::zero();
    for (w, c) in p.terms() {
        acc = acc + c.clone() * moment_of_word(w, fam)?;
    }
    Ok(acc)
}

/// X_1 ⋄ ⋯ ⋄ X_n by the recursion X_1·W(X_2..X_n) − Σ_{i≥2} q^{i−2} τ[X_1X_i] W(X_2,…,X̂_i,…,X_n).
pub fn wick_recursive<S: Scalar>(word: &[Letter<S>], fam: &GaussianFamily<S>) -> Result<NcPoly<S>> {
    ensure_cap("word length", MAX_WICK_LEN, word.len())?;
    let polys: Vec<NcPoly<S>> = word.iter().map(Letter::to_poly).collect();
    let kappa: Vec<Vec<S>> = word.iter().map(|a| word.iter().map(|b| fam.letter_cov(a, b)).collect()).collect();
    let qpows = qpow_table(&fam.q, word.len());
    let mut memo: HashMap<Vec<usize>, NcPoly<S>> = HashMap::new();
    let positions: Vec<usize> = (0..word.len()).collect();
    Ok(wick_rec(&positions, &polys, &kappa, &qpows, &mut memo))
}

fn wick_rec<S: Scalar>(
    positions: &[usize],
    polys: &[NcPoly<S>],
    kappa: &[Vec<S>],
    qpows: &[S],
    memo: &mut HashMap<Vec<usize>, NcPoly<S>>,
) -> NcPoly<S> {
    if positions.is_empty() {
        return NcPoly::one();
    }
    if let Some(v) = memo.get(positions) {
        return v.clone();
    }
    let first = positions[0];
    let rest = &positions[1..];
    let mut out = polys[first].mul(&wick_rec(rest, polys, kappa, qpows, memo));
    for (offset, &pi) in rest.iter().enumerate() {
        let c = &kappa[first][pi];
        if c.is_zero() {
            continue;
        }
        let reduced: Vec<usize> = rest.iter().copied().filter(|&x| x != pi).collect();
        let sub = wick_rec(&reduced, polys, kappa, qpows, memo);
        out = out.sub(&sub.scale(&(qpows[offset].clone() * c.clone())));
    }
    memo.insert(positions.to_vec(), out.clone());
    out
}

/// X_1 ⋄ ⋯ ⋄ X_n as a sum over Feynman diagrams γ of
/// (−1)^{♯γ} q^{gap(γ) + cr(γ) + 2·nest(γ)} Π τ[X_aX_b] · Π_{singletons} X_j,
/// where gap counts singletons under arcs and nest counts nested pairs of pairs.
pub fn wick_closed<S: Scalar>(word: &[Letter<S>], fam: &GaussianFamily<S>) -> Result<NcPoly<S>> {
    ensure_cap("word length", MAX_WICK_LEN, word.len())?;
    let n = word.len();
    let polys: Vec<NcPoly<S>> = word.iter().map(Letter::to_poly).collect();
    let kappa: Vec<Vec<S>> = word.iter().map(|a| word.iter().map(|b| fam.letter_cov(a, b)).collect()).collect();
    let qpows = qpow_table(&fam.q, n * n);
    let mut out = NcPoly::zero();
    for_each_feynman_diagram(n, |d| {
        let mut c = qpows[d.gaps() + d.crossings() + 2 * d.nestings()].clone();
        for &(a, b) in &d.pairs {
            c = c * kappa[a][b].clone();
        }
        if c.is_zero() {
            return;
        }
        if d.pairs.len() % 2 == 1 {
            c = -c;
        }
        let mut prod = NcPoly::constant(c);
        for &j in &d.singletons {
            prod = prod.mul(&polys[j]);
        }
        out = out.add(&prod);
    })?;
    Ok(out)
}

/// Wick product of a word of generators.
pub fn wick_word<S: Scalar>(word: &[usize], fam: &GaussianFamily<S>) -> Result<NcPoly<S>> {
    wick_recursive(&generator_letters(word, fam.k()), fam)
}

/// ⟨X_1⋄⋯⋄X_n, Y_1⋄⋯⋄Y_m⟩ = τ[(X_1⋄⋯⋄X_n)(Y_1⋄⋯⋄Y_m)^*]: the crossing-weighted sum over
/// pairings of `u ++ reverse(v^*)` in which every pair joins the two blocks.
pub fn wick_inner<S: Scalar>(u: &[Letter<S>], v: &[Letter<S>], fam: &GaussianFamily<S>) -> Result<S> {
    ensure_cap("left word length", MAX_INNER_LEN, u.len())?;
    ensure_cap("right word length", MAX_INNER_LEN, v.len())?;
    if u.len() != v.len() {
        return Ok(S::zero());
    }
    let n = u.len();
    let seq: Vec<Letter<S>> = u.iter().cloned().chain(v.iter().rev().map(Letter::adjoint)).collect();
    let kappa: Vec<Vec<S>> = (0..2 * n)
        .map(|a| {
            (0..2 * n)
                .map(|b| if (a < n) != (b < n) { fam.letter_cov(&seq[a], &seq[b]) } else { S::zero() })
                .collect()
        })
        .collect();
    pairing_sum(&kappa, &qpow_table(&fam.q, max_crossings(2 * n)))
}

/// Coefficients c_w with p = Σ c_w (g_{w_1} ⋄ ⋯ ⋄ g_{w_n}).
pub fn to_wick_basis<S: Scalar>(p: &NcPoly<S>, fam: &GaussianFamily<S>) -> Result<BTreeMap<Word, S>> {
    let mut rest = p.clone();
    let mut out = BTreeMap::new();
    let mut cache: HashMap<Word, NcPoly<S>> = HashMap::new();
    while let Some(deg) = rest.degree() {
        let (w, c) = rest
            .terms()
            .filter(|(w, _)| w.len() == deg)
            .map(|(w, c)| (w.clone(), c.clone()))
            .next()
            .expect("a word of top degree exists");
        if !cache.contains_key(&w) {
            cache.insert(w.clone(), wick_word(&w, fam)?);
        }
        rest = rest.sub(&cache[&w].scale(&c));
        out.insert(w, c);
    }
    Ok(out)
}

/// Σ c_w (g_{w_1} ⋄ ⋯ ⋄ g_{w_n}) expanded into ordinary monomials.
pub fn from_wick_basis<S: Scalar>(coeffs: &BTreeMap<Word, S>, fam: &GaussianFamily<S>) -> Result<NcPoly<S>> {
    let mut out = NcPoly::zero();
    for (w, c) in coeffs {
        out = out.add(&wick_word(w, fam)?.scale(c));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CondExp<S> {
    pub value: NcPoly<S>,
    /// The Gram matrix of some block was singular; free coefficients were set to zero.
    pub degenerate: bool,
}

struct Block<S> {
    basis: Vec<Word>,
    gram: Option<Vec<Vec<S>>>,
}

/// Orthogonal projection onto polynomials of bounded degree in a subset of generators, under
/// ⟨A, B⟩ = τ[A B^*]. Blocks of the Gram matrix are indexed by the parity of each covariance
/// component, since τ of a word vanishes unless every component occurs an even number of times.
pub struct Projector<'a, S> {
    fam: &'a GaussianFamily<S>,
    cap: usize,
    components: Vec<usize>,
    n_components: usize,
    blocks: HashMap<Vec<bool>, Block<S>>,
    moments: HashMap<Word, S>,
}

impl<'a, S: Scalar> Projector<'a, S> {
    pub fn new(fam: &'a GaussianFamily<S>, sub: &[usize], cap: usize) -> Result<Self> {
        ensure_cap("degree cap", MAX_CONDEXP_DEGREE, cap)?;
        if let Some(&bad) = sub.iter().find(|&&i| i >= fam.k()) {
            return Err(QsbError::invalid(format!("generator {bad} not in a family of size {}", fam.k())));
        }
        let components = fam.components();
        let n_components = components.iter().copied().max().map_or(0, |m| m + 1);
        let mut proj = Projector { fam, cap, components, n_components, blocks: HashMap::new(), moments: HashMap::new() };
        let mut letters = sub.to_vec();
        letters.sort_unstable();
        letters.dedup();
        for w in NcPoly::<S>::all_words(&letters, cap) {
            let sig = proj.signature(&w);
            proj.blocks.entry(sig).or_insert_with(|| Block { basis: Vec::new(), gram: None }).basis.push(w);
        }
        Ok(proj)
    }

    fn signature(&self, w: &[usize]) -> Vec<bool> {
        let mut sig = vec![false; self.n_components];
        for &i in w {
            sig[self.components[i]] ^= true;
        }
        sig
    }

    fn moment(&mut self, w: Word) -> Result<S> {
        if let Some(v) = self.moments.get(&w) {
            return Ok(v.clone());
        }
        let v = moment_of_word(&w, self.fam)?;
        self.moments.insert(w, v.clone());
        Ok(v)
    }

    /// τ[u · reverse(v)], i.e. ⟨u, v⟩ for generator words.
    fn word_inner(&mut self, u: &[usize], v: &[usize]) -> Result<S> {
        let mut w = u.to_vec();
        w.extend(v.iter().rev());
        self.moment(w)
    }

    /// ⟨a, b⟩ = τ[a b^*].
    pub fn inner(&mut self, a: &NcPoly<S>, b: &NcPoly<S>) -> Result<S> {
        let mut acc = S::zero();
        for (u, cu) in a.terms() {
            for (v, cv) in b.terms() {
                if self.signature(u) != self.signature(v) {
                    continue;
                }
                acc = acc + cu.clone() * cv.conj() * self.word_inner(u, v)?;
            }
        }
        Ok(acc)
    }

    pub fn project(&mut self, elem: &NcPoly<S>) -> Result<CondExp<S>> {
        if let Some(d) = elem.degree() {
            if d > self.cap {
                return Err(QsbError::cap("element degree", self.cap, d));
            }
        }
        if let Some(bad) = elem.alphabet_size().checked_sub(1).filter(|&m| m >= self.fam.k()) {
            return Err(QsbError::invalid(format!("generator {bad} not in the family")));
        }
        let mut by_sig: HashMap<Vec<bool>, Vec<(Word, S)>> = HashMap::new();
        for (w, c) in elem.terms() {
            by_sig.entry(self.signature(w)).or_default().push((w.clone(), c.clone()));
        }
        let mut value = NcPoly::zero();
        let mut degenerate = false;
        let mut sigs: Vec<Vec<bool>> = by_sig.keys().cloned().collect();
        sigs.sort();
        for sig in sigs {
            let Some(block) = self.blocks.get(&sig) else { continue };
            let basis = block.basis.clone();
            let terms = &by_sig[&sig];
            let mut rhs = Vec::with_capacity(basis.len());
            let mut all_zero = true;
            for m in &basis {
                let mut acc = S::zero();
                for (w, c) in terms {
                    acc = acc + c.clone() * self.word_inner(w, m)?;
                }
                all_zero &= acc.is_zero();
                rhs.push(acc);
            }
            if all_zero {
                continue;
            }
            let gram = self.gram(&sig)?;
            let sol = solve(gram, rhs);
            degenerate |= sol.degenerate;
            for (m, c) in basis.into_iter().zip(sol.x) {
                value.add_term(m, c);
            }
        }
        Ok(CondExp { value, degenerate })
    }

    fn gram(&mut self, sig: &[bool]) -> Result<Vec<Vec<S>>> {
        if let Some(g) = self.blocks.get(sig).and_then(|b| b.gram.clone()) {
            return Ok(g);
        }
        let basis = self.blocks[sig].basis.clone();
        let n = basis.len();
        let mut g = vec![vec![S::zero(); n]; n];
        for i in 0..n {
            for j in 0..=i {
                // G[i][j] = ⟨m_j, m_i⟩; real and symmetric for generator words.
                let v = self.word_inner(&basis[j], &basis[i])?;
                g[i][j] = v.clone();
                g[j][i] = v;
            }
        }
        if let Some(b) = self.blocks.get_mut(sig) {
            b.gram = Some(g.clone());
        }
        Ok(g)
    }
}

/// τ[elem | sub] as the orthogonal projection onto degree-≤cap polynomials in `sub`.
pub fn conditional_expectation<S: Scalar>(
    elem: &NcPoly<S>,
    sub: &[usize],
    fam: &GaussianFamily<S>,
    degree_cap: usize,
) -> Result<CondExp<S>> {
    Projector::new(fam, sub, degree_cap)?.project(elem)
}

/// 𝒮_q^{s,t} on polynomials in letters x_{h_1}, …, x_{h_k} for orthonormal h's: expand in the
/// Wick basis of covariance s·I and re-expand the same Wick words with covariance (s−t)·I.
pub fn sb_multidim<S: Scalar>(p: &NcPoly<S>, q: &S, s: &S, t: &S) -> Result<NcPoly<S>> {
    if let Some(d) = p.degree() {
        ensure_cap("polynomial degree", MAX_SB_DEGREE, d)?;
    }
    let k = p.alphabet_size().max(1);
    let fam_x = GaussianFamily::symbolic(q.clone(), diagonal(&vec![s.clone(); k]))?;
    let fam_z = GaussianFamily::symbolic(q.clone(), diagonal(&vec![s.clone() - t.clone(); k]))?;
    from_wick_basis(&to_wick_basis(p, &fam_x)?, &fam_z)
}

/// [`sb_multidim`] for letters attached to explicit direction vectors, which must be orthonormal.
pub fn sb_multidim_directions<S: Scalar>(p: &NcPoly<S>, directions: &[Vec<S>], q: &S, s: &S, t: &S) -> Result<NcPoly<S>> {
    if p.alphabet_size() > directions.len() {
        return Err(QsbError::invalid("polynomial uses more letters than directions"));
    }
    for (i, h) in directions.iter().enumerate() {
        for (j, g) in directions.iter().enumerate() {
            let dot = h.iter().zip(g).fold(S::zero(), |acc, (a, b)| acc + a.clone() * b.conj());
            let target = if i == j { S::one() } else { S::zero() };
            if !(dot - target).is_negligible(1.0) {
                return Err(QsbError::invalid(format!("directions {i} and {j} are not orthonormal")));
            }
        }
    }
    sb_multidim(p, q, s, t)
}

/// Generator layout for k directions: Y_j (variance t), Re Z_j (s − t/2), Im Z_j (t/2), all
/// mutually q-independent (diagonal covariance).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EllipticLayout {
    pub k: usize,
}

impl EllipticLayout {
    pub fn y(&self, j: usize) -> usize {
        3 * j
    }
    pub fn re(&self, j: usize) -> usize {
        3 * j + 1
    }
    pub fn im(&self, j: usize) -> usize {
        3 * j + 2
    }
    pub fn n_generators(&self) -> usize {
        3 * self.k
    }

    pub fn family<S: ComplexScalar>(&self, q: &S, s: &S, t: &S) -> Result<GaussianFamily<S>> {
        let two = S::from_i64(2);
        let mut d = Vec::with_capacity(self.n_generators());
        for _ in 0..self.k {
            d.push(t.clone());
            d.push(s.clone() - t.clone() / two.clone());
            d.push(t.clone() / two.clone());
        }
        GaussianFamily::new(q.clone(), diagonal(&d))
    }

    /// Z_j = Re Z_j + i Im Z_j.
    pub fn z<S: ComplexScalar>(&self, j: usize) -> NcPoly<S> {
        let mut p = NcPoly::letter(self.re(j));
        p.add_term(vec![self.im(j)], S::i());
        p
    }

    /// Y_j + Z_j.
    pub fn y_plus_z<S: ComplexScalar>(&self, j: usize) -> NcPoly<S> {
        self.z(j).add(&NcPoly::letter(self.y(j)))
    }

    pub fn z_generators(&self) -> Vec<usize> {
        (0..self.k).flat_map(|j| [self.re(j), self.im(j)]).collect()
    }
}

/// Compares 𝒮_q^{s,t}P (re-expressed in Z-letters) with τ[P(Y+Z) | Z] for many P at once.
pub struct HeatKernelChecker<'a, S> {
    layout: EllipticLayout,
    q: S,
    s: S,
    t: S,
    projector: Projector<'a, S>,
}

impl<'a, S: ComplexScalar> HeatKernelChecker<'a, S> {
    pub fn new(fam: &'a GaussianFamily<S>, layout: EllipticLayout, q: S, s: S, t: S, degree_cap: usize) -> Result<Self> {
        let projector = Projector::new(fam, &layout.z_generators(), degree_cap)?;
        Ok(HeatKernelChecker { layout, q, s, t, projector })
    }

    /// Both sides as polynomials over the family generators: (conditional expectation, transform).
    pub fn sides(&mut self, p: &NcPoly<S>) -> Result<(CondExp<S>, NcPoly<S>)> {
        if p.alphabet_size() > self.layout.k {
            return Err(QsbError::invalid("polynomial has more letters than directions"));
        }
        let yz: Vec<NcPoly<S>> = (0..self.layout.k).map(|j| self.layout.y_plus_z(j)).collect();
        let zs: Vec<NcPoly<S>> = (0..self.layout.k).map(|j| self.layout.z(j)).collect();
        let lhs = self.projector.project(&p.substitute(&yz))?;
        let rhs = sb_multidim(p, &self.q, &self.s, &self.t)?.substitute(&zs);
        Ok((lhs, rhs))
    }

    pub fn deviation(&mut self, p: &NcPoly<S>) -> Result<f64> {
        let (lhs, rhs) = self.sides(p)?;
        Ok(lhs.value.max_deviation(&rhs))
    }
}

/// Max coefficient deviation between 𝒮_q^{s,t}(P) and τ[P(Y+Z) | Z].
pub fn verify_heat_kernel_identity<S: ComplexScalar>(p: &NcPoly<S>, q: &S, s: &S, t: &S, degree_cap: usize) -> Result<f64> {
    if degree_cap > 5 {
        return Err(QsbError::cap("degree cap", 5, degree_cap));
    }
    if let Some(d) = p.degree() {
        ensure_cap("polynomial degree", degree_cap, d)?;
    }
    let layout = EllipticLayout { k: p.alphabet_size().max(1) };
    let fam = layout.family(q, s, t)?;
    let mut checker = HeatKernelChecker::new(&fam, layout, q.clone(), s.clone(), t.clone(), degree_cap)?;
    checker.deviation(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{crat, rat};
    use crate::{ComplexRational, Rational};

    fn fam1(q: Rational, s: Rational) -> GaussianFamily<Rational> {
        GaussianFamily::new(q, vec![vec![s]]).unwrap()
    }

    fn c(re: Rational) -> ComplexRational {
        crat(re, rat(0, 1))
    }

    #[test]
    fn moment_examples() {
        let q = rat(1, 3);
        let f = fam1(q.clone(), rat(1, 1));
        assert_eq!(moment_of_word(&[0, 0], &f).unwrap(), rat(1, 1));
        assert_eq!(moment_of_word(&[0, 0, 0, 0], &f).unwrap(), rat(2, 1) + q.clone());
        let f2 = GaussianFamily::identity(q.clone(), 2, rat(1, 1)).unwrap();
        assert_eq!(moment_of_word(&[0, 1, 0, 1], &f2).unwrap(), q);
        assert_eq!(moment_of_word(&[0, 1, 0], &f2).unwrap(), rat(0, 1));
        assert!(moment_of_word(&[0; 18], &f2).is_err());
    }

    #[test]
    fn family_validation() {
        assert!(GaussianFamily::new(rat(1, 2), vec![vec![rat(1, 1), rat(2, 1)], vec![rat(2, 1), rat(1, 1)]]).is_err());
        assert!(GaussianFamily::new(rat(1, 2), vec![vec![rat(1, 1), rat(1, 2)], vec![rat(1, 3), rat(1, 1)]]).is_err());
        assert!(GaussianFamily::new(rat(3, 2), vec![vec![rat(1, 1)]]).is_err());
        assert!(GaussianFamily::new(rat(1, 2), vec![vec![rat(-1, 1)]]).is_err());
        assert!(GaussianFamily::symbolic(rat(1, 2), vec![vec![rat(-1, 1)]]).is_ok());
        assert!(GaussianFamily::new(rat(1, 2), vec![vec![rat(1, 1), rat(1, 1)], vec![rat(1, 1), rat(1, 1)]]).is_ok());
    }

    #[test]
    fn wick_small_cases() {
        let q = rat(2, 5);
        let s = rat(3, 2);
        let f = fam1(q.clone(), s.clone());
        let w2 = wick_word(&[0, 0], &f).unwrap();
        assert_eq!(w2, NcPoly::word(vec![0, 0]).sub(&NcPoly::constant(s.clone())));
        let w3 = wick_closed(&generator_letters(&[0, 0, 0], 1), &f).unwrap();
        let expected = NcPoly::word(vec![0, 0, 0]).sub(&NcPoly::term(vec![0], (rat(2, 1) + q.clone()) * s.clone()));
        assert_eq!(w3, expected);
        let x = NcPoly::word(vec![0]);
        assert_eq!(wick_closed(&generator_letters(&[0], 1), &f).unwrap(), x);
    }

    #[test]
    fn wick_inner_examples() {
        let q = rat(1, 4);
        let t = rat(2, 1);
        let f = fam1(q.clone(), t.clone());
        let gg = generator_letters(&[0, 0], 1);
        assert_eq!(wick_inner(&gg, &gg, &f).unwrap(), (rat(1, 1) + q.clone()) * t.clone() * t.clone());
        assert_eq!(wick_inner(&gg, &generator_letters(&[0], 1), &f).unwrap(), rat(0, 1));
        let f2 = GaussianFamily::identity(q.clone(), 2, rat(1, 1)).unwrap();
        let u = generator_letters(&[0, 1], 2);
        let v = generator_letters(&[1, 0], 2);
        assert_eq!(wick_inner(&u, &v, &f2).unwrap(), q);
    }

    #[test]
    fn conditional_expectation_examples() {
        let q = rat(1, 2);
        let f = GaussianFamily::identity(q.clone(), 2, rat(1, 1)).unwrap();
        let w = wick_word(&[0, 1], &f).unwrap();
        let e = conditional_expectation(&w, &[1], &f, 2).unwrap();
        assert!(e.value.is_zero() && !e.degenerate);
        let inside = wick_word(&[1, 1], &f).unwrap();
        assert_eq!(conditional_expectation(&inside, &[1], &f, 2).unwrap().value, inside);
        // (Y+Z)² with τ[Y²] = t, Y ⟂ Z: projects to Z² + t.
        let t = rat(3, 5);
        let fy = GaussianFamily::new(q, diagonal(&[t.clone(), rat(1, 1)])).unwrap();
        let yz = NcPoly::letter(0).add(&NcPoly::letter(1));
        let e = conditional_expectation(&yz.mul(&yz), &[1], &fy, 2).unwrap();
        assert_eq!(e.value, NcPoly::word(vec![1, 1]).add(&NcPoly::constant(t)));
    }

    #[test]
    fn degenerate_covariance_is_flagged() {
        let f = GaussianFamily::new(rat(0, 1), vec![vec![rat(1, 1), rat(1, 1)], vec![rat(1, 1), rat(1, 1)]]).unwrap();
        let e = conditional_expectation(&NcPoly::letter(0), &[0, 1], &f, 1).unwrap();
        assert!(e.degenerate);
        let back = tau(&e.value.mul(&NcPoly::letter(0)), &f).unwrap();
        assert_eq!(back, rat(1, 1));
    }

    #[test]
    fn sb_multidim_examples() {
        let q = rat(3, 10);
        let s = rat(1, 1);
        let t = rat(7, 10);
        let x2 = NcPoly::word(vec![0, 0]);
        let expected = NcPoly::word(vec![0, 0]).add(&NcPoly::constant(t.clone()));
        assert_eq!(sb_multidim(&x2, &q, &s, &t).unwrap(), expected);
        let x12 = NcPoly::word(vec![0, 1]);
        assert_eq!(sb_multidim(&x12, &q, &s, &t).unwrap(), x12);
        assert_eq!(sb_multidim(&NcPoly::one(), &q, &s, &t).unwrap(), NcPoly::one());
        let dirs = vec![vec![rat(1, 1), rat(0, 1)], vec![rat(1, 1), rat(1, 1)]];
        assert!(sb_multidim_directions(&x12, &dirs, &q, &s, &t).is_err());
        let dirs = vec![vec![rat(3, 5), rat(4, 5)], vec![rat(-4, 5), rat(3, 5)]];
        assert_eq!(sb_multidim_directions(&x12, &dirs, &q, &s, &t).unwrap(), x12);
    }

    #[test]
    fn heat_kernel_examples() {
        let x = NcPoly::letter(0);
        assert_eq!(verify_heat_kernel_identity(&x, &c(rat(1, 2)), &c(rat(1, 1)), &c(rat(7, 10)), 1).unwrap(), 0.0);
        let x3 = NcPoly::word(vec![0, 0, 0]);
        assert_eq!(verify_heat_kernel_identity(&x3, &c(rat(1, 2)), &c(rat(1, 1)), &c(rat(7, 10)), 3).unwrap(), 0.0);
        let x121 = NcPoly::word(vec![0, 1, 0]);
        assert_eq!(verify_heat_kernel_identity(&x121, &c(rat(3, 10)), &c(rat(1, 1)), &c(rat(3, 5)), 3).unwrap(), 0.0);
    }
}
