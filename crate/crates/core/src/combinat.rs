//! Pair partitions, Feynman diagrams, permutations and q-integers.
//!
//! Positions are 0-based throughout: a partition of `m` points lives on `{0, .., m-1}`.

use serde::Serialize;

use crate::error::{ensure_cap, QsbError, Result};
use crate::scalar::Scalar;

/// Largest ground set accepted by the enumerators ((15)!! ≈ 2·10⁶ pairings).
pub const MAX_GROUND_SET: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct PairPartition {
    pub m: usize,
    /// Each pair `(a, b)` has `a < b`; pairs are sorted by `a`.
    pub pairs: Vec<(usize, usize)>,
}

impl PairPartition {
    pub fn new(m: usize, mut pairs: Vec<(usize, usize)>) -> Result<Self> {
        for p in pairs.iter_mut() {
            if p.0 > p.1 {
                *p = (p.1, p.0);
            }
        }
        pairs.sort_unstable();
        let mut seen = vec![false; m];
        for &(a, b) in &pairs {
            if a == b || b >= m || seen[a] || seen[b] {
                return Err(QsbError::invalid(format!("pairs {pairs:?} do not partition {m} points")));
            }
            seen[a] = true;
            seen[b] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(QsbError::invalid(format!("pairs {pairs:?} do not cover {m} points")));
        }
        Ok(PairPartition { m, pairs })
    }

    pub fn crossings(&self) -> usize {
        crossing_count(&self.pairs)
    }

    pub fn nestings(&self) -> usize {
        nesting_count(&self.pairs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct FeynmanDiagram {
    pub m: usize,
    pub pairs: Vec<(usize, usize)>,
    /// Increasing; the ordered product over singletons follows this order.
    pub singletons: Vec<usize>,
}

impl FeynmanDiagram {
    pub fn new(m: usize, pairs: Vec<(usize, usize)>, mut singletons: Vec<usize>) -> Result<Self> {
        singletons.sort_unstable();
        let mut pp = pairs.clone();
        for p in pp.iter_mut() {
            if p.0 > p.1 {
                *p = (p.1, p.0);
            }
        }
        pp.sort_unstable();
        let mut seen = vec![false; m];
        let points = pp.iter().flat_map(|&(a, b)| [a, b]).chain(singletons.iter().copied());
        for x in points {
            if x >= m || seen[x] {
                return Err(QsbError::invalid(format!("diagram {pairs:?} + {singletons:?} is not a partition of {m} points")));
            }
            seen[x] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(QsbError::invalid(format!("diagram {pairs:?} + {singletons:?} does not cover {m} points")));
        }
        Ok(FeynmanDiagram { m, pairs: pp, singletons })
    }

    pub fn crossings(&self) -> usize {
        crossing_count(&self.pairs)
    }

    pub fn gaps(&self) -> usize {
        gap_count(self)
    }

    pub fn nestings(&self) -> usize {
        nesting_count(&self.pairs)
    }

    /// Number of pairs, written ♯γ.
    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }
}

/// Pairs `{i,k}`, `{j,l}` with `i < j < k < l`.
pub fn crossing_count(pairs: &[(usize, usize)]) -> usize {
    let mut count = 0;
    for (x, &(a, b)) in pairs.iter().enumerate() {
        for &(c, d) in &pairs[x + 1..] {
            if (a < c && c < b && b < d) || (c < a && a < d && d < b) {
                count += 1;
            }
        }
    }
    count
}

/// Pairs `{i,l}`, `{j,k}` with `i < j < k < l`.
pub fn nesting_count(pairs: &[(usize, usize)]) -> usize {
    let mut count = 0;
    for (x, &(a, b)) in pairs.iter().enumerate() {
        for &(c, d) in &pairs[x + 1..] {
            if (a < c && d < b) || (c < a && b < d) {
                count += 1;
            }
        }
    }
    count
}

/// Triples `i < j < k` with `{i,k}` a pair and `{j}` a singleton.
pub fn gap_count(diagram: &FeynmanDiagram) -> usize {
    diagram
        .pairs
        .iter()
        .map(|&(a, b)| diagram.singletons.iter().filter(|&&s| a < s && s < b).count())
        .sum()
}

/// Calls `visit(pairs, crossings, nestings)` for every pairing of `{0..m-1}` whose pairs all
/// satisfy `allowed(a, b)`; branches with a forbidden pair are pruned.
///
/// Pairings arrive in the canonical "pair the smallest unpaired point" order.
pub fn for_each_pairing<A, V>(m: usize, allowed: A, mut visit: V) -> Result<()>
where
    A: Fn(usize, usize) -> bool,
    V: FnMut(&[(usize, usize)], usize, usize),
{
    ensure_cap("ground set size", MAX_GROUND_SET, m)?;
    if m % 2 == 1 {
        return Ok(());
    }
    let mut pairs = Vec::with_capacity(m / 2);
    walk_pairings(m, 0u32, &allowed, &mut pairs, 0, 0, &mut visit);
    Ok(())
}

fn walk_pairings<A, V>(
    m: usize,
    used: u32,
    allowed: &A,
    pairs: &mut Vec<(usize, usize)>,
    cr: usize,
    nest: usize,
    visit: &mut V,
) where
    A: Fn(usize, usize) -> bool,
    V: FnMut(&[(usize, usize)], usize, usize),
{
    let full = if m == 32 { u32::MAX } else { (1u32 << m) - 1 };
    if used == full {
        visit(pairs, cr, nest);
        return;
    }
    let i = (!used).trailing_zeros() as usize;
    let used_i = used | (1 << i);
    for j in i + 1..m {
        if used_i & (1 << j) != 0 || !allowed(i, j) {
            continue;
        }
        // Every point already used beyond i is the right end of an earlier pair opened before i.
        let between = used_i & ((1u32 << j) - 1) & !((1u32 << (i + 1)) - 1);
        let beyond = used_i & !((1u32 << (j + 1)) - 1) & full;
        pairs.push((i, j));
        walk_pairings(
            m,
            used_i | (1 << j),
            allowed,
            pairs,
            cr + between.count_ones() as usize,
            nest + beyond.count_ones() as usize,
            visit,
        );
        pairs.pop();
    }
}

pub fn enumerate_pair_partitions(m: usize) -> Result<Vec<PairPartition>> {
    let mut out = Vec::new();
    for_each_pairing(m, |_, _| true, |pairs, _, _| out.push(PairPartition { m, pairs: pairs.to_vec() }))?;
    Ok(out)
}

/// Coefficients `c_k = #{π ∈ P₂(m) : cr(π) = k}`; empty for odd `m`.
pub fn crossing_polynomial(m: usize) -> Result<Vec<u64>> {
    let mut coeffs: Vec<u64> = Vec::new();
    for_each_pairing(
        m,
        |_, _| true,
        |_, cr, _| {
            if coeffs.len() <= cr {
                coeffs.resize(cr + 1, 0);
            }
            coeffs[cr] += 1;
        },
    )?;
    Ok(coeffs)
}

/// Σ_{π ∈ P₂(m)} q^{cr(π)}.
pub fn crossing_sum<S: Scalar>(m: usize, q: &S) -> Result<S> {
    let coeffs = crossing_polynomial(m)?;
    let mut acc = S::zero();
    for c in coeffs.iter().rev() {
        acc = acc * q.clone() + S::from_i64(*c as i64);
    }
    Ok(acc)
}

/// Largest ground set for Feynman diagram enumeration.
pub const MAX_DIAGRAM_SIZE: usize = 12;

/// Visits every Feynman diagram on `{0..m-1}` (pairs plus singletons).
pub fn for_each_feynman_diagram<V>(m: usize, mut visit: V) -> Result<()>
where
    V: FnMut(&FeynmanDiagram),
{
    ensure_cap("diagram size", MAX_DIAGRAM_SIZE, m)?;
    let mut diagram = FeynmanDiagram { m, pairs: Vec::new(), singletons: Vec::new() };
    let mut used = vec![false; m];
    walk_diagrams(0, &mut used, &mut diagram, &mut visit);
    Ok(())
}

fn walk_diagrams<V: FnMut(&FeynmanDiagram)>(
    start: usize,
    used: &mut [bool],
    diagram: &mut FeynmanDiagram,
    visit: &mut V,
) {
    let Some(i) = (start..used.len()).find(|&x| !used[x]) else {
        let mut view = diagram.clone();
        view.pairs.sort_unstable();
        view.singletons.sort_unstable();
        visit(&view);
        return;
    };
    used[i] = true;
    diagram.singletons.push(i);
    walk_diagrams(i + 1, used, diagram, visit);
    diagram.singletons.pop();
    for j in i + 1..used.len() {
        if used[j] {
            continue;
        }
        used[j] = true;
        diagram.pairs.push((i, j));
        walk_diagrams(i + 1, used, diagram, visit);
        diagram.pairs.pop();
        used[j] = false;
    }
    used[i] = false;
}

pub fn enumerate_feynman_diagrams(m: usize) -> Result<Vec<FeynmanDiagram>> {
    let mut out = Vec::new();
    for_each_feynman_diagram(m, |d| out.push(d.clone()))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Permutation {
    /// `images[a] = π(a)`, 0-based.
    pub images: Vec<usize>,
}

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; images.len()];
        for &x in &images {
            if x >= images.len() || seen[x] {
                return Err(QsbError::invalid(format!("{images:?} is not a permutation")));
            }
            seen[x] = true;
        }
        Ok(Permutation { images })
    }

    pub fn identity(n: usize) -> Self {
        Permutation { images: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Pairs `a < b` with `π(a) > π(b)`.
    pub fn inversion_set(&self) -> Vec<(usize, usize)> {
        let n = self.images.len();
        let mut out = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if self.images[a] > self.images[b] {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

/// `[n]_q = 1 + q + … + q^{n-1}`.
pub fn q_int<S: Scalar>(n: usize, q: &S) -> S {
    let mut acc = S::zero();
    let mut pow = S::one();
    for _ in 0..n {
        acc = acc + pow.clone();
        pow = pow * q.clone();
    }
    acc
}

/// `[n]_q! = [1]_q ⋯ [n]_q`.
pub fn q_factorial<S: Scalar>(n: usize, q: &S) -> S {
    (1..=n).fold(S::one(), |acc, j| acc * q_int(j, q))
}

/// `(m-1)!!` for even `m`, 0 for odd `m`.
pub fn double_factorial_odd(m: usize) -> u64 {
    if m % 2 == 1 {
        return 0;
    }
    (1..m as u64).step_by(2).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;
    use num_rational::BigRational;

    #[test]
    fn small_counts() {
        assert_eq!(enumerate_pair_partitions(0).unwrap().len(), 1);
        assert_eq!(enumerate_pair_partitions(4).unwrap().len(), 3);
        assert_eq!(enumerate_pair_partitions(6).unwrap().len(), 15);
        assert!(enumerate_pair_partitions(5).unwrap().is_empty());
        assert!(enumerate_pair_partitions(18).is_err());
    }

    #[test]
    fn crossing_examples() {
        assert_eq!(crossing_count(&[(0, 1), (2, 3)]), 0);
        assert_eq!(crossing_count(&[(0, 2), (1, 3)]), 1);
        assert_eq!(crossing_polynomial(6).unwrap(), vec![5, 6, 3, 1]);
    }

    #[test]
    fn walker_statistics_match_direct_counts() {
        for m in [2, 4, 6, 8] {
            for_each_pairing(m, |_, _| true, |pairs, cr, nest| {
                assert_eq!(cr, crossing_count(pairs));
                assert_eq!(nest, nesting_count(pairs));
            })
            .unwrap();
        }
    }

    #[test]
    fn gap_examples() {
        let d = FeynmanDiagram::new(3, vec![(0, 2)], vec![1]).unwrap();
        assert_eq!(gap_count(&d), 1);
        let d = FeynmanDiagram::new(3, vec![(0, 1)], vec![2]).unwrap();
        assert_eq!(gap_count(&d), 0);
        let d = FeynmanDiagram::new(5, vec![(0, 3), (1, 4)], vec![2]).unwrap();
        assert_eq!(gap_count(&d), 2);
    }

    #[test]
    fn inversion_examples() {
        assert!(Permutation::identity(4).inversion_set().is_empty());
        assert_eq!(Permutation::new(vec![1, 0]).unwrap().inversion_set(), vec![(0, 1)]);
        assert_eq!(Permutation::new(vec![2, 0, 1]).unwrap().inversion_set(), vec![(0, 1), (0, 2)]);
        assert!(Permutation::new(vec![0, 0]).is_err());
    }

    #[test]
    fn q_integers() {
        assert_eq!(q_int(3, &rat(1, 2)), rat(7, 4));
        assert_eq!(q_int(0, &rat(1, 2)), rat(0, 1));
        assert_eq!(q_int(5, &BigRational::from_integer(1.into())), rat(5, 1));
        let q = rat(2, 7);
        let expected = (rat(1, 1) + q.clone()) * (rat(1, 1) + q.clone() + q.clone() * q.clone());
        assert_eq!(q_factorial(3, &q), expected);
        assert_eq!(q_factorial(0, &q), rat(1, 1));
    }

    #[test]
    fn validation_rejects_bad_structures() {
        assert!(PairPartition::new(4, vec![(0, 1), (1, 2)]).is_err());
        assert!(PairPartition::new(4, vec![(0, 1)]).is_err());
        assert_eq!(PairPartition::new(4, vec![(3, 1), (2, 0)]).unwrap().pairs, vec![(0, 2), (1, 3)]);
        assert!(FeynmanDiagram::new(3, vec![(0, 1)], vec![]).is_err());
    }
}
