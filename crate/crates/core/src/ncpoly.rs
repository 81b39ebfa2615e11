//! Noncommutative polynomials: finite linear combinations of words over an index alphabet.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{QsbError, Result};
use crate::scalar::{Real, Scalar};

pub type Word = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NcPoly<S> {
    terms: BTreeMap<Word, S>,
}

impl<S: Scalar> Default for NcPoly<S> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<S: Scalar> NcPoly<S> {
    pub fn zero() -> Self {
        NcPoly { terms: BTreeMap::new() }
    }

    pub fn one() -> Self {
        Self::constant(S::one())
    }

    pub fn constant(c: S) -> Self {
        Self::term(Vec::new(), c)
    }

    pub fn word(w: Word) -> Self {
        Self::term(w, S::one())
    }

    pub fn letter(i: usize) -> Self {
        Self::word(vec![i])
    }

    pub fn term(w: Word, c: S) -> Self {
        let mut p = Self::zero();
        p.add_term(w, c);
        p
    }

    /// Linear combination `Σ coeffs[i] · letter(i)`.
    pub fn linear(coeffs: &[S]) -> Self {
        let mut p = Self::zero();
        for (i, c) in coeffs.iter().enumerate() {
            p.add_term(vec![i], c.clone());
        }
        p
    }

    pub fn add_term(&mut self, w: Word, c: S) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&w) {
            Some(existing) => {
                let sum = existing.clone() + c;
                if sum.is_zero() {
                    self.terms.remove(&w);
                } else {
                    *existing = sum;
                }
            }
            None => {
                self.terms.insert(w, c);
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &S)> {
        self.terms.iter()
    }

    pub fn coeff(&self, w: &[usize]) -> S {
        self.terms.get(w).cloned().unwrap_or_else(S::zero)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Longest word length, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.terms.keys().map(|w| w.len()).max()
    }

    /// Largest letter index plus one.
    pub fn alphabet_size(&self) -> usize {
        self.terms.keys().flat_map(|w| w.iter().map(|&i| i + 1)).max().unwrap_or(0)
    }

    pub fn scale(&self, c: &S) -> Self {
        let mut out = Self::zero();
        for (w, a) in &self.terms {
            out.add_term(w.clone(), a.clone() * c.clone());
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.add_term(w.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.add_term(w.clone(), -c.clone());
        }
        out
    }

    /// Concatenation product.
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (u, a) in &self.terms {
            for (v, b) in &other.terms {
                let mut w = u.clone();
                w.extend_from_slice(v);
                out.add_term(w, a.clone() * b.clone());
            }
        }
        out
    }

    /// Reverses words and conjugates coefficients (self-adjoint letters).
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero();
        for (w, c) in &self.terms {
            out.add_term(w.iter().rev().copied().collect(), c.conj());
        }
        out
    }

    /// Replaces letter `i` by `images[i]` and expands.
    pub fn substitute(&self, images: &[NcPoly<S>]) -> Self {
        let mut out = Self::zero();
        for (w, c) in &self.terms {
            let mut acc = Self::constant(c.clone());
            for &i in w {
                acc = acc.mul(&images[i]);
            }
            out = out.add(&acc);
        }
        out
    }

    pub fn map_coeffs<T: Scalar>(&self, f: impl Fn(&S) -> T) -> NcPoly<T> {
        let mut out = NcPoly::zero();
        for (w, c) in &self.terms {
            out.add_term(w.clone(), f(c));
        }
        out
    }

    pub fn max_deviation(&self, other: &Self) -> f64 {
        self.sub(other).terms.values().map(|c| c.modulus()).fold(0.0, f64::max)
    }

    /// Every word of length `0..=max_len` over `letters`, in length-then-lexicographic order.
    pub fn all_words(letters: &[usize], max_len: usize) -> Vec<Word> {
        let mut out = vec![Vec::new()];
        let mut layer = vec![Vec::new()];
        for _ in 0..max_len {
            let mut next = Vec::with_capacity(layer.len() * letters.len());
            for w in &layer {
                for &l in letters {
                    let mut v: Word = w.clone();
                    v.push(l);
                    next.push(v);
                }
            }
            out.extend(next.iter().cloned());
            layer = next;
        }
        out
    }
}

impl<S: Real> NcPoly<S> {
    /// Parses the word-sum grammar `2*h1.h2.h1 - 0.5*h2 + 3`: letters are an alphabetic name
    /// followed by a 1-based index, joined by dots; a bare number is a constant term.
    pub fn parse(input: &str) -> Result<Self> {
        let bad = |why: &str| QsbError::parse(input, &format!("noncommutative polynomial ({why})"));
        let compact: String = input.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(bad("empty"));
        }
        let mut pieces: Vec<(bool, String)> = Vec::new();
        let mut current = String::new();
        let mut negative = false;
        let chars: Vec<char> = compact.chars().collect();
        for (idx, &ch) in chars.iter().enumerate() {
            let exponent_sign = idx > 0 && matches!(chars[idx - 1], 'e' | 'E') && idx >= 2 && chars[idx - 2].is_ascii_digit();
            if (ch == '+' || ch == '-') && !exponent_sign {
                if !current.is_empty() {
                    pieces.push((negative, std::mem::take(&mut current)));
                } else if idx > 0 {
                    return Err(bad("dangling sign"));
                }
                negative = ch == '-';
            } else {
                current.push(ch);
            }
        }
        if current.is_empty() {
            return Err(bad("trailing sign"));
        }
        pieces.push((negative, current));
        let mut out = Self::zero();
        for (neg, piece) in pieces {
            let (coef, body) = match piece.split_once('*') {
                Some((c, b)) => (S::parse_decimal(c)?, Some(b)),
                None if piece.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) => (S::one(), Some(piece.as_str())),
                None => (S::parse_decimal(&piece)?, None),
            };
            let word = match body {
                None => Vec::new(),
                Some(b) => b.split('.').map(|tok| parse_letter(tok).ok_or_else(|| bad("bad letter"))).collect::<Result<Vec<_>>>()?,
            };
            out.add_term(word, if neg { -coef } else { coef });
        }
        Ok(out)
    }
}

fn parse_letter(tok: &str) -> Option<usize> {
    let split = tok.find(|c: char| c.is_ascii_digit())?;
    let (name, digits) = tok.split_at(split);
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphabetic()) {
        return None;
    }
    let idx: usize = digits.parse().ok()?;
    idx.checked_sub(1)
}

impl<S: Scalar + fmt::Display> fmt::Display for NcPoly<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (w, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            if w.is_empty() {
                write!(f, "({c})")?;
            } else {
                let letters: Vec<String> = w.iter().map(|i| format!("x{}", i + 1)).collect();
                write!(f, "({c})*{}", letters.join("."))?;
            }
        }
        Ok(())
    }
}
