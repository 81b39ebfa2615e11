//! Dense Gaussian elimination over any [`Scalar`] field.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<S> {
    pub x: Vec<S>,
    /// Rank-deficient system: free variables were set to zero.
    pub degenerate: bool,
    /// Rank-deficient and the right-hand side is not in the range.
    pub inconsistent: bool,
}

/// Solves `a x = b` with partial pivoting by modulus; exact fields detect singularity exactly.
pub fn solve<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Solution<S> {
    let n = b.len();
    let scale = a.iter().flatten().map(|v| v.modulus()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut pivot_cols = Vec::with_capacity(n);
    let mut row = 0;
    for col in 0..n {
        if row == n {
            break;
        }
        let best = (row..n)
            .filter(|&r| !a[r][col].is_negligible(scale))
            .max_by(|&r1, &r2| a[r1][col].modulus().total_cmp(&a[r2][col].modulus()));
        let Some(p) = best else { continue };
        a.swap(row, p);
        b.swap(row, p);
        let pivot = a[row][col].clone();
        for r in row + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone() / pivot.clone();
            for c in col..n {
                let delta = f.clone() * a[row][c].clone();
                a[r][c] = a[r][c].clone() - delta;
            }
            let delta = f * b[row].clone();
            b[r] = b[r].clone() - delta;
        }
        pivot_cols.push(col);
        row += 1;
    }
    let rank = pivot_cols.len();
    let rhs_scale = b.iter().map(|v| v.modulus()).fold(scale, f64::max);
    let inconsistent = (rank..n).any(|r| !b[r].is_negligible(rhs_scale));
    let mut x = vec![S::zero(); n];
    for (r, &col) in pivot_cols.iter().enumerate().rev() {
        let mut acc = b[r].clone();
        for c in col + 1..n {
            if !a[r][c].is_zero() {
                acc = acc - a[r][c].clone() * x[c].clone();
            }
        }
        x[col] = acc / a[r][col].clone();
    }
    Solution { x, degenerate: rank < n, inconsistent }
}
