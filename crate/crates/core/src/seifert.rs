//! Seifert matrices of braid closures and exact signatures.
//!
//! The canonical Seifert surface of a closed braid has one disc per strand
//! and one half-twisted band per letter. A basis of its first homology is
//! given by the loops running through two consecutive bands of the same
//! column `σ_k`.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Signed, Zero};

use crate::braid::BraidWord;

/// Loop through the bands at word positions `start < end` on column `col`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct BandLoop {
    col: usize,
    start: usize,
    end: usize,
    start_sign: i8,
    end_sign: i8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeifertMatrix {
    size: usize,
    entries: Vec<i64>,
}

impl SeifertMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.size + j]
    }

    fn add(&mut self, i: usize, j: usize, v: i64) {
        self.entries[i * self.size + j] += v;
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        self.entries
            .chunks(self.size.max(1))
            .take(self.size)
            .map(|r| r.to_vec())
            .collect()
    }

    /// `V + Vᵀ`, row-major.
    pub fn symmetrized(&self) -> Vec<i64> {
        let n = self.size;
        let mut s = vec![0; n * n];
        for i in 0..n {
            for j in 0..n {
                s[i * n + j] = self.get(i, j) + self.get(j, i);
            }
        }
        s
    }

    /// Signature of `V + Vᵀ`, computed exactly.
    pub fn signature(&self) -> i64 {
        symmetric_signature(self.size, &self.symmetrized())
    }
}

fn band_loops(word: &BraidWord) -> Vec<BandLoop> {
    let mut last: Vec<Option<(usize, i8)>> = vec![None; word.strands()];
    let mut loops = Vec::new();
    for (idx, l) in word.letters().iter().enumerate() {
        if let Some((start, start_sign)) = last[l.pos] {
            loops.push(BandLoop {
                col: l.pos,
                start,
                end: idx,
                start_sign,
                end_sign: l.sign,
            });
        }
        last[l.pos] = Some((idx, l.sign));
    }
    // Ordered by position so that interacting loops sit near each other and
    // the elimination stays close to banded.
    loops.sort_by_key(|b| (b.start, b.col));
    loops
}

/// Seifert matrix of the closure of `word` on its canonical surface.
///
/// Convention: the closure of `σ₁²` has `V = (−1)`, so positive braids have
/// negative signature. Split closures give a block-diagonal matrix.
pub fn seifert_matrix(word: &BraidWord) -> SeifertMatrix {
    let loops = band_loops(word);
    let g = loops.len();
    let mut v = SeifertMatrix {
        size: g,
        entries: vec![0; g * g],
    };
    for (i, a) in loops.iter().enumerate() {
        v.add(i, i, -((a.start_sign + a.end_sign) as i64) / 2);
        for (j, b) in loops.iter().enumerate().skip(i + 1) {
            if b.start > a.end {
                // Sorted by start: nothing later can interleave with `a`.
                break;
            }
            let (lo_i, lo, hi_i, hi) = if a.col <= b.col {
                (i, a, j, b)
            } else {
                (j, b, i, a)
            };
            if lo.col == hi.col {
                // Consecutive loops on one column share a band.
                let (first_i, first, second_i) = if lo.start < hi.start {
                    (lo_i, lo, hi_i)
                } else {
                    (hi_i, hi, lo_i)
                };
                if first.end == hi.start.max(lo.start) {
                    if first.end_sign > 0 {
                        v.add(first_i, second_i, 1);
                    } else {
                        v.add(second_i, first_i, -1);
                    }
                }
            } else if hi.col == lo.col + 1 {
                if lo.start < hi.start && hi.start < lo.end && lo.end < hi.end {
                    v.add(lo_i, hi_i, -1);
                } else if hi.start < lo.start && lo.start < hi.end && hi.end < lo.end {
                    v.add(hi_i, lo_i, 1);
                }
            }
        }
    }
    v
}

/// Signature of the closure of `word`.
pub fn signature(word: &BraidWord) -> i64 {
    let reduced = word.cyclic_reduce();
    if reduced.is_empty() {
        return 0;
    }
    seifert_matrix(&reduced).signature()
}

/// Signature of a symmetric integer matrix by congruence diagonalization
/// over the rationals: no floating point anywhere.
///
/// Runs in `i128` rationals and falls back to big rationals on overflow.
pub fn symmetric_signature(n: usize, entries: &[i64]) -> i64 {
    assert_eq!(entries.len(), n * n);
    let small: Vec<Ratio<i128>> = entries
        .iter()
        .map(|&x| Ratio::from_integer(x as i128))
        .collect();
    if let Some(s) = congruence_signature(n, small) {
        return s;
    }
    let big: Vec<BigRational> = entries
        .iter()
        .map(|&x| BigRational::from_integer(BigInt::from(x)))
        .collect();
    congruence_signature(n, big).expect("big rational arithmetic does not overflow")
}

fn congruence_signature<T>(n: usize, mut a: Vec<T>) -> Option<i64>
where
    T: Clone + Zero + Signed + CheckedAdd + CheckedSub + CheckedMul + CheckedDiv,
{
    // Symmetric row/column operations only; the active block is rows/cols k..n.
    let mut sig = 0i64;
    let idx = |i: usize, j: usize| i * n + j;
    for k in 0..n {
        if a[idx(k, k)].is_zero() {
            let nz: Vec<usize> = (k + 1..n).filter(|&j| !a[idx(k, j)].is_zero()).collect();
            if nz.is_empty() {
                continue;
            }
            if let Some(&j) = nz.iter().find(|&&j| !a[idx(j, j)].is_zero()) {
                swap_symmetric(&mut a, n, k, j);
            } else {
                // a[k][k] += 2 a[k][j] via row_k += row_j, col_k += col_j.
                let j = nz[0];
                for c in 0..n {
                    let v = a[idx(k, c)].checked_add(&a[idx(j, c)])?;
                    a[idx(k, c)] = v;
                }
                for r in 0..n {
                    let v = a[idx(r, k)].checked_add(&a[idx(r, j)])?;
                    a[idx(r, k)] = v;
                }
            }
        }
        let pivot = a[idx(k, k)].clone();
        debug_assert!(!pivot.is_zero());
        sig += if pivot.is_positive() { 1 } else { -1 };
        let nz: Vec<usize> = (k + 1..n).filter(|&j| !a[idx(k, j)].is_zero()).collect();
        for &i in &nz {
            let factor = a[idx(k, i)].checked_div(&pivot)?;
            for &j in &nz {
                if j < i {
                    continue;
                }
                let upd = a[idx(i, j)].checked_sub(&factor.checked_mul(&a[idx(k, j)])?)?;
                a[idx(i, j)] = upd.clone();
                a[idx(j, i)] = upd;
            }
        }
        for &i in &nz {
            a[idx(k, i)] = T::zero();
            a[idx(i, k)] = T::zero();
        }
    }
    Some(sig)
}

fn swap_symmetric<T>(a: &mut [T], n: usize, p: usize, q: usize) {
    for c in 0..n {
        a.swap(p * n + c, q * n + c);
    }
    for r in 0..n {
        a.swap(r * n + p, r * n + q);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(n: usize, g: &[i64]) -> BraidWord {
        BraidWord::from_signed(n, g).unwrap()
    }

    #[test]
    fn hopf_annulus() {
        let v = seifert_matrix(&w(2, &[1, 1]));
        assert_eq!(v.rows(), vec![vec![-1]]);
        assert_eq!(v.symmetrized(), vec![-2]);
    }

    #[test]
    fn trefoil_form_negative_definite() {
        let v = seifert_matrix(&w(2, &[1, 1, 1]));
        assert_eq!(v.size(), 2);
        assert_eq!(v.signature(), -2);
        let s = v.symmetrized();
        assert!(s[0] < 0 && s[0] * s[3] - s[1] * s[2] > 0);
    }

    #[test]
    fn even_diagonal_and_size() {
        let word = w(4, &[1, 2, -3, 1, 2, 2, -1, 3, 3, 2]);
        let v = seifert_matrix(&word);
        let s = v.symmetrized();
        for i in 0..v.size() {
            assert_eq!(s[i * v.size() + i] % 2, 0);
        }
        assert_eq!(v.size(), word.len() - word.strands() + 1);
    }

    #[test]
    fn cancelling_pair_is_unlink() {
        assert_eq!(signature(&w(2, &[1, -1])), 0);
        assert_eq!(signature(&BraidWord::identity(3)), 0);
    }

    #[test]
    fn congruence_handles_zero_diagonal() {
        // [[0,1],[1,0]] has signature 0; [[0,1,0],[1,0,0],[0,0,-3]] has -1.
        assert_eq!(symmetric_signature(2, &[0, 1, 1, 0]), 0);
        assert_eq!(symmetric_signature(3, &[0, 1, 0, 1, 0, 0, 0, 0, -3]), -1);
        assert_eq!(symmetric_signature(2, &[0, 0, 0, 0]), 0);
    }
}
