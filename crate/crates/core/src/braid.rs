//! Braid words in the Artin generators of the planar braid group.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One Artin generator `σ_k^{±1}`; `pos` is 1-based and crosses strands
/// at positions `pos` and `pos + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Letter {
    pub pos: usize,
    pub sign: i8,
}

impl Letter {
    pub fn new(pos: usize, sign: i8) -> Self {
        debug_assert!(pos >= 1 && (sign == 1 || sign == -1));
        Letter { pos, sign }
    }

    pub fn inverse(self) -> Self {
        Letter {
            pos: self.pos,
            sign: -self.sign,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BraidWord {
    strands: usize,
    letters: Vec<Letter>,
}

impl BraidWord {
    pub fn new(strands: usize, letters: Vec<Letter>) -> Result<Self> {
        if strands == 0 {
            return Err(Error::Invalid("braid needs at least one strand".into()));
        }
        if let Some(l) = letters
            .iter()
            .find(|l| l.pos == 0 || l.pos >= strands || (l.sign != 1 && l.sign != -1))
        {
            return Err(Error::Invalid(format!(
                "letter {:?} is not a generator of B_{strands}",
                l
            )));
        }
        Ok(BraidWord { strands, letters })
    }

    pub fn identity(strands: usize) -> Self {
        BraidWord {
            strands: strands.max(1),
            letters: Vec::new(),
        }
    }

    /// Builds a word from signed generator indices, `[1, 1, -2]` = σ₁σ₁σ₂⁻¹.
    pub fn from_signed(strands: usize, gens: &[i64]) -> Result<Self> {
        let letters = gens
            .iter()
            .map(|&g| {
                if g == 0 {
                    return Err(Error::Parse("generator index 0".into()));
                }
                Ok(Letter {
                    pos: g.unsigned_abs() as usize,
                    sign: g.signum() as i8,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        BraidWord::new(strands, letters)
    }

    /// Parses the whitespace-separated signed-integer text format. The strand
    /// count is at least one more than the largest generator index.
    pub fn parse(text: &str, strands: Option<usize>) -> Result<Self> {
        let gens = text
            .split_whitespace()
            .map(|t| {
                t.parse::<i64>()
                    .map_err(|e| Error::Parse(format!("{t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let min = gens.iter().map(|g| g.unsigned_abs() as usize + 1).max().unwrap_or(1);
        let n = match strands {
            Some(n) if n < min => {
                return Err(Error::Invalid(format!(
                    "{n} strands cannot carry generator {}",
                    min - 1
                )))
            }
            Some(n) => n,
            None => min,
        };
        BraidWord::from_signed(n, &gens)
    }

    pub fn strands(&self) -> usize {
        self.strands
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn push(&mut self, letter: Letter) {
        assert!(letter.pos >= 1 && letter.pos < self.strands);
        self.letters.push(letter);
    }

    /// Sum of letter signs: the abelianization `B_n → ℤ`.
    pub fn writhe(&self) -> i64 {
        self.letters.iter().map(|l| l.sign as i64).sum()
    }

    /// `perm[p]` is the starting position of the strand that ends at position `p`.
    pub fn permutation(&self) -> Vec<usize> {
        let mut at: Vec<usize> = (0..self.strands).collect();
        for l in &self.letters {
            at.swap(l.pos - 1, l.pos);
        }
        at
    }

    pub fn is_pure(&self) -> bool {
        self.permutation().iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn inverse(&self) -> Self {
        BraidWord {
            strands: self.strands,
            letters: self.letters.iter().rev().map(|l| l.inverse()).collect(),
        }
    }

    /// All crossings switched.
    pub fn mirror(&self) -> Self {
        BraidWord {
            strands: self.strands,
            letters: self.letters.iter().map(|l| l.inverse()).collect(),
        }
    }

    pub fn concat(&self, other: &BraidWord) -> Self {
        let strands = self.strands.max(other.strands);
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        BraidWord { strands, letters }
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut letters = Vec::with_capacity(self.letters.len() * k as usize);
        for _ in 0..k {
            letters.extend_from_slice(&self.letters);
        }
        BraidWord {
            strands: self.strands,
            letters,
        }
    }

    /// Word with extra trivial strands appended on the right.
    pub fn with_strands(&self, strands: usize) -> Result<Self> {
        BraidWord::new(strands, self.letters.clone())
    }

    /// Cancels adjacent `σ_k σ_k⁻¹` pairs until none remain.
    pub fn free_reduce(&self) -> Self {
        let mut out: Vec<Letter> = Vec::with_capacity(self.letters.len());
        for &l in &self.letters {
            match out.last() {
                Some(&last) if last == l.inverse() => {
                    out.pop();
                }
                _ => out.push(l),
            }
        }
        BraidWord {
            strands: self.strands,
            letters: out,
        }
    }

    /// Free reduction followed by cancellation across the cyclic seam; the
    /// result is conjugate to `self`.
    pub fn cyclic_reduce(&self) -> Self {
        let mut letters = self.free_reduce().letters;
        let mut lo = 0;
        let mut hi = letters.len();
        while hi - lo >= 2 && letters[lo] == letters[hi - 1].inverse() {
            lo += 1;
            hi -= 1;
        }
        letters.truncate(hi);
        letters.drain(..lo);
        BraidWord {
            strands: self.strands,
            letters,
        }
    }

    /// Number of link components of the closure (cycles of the permutation).
    pub fn closure_components(&self) -> usize {
        let perm = self.permutation();
        let mut seen = vec![false; self.strands];
        let mut count = 0;
        for start in 0..self.strands {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut p = start;
            while !seen[p] {
                seen[p] = true;
                p = perm[p];
            }
        }
        count
    }
}

/// The full twist `(σ₁σ₂⋯σ_{n−1})ⁿ`, generator of the center of `P_n`.
pub fn full_twist(n: usize) -> Result<BraidWord> {
    if n < 2 {
        return Err(Error::Invalid(format!("full twist needs n >= 2, got {n}")));
    }
    let mut letters = Vec::with_capacity(n * (n - 1));
    for _ in 0..n {
        for k in 1..n {
            letters.push(Letter::new(k, 1));
        }
    }
    BraidWord::new(n, letters)
}

impl fmt::Display for BraidWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for l in &self.letters {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            write!(f, "{}", l.sign as i64 * l.pos as i64)?;
        }
        Ok(())
    }
}

impl FromStr for BraidWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BraidWord::parse(s, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_format() {
        let w: BraidWord = "1 1 -2".parse().unwrap();
        assert_eq!(w.strands(), 3);
        assert_eq!(w.writhe(), 1);
        assert_eq!(w.to_string(), "1 1 -2");
        assert!(BraidWord::parse("1 0", None).is_err());
        assert!(BraidWord::parse("3", Some(3)).is_err());
        assert!(BraidWord::parse("x", None).is_err());
        assert_eq!(BraidWord::parse("", Some(4)).unwrap().strands(), 4);
    }

    #[test]
    fn writhe_examples() {
        assert_eq!(BraidWord::from_signed(2, &[1, 1]).unwrap().writhe(), 2);
        assert_eq!(BraidWord::identity(3).writhe(), 0);
        assert_eq!(full_twist(3).unwrap().writhe(), 6);
    }

    #[test]
    fn full_twist_is_pure_with_expected_writhe() {
        assert_eq!(
            full_twist(2).unwrap(),
            BraidWord::from_signed(2, &[1, 1]).unwrap()
        );
        for n in 2..=6 {
            let d = full_twist(n).unwrap();
            assert_eq!(d.writhe(), (n * (n - 1)) as i64);
            assert!(d.is_pure());
        }
        assert!(full_twist(1).is_err());
    }

    #[test]
    fn reductions() {
        let w = BraidWord::from_signed(3, &[2, 1, -1, -2, 1]).unwrap();
        assert_eq!(w.free_reduce().to_string(), "1");
        let c = BraidWord::from_signed(3, &[-2, 1, 1, 2]).unwrap();
        assert_eq!(c.cyclic_reduce().to_string(), "1 1");
        assert_eq!(c.closure_components(), 3);
        assert_eq!(BraidWord::from_signed(2, &[1]).unwrap().closure_components(), 1);
    }

    #[test]
    fn permutation_of_generator() {
        let w = BraidWord::from_signed(3, &[1]).unwrap();
        assert_eq!(w.permutation(), vec![1, 0, 2]);
        assert!(!w.is_pure());
        assert!(w.pow(2).is_pure());
    }
}
