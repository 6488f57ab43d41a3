//! Multi-indices over `n` variables in graded-lexicographic order.
//!
//! Degree first; within a degree the larger exponent on an earlier variable
//! comes first, so the order starts `0, e_1, e_2, …, 2e_1, e_1+e_2, …`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(n: usize) -> Self {
        Self(vec![0; n])
    }

    /// The unit index `e_k` (0-based `k`).
    pub fn unit(n: usize, k: usize) -> Self {
        let mut v = vec![0; n];
        v[k] = 1;
        Self(v)
    }

    pub fn from_slice(e: &[u32]) -> Self {
        Self(e.to_vec())
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    /// Total degree `|I|`.
    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn plus_unit(&self, k: usize) -> Self {
        let mut v = self.0.clone();
        v[k] += 1;
        Self(v)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `I! = Π i_k!`.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&e| factorial(e as usize)).product()
    }

    /// `x^I`.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&e, &xi)| xi.powi(e as i32))
            .product()
    }

    /// Multinomial coefficient `|I|! / I!`.
    pub fn multinomial(&self) -> f64 {
        factorial(self.degree()) / self.factorial()
    }

    /// Every multi-index of exact degree `d` in graded-lex order.
    pub fn of_degree(n: usize, d: usize) -> Vec<Self> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; n];
        fill_degree(&mut cur, 0, d, &mut out);
        out
    }

    /// Every multi-index with `|I| ≤ max_degree`, graded-lex ordered.
    pub fn all_up_to(n: usize, max_degree: usize) -> Vec<Self> {
        (0..=max_degree).flat_map(|d| Self::of_degree(n, d)).collect()
    }
}

fn fill_degree(cur: &mut Vec<u32>, pos: usize, remaining: usize, out: &mut Vec<MultiIndex>) {
    let n = cur.len();
    if n == 0 {
        if remaining == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return;
    }
    if pos == n - 1 {
        cur[pos] = remaining as u32;
        out.push(MultiIndex(cur.clone()));
        cur[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        cur[pos] = e as u32;
        fill_degree(cur, pos + 1, remaining - e, out);
    }
    cur[pos] = 0;
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn enumeration_is_graded_lex() {
        let all = MultiIndex::all_up_to(2, 2);
        let expect: Vec<MultiIndex> = [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
            .iter()
            .map(|e| MultiIndex::from_slice(e))
            .collect();
        assert_eq!(all, expect);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn counts_match_binomials() {
        for n in 1..4 {
            for d in 0..8 {
                assert_eq!(MultiIndex::all_up_to(n, d).len() as u64, binomial(n + d, n));
            }
        }
    }

    #[test]
    fn factorials() {
        assert_eq!(MultiIndex::from_slice(&[2, 3]).factorial(), 12.0);
        assert_eq!(MultiIndex::from_slice(&[2, 1]).multinomial(), 3.0);
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(3, 5), 0);
    }

    fn mi() -> impl Strategy<Value = MultiIndex> {
        proptest::collection::vec(0u32..5, 3).prop_map(MultiIndex)
    }

    proptest! {
        #[test]
        fn total_order(a in mi(), b in mi(), c in mi()) {
            if a <= b && b <= a {
                prop_assert_eq!(&a, &b);
            }
            if a <= b && b <= c {
                prop_assert!(a <= c);
            }
            prop_assert!(MultiIndex::zero(3) <= a);
            if a.degree() < b.degree() {
                prop_assert!(a < b);
            }
        }
    }
}
