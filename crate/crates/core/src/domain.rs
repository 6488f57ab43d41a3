//! Box domains `Ω ⊂ R^n` in null coordinates and seeded sampling on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PkError, Result};

/// Axis-aligned box `Π [lo_k, hi_k]`. Both ξ and η range over the same box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(PkError::InvalidInput("box bounds must be non-empty and of equal length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(PkError::InvalidInput(format!("degenerate box {lo:?}..{hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    /// `[-r, r]^n`.
    pub fn cube(n: usize, r: f64) -> Self {
        Self { lo: vec![-r; n], hi: vec![r; n] }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Self { lo: vec![lo], hi: vec![hi] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| v >= a && v <= b)
    }

    pub fn contains_origin(&self) -> bool {
        self.contains(&vec![0.0; self.dim()])
    }

    /// Box shrunk toward its center by `factor ∈ (0, 1]`.
    pub fn shrink(&self, factor: f64) -> Self {
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| {
                let c = 0.5 * (a + b);
                let h = 0.5 * (b - a) * factor;
                (c - h, c + h)
            })
            .unzip();
        Self { lo, hi }
    }

    /// Uniform points in the box from a seeded generator.
    pub fn random_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sample(&mut rng)).collect()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(&a, &b)| rng.random_range(a..=b)).collect()
    }

    /// Sample points for a rank probe: an equispaced grid including the
    /// endpoints for `n = 1`, seeded uniform points otherwise.
    pub fn probe_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        if self.dim() == 1 {
            let (a, b) = (self.lo[0], self.hi[0]);
            if count == 1 {
                return vec![vec![0.5 * (a + b)]];
            }
            (0..count).map(|i| vec![a + (b - a) * i as f64 / (count - 1) as f64]).collect()
        } else {
            self.random_points(count, seed)
        }
    }
}
