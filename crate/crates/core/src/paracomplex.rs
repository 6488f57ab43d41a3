//! Split-complex (para-complex) scalars, the idempotent null basis and the
//! indefinite hermitian form on `D^N`.
//!
//! A split-complex number is `x + τy` with `τ² = 1`. Writing
//! `e = (1 − τ)/2` and `ē = (1 + τ)/2` gives the null basis, in which
//! multiplication is componentwise: `e² = e`, `ē² = ē`, `e·ē = 0`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::PkError;

/// `re + τ·im` with `τ² = 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitComplex {
    pub re: f64,
    pub im: f64,
}

/// Coefficients `(u, v)` of `z = u·e + v·ē`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NullPair {
    pub u: f64,
    pub v: f64,
}

impl SplitComplex {
    pub const ZERO: Self = Self { re: 0.0, im: 0.0 };
    pub const ONE: Self = Self { re: 1.0, im: 0.0 };
    pub const TAU: Self = Self { re: 0.0, im: 1.0 };
    /// `e = (1 − τ)/2`.
    pub const E: Self = Self { re: 0.5, im: -0.5 };
    /// `ē = (1 + τ)/2`.
    pub const E_BAR: Self = Self { re: 0.5, im: 0.5 };

    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub const fn real(re: f64) -> Self {
        Self { re, im: 0.0 }
    }

    pub fn conj(self) -> Self {
        Self { re: self.re, im: -self.im }
    }

    /// `z·z̄ = re² − im²`; indefinite, zero on the null cone.
    pub fn norm_sq(self) -> f64 {
        // (re - im)(re + im) is the null-basis product u·v and is exact on the cone.
        (self.re - self.im) * (self.re + self.im)
    }

    pub fn scale(self, s: f64) -> Self {
        Self { re: self.re * s, im: self.im * s }
    }

    pub fn to_null(self) -> NullPair {
        NullPair { u: self.re - self.im, v: self.re + self.im }
    }

    pub fn from_null(p: NullPair) -> Self {
        p.into()
    }

    pub fn is_zero_divisor(self) -> bool {
        self.norm_sq() == 0.0
    }

    /// Multiplicative inverse; fails on zero divisors (including zero).
    pub fn inv(self) -> Result<Self, PkError> {
        let n = self.norm_sq();
        if n == 0.0 || !n.is_finite() {
            return Err(PkError::ZeroDivisor { re: self.re, im: self.im });
        }
        Ok(self.conj().scale(1.0 / n))
    }

    pub fn div(self, rhs: Self) -> Result<Self, PkError> {
        Ok(self * rhs.inv()?)
    }
}

impl NullPair {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    /// Product in the null basis is componentwise.
    pub fn mul(self, rhs: Self) -> Self {
        Self { u: self.u * rhs.u, v: self.v * rhs.v }
    }

    /// Conjugation swaps `e` and `ē`.
    pub fn conj(self) -> Self {
        Self { u: self.v, v: self.u }
    }

    pub fn norm_sq(self) -> f64 {
        self.u * self.v
    }
}

impl From<NullPair> for SplitComplex {
    fn from(p: NullPair) -> Self {
        Self { re: 0.5 * (p.u + p.v), im: 0.5 * (p.v - p.u) }
    }
}

impl From<SplitComplex> for NullPair {
    fn from(z: SplitComplex) -> Self {
        z.to_null()
    }
}

impl Add for SplitComplex {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self { re: self.re + rhs.re, im: self.im + rhs.im }
    }
}

impl Sub for SplitComplex {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self { re: self.re - rhs.re, im: self.im - rhs.im }
    }
}

impl Neg for SplitComplex {
    type Output = Self;
    fn neg(self) -> Self {
        Self { re: -self.re, im: -self.im }
    }
}

impl Mul for SplitComplex {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        Self {
            re: self.re * b.re + self.im * b.im,
            im: self.re * b.im + self.im * b.re,
        }
    }
}

impl fmt::Display for SplitComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im < 0.0 {
            write!(f, "{} - {}τ", self.re, -self.im)
        } else {
            write!(f, "{} + {}τ", self.re, self.im)
        }
    }
}

/// A point of `D^N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DVector(pub Vec<SplitComplex>);

impl DVector {
    pub fn new(entries: Vec<SplitComplex>) -> Self {
        Self(entries)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![SplitComplex::ZERO; len])
    }

    pub fn from_null(pairs: &[NullPair]) -> Self {
        Self(pairs.iter().map(|&p| p.into()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[SplitComplex] {
        &self.0
    }

    /// `‖z‖² = Σ |z_i|²`.
    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sq()).sum()
    }

    pub fn scale(&self, alpha: SplitComplex) -> Self {
        Self(self.0.iter().map(|&z| alpha * z).collect())
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PkError> {
        check_len(self.len(), other.len())?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a - b).collect()))
    }

    pub fn add(&self, other: &Self) -> Result<Self, PkError> {
        check_len(self.len(), other.len())?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a + b).collect()))
    }
}

fn check_len(a: usize, b: usize) -> Result<(), PkError> {
    if a != b {
        return Err(PkError::DimensionMismatch { expected: a, found: b });
    }
    Ok(())
}

/// `⟨z, w⟩ = Σ z_i·w̄_i`.
pub fn d_inner(z: &DVector, w: &DVector) -> Result<SplitComplex, PkError> {
    check_len(z.len(), w.len())?;
    Ok(z.0
        .iter()
        .zip(&w.0)
        .fold(SplitComplex::ZERO, |acc, (&a, &b)| acc + a * b.conj()))
}

/// Square matrix over `D`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DMatrix {
    pub dim: usize,
    pub entries: Vec<SplitComplex>,
}

impl DMatrix {
    pub fn from_rows(rows: Vec<Vec<SplitComplex>>) -> Result<Self, PkError> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            check_len(dim, row.len())?;
            entries.extend(row);
        }
        Ok(Self { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![SplitComplex::ZERO; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = SplitComplex::ONE;
        }
        Self { dim, entries }
    }

    pub fn diag(d: &[SplitComplex]) -> Self {
        let mut m = Self::identity(d.len());
        for (i, &x) in d.iter().enumerate() {
            m.entries[i * d.len() + i] = x;
        }
        m
    }

    /// The `D`-matrix `P·e + Q·ē` acting on null coordinates as `(ξ, η) ↦ (Pξ, Qη)`.
    pub fn from_null_blocks(p: &[f64], q: &[f64], dim: usize) -> Result<Self, PkError> {
        check_len(dim * dim, p.len())?;
        check_len(dim * dim, q.len())?;
        let entries = p
            .iter()
            .zip(q)
            .map(|(&a, &b)| NullPair::new(a, b).into())
            .collect();
        Ok(Self { dim, entries })
    }

    pub fn get(&self, i: usize, j: usize) -> SplitComplex {
        self.entries[i * self.dim + j]
    }

    pub fn apply(&self, w: &DVector) -> Result<DVector, PkError> {
        check_len(self.dim, w.len())?;
        Ok(DVector(
            (0..self.dim)
                .map(|i| {
                    (0..self.dim).fold(SplitComplex::ZERO, |acc, j| acc + self.get(i, j) * w.0[j])
                })
                .collect(),
        ))
    }
}

/// True iff `Āᵀ·A = I` entrywise within `tol`, which is equivalent to
/// `‖Aw‖² = ‖w‖²` for all `w`.
pub fn is_d_unitary(a: &DMatrix, tol: f64) -> bool {
    let n = a.dim;
    for i in 0..n {
        for j in 0..n {
            let s = (0..n).fold(SplitComplex::ZERO, |acc, k| acc + a.get(k, i).conj() * a.get(k, j));
            let target = if i == j { SplitComplex::ONE } else { SplitComplex::ZERO };
            let d = s - target;
            if d.re.abs() > tol || d.im.abs() > tol {
                return false;
            }
        }
    }
    true
}
