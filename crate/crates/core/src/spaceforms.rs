//! The two target models: flat `D^N` (curvature 0) and the projective space
//! `DP^N` (curvature `c ≠ 0`).
//!
//! Canonical potentials in null coordinates:
//!
//! * flat: `Φ = 4 Σ ξ_i η_i`
//! * projective, affine chart 0: `Φ = (8/c) log(1 + 2 Σ ξ_i η_i)`
//!
//! The chart identifies `(ξ, η)` with the homogeneous point
//! `[1 : √2 (ξ_1 e + η_1 ē) : … ]`, so that `‖Z‖² = 1 + 2 Σ ξ_i η_i` and the
//! homogeneous diastasis `(8/c) log(‖p‖²‖q‖² / |⟨p,q⟩|²)` is exactly the
//! four-term diastasis of the chart potential.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::dsl::{Expr, PotentialExpr};
use crate::error::{PkError, Result};
use crate::paracomplex::{d_inner, DVector, NullPair, SplitComplex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceFormKind {
    Flat,
    Projective,
}

/// `S_c^N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceFormModel {
    pub curvature: f64,
    pub dim: usize,
}

impl SpaceFormModel {
    pub fn new(curvature: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(PkError::InvalidInput("space form dimension must be >= 1".into()));
        }
        if !curvature.is_finite() {
            return Err(PkError::InvalidInput("curvature must be finite".into()));
        }
        Ok(Self { curvature, dim })
    }

    pub fn flat(dim: usize) -> Result<Self> {
        Self::new(0.0, dim)
    }

    pub fn kind(&self) -> SpaceFormKind {
        if self.curvature == 0.0 {
            SpaceFormKind::Flat
        } else {
            SpaceFormKind::Projective
        }
    }

    /// The canonical potential as a DSL expression in `dim` variables.
    pub fn potential_expr(&self) -> PotentialExpr {
        let n = self.dim;
        let mut sum = mul(Expr::Xi(0), Expr::Eta(0));
        for i in 1..n {
            sum = Expr::Add(Box::new(sum), Box::new(mul(Expr::Xi(i), Expr::Eta(i))));
        }
        let ast = match self.kind() {
            SpaceFormKind::Flat => mul(Expr::Num(4.0), sum),
            SpaceFormKind::Projective => {
                let arg = Expr::Add(Box::new(Expr::Num(1.0)), Box::new(mul(Expr::Num(2.0), sum)));
                mul(signed_num(8.0 / self.curvature), Expr::Log(Box::new(arg)))
            }
        };
        PotentialExpr::from_ast(ast, n).expect("indices are in range by construction")
    }

    /// Value of the canonical potential at chart coordinates `(ξ, η)`.
    pub fn model_potential(&self, xi: &[f64], eta: &[f64]) -> Result<f64> {
        if xi.len() != self.dim || eta.len() != self.dim {
            return Err(PkError::DimensionMismatch { expected: self.dim, found: xi.len().min(eta.len()) });
        }
        let t: f64 = xi.iter().zip(eta).map(|(a, b)| a * b).sum();
        match self.kind() {
            SpaceFormKind::Flat => Ok(4.0 * t),
            SpaceFormKind::Projective => {
                let arg = 1.0 + 2.0 * t;
                if arg <= 0.0 {
                    return Err(PkError::LogDomain { value: arg });
                }
                Ok(8.0 / self.curvature * arg.ln())
            }
        }
    }

    /// The ambient point with chart coordinates `(ξ, η)` (chart 0 for the
    /// projective model).
    pub fn point_from_chart(&self, xi: &[f64], eta: &[f64]) -> Result<AmbientPoint> {
        if xi.len() != self.dim || eta.len() != self.dim {
            return Err(PkError::DimensionMismatch { expected: self.dim, found: xi.len().min(eta.len()) });
        }
        let pairs: Vec<NullPair> = xi.iter().zip(eta).map(|(&u, &v)| NullPair::new(u, v)).collect();
        Ok(match self.kind() {
            SpaceFormKind::Flat => AmbientPoint::Flat(DVector::from_null(&pairs)),
            SpaceFormKind::Projective => AmbientPoint::projective_from_chart(&pairs, self.dim),
        })
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    Expr::Mul(Box::new(a), Box::new(b))
}

fn signed_num(x: f64) -> Expr {
    if x < 0.0 {
        Expr::Neg(Box::new(Expr::Num(-x)))
    } else {
        Expr::Num(x)
    }
}

/// A point of a model space form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "coords", rename_all = "snake_case")]
pub enum AmbientPoint {
    /// A vector of `D^N`.
    Flat(DVector),
    /// Homogeneous coordinates `[Z_0 : … : Z_N]`.
    Projective(DVector),
}

impl AmbientPoint {
    /// `[1 : √2 z_1 : … : √2 z_k : 0 : …]`, padded to `dim + 1` entries.
    pub fn projective_from_chart(pairs: &[NullPair], dim: usize) -> Self {
        let mut z = Vec::with_capacity(dim + 1);
        z.push(SplitComplex::ONE);
        z.extend(pairs.iter().map(|&p| SplitComplex::from(p).scale(SQRT_2)));
        z.resize(dim + 1, SplitComplex::ZERO);
        AmbientPoint::Projective(DVector::new(z))
    }

    pub fn coords(&self) -> &DVector {
        match self {
            AmbientPoint::Flat(v) | AmbientPoint::Projective(v) => v,
        }
    }

    /// Null coordinates `(ξ_i, η_i)` in the affine chart `Z_chart ≠ 0`, with
    /// the `√2` normalization of the chart potential.
    pub fn chart_coordinates(&self, chart: usize) -> Result<Vec<NullPair>> {
        match self {
            AmbientPoint::Flat(v) => Ok(v.entries().iter().map(|z| z.to_null()).collect()),
            AmbientPoint::Projective(v) => {
                let z = v.entries();
                if chart >= z.len() {
                    return Err(PkError::InvalidInput(format!("chart index {chart} out of range")));
                }
                let inv = z[chart].inv()?;
                Ok(z.iter()
                    .enumerate()
                    .filter(|&(i, _)| i != chart)
                    .map(|(_, &w)| (w * inv).scale(1.0 / SQRT_2).to_null())
                    .collect())
            }
        }
    }
}

/// Diastasis of the model between two of its points.
///
/// Flat: `4 Σ (ξ_p − ξ_q)(η_p − η_q) = 4 ‖p − q‖²`. Projective:
/// `(8/c) log(‖p‖² ‖q‖² / |⟨p, q⟩|²)`, defined where `|⟨p,q⟩|² > 0`.
pub fn ambient_diastasis(m: &SpaceFormModel, p: &AmbientPoint, q: &AmbientPoint) -> Result<f64> {
    match (m.kind(), p, q) {
        (SpaceFormKind::Flat, AmbientPoint::Flat(a), AmbientPoint::Flat(b)) => {
            if a.len() != m.dim || b.len() != m.dim {
                return Err(PkError::DimensionMismatch { expected: m.dim, found: a.len().min(b.len()) });
            }
            Ok(4.0 * a.sub(b)?.norm_sq())
        }
        (SpaceFormKind::Projective, AmbientPoint::Projective(a), AmbientPoint::Projective(b)) => {
            if a.len() != m.dim + 1 || b.len() != m.dim + 1 {
                return Err(PkError::DimensionMismatch { expected: m.dim + 1, found: a.len().min(b.len()) });
            }
            let (na, nb) = (a.norm_sq(), b.norm_sq());
            if a == b && na > 0.0 {
                return Ok(0.0);
            }
            if na <= 0.0 {
                return Err(PkError::NonPositiveNorm { value: na });
            }
            if nb <= 0.0 {
                return Err(PkError::NonPositiveNorm { value: nb });
            }
            let ip = d_inner(a, b)?.norm_sq();
            if ip <= 0.0 {
                return Err(PkError::OutsideDiastasisNeighborhood { value: ip });
            }
            Ok(8.0 / m.curvature * (na * nb / ip).ln())
        }
        _ => Err(PkError::InvalidInput("point kind does not match the space form".into())),
    }
}

/// Representative with `‖Z‖² = 1` whose first coordinate with non-zero real
/// part is positive. Idempotent.
pub fn projective_normalize(p: &AmbientPoint) -> Result<AmbientPoint> {
    let AmbientPoint::Projective(z) = p else {
        return Err(PkError::InvalidInput("projective_normalize needs homogeneous coordinates".into()));
    };
    let n = z.norm_sq();
    if n <= 0.0 {
        return Err(PkError::NonPositiveNorm { value: n });
    }
    let lead = z
        .entries()
        .iter()
        .find(|w| w.re != 0.0)
        .map(|w| w.re)
        .or_else(|| z.entries().iter().find(|w| w.im != 0.0).map(|w| w.im))
        .unwrap_or(1.0);
    if lead > 0.0 && (n - 1.0).abs() <= 8.0 * f64::EPSILON {
        return Ok(p.clone());
    }
    let s = lead.signum() / n.sqrt();
    let scaled = z.scale(SplitComplex::real(s));
    Ok(AmbientPoint::Projective(scaled))
}
