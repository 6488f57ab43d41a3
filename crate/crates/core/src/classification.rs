//! Which space forms immerse into which, the explicit monomial immersions,
//! closed-form derivatives of `H`, and the bump counterexample.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::builder::{assemble_immersion, ConstructionLog, Immersion, SeparableDecomposition};
use crate::diastasis::{DiastasisField, HFunction};
use crate::domain::BoxDomain;
use crate::dsl::{Expr, PotentialExpr};
use crate::error::{PkError, Result};
use crate::multiindex::{binomial, factorial, MultiIndex};
use crate::spaceforms::SpaceFormModel;

/// Relative tolerance for deciding `b/c ∈ Z⁺`.
pub const RATIO_TOL: f64 = 1e-9;
/// Outside [`RATIO_TOL`] but within this band the ratio is reported ambiguous.
pub const RATIO_WARN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fullness {
    StronglyFull,
    Inclusion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    FlatToFlat,
    RatioPositiveInteger,
    NonflatToFlatBlocked,
    FlatToNonflatBlocked,
    RatioNotInteger,
    AmbiguousRatio,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationVerdict {
    pub c: f64,
    pub b: f64,
    pub n: usize,
    pub exists: bool,
    #[serde(rename = "minimal_N")]
    pub minimal_n: Option<u64>,
    pub fullness: Option<Fullness>,
    pub reason: Reason,
    /// `b / c` when both curvatures are nonzero.
    pub ratio: Option<f64>,
}

fn minimal_dimension(n: usize, p: u64) -> Option<u64> {
    let mut acc: u128 = 1;
    for i in 0..n as u128 {
        acc = acc.checked_mul(p as u128 + n as u128 - i)? / (i + 1);
    }
    u64::try_from(acc - 1).ok()
}

fn verdict(c: f64, b: f64, n: usize, ratio: Option<f64>, reason: Reason, p: Option<u64>) -> ClassificationVerdict {
    let exists = matches!(reason, Reason::FlatToFlat | Reason::RatioPositiveInteger);
    let (minimal_n, fullness) = match reason {
        Reason::FlatToFlat => (Some(n as u64), Some(Fullness::Inclusion)),
        Reason::RatioPositiveInteger => (p.and_then(|p| minimal_dimension(n, p)), Some(Fullness::StronglyFull)),
        _ => (None, None),
    };
    ClassificationVerdict { c, b, n, exists, minimal_n, fullness, reason, ratio }
}

/// Whether a neighbourhood of the `n`-dimensional space form of curvature
/// `c` immerses into some space form of curvature `b`, and the least target
/// dimension.
pub fn classify(c: f64, b: f64, n: usize) -> Result<ClassificationVerdict> {
    if n == 0 {
        return Err(PkError::InvalidInput("n must be at least 1".into()));
    }
    if !c.is_finite() || !b.is_finite() {
        return Err(PkError::InvalidInput("curvatures must be finite".into()));
    }
    Ok(match (c == 0.0, b == 0.0) {
        (true, true) => verdict(c, b, n, None, Reason::FlatToFlat, None),
        (false, true) => verdict(c, b, n, None, Reason::NonflatToFlatBlocked, None),
        (true, false) => verdict(c, b, n, None, Reason::FlatToNonflatBlocked, None),
        (false, false) => {
            let r = b / c;
            let k = r.round();
            let dev = (r - k).abs();
            let reason = if k < 1.0 {
                Reason::RatioNotInteger
            } else if dev <= RATIO_TOL * r.abs() {
                Reason::RatioPositiveInteger
            } else if dev <= RATIO_WARN * r.abs() {
                Reason::AmbiguousRatio
            } else {
                Reason::RatioNotInteger
            };
            verdict(c, b, n, Some(r), reason, (reason == Reason::RatioPositiveInteger).then_some(k as u64))
        }
    })
}

/// [`classify`] with curvatures given exactly as fractions `num/den`.
pub fn classify_rational(c: (i64, i64), b: (i64, i64), n: usize) -> Result<ClassificationVerdict> {
    if n == 0 {
        return Err(PkError::InvalidInput("n must be at least 1".into()));
    }
    if c.1 == 0 || b.1 == 0 {
        return Err(PkError::DivisionByZero);
    }
    let (cf, bf) = (c.0 as f64 / c.1 as f64, b.0 as f64 / b.1 as f64);
    Ok(match (c.0 == 0, b.0 == 0) {
        (true, true) => verdict(cf, bf, n, None, Reason::FlatToFlat, None),
        (false, true) => verdict(cf, bf, n, None, Reason::NonflatToFlatBlocked, None),
        (true, false) => verdict(cf, bf, n, None, Reason::FlatToNonflatBlocked, None),
        (false, false) => {
            // b/c = (b.0 c.1) / (b.1 c.0)
            let num = b.0 as i128 * c.1 as i128;
            let den = b.1 as i128 * c.0 as i128;
            let ratio = Some(num as f64 / den as f64);
            if num % den == 0 && num / den >= 1 {
                let p = (num / den) as u64;
                verdict(cf, bf, n, ratio, Reason::RatioPositiveInteger, Some(p))
            } else {
                verdict(cf, bf, n, ratio, Reason::RatioNotInteger, None)
            }
        }
    })
}

/// Multi-indices `1 ≤ |α| ≤ p` with the weights `w_α` of
/// `((1 + 2Σξη)^p − 1)/2 = Σ_α w_α ξ^α η^α`.
pub fn veronese_terms(n: usize, p: u32) -> Vec<(MultiIndex, f64)> {
    MultiIndex::all_up_to(n, p as usize)
        .into_iter()
        .filter(|a| !a.is_zero())
        .map(|a| {
            let d = a.degree();
            let w = 0.5 * binomial(p as usize, d) as f64 * 2f64.powi(d as i32) * factorial(d) / a.factorial();
            (a, w)
        })
        .collect()
}

/// The monomial decomposition `u_α = w_α ξ^α`, `v_α = η^α`.
pub fn veronese_decomposition(n: usize, p: u32, domain: BoxDomain) -> Result<SeparableDecomposition> {
    if p == 0 {
        return Err(PkError::InvalidInput("veronese degree must be at least 1".into()));
    }
    if domain.dim() != n {
        return Err(PkError::DimensionMismatch { expected: n, found: domain.dim() });
    }
    let terms = Arc::new(veronese_terms(n, p));
    let (tu, tv) = (terms.clone(), terms.clone());
    let u = Arc::new(move |xi: &[f64]| Ok(tu.iter().map(|(a, w)| w * a.monomial(xi)).collect()));
    let v = Arc::new(move |eta: &[f64]| Ok(tv.iter().map(|(a, _)| a.monomial(eta)).collect()));
    let log = ConstructionLog::Monomial {
        indices: terms.iter().map(|(a, _)| a.clone()).collect(),
        weights: terms.iter().map(|(_, w)| *w).collect(),
    };
    Ok(SeparableDecomposition::new(n, terms.len(), u, v, domain, log))
}

/// The monomial immersion of the curvature-`c` space form into the
/// projective space form of curvature `p·c` and dimension `C(n+p, n) − 1`.
pub fn veronese(n: usize, p: u32, c: f64) -> Result<Immersion> {
    if c == 0.0 {
        return Err(PkError::InvalidInput("the monomial immersion needs c ≠ 0".into()));
    }
    let dec = veronese_decomposition(n, p, veronese_domain(n))?;
    let target = SpaceFormModel::new(p as f64 * c, dec.N())?;
    assemble_immersion(&dec, target)
}

/// A box on which `1 + 2Σξη` stays at least `0.25`.
pub fn veronese_domain(n: usize) -> BoxDomain {
    BoxDomain::cube(n, (0.375 / n as f64).sqrt())
}

/// The three settings with closed-form ξ-derivatives of `H`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedFormCase {
    /// `H_0 = (2/c) log(1 + 2Σξη)`.
    NonflatToFlat,
    /// `H_b = (exp((b/2)Σξη) − 1)/2`.
    FlatToNonflat,
    /// `H_b = ((1 + 2Σξη)^{b/c} − 1)/2`.
    NonflatToNonflat,
}

impl ClosedFormCase {
    /// The matching `H` as a transform of the source model potential.
    pub fn h_function(self, c: f64, b: f64, n: usize, domain: BoxDomain) -> Result<HFunction> {
        let (src, target) = match self {
            ClosedFormCase::NonflatToFlat => (c, 0.0),
            ClosedFormCase::FlatToNonflat => (0.0, b),
            ClosedFormCase::NonflatToNonflat => (c, b),
        };
        Ok(HFunction::transform(DiastasisField::from_model(src, n, domain)?, target))
    }
}

/// `∂^k H / ∂ξ_1^k` at `(ξ, η)` from the closed forms.
pub fn closed_form_dk(case: ClosedFormCase, c: f64, b: f64, k: u32, xi: &[f64], eta: &[f64]) -> Result<f64> {
    if k == 0 {
        return Err(PkError::InvalidInput("derivative order must be at least 1".into()));
    }
    if xi.len() != eta.len() || xi.is_empty() {
        return Err(PkError::DimensionMismatch { expected: xi.len(), found: eta.len() });
    }
    let s: f64 = xi.iter().zip(eta).map(|(a, b)| a * b).sum();
    let q = 1.0 + 2.0 * s;
    let ek = eta[0].powi(k as i32);
    let ki = k as i32;
    match case {
        ClosedFormCase::NonflatToFlat => {
            if c == 0.0 {
                return Err(PkError::InvalidInput("source curvature must be nonzero".into()));
            }
            if q <= 0.0 {
                return Err(PkError::LogDomain { value: q });
            }
            Ok((-2f64).powi(ki + 1) * factorial(k as usize - 1) / (c * q.powi(ki)) * ek)
        }
        ClosedFormCase::FlatToNonflat => Ok(b.powi(ki) / 2f64.powi(ki + 1) * (0.5 * b * s).exp() * ek),
        ClosedFormCase::NonflatToNonflat => {
            if c == 0.0 {
                return Err(PkError::InvalidInput("source curvature must be nonzero".into()));
            }
            if q <= 0.0 {
                return Err(PkError::LogDomain { value: q });
            }
            let r = b / c;
            let prod: f64 = (0..k).map(|j| r - j as f64).product();
            Ok(2f64.powi(ki - 1) * prod * q.powf(r - k as f64) * ek)
        }
    }
}

/// `ξη + Σ_{i ≤ i_max} bump(ξ, i) η^{2i+3}` in one variable.
pub fn counterexample_potential(i_max: u32) -> PotentialExpr {
    let b = Box::new;
    let mut e = Expr::Mul(b(Expr::Xi(0)), b(Expr::Eta(0)));
    for i in 0..=i_max {
        let term = Expr::Mul(b(Expr::Bump(b(Expr::Xi(0)), i)), b(Expr::Pow(b(Expr::Eta(0)), 2 * i + 3)));
        e = Expr::Add(b(e), b(term));
    }
    PotentialExpr::from_ast(e, 1).expect("single variable")
}

/// Points of `[lo, hi]` on an even grid, dropping those within `margin` of
/// the gluing points `0, 1, …, i_max`.
pub fn counterexample_grid(lo: f64, hi: f64, count: usize, i_max: u32, margin: f64) -> Vec<Vec<f64>> {
    BoxDomain::interval(lo, hi)
        .probe_points(count, 0)
        .into_iter()
        .filter(|p| (0..=i_max).all(|i| (p[0] - i as f64).abs() >= margin))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::JetOptions;

    #[test]
    fn classify_examples() {
        let v = classify(4.0, 8.0, 1).unwrap();
        assert!(v.exists && v.minimal_n == Some(2) && v.fullness == Some(Fullness::StronglyFull));
        let v = classify(4.0, 0.0, 2).unwrap();
        assert!(!v.exists && v.reason == Reason::NonflatToFlatBlocked);
        let v = classify(4.0, 6.0, 1).unwrap();
        assert!(!v.exists && v.reason == Reason::RatioNotInteger);
        let v = classify(0.0, 0.0, 3).unwrap();
        assert!(v.exists && v.minimal_n == Some(3) && v.fullness == Some(Fullness::Inclusion));
        assert_eq!(classify(-4.0, 4.0, 1).unwrap().reason, Reason::RatioNotInteger);
        assert_eq!(classify(3.0, 6.0 * (1.0 + 1e-7), 1).unwrap().reason, Reason::AmbiguousRatio);
        assert!(!classify(3.0, 6.0 * (1.0 + 1e-7), 1).unwrap().exists);
        assert!(classify(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn verdict_json_spells_out_reason() {
        let v = serde_json::to_value(classify(4.0, 6.0, 1).unwrap()).unwrap();
        assert_eq!(v["reason"], "ratio_not_integer");
        assert_eq!(v["minimal_N"], serde_json::Value::Null);
        let v = serde_json::to_value(classify(4.0, 8.0, 1).unwrap()).unwrap();
        assert_eq!(v["fullness"], "strongly_full");
        assert_eq!(v["minimal_N"], 2);
    }

    #[test]
    fn rational_classification_is_exact() {
        let v = classify_rational((1, 3), (2, 3), 2).unwrap();
        assert!(v.exists && v.minimal_n == Some(5));
        assert!(!classify_rational((4, 1), (6, 1), 1).unwrap().exists);
    }

    #[test]
    fn veronese_examples() {
        let t = veronese_terms(1, 2);
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].1, 2.0);
        assert_eq!(t[1].1, 2.0);
        assert_eq!(veronese_terms(1, 1).len(), 1);
        assert_eq!(veronese_terms(2, 1).len(), 2);
        for (n, p) in [(1usize, 3u32), (2, 2), (3, 3)] {
            let dec = veronese_decomposition(n, p, veronese_domain(n)).unwrap();
            assert_eq!(dec.N() as u64, binomial(n + p as usize, n) - 1);
            let pts = veronese_domain(n).random_points(5, 4);
            for x in &pts {
                for y in &pts {
                    let s: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                    let want = ((1.0 + 2.0 * s).powi(p as i32) - 1.0) / 2.0;
                    assert!((dec.eval(x, y).unwrap() - want).abs() < 1e-13);
                }
            }
        }
        let f = veronese(1, 2, 4.0).unwrap();
        assert_eq!(f.target().curvature, 8.0);
        assert_eq!(f.target().dim, 2);
    }

    #[test]
    fn closed_form_examples() {
        let v = closed_form_dk(ClosedFormCase::NonflatToFlat, 4.0, 0.0, 1, &[0.0], &[1.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        let v = closed_form_dk(ClosedFormCase::FlatToNonflat, 0.0, 2.0, 2, &[0.0], &[1.0]).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        for x in [-0.2, 0.1, 0.3] {
            let v = closed_form_dk(ClosedFormCase::NonflatToNonflat, 2.0, 4.0, 3, &[x], &[0.4]).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn closed_forms_match_jets() {
        let dom = BoxDomain::cube(2, 0.5);
        let (xi, eta) = ([0.2, -0.1], [0.3, 0.25]);
        for (case, c, b) in [
            (ClosedFormCase::NonflatToFlat, 4.0, 0.0),
            (ClosedFormCase::FlatToNonflat, 0.0, 3.0),
            (ClosedFormCase::NonflatToNonflat, 2.0, 3.0),
        ] {
            let h = case.h_function(c, b, 2, dom.clone()).unwrap();
            let jet = h.jet(&xi, &eta, (5, 0), JetOptions::default()).unwrap();
            for k in 1..=5u32 {
                let d = jet.derivative(&MultiIndex::from_slice(&[k, 0]), &MultiIndex::zero(2)).unwrap();
                let want = closed_form_dk(case, c, b, k, &xi, &eta).unwrap();
                assert!((d - want).abs() <= 1e-10 * want.abs().max(1.0), "{case:?} k={k}: {d} vs {want}");
            }
        }
    }

    #[test]
    fn counterexample_examples() {
        assert_eq!(counterexample_potential(0).to_string(), "xi1*eta1 + bump(xi1,0)*eta1^3");
        let p = counterexample_potential(2);
        let s = p.to_string();
        assert!(s.contains("eta1^3") && s.contains("eta1^5") && s.contains("eta1^7"));
        assert_eq!(p.eval(&[-1.0], &[0.7]).unwrap(), -0.7);
        let g = counterexample_grid(-2.0, 3.9, 60, 3, 0.1);
        assert!(g.iter().all(|p| (0..=3).all(|i| (p[0] - i as f64).abs() >= 0.1)));
    }
}
