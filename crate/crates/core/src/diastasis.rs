//! Diastasis of a potential, the transform `H_c`, and the hereditary check.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::builder::Immersion;
use crate::domain::BoxDomain;
use crate::dsl::PotentialExpr;
use crate::error::{PkError, Result};
use crate::jets::{jet_lift, JetOptions, JetSpace, MultiJet};
use crate::spaceforms::{ambient_diastasis, SpaceFormModel};

/// A potential on `Ω × Ω` together with the box `Ω` (which contains 0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiastasisField {
    potential: PotentialExpr,
    domain: BoxDomain,
}

impl DiastasisField {
    pub fn new(potential: PotentialExpr, domain: BoxDomain) -> Result<Self> {
        if domain.dim() != potential.nvars() {
            return Err(PkError::DimensionMismatch { expected: potential.nvars(), found: domain.dim() });
        }
        if !domain.contains_origin() {
            return Err(PkError::InvalidInput("diastasis domain must contain the origin".into()));
        }
        Ok(Self { potential, domain })
    }

    /// The canonical potential of `model` in `n` variables on `domain`.
    pub fn from_model(curvature: f64, n: usize, domain: BoxDomain) -> Result<Self> {
        Self::new(SpaceFormModel::new(curvature, n)?.potential_expr(), domain)
    }

    pub fn potential(&self) -> &PotentialExpr {
        &self.potential
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn n(&self) -> usize {
        self.potential.nvars()
    }

    /// `Φ(ξ,η) − Φ(ζ,η) − Φ(ξ,λ) + Φ(ζ,λ)` for `p = (ξ,η)`, `q = (ζ,λ)`.
    pub fn diastasis(&self, p: (&[f64], &[f64]), q: (&[f64], &[f64])) -> Result<f64> {
        let phi = |x: &[f64], y: &[f64]| self.potential.eval(x, y);
        let (xi, eta) = p;
        let (zeta, lambda) = q;
        if xi == zeta && eta == lambda {
            self.potential.eval(xi, eta)?;
            return Ok(0.0);
        }
        Ok((phi(xi, eta)? - phi(xi, lambda)?) - (phi(zeta, eta)? - phi(zeta, lambda)?))
    }

    /// `D_0(ξ, η)`, the diastasis from the origin.
    pub fn d0(&self, xi: &[f64], eta: &[f64]) -> Result<f64> {
        let z = vec![0.0; self.n()];
        self.diastasis((xi, eta), (&z, &z))
    }

    /// Jet of `D_0` at `(ξ, η)`.
    pub fn d0_jet(&self, xi: &[f64], eta: &[f64], orders: (usize, usize), opts: JetOptions) -> Result<MultiJet> {
        let n = self.n();
        let z = vec![0.0; n];
        let space = JetSpace::get(n, orders.0, orders.1);
        let full = jet_lift(&self.potential, xi, eta, orders, opts)?;
        let xi_slice = jet_lift(&self.potential, xi, &z, (orders.0, 0), opts)?.embed(&space, xi, eta);
        let eta_slice = jet_lift(&self.potential, &z, eta, (0, orders.1), opts)?.embed(&space, xi, eta);
        let origin = self.potential.eval(&z, &z)?;
        Ok(full.sub(&xi_slice).sub(&eta_slice.add_scalar(-origin)))
    }
}

/// `D(p, q)` for a field.
pub fn diastasis(f: &DiastasisField, p: (&[f64], &[f64]), q: (&[f64], &[f64])) -> Result<f64> {
    f.diastasis(p, q)
}

/// `H_c = D_0 / 4` for `c = 0`, `(exp(c D_0 / 8) − 1) / 2` otherwise.
pub fn h_function(f: &DiastasisField, c_target: f64, xi: &[f64], eta: &[f64]) -> Result<f64> {
    Ok(h_from_d0(f.d0(xi, eta)?, c_target))
}

fn h_from_d0(d0: f64, c: f64) -> f64 {
    if c == 0.0 {
        0.25 * d0
    } else {
        0.5 * (c * d0 / 8.0).exp_m1()
    }
}

/// A function `H(ξ, η)` whose separable rank is under study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HFunction {
    /// `H_c` built from the diastasis of a potential.
    Transform { field: DiastasisField, c: f64 },
    /// `H` given directly as an expression.
    Direct { expr: PotentialExpr },
}

/// Shared scalar function of `(ξ, η)`.
pub type BiFn = Arc<dyn Fn(&[f64], &[f64]) -> Result<f64> + Send + Sync>;

impl HFunction {
    pub fn transform(field: DiastasisField, c: f64) -> Self {
        HFunction::Transform { field, c }
    }

    pub fn direct(expr: PotentialExpr) -> Self {
        HFunction::Direct { expr }
    }

    pub fn n(&self) -> usize {
        match self {
            HFunction::Transform { field, .. } => field.n(),
            HFunction::Direct { expr } => expr.nvars(),
        }
    }

    pub fn eval(&self, xi: &[f64], eta: &[f64]) -> Result<f64> {
        let v = match self {
            HFunction::Transform { field, c } => h_function(field, *c, xi, eta)?,
            HFunction::Direct { expr } => expr.eval(xi, eta)?,
        };
        if !v.is_finite() {
            return Err(PkError::NonFinite { context: "H" });
        }
        Ok(v)
    }

    pub fn jet(&self, xi: &[f64], eta: &[f64], orders: (usize, usize), opts: JetOptions) -> Result<MultiJet> {
        match self {
            HFunction::Direct { expr } => jet_lift(expr, xi, eta, orders, opts),
            HFunction::Transform { field, c } => {
                let d = field.d0_jet(xi, eta, orders, opts)?;
                if *c == 0.0 {
                    return Ok(d.scale(0.25));
                }
                let x = d.value() * c / 8.0;
                let total = orders.0 + orders.1;
                let mut series = vec![0.5 * x.exp_m1()];
                let mut fact = 1.0;
                for k in 1..=total {
                    fact *= k as f64;
                    series.push(0.5 * x.exp() / fact);
                }
                Ok(d.scale(c / 8.0).compose(&series))
            }
        }
    }

    /// `∂^I_ξ H(ξ, η)` for every `|I| ≤ order`, in graded-lex order.
    pub fn xi_derivatives(&self, xi: &[f64], eta: &[f64], order: usize, opts: JetOptions) -> Result<Vec<f64>> {
        let d = self.jet(xi, eta, (order, 0), opts)?.xi_derivatives();
        if d.iter().any(|v| !v.is_finite()) {
            return Err(PkError::NonFinite { context: "H derivatives" });
        }
        Ok(d)
    }

    /// The evaluation as a shareable closure.
    pub fn as_fn(&self) -> BiFn {
        let h = self.clone();
        Arc::new(move |xi: &[f64], eta: &[f64]| h.eval(xi, eta))
    }

    /// `H` with the roles of `ξ` and `η` exchanged.
    pub fn swapped(&self) -> Self {
        match self {
            HFunction::Transform { field, c } => HFunction::Transform {
                field: DiastasisField { potential: field.potential.swap_blocks(), domain: field.domain.clone() },
                c: *c,
            },
            HFunction::Direct { expr } => HFunction::Direct { expr: expr.swap_blocks() },
        }
    }

    /// Sampling box of a transform; `None` for direct functions.
    pub fn domain(&self) -> Option<&BoxDomain> {
        match self {
            HFunction::Transform { field, .. } => Some(field.domain()),
            HFunction::Direct { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HereditaryFailure {
    pub point: Vec<f64>,
    pub residual: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HereditaryReport {
    pub samples: usize,
    pub max_residual: f64,
    pub failures: Vec<HereditaryFailure>,
    pub passed: bool,
}

/// Options for [`hereditary_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct HereditaryOptions {
    pub samples: usize,
    pub tol: f64,
    pub seed: u64,
    /// Sampling box in `(ξ, η)`; defaults to the source domain.
    pub sub_box: Option<BoxDomain>,
}

impl Default for HereditaryOptions {
    fn default() -> Self {
        Self { samples: 100, tol: 1e-9, seed: 0, sub_box: None }
    }
}

/// `max_q |D^S(0, q) − D^M(f(0), f(q))|` over seeded samples `q`.
pub fn hereditary_check(source: &DiastasisField, f: &Immersion, opts: &HereditaryOptions) -> Result<HereditaryReport> {
    let n = source.n();
    if f.n() != n {
        return Err(PkError::DimensionMismatch { expected: n, found: f.n() });
    }
    let bx = opts.sub_box.clone().unwrap_or_else(|| source.domain().clone());
    if bx.dim() != n {
        return Err(PkError::DimensionMismatch { expected: n, found: bx.dim() });
    }
    let z = vec![0.0; n];
    let f0 = f.point(&z, &z)?;
    let target: &SpaceFormModel = f.target();
    let xs = bx.random_points(opts.samples, opts.seed);
    let ys = bx.random_points(opts.samples, opts.seed.wrapping_add(0x9e37_79b9));
    let mut max_residual = 0.0f64;
    let mut failures = Vec::new();
    for (xi, eta) in xs.iter().zip(&ys) {
        let point: Vec<f64> = xi.iter().chain(eta).copied().collect();
        let r = source
            .d0(xi, eta)
            .and_then(|ds| Ok((ds, f.point(xi, eta)?)))
            .and_then(|(ds, fq)| Ok((ds - ambient_diastasis(target, &f0, &fq)?).abs()));
        match r {
            Ok(res) if res.is_finite() => {
                max_residual = max_residual.max(res);
                if res > opts.tol {
                    failures.push(HereditaryFailure { point, residual: Some(res), error: None });
                }
            }
            Ok(_) => failures.push(HereditaryFailure {
                point,
                residual: None,
                error: Some("non-finite residual".into()),
            }),
            Err(e) => failures.push(HereditaryFailure { point, residual: None, error: Some(e.to_string()) }),
        }
    }
    Ok(HereditaryReport { samples: opts.samples, passed: failures.is_empty(), max_residual, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiindex::MultiIndex;
    use proptest::prelude::*;

    fn field(s: &str, n: usize) -> DiastasisField {
        DiastasisField::new(PotentialExpr::parse(s, n).unwrap(), BoxDomain::cube(n, 1.0)).unwrap()
    }

    #[test]
    fn flat_diastasis_examples() {
        let f = field("4*xi1*eta1", 1);
        assert_eq!(f.diastasis((&[1.0], &[1.0]), (&[0.0], &[0.0])).unwrap(), 4.0);
        assert_eq!(f.diastasis((&[0.3], &[-0.7]), (&[0.3], &[-0.7])).unwrap(), 0.0);
        let (p, q) = ((&[0.2][..], &[0.5][..]), (&[-0.3][..], &[0.1][..]));
        assert!((f.diastasis(p, q).unwrap() - 4.0 * 0.5 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn h_function_examples() {
        let flat = DiastasisField::from_model(0.0, 1, BoxDomain::cube(1, 2.0)).unwrap();
        assert!((h_function(&flat, 0.0, &[1.0], &[2.0]).unwrap() - 2.0).abs() < 1e-14);
        let sc = DiastasisField::from_model(4.0, 1, BoxDomain::cube(1, 2.0)).unwrap();
        assert!((h_function(&sc, 8.0, &[1.0], &[1.0]).unwrap() - 4.0).abs() < 1e-12);
        for c in [-4.0, 3.0] {
            let m = DiastasisField::from_model(c, 2, BoxDomain::cube(2, 0.5)).unwrap();
            let (x, y) = ([0.3, -0.2], [0.1, 0.4]);
            let v = h_function(&m, c, &x, &y).unwrap();
            assert!((v - (0.03 - 0.08)).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn h_vanishes_on_axes() {
        let f = field("exp(xi1+2*eta1) + xi1^3*eta1 + log(1+xi1*eta1)", 1);
        for c in [0.0, 4.0, -2.0] {
            for t in [-0.9, -0.2, 0.4, 1.0] {
                assert_eq!(h_function(&f, c, &[0.0], &[t]).unwrap(), 0.0);
                assert_eq!(h_function(&f, c, &[t], &[0.0]).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn h_jets_match_values_and_closed_form() {
        let sc = DiastasisField::from_model(4.0, 1, BoxDomain::cube(1, 0.5)).unwrap();
        let h = HFunction::transform(sc, 8.0);
        let (x, y) = ([0.2], [0.3]);
        let j = h.jet(&x, &y, (3, 3), JetOptions::default()).unwrap();
        assert!((j.value() - h.eval(&x, &y).unwrap()).abs() < 1e-14);
        // H = 2ξη + 2ξ²η²
        let d = |a: u32, b: u32| j.derivative(&MultiIndex::from_slice(&[a]), &MultiIndex::from_slice(&[b])).unwrap();
        assert!((d(1, 0) - (2.0 * 0.3 + 4.0 * 0.2 * 0.09)).abs() < 1e-12);
        assert!((d(2, 2) - 8.0).abs() < 1e-11);
        assert!(d(3, 1).abs() < 1e-11);
    }

    #[test]
    fn xi_derivatives_of_direct_function() {
        let h = HFunction::direct(PotentialExpr::parse("xi1*eta1 + xi1^2*eta1^2", 1).unwrap());
        let d = h.xi_derivatives(&[0.5], &[2.0], 3, JetOptions::default()).unwrap();
        assert_eq!(d.len(), 4);
        assert!((d[0] - 2.0).abs() < 1e-14);
        assert!((d[1] - 6.0).abs() < 1e-14);
        assert!((d[2] - 8.0).abs() < 1e-14);
        assert!(d[3].abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn gauge_terms_do_not_change_diastasis(
            a in -2.0..2.0f64, b in -2.0..2.0f64,
            p in proptest::collection::vec(-0.8..0.8f64, 4),
            q in proptest::collection::vec(-0.8..0.8f64, 4)
        ) {
            let base = "exp(xi1*eta2) + xi2^2*eta1 + log(2+xi1*eta1)";
            let f = field(base, 2);
            let gauge = format!("{base} + ({a})*xi1^3*xi2 + exp(({b})*eta2) - eta1^2");
            let g = field(&gauge, 2);
            let (pp, qq) = ((&p[..2], &p[2..]), (&q[..2], &q[2..]));
            let d1 = f.diastasis(pp, qq).unwrap();
            let d2 = g.diastasis(pp, qq).unwrap();
            prop_assert!((d1 - d2).abs() <= 1e-10 * d1.abs().max(1.0));
            prop_assert_eq!(f.diastasis(pp, pp).unwrap(), 0.0);
        }
    }
}
