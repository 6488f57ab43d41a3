//! The linear Pfaffian system `∂U/∂ξ_k = U A_k(ξ)`: Frobenius compatibility
//! and integration along axis-aligned paths.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PkError, Result};

/// A family `ξ ↦ (A_1(ξ), …, A_n(ξ))` of square matrices.
pub trait MatrixField: Send + Sync {
    /// Number of ξ variables.
    fn nvars(&self) -> usize;
    /// Matrix size.
    fn size(&self) -> usize;
    /// All `A_k(ξ)`.
    fn eval(&self, xi: &[f64]) -> Result<Vec<DMatrix<f64>>>;
}

/// Constant matrices.
#[derive(Clone, Debug)]
pub struct ConstantField(pub Vec<DMatrix<f64>>);

impl MatrixField for ConstantField {
    fn nvars(&self) -> usize {
        self.0.len()
    }

    fn size(&self) -> usize {
        self.0.first().map_or(0, |m| m.nrows())
    }

    fn eval(&self, _xi: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        Ok(self.0.clone())
    }
}

type FieldFn = Arc<dyn Fn(&[f64]) -> Result<Vec<DMatrix<f64>>> + Send + Sync>;

/// A field given by a closure.
#[derive(Clone)]
pub struct FnField {
    nvars: usize,
    size: usize,
    f: FieldFn,
}

impl FnField {
    pub fn new(nvars: usize, size: usize, f: impl Fn(&[f64]) -> Result<Vec<DMatrix<f64>>> + Send + Sync + 'static) -> Self {
        Self { nvars, size, f: Arc::new(f) }
    }
}

impl MatrixField for FnField {
    fn nvars(&self) -> usize {
        self.nvars
    }

    fn size(&self) -> usize {
        self.size
    }

    fn eval(&self, xi: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let a = (self.f)(xi)?;
        if a.len() != self.nvars || a.iter().any(|m| m.nrows() != self.size || m.ncols() != self.size) {
            return Err(PkError::DimensionMismatch { expected: self.size, found: a.first().map_or(0, |m| m.nrows()) });
        }
        Ok(a)
    }
}

/// Step of the central differences used for `∂A/∂ξ`.
pub const FD_STEP: f64 = 1e-5;

/// `max_{h<k} ‖∂_h A_k − ∂_k A_h + A_h A_k − A_k A_h‖_F` at `p`, with
/// derivatives by central differences. Zero when `n = 1`.
pub fn compatibility_residual(a: &dyn MatrixField, p: &[f64]) -> Result<f64> {
    let n = a.nvars();
    if p.len() != n {
        return Err(PkError::DimensionMismatch { expected: n, found: p.len() });
    }
    if n < 2 {
        return Ok(0.0);
    }
    let at = a.eval(p)?;
    let mut partials = Vec::with_capacity(n);
    for h in 0..n {
        let mut plus = p.to_vec();
        let mut minus = p.to_vec();
        plus[h] += FD_STEP;
        minus[h] -= FD_STEP;
        let (ap, am) = (a.eval(&plus)?, a.eval(&minus)?);
        let d: Vec<DMatrix<f64>> = ap.iter().zip(&am).map(|(x, y)| (x - y) / (2.0 * FD_STEP)).collect();
        partials.push(d);
    }
    let mut worst = 0.0f64;
    for h in 0..n {
        for k in h + 1..n {
            let m = &partials[h][k] - &partials[k][h] + &at[h] * &at[k] - &at[k] * &at[h];
            worst = worst.max(m.norm());
        }
    }
    Ok(worst)
}

/// Integration settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfaffianConfig {
    pub step: f64,
    /// Largest admissible compatibility residual, relative to
    /// `1 + Σ_k ‖A_k‖_F²`.
    pub compat_tol: f64,
    pub check_compatibility: bool,
    /// Repeat the solve at half step and extrapolate.
    pub richardson: bool,
    /// Coordinate order of the legs; index order when `None`.
    pub leg_order: Option<Vec<usize>>,
}

impl Default for PfaffianConfig {
    fn default() -> Self {
        Self { step: 1e-3, compat_tol: 1e-6, check_compatibility: true, richardson: true, leg_order: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PfaffianSolution {
    pub u: DMatrix<f64>,
    /// Richardson estimate of the global error (max entry), when computed.
    pub error_estimate: Option<f64>,
    /// Largest relative compatibility residual met along the path.
    pub max_compat_residual: f64,
    pub steps: usize,
}

fn legs(cfg: &PfaffianConfig, n: usize) -> Result<Vec<usize>> {
    match &cfg.leg_order {
        None => Ok((0..n).collect()),
        Some(order) => {
            let mut seen = order.clone();
            seen.sort_unstable();
            if seen != (0..n).collect::<Vec<_>>() {
                return Err(PkError::InvalidInput(format!("leg order {order:?} is not a permutation of 0..{n}")));
            }
            Ok(order.clone())
        }
    }
}

fn integrate(
    a: &dyn MatrixField,
    xi0: &[f64],
    u0: &DMatrix<f64>,
    target: &[f64],
    step: f64,
    cfg: &PfaffianConfig,
) -> Result<(DMatrix<f64>, f64, usize)> {
    let n = a.nvars();
    let check = cfg.check_compatibility && n >= 2;
    let mut x = xi0.to_vec();
    let mut u = u0.clone();
    let mut worst = 0.0f64;
    let mut total = 0usize;
    for k in legs(cfg, n)? {
        let delta = target[k] - xi0[k];
        if delta == 0.0 {
            continue;
        }
        let steps = (delta.abs() / step).ceil();
        if steps > 1e8 {
            return Err(PkError::StepUnderflow { step });
        }
        let steps = steps.max(1.0) as usize;
        let h = delta / steps as f64;
        let start = x[k];
        for s in 0..steps {
            x[k] = start + h * s as f64;
            if check {
                let a0 = a.eval(&x)?;
                let scale = 1.0 + a0.iter().map(|m| m.norm_squared()).sum::<f64>();
                let r = compatibility_residual(a, &x)? / scale;
                worst = worst.max(r);
                if r > cfg.compat_tol {
                    return Err(PkError::CompatibilityViolation { residual: r, point: x.clone() });
                }
            }
            let ak = |xx: &[f64]| -> Result<DMatrix<f64>> { Ok(a.eval(xx)?.swap_remove(k)) };
            let mut xm = x.clone();
            xm[k] += 0.5 * h;
            let mut x1 = x.clone();
            x1[k] += h;
            let am = ak(&xm)?;
            let k1 = &u * ak(&x)?;
            let k2 = (&u + &k1 * (0.5 * h)) * &am;
            let k3 = (&u + &k2 * (0.5 * h)) * &am;
            let k4 = (&u + &k3 * h) * ak(&x1)?;
            u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            total += 1;
        }
        x[k] = target[k];
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(PkError::NonFinite { context: "pfaffian solution" });
    }
    Ok((u, worst, total))
}

/// `U(target)` for `∂U/∂ξ_k = U A_k`, `U(xi0) = u0`, by classical RK4 along
/// axis-aligned legs.
pub fn pfaffian_solve(
    a: &dyn MatrixField,
    xi0: &[f64],
    u0: &DMatrix<f64>,
    target: &[f64],
    cfg: &PfaffianConfig,
) -> Result<PfaffianSolution> {
    let n = a.nvars();
    if xi0.len() != n || target.len() != n {
        return Err(PkError::DimensionMismatch { expected: n, found: xi0.len().min(target.len()) });
    }
    let size = a.size();
    if u0.ncols() != size {
        return Err(PkError::DimensionMismatch { expected: size, found: u0.ncols() });
    }
    if !(cfg.step > 1e-12) || !cfg.step.is_finite() {
        return Err(PkError::StepUnderflow { step: cfg.step });
    }
    let (coarse, worst, steps) = integrate(a, xi0, u0, target, cfg.step, cfg)?;
    if !cfg.richardson {
        return Ok(PfaffianSolution { u: coarse, error_estimate: None, max_compat_residual: worst, steps });
    }
    let quiet = PfaffianConfig { check_compatibility: false, ..cfg.clone() };
    let (fine, _, fine_steps) = integrate(a, xi0, u0, target, 0.5 * cfg.step, &quiet)?;
    let diff = (&fine - &coarse) / 15.0;
    let est = diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(PfaffianSolution {
        u: fine + diff,
        error_estimate: Some(est),
        max_compat_residual: worst,
        steps: steps + fine_steps,
    })
}

/// Outcome of [`invertibility_persists`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvertibilityReport {
    pub persists: bool,
    pub min_abs_det: f64,
    pub caveat: Option<String>,
}

/// Default determinant threshold.
pub const DET_THRESHOLD: f64 = 1e-12;

/// Whether `|det U(p)| > threshold` at every probe point.
pub fn invertibility_persists(
    a: &dyn MatrixField,
    xi0: &[f64],
    u0: &DMatrix<f64>,
    probes: &[Vec<f64>],
    cfg: &PfaffianConfig,
    threshold: f64,
) -> Result<InvertibilityReport> {
    if !u0.is_square() {
        return Err(PkError::DimensionMismatch { expected: u0.nrows(), found: u0.ncols() });
    }
    let d0 = u0.determinant().abs();
    if !(d0 > threshold) {
        return Ok(InvertibilityReport { persists: false, min_abs_det: d0, caveat: None });
    }
    let mut min_det = d0;
    for p in probes {
        let sol = pfaffian_solve(a, xi0, u0, p, cfg)?;
        min_det = min_det.min(sol.u.determinant().abs());
    }
    let persists = min_det > threshold;
    let caveat = (!persists).then(|| "numerical underflow, not a true singularity".to_string());
    Ok(InvertibilityReport { persists, min_abs_det: min_det, caveat })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(a: [f64; 4]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &a)
    }

    #[test]
    fn compatibility_examples() {
        let c = ConstantField(vec![m2([1.0, 2.0, 0.0, 1.0]), m2([3.0, 4.0, 0.0, 3.0])]);
        assert!(compatibility_residual(&c, &[0.1, 0.2]).unwrap() <= 1e-9);
        let nc = ConstantField(vec![m2([0.0, 1.0, 0.0, 0.0]), m2([0.0, 0.0, 1.0, 0.0])]);
        let r = compatibility_residual(&nc, &[0.0, 0.0]).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        let one = ConstantField(vec![m2([0.0, 1.0, 0.0, 0.0])]);
        assert_eq!(compatibility_residual(&one, &[0.3]).unwrap(), 0.0);
    }

    #[test]
    fn scalar_exponential() {
        let f = ConstantField(vec![DMatrix::from_element(1, 1, 0.7)]);
        let s = pfaffian_solve(&f, &[0.0], &DMatrix::identity(1, 1), &[1.0], &PfaffianConfig::default()).unwrap();
        assert!((s.u[(0, 0)] - 0.7f64.exp()).abs() < 1e-8);
        let z = ConstantField(vec![DMatrix::zeros(2, 2)]);
        let u0 = m2([1.0, 2.0, 3.0, 4.0]);
        let s = pfaffian_solve(&z, &[0.0], &u0, &[0.5], &PfaffianConfig::default()).unwrap();
        assert_eq!(s.u, u0);
    }

    #[test]
    fn incompatible_field_is_rejected() {
        let nc = ConstantField(vec![m2([0.0, 1.0, 0.0, 0.0]), m2([0.0, 0.0, 1.0, 0.0])]);
        let e = pfaffian_solve(&nc, &[0.0, 0.0], &DMatrix::identity(2, 2), &[0.5, 0.5], &PfaffianConfig::default());
        assert!(matches!(e, Err(PkError::CompatibilityViolation { .. })));
    }

    #[test]
    fn invertibility_examples() {
        let cfg = PfaffianConfig::default();
        let z = ConstantField(vec![DMatrix::zeros(2, 2)]);
        let r = invertibility_persists(&z, &[0.0], &DMatrix::identity(2, 2), &[vec![1.0]], &cfg, DET_THRESHOLD).unwrap();
        assert!(r.persists);
        let s = ConstantField(vec![DMatrix::from_element(1, 1, -50.0)]);
        let r = invertibility_persists(&s, &[0.0], &DMatrix::identity(1, 1), &[vec![1.0]], &cfg, DET_THRESHOLD).unwrap();
        assert!(!r.persists);
        assert_eq!(r.caveat.as_deref(), Some("numerical underflow, not a true singularity"));
        let r = invertibility_persists(&z, &[0.0], &DMatrix::zeros(2, 2), &[vec![1.0]], &cfg, DET_THRESHOLD).unwrap();
        assert!(!r.persists && r.caveat.is_none());
    }
}
