//! Truncated multivariate Taylor expansions ("jets") in the `2n` variables
//! `(ξ, η)`, bi-graded: orders are capped separately in the ξ-block and in
//! the η-block.
//!
//! Coefficients are stored divided by factorials, so the partial derivative
//! `∂^{|I|+|J|} f / ∂ξ^I ∂η^J` equals `coeff(I, J) · I! · J!`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::dsl::{Expr, PotentialExpr};
use crate::error::{PkError, Result};
use crate::multiindex::{factorial, MultiIndex};

/// Default per-block order cap.
pub const DEFAULT_ORDER_CAP: usize = 12;

/// Index tables shared by all jets with the same `(n, order_xi, order_eta)`.
#[derive(Debug)]
pub struct JetSpace {
    n: usize,
    order_xi: usize,
    order_eta: usize,
    xi_idx: Vec<MultiIndex>,
    eta_idx: Vec<MultiIndex>,
    xi_lookup: HashMap<MultiIndex, usize>,
    eta_lookup: HashMap<MultiIndex, usize>,
    xi_mul: Vec<(u32, u32, u32)>,
    eta_mul: Vec<(u32, u32, u32)>,
}

fn product_table(idx: &[MultiIndex], lookup: &HashMap<MultiIndex, usize>, order: usize) -> Vec<(u32, u32, u32)> {
    let mut t = Vec::new();
    for (i, a) in idx.iter().enumerate() {
        for (j, b) in idx.iter().enumerate() {
            if a.degree() + b.degree() <= order {
                let k = lookup[&a.add(b)];
                t.push((i as u32, j as u32, k as u32));
            }
        }
    }
    t
}

impl JetSpace {
    fn build(n: usize, order_xi: usize, order_eta: usize) -> Self {
        let xi_idx = MultiIndex::all_up_to(n, order_xi);
        let eta_idx = MultiIndex::all_up_to(n, order_eta);
        let xi_lookup: HashMap<_, _> = xi_idx.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        let eta_lookup: HashMap<_, _> = eta_idx.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        let xi_mul = product_table(&xi_idx, &xi_lookup, order_xi);
        let eta_mul = product_table(&eta_idx, &eta_lookup, order_eta);
        Self { n, order_xi, order_eta, xi_idx, eta_idx, xi_lookup, eta_lookup, xi_mul, eta_mul }
    }

    /// Shared, cached space for the given shape.
    pub fn get(n: usize, order_xi: usize, order_eta: usize) -> Arc<JetSpace> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize, usize), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet space cache poisoned");
        guard
            .entry((n, order_xi, order_eta))
            .or_insert_with(|| Arc::new(JetSpace::build(n, order_xi, order_eta)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.xi_idx.len() * self.eta_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn xi_indices(&self) -> &[MultiIndex] {
        &self.xi_idx
    }

    pub fn eta_indices(&self) -> &[MultiIndex] {
        &self.eta_idx
    }

    fn total_order(&self) -> usize {
        self.order_xi + self.order_eta
    }
}

/// Truncated Taylor data of a smooth function of `(ξ, η)` at a base point.
#[derive(Clone, Debug)]
pub struct MultiJet {
    space: Arc<JetSpace>,
    base_xi: Vec<f64>,
    base_eta: Vec<f64>,
    coeffs: Vec<f64>,
}

/// Options for lifting expressions to jets.
#[derive(Clone, Copy, Debug)]
pub struct JetOptions {
    pub order_cap: usize,
}

impl Default for JetOptions {
    fn default() -> Self {
        Self { order_cap: DEFAULT_ORDER_CAP }
    }
}

impl MultiJet {
    pub fn constant(space: &Arc<JetSpace>, base_xi: &[f64], base_eta: &[f64], value: f64) -> Self {
        let mut coeffs = vec![0.0; space.len()];
        coeffs[0] = value;
        Self { space: space.clone(), base_xi: base_xi.to_vec(), base_eta: base_eta.to_vec(), coeffs }
    }

    fn like(&self, value: f64) -> Self {
        let mut coeffs = vec![0.0; self.space.len()];
        coeffs[0] = value;
        Self { space: self.space.clone(), base_xi: self.base_xi.clone(), base_eta: self.base_eta.clone(), coeffs }
    }

    /// The coordinate function `ξ_k` (0-based).
    pub fn xi_var(space: &Arc<JetSpace>, base_xi: &[f64], base_eta: &[f64], k: usize) -> Self {
        let mut j = Self::constant(space, base_xi, base_eta, base_xi[k]);
        if space.order_xi >= 1 {
            let i = space.xi_lookup[&MultiIndex::unit(space.n, k)];
            j.coeffs[i * space.eta_idx.len()] = 1.0;
        }
        j
    }

    /// The coordinate function `η_k` (0-based).
    pub fn eta_var(space: &Arc<JetSpace>, base_xi: &[f64], base_eta: &[f64], k: usize) -> Self {
        let mut j = Self::constant(space, base_xi, base_eta, base_eta[k]);
        if space.order_eta >= 1 {
            let i = space.eta_lookup[&MultiIndex::unit(space.n, k)];
            j.coeffs[i] = 1.0;
        }
        j
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn base(&self) -> (&[f64], &[f64]) {
        (&self.base_xi, &self.base_eta)
    }

    pub fn orders(&self) -> (usize, usize) {
        (self.space.order_xi, self.space.order_eta)
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Taylor coefficient of `(ξ−ξ⁰)^I (η−η⁰)^J`.
    pub fn coeff(&self, i: &MultiIndex, j: &MultiIndex) -> Result<f64> {
        let (a, b) = self.position(i, j)?;
        Ok(self.coeffs[a * self.space.eta_idx.len() + b])
    }

    fn position(&self, i: &MultiIndex, j: &MultiIndex) -> Result<(usize, usize)> {
        if i.nvars() != self.space.n || j.nvars() != self.space.n {
            return Err(PkError::DimensionMismatch {
                expected: self.space.n,
                found: if i.nvars() != self.space.n { i.nvars() } else { j.nvars() },
            });
        }
        let a = *self.space.xi_lookup.get(i).ok_or(PkError::OrderOutOfRange {
            requested: i.degree(),
            available: self.space.order_xi,
        })?;
        let b = *self.space.eta_lookup.get(j).ok_or(PkError::OrderOutOfRange {
            requested: j.degree(),
            available: self.space.order_eta,
        })?;
        Ok((a, b))
    }

    /// `∂^{|I|+|J|} f / ∂ξ^I ∂η^J` at the base point.
    pub fn derivative(&self, i: &MultiIndex, j: &MultiIndex) -> Result<f64> {
        Ok(self.coeff(i, j)? * i.factorial() * j.factorial())
    }

    /// All pure ξ-derivatives `∂^I f` in the space's graded-lex order.
    pub fn xi_derivatives(&self) -> Vec<f64> {
        let stride = self.space.eta_idx.len();
        self.space
            .xi_idx
            .iter()
            .enumerate()
            .map(|(a, m)| self.coeffs[a * stride] * m.factorial())
            .collect()
    }

    /// This jet re-read in `space` at `(base_xi, base_eta)`: coefficients whose
    /// multi-indices exist in both spaces are copied, the rest are zero. Used
    /// for slices such as `Φ(ξ, 0)`, whose jet at `(ξ, 0)` with η-order 0 is
    /// also its jet at any `(ξ, η)`.
    pub fn embed(&self, space: &Arc<JetSpace>, base_xi: &[f64], base_eta: &[f64]) -> Self {
        let mut out = Self::constant(space, base_xi, base_eta, 0.0);
        let (src, dst) = (self.space.eta_idx.len(), space.eta_idx.len());
        for (a, i) in self.space.xi_idx.iter().enumerate() {
            let Some(&ta) = space.xi_lookup.get(i) else { continue };
            for (b, j) in self.space.eta_idx.iter().enumerate() {
                if let Some(&tb) = space.eta_lookup.get(j) {
                    out.coeffs[ta * dst + tb] = self.coeffs[a * src + b];
                }
            }
        }
        out
    }

    fn check_same(&self, other: &Self) {
        debug_assert!(Arc::ptr_eq(&self.space, &other.space));
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_same(other);
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Self { coeffs, ..self.clone() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check_same(other);
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Self { coeffs, ..self.clone() }
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|a| a * s).collect(), ..self.clone() }
    }

    pub fn add_scalar(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.coeffs[0] += s;
        out
    }

    /// Truncated product.
    pub fn mul(&self, other: &Self) -> Self {
        self.check_same(other);
        let sp = &self.space;
        let stride = sp.eta_idx.len();
        let mut out = vec![0.0; sp.len()];
        for &(i1, i2, io) in &sp.xi_mul {
            let (r1, r2, ro) = (i1 as usize * stride, i2 as usize * stride, io as usize * stride);
            for &(j1, j2, jo) in &sp.eta_mul {
                let a = self.coeffs[r1 + j1 as usize];
                if a != 0.0 {
                    out[ro + jo as usize] += a * other.coeffs[r2 + j2 as usize];
                }
            }
        }
        Self { coeffs: out, ..self.clone() }
    }

    /// `f ∘ self`, given the univariate Taylor coefficients of `f` at
    /// `self.value()` (length at least total order + 1).
    pub fn compose(&self, series: &[f64]) -> Self {
        let k_max = self.space.total_order().min(series.len().saturating_sub(1));
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        let mut acc = self.like(series[k_max]);
        for k in (0..k_max).rev() {
            acc = acc.mul(&h);
            acc.coeffs[0] += series[k];
        }
        acc
    }

    pub fn exp(&self) -> Self {
        let k = self.space.total_order();
        let e = self.value().exp();
        let series: Vec<f64> = (0..=k).map(|i| e / factorial(i)).collect();
        self.compose(&series)
    }

    pub fn log(&self) -> Result<Self> {
        let x = self.value();
        if x <= 0.0 {
            return Err(PkError::LogDomain { value: x });
        }
        let k = self.space.total_order();
        let mut series = vec![x.ln()];
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            series.push(sign / (i as f64 * x.powi(i as i32)));
        }
        Ok(self.compose(&series))
    }

    pub fn recip(&self) -> Result<Self> {
        let x = self.value();
        if x == 0.0 {
            return Err(PkError::DivisionByZero);
        }
        let k = self.space.total_order();
        let series: Vec<f64> = (0..=k)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                sign / x.powi(i as i32 + 1)
            })
            .collect();
        Ok(self.compose(&series))
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        Ok(self.mul(&other.recip()?))
    }

    pub fn powi(&self, k: u32) -> Self {
        let mut result = self.like(1.0);
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// `bump(self, shift)`; flat (all coefficients zero) where `self ≤ shift`.
    pub fn bump(&self, shift: u32) -> Self {
        let k = self.space.total_order();
        self.compose(&bump_series(self.value(), shift, k))
    }
}

/// Univariate Taylor coefficients of `bump(·, shift)` at `x0` through order `k`.
pub fn bump_series(x0: f64, shift: u32, k: usize) -> Vec<f64> {
    let t0 = x0 - shift as f64;
    if t0 <= 0.0 {
        return vec![0.0; k + 1];
    }
    let m = shift as i32 + 1;
    // s(t) = −t^{−m} around t0: coefficient of δ^j is −C(−m, j) t0^{−m−j}.
    let mut s = Vec::with_capacity(k + 1);
    let mut binom = 1.0; // C(−m, j)
    for j in 0..=k {
        if j > 0 {
            binom *= (-m - (j as i32 - 1)) as f64 / j as f64;
        }
        s.push(-binom * t0.powi(-m - j as i32));
    }
    // exp of a univariate series: E_j = (1/j) Σ_{i=1}^{j} i s_i E_{j−i}.
    let mut e = vec![0.0; k + 1];
    e[0] = s[0].exp();
    for j in 1..=k {
        let acc: f64 = (1..=j).map(|i| i as f64 * s[i] * e[j - i]).sum();
        e[j] = acc / j as f64;
    }
    e
}

/// Lift a potential to its jet at `(base_xi, base_eta)`.
pub fn jet_lift(
    expr: &PotentialExpr,
    base_xi: &[f64],
    base_eta: &[f64],
    orders: (usize, usize),
    opts: JetOptions,
) -> Result<MultiJet> {
    let n = expr.nvars();
    if base_xi.len() != n || base_eta.len() != n {
        return Err(PkError::DimensionMismatch { expected: n, found: base_xi.len().min(base_eta.len()) });
    }
    let worst = orders.0.max(orders.1);
    if worst > opts.order_cap {
        return Err(PkError::OrderCap { requested: worst, cap: opts.order_cap });
    }
    let space = JetSpace::get(n, orders.0, orders.1);
    lift(expr.ast(), &space, base_xi, base_eta)
}

fn lift(e: &Expr, sp: &Arc<JetSpace>, bx: &[f64], be: &[f64]) -> Result<MultiJet> {
    let j = match e {
        Expr::Num(x) => MultiJet::constant(sp, bx, be, *x),
        Expr::Xi(k) => MultiJet::xi_var(sp, bx, be, *k),
        Expr::Eta(k) => MultiJet::eta_var(sp, bx, be, *k),
        Expr::Neg(a) => lift(a, sp, bx, be)?.neg(),
        Expr::Add(a, b) => lift(a, sp, bx, be)?.add(&lift(b, sp, bx, be)?),
        Expr::Sub(a, b) => lift(a, sp, bx, be)?.sub(&lift(b, sp, bx, be)?),
        Expr::Mul(a, b) => lift(a, sp, bx, be)?.mul(&lift(b, sp, bx, be)?),
        Expr::Div(a, b) => lift(a, sp, bx, be)?.div(&lift(b, sp, bx, be)?)?,
        Expr::Pow(a, k) => lift(a, sp, bx, be)?.powi(*k),
        Expr::Exp(a) => lift(a, sp, bx, be)?.exp(),
        Expr::Log(a) => lift(a, sp, bx, be)?.log()?,
        Expr::Bump(a, i) => lift(a, sp, bx, be)?.bump(*i),
    };
    if !j.value().is_finite() {
        return Err(PkError::NonFinite { context: "jet" });
    }
    Ok(j)
}

/// `∂^{|I|+|J|} f / ∂ξ^I ∂η^J` from a jet.
pub fn jet_derivative(j: &MultiJet, i: &MultiIndex, jj: &MultiIndex) -> Result<f64> {
    j.derivative(i, jj)
}
