//! Separable rank of `H(ξ, η)`: sample matrices, generalized Wronskians,
//! pointwise span dependencies of ξ-derivatives, and the greedy index set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diastasis::HFunction;
use crate::domain::BoxDomain;
use crate::dsl::PotentialExpr;
use crate::error::{PkError, Result};
use crate::jets::{jet_lift, JetOptions, DEFAULT_ORDER_CAP};
use crate::linalg::{dot, lstsq, normalized_conditioning, pivoted_rank, OrthoBasis};
use crate::multiindex::MultiIndex;

/// Default relative pivot threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-8;
/// Default relative residual threshold for span membership.
pub const DEPENDENCY_TOL: f64 = 1e-7;

/// A table of values with labelled rows and columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub entries: DMatrix<f64>,
    pub provenance: String,
}

fn point_label(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
    format!("({})", parts.join(" "))
}

impl SampleMatrix {
    /// `[h(ξ_i, η_j)]`.
    pub fn from_fn<F>(h: F, xi_grid: &[Vec<f64>], eta_grid: &[Vec<f64>], provenance: &str) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> Result<f64>,
    {
        if xi_grid.is_empty() || eta_grid.is_empty() {
            return Err(PkError::InvalidInput("sample grids must be non-empty".into()));
        }
        let mut entries = DMatrix::zeros(xi_grid.len(), eta_grid.len());
        for (i, x) in xi_grid.iter().enumerate() {
            for (j, y) in eta_grid.iter().enumerate() {
                let v = h(x, y)?;
                if !v.is_finite() {
                    return Err(PkError::NonFinite { context: "sample matrix" });
                }
                entries[(i, j)] = v;
            }
        }
        Ok(Self {
            row_labels: xi_grid.iter().map(|p| point_label(p)).collect(),
            col_labels: eta_grid.iter().map(|p| point_label(p)).collect(),
            entries,
            provenance: provenance.to_string(),
        })
    }

    pub fn rank(&self, tol: f64) -> usize {
        pivoted_rank(&self.entries, tol).rank
    }

    /// CSV with a header row of column labels and a leading label column.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("row");
        for c in &self.col_labels {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (i, r) in self.row_labels.iter().enumerate() {
            out.push_str(r);
            for j in 0..self.entries.ncols() {
                out.push_str(&format!(",{:e}", self.entries[(i, j)]));
            }
            out.push('\n');
        }
        out
    }
}

/// Numerical rank of `[h(ξ_i, η_j)]` by complete pivoting with relative
/// pivot threshold `tol`.
pub fn sample_rank<F>(h: F, xi_grid: &[Vec<f64>], eta_grid: &[Vec<f64>], tol: f64) -> Result<usize>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    Ok(SampleMatrix::from_fn(h, xi_grid, eta_grid, "sample_rank")?.rank(tol))
}

/// Result of a generalized Wronskian search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WronskianOrder {
    Order { order: usize },
    /// Higher derivatives than `max_order` could still raise the order.
    Inconclusive { lower_bound: usize },
}

/// Order of `p` for the family `fs` (functions of `ξ` only; η is ignored).
///
/// Rows are derivative operators taken greedily in graded-lex order, row `j`
/// allowed only if its degree is at most `j`.
pub fn wronskian_order(fs: &[PotentialExpr], p: &[f64], max_order: usize, tol: f64) -> Result<WronskianOrder> {
    if fs.is_empty() {
        return Ok(WronskianOrder::Order { order: 0 });
    }
    let n = p.len();
    let zeros = vec![0.0; n];
    let mut cols = Vec::with_capacity(fs.len());
    for f in fs {
        if f.nvars() != n {
            return Err(PkError::DimensionMismatch { expected: n, found: f.nvars() });
        }
        let jet = jet_lift(f, p, &zeros, (max_order, 0), JetOptions::default())?;
        cols.push(jet.xi_derivatives());
    }
    let indices = MultiIndex::all_up_to(n, max_order);
    let mut basis = OrthoBasis::new();
    let mut size = 0usize;
    let mut degree = 0usize;
    for (r, idx) in indices.iter().enumerate() {
        if idx.degree() != degree {
            if size <= degree {
                return Ok(WronskianOrder::Order { order: size });
            }
            degree = idx.degree();
        }
        if idx.degree() > size {
            return Ok(WronskianOrder::Order { order: size });
        }
        let row: Vec<f64> = cols.iter().map(|c| c[r]).collect();
        if basis.push(&row, tol) {
            size += 1;
            if size == fs.len() {
                return Ok(WronskianOrder::Order { order: size });
            }
        }
    }
    if size <= max_order {
        Ok(WronskianOrder::Order { order: size })
    } else {
        Ok(WronskianOrder::Inconclusive { lower_bound: size })
    }
}

/// Whether the leading coefficient is taken as nonzero on a dense set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityStatus {
    /// Nonzero on at least 95% of the sampled points.
    AssumedSampled,
    NotEstablished,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependencyReport {
    #[serde(rename = "K")]
    pub k: MultiIndex,
    pub index_set: Vec<MultiIndex>,
    pub dependent: bool,
    pub xi_samples: Vec<Vec<f64>>,
    /// Per sampled ξ, the coefficients `a^I_K / a` of `∂^K H` on the rows of
    /// the index set.
    pub coefficients: Vec<Vec<f64>>,
    /// Largest relative residual over the sampled ξ.
    pub residual: f64,
    pub tolerance: f64,
    /// Conditioning of the index-set rows, the proxy for `|a(ξ)|`.
    pub leading_proxy: Vec<f64>,
    pub leading_at_origin: f64,
    pub nonzero_fraction: f64,
    pub density: DensityStatus,
}

pub(crate) fn derivative_rows(
    h: &HFunction,
    xi: &[f64],
    eta_samples: &[Vec<f64>],
    order: usize,
    opts: JetOptions,
) -> Result<DMatrix<f64>> {
    let nidx = MultiIndex::all_up_to(h.n(), order).len();
    let mut m = DMatrix::zeros(nidx, eta_samples.len());
    for (j, eta) in eta_samples.iter().enumerate() {
        let d = h.xi_derivatives(xi, eta, order, opts)?;
        for (i, v) in d.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

fn position(all: &[MultiIndex], i: &MultiIndex) -> Result<usize> {
    all.binary_search(i).map_err(|_| PkError::OrderOutOfRange { requested: i.degree(), available: 0 })
}

/// Coefficients of row `k` on `basis_rows` and the residual relative to the
/// larger of the target and the largest basis row, by least squares.
/// Rank-deficient bases are handled by the pseudo-inverse.
pub(crate) fn span_fit(basis_rows: &DMatrix<f64>, target: &DVector<f64>) -> (Vec<f64>, f64, bool) {
    let a = basis_rows.transpose();
    let full = lstsq(&a, target, 1e-12);
    let x = match &full {
        Some(x) => x.clone(),
        None => a.clone().svd(true, true).solve(target, 1e-12 * a.norm()).unwrap_or_else(|_| DVector::zeros(a.ncols())),
    };
    let r = &a * &x - target;
    let scale = basis_rows.row_iter().map(|row| row.norm()).fold(target.norm(), f64::max);
    let rel = if scale == 0.0 { 0.0 } else { r.norm() / scale };
    (x.iter().copied().collect(), rel, full.is_some())
}

/// Leading-coefficient proxy at `ξ`: conditioning of the index-set rows.
pub fn leading_proxy(
    h: &HFunction,
    index_set: &[MultiIndex],
    xi: &[f64],
    eta_samples: &[Vec<f64>],
    opts: JetOptions,
) -> Result<f64> {
    let order = index_set.iter().map(|i| i.degree()).max().unwrap_or(0);
    let all = MultiIndex::all_up_to(h.n(), order);
    let rows = derivative_rows(h, xi, eta_samples, order, opts)?;
    let sel = select_rows(&rows, &all, index_set)?;
    Ok(normalized_conditioning(&sel))
}

fn select_rows(rows: &DMatrix<f64>, all: &[MultiIndex], set: &[MultiIndex]) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(set.len(), rows.ncols());
    for (r, i) in set.iter().enumerate() {
        let p = position(all, i)?;
        out.set_row(r, &rows.row(p));
    }
    Ok(out)
}

/// Pointwise-in-ξ span test of `∂^K H` against `{∂^I H : I ∈ index_set}`
/// over the η samples.
pub fn dependency_check(
    h: &HFunction,
    k: &MultiIndex,
    index_set: &[MultiIndex],
    xi_samples: &[Vec<f64>],
    eta_samples: &[Vec<f64>],
    tol: f64,
) -> Result<DependencyReport> {
    let n = h.n();
    if k.nvars() != n || index_set.iter().any(|i| i.nvars() != n) {
        return Err(PkError::DimensionMismatch { expected: n, found: k.nvars() });
    }
    if eta_samples.len() < index_set.len() + 1 {
        return Err(PkError::DegenerateSamples {
            context: format!("{} eta samples for an index set of size {}", eta_samples.len(), index_set.len()),
        });
    }
    let order = index_set.iter().map(|i| i.degree()).chain([k.degree()]).max().unwrap_or(0);
    if order > DEFAULT_ORDER_CAP {
        return Err(PkError::OrderCap { requested: order, cap: DEFAULT_ORDER_CAP });
    }
    let opts = JetOptions::default();
    let all = MultiIndex::all_up_to(n, order);
    let kp = position(&all, k)?;
    let mut coefficients = Vec::with_capacity(xi_samples.len());
    let mut proxies = Vec::with_capacity(xi_samples.len());
    let mut residual = 0.0f64;
    let mut any_full = index_set.is_empty();
    for xi in xi_samples {
        let rows = derivative_rows(h, xi, eta_samples, order, opts)?;
        let basis = select_rows(&rows, &all, index_set)?;
        let target: DVector<f64> = rows.row(kp).transpose();
        if index_set.is_empty() {
            let rel = if target.norm() == 0.0 { 0.0 } else { 1.0 };
            residual = residual.max(rel);
            coefficients.push(Vec::new());
            proxies.push(0.0);
            continue;
        }
        let (c, rel, full) = span_fit(&basis, &target);
        any_full |= full;
        residual = residual.max(rel);
        coefficients.push(c);
        proxies.push(normalized_conditioning(&basis));
    }
    if !any_full && !xi_samples.is_empty() {
        return Err(PkError::DegenerateSamples {
            context: "index-set rows are rank deficient at every sampled xi; resample eta".into(),
        });
    }
    let zero = vec![0.0; n];
    let leading_at_origin = if index_set.is_empty() {
        0.0
    } else {
        leading_proxy(h, index_set, &zero, eta_samples, opts)?
    };
    let nonzero = proxies.iter().filter(|&&p| p > RANK_TOL).count();
    let nonzero_fraction = if proxies.is_empty() { 0.0 } else { nonzero as f64 / proxies.len() as f64 };
    Ok(DependencyReport {
        k: k.clone(),
        index_set: index_set.to_vec(),
        dependent: residual <= tol,
        xi_samples: xi_samples.to_vec(),
        coefficients,
        residual,
        tolerance: tol,
        leading_proxy: proxies,
        leading_at_origin,
        nonzero_fraction,
        density: if nonzero_fraction >= 0.95 { DensityStatus::AssumedSampled } else { DensityStatus::NotEstablished },
    })
}

/// The greedy index set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexSet {
    pub indices: Vec<MultiIndex>,
    /// Whether the scan found a degree with no independent candidate.
    pub stabilized: bool,
    /// Highest derivative degree examined.
    pub scanned_degree: usize,
}

impl IndexSet {
    /// A hand-written set, not certified by a scan.
    pub fn unverified(indices: Vec<MultiIndex>) -> Self {
        let scanned_degree = indices.iter().map(|i| i.degree()).max().unwrap_or(0);
        Self { indices, stabilized: false, scanned_degree }
    }

    #[allow(non_snake_case)]
    pub fn N(&self) -> usize {
        self.indices.len()
    }

    pub fn max_degree(&self) -> usize {
        self.indices.iter().map(|i| i.degree()).max().unwrap_or(0)
    }
}

/// Options for [`build_index_set`].
#[derive(Clone, Debug, PartialEq)]
pub struct IndexSetOptions {
    pub tol: f64,
    pub xi_samples: usize,
    pub seed: u64,
    /// Sampling box for ξ and η.
    pub domain: BoxDomain,
    /// Largest index set the scan will grow before giving up.
    pub max_rank: usize,
}

impl IndexSetOptions {
    pub fn new(domain: BoxDomain) -> Self {
        Self { tol: DEPENDENCY_TOL, xi_samples: 8, seed: 0, domain, max_rank: 64 }
    }
}

/// Greedy scan of ξ multi-indices in graded-lex order. A candidate joins the
/// set iff its row is outside the span of the current rows at no fewer than
/// half of the sampled ξ. The scan stops at the first degree
/// contributing no new index.
pub fn build_index_set(h: &HFunction, max_total_order: usize, opts: &IndexSetOptions) -> Result<IndexSet> {
    let n = h.n();
    if opts.domain.dim() != n {
        return Err(PkError::DimensionMismatch { expected: n, found: opts.domain.dim() });
    }
    if max_total_order > DEFAULT_ORDER_CAP {
        return Err(PkError::OrderCap { requested: max_total_order, cap: DEFAULT_ORDER_CAP });
    }
    let xi_samples = opts.domain.random_points(opts.xi_samples, opts.seed);
    let mut guess = 8usize;
    loop {
        let m = 2 * guess + 4;
        let eta_samples = opts.domain.random_points(m, opts.seed.wrapping_add(1 + guess as u64));
        match scan(h, max_total_order, opts, &xi_samples, &eta_samples, guess)? {
            Some(set) => return Ok(set),
            None if guess >= opts.max_rank => {
                return Err(PkError::RankNotCertified { cap: max_total_order, size: guess });
            }
            None => guess = (2 * guess).min(opts.max_rank),
        }
    }
}

/// `None` when the set outgrows `guess` (the η sample is then too small to
/// certify independence).
fn scan(
    h: &HFunction,
    max_total_order: usize,
    opts: &IndexSetOptions,
    xi_samples: &[Vec<f64>],
    eta_samples: &[Vec<f64>],
    guess: usize,
) -> Result<Option<IndexSet>> {
    let jopts = JetOptions::default();
    let tables: Vec<DMatrix<f64>> = xi_samples
        .iter()
        .map(|x| derivative_rows(h, x, eta_samples, max_total_order, jopts))
        .collect::<Result<_>>()?;
    let all = MultiIndex::all_up_to(h.n(), max_total_order);
    let mut bases = vec![OrthoBasis::new(); xi_samples.len()];
    // largest derivative row seen so far at each ξ; rounding noise in rows
    // that vanish identically is measured against it
    let mut scale = vec![0.0f64; xi_samples.len()];
    let mut indices = Vec::new();
    let mut degree = 0usize;
    let mut added_at_degree = false;
    for (r, idx) in all.iter().enumerate() {
        if idx.degree() != degree {
            if !added_at_degree {
                return Ok(Some(IndexSet { indices, stabilized: true, scanned_degree: degree }));
            }
            degree = idx.degree();
            added_at_degree = false;
        }
        let rows: Vec<Vec<f64>> = tables.iter().map(|t| t.row(r).iter().copied().collect()).collect();
        for (row, s) in rows.iter().zip(scale.iter_mut()) {
            *s = s.max(dot(row, row).sqrt());
        }
        let independent = |row: &[f64], b: &OrthoBasis, s: f64| {
            let (res, _) = b.residual(row);
            dot(&res, &res).sqrt() > opts.tol * s
        };
        let votes = rows.iter().zip(&bases).zip(&scale).filter(|((row, b), &s)| independent(row, b, s)).count();
        if 2 * votes >= rows.len().max(1) && votes > 0 {
            for ((row, b), &s) in rows.iter().zip(bases.iter_mut()).zip(&scale) {
                if independent(row, b, s) {
                    b.push(row, 0.0);
                }
            }
            indices.push(idx.clone());
            added_at_degree = true;
            if indices.len() > guess {
                return Ok(None);
            }
        }
    }
    if !added_at_degree {
        return Ok(Some(IndexSet { indices, stabilized: true, scanned_degree: degree }));
    }
    Err(PkError::RankNotCertified { cap: max_total_order, size: indices.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<Vec<f64>> {
        BoxDomain::interval(-1.0, 1.0).probe_points(n, 0)
    }

    fn direct(s: &str) -> HFunction {
        HFunction::direct(PotentialExpr::parse(s, 1).unwrap())
    }

    #[test]
    fn sample_rank_examples() {
        let g = grid(8);
        assert_eq!(sample_rank(|x, y| Ok(x[0] * y[0]), &g, &g, RANK_TOL).unwrap(), 1);
        let h = |x: &[f64], y: &[f64]| Ok(2.0 * x[0] * y[0] + 2.0 * (x[0] * y[0]).powi(2));
        assert_eq!(sample_rank(h, &g, &g, RANK_TOL).unwrap(), 2);
        assert_eq!(sample_rank(|_, _| Ok(0.0), &g, &g, RANK_TOL).unwrap(), 0);
        let big = |x: &[f64], y: &[f64]| Ok(1000.0 * (2.0 * x[0] * y[0] + 2.0 * (x[0] * y[0]).powi(2)));
        assert_eq!(sample_rank(big, &g, &g, RANK_TOL).unwrap(), 2);
    }

    #[test]
    fn csv_export_shape() {
        let g = grid(3);
        let m = SampleMatrix::from_fn(|x, y| Ok(x[0] + y[0]), &g, &g, "test").unwrap();
        let csv = m.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().all(|l| l.split(',').count() == 4));
    }

    #[test]
    fn wronskian_examples() {
        let f = |s: &str| PotentialExpr::parse(s, 1).unwrap();
        let fam = [f("1"), f("xi1"), f("xi1^2")];
        for p in [-0.7, 0.0, 2.0] {
            assert_eq!(wronskian_order(&fam, &[p], 4, 1e-10).unwrap(), WronskianOrder::Order { order: 3 });
        }
        let fam = [f("xi1"), f("2*xi1")];
        assert_eq!(wronskian_order(&fam, &[0.3], 4, 1e-10).unwrap(), WronskianOrder::Order { order: 1 });
        let fam = [f("bump(xi1,0)"), f("bump(xi1,1)")];
        assert_eq!(wronskian_order(&fam, &[0.5], 4, 1e-10).unwrap(), WronskianOrder::Order { order: 1 });
        let fam = [f("1"), f("xi1"), f("xi1^2"), f("xi1^3")];
        assert_eq!(
            wronskian_order(&fam, &[0.1], 2, 1e-10).unwrap(),
            WronskianOrder::Inconclusive { lower_bound: 3 }
        );
    }

    #[test]
    fn dependency_examples() {
        let xs = BoxDomain::interval(-1.0, 1.0).random_points(6, 1);
        let ys = BoxDomain::interval(-1.0, 1.0).random_points(10, 2);
        let h = direct("xi1*eta1 + xi1^2*eta1^2");
        let r = dependency_check(&h, &MultiIndex::from_slice(&[2]), &[MultiIndex::zero(1), MultiIndex::unit(1, 0)], &xs, &ys, DEPENDENCY_TOL)
            .unwrap();
        assert!(r.dependent, "{}", r.residual);
        assert_eq!(r.leading_at_origin, 0.0);

        let flat = HFunction::direct(PotentialExpr::parse("xi1*eta1 + xi2*eta2", 2).unwrap());
        let xs2 = BoxDomain::cube(2, 1.0).random_points(6, 1);
        let ys2 = BoxDomain::cube(2, 1.0).random_points(10, 2);
        let r = dependency_check(&flat, &MultiIndex::unit(2, 0), &[MultiIndex::zero(2)], &xs2, &ys2, DEPENDENCY_TOL).unwrap();
        assert!(!r.dependent);
    }

    #[test]
    fn too_few_eta_samples_is_an_error() {
        let h = direct("xi1*eta1");
        let ys = grid(1);
        let e = dependency_check(&h, &MultiIndex::unit(1, 0), &[MultiIndex::zero(1)], &grid(3), &ys, DEPENDENCY_TOL);
        assert!(matches!(e, Err(PkError::DegenerateSamples { .. })));
    }

    #[test]
    fn index_set_examples() {
        let opts = IndexSetOptions::new(BoxDomain::interval(-1.0, 1.0));
        let s = build_index_set(&direct("xi1*eta1"), 6, &opts).unwrap();
        assert_eq!(s.indices, vec![MultiIndex::zero(1)]);
        let s = build_index_set(&direct("xi1*eta1 + xi1^2*eta1^2"), 6, &opts).unwrap();
        assert_eq!(s.N(), 2);
        assert!(s.stabilized);
        let s = build_index_set(&direct("0*xi1"), 6, &opts).unwrap();
        assert_eq!(s.N(), 0);
    }

    #[test]
    fn index_set_does_not_stabilize_for_log() {
        let mut opts = IndexSetOptions::new(BoxDomain::interval(-0.4, 0.4));
        opts.max_rank = 16;
        let h = direct("0.5*log(1+2*xi1*eta1)");
        assert!(matches!(build_index_set(&h, 10, &opts), Err(PkError::RankNotCertified { .. })));
    }
}
