//! Factorizations `H(ξ, η) = Σ_α u_α(ξ) v_α(η)`, the immersions built from
//! them, and their verification and alignment.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diastasis::{hereditary_check, BiFn, DiastasisField, HFunction, HereditaryOptions, HereditaryReport};
use crate::domain::BoxDomain;
use crate::error::{PkError, Result};
use crate::jets::JetOptions;
use crate::linalg::{lstsq_matrix, normalized_conditioning, pivoted_rank};
use crate::multiindex::MultiIndex;
use crate::paracomplex::{is_d_unitary, DMatrix as SplitMatrix, DVector as SplitVector, NullPair};
use crate::pfaffian::{pfaffian_solve, FnField, PfaffianConfig};
use crate::separability::{derivative_rows, span_fit, IndexSet};
use crate::spaceforms::{AmbientPoint, SpaceFormKind, SpaceFormModel};

/// A vector-valued function of one block of variables.
pub type VecFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;
/// Null components of a map of `(ξ, η)`.
pub type PairFn = Arc<dyn Fn(&[f64], &[f64]) -> Result<Vec<NullPair>> + Send + Sync>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pivot {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub value: f64,
}

/// How a decomposition was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ConstructionLog {
    Cross {
        pivots: Vec<Pivot>,
        /// Grid residual relative to `max |H|`, before each step.
        residual_history: Vec<f64>,
        grid_size: usize,
    },
    Pde {
        base_xi: Vec<f64>,
        index_set: Vec<MultiIndex>,
        eta_nodes: Vec<Vec<f64>>,
        leading_proxy: f64,
        /// Largest coefficient-fit residual of the `A_k` estimate at the base point.
        fit_residual: f64,
        /// Largest difference between the Pfaffian and extension values of `u`.
        pfaffian_gap: Option<f64>,
        u_route: URoute,
        notes: Vec<String>,
    },
    Monomial {
        indices: Vec<MultiIndex>,
        weights: Vec<f64>,
    },
    Empty,
}

/// A finite separable decomposition.
#[derive(Clone)]
pub struct SeparableDecomposition {
    n: usize,
    rank: usize,
    u: VecFn,
    v: VecFn,
    domain: BoxDomain,
    log: ConstructionLog,
}

/// Serializable view of a decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    #[serde(rename = "N")]
    pub rank: usize,
    pub n: usize,
    pub domain: BoxDomain,
    pub log: ConstructionLog,
}

impl SeparableDecomposition {
    pub fn new(n: usize, rank: usize, u: VecFn, v: VecFn, domain: BoxDomain, log: ConstructionLog) -> Self {
        Self { n, rank, u, v, domain, log }
    }

    fn empty(n: usize, domain: BoxDomain) -> Self {
        let z: VecFn = Arc::new(|_: &[f64]| Ok(Vec::new()));
        Self::new(n, 0, z.clone(), z, domain, ConstructionLog::Empty)
    }

    #[allow(non_snake_case)]
    pub fn N(&self) -> usize {
        self.rank
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn log(&self) -> &ConstructionLog {
        &self.log
    }

    /// `(u_1(ξ), …, u_N(ξ))`.
    pub fn u(&self, xi: &[f64]) -> Result<Vec<f64>> {
        (self.u)(xi)
    }

    /// `(v_1(η), …, v_N(η))`.
    pub fn v(&self, eta: &[f64]) -> Result<Vec<f64>> {
        (self.v)(eta)
    }

    pub fn u_fn(&self) -> VecFn {
        self.u.clone()
    }

    pub fn v_fn(&self) -> VecFn {
        self.v.clone()
    }

    /// `Σ_α u_α(ξ) v_α(η)`.
    pub fn eval(&self, xi: &[f64], eta: &[f64]) -> Result<f64> {
        let (u, v) = (self.u(xi)?, self.v(eta)?);
        Ok(u.iter().zip(&v).map(|(a, b)| a * b).sum())
    }

    /// `max |H − Σ u v|` over the given points.
    pub fn sup_residual(&self, h: &BiFn, xi: &[Vec<f64>], eta: &[Vec<f64>]) -> Result<f64> {
        let us: Vec<Vec<f64>> = xi.iter().map(|x| self.u(x)).collect::<Result<_>>()?;
        let vs: Vec<Vec<f64>> = eta.iter().map(|y| self.v(y)).collect::<Result<_>>()?;
        let mut worst = 0.0f64;
        for (x, u) in xi.iter().zip(&us) {
            for (y, v) in eta.iter().zip(&vs) {
                let s: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                worst = worst.max((h(x, y)? - s).abs());
            }
        }
        Ok(worst)
    }

    pub fn summary(&self) -> DecompositionSummary {
        DecompositionSummary { rank: self.rank, n: self.n, domain: self.domain.clone(), log: self.log.clone() }
    }
}

impl fmt::Debug for SeparableDecomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SeparableDecomposition")
            .field("n", &self.n)
            .field("N", &self.rank)
            .field("domain", &self.domain)
            .field("log", &self.log)
            .finish()
    }
}

/// Settings for [`cross_decompose`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossConfig {
    /// Stop when the grid residual is at most `tol · max |H|`.
    pub tol: f64,
    pub max_n: usize,
    pub grid: usize,
    pub seed: u64,
    pub refine: bool,
}

impl Default for CrossConfig {
    fn default() -> Self {
        Self { tol: 1e-9, max_n: 12, grid: 24, seed: 0, refine: true }
    }
}

struct Skeleton {
    h: BiFn,
    xi_piv: Vec<Vec<f64>>,
    eta_piv: Vec<Vec<f64>>,
    /// `u_k = Σ_b alpha[k][b] H(·, η*_b)`.
    alpha: Vec<Vec<f64>>,
    /// `v_k = Σ_a beta[k][a] H(ξ*_a, ·)`.
    beta: Vec<Vec<f64>>,
}

impl Skeleton {
    fn u_all(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let r: Vec<f64> = self.eta_piv.iter().map(|e| (self.h)(xi, e)).collect::<Result<_>>()?;
        Ok(combine(&self.alpha, &r))
    }

    fn v_all(&self, eta: &[f64]) -> Result<Vec<f64>> {
        let c: Vec<f64> = self.xi_piv.iter().map(|x| (self.h)(x, eta)).collect::<Result<_>>()?;
        Ok(combine(&self.beta, &c))
    }

    fn residual(&self, xi: &[f64], eta: &[f64]) -> Result<f64> {
        let (u, v) = (self.u_all(xi)?, self.v_all(eta)?);
        Ok((self.h)(xi, eta)? - u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>())
    }
}

fn combine(coeffs: &[Vec<f64>], vals: &[f64]) -> Vec<f64> {
    coeffs.iter().map(|row| row.iter().zip(vals).map(|(a, b)| a * b).sum()).collect()
}

fn golden_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn refine_pivot(sk: &Skeleton, domain: &BoxDomain, xi: &mut [f64], eta: &mut [f64], width: &[f64]) -> Result<f64> {
    let abs_res = |x: &[f64], y: &[f64]| sk.residual(x, y).map(f64::abs).unwrap_or(0.0);
    let mut best = abs_res(xi, eta);
    let n = xi.len();
    for coord in 0..2 * n {
        let (block_is_xi, k) = (coord < n, coord % n);
        let centre = if block_is_xi { xi[k] } else { eta[k] };
        let lo = (centre - width[k]).max(domain.lo[k]);
        let hi = (centre + width[k]).min(domain.hi[k]);
        if hi <= lo {
            continue;
        }
        let eval_at = |t: f64| {
            let (mut x, mut y) = (xi.to_vec(), eta.to_vec());
            if block_is_xi {
                x[k] = t;
            } else {
                y[k] = t;
            }
            abs_res(&x, &y)
        };
        let (t, val) = golden_max(eval_at, lo, hi, 30);
        if val > best {
            best = val;
            if block_is_xi {
                xi[k] = t;
            } else {
                eta[k] = t;
            }
        }
    }
    sk.residual(xi, eta)
}

fn check_axes(h: &BiFn, xs: &[Vec<f64>], ys: &[Vec<f64>], scale: f64) -> Result<()> {
    let z = vec![0.0; xs[0].len()];
    let worst = xs
        .iter()
        .map(|x| h(x, &z))
        .chain(ys.iter().map(|y| h(&z, y)))
        .try_fold(0.0f64, |m, v| v.map(|v| m.max(v.abs())))?;
    if worst > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(PkError::InvalidInput(format!(
            "H must vanish on xi = 0 and eta = 0 (found |H| = {worst:e})"
        )));
    }
    Ok(())
}

/// Greedy skeleton (cross) decomposition with complete pivoting on a grid
/// and golden-section refinement of each pivot.
pub fn cross_decompose(h: &BiFn, domain: &BoxDomain, cfg: &CrossConfig) -> Result<SeparableDecomposition> {
    let n = domain.dim();
    let g = cfg.grid.max(2 * cfg.max_n + 4);
    let xs = domain.probe_points(g, cfg.seed);
    let ys = domain.probe_points(g, cfg.seed.wrapping_add(0x5bd1));
    let mut r = DMatrix::zeros(g, g);
    for (i, x) in xs.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            let v = h(x, y)?;
            if !v.is_finite() {
                return Err(PkError::NonFinite { context: "H on the pivot grid" });
            }
            r[(i, j)] = v;
        }
    }
    let scale = r.amax();
    check_axes(h, &xs, &ys, scale)?;
    if scale == 0.0 {
        return Ok(SeparableDecomposition::empty(n, domain.clone()));
    }
    let width: Vec<f64> = domain.lo.iter().zip(&domain.hi).map(|(a, b)| (b - a) / (g - 1) as f64).collect();
    let mut sk = Skeleton { h: h.clone(), xi_piv: vec![], eta_piv: vec![], alpha: vec![], beta: vec![] };
    let mut pivots = Vec::new();
    let mut history = Vec::new();
    loop {
        let (mut bi, mut bj, mut best) = (0, 0, 0.0f64);
        for j in 0..g {
            for i in 0..g {
                if r[(i, j)].abs() > best {
                    best = r[(i, j)].abs();
                    bi = i;
                    bj = j;
                }
            }
        }
        history.push(best / scale);
        if best <= cfg.tol * scale {
            break;
        }
        let k = sk.xi_piv.len();
        if k == cfg.max_n {
            return Err(PkError::NotFiniteRank { cap: cfg.max_n, residual: best / scale });
        }
        let (mut xp, mut yp) = (xs[bi].clone(), ys[bj].clone());
        let p = if cfg.refine {
            refine_pivot(&sk, domain, &mut xp, &mut yp, &width)?
        } else {
            r[(bi, bj)]
        };
        let (p, xp, yp) = if p.abs() >= best { (p, xp, yp) } else { (r[(bi, bj)], xs[bi].clone(), ys[bj].clone()) };
        // coefficients of the new pair in the skeleton basis
        let u_at_xp = sk.u_all(&xp)?;
        let v_at_yp = sk.v_all(&yp)?;
        let mut a_new = vec![0.0; k + 1];
        let mut b_new = vec![0.0; k + 1];
        a_new[k] = 1.0;
        b_new[k] = 1.0;
        for j in 0..k {
            for (b, c) in sk.alpha[j].iter().enumerate() {
                a_new[b] -= v_at_yp[j] * c;
            }
            for (a, c) in sk.beta[j].iter().enumerate() {
                b_new[a] -= u_at_xp[j] * c;
            }
        }
        for c in &mut a_new {
            *c /= p;
        }
        // grid values of the new pair
        let mut ucol = vec![0.0; g];
        let mut vcol = vec![0.0; g];
        let us_grid: Vec<Vec<f64>> = xs.iter().map(|x| sk.u_all(x)).collect::<Result<_>>()?;
        let vs_grid: Vec<Vec<f64>> = ys.iter().map(|y| sk.v_all(y)).collect::<Result<_>>()?;
        for i in 0..g {
            let s: f64 = (0..k).map(|j| us_grid[i][j] * v_at_yp[j]).sum();
            ucol[i] = (h(&xs[i], &yp)? - s) / p;
        }
        for l in 0..g {
            let s: f64 = (0..k).map(|j| u_at_xp[j] * vs_grid[l][j]).sum();
            vcol[l] = h(&xp, &ys[l])? - s;
        }
        for j in 0..g {
            for i in 0..g {
                r[(i, j)] -= ucol[i] * vcol[j];
            }
        }
        for row in sk.alpha.iter_mut().chain(sk.beta.iter_mut()) {
            row.push(0.0);
        }
        sk.alpha.push(a_new);
        sk.beta.push(b_new);
        pivots.push(Pivot { xi: xp.clone(), eta: yp.clone(), value: p });
        sk.xi_piv.push(xp);
        sk.eta_piv.push(yp);
    }
    let rank = sk.xi_piv.len();
    let sk = Arc::new(sk);
    let (s1, s2) = (sk.clone(), sk);
    Ok(SeparableDecomposition::new(
        n,
        rank,
        Arc::new(move |x: &[f64]| s1.u_all(x)),
        Arc::new(move |y: &[f64]| s2.v_all(y)),
        domain.clone(),
        ConstructionLog::Cross { pivots, residual_history: history, grid_size: g },
    ))
}

/// Which formula supplies `u` in [`pde_decompose`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum URoute {
    /// `u(ξ) = (H(ξ, η_j))_j · [v_α(η_j)]⁻¹`, valid on the whole box.
    Extension,
    /// `u = e_1 U⁻¹` from the Pfaffian system where the path from the base
    /// point stays in the nondegenerate region, the extension elsewhere.
    Pfaffian,
}

/// Settings for [`pde_decompose`].
#[derive(Clone, Debug, PartialEq)]
pub struct PdeConfig {
    pub seed: u64,
    pub xi_probes: usize,
    /// Fraction of the base conditioning a path must keep to use the
    /// Pfaffian route.
    pub omega_fraction: f64,
    pub pfaffian: PfaffianConfig,
    pub u_route: URoute,
    /// Points at which the two routes for `u` are compared.
    pub gap_probes: usize,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            xi_probes: 32,
            omega_fraction: 0.25,
            pfaffian: PfaffianConfig { step: 1e-2, richardson: false, ..PfaffianConfig::default() },
            u_route: URoute::Extension,
            gap_probes: 4,
        }
    }
}

struct PdeData {
    h: HFunction,
    set: Vec<MultiIndex>,
    all: Vec<MultiIndex>,
    order: usize,
    etas: Vec<Vec<f64>>,
}

impl PdeData {
    fn rows(&self, xi: &[f64]) -> Result<DMatrix<f64>> {
        derivative_rows(&self.h, xi, &self.etas, self.order, JetOptions::default())
    }

    fn set_rows(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.set.len(), rows.ncols());
        for (r, i) in self.set.iter().enumerate() {
            let p = self.all.binary_search(i).expect("index set within derivative order");
            out.set_row(r, &rows.row(p));
        }
        out
    }

    fn conditioning(&self, xi: &[f64]) -> Result<f64> {
        Ok(normalized_conditioning(&self.set_rows(&self.rows(xi)?)))
    }

    /// `A_k(ξ) = −C_k(ξ)` and the largest fit residual.
    fn a_field(&self, xi: &[f64]) -> Result<(Vec<DMatrix<f64>>, f64)> {
        let rows = self.rows(xi)?;
        let basis = self.set_rows(&rows);
        let nn = self.set.len();
        let n = self.h.n();
        let mut worst = 0.0f64;
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut c = DMatrix::zeros(nn, nn);
            for (a, l) in self.set.iter().enumerate() {
                let kk = l.plus_unit(k);
                if let Some(b) = self.set.iter().position(|i| *i == kk) {
                    c[(a, b)] = 1.0;
                } else {
                    let p = self.all.binary_search(&kk).expect("derivative order covers I + e_k");
                    let target: DVector<f64> = rows.row(p).transpose();
                    let (coef, rel, _) = span_fit(&basis, &target);
                    worst = worst.max(rel);
                    for (b, v) in coef.into_iter().enumerate() {
                        c[(a, b)] = v;
                    }
                }
            }
            out.push(-c);
        }
        Ok((out, worst))
    }
}

/// Decomposition through the Pfaffian system built from the index set.
pub fn pde_decompose(h: &HFunction, index_set: &IndexSet, domain: &BoxDomain, cfg: &PdeConfig) -> Result<SeparableDecomposition> {
    let n = h.n();
    if domain.dim() != n {
        return Err(PkError::DimensionMismatch { expected: n, found: domain.dim() });
    }
    if !index_set.stabilized {
        return Err(PkError::RankNotCertified { cap: index_set.scanned_degree, size: index_set.N() });
    }
    let nn = index_set.N();
    if nn == 0 {
        return Ok(SeparableDecomposition::empty(n, domain.clone()));
    }
    if !index_set.indices[0].is_zero() {
        return Err(PkError::InvalidInput("index set must start with the zero multi-index".into()));
    }
    let order = index_set.max_degree() + 1;
    let data = Arc::new(PdeData {
        h: h.clone(),
        set: index_set.indices.clone(),
        all: MultiIndex::all_up_to(n, order),
        order,
        etas: domain.random_points(2 * nn + 4, cfg.seed.wrapping_add(101)),
    });

    let probes = domain.probe_points(cfg.xi_probes, cfg.seed.wrapping_add(202));
    let mut base = probes[0].clone();
    let mut best = -1.0;
    for p in &probes {
        let c = data.conditioning(p)?;
        if c > best {
            best = c;
            base = p.clone();
        }
    }
    if !(best > 0.0) {
        return Err(PkError::SingularMatrix { context: "index-set rows are degenerate at every probe".into() });
    }
    let (_, fit_residual) = data.a_field(&base)?;

    let vorder = index_set.max_degree();
    let positions: Vec<usize> = {
        let vall = MultiIndex::all_up_to(n, vorder);
        data.set.iter().map(|i| vall.binary_search(i).expect("index in range")).collect()
    };
    let (hv, bv) = (h.clone(), base.clone());
    let v: VecFn = Arc::new(move |eta: &[f64]| {
        let d = hv.xi_derivatives(&bv, eta, vorder, JetOptions::default())?;
        Ok(positions.iter().map(|&p| d[p]).collect())
    });

    let cands = domain.random_points(4 * nn + 8, cfg.seed.wrapping_add(303));
    let vmat = DMatrix::from_rows(
        &cands
            .iter()
            .map(|e| v(e).map(nalgebra::RowDVector::from_vec))
            .collect::<Result<Vec<_>>>()?,
    );
    let piv = pivoted_rank(&vmat, 1e-10);
    if piv.rank < nn {
        return Err(PkError::SingularMatrix { context: format!("v spans rank {} < {nn} on the eta nodes", piv.rank) });
    }
    let nodes: Vec<Vec<f64>> = piv.pivots.iter().take(nn).map(|&(row, _, _)| cands[row].clone()).collect();
    let vn = DMatrix::from_fn(nn, nn, |j, a| vmat[(piv.pivots[j].0, a)]);
    let vn_inv = vn.clone().try_inverse().ok_or(PkError::SingularMatrix { context: "v at eta nodes".into() })?;

    let (he, nodes_e) = (h.clone(), nodes.clone());
    let extension: VecFn = Arc::new(move |xi: &[f64]| {
        let hv: Vec<f64> = nodes_e.iter().map(|e| he.eval(xi, e)).collect::<Result<_>>()?;
        Ok((&vn_inv * DVector::from_vec(hv)).iter().copied().collect())
    });

    let field_data = data.clone();
    let field = FnField::new(n, nn, move |xi: &[f64]| Ok(field_data.a_field(xi)?.0));
    let threshold = cfg.omega_fraction * best;
    let pf_cfg = cfg.pfaffian.clone();
    let (path_data, path_base) = (data.clone(), base.clone());
    let pfaffian_u = move |xi: &[f64]| -> Result<Option<Vec<f64>>> {
        let mut x = path_base.clone();
        for k in 0..n {
            for s in 1..=8 {
                let mut y = x.clone();
                y[k] = path_base[k] + (xi[k] - path_base[k]) * s as f64 / 8.0;
                if path_data.conditioning(&y)? < threshold {
                    return Ok(None);
                }
            }
            x[k] = xi[k];
        }
        let sol = pfaffian_solve(&field, &path_base, &DMatrix::identity(nn, nn), xi, &pf_cfg)?;
        let inv = sol.u.try_inverse().ok_or(PkError::SingularMatrix { context: "pfaffian solution".into() })?;
        Ok(Some(inv.row(0).iter().copied().collect()))
    };

    let mut notes = Vec::new();
    let mut gap: Option<f64> = None;
    let gap_points = domain.random_points(cfg.gap_probes, cfg.seed.wrapping_add(404));
    for p in gap_points.iter().chain(std::iter::once(&base)) {
        match pfaffian_u(p) {
            Ok(Some(up)) => {
                let ue = extension(p)?;
                let scale = ue.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                let d = up.iter().zip(&ue).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
                gap = Some(gap.map_or(d, |g: f64| g.max(d)));
            }
            Ok(None) => {}
            Err(e) => notes.push(format!("pfaffian route failed at {p:?}: {e}")),
        }
    }
    notes.push("open dense nondegenerate region: sampled".into());

    let u: VecFn = match cfg.u_route {
        URoute::Extension => extension,
        URoute::Pfaffian => {
            let ext = extension.clone();
            Arc::new(move |xi: &[f64]| match pfaffian_u(xi)? {
                Some(u) => Ok(u),
                None => ext(xi),
            })
        }
    };
    Ok(SeparableDecomposition::new(
        n,
        nn,
        u,
        v,
        domain.clone(),
        ConstructionLog::Pde {
            base_xi: base,
            index_set: index_set.indices.clone(),
            eta_nodes: nodes,
            leading_proxy: best,
            fit_residual,
            pfaffian_gap: gap,
            u_route: cfg.u_route,
            notes,
        },
    ))
}

#[derive(Clone)]
enum ImmersionMap {
    Split { u: VecFn, v: VecFn },
    General(PairFn),
}

/// A map into a model space form given by its null components.
#[derive(Clone)]
pub struct Immersion {
    target: SpaceFormModel,
    n: usize,
    components: usize,
    map: ImmersionMap,
}

/// Serializable descriptor of an immersion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImmersionSummary {
    pub target: SpaceFormModel,
    pub target_kind: SpaceFormKind,
    pub n: usize,
    pub components: usize,
    pub full: bool,
    pub split_by_construction: bool,
}

impl Immersion {
    fn check(target: &SpaceFormModel, components: usize) -> Result<()> {
        if components == 0 {
            return Err(PkError::InvalidInput("an immersion needs at least one component".into()));
        }
        if components > target.dim {
            return Err(PkError::DimensionMismatch { expected: target.dim, found: components });
        }
        Ok(())
    }

    /// Components `u_α(ξ) e + v_α(η) ē`.
    pub fn split(target: SpaceFormModel, n: usize, components: usize, u: VecFn, v: VecFn) -> Result<Self> {
        Self::check(&target, components)?;
        Ok(Self { target, n, components, map: ImmersionMap::Split { u, v } })
    }

    /// Components given as arbitrary functions of `(ξ, η)`.
    pub fn general(target: SpaceFormModel, n: usize, components: usize, f: PairFn) -> Result<Self> {
        Self::check(&target, components)?;
        Ok(Self { target, n, components, map: ImmersionMap::General(f) })
    }

    pub fn target(&self) -> &SpaceFormModel {
        &self.target
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Uses every ambient dimension.
    pub fn is_full(&self) -> bool {
        self.components == self.target.dim
    }

    pub fn is_split(&self) -> bool {
        matches!(self.map, ImmersionMap::Split { .. })
    }

    pub fn null_components(&self, xi: &[f64], eta: &[f64]) -> Result<Vec<NullPair>> {
        let pairs = match &self.map {
            ImmersionMap::Split { u, v } => {
                let (u, v) = (u(xi)?, v(eta)?);
                if u.len() != v.len() {
                    return Err(PkError::DimensionMismatch { expected: u.len(), found: v.len() });
                }
                u.into_iter().zip(v).map(|(a, b)| NullPair::new(a, b)).collect()
            }
            ImmersionMap::General(f) => f(xi, eta)?,
        };
        if pairs.len() != self.components {
            return Err(PkError::DimensionMismatch { expected: self.components, found: pairs.len() });
        }
        Ok(pairs)
    }

    /// The image point; flat targets get trailing zeros, projective targets
    /// the homogeneous lift `[1 : √2 (u_α e + v_α ē) : …]`.
    pub fn point(&self, xi: &[f64], eta: &[f64]) -> Result<AmbientPoint> {
        let pairs = self.null_components(xi, eta)?;
        Ok(match self.target.kind() {
            SpaceFormKind::Flat => {
                let mut padded = pairs;
                padded.resize(self.target.dim, NullPair::new(0.0, 0.0));
                AmbientPoint::Flat(SplitVector::from_null(&padded))
            }
            SpaceFormKind::Projective => AmbientPoint::projective_from_chart(&pairs, self.target.dim),
        })
    }

    pub fn summary(&self) -> ImmersionSummary {
        ImmersionSummary {
            target: self.target,
            target_kind: self.target.kind(),
            n: self.n,
            components: self.components,
            full: self.is_full(),
            split_by_construction: self.is_split(),
        }
    }
}

impl fmt::Debug for Immersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Immersion({:?})", self.summary())
    }
}

/// Immersion whose α-th null component is `(u_α(ξ), v_α(η))`.
pub fn assemble_immersion(dec: &SeparableDecomposition, target: SpaceFormModel) -> Result<Immersion> {
    if dec.N() == 0 {
        return Err(PkError::InvalidInput("a zero decomposition does not define an immersion".into()));
    }
    Immersion::split(target, dec.n(), dec.N(), dec.u_fn(), dec.v_fn())
}

/// Settings for [`align`].
#[derive(Clone, Debug, PartialEq)]
pub struct AlignOptions {
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self { samples: 40, seed: 0, tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignReport {
    /// `P` with `u₂ = Pᵀ u₁` (rows of `U₁ P = U₂`).
    pub p: Vec<Vec<f64>>,
    /// Relative mismatch of `U₁ P` against `U₂` and of `V₁ P⁻ᵀ` against `V₂`.
    pub residual: f64,
    /// `max |Σ u₁ v₁ − Σ u₂ v₂|` at the sampled pairs.
    pub norm_residual: f64,
    pub invertible: bool,
    pub conditioning: f64,
    /// Whether `Pᵀ e + P⁻¹ ē` is D-unitary.
    pub d_unitary: bool,
    pub passed: bool,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn tabulate(f: impl Fn(&[f64]) -> Result<Vec<f64>>, pts: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(pts.len(), cols);
    for (i, p) in pts.iter().enumerate() {
        let row = f(p)?;
        if row.len() != cols {
            return Err(PkError::DimensionMismatch { expected: cols, found: row.len() });
        }
        for (j, v) in row.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

/// Real invertible `P` carrying `d1` to `d2` (`u ↦ Pᵀu`, `v ↦ P⁻¹v`).
pub fn align(d1: &SeparableDecomposition, d2: &SeparableDecomposition, opts: &AlignOptions) -> Result<AlignReport> {
    if d1.N() != d2.N() {
        return Err(PkError::DimensionMismatch { expected: d1.N(), found: d2.N() });
    }
    if d1.n() != d2.n() {
        return Err(PkError::DimensionMismatch { expected: d1.n(), found: d2.n() });
    }
    let nn = d1.N();
    let samples = opts.samples.max(2 * nn + 2);
    let xs = d1.domain().random_points(samples, opts.seed);
    let ys = d1.domain().random_points(samples, opts.seed.wrapping_add(1));
    let u1 = tabulate(|x| d1.u(x), &xs, nn)?;
    let u2 = tabulate(|x| d2.u(x), &xs, nn)?;
    let v1 = tabulate(|y| d1.v(y), &ys, nn)?;
    let v2 = tabulate(|y| d2.v(y), &ys, nn)?;
    let degenerate = |m: &DMatrix<f64>| normalized_conditioning(&m.transpose()) <= 1e-12;
    if nn > 0 && (degenerate(&u1) || degenerate(&v1)) {
        return Err(PkError::DegenerateSamples { context: "decomposition factors are rank deficient on the samples".into() });
    }
    let p = lstsq_matrix(&u1, &u2, 1e-12)
        .ok_or_else(|| PkError::DegenerateSamples { context: "u samples are rank deficient".into() })?;
    let sv = p.singular_values();
    let conditioning = if nn == 0 || sv.max() == 0.0 { 0.0 } else { sv.min() / sv.max() };
    let invertible = conditioning > 1e-12;
    let p_inv = p.clone().try_inverse();
    let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax() / b.amax().max(f64::MIN_POSITIVE);
    let ru = rel(&(&u1 * &p), &u2);
    let (rv, d_unitary) = match &p_inv {
        Some(pi) => {
            let rv = rel(&(&v1 * pi.transpose()), &v2);
            let pt: Vec<f64> = to_rows(&p.transpose()).concat();
            let q: Vec<f64> = to_rows(pi).concat();
            let a = SplitMatrix::from_null_blocks(&pt, &q, nn)?;
            (rv, is_d_unitary(&a, 1e-9))
        }
        None => (f64::INFINITY, false),
    };
    let residual = ru.max(rv);
    let mut norm_residual = 0.0f64;
    for (i, j) in (0..samples).map(|i| (i, (i * 7 + 3) % samples)) {
        let s1: f64 = u1.row(i).iter().zip(v1.row(j).iter()).map(|(a, b)| a * b).sum();
        let s2: f64 = u2.row(i).iter().zip(v2.row(j).iter()).map(|(a, b)| a * b).sum();
        norm_residual = norm_residual.max((s1 - s2).abs());
    }
    Ok(AlignReport {
        p: to_rows(&p),
        residual,
        norm_residual,
        invertible,
        conditioning,
        d_unitary,
        passed: invertible && residual <= opts.tol,
    })
}

/// Settings for [`verify_immersion`].
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub hereditary_tol: f64,
    pub holomorphy_tol: f64,
    pub sub_box: Option<BoxDomain>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { samples: 100, seed: 0, hereditary_tol: 1e-9, holomorphy_tol: 1e-7, sub_box: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolomorphyReport {
    /// `max |∂u_α/∂η_k|`.
    pub max_du_deta: f64,
    /// `max |∂v_α/∂ξ_k|`.
    pub max_dv_dxi: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub hereditary: HereditaryReport,
    pub para_holomorphy: HolomorphyReport,
    pub passed: bool,
}

const HOLO_STEP: f64 = 1e-5;

/// Hereditary identity and para-holomorphy of `f` against `source`.
pub fn verify_immersion(f: &Immersion, source: &DiastasisField, opts: &VerifyOptions) -> Result<VerifyReport> {
    let hereditary = hereditary_check(
        source,
        f,
        &HereditaryOptions { samples: opts.samples, tol: opts.hereditary_tol, seed: opts.seed, sub_box: opts.sub_box.clone() },
    )?;
    let bx = opts.sub_box.clone().unwrap_or_else(|| source.domain().clone());
    let n = f.n();
    let (mut du, mut dv) = (0.0f64, 0.0f64);
    if !f.is_split() {
        let xs = bx.random_points(opts.samples, opts.seed.wrapping_add(7));
        let ys = bx.random_points(opts.samples, opts.seed.wrapping_add(8));
        for (x, y) in xs.iter().zip(&ys) {
            for k in 0..n {
                let (mut yp, mut ym) = (y.clone(), y.clone());
                yp[k] += HOLO_STEP;
                ym[k] -= HOLO_STEP;
                let (a, b) = (f.null_components(x, &yp)?, f.null_components(x, &ym)?);
                for (p, q) in a.iter().zip(&b) {
                    du = du.max(((p.u - q.u) / (2.0 * HOLO_STEP)).abs());
                }
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[k] += HOLO_STEP;
                xm[k] -= HOLO_STEP;
                let (a, b) = (f.null_components(&xp, y)?, f.null_components(&xm, y)?);
                for (p, q) in a.iter().zip(&b) {
                    dv = dv.max(((p.v - q.v) / (2.0 * HOLO_STEP)).abs());
                }
            }
        }
    }
    let para_holomorphy = HolomorphyReport {
        max_du_deta: du,
        max_dv_dxi: dv,
        passed: du <= opts.holomorphy_tol && dv <= opts.holomorphy_tol,
    };
    Ok(VerifyReport { passed: hereditary.passed && para_holomorphy.passed, hereditary, para_holomorphy })
}

/// The skeleton route applied to `H_c` of a field.
pub fn cross_decompose_h(h: &HFunction, domain: &BoxDomain, cfg: &CrossConfig) -> Result<SeparableDecomposition> {
    cross_decompose(&h.as_fn(), domain, cfg)
}
