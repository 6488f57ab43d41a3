//! Dense helpers: rank-revealing elimination with complete pivoting, and a
//! few least-squares / orthogonalization utilities on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Outcome of complete-pivoting elimination.
#[derive(Clone, Debug)]
pub struct PivotedRank {
    pub rank: usize,
    /// Accepted pivots as `(row, col, value)`, in elimination order.
    pub pivots: Vec<(usize, usize, f64)>,
}

/// Numerical rank of `m`: the number of complete-pivoting pivots whose
/// magnitude exceeds `rel_tol · |first pivot|`.
pub fn pivoted_rank(m: &DMatrix<f64>, rel_tol: f64) -> PivotedRank {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let mut row_perm: Vec<usize> = (0..rows).collect();
    let mut col_perm: Vec<usize> = (0..cols).collect();
    let mut pivots = Vec::new();
    let mut first = 0.0f64;
    for k in 0..rows.min(cols) {
        let (mut pi, mut pj, mut best) = (k, k, 0.0f64);
        for j in k..cols {
            for i in k..rows {
                let v = a[(i, j)].abs();
                if v > best {
                    best = v;
                    pi = i;
                    pj = j;
                }
            }
        }
        if k == 0 {
            first = best;
        }
        if best == 0.0 || !best.is_finite() || best <= rel_tol * first {
            break;
        }
        a.swap_rows(k, pi);
        a.swap_columns(k, pj);
        row_perm.swap(k, pi);
        col_perm.swap(k, pj);
        let p = a[(k, k)];
        pivots.push((row_perm[k], col_perm[k], p));
        for i in k + 1..rows {
            let f = a[(i, k)] / p;
            if f != 0.0 {
                for j in k + 1..cols {
                    let v = a[(k, j)];
                    a[(i, j)] -= f * v;
                }
            }
            a[(i, k)] = 0.0;
        }
    }
    PivotedRank { rank: pivots.len(), pivots }
}

/// Least-squares solution of `A x = b` through the SVD; `None` when `A` is
/// numerically rank deficient (`σ_min ≤ rcond · σ_max`).
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> Option<DVector<f64>> {
    if a.ncols() == 0 {
        return Some(DVector::zeros(0));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if a.nrows() < a.ncols() || smax == 0.0 || smin <= rcond * smax {
        return None;
    }
    svd.solve(b, 0.0).ok()
}

/// Same as [`lstsq`] for a matrix right-hand side.
pub fn lstsq_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, rcond: f64) -> Option<DMatrix<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if a.nrows() < a.ncols() || smax == 0.0 || smin <= rcond * smax {
        return None;
    }
    svd.solve(b, 0.0).ok()
}

/// `σ_min / σ_max` of `a` after scaling every row to unit norm (zero rows
/// give 0). Used as a scale-free non-degeneracy measure.
pub fn normalized_conditioning(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let mut s = a.clone();
    for mut r in s.row_iter_mut() {
        let n = r.norm();
        if n == 0.0 {
            return 0.0;
        }
        r /= n;
    }
    let sv = s.singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

/// Incrementally built orthonormal basis (Gram–Schmidt, two passes).
#[derive(Clone, Debug, Default)]
pub struct OrthoBasis {
    vecs: Vec<Vec<f64>>,
}

impl OrthoBasis {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.vecs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vecs.is_empty()
    }

    /// Residual of `x` after projecting out the span, and `‖x‖`.
    pub fn residual(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let norm = dot(x, x).sqrt();
        let mut r = x.to_vec();
        for _ in 0..2 {
            for q in &self.vecs {
                let c = dot(&r, q);
                for (ri, qi) in r.iter_mut().zip(q) {
                    *ri -= c * qi;
                }
            }
        }
        (r, norm)
    }

    /// Relative distance of `x` to the span (`0` for `x = 0`).
    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        let (r, norm) = self.residual(x);
        if norm == 0.0 {
            0.0
        } else {
            dot(&r, &r).sqrt() / norm
        }
    }

    /// Adds the normalized residual of `x`, unless it is below `floor · ‖x‖`.
    pub fn push(&mut self, x: &[f64], floor: f64) -> bool {
        let (r, norm) = self.residual(x);
        let rn = dot(&r, &r).sqrt();
        if norm == 0.0 || rn <= floor * norm {
            return false;
        }
        self.vecs.push(r.into_iter().map(|v| v / rn).collect());
        true
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximum absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_outer_products() {
        let xs: Vec<f64> = (0..8).map(|i| -1.0 + 2.0 * i as f64 / 7.0).collect();
        let m = DMatrix::from_fn(8, 8, |i, j| xs[i] * xs[j]);
        assert_eq!(pivoted_rank(&m, 1e-8).rank, 1);
        let m = DMatrix::from_fn(8, 8, |i, j| {
            2.0 * xs[i] * xs[j] + 2.0 * (xs[i] * xs[j]).powi(2)
        });
        assert_eq!(pivoted_rank(&m, 1e-8).rank, 2);
        assert_eq!(pivoted_rank(&DMatrix::zeros(5, 5), 1e-8).rank, 0);
    }

    #[test]
    fn rank_is_scale_invariant() {
        let m = DMatrix::from_fn(6, 7, |i, j| ((i + 1) as f64).powi(j as i32 % 3) + (j as f64) * 0.1);
        let r1 = pivoted_rank(&m, 1e-8).rank;
        let r2 = pivoted_rank(&(m * 1000.0), 1e-8).rank;
        assert_eq!(r1, r2);
    }

    #[test]
    fn lstsq_detects_deficiency() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(lstsq(&a, &b, 1e-12).is_none());
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let x = lstsq(&a, &b, 1e-12).unwrap();
        let r = &a * &x - &b;
        // normal equations hold
        assert!((a.transpose() * r).norm() < 1e-12);
    }

    #[test]
    fn ortho_basis_spans() {
        let mut q = OrthoBasis::new();
        assert!(q.push(&[1.0, 0.0, 1.0], 1e-12));
        assert!(q.push(&[0.0, 1.0, 0.0], 1e-12));
        assert!(q.relative_residual(&[2.0, 3.0, 2.0]) < 1e-15);
        assert!(q.relative_residual(&[1.0, 0.0, -1.0]) > 0.99);
        assert!(!q.push(&[1.0, 1.0, 1.0], 1e-12));
    }
}
