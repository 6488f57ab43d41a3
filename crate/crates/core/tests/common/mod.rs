#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use parakahler::domain::BoxDomain;
use parakahler::jets::{jet_lift, JetOptions};
use parakahler::multiindex::MultiIndex;
use parakahler::dsl::PotentialExpr;
use parakahler::pfaffian::FnField;

pub struct PotentialFixture {
    pub text: String,
    pub expr: PotentialExpr,
    pub domain: BoxDomain,
}

pub struct RankFixture {
    pub text: String,
    pub rank: usize,
    pub expr: PotentialExpr,
}

fn fields(path: &str) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(format!("{}/tests/fixtures/{path}", env!("CARGO_MANIFEST_DIR"))).expect("fixture file");
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split('|').map(|s| s.trim().to_string()).collect())
        .collect()
}

pub fn potential_corpus() -> Vec<PotentialFixture> {
    fields("potentials.txt")
        .into_iter()
        .map(|f| {
            let n: usize = f[0].parse().unwrap();
            let (lo, hi): (f64, f64) = (f[1].parse().unwrap(), f[2].parse().unwrap());
            PotentialFixture {
                expr: PotentialExpr::parse(&f[3], n).unwrap_or_else(|e| panic!("{}: {e}", f[3])),
                text: f[3].clone(),
                domain: BoxDomain::new(vec![lo; n], vec![hi; n]).unwrap(),
            }
        })
        .collect()
}

pub fn rank_corpus() -> Vec<RankFixture> {
    fields("rank_corpus.txt")
        .into_iter()
        .map(|f| {
            let n: usize = f[1].parse().unwrap();
            RankFixture {
                rank: f[0].parse().unwrap(),
                expr: PotentialExpr::parse(&f[2], n).unwrap_or_else(|e| panic!("{}: {e}", f[2])),
                text: f[2].clone(),
            }
        })
        .collect()
}

/// Binomial coefficient from Pascal's triangle.
pub fn pascal(n: usize, k: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = vec![1u64; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    row.get(k).copied().unwrap_or(0)
}

fn stencil(order: u32) -> &'static [(f64, f64)] {
    match order {
        0 => &[(0.0, 1.0)],
        1 => &[(-1.0, -0.5), (1.0, 0.5)],
        2 => &[(-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)],
        3 => &[(-2.0, -0.5), (-1.0, 1.0), (1.0, -1.0), (2.0, 0.5)],
        _ => panic!("stencils up to order 3"),
    }
}

fn central(f: &dyn Fn(&[f64]) -> f64, x: &[f64], alpha: &[u32], h: f64) -> f64 {
    fn walk(f: &dyn Fn(&[f64]) -> f64, alpha: &[u32], h: f64, i: usize, p: Vec<f64>, w: f64, total: &mut f64) {
        if i == alpha.len() {
            *total += w * f(&p);
            return;
        }
        for &(off, c) in stencil(alpha[i]) {
            let mut q = p.clone();
            q[i] += off * h;
            walk(f, alpha, h, i + 1, q, w * c, total);
        }
    }
    let mut total = 0.0;
    walk(f, alpha, h, 0, x.to_vec(), 1.0, &mut total);
    let degree: u32 = alpha.iter().sum();
    total / h.powi(degree as i32)
}

/// Mixed partial `∂^α f(x)` by tensor central differences with two levels of
/// Richardson extrapolation.
pub fn fd_derivative(f: &dyn Fn(&[f64]) -> f64, x: &[f64], alpha: &[u32], h: f64) -> f64 {
    let d0 = central(f, x, alpha, h);
    let d1 = central(f, x, alpha, h / 2.0);
    let d2 = central(f, x, alpha, h / 4.0);
    let r1 = (4.0 * d1 - d0) / 3.0;
    let r2 = (4.0 * d2 - d1) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

/// `M(ξ)` for the manufactured Pfaffian solution.
pub fn manufactured_u(xi: &[f64]) -> DMatrix<f64> {
    let (x, y) = (xi[0], xi[1]);
    DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0 + 0.3 * x,
            0.2 * x * y,
            (0.5 * y).exp() - 1.0,
            0.4 * y,
            1.0 + x * x * 0.25,
            0.1 * x,
            0.3 * x * y,
            (0.3 * x).sin(),
            1.0 + 0.2 * y - 0.1 * x,
        ],
    )
}

fn manufactured_du(xi: &[f64], k: usize) -> DMatrix<f64> {
    let (x, y) = (xi[0], xi[1]);
    if k == 0 {
        DMatrix::from_row_slice(3, 3, &[0.3, 0.2 * y, 0.0, 0.0, 0.5 * x, 0.1, 0.3 * y, 0.3 * (0.3 * x).cos(), -0.1])
    } else {
        DMatrix::from_row_slice(3, 3, &[0.0, 0.2 * x, 0.5 * (0.5 * y).exp(), 0.4, 0.0, 0.0, 0.3 * x, 0.0, 0.2])
    }
}

/// The compatible field `A_k = M⁻¹ ∂_k M`.
pub fn manufactured_field() -> FnField {
    FnField::new(2, 3, |xi: &[f64]| {
        let inv = manufactured_u(xi).try_inverse().expect("M invertible on the test box");
        Ok((0..2).map(|k| &inv * manufactured_du(xi, k)).collect())
    })
}

/// Random polynomial in `n` variables without constant term, degree `≤ deg`.
pub fn random_poly(rng: &mut ChaCha8Rng, n: usize, deg: usize) -> Vec<(Vec<u32>, f64)> {
    let mut terms = Vec::new();
    let mut exps = vec![vec![]];
    for _ in 0..n {
        exps = exps.into_iter().flat_map(|e: Vec<u32>| (0..=deg as u32).map(move |d| [e.clone(), vec![d]].concat())).collect();
    }
    for e in exps {
        let d: u32 = e.iter().sum();
        if d >= 1 && d as usize <= deg {
            terms.push((e, rng.random_range(-1.0..1.0)));
        }
    }
    terms
}

pub fn eval_poly(p: &[(Vec<u32>, f64)], x: &[f64]) -> f64 {
    p.iter().map(|(e, c)| c * e.iter().zip(x).map(|(&k, v)| v.powi(k as i32)).product::<f64>()).sum()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Worst `|fd − jet| / max(|jet|, 1)` over the corpus, orders 1 to 3.
pub fn worst_jet_fd_error(points: usize, seed: u64) -> (f64, String) {
    let mut worst = (0.0f64, String::new());
    for (fi, fx) in potential_corpus().iter().enumerate() {
        let n = fx.expr.nvars();
        let xs = fx.domain.random_points(points, seed + fi as u64);
        let ys = fx.domain.random_points(points, seed + 100 + fi as u64);
        let f = |z: &[f64]| fx.expr.eval(&z[..n], &z[n..]).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let jet = jet_lift(&fx.expr, x, y, (3, 3), JetOptions::default()).unwrap();
            let z: Vec<f64> = x.iter().chain(y).copied().collect();
            for alpha in MultiIndex::all_up_to(2 * n, 3).into_iter().filter(|a| a.degree() >= 1) {
                let (i, j) = (MultiIndex::from_slice(&alpha.0[..n]), MultiIndex::from_slice(&alpha.0[n..]));
                let exact = jet.derivative(&i, &j).unwrap();
                let fd = fd_derivative(&f, &z, &alpha.0, 4e-3);
                let err = (fd - exact).abs() / exact.abs().max(1.0);
                if err > worst.0 {
                    worst = (err, format!("{} at {z:?}, alpha {:?}: jet {exact}, fd {fd}", fx.text, alpha.0));
                }
            }
        }
    }
    worst
}
