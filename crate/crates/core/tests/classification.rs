mod common;

use parakahler::builder::{verify_immersion, VerifyOptions};
use parakahler::classification::{veronese, veronese_decomposition, veronese_domain};
use parakahler::diastasis::{DiastasisField, HFunction};
use parakahler::domain::BoxDomain;
use parakahler::separability::{build_index_set, sample_rank, IndexSetOptions, RANK_TOL};
use parakahler::PkError;

use common::pascal;

#[test]
fn veronese_rank_and_verification() {
    for n in 1..=3usize {
        for p in 1..=3u32 {
            let dom = veronese_domain(n);
            let dec = veronese_decomposition(n, p, dom.clone()).unwrap();
            let xs = dom.random_points(30, 3);
            let ys = dom.random_points(30, 4);
            let r = sample_rank(|x: &[f64], y: &[f64]| dec.eval(x, y), &xs, &ys, RANK_TOL).unwrap();
            assert_eq!(r as u64, pascal(n + p as usize, n) - 1, "n={n}, p={p}");
            let f = veronese(n, p, 2.0).unwrap();
            let src = DiastasisField::from_model(2.0, n, dom).unwrap();
            let rep = verify_immersion(&f, &src, &VerifyOptions::default()).unwrap();
            assert!(rep.passed, "n={n}, p={p}: {:e}", rep.hereditary.max_residual);
        }
    }
}

#[test]
fn blocked_cases_do_not_stabilize() {
    for (c, b) in [(4.0, 0.0), (0.0, 8.0), (4.0, 6.0)] {
        let dom = BoxDomain::interval(-0.6, 0.6);
        let h = HFunction::transform(DiastasisField::from_model(c, 1, dom.clone()).unwrap(), b);
        match build_index_set(&h, 10, &IndexSetOptions::new(dom)) {
            Err(PkError::RankNotCertified { .. }) => {}
            Ok(set) => assert!(!set.stabilized, "c={c}, b={b}: stabilized at N={}", set.N()),
            Err(e) => panic!("c={c}, b={b}: {e}"),
        }
    }
}
