use covertpress::criteria::grid_min_div;
use covertpress::dist::{entropy, h2, kl_div, FiniteDist};
use covertpress::exponent::{exponent_e, min_div_entropy_constrained, predicted_bounds, Direction, ExponentQuery};
use proptest::prelude::*;

fn dir() -> impl Strategy<Value = Direction> {
    prop_oneof![Just(Direction::AtMost), Just(Direction::AtLeast)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn binary_matches_grid_oracle(p in 0.01..0.99f64, r in 0.0..1.0f64, d in dir()) {
        let got = min_div_entropy_constrained(&FiniteDist::bernoulli(p).unwrap(), r, d).unwrap().value;
        let want = grid_min_div(p, r, d, 1e-3);
        if want.is_infinite() {
            prop_assert!(got.is_infinite());
        } else {
            prop_assert!((got - want).abs() < 1e-9, "p={p} r={r} {d:?}: {got} vs {want}");
        }
    }

    #[test]
    fn monotone_in_rate(p in 0.02..0.98f64, r1 in 0.0..1.0f64, r2 in 0.0..1.0f64) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let p = FiniteDist::bernoulli(p).unwrap();
        let at_most = |r| min_div_entropy_constrained(&p, r, Direction::AtMost).unwrap().value;
        let at_least = |r| min_div_entropy_constrained(&p, r, Direction::AtLeast).unwrap().value;
        prop_assert!(at_most(hi) <= at_most(lo) + 1e-12);
        prop_assert!(at_least(lo) <= at_least(hi) + 1e-12);
        prop_assert!(exponent_e(&p, hi).unwrap() <= exponent_e(&p, lo).unwrap() + 1e-12);
    }

    #[test]
    fn exponent_dominates_its_lower_bound(
        w in prop::collection::vec(0.05..1.0f64, 2..=4),
        n in 4usize..400,
        rate_gap in 0.0..0.6f64,
        seed_frac in 0.0..1.0f64,
    ) {
        let s: f64 = w.iter().sum();
        let p = FiniteDist::new(w.iter().map(|x| x / s).collect()).unwrap();
        let gamma = p.len() as f64 * ((n + 1) as f64).log2();
        let rate = (entropy(&p) + rate_gap).min((p.len() as f64).log2());
        let q = ExponentQuery::new(p, n, rate, seed_frac * n as f64, gamma);
        let b = predicted_bounds(&q).unwrap();
        // with R(d) < 0 the constrained minimum has an empty feasible set
        prop_assume!(b.r_of_d >= 0.0);
        prop_assert!(b.e_n + 1e-9 >= b.e_lower, "{b:?}");
    }
}

#[test]
fn ternary_matches_a_simplex_grid() {
    let steps = 400;
    for (p, r) in [(vec![0.6, 0.3, 0.1], 0.8), (vec![0.2, 0.2, 0.6], 1.0), (vec![0.5, 0.25, 0.25], 0.3)] {
        let pd = FiniteDist::new(p).unwrap();
        let got = min_div_entropy_constrained(&pd, r, Direction::AtMost).unwrap().value;
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=steps - i {
                let q = vec![i as f64 / steps as f64, j as f64 / steps as f64, (steps - i - j) as f64 / steps as f64];
                let qd = FiniteDist::new(q).unwrap();
                if entropy(&qd) <= r {
                    best = best.min(kl_div(&qd, &pd).unwrap().as_f64());
                }
            }
        }
        assert!(got <= best + 1e-12, "{got} > grid {best}");
        assert!(best - got < 2e-2, "{got} vs grid {best}");
    }
}

#[test]
fn exponent_vanishes_above_the_entropy() {
    let p = FiniteDist::bernoulli(0.2).unwrap();
    assert_eq!(exponent_e(&p, h2(0.2) + 1e-6).unwrap(), 0.0);
    assert!(exponent_e(&p, h2(0.2) - 0.1).unwrap() > 0.0);
}
