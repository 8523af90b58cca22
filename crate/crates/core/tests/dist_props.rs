use covertpress::dist::{entropy, kl_div, lemma1_report, var_dist, FiniteDist};
use proptest::prelude::*;
use std::f64::consts::LN_2;

fn dist(k: usize, floor: f64) -> impl Strategy<Value = FiniteDist> {
    prop::collection::vec(floor..1.0f64, k).prop_map(|w| {
        let s: f64 = w.iter().sum();
        FiniteDist::normalized(w.iter().map(|x| x / s).collect()).unwrap()
    })
}

fn pair() -> impl Strategy<Value = (FiniteDist, FiniteDist)> {
    (2usize..6).prop_flat_map(|k| (dist(k, 0.0), dist(k, 1e-3)))
}

fn triple() -> impl Strategy<Value = (FiniteDist, FiniteDist, FiniteDist)> {
    (2usize..6).prop_flat_map(|k| (dist(k, 1e-3), dist(k, 1e-3), dist(k, 1e-3)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn pinsker((p, q) in pair()) {
        let d = kl_div(&p, &q).unwrap().as_f64();
        let v = var_dist(&p, &q).unwrap();
        prop_assert!(d + 1e-12 >= v * v / (2.0 * LN_2));
    }

    #[test]
    fn entropy_concave((p, q) in pair(), lambda in 0.0..1.0f64) {
        let m = p.mix(&q, lambda).unwrap();
        prop_assert!(entropy(&m) + 1e-12 >= lambda * entropy(&p) + (1.0 - lambda) * entropy(&q));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn divergence_inequalities((p, q, r) in triple()) {
        let rep = lemma1_report(&p, &q, &r).unwrap();
        prop_assert_eq!(rep.holds, [true, true, true], "{:?}", rep);
    }
}

#[test]
fn inequalities_near_point_masses() {
    // skewed triples the uniform strategy rarely produces
    let q = FiniteDist::new(vec![0.998, 0.001, 0.001]).unwrap();
    for p in [vec![1.0, 0.0, 0.0], vec![0.0, 0.5, 0.5], vec![0.9, 0.05, 0.05]] {
        let p = FiniteDist::new(p).unwrap();
        let rep = lemma1_report(&p, &q, &FiniteDist::uniform(3).unwrap()).unwrap();
        assert_eq!(rep.holds, [true, true, true]);
    }
}
