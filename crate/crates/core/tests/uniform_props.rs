use covertpress::dist::{entropy, FiniteDist};
use covertpress::exponent::{predicted_bounds, ExponentQuery};
use covertpress::maps::{MapKey, Seed};
use covertpress::rng::derive_stream;
use covertpress::uniform::{make_uniform_code, measure_pe, pe_exact, ue_exact, RateMode, UniformCode};
use covertpress::types::{all_sequences, type_of};

const KEYS: u64 = 64;

fn mean_ue(n: usize, p: &FiniteDist, d: u32) -> f64 {
    let mut sum = 0.0;
    for k in 0..KEYS {
        let key = MapKey::random(&mut derive_stream(99, "ue-mono/key", k), 0);
        let cfg = make_uniform_code(n, p.len(), 0.1, RateMode::Exact { h: entropy(p) }, key).unwrap().with_seed_bits(d);
        sum += ue_exact(&cfg, p).unwrap().vdist;
    }
    sum / KEYS as f64
}

#[test]
fn ue_shrinks_with_seed_length() {
    let p = FiniteDist::bernoulli(0.3).unwrap();
    for n in [4usize, 6] {
        let curve: Vec<f64> = (0..=14).map(|d| mean_ue(n, &p, d)).collect();
        eprintln!("n={n}: {curve:?}");
        for w in curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "n={n}: {curve:?}");
        }
    }
}

#[test]
fn monte_carlo_pe_matches_exact_and_bound() {
    for (p, n) in [(0.3, 12usize), (0.1, 16), (0.45, 10)] {
        let p = FiniteDist::bernoulli(p).unwrap();
        let cfg = make_uniform_code(n, 2, 0.1, RateMode::Exact { h: entropy(&p) }, MapKey::new([9; 32], 0)).unwrap();
        let exact = pe_exact(&cfg, &p).unwrap();
        let mc = measure_pe(&cfg, &p, 20_000, 3).unwrap();
        let b = predicted_bounds(&ExponentQuery::for_code(&cfg, &p)).unwrap();
        let sigma = (exact * (1.0 - exact) / 20_000.0).sqrt().max(1e-4);
        assert!((mc.est - exact).abs() <= 4.0 * sigma, "n={n}: mc {} exact {exact}", mc.est);
        assert!(mc.est <= b.pe_bound.min(1.0) + 3.0 * sigma, "n={n}: mc {} bound {}", mc.est, b.pe_bound);
    }
}

#[test]
fn decodable_types_always_round_trip() {
    let p = FiniteDist::new(vec![0.6, 0.3, 0.1]).unwrap();
    let n = 7;
    let cfg = make_uniform_code(n, 3, 0.1, RateMode::Exact { h: entropy(&p) }, MapKey::new([4; 32], 2)).unwrap();
    let code = UniformCode::new(cfg.clone());
    for s in 0..4u64 {
        let u = Seed::from_u64(s);
        for x in all_sequences(n, 3) {
            let t = type_of(&x, 3).unwrap();
            let m = code.encode(&u, &x).unwrap();
            let back = code.decode(&u, &m).unwrap();
            if t.entropy() <= cfg.rate {
                assert_eq!(back.sequence(), Some(&x[..]));
            } else {
                assert_ne!(back.sequence(), Some(&x[..]));
            }
        }
    }
}
