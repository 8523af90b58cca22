use covertpress::maps::{injective_type, phi1_eval, phi1_invert, phi2_eval, phi2_invert, MapKey, Prp, Seed};
use covertpress::types::{all_sequences, enumerate_types, log2_big, num_types, type_of};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::HashSet;

fn key(b: u8) -> MapKey {
    MapKey::new([b; 32], 7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3000))]

    #[test]
    fn prp_inverts(bits in 1u32..=128, keys in any::<[u64; 4]>(), x in any::<u128>()) {
        let prp = Prp::new(bits, keys);
        let x = if bits == 128 { x } else { x & ((1u128 << bits) - 1) };
        let y = prp.permute(x);
        prop_assert!(bits == 128 || y >> bits == 0);
        prop_assert_eq!(prp.invert(y), x);
    }
}

#[test]
fn prp_is_a_permutation_on_small_domains() {
    for bits in 1..=12u32 {
        let prp = Prp::new(bits, [bits as u64, 2, 3, 4]);
        let img: HashSet<u128> = (0..1u128 << bits).map(|x| prp.permute(x)).collect();
        assert_eq!(img.len(), 1 << bits);
    }
}

#[test]
fn phi1_injective_per_type_exhaustive() {
    let rate = 0.75;
    for (alphabet, max_n) in [(2usize, 8usize), (3, 6)] {
        for n in 1..=max_n {
            let bits = (n as f64 * rate).ceil() as u32 + 1;
            for u in 0..3u64 {
                let u = Seed::from_u64(u);
                let mut images = std::collections::HashMap::<Vec<u32>, HashSet<u128>>::new();
                for x in all_sequences(n, alphabet) {
                    let t = type_of(&x, alphabet).unwrap();
                    if !injective_type(&t, rate) || log2_big(&t.class_size()) > bits as f64 {
                        continue;
                    }
                    let m = phi1_eval(&key(1), &u, &x, alphabet, rate, bits).unwrap();
                    assert!(images.entry(t.counts.clone()).or_default().insert(m), "collision n={n}");
                    assert_eq!(phi1_invert(&key(1), &u, &t, m, rate, bits).unwrap(), Some(x));
                }
            }
        }
    }
}

#[test]
fn phi2_is_a_bijection_onto_its_image() {
    for (n, alphabet) in [(5usize, 2usize), (6, 3), (4, 4)] {
        let u = Seed::from_u64(11);
        let mut seen = HashSet::new();
        for t in enumerate_types(n, alphabet).unwrap() {
            let j = phi2_eval(&key(2), &u, &t).unwrap();
            assert!(seen.insert(j));
            assert_eq!(phi2_invert(&key(2), &u, j, n, alphabet).unwrap(), Some(t));
        }
        assert_eq!(seen.len() as u128, num_types(n, alphabet));
    }
}

#[test]
fn different_seeds_give_different_maps() {
    let n = 10;
    let xs: Vec<Vec<u8>> = all_sequences(n, 2).collect();
    let image = |u: u64| -> Vec<u128> {
        xs.iter().map(|x| phi1_eval(&key(3), &Seed::from_u64(u), x, 2, 1.0, 10).unwrap()).collect()
    };
    let base = image(0);
    for u in 1..20 {
        assert_ne!(image(u), base, "u={u}");
    }
}

#[test]
fn phi1_output_is_uniform_over_seeds() {
    // for a fixed input, the random seed must spread the image evenly
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let bits = 4u32;
    let draws = 32_000u32;
    for (x, rate) in [(vec![0u8, 1, 1, 0, 1, 0], 1.0), (vec![0u8, 0, 0, 1, 0, 0], 0.3)] {
        let mut counts = vec![0u32; 1 << bits];
        for _ in 0..draws {
            let u = Seed::random(&mut rng, 64);
            counts[phi1_eval(&key(4), &u, &x, 2, rate, bits).unwrap() as usize] += 1;
        }
        let e = draws as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 15 degrees of freedom; 0.999 quantile is 37.7
        assert!(chi2 < 37.7, "chi2 = {chi2}, counts {counts:?}");
    }
}
