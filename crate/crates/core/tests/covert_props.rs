use covertpress::covert::{covert_decode, covert_encode, frame_layout, CovertParams, CovertScheme, SharedSecrets};
use covertpress::dist::FiniteDist;
use covertpress::maps::MapKey;
use covertpress::uniform::sample_sequence;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::HashSet;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5000))]

    #[test]
    fn layout_is_tight(m_bits in 0u32..400, i_bits in 0u32..8, rate in 0.05..3.0f64) {
        prop_assume!(m_bits + i_bits > 0);
        let k = m_bits + i_bits;
        let (m, c) = frame_layout(m_bits, i_bits, rate).unwrap();
        let total = k + c;
        prop_assert!(m as f64 * rate + 1e-9 >= k as f64);
        prop_assert!(((m - 1) as f64) * rate < k as f64 + 1e-9);
        prop_assert!(total as f64 + 1e-9 >= m as f64 * rate);
        prop_assert!((total as f64) < m as f64 * rate + 1.0 + 1e-9);
    }
}

fn params() -> CovertParams {
    CovertParams::new(8, 2, FiniteDist::new(vec![0.5, 0.3, 0.2]).unwrap())
}

#[test]
fn masked_index_runs_over_every_pattern() {
    let params = params();
    let scheme = CovertScheme::new(params.clone(), &MapKey::new([1; 32], 0)).unwrap();
    let ib = scheme.bank.index_bits() as usize;
    assert!(ib >= 1);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let base = SharedSecrets::for_bank(&scheme.bank, MapKey::new([2; 32], 0), MapKey::new([1; 32], 0), &mut rng);
    let x = vec![0u8, 1, 0, 0, 1, 0, 0, 0];
    let mut seen = HashSet::new();
    let mut plain = HashSet::new();
    for pad in 0..1u32 << ib {
        let mut s = base.clone();
        s.k_tilde = (0..ib).map(|j| ((pad >> (ib - 1 - j)) & 1) as u8).collect();
        let (f, used, _) = scheme.encode_rekeying(&x, &s, &mut rng).unwrap();
        let unmasked: Vec<u8> = f.code_index_masked.iter().zip(&used.k_tilde).map(|(a, b)| a ^ b).collect();
        plain.insert(unmasked);
        assert!(seen.insert(f.code_index_masked.clone()));
    }
    assert_eq!(seen.len(), 1 << ib);
    assert_eq!(plain.len(), 1, "the selected index must not depend on the pad");
}

#[test]
fn random_blocks_round_trip() {
    let params = params();
    let p_x = FiniteDist::bernoulli(0.2).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let secrets = SharedSecrets::random(&params, &mut rng).unwrap();
    let scheme = CovertScheme::new(params.clone(), &secrets.code_bank_key).unwrap();
    let mut ok = 0;
    for trial in 0..300 {
        let x = sample_sequence(&p_x, params.n, &mut rng);
        let f = scheme.encode_rekeying(&x, &secrets, &mut rng).unwrap().0;
        if trial < 3 {
            // the one-shot entry points agree with the scheme
            let g = covert_encode(&x, &secrets, &params, &mut rng).unwrap();
            assert_eq!(covert_decode(&g, &secrets, &params).unwrap(), scheme.decode(&g.y_hat, &secrets.rekeyed(g.attempt)).unwrap());
        }
        assert_eq!(f.y_hat.len(), f.m);
        assert!(f.y_hat.iter().all(|&s| s < 3));
        let (m, layout) = scheme.layout_for(scheme.bank.select(&x).unwrap()).unwrap();
        assert_eq!((f.m, f.layout), (m, layout));
        ok += (scheme.decode(&f.y_hat, &secrets.rekeyed(f.attempt)).unwrap().sequence() == Some(&x[..])) as u32;
    }
    // every block of a decodable type must come back
    assert!(ok >= 290, "{ok}/300");
}
