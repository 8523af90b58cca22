use covertpress::dist::{entropy, FiniteDist};
use covertpress::experiment::recoverability;
use covertpress::maps::MapKey;
use covertpress::resolvability::{BinTable, BinningSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::HashMap;

fn table(m: usize, p: &FiniteDist, gap: f64, k: u8) -> (BinningSpec, BinTable) {
    let spec = BinningSpec::for_source(m, p, gap, MapKey::new([k; 32], 1)).unwrap();
    let t = BinTable::build(&spec, p).unwrap();
    (spec, t)
}

#[test]
fn samples_follow_the_conditional_law() {
    let p = FiniteDist::new(vec![0.5, 0.3, 0.2]).unwrap();
    let (_, t) = table(6, &p, 0.2, 3);
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let draws = 20_000u32;
    let mut tested = 0;
    for b in 0..t.bins().min(64) {
        let members: Vec<_> = t.members(b).collect();
        let mass = t.bin_mass(b);
        if members.len() < 3 || mass <= 0.0 {
            continue;
        }
        let mut counts = HashMap::<Vec<u8>, u32>::new();
        for _ in 0..draws {
            *counts.entry(t.sample(b, &mut rng).unwrap()).or_default() += 1;
        }
        let mut chi2 = 0.0;
        for (y, pr) in &members {
            let e = draws as f64 * pr / mass;
            let c = *counts.get(y).unwrap_or(&0) as f64;
            chi2 += (c - e).powi(2) / e;
        }
        let df = (members.len() - 1) as f64;
        // Wilson-Hilferty 0.9999 quantile
        let z = 3.719;
        let q = df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3);
        assert!(chi2 < q, "bin {b}: chi2 {chi2} df {df}");
        assert_eq!(counts.values().sum::<u32>(), draws);
        tested += 1;
    }
    assert!(tested >= 10);
}

#[test]
fn every_draw_lands_in_its_bin() {
    let p = FiniteDist::new(vec![0.6, 0.4]).unwrap();
    for (m, k) in [(8usize, 1u8), (12, 2), (16, 3)] {
        let (spec, t) = table(m, &p, 0.2, k);
        let r = recoverability(&spec, &t, 10_000, 5).unwrap();
        assert_eq!(r["hits"], 10_000, "m={m}");
    }
}

#[test]
fn bin_masses_and_members_are_consistent() {
    let p = FiniteDist::new(vec![0.7, 0.2, 0.1]).unwrap();
    let (spec, t) = table(7, &p, 0.3, 9);
    let mut total = 0.0;
    let mut count = 0;
    for b in 0..t.bins() {
        let s: f64 = t.members(b).map(|(y, pr)| {
            assert_eq!(spec.bin_of(&y).unwrap(), b);
            pr
        }).sum();
        assert!((s - t.bin_mass(b)).abs() < 1e-12);
        total += s;
        count += t.bin_size(b);
    }
    assert!((total - 1.0).abs() < 1e-9);
    assert_eq!(count, 3usize.pow(7));
    assert!(spec.rate < entropy(&p));
}

#[test]
fn uniformity_improves_with_length() {
    let p = FiniteDist::new(vec![0.6, 0.4]).unwrap();
    let v: Vec<f64> = [6usize, 12, 18].iter().map(|&m| table(m, &p, 0.25, 4).1.uniformity().vdist).collect();
    assert!(v[0] > v[1] && v[1] > v[2], "{v:?}");
}
