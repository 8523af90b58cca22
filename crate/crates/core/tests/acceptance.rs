//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Thresholds live in `covertpress::criteria`. Run with `--nocapture` to see
//! the lines; the test fails if any criterion fails.

use std::time::Instant;

use covertpress::criteria::{self, Criterion};
use covertpress::rng::derive_seed;

const MASTER: u64 = 20_240_601;

/// Wallclock budgets in seconds, for information only.
const BUDGET: [f64; 11] = [30.0, 60.0, 120.0, 60.0, 120.0, 60.0, 180.0, 300.0, 60.0, 300.0, 60.0];

fn seed(id: u8) -> u64 {
    derive_seed(MASTER, "criterion", id as u64)
}

fn report(c: &Criterion, secs: f64) {
    let budget = BUDGET[c.id as usize - 1];
    let over = if secs > budget { " [over budget]" } else { "" };
    println!("{} ({secs:.1}s of {budget:.0}s{over})", c.line());
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    let mut polar_runs = Vec::new();
    for id in 1..=11u8 {
        let start = Instant::now();
        let c = match id {
            8 => {
                let (c, runs) = criteria::c8_polar_covert(seed(8)).unwrap();
                polar_runs = runs;
                c
            }
            10 => criteria::c10_converse(seed(10), &polar_runs).unwrap(),
            _ => criteria::evaluate(id, MASTER).unwrap(),
        };
        report(&c, start.elapsed().as_secs_f64());
        results.push(c);
    }
    let failed: Vec<u8> = results.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    println!("{} of {} criteria passed; failing: {failed:?}", results.len() - failed.len(), results.len());
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
