use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sc::{llr_entropy, sc_run, source_llr};
use super::transform::{log2_exact, polar_transform};
use crate::dist::{entropy_of, h2};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, derive_stream};

/// Largest `N` for the exact profile.
pub const EXACT_MAX_N: usize = 16;
pub const MIN_MC_SAMPLES: u64 = 1000;
/// Samples used when a profile is needed but not specified.
pub const DEFAULT_MC_SAMPLES: u64 = 1000;
const MC_CHUNKS: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum ProfileMethod {
    Exact,
    MonteCarlo { samples: u64 },
}

impl ProfileMethod {
    /// Exact up to `N = 16`, Monte Carlo with the default sample count above.
    pub fn auto(n: usize) -> Self {
        if n <= EXACT_MAX_N {
            ProfileMethod::Exact
        } else {
            ProfileMethod::MonteCarlo { samples: DEFAULT_MC_SAMPLES }
        }
    }
}

/// `H(U_i | U^{i-1})` for `U = X G_N`, `X` i.i.d. Bernoulli(p).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarProfile {
    pub n: usize,
    pub p: f64,
    pub cond_entropies: Vec<f64>,
    pub method: ProfileMethod,
}

impl PolarProfile {
    pub fn total(&self) -> f64 {
        self.cond_entropies.iter().sum()
    }

    /// `|sum - N h(p)|`
    pub fn chain_rule_gap(&self) -> f64 {
        (self.total() - self.n as f64 * h2(self.p)).abs()
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::pre(format!("source parameter {p} outside (0, 1)")));
    }
    Ok(())
}

/// Pushes `p^N` through the transform and reads off the prefix entropies.
pub fn exact_profile(p: f64, n: usize) -> Result<PolarProfile> {
    check_p(p)?;
    log2_exact(n)?;
    if n > EXACT_MAX_N {
        return Err(Error::Cap { what: "exact polar profile length", needed: n as u128, cap: EXACT_MAX_N as u128 });
    }
    let size = 1usize << n;
    let mut law = vec![0.0; size];
    let mut x = vec![0u8; n];
    for v in 0..size {
        let mut w = 0;
        for (k, slot) in x.iter_mut().enumerate() {
            *slot = ((v >> (n - 1 - k)) & 1) as u8;
            w += *slot as i32;
        }
        let px = p.powi(w) * (1.0 - p).powi(n as i32 - w);
        let u = polar_transform(&x)?;
        let idx = u.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        law[idx] += px;
    }
    // prefix entropies H(U^i), i = n..0
    let mut prefix = vec![0.0; n + 1];
    let mut cur = law;
    for i in (0..=n).rev() {
        prefix[i] = entropy_of(&cur);
        if i > 0 {
            cur = cur.chunks(2).map(|c| c[0] + c[1]).collect();
        }
    }
    let cond = (0..n).map(|i| (prefix[i + 1] - prefix[i]).clamp(0.0, 1.0)).collect();
    Ok(PolarProfile { n, p, cond_entropies: cond, method: ProfileMethod::Exact })
}

/// Averages the conditional entropy of `U_i` along sampled trajectories;
/// deterministic given `master`.
pub fn mc_profile(p: f64, n: usize, samples: u64, master: u64) -> Result<PolarProfile> {
    check_p(p)?;
    log2_exact(n)?;
    if samples < MIN_MC_SAMPLES {
        return Err(Error::pre(format!("need at least {MIN_MC_SAMPLES} samples")));
    }
    let llr = vec![source_llr(p); n];
    let partial: Vec<Result<Vec<f64>>> = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = derive_stream(master, "polar/profile", c);
            let mut acc = vec![0.0; n];
            let mut x = vec![0u8; n];
            let mut s = c;
            while s < samples {
                for b in x.iter_mut() {
                    *b = (rng.gen::<f64>() < p) as u8;
                }
                let u = polar_transform(&x)?;
                sc_run(&llr, |i, l| {
                    acc[i] += llr_entropy(l);
                    u[i]
                })?;
                s += MC_CHUNKS;
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![0.0; n];
    for part in partial {
        for (t, a) in total.iter_mut().zip(part?) {
            *t += a;
        }
    }
    let cond = total.into_iter().map(|t| (t / samples as f64).clamp(0.0, 1.0)).collect();
    Ok(PolarProfile { n, p, cond_entropies: cond, method: ProfileMethod::MonteCarlo { samples } })
}

/// Seed tying a Monte Carlo profile to its parameters, so that every party
/// computing it gets the same numbers.
pub fn profile_seed(p: f64, n: usize, samples: u64) -> u64 {
    derive_seed(p.to_bits() ^ samples.rotate_left(17), "polar/profile-seed", n as u64)
}

pub fn entropy_profile(p: f64, n: usize, method: ProfileMethod) -> Result<PolarProfile> {
    match method {
        ProfileMethod::Exact => exact_profile(p, n),
        ProfileMethod::MonteCarlo { samples } => mc_profile(p, n, samples, profile_seed(p, n, samples)),
    }
}

type CacheKey = (u64, usize, ProfileMethod);

fn memory() -> &'static Mutex<HashMap<CacheKey, Arc<PolarProfile>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<PolarProfile>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Directory for profile files, from `COVERTPRESS_PROFILE_DIR`.
pub fn profile_dir() -> Option<PathBuf> {
    std::env::var_os("COVERTPRESS_PROFILE_DIR").map(PathBuf::from)
}

pub fn profile_file_name(p: f64, n: usize, method: ProfileMethod) -> String {
    let m = match method {
        ProfileMethod::Exact => "exact".to_string(),
        ProfileMethod::MonteCarlo { samples } => format!("mc{samples}"),
    };
    format!("profile-n{n}-p{:016x}-{m}.bin", p.to_bits())
}

/// Profile from memory, then the profile directory, then computed.
pub fn cached_profile(p: f64, n: usize, method: ProfileMethod) -> Result<Arc<PolarProfile>> {
    let key = (p.to_bits(), n, method);
    if let Some(pr) = memory().lock().unwrap().get(&key) {
        return Ok(pr.clone());
    }
    let file = profile_dir().map(|d| d.join(profile_file_name(p, n, method)));
    let loaded = match &file {
        Some(f) if f.exists() => read_profile(f, method).ok().filter(|pr| pr.n == n && pr.p == p),
        _ => None,
    };
    let pr = match loaded {
        Some(pr) => pr,
        None => {
            let pr = entropy_profile(p, n, method)?;
            if let Some(f) = &file {
                write_profile(f, &pr)?;
            }
            pr
        }
    };
    let pr = Arc::new(pr);
    memory().lock().unwrap().insert(key, pr.clone());
    Ok(pr)
}

const MAGIC: &[u8; 4] = b"CPPF";
const VERSION: u32 = 1;

/// Layout: `"CPPF"`, version (u32), N (u64), p (f64), then N f64 entries;
/// all little-endian.
pub fn write_profile(path: &Path, pr: &PolarProfile) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 8 * pr.n);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(pr.n as u64).to_le_bytes());
    buf.extend_from_slice(&pr.p.to_le_bytes());
    for h in &pr.cond_entropies {
        buf.extend_from_slice(&h.to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::File::create(&tmp)?.write_all(&buf)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// Reads a profile file; the method is not stored and must be supplied.
pub fn read_profile(path: &Path, method: ProfileMethod) -> Result<PolarProfile> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 24 || &buf[..4] != MAGIC {
        return Err(Error::Format("not a profile file".into()));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("profile file version {version}")));
    }
    let n = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    let p = f64::from_le_bytes(buf[16..24].try_into().unwrap());
    if buf.len() != 24 + 8 * n {
        return Err(Error::Format("truncated profile file".into()));
    }
    let cond = buf[24..].chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(PolarProfile { n, p, cond_entropies: cond, method })
}

/// Index sets, zero-based and sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarSets {
    /// `H_i >= delta_N`
    pub h_set: Vec<usize>,
    /// `H_i >= 1 - delta_N`
    pub v_set: Vec<usize>,
    pub delta: f64,
}

impl PolarSets {
    /// `H \ V`, sorted.
    pub fn h_minus_v(&self) -> Vec<usize> {
        let mut j = 0;
        let mut out = Vec::with_capacity(self.h_set.len() - self.v_set.len());
        for &i in &self.h_set {
            if j < self.v_set.len() && self.v_set[j] == i {
                j += 1;
            } else {
                out.push(i);
            }
        }
        out
    }
}

/// `2^{-N^beta}`
pub fn delta_n(n: usize, beta: f64) -> f64 {
    (-(n as f64).powf(beta)).exp2()
}

pub fn select_sets(pr: &PolarProfile, beta: f64) -> Result<PolarSets> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::pre(format!("beta = {beta} outside (0, 1/2)")));
    }
    let delta = delta_n(pr.n, beta);
    let h_set = (0..pr.n).filter(|&i| pr.cond_entropies[i] >= delta).collect();
    let v_set = (0..pr.n).filter(|&i| pr.cond_entropies[i] >= 1.0 - delta).collect();
    Ok(PolarSets { h_set, v_set, delta })
}
