//! Experiment configs, orchestration and JSON reports.
//!
//! A run is fully determined by its config: every random draw comes from
//! streams derived from `master_seed`. The report body excludes timing, so
//! two runs of one config produce identical bodies.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::covert::{covert_metrics, CovertParams};
use crate::criteria::{self, Criterion};
use crate::dist::{entropy, FiniteDist};
use crate::error::{Error, Result};
use crate::estimate::{selection_experiment, CodeBank};
use crate::exponent::{lemma_sandwich_checks, predicted_bounds, sandwich_csv, ExponentQuery};
use crate::maps::MapKey;
use crate::polar::{polar_experiment, polar_reliability, PolarParams};
use crate::resolvability::{BinTable, BinningSpec};
use crate::rng::{derive_seed, derive_stream};
use crate::stats::{mean_std, Estimate};
use crate::uniform::{make_uniform_code, measure_pe, measure_ue, pe_exact, RateMode, UeMode};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Uniform,
    Estimate,
    Resolvability,
    Covert,
    Polar,
    Exponent,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Uniform => "uniform",
            Command::Estimate => "estimate",
            Command::Resolvability => "resolvability",
            Command::Covert => "covert",
            Command::Polar => "polar",
            Command::Exponent => "exponent",
        }
    }

    /// Acceptance criteria evaluated by `--check` for this command.
    pub fn criteria(self) -> &'static [u8] {
        match self {
            Command::Uniform => &[1, 2, 3],
            Command::Estimate => &[4],
            Command::Resolvability => &[5],
            Command::Covert => &[10],
            Command::Polar => &[6, 7, 8, 10],
            Command::Exponent => &[9],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    /// Command parameters; missing keys take their defaults.
    pub params: Value,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformParams {
    pub n: usize,
    pub px: FiniteDist,
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_trials")]
    pub trials: u64,
    /// Entropy interval; without it the code uses `H(px)` exactly.
    #[serde(default)]
    pub entropy_interval: Option<[f64; 2]>,
    #[serde(default)]
    pub seed_bits: Option<u32>,
    /// Forces Monte Carlo uniformity with this many samples.
    #[serde(default)]
    pub ue_samples: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateParams {
    pub n: usize,
    pub px: FiniteDist,
    #[serde(default = "d_t")]
    pub t: f64,
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_selection_trials")]
    pub trials: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvabilityParams {
    pub m: Vec<usize>,
    pub py: FiniteDist,
    /// `R_Y = H(Y) - gap`.
    #[serde(default = "d_gap")]
    pub gap: f64,
    #[serde(default = "d_keys")]
    pub keys: u64,
    #[serde(default = "d_draws")]
    pub draws: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovertRunParams {
    pub n: usize,
    pub px: FiniteDist,
    pub py: FiniteDist,
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_t")]
    pub t: f64,
    #[serde(default = "d_eps_frac")]
    pub epsilon_frac: f64,
    #[serde(default = "d_covert_trials")]
    pub trials: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarRunParams {
    pub log_n: u32,
    pub p: f64,
    pub py: f64,
    #[serde(default = "d_polar_beta")]
    pub beta: f64,
    #[serde(default = "d_t")]
    pub t: f64,
    #[serde(default = "d_samples")]
    pub samples: u64,
    #[serde(default = "d_frames")]
    pub frames: u64,
    /// Single-block SC trials at `p`; zero skips them.
    #[serde(default)]
    pub reliability_trials: u64,
    #[serde(default = "d_step1_blocks")]
    pub step1_blocks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentParams {
    pub px: FiniteDist,
    #[serde(default = "d_eps_grid")]
    pub eps: Vec<f64>,
    /// With `n` set, also evaluates the code bounds at that length.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "d_beta")]
    pub beta: f64,
}

fn d_beta() -> f64 {
    0.1
}
fn d_polar_beta() -> f64 {
    0.3
}
fn d_t() -> f64 {
    0.25
}
fn d_trials() -> u64 {
    10_000
}
fn d_selection_trials() -> u64 {
    1000
}
fn d_gap() -> f64 {
    0.2
}
fn d_keys() -> u64 {
    20
}
fn d_draws() -> u64 {
    10_000
}
fn d_eps_frac() -> f64 {
    0.1
}
fn d_covert_trials() -> u64 {
    200
}
fn d_samples() -> u64 {
    crate::polar::DEFAULT_MC_SAMPLES
}
fn d_frames() -> u64 {
    100
}
fn d_step1_blocks() -> usize {
    16
}
pub fn d_eps_grid() -> Vec<f64> {
    (1..=10).map(|k| k as f64 * 0.02).collect()
}

fn parse<T: DeserializeOwned>(v: &Value) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| Error::Precondition(format!("bad parameters: {e}")))
}

/// Report as written to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// The config with every parameter spelled out.
    pub config: ExperimentConfig,
    pub body: Value,
    /// Empty unless checks were requested.
    pub checks: Vec<Criterion>,
    pub wallclock_secs: f64,
    pub versions: BTreeMap<String, String>,
}

impl Report {
    pub fn checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Config and body, the part covered by the determinism contract.
    pub fn deterministic_part(&self) -> Value {
        json!({ "config": self.config, "body": self.body, "checks": self.checks })
    }
}

pub fn versions() -> BTreeMap<String, String> {
    let v = env!("CARGO_PKG_VERSION").to_string();
    let mut m: BTreeMap<String, String> =
        ["covertpress", "uniform", "estimate", "resolvability", "covert", "polar", "exponent"]
            .iter()
            .map(|k| (k.to_string(), v.clone()))
            .collect();
    m.insert("report_schema".into(), SCHEMA_VERSION.into());
    m
}

/// Normalizes the params of `config` and computes the report body.
pub fn run_body(config: &ExperimentConfig) -> Result<(ExperimentConfig, Value)> {
    let seed = config.master_seed;
    let (params, body) = match config.command {
        Command::Uniform => {
            let p: UniformParams = parse(&config.params)?;
            let body = uniform_body(&p, seed)?;
            (serde_json::to_value(&p)?, body)
        }
        Command::Estimate => {
            let p: EstimateParams = parse(&config.params)?;
            let body = estimate_body(&p, seed)?;
            (serde_json::to_value(&p)?, body)
        }
        Command::Resolvability => {
            let p: ResolvabilityParams = parse(&config.params)?;
            let body = resolvability_body(&p, seed)?;
            (serde_json::to_value(&p)?, body)
        }
        Command::Covert => {
            let p: CovertRunParams = parse(&config.params)?;
            let body = covert_body(&p, seed)?;
            (serde_json::to_value(&p)?, body)
        }
        Command::Polar => {
            let p: PolarRunParams = parse(&config.params)?;
            let body = polar_body(&p, seed)?;
            (serde_json::to_value(&p)?, body)
        }
        Command::Exponent => {
            let p: ExponentParams = parse(&config.params)?;
            let body = exponent_body(&p)?;
            (serde_json::to_value(&p)?, body)
        }
    };
    Ok((ExperimentConfig { params, ..config.clone() }, body))
}

/// Runs the experiment; with `check`, also evaluates the acceptance criteria
/// tied to the command.
pub fn run(config: &ExperimentConfig, check: bool) -> Result<Report> {
    let start = Instant::now();
    let (config, body) = run_body(config)?;
    let checks = if check { command_checks(&config, &body)? } else { Vec::new() };
    Ok(Report { config, body, checks, wallclock_secs: start.elapsed().as_secs_f64(), versions: versions() })
}

fn command_checks(config: &ExperimentConfig, body: &Value) -> Result<Vec<Criterion>> {
    let mut out = Vec::new();
    for &id in config.command.criteria() {
        let c = if id == 10 {
            converse_of_body(config.command, body)
        } else {
            criteria::evaluate(id, config.master_seed)?
        };
        out.push(c);
    }
    Ok(out)
}

fn converse_of_body(cmd: Command, body: &Value) -> Criterion {
    let conv = match cmd {
        Command::Covert => &body["report"]["converse"],
        _ => &body["experiment"]["converse"],
    };
    let measured = conv["measured"].as_f64().unwrap_or(f64::NAN);
    let bound = conv["bound"].as_f64().unwrap_or(f64::NAN);
    Criterion::new(
        10,
        "converse consistency of this run",
        measured >= bound,
        format!("measured m/n {measured:.4} vs bound {bound:.4}"),
        json!({ "measured": measured, "bound": bound }),
    )
}

fn uniform_body(p: &UniformParams, seed: u64) -> Result<Value> {
    let key = MapKey::random(&mut derive_stream(seed, "uniform/key", 0), 0);
    let mode = match p.entropy_interval {
        Some([lo, hi]) => RateMode::Interval { h_lo: lo, h_hi: hi },
        None => RateMode::Exact { h: entropy(&p.px).min((p.px.len() as f64).log2()) },
    };
    let mut cfg = make_uniform_code(p.n, p.px.len(), p.beta, mode, key)?;
    if let Some(d) = p.seed_bits {
        cfg = cfg.with_seed_bits(d);
    }
    let pe = measure_pe(&cfg, &p.px, p.trials, derive_seed(seed, "uniform/pe", 0))?;
    let pe_exact = match pe_exact(&cfg, &p.px) {
        Ok(v) => Some(v),
        Err(Error::Cap { .. }) => None,
        Err(e) => return Err(e),
    };
    let ue_seed = derive_seed(seed, "uniform/ue", 0);
    let ue = match p.ue_samples {
        Some(s) => measure_ue(&cfg, &p.px, UeMode::MonteCarlo { samples: s }, ue_seed)?,
        None => match measure_ue(&cfg, &p.px, UeMode::Exact, ue_seed) {
            Ok(u) => u,
            Err(Error::Cap { .. }) => measure_ue(&cfg, &p.px, UeMode::MonteCarlo { samples: 100_000 }, ue_seed)?,
            Err(e) => return Err(e),
        },
    };
    let bounds = predicted_bounds(&ExponentQuery::for_code(&cfg, &p.px))?;
    Ok(json!({
        "code": {
            "n": cfg.n,
            "alphabet": cfg.alphabet,
            "rate": cfg.rate,
            "rate_bits": cfg.rate_bits,
            "gamma_bits": cfg.gamma_bits,
            "seed_bits": cfg.seed_bits,
            "seed_bits_schedule": cfg.seed_bits_schedule,
            "mode": cfg.mode,
        },
        "entropy": entropy(&p.px),
        "pe": pe,
        "pe_exact": pe_exact,
        "ue": ue,
        "bounds": bounds,
    }))
}

fn estimate_body(p: &EstimateParams, seed: u64) -> Result<Value> {
    let rep = selection_experiment(&p.px, p.n, p.t, p.beta, p.trials, seed)?;
    let key = MapKey::random(&mut derive_stream(seed, "estimate/bank-key", 0), 0);
    let bank = CodeBank::new(p.n, p.px.len(), p.t, p.beta, &key)?;
    Ok(json!({ "selection": rep, "manifest": bank.manifest() }))
}

fn resolvability_body(p: &ResolvabilityParams, seed: u64) -> Result<Value> {
    if p.keys == 0 {
        return Err(Error::pre("need at least one key"));
    }
    let rate = entropy(&p.py) - p.gap;
    let mut rows = Vec::new();
    for &m in &p.m {
        let mut vd = Vec::new();
        let mut kl = Vec::new();
        let mut empty = Vec::new();
        let mut bins = 0;
        let mut first = None;
        for k in 0..p.keys {
            let key = MapKey::random(&mut derive_stream(seed, "resolvability/key", k), m as u64);
            let spec = BinningSpec::new(m, p.py.len(), rate, key)?;
            let table = BinTable::build(&spec, &p.py)?;
            let u = table.uniformity();
            bins = u.bins;
            vd.push(u.vdist);
            kl.push(u.kl);
            empty.push(u.empty_bins as f64);
            if first.is_none() {
                first = Some((spec, table));
            }
        }
        let (spec, table) = first.expect("keys >= 1");
        let rec = recoverability(&spec, &table, p.draws, derive_seed(seed, "resolvability/draws", m as u64))?;
        rows.push(json!({
            "m": m,
            "bins": bins.to_string(),
            "vdist": mean_std(&vd),
            "kl": mean_std(&kl),
            "empty_bins": mean_std(&empty),
            "recoverability": rec,
        }));
    }
    Ok(json!({ "rate": rate, "entropy": entropy(&p.py), "per_length": rows }))
}

/// Draws bins uniformly among the non-empty ones, samples, and re-bins.
pub fn recoverability(spec: &BinningSpec, table: &BinTable, draws: u64, seed: u64) -> Result<Value> {
    use rand::Rng;
    let bins = table.bins();
    if table.empty_bins() as u128 == bins {
        return Err(Error::pre("every bin is empty"));
    }
    let mut rng = derive_stream(seed, "recoverability", 0);
    let (mut hits, mut empty_hits) = (0u64, 0u64);
    for _ in 0..draws {
        let b = loop {
            let b = rng.gen_range(0..bins);
            if table.bin_size(b) > 0 {
                break b;
            }
            empty_hits += 1;
        };
        let y = table.sample(b, &mut rng)?;
        if spec.bin_of(&y)? == b {
            hits += 1;
        }
    }
    Ok(json!({ "hits": hits, "draws": draws, "empty_redraws": empty_hits, "rate": Estimate::binomial(hits, draws.max(1)) }))
}

fn covert_body(p: &CovertRunParams, seed: u64) -> Result<Value> {
    let params = CovertParams { n: p.n, alphabet_x: p.px.len(), p_y: p.py.clone(), beta: p.beta, t: p.t, eps_frac: p.epsilon_frac };
    let rep = covert_metrics(&p.px, &params, p.trials, seed)?;
    Ok(json!({ "report": rep }))
}

fn polar_params(p: &PolarRunParams) -> PolarParams {
    PolarParams { log_n: p.log_n, p_y: p.py, beta: p.beta, t: p.t, samples: p.samples }
}

fn polar_body(p: &PolarRunParams, seed: u64) -> Result<Value> {
    let rep = polar_experiment(&polar_params(p), p.p, p.frames, seed)?;
    let rel = if p.reliability_trials > 0 {
        Some(polar_reliability(
            p.log_n,
            p.p,
            p.beta,
            p.t,
            p.samples,
            p.step1_blocks,
            p.reliability_trials,
            derive_seed(seed, "polar/reliability", 0),
        )?)
    } else {
        None
    };
    Ok(json!({ "experiment": rep, "reliability": rel }))
}

fn exponent_body(p: &ExponentParams) -> Result<Value> {
    let sandwich = lemma_sandwich_checks(&p.px, &p.eps)?;
    let csv = sandwich_csv(&sandwich);
    let bounds = match p.n {
        Some(n) => {
            let key = MapKey::new([0; 32], 0);
            let cfg = make_uniform_code(n, p.px.len(), p.beta, RateMode::Exact { h: entropy(&p.px) }, key)?;
            Some(predicted_bounds(&ExponentQuery::for_code(&cfg, &p.px))?)
        }
        None => None,
    };
    Ok(json!({ "sandwich": sandwich, "csv": csv, "bounds": bounds }))
}
