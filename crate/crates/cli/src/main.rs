use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use covertpress::covert::{covert_decode, covert_encode, CovertFrame, CovertParams, FrameJson, SharedSecrets};
use covertpress::criteria;
use covertpress::dist::FiniteDist;
use covertpress::experiment::{
    self, Command, CovertRunParams, EstimateParams, ExperimentConfig, ExponentParams, PolarRunParams, Report,
    ResolvabilityParams, UniformParams,
};
use covertpress::polar::{PolarFrame, PolarKeys, PolarParams, PolarScheme};
use covertpress::rng::derive_stream;
use covertpress::uniform::Decoded;
use covertpress::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_PRECONDITION: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "covertpress", version, about = "Universal covert source coding experiments")]
struct Cli {
    /// Master seed; fixes every random draw of the run.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Write the report (or artefact) here.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Evaluate the acceptance criteria tied to the command; exit 3 on failure.
    #[arg(long, global = true)]
    check: bool,
    /// Print the full JSON report on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Seeded uniform source code: error probability and output uniformity.
    Uniform(UniformArgs),
    /// Entropy-cell selection and adaptive round trips.
    Estimate(EstimateArgs),
    /// Random binning uniformity and recoverability.
    Resolvability(ResolvabilityArgs),
    /// Type-based covert pipeline.
    Covert {
        #[command(subcommand)]
        action: CovertCmd,
    },
    /// Polar covert pipeline for binary alphabets.
    Polar {
        #[command(subcommand)]
        action: PolarCmd,
    },
    /// Entropy-constrained divergence sandwich, as CSV.
    Exponent(ExponentArgs),
    /// Run an experiment from a JSON config file.
    Run {
        config: PathBuf,
    },
    /// Evaluate acceptance criteria by number (all when none are given).
    Acceptance {
        ids: Vec<u8>,
    },
}

#[derive(Args)]
struct UniformArgs {
    #[arg(long)]
    n: usize,
    /// Bernoulli parameter, comma list, JSON array, or path to a JSON file.
    #[arg(long)]
    px: String,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// Entropy interval `lo,hi`; without it the code uses H(px).
    #[arg(long)]
    entropy_interval: Option<String>,
    #[arg(long)]
    seed_bits: Option<u32>,
    #[arg(long)]
    ue_samples: Option<u64>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    px: String,
    #[arg(long, default_value_t = 0.25)]
    t: f64,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
}

#[derive(Args)]
struct ResolvabilityArgs {
    /// Output lengths, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    m: Vec<usize>,
    #[arg(long)]
    py: String,
    /// `R_Y = H(Y) - gap`.
    #[arg(long, default_value_t = 0.2)]
    gap: f64,
    #[arg(long, default_value_t = 20)]
    keys: u64,
    #[arg(long, default_value_t = 10_000)]
    draws: u64,
}

#[derive(Args, Clone)]
struct CovertShared {
    /// Target distribution.
    #[arg(long)]
    py: String,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 0.25)]
    t: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon_frac: f64,
}

#[derive(Subcommand)]
enum CovertCmd {
    /// Rate, reliability and covertness over many frames.
    Metrics {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        px: String,
        #[command(flatten)]
        shared: CovertShared,
        #[arg(long, default_value_t = 200)]
        trials: u64,
    },
    /// Draw shared secrets for block length n.
    Keygen {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        alphabet_x: usize,
        #[command(flatten)]
        shared: CovertShared,
        #[arg(long)]
        secrets: PathBuf,
    },
    /// Encode one source block given as a digit string.
    Encode {
        #[arg(long)]
        x: String,
        #[arg(long, default_value_t = 2)]
        alphabet_x: usize,
        #[command(flatten)]
        shared: CovertShared,
        #[arg(long)]
        secrets: PathBuf,
    },
    /// Decode a frame file.
    Decode {
        #[arg(long)]
        frame: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        alphabet_x: usize,
        #[command(flatten)]
        shared: CovertShared,
        #[arg(long)]
        secrets: PathBuf,
    },
}

#[derive(Args, Clone)]
struct PolarShared {
    /// log2 of the source blocklength N.
    #[arg(long)]
    n: u32,
    /// Target Bernoulli parameter.
    #[arg(long)]
    py: f64,
    #[arg(long, default_value_t = 0.3)]
    beta: f64,
    #[arg(long, default_value_t = 0.25)]
    t: f64,
    #[arg(long, default_value_t = covertpress::polar::DEFAULT_MC_SAMPLES)]
    samples: u64,
}

impl PolarShared {
    fn params(&self) -> PolarParams {
        PolarParams { log_n: self.n, p_y: self.py, beta: self.beta, t: self.t, samples: self.samples }
    }
}

#[derive(Subcommand)]
enum PolarCmd {
    /// Encode and decode frames of a Bernoulli(p) source.
    Run {
        #[command(flatten)]
        shared: PolarShared,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 100)]
        frames: u64,
        #[arg(long, default_value_t = 0)]
        reliability_trials: u64,
        #[arg(long, default_value_t = 16)]
        step1_blocks: usize,
    },
    /// Draw K_0 and the key pool.
    Keygen {
        #[command(flatten)]
        shared: PolarShared,
        #[arg(long)]
        keys: PathBuf,
    },
    /// Encode source bits (a 0/1 string), or a fitted Bernoulli(p) source.
    Encode {
        #[command(flatten)]
        shared: PolarShared,
        #[arg(long)]
        keys: PathBuf,
        #[arg(long, conflicts_with = "p")]
        x: Option<String>,
        #[arg(long)]
        p: Option<f64>,
    },
    /// Decode a frame file.
    Decode {
        #[command(flatten)]
        shared: PolarShared,
        #[arg(long)]
        keys: PathBuf,
        #[arg(long)]
        frame: PathBuf,
    },
}

#[derive(Args)]
struct ExponentArgs {
    #[arg(long)]
    px: String,
    /// Gap grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Also evaluate the code bounds at this blocklength.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    /// CSV sidecar path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

enum Failure {
    Precondition(String),
    Check,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Precondition(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Precondition(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Precondition(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Precondition(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_PRECONDITION)
        }
        Err(Failure::Check) => ExitCode::from(EXIT_CHECK),
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("COVERTPRESS_THREADS") else {
        return Ok(());
    };
    let k: usize = v.trim().parse().map_err(|_| format!("COVERTPRESS_THREADS={v:?} is not a thread count"))?;
    if k == 0 {
        return Err("COVERTPRESS_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(k).build_global().map_err(|e| e.to_string())
}

/// Bernoulli parameter, comma list, JSON array, or a JSON file.
fn parse_dist(s: &str) -> Result<FiniteDist, Error> {
    let t = s.trim();
    if Path::new(t).is_file() {
        return FiniteDist::from_json(&fs::read_to_string(t)?);
    }
    if t.starts_with('[') {
        return FiniteDist::from_json(t);
    }
    let vals = t
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Error::InvalidDist(format!("cannot parse {s:?}"))))
        .collect::<Result<Vec<f64>, Error>>()?;
    if vals.len() == 1 {
        FiniteDist::bernoulli(vals[0])
    } else {
        FiniteDist::normalized(vals)
    }
}

fn parse_symbols(s: &str) -> Result<Vec<u8>, Error> {
    s.trim()
        .chars()
        .map(|c| c.to_digit(36).map(|d| d as u8).ok_or_else(|| Error::Format(format!("bad symbol {c:?}"))))
        .collect()
}

fn symbols(x: &[u8]) -> String {
    x.iter().map(|&s| char::from_digit(s as u32, 36).unwrap_or('?')).collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Precondition(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Precondition(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Outcome {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes to `--out` when given, else prints.
fn emit<T: Serialize>(cli: &Cli, v: &T) -> Outcome {
    match &cli.out {
        Some(p) => write_json(p, v),
        None => {
            println!("{}", serde_json::to_string_pretty(v)?);
            Ok(())
        }
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    let exp = |command: Command, params: Value| ExperimentConfig {
        command,
        params,
        master_seed: cli.seed,
        output_path: cli.out.clone(),
    };
    match &cli.cmd {
        Cmd::Uniform(a) => {
            let interval = match &a.entropy_interval {
                Some(s) => {
                    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| Failure::Precondition(format!("bad interval {s:?}")))?;
                    match v[..] {
                        [lo, hi] => Some([lo, hi]),
                        _ => return Err(Failure::Precondition(format!("interval needs two values, got {s:?}"))),
                    }
                }
                None => None,
            };
            let p = UniformParams {
                n: a.n,
                px: parse_dist(&a.px)?,
                beta: a.beta,
                trials: a.trials,
                entropy_interval: interval,
                seed_bits: a.seed_bits,
                ue_samples: a.ue_samples,
            };
            run_experiment(cli, &exp(Command::Uniform, serde_json::to_value(p)?))
        }
        Cmd::Estimate(a) => {
            let p = EstimateParams { n: a.n, px: parse_dist(&a.px)?, t: a.t, beta: a.beta, trials: a.trials };
            run_experiment(cli, &exp(Command::Estimate, serde_json::to_value(p)?))
        }
        Cmd::Resolvability(a) => {
            let p = ResolvabilityParams { m: a.m.clone(), py: parse_dist(&a.py)?, gap: a.gap, keys: a.keys, draws: a.draws };
            run_experiment(cli, &exp(Command::Resolvability, serde_json::to_value(p)?))
        }
        Cmd::Covert { action } => covert(cli, action, exp),
        Cmd::Polar { action } => polar(cli, action, exp),
        Cmd::Exponent(a) => {
            let p = ExponentParams {
                px: parse_dist(&a.px)?,
                eps: a.eps.clone().unwrap_or_else(experiment::d_eps_grid),
                n: a.n,
                beta: a.beta,
            };
            let report = experiment::run(&exp(Command::Exponent, serde_json::to_value(p)?), cli.check)?;
            let csv = report.body["csv"].as_str().unwrap_or_default().to_string();
            if let Some(path) = &a.csv {
                fs::write(path, &csv)?;
            }
            if let Some(path) = &cli.out {
                write_json(path, &report)?;
            }
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{csv}");
                print_checks(&report);
            }
            check_outcome(cli, &report)
        }
        Cmd::Run { config } => {
            let mut cfg: ExperimentConfig = read_json(config)?;
            if cli.out.is_some() {
                cfg.output_path = cli.out.clone();
            }
            run_experiment(cli, &cfg)
        }
        Cmd::Acceptance { ids } => {
            let ids: Vec<u8> = if ids.is_empty() { (1..=11).collect() } else { ids.clone() };
            let mut all = Vec::new();
            for id in ids {
                let c = criteria::evaluate(id, cli.seed)?;
                println!("{}", c.line());
                all.push(c);
            }
            if let Some(path) = &cli.out {
                write_json(path, &all)?;
            }
            if all.iter().all(|c| c.passed) {
                Ok(())
            } else {
                Err(Failure::Check)
            }
        }
    }
}

fn run_experiment(cli: &Cli, cfg: &ExperimentConfig) -> Outcome {
    let report = experiment::run(cfg, cli.check)?;
    let path = cli.out.clone().or_else(|| cfg.output_path.clone());
    if let Some(path) = &path {
        write_json(path, &report)?;
    }
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        for line in summary(cfg.command, &report.body) {
            println!("{line}");
        }
        print_checks(&report);
        if let Some(path) = &path {
            println!("report: {}", path.display());
        }
    }
    check_outcome(cli, &report)
}

fn print_checks(report: &Report) {
    for c in &report.checks {
        println!("{}", c.line());
    }
}

fn check_outcome(cli: &Cli, report: &Report) -> Outcome {
    if cli.check && !report.checks_passed() {
        Err(Failure::Check)
    } else {
        Ok(())
    }
}

fn f(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.6}"),
        None => v.to_string(),
    }
}

fn summary(cmd: Command, b: &Value) -> Vec<String> {
    match cmd {
        Command::Uniform => vec![
            format!(
                "code: rate {} ({} + {} bits), seed {} bits",
                f(&b["code"]["rate"]),
                b["code"]["rate_bits"],
                b["code"]["gamma_bits"],
                b["code"]["seed_bits"]
            ),
            format!("pe: {} (95% CI {}, {})", f(&b["pe"]["est"]), f(&b["pe"]["ci"][0]), f(&b["pe"]["ci"][1])),
            format!("pe exact: {}", f(&b["pe_exact"])),
            format!("ue: vdist {} kl {} ({})", f(&b["ue"]["vdist"]), f(&b["ue"]["kl"]), b["ue"]["mode"]),
            format!("bounds: pe {} ue {}", f(&b["bounds"]["pe_bound"]), f(&b["bounds"]["ue_bound"])),
        ],
        Command::Estimate => {
            let s = &b["selection"];
            vec![
                format!("q = {}, delta = {}", s["q"], f(&s["delta"])),
                format!("miss: {}", f(&s["miss"]["est"])),
                format!("round-trip error: {}", f(&s["roundtrip"]["est"])),
                format!("mean message bits: {}", f(&s["mean_message_bits"])),
            ]
        }
        Command::Resolvability => {
            let mut out = vec![format!("R_Y = {}", f(&b["rate"]))];
            for r in b["per_length"].as_array().into_iter().flatten() {
                out.push(format!(
                    "m = {}: bins {}, vdist {}, recovered {}/{}",
                    r["m"],
                    r["bins"].as_str().unwrap_or_default(),
                    f(&r["vdist"]["mean"]),
                    r["recoverability"]["hits"],
                    r["recoverability"]["draws"]
                ));
            }
            out
        }
        Command::Covert => {
            let r = &b["report"];
            vec![
                format!("rate m/n: {} (R_Y {})", f(&r["rate_mean"]), f(&r["rate_y"])),
                format!("pe: {}", f(&r["pe"]["est"])),
                format!("marginal vdist: {}", f(&r["covert_vdist"])),
                format!("converse: {} >= {}", f(&r["converse"]["measured"]), f(&r["converse"]["bound"])),
                format!("rekeyed frames: {}, encode failures: {}", r["rekeyed_frames"], r["encode_failures"]),
            ]
        }
        Command::Polar => {
            let r = &b["experiment"];
            let mut out = vec![
                format!("N = {}, M = {}", r["n"], r["m"]),
                format!("recovery: {}", f(&r["recovery"]["est"])),
                format!("marginal vdist: {}", f(&r["marginal_vdist"])),
                format!("seed ratio: {}", f(&r["seed_ratio"])),
                format!("rate M/(LN): {}", f(&r["rate_mean"])),
            ];
            if !b["reliability"].is_null() {
                out.push(format!(
                    "|H|/N: {}, SC recovery {}",
                    f(&b["reliability"]["h_fraction"]),
                    f(&b["reliability"]["recovery"]["est"])
                ));
            }
            out
        }
        Command::Exponent => vec![],
    }
}

fn covert_params(n: usize, alphabet_x: usize, s: &CovertShared) -> Result<CovertParams, Error> {
    Ok(CovertParams { n, alphabet_x, p_y: parse_dist(&s.py)?, beta: s.beta, t: s.t, eps_frac: s.epsilon_frac })
}

fn covert(cli: &Cli, action: &CovertCmd, exp: impl Fn(Command, Value) -> ExperimentConfig) -> Outcome {
    match action {
        CovertCmd::Metrics { n, px, shared, trials } => {
            let p = CovertRunParams {
                n: *n,
                px: parse_dist(px)?,
                py: parse_dist(&shared.py)?,
                beta: shared.beta,
                t: shared.t,
                epsilon_frac: shared.epsilon_frac,
                trials: *trials,
            };
            run_experiment(cli, &exp(Command::Covert, serde_json::to_value(p)?))
        }
        CovertCmd::Keygen { n, alphabet_x, shared, secrets } => {
            let params = covert_params(*n, *alphabet_x, shared)?;
            let s = SharedSecrets::random(&params, &mut derive_stream(cli.seed, "cli/covert/keygen", 0))?;
            write_json(secrets, &s)
        }
        CovertCmd::Encode { x, alphabet_x, shared, secrets } => {
            let x = parse_symbols(x)?;
            let params = covert_params(x.len(), *alphabet_x, shared)?;
            let s: SharedSecrets = read_json(secrets)?;
            let frame = covert_encode(&x, &s, &params, &mut derive_stream(cli.seed, "cli/covert/encode", 0))?;
            emit(cli, &frame.to_json())
        }
        CovertCmd::Decode { frame, n, alphabet_x, shared, secrets } => {
            let params = covert_params(*n, *alphabet_x, shared)?;
            let s: SharedSecrets = read_json(secrets)?;
            let fj: FrameJson = read_json(frame)?;
            let got = covert_decode(&CovertFrame::from_json(&fj)?, &s, &params)?;
            let out = match got {
                Decoded::Sequence(x) => json!({ "status": "sequence", "x": symbols(&x) }),
                Decoded::Fallback(x) => json!({ "status": "fallback", "x": symbols(&x) }),
                Decoded::Failure => json!({ "status": "failure", "x": null }),
            };
            emit(cli, &out)
        }
    }
}

fn polar(cli: &Cli, action: &PolarCmd, exp: impl Fn(Command, Value) -> ExperimentConfig) -> Outcome {
    match action {
        PolarCmd::Run { shared, p, frames, reliability_trials, step1_blocks } => {
            let params = PolarRunParams {
                log_n: shared.n,
                p: *p,
                py: shared.py,
                beta: shared.beta,
                t: shared.t,
                samples: shared.samples,
                frames: *frames,
                reliability_trials: *reliability_trials,
                step1_blocks: *step1_blocks,
            };
            run_experiment(cli, &exp(Command::Polar, serde_json::to_value(params)?))
        }
        PolarCmd::Keygen { shared, keys } => {
            let scheme = PolarScheme::new(shared.params())?;
            let k = PolarKeys::random(&scheme, &mut derive_stream(cli.seed, "cli/polar/keygen", 0));
            write_json(keys, &k)
        }
        PolarCmd::Encode { shared, keys, x, p } => {
            let scheme = PolarScheme::new(shared.params())?;
            let k: PolarKeys = read_json(keys)?;
            let mut rng = derive_stream(cli.seed, "cli/polar/encode", 0);
            let source = match (x, p) {
                (Some(x), _) => covertpress::bits::parse_bitstring(x)?,
                (None, Some(p)) => {
                    use rand::Rng;
                    let mut src = derive_stream(cli.seed, "cli/polar/source", 0);
                    scheme.fit_source(|| (src.gen::<f64>() < *p) as u8)?.0
                }
                (None, None) => return Err(Failure::Precondition("give --x or --p".into())),
            };
            let frame = scheme.encode(&source, &k, &mut rng)?;
            let used = frame.layout.blocks * shared.params().n();
            emit(cli, &json!({ "frame": frame, "source": covertpress::bits::bitstring(&source[..used]) }))
        }
        PolarCmd::Decode { shared, keys, frame } => {
            let scheme = PolarScheme::new(shared.params())?;
            let k: PolarKeys = read_json(keys)?;
            let v: Value = read_json(frame)?;
            let fr: PolarFrame = serde_json::from_value(v.get("frame").cloned().unwrap_or(v))?;
            let out = match scheme.decode(&fr.y, &k)? {
                Some(x) => json!({ "status": "sequence", "x": covertpress::bits::bitstring(&x) }),
                None => json!({ "status": "failure", "x": null }),
            };
            emit(cli, &out)
        }
    }
}
