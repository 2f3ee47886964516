use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nbentropy::correction::{build_correction, coefficient_bit_bound, LogBase};
use nbentropy::distribution::spec::DistSpec;
use nbentropy::distribution::Family;
use nbentropy::error::{Error, Result};
use nbentropy::estimators::{configure_buckets_scaled, default_x_max};
use nbentropy::harness::{
    audit_memory, hardpair, run, run_replay, sweep, to_json, validate, write_hardpair_csv,
    write_sweep_csv, write_trials_csv, EstimatorKind, ExperimentConfig, Overrides, SweepGrid,
    ValidateOptions,
};
use nbentropy::oracle::{
    exact_bucket_stats, exact_h_tilde, expected_eta, expected_log_ratio, expected_log_x_over_t,
    nb_mass_enclosure, TruncationPolicy,
};

const EXIT_CONFIG: u8 = 1;
const EXIT_VALIDATION: u8 = 2;

#[derive(Parser)]
#[command(
    name = "nbentropy",
    version,
    about = "Constant-memory entropy estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded trials of one estimator and write per-trial CSV.
    Run(RunArgs),
    /// Run a grid of (estimator, k, eps) cells and fit sample-complexity slopes.
    Sweep(SweepArgs),
    /// Compare working registers across alphabet sizes.
    Audit(AuditArgs),
    /// Run the named validation checks.
    Validate(ValidateArgs),
    /// Evaluate the negative-binomial oracles.
    Oracle(OracleArgs),
    /// Print the exact correction polynomial for (t, r).
    Poly(PolyArgs),
    /// Entropy gaps of the look-alike pair construction.
    Hardpair(HardpairArgs),
}

#[derive(Args)]
struct Common {
    /// Distribution: a TOML spec file, or an inline family such as `zipf:s=1`.
    #[arg(long, default_value = "uniform")]
    dist: String,
    /// Alphabet size for inline families.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replace a default constant, e.g. `m=1000` (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "simple")]
    estimator: String,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 10)]
    trials: u64,
    /// CSV output path; the JSON summary goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Read 1-based symbol indices from this file instead of sampling.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Add a wall_time_s column.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated estimators.
    #[arg(long, default_value = "bucketed")]
    estimator: String,
    /// Inline family used for every cell.
    #[arg(long, default_value = "uniform")]
    dist: String,
    /// Comma-separated alphabet sizes.
    #[arg(long, default_value = "256")]
    k: String,
    /// Comma-separated accuracies.
    #[arg(long, default_value = "0.4,0.2,0.1")]
    eps: String,
    #[arg(long, default_value_t = 3)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Perturb the linear correction coefficient before checking.
    #[arg(long)]
    tamper: bool,
    /// Oracle truncation tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Quantity {
    /// Truncated pmf mass and certified tail bound.
    Pmf,
    /// E[log2(X/t)] for X ~ NB(t, p).
    LogRatio,
    /// E[eta] for the LogEstimator with (t, r).
    Eta,
    /// E[log2(min(X, X_max)/t)] over a distribution.
    HTilde,
    /// Per-bucket (q, H) over a distribution.
    Buckets,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(value_enum)]
    quantity: Quantity,
    #[arg(long, default_value_t = 16)]
    t: u64,
    #[arg(long, default_value_t = 2)]
    r: u32,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Cap for h-tilde; defaults to ceil(t k / (eps ln 2)).
    #[arg(long)]
    x_max: Option<u64>,
    #[arg(long, default_value = "uniform")]
    dist: String,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PolyArgs {
    #[arg(long)]
    t: u64,
    #[arg(long)]
    r: u32,
    /// `2` or `e`.
    #[arg(long, default_value = "2")]
    base: String,
    /// Also report coefficient bit lengths against this constant.
    #[arg(long)]
    c_bits: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HardpairArgs {
    /// Number of symbol pairs; the instances have 2k symbols.
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 200)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run this estimator on both members of each pair.
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(Error),
    Validation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(e)
    }
}

type CliResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Poly(a) => cmd_poly(a),
        Command::Hardpair(a) => cmd_hardpair(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("validation failed: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn resolve_dist(dist: &str, k: Option<usize>, seed: u64) -> Result<DistSpec> {
    let path = Path::new(dist);
    if path.is_file() {
        let spec = DistSpec::load(path)?;
        if let (Some(k), DistSpec::Family { k: spec_k, .. }) = (k, &spec) {
            if k != *spec_k {
                return Err(Error::InvalidConfig(format!(
                    "--k {k} disagrees with k = {spec_k} in {dist}"
                )));
            }
        }
        return Ok(spec);
    }
    let k = k.ok_or_else(|| Error::InvalidConfig("inline distributions need --k".into()))?;
    Ok(DistSpec::Family {
        family: Family::parse(dist)?,
        k,
        seed,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `text` to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn json_beside(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad {what} `{s}`")))
        })
        .collect()
}

fn cmd_run(a: RunArgs) -> CliResult {
    let estimator = EstimatorKind::parse(&a.estimator)?;
    let overrides = Overrides::parse_all(&a.common.overrides)?;
    if let Some(path) = &a.replay {
        let k = match a.common.k {
            Some(k) => k,
            None => resolve_dist(&a.common.dist, None, a.common.seed)?
                .build()?
                .k(),
        };
        let reader = BufReader::new(File::open(path).map_err(Error::from)?);
        let rec = run_replay(estimator, k, a.common.eps, &overrides, reader)?;
        let mut buf = Vec::new();
        write_trials_csv(std::slice::from_ref(&rec), &mut buf, false)?;
        emit(a.out.as_deref(), &String::from_utf8_lossy(&buf))?;
        return Ok(());
    }
    let dist = resolve_dist(&a.common.dist, a.common.k, a.common.seed)?;
    let mut cfg = ExperimentConfig::new(estimator, dist, a.common.eps, a.trials, a.common.seed);
    cfg.overrides = overrides;
    cfg.timing = a.timing;
    let out = run(&cfg)?;
    let mut buf = Vec::new();
    write_trials_csv(&out.records, &mut buf, a.timing)?;
    let summary = to_json(&out.summary)?;
    match &a.out {
        Some(p) => {
            emit(Some(p), &String::from_utf8_lossy(&buf))?;
            emit(Some(&json_beside(p)), &(summary + "\n"))?;
        }
        None => {
            emit(None, &String::from_utf8_lossy(&buf))?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CliResult {
    let estimators = a
        .estimator
        .split(',')
        .map(EstimatorKind::parse)
        .collect::<Result<Vec<_>>>()?;
    let grid = SweepGrid {
        estimators,
        ks: parse_list(&a.k, "k")?,
        eps: parse_list(&a.eps, "eps")?,
        family: Family::parse(&a.dist)?,
        family_seed: a.seed,
        trials: a.trials,
        seed: a.seed,
        overrides: Overrides::parse_all(&a.overrides)?,
    };
    let out = sweep(&grid)?;
    let mut buf = Vec::new();
    write_sweep_csv(&out, &mut buf)?;
    let summary = to_json(&out.slopes)?;
    match &a.out {
        Some(p) => {
            emit(Some(p), &String::from_utf8_lossy(&buf))?;
            emit(Some(&json_beside(p)), &(to_json(&out)? + "\n"))?;
        }
        None => emit(None, &String::from_utf8_lossy(&buf))?,
    }
    eprintln!("{summary}");
    Ok(())
}

fn cmd_audit(a: AuditArgs) -> CliResult {
    let rep = audit_memory(a.eps, a.seed)?;
    println!("estimator,k,working_registers,program_constant_words,samples_used");
    for r in &rep.rows {
        println!(
            "{},{},{},{},{}",
            r.estimator,
            r.k,
            r.working_registers,
            r.program_constants.total(),
            r.samples_used
        );
    }
    println!(
        "# correction coefficients stored: {} at eps = {}, {} at eps = {}",
        rep.coefficients_at_eps,
        rep.eps,
        rep.coefficients_at_tenth,
        rep.eps / 10.0
    );
    if let Some(p) = &a.out {
        emit(Some(p), &(to_json(&rep)? + "\n"))?;
    }
    if rep.pass {
        Ok(())
    } else {
        Err(Failure::Validation("working registers depend on k".into()))
    }
}

fn cmd_validate(a: ValidateArgs) -> CliResult {
    let opts = ValidateOptions {
        tamper: a.tamper,
        policy: TruncationPolicy::with_tol(a.tol)?,
        ..ValidateOptions::default()
    };
    let rep = validate(&opts);
    for c in &rep.checks {
        println!(
            "{} {} {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    for w in &rep.warnings {
        println!("WARN {w}");
    }
    if let Some(p) = &a.out {
        emit(Some(p), &(to_json(&rep)? + "\n"))?;
    }
    if rep.pass {
        Ok(())
    } else {
        let failed = rep.checks.iter().filter(|c| !c.pass).count();
        Err(Failure::Validation(format!("{failed} check(s) failed")))
    }
}

fn cmd_oracle(a: OracleArgs) -> CliResult {
    let policy = TruncationPolicy::with_tol(a.tol)?;
    match a.quantity {
        Quantity::Pmf => {
            let (mass, tail) = nb_mass_enclosure(a.t, a.p, &policy)?;
            println!("mass = {mass}\ntail_bound = {tail:e}");
        }
        Quantity::LogRatio => {
            let e = expected_log_x_over_t(a.t, a.p, &policy)?;
            println!("value = {}\nhalf_width = {:e}", e.value, e.half_width);
        }
        Quantity::Eta => {
            let corr = build_correction(a.t, a.r, LogBase::Two)?;
            let e = expected_eta(a.t, a.r, a.p, &corr, &policy)?;
            println!(
                "value = {}\nhalf_width = {:e}\nlog2(1/p) = {}",
                e.value,
                e.half_width,
                (1.0 / a.p).log2()
            );
        }
        Quantity::HTilde | Quantity::Buckets => {
            let d = resolve_dist(&a.dist, a.k, a.seed)?.build()?;
            let x_max = a.x_max.unwrap_or_else(|| default_x_max(d.k(), a.eps, a.t));
            if matches!(a.quantity, Quantity::HTilde) {
                let h_tilde = exact_h_tilde(&d, a.t, x_max)?;
                let h = expected_log_ratio(&d, a.t, &policy)?;
                println!("x_max = {x_max}\nh_tilde = {h_tilde}");
                println!("h = {}\nh_half_width = {:e}", h.value, h.half_width);
            } else {
                let cfg = configure_buckets_scaled(d.k(), a.eps, a.t, 1.0)?;
                println!("ell,lo,hi,q,h,zero_mass");
                for (ell, s) in exact_bucket_stats(&d, &cfg)?.iter().enumerate() {
                    let b = cfg.breakpoints();
                    println!(
                        "{},{},{},{},{},{}",
                        ell + 1,
                        b[ell],
                        b[ell + 1],
                        s.q,
                        s.h,
                        s.zero_mass
                    );
                }
            }
        }
    }
    Ok(())
}

fn cmd_poly(a: PolyArgs) -> CliResult {
    let corr = build_correction(a.t, a.r, LogBase::parse(&a.base)?)?;
    let mut doc = corr.to_document();
    if let Some(c) = a.c_bits {
        let bits = coefficient_bit_bound(&corr, c);
        doc.push_str(&format!(
            "max_numerator_bits = {}\nmax_denominator_bits = {}\nbit_bound = {}\n",
            bits.max_numerator_bits, bits.max_denominator_bits, bits.bound
        ));
    }
    emit(a.out.as_deref(), &doc)?;
    Ok(())
}

fn cmd_hardpair(a: HardpairArgs) -> CliResult {
    let overrides = Overrides::parse_all(&a.overrides)?;
    let attach = match &a.estimator {
        Some(name) => Some((EstimatorKind::parse(name)?, &overrides)),
        None => None,
    };
    let out = hardpair(a.k, a.eps, a.trials, a.seed, attach)?;
    let mut buf = Vec::new();
    write_hardpair_csv(&out, &mut buf)?;
    let summary = to_json(&serde_summary(&out))?;
    match &a.out {
        Some(p) => {
            emit(Some(p), &String::from_utf8_lossy(&buf))?;
            emit(Some(&json_beside(p)), &(summary + "\n"))?;
        }
        None => {
            emit(None, &String::from_utf8_lossy(&buf))?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

/// The hard-pair summary without the per-trial rows.
fn serde_summary(out: &nbentropy::harness::HardPairOutput) -> nbentropy::harness::HardPairOutput {
    let mut s = out.clone();
    s.records.clear();
    s
}
