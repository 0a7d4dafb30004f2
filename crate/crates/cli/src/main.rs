//! `tomospec` command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use tomospec::ensemble::{
    counts_csv, load_ensemble, run_ensemble_with_progress, save_ensemble, ExperimentConfig, Scheme,
    Simulator, SpectrumEnsemble,
};
use tomospec::estimation::Spectrum;
use tomospec::hypothesis::{estimate_rank, DEFAULT_SIGNIFICANCE, MIN_SAMPLE};
use tomospec::pauli::{StateKind, StateSpec, MAX_ANALYTIC_QUBITS, MAX_DENSE_QUBITS};
use tomospec::sampling::CountModel;
use tomospec::spectral::{
    laplace_model, min_counts, physicality_probability, semicircle_center, semicircle_moment,
    semicircle_radius, SemicircleModel, SingleQubitDensity,
};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "tomospec", version, about = "Finite-statistics tomography spectra: predictions, simulation and rank tests")]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "TOMOSPEC_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Semicircle centre, radius and physicality probability.
    Predict(PredictArgs),
    /// Events per setting needed for a physical estimate.
    MinCounts(MinCountsArgs),
    /// Run a Monte-Carlo ensemble and write it to a directory.
    Simulate(SimulateArgs),
    /// Summaries, histogram and model overlay for a saved ensemble.
    Analyze(AnalyzeArgs),
    /// Rank estimation by semicircle goodness of fit.
    RankTest(RankTestArgs),
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    qubits: usize,
    /// Events per setting.
    #[arg(long)]
    counts: f64,
    /// Signal weight `q` of the state `q ρ_r + (1 − q) I/2ⁿ`.
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    #[arg(long, default_value_t = 0)]
    rank: usize,
}

#[derive(Debug, Args)]
struct MinCountsArgs {
    #[arg(long)]
    qubits: usize,
    #[arg(long)]
    q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StateArg {
    #[value(alias = "white-noise")]
    Wn,
    Ghz,
    Dicke,
    /// Haar-random pure state mixed with white noise.
    Pure,
    /// Haar-random rank-r state mixed with white noise.
    Rank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Overcomplete,
    Complete,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    qubits: usize,
    #[arg(long, value_enum, default_value_t = StateArg::Wn)]
    state: StateArg,
    /// JSON state description; overrides --state.
    #[arg(long)]
    state_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    /// Signal rank for --state rank.
    #[arg(long, default_value_t = 1)]
    rank: usize,
    /// Excitations of the Dicke state (default n/2).
    #[arg(long)]
    excitations: Option<usize>,
    #[arg(long, value_enum, default_value_t = SchemeArg::Overcomplete)]
    scheme: SchemeArg,
    /// Events per setting (overcomplete scheme).
    #[arg(long)]
    counts: Option<u64>,
    /// Total events (complete scheme).
    #[arg(long)]
    total_counts: Option<u64>,
    /// Independent Poisson counts instead of fixed events per setting.
    #[arg(long)]
    poisson: bool,
    #[arg(long, default_value_t = 1000)]
    reps: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the raw counts of the first replica.
    #[arg(long)]
    dump_counts: bool,
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 100)]
    bins: usize,
    /// Output directory (defaults to the ensemble directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RankTestArgs {
    /// Text file with one eigenvalue per line.
    #[arg(long, conflicts_with = "input")]
    eigenvalues: Option<PathBuf>,
    /// Ensemble directory to take a replica from.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0, requires = "input")]
    replica: usize,
    #[arg(long)]
    counts: Option<f64>,
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SIGNIFICANCE)]
    significance: f64,
    #[arg(long)]
    max_rank: Option<usize>,
}

/// Flag validation failures, reported with the usage exit code.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Predict(args) => predict(&args, cli.format),
        Command::MinCounts(args) => cmd_min_counts(&args, cli.format),
        Command::Simulate(args) => simulate(&args, cli.seed, cli.format),
        Command::Analyze(args) => analyze(&args, cli.format),
        Command::RankTest(args) => rank_test(&args, cli.format),
    }
}

fn check_qubits(n: usize, max: usize) -> Result<()> {
    if n == 0 || n > max {
        return Err(usage(format!("--qubits must be in 1..={max}, got {n}")));
    }
    Ok(())
}

fn check_q(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(usage(format!("--q must be in [0, 1], got {q}")));
    }
    Ok(())
}

fn emit<T: Serialize>(value: &T, format: Format, table: impl FnOnce() -> String) -> Result<()> {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(value)?),
        Format::Table => print!("{}", table()),
    }
    Ok(())
}

fn key_value_table(value: &Value) -> String {
    let mut out = String::new();
    if let Value::Object(map) = value {
        let width = map.keys().map(String::len).max().unwrap_or(0);
        for (k, v) in map {
            let shown = match v {
                Value::Number(x) if !x.is_u64() && !x.is_i64() => format!("{:.6e}", x.as_f64().unwrap_or(f64::NAN)),
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            let _ = writeln!(out, "{k:<width$}  {shown}");
        }
    }
    out
}

fn predict(args: &PredictArgs, format: Format) -> Result<()> {
    check_qubits(args.qubits, MAX_ANALYTIC_QUBITS)?;
    check_q(args.q)?;
    if args.counts.is_nan() || args.counts < 1.0 {
        return Err(usage(format!("--counts must be at least 1, got {}", args.counts)));
    }
    let dim = 1usize << args.qubits;
    if args.rank >= dim {
        return Err(usage(format!("--rank must be below 2^n = {dim}, got {}", args.rank)));
    }
    let center = semicircle_center(args.qubits, args.q, args.rank)?;
    let radius = semicircle_radius(args.qubits, args.counts, args.rank);
    let model = SemicircleModel::new(center, radius)?;
    let report = json!({
        "qubits": args.qubits,
        "counts": args.counts,
        "q": args.q,
        "rank": args.rank,
        "center": center,
        "radius": radius,
        "width": 2.0 * radius,
        "second_moment": semicircle_moment(&model, 2),
        "physicality_probability": physicality_probability(&model, args.qubits),
    });
    emit(&report, format, || key_value_table(&report))
}

fn cmd_min_counts(args: &MinCountsArgs, format: Format) -> Result<()> {
    check_qubits(args.qubits, MAX_ANALYTIC_QUBITS)?;
    check_q(args.q)?;
    if args.q >= 1.0 {
        return Err(usage("--q must be below 1: the minimum count diverges as q -> 1"));
    }
    let n0 = min_counts(args.qubits, args.q)?;
    let report = json!({ "qubits": args.qubits, "q": args.q, "min_counts": n0 });
    emit(&report, format, || format!("{n0}\n"))
}

fn state_spec(args: &SimulateArgs, seed: u64) -> Result<StateSpec> {
    if let Some(path) = &args.state_file {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let spec: StateSpec = serde_json::from_str(&text).map_err(|e| usage(format!("--state-file: {e}")))?;
        if spec.n != args.qubits {
            return Err(usage(format!("--state-file describes {} qubits, --qubits is {}", spec.n, args.qubits)));
        }
        return Ok(spec);
    }
    let n = args.qubits;
    // the random-state seed is decorrelated from the sampling streams
    let state_seed = seed ^ 0x5851_f42d_4c95_7f2d;
    Ok(match args.state {
        StateArg::Wn => StateSpec::white_noise(n),
        StateArg::Ghz => StateSpec::ghz(n, args.q),
        StateArg::Dicke => StateSpec::dicke(n, args.excitations.unwrap_or(n / 2), args.q),
        StateArg::Pure => StateSpec::pure_random(n, args.q, state_seed),
        StateArg::Rank => StateSpec::rank_random(n, args.rank, args.q, state_seed),
    })
}

fn simulate(args: &SimulateArgs, seed: u64, format: Format) -> Result<()> {
    check_qubits(args.qubits, MAX_DENSE_QUBITS)?;
    check_q(args.q)?;
    if args.reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    let state = state_spec(args, seed)?;
    state.validate().map_err(|e| usage(format!("invalid state: {e}")))?;
    let config = match args.scheme {
        SchemeArg::Overcomplete => {
            let events = args.counts.ok_or_else(|| usage("--counts is required for the overcomplete scheme"))?;
            if events == 0 {
                return Err(usage("--counts must be at least 1"));
            }
            if args.total_counts.is_some() {
                return Err(usage("--total-counts only applies to --scheme complete"));
            }
            let model = if args.poisson {
                CountModel::poisson(events)
            } else {
                CountModel::multinomial(events)
            };
            ExperimentConfig::overcomplete(state, model, args.reps, seed)
        }
        SchemeArg::Complete => {
            let total = args
                .total_counts
                .ok_or_else(|| usage("--total-counts is required for the complete scheme"))?;
            if total == 0 {
                return Err(usage("--total-counts must be at least 1"));
            }
            if args.counts.is_some() {
                return Err(usage("--counts only applies to --scheme overcomplete"));
            }
            ExperimentConfig::complete(state, total, args.reps, seed)
        }
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let step = (args.reps / 10).max(1);
    let quiet = args.quiet;
    let ensemble = run_ensemble_with_progress(&config, |done, total| {
        if !quiet && (done % step == 0 || done == total) {
            eprintln!("progress: {done}/{total} replicas");
        }
    })?;
    save_ensemble(&ensemble, &args.out)?;
    if args.dump_counts {
        let sim = Simulator::new(&config)?;
        let path = args.out.join("counts_replica0.csv");
        fs::write(&path, counts_csv(&sim, 0)).with_context(|| format!("writing {}", path.display()))?;
    }
    let summary = summary_json(&ensemble)?;
    emit(&summary, format, || key_value_table(&summary))
}

/// Summary statistics plus the matching theoretical model.
fn summary_json(ensemble: &SpectrumEnsemble) -> Result<Value> {
    let s = ensemble.summary()?;
    let config = &ensemble.config;
    let n = config.qubits();
    let events = config.counts.events as f64;
    let model = model_json(config)?;
    Ok(json!({
        "qubits": n,
        "scheme": config.scheme,
        "state": config.state.kind,
        "events": config.counts.events,
        "count_mode": config.counts.mode,
        "replicas": s.replicas,
        "master_seed": config.master_seed,
        "unphysical_fraction": s.unphysical_fraction,
        "physical_fraction": 1.0 - s.unphysical_fraction,
        "mean": s.mean,
        "m2": s.m2,
        "m3": s.m3,
        "m4": s.m4,
        "m6": s.m6,
        "m4_over_m2_squared": s.m4 / (s.m2 * s.m2),
        "m6_over_m2_cubed": s.m6 / s.m2.powi(3),
        "min_eigenvalue": s.min_eigenvalue,
        "max_eigenvalue": s.max_eigenvalue,
        "mean_largest_eigenvalue": s.mean_largest_eigenvalue,
        "events_per_unit": events,
        "model": model,
    }))
}

enum Overlay {
    Semicircle(SemicircleModel),
    SingleQubit(SingleQubitDensity),
    Laplace(tomospec::spectral::LaplaceModel),
}

impl Overlay {
    fn for_config(config: &ExperimentConfig) -> Result<Self> {
        let n = config.qubits();
        let events = config.counts.events as f64;
        Ok(match config.scheme {
            Scheme::Complete => Overlay::Laplace(laplace_model(n, events)?),
            Scheme::Overcomplete if n == 1 && config.state.kind == StateKind::WhiteNoise => {
                Overlay::SingleQubit(SingleQubitDensity::new(events)?)
            }
            Scheme::Overcomplete => {
                let rank = config.state.signal_rank().unwrap_or(0);
                let q = if rank == 0 { 0.0 } else { config.state.q };
                let center = semicircle_center(n, q, rank)?;
                Overlay::Semicircle(SemicircleModel::new(center, semicircle_radius(n, events, rank))?)
            }
        })
    }

    fn pdf(&self, x: f64) -> f64 {
        match self {
            Overlay::Semicircle(m) => m.pdf(x),
            Overlay::SingleQubit(g) => g.pdf(x),
            Overlay::Laplace(h) => h.pdf(x),
        }
    }
}

fn model_json(config: &ExperimentConfig) -> Result<Value> {
    let n = config.qubits();
    Ok(match Overlay::for_config(config)? {
        Overlay::Semicircle(m) => json!({
            "kind": "semicircle",
            "center": m.center,
            "radius": m.radius,
            "m2": semicircle_moment(&m, 2),
        }),
        Overlay::SingleQubit(g) => json!({
            "kind": "single_qubit",
            "events": g.events,
            "normalisation": g.normalisation,
        }),
        Overlay::Laplace(h) => json!({
            "kind": "laplace",
            "center": h.center,
            "alpha": h.alpha,
            "m2": h.second_moment(),
            "predicted_m2": (4f64).powi(n as i32) / config.counts.events as f64,
        }),
    })
}

fn analyze(args: &AnalyzeArgs, format: Format) -> Result<()> {
    if args.bins == 0 {
        return Err(usage("--bins must be at least 1"));
    }
    let ensemble = load_ensemble(&args.input).with_context(|| format!("loading {}", args.input.display()))?;
    let out = args.out.clone().unwrap_or_else(|| args.input.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let summary = summary_json(&ensemble)?;
    write_file(&out.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;

    let s = ensemble.summary()?;
    let (mut lo, mut hi) = (s.min_eigenvalue, s.max_eigenvalue);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / args.bins as f64;
    let mut counts = vec![0u64; args.bins];
    for x in ensemble.pooled() {
        let bin = (((x - lo) / width) as usize).min(args.bins - 1);
        counts[bin] += 1;
    }
    let total = counts.iter().sum::<u64>() as f64;
    let mut hist = String::from("bin_lo,bin_hi,bin_center,count,density\n");
    for (i, &c) in counts.iter().enumerate() {
        let a = lo + i as f64 * width;
        let _ = writeln!(
            hist,
            "{:.16e},{:.16e},{:.16e},{c},{:.16e}",
            a,
            a + width,
            a + 0.5 * width,
            c as f64 / (total * width)
        );
    }
    write_file(&out.join("histogram.csv"), &hist)?;

    let overlay = Overlay::for_config(&ensemble.config)?;
    let points = 4 * args.bins + 1;
    let mut curve = String::from("lambda,density\n");
    for i in 0..points {
        let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let _ = writeln!(curve, "{:.16e},{:.16e}", x, overlay.pdf(x));
    }
    write_file(&out.join("overlay.csv"), &curve)?;
    emit(&summary, format, || key_value_table(&summary))
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn read_eigenvalues(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.parse::<f64>().with_context(|| format!("{}: bad eigenvalue `{l}`", path.display())))
        .collect()
}

fn rank_test(args: &RankTestArgs, format: Format) -> Result<()> {
    let (values, n, events) = match (&args.eigenvalues, &args.input) {
        (Some(path), None) => {
            let n = args.qubits.ok_or_else(|| usage("--qubits is required with --eigenvalues"))?;
            let events = args.counts.ok_or_else(|| usage("--counts is required with --eigenvalues"))?;
            (read_eigenvalues(path)?, n, events)
        }
        (None, Some(dir)) => {
            let ensemble = load_ensemble(dir).with_context(|| format!("loading {}", dir.display()))?;
            let row = ensemble.rows.get(args.replica).ok_or_else(|| {
                usage(format!("--replica {} out of range (ensemble has {})", args.replica, ensemble.len()))
            })?;
            let n = ensemble.config.qubits();
            if ensemble.config.scheme != Scheme::Overcomplete {
                bail!("rank tests need an overcomplete-scheme ensemble");
            }
            let events = args.counts.unwrap_or(ensemble.config.counts.events as f64);
            (row.clone(), n, events)
        }
        _ => return Err(usage("give exactly one of --eigenvalues or --in")),
    };
    check_qubits(n, MAX_ANALYTIC_QUBITS)?;
    let dim = 1usize << n;
    if values.len() != dim {
        bail!("expected 2^{n} = {dim} eigenvalues, found {}", values.len());
    }
    if events.is_nan() || events < 1.0 {
        return Err(usage(format!("--counts must be at least 1, got {events}")));
    }
    if !(args.significance > 0.0 && args.significance < 1.0) {
        return Err(usage(format!("--significance must be in (0, 1), got {}", args.significance)));
    }
    let max_rank = args.max_rank.unwrap_or_else(|| 8.min(dim.saturating_sub(MIN_SAMPLE)));
    if max_rank + MIN_SAMPLE > dim {
        return Err(usage(format!("--max-rank must leave at least {MIN_SAMPLE} noise eigenvalues")));
    }
    let report = estimate_rank(&Spectrum::new(values), n, events, args.significance, max_rank)?;
    emit(&report, format, || report.to_table())
}
