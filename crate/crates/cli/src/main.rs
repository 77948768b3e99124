use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mcm_core::config::{parse_list, ConfigFile};
use mcm_core::exec::{threads_from_env, with_threads};
use mcm_core::harness::{write_curve_csv, write_report_csv, write_report_json};
use mcm_core::stream::for_each_row;
use mcm_core::{
    convergence_curve, fit_csv, run_benchmark, sample_covariance, simulate_csv, top_eigenvectors,
    weiszfeld_mcm, weiszfeld_median, CsvOptions, Error, ErrorKind, Execution, McmConfig, RealVec,
    Result, RunConfig, ScenarioConfig, StepSchedule, StreamFitter, WeiszfeldOptions,
};

#[derive(Parser)]
#[command(
    name = "mcm",
    version,
    about = "One-pass robust PCA with the median covariation matrix"
)]
struct Cli {
    /// Worker threads (overrides the MCM_THREADS environment variable).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw rows from a contamination scenario as CSV.
    Simulate(SimulateArgs),
    /// Fit the streaming median, MCM and online eigenvectors in one pass over a CSV.
    FitStream(FitStreamArgs),
    /// Fit the batch Weiszfeld median and MCM (plus the covariance baseline) to a CSV.
    FitWeiszfeld(FitWeiszfeldArgs),
    /// Monte Carlo comparison of estimators; one report row per estimator.
    Bench(BenchArgs),
    /// Mean eigenspace error along growing streams.
    Curve(CurveArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 50)]
    d: usize,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// student_t1 | student_t2 | reverse_brownian | none
    #[arg(long, default_value = "student_t1")]
    scenario: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write an `x1,...,xd` header line.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct InputArgs {
    /// CSV input, `-` for stdin.
    #[arg(long, default_value = "-")]
    input: PathBuf,
    /// The first line is a header.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct FitStreamArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Number of online eigenvectors (0 disables tracking).
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 2.0)]
    c_median: f64,
    #[arg(long, default_value_t = 2.0)]
    c_mcm: f64,
    #[arg(long, default_value_t = 0.75)]
    alpha: f64,
    /// Thresholded PSD-preserving steps.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    psd_mode: bool,
    /// Continue from a snapshot; schedule, q and psd settings then come from it.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Write the final state here.
    #[arg(long)]
    snapshot_out: Option<PathBuf>,
    /// JSON report path (stdout when omitted).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-row `line,scores...,ortho_dist` sidecar.
    #[arg(long)]
    scores: Option<PathBuf>,
}

#[derive(Args)]
struct FitWeiszfeldArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// JSON output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Run settings; flags override the config file, which overrides defaults.
#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated subset of pca,mcm_w,mcm_r,mcm_rplus.
    #[arg(long)]
    estimators: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    c_median: Option<f64>,
    #[arg(long)]
    c_mcm: Option<f64>,
    #[arg(long)]
    psd_mode: Option<bool>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// CSV output (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run replications on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Add a `wall_time_ms` column (makes the report timing-dependent).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated increasing sample sizes.
    #[arg(long)]
    checkpoints: Option<String>,
}

const DEFAULT_CHECKPOINTS: [usize; 8] = [50, 100, 200, 500, 1000, 2000, 5000, 10000];

fn open_input(path: &Path) -> Result<Box<dyn Read>> {
    if path == Path::new("-") {
        Ok(Box::new(io::stdin().lock()))
    } else {
        Ok(Box::new(BufReader::new(File::open(path)?)))
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => Ok(Box::new(BufWriter::new(File::create(p)?))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = ScenarioConfig::new(args.d, args.delta, args.scenario.parse()?, args.seed)?;
    let out = open_output(args.out.as_deref())?;
    simulate_csv(&cfg, args.n, out, args.header)
}

fn fit_stream(args: &FitStreamArgs) -> Result<()> {
    let resumed = args
        .resume
        .as_deref()
        .map(|p| StreamFitter::read_snapshot(BufReader::new(File::open(p)?)))
        .transpose()?;
    let cfg = McmConfig {
        median_schedule: StepSchedule::new(args.c_median, args.alpha)?,
        mcm_schedule: StepSchedule::new(args.c_mcm, args.alpha)?,
        psd_mode: args.psd_mode,
        v0: None,
    };
    let mut scores = args
        .scores
        .as_deref()
        .map(|p| File::create(p).map(BufWriter::new))
        .transpose()?;
    let fitter = fit_csv(
        open_input(&args.input.input)?,
        CsvOptions {
            has_header: args.input.header,
        },
        resumed,
        |d| StreamFitter::new(d, &cfg, args.q, args.seed),
        scores.as_mut().map(|w| w as &mut dyn Write),
    )?;
    if let Some(mut w) = scores {
        w.flush()?;
    }
    if let Some(p) = &args.snapshot_out {
        let mut w = BufWriter::new(File::create(p)?);
        fitter.write_snapshot(&mut w)?;
        w.flush()?;
    }
    write_json(&fitter.report(), args.report.as_deref())
}

#[derive(Serialize)]
struct EigenSummary {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct WeiszfeldReport {
    n: usize,
    dim: usize,
    median: Vec<f64>,
    median_iterations: usize,
    mcm_iterations: usize,
    mcm: EigenSummary,
    pca: EigenSummary,
}

fn eigen_summary(m: &mcm_core::SymMat, q: usize) -> Result<EigenSummary> {
    let vecs = top_eigenvectors(m, q)?;
    Ok(EigenSummary {
        eigenvalues: vecs.iter().map(|v| m.quad_form(v)).collect(),
        eigenvectors: vecs.into_iter().map(RealVec::into_inner).collect(),
    })
}

fn fit_weiszfeld(args: &FitWeiszfeldArgs) -> Result<()> {
    let mut points = Vec::new();
    for_each_row(
        open_input(&args.input.input)?,
        CsvOptions {
            has_header: args.input.header,
        },
        None,
        |_, row| {
            points.push(RealVec::new(row.to_vec())?);
            Ok(())
        },
    )?;
    if points.is_empty() {
        return Err(Error::NoObservations);
    }
    let dim = points[0].dim();
    if args.q == 0 || args.q > dim {
        return Err(Error::InvalidParameter(format!(
            "q must lie in 1..={dim}, got {}",
            args.q
        )));
    }
    let opts = WeiszfeldOptions {
        eps: args.eps,
        max_iter: args.max_iter,
        execution: Execution::default(),
    };
    let median = weiszfeld_median(&points, &opts)?;
    let mcm = weiszfeld_mcm(&points, &median.estimate, &opts)?;
    let report = WeiszfeldReport {
        n: points.len(),
        dim,
        median_iterations: median.iterations,
        mcm_iterations: mcm.iterations,
        mcm: eigen_summary(&mcm.estimate, args.q)?,
        pca: if points.len() >= 2 {
            eigen_summary(&sample_covariance(&points)?, args.q)?
        } else {
            EigenSummary {
                eigenvalues: vec![],
                eigenvectors: vec![],
            }
        },
        median: median.estimate.into_inner(),
    };
    write_json(&report, args.out.as_deref())
}

/// Defaults, then the config file, then explicit flags.
fn run_config(args: &RunArgs) -> Result<(RunConfig, ConfigFile)> {
    let file = match &args.config {
        Some(p) => ConfigFile::parse(&std::fs::read_to_string(p)?)?,
        None => ConfigFile::default(),
    };
    let flags = ConfigFile {
        d: args.d,
        n: args.n,
        delta: args.delta,
        scenario: args.scenario.clone(),
        estimators: args.estimators.clone(),
        reps: args.reps,
        seed: args.seed,
        alpha: args.alpha,
        c_median: args.c_median,
        c_mcm: args.c_mcm,
        psd_mode: args.psd_mode,
        out: args.out.clone(),
        q: args.q,
        checkpoints: None,
        eps: args.eps,
        max_iter: args.max_iter,
    };
    let mut cfg = RunConfig::default();
    file.apply(&mut cfg)?;
    flags.apply(&mut cfg)?;
    if args.sequential {
        cfg.execution = Execution::Sequential;
    }
    cfg.weiszfeld.execution = cfg.execution;
    Ok((cfg, file))
}

fn bench(args: &BenchArgs) -> Result<()> {
    let (cfg, _) = run_config(&args.run)?;
    let report = run_benchmark(&cfg)?;
    write_report_csv(
        &report.rows,
        open_output(cfg.output_path.as_deref())?,
        args.timing,
    )?;
    if let Some(p) = &cfg.output_path {
        write_report_json(
            &cfg,
            &report.rows,
            BufWriter::new(File::create(p.with_extension("json"))?),
        )?;
    }
    for r in report.replications.iter().filter(|r| r.loss.is_err()) {
        if let Err(e) = &r.loss {
            eprintln!(
                "warning: {} failed in replication {} (seed {}): {e}",
                r.estimator, r.replication, r.seed
            );
        }
    }
    Ok(())
}

fn curve(args: &CurveArgs) -> Result<()> {
    let (cfg, file) = run_config(&args.run)?;
    let checkpoints = match &args.checkpoints {
        Some(s) => parse_list(s)?,
        None => file
            .checkpoints
            .unwrap_or_else(|| DEFAULT_CHECKPOINTS.to_vec()),
    };
    let rows = convergence_curve(&cfg, &checkpoints)?;
    write_curve_csv(&rows, open_output(cfg.output_path.as_deref())?)
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(threads_from_env);
    let result = with_threads(threads, || match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::FitStream(a) => fit_stream(a),
        Command::FitWeiszfeld(a) => fit_weiszfeld(a),
        Command::Bench(a) => bench(a),
        Command::Curve(a) => curve(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
