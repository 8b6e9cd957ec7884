//! Command-line driver.

use std::ffi::OsString;
use std::io::{self, BufWriter, Write};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::classify::{self, ClassificationReport, SeriesKind, Verdict};
use crate::config::{self, ConfigError, ExperimentConfig};
use crate::engine;
use crate::loynes::{self, StationarySampler, TvReport};
use crate::regen::{self, RegenParams, RenewalSummary};
use crate::report::{self, NUMERICAL_EVIDENCE};
use crate::rng::RngStream;
use crate::stats;
use crate::tails::{self, TailRegime};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "maxdater", version, about = "GI/GI/∞ maximum-dater experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Report destination (stdout when absent).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<String>,
    /// Bulk numeric output.
    #[arg(long, global = true, value_name = "PATH")]
    pub csv: Option<String>,
    /// Replications (or samples) for the command.
    #[arg(long, global = true, value_name = "N")]
    pub reps: Option<usize>,
    /// Horizon for the command.
    #[arg(long, global = true, value_name = "N")]
    pub horizon: Option<usize>,
    /// Path length for simulate, gg1 and the TV check.
    #[arg(long, global = true, value_name = "N")]
    pub n: Option<usize>,
    /// Exit with status 3 when the verdict is inconclusive.
    #[arg(long, global = true)]
    pub strict: bool,
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Forward path of the maximum dater.
    Simulate,
    /// Stationary draws by the backward construction.
    Stationary,
    /// Recurrence classification.
    Classify,
    /// Regeneration times and renewal-sequence estimates.
    Regen,
    /// Stationary tail against its asymptotic prediction.
    Tails,
    /// Single-server waiting-time path and drift analysis.
    Gg1,
    /// Infinite-server and single-server classifications side by side.
    Compare,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Stationary => "stationary",
            Self::Classify => "classify",
            Self::Regen => "regen",
            Self::Tails => "tails",
            Self::Gg1 => "gg1",
            Self::Compare => "compare",
        }
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}

/// Applies command-line overrides and re-validates.
fn resolve(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config("--config PATH is required".into()))?;
    let mut cfg = config::load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if cli.out.is_some() {
        cfg.output.report = cli.out.clone();
    }
    if cli.csv.is_some() {
        cfg.output.csv = cli.csv.clone();
    }
    if let Some(reps) = cli.reps {
        match cli.command {
            Command::Stationary => cfg.stationary.samples = reps,
            Command::Classify | Command::Compare => {
                cfg.classify.tail_reps = reps;
                cfg.classify.series_reps = reps;
            }
            Command::Regen => cfg.regen.reps = reps,
            Command::Tails => cfg.tails.samples = reps,
            Command::Simulate | Command::Gg1 => {}
        }
    }
    if let Some(h) = cli.horizon {
        match cli.command {
            Command::Stationary => cfg.stationary.horizon = h,
            Command::Classify | Command::Compare => cfg.classify.n_max = h,
            Command::Regen => cfg.regen.horizon = h,
            Command::Tails => cfg.tails.horizon = h,
            Command::Simulate => cfg.simulate.n = h,
            Command::Gg1 => cfg.gg1.n = h,
        }
    }
    if let Some(n) = cli.n {
        match cli.command {
            Command::Simulate => cfg.simulate.n = n,
            Command::Gg1 => cfg.gg1.n = n,
            Command::Regen => cfg.regen.path_length = n,
            Command::Stationary => {
                if let Some(tv) = cfg.stationary.tv.as_mut() {
                    tv.n = n;
                }
            }
            _ => {}
        }
    }
    Ok(cfg.validated()?)
}

fn execute(cli: &Cli) -> Result<i32, Failure> {
    let cfg = resolve(cli)?;
    let outcome = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(runtime)?
            .install(|| dispatch(cli.command, &cfg))?,
        None => dispatch(cli.command, &cfg)?,
    };
    write_report(&cfg, &outcome.report)?;
    if let (Some(path), Some(csv)) = (&cfg.output.csv, &outcome.csv) {
        std::fs::write(path, csv).map_err(|e| Failure::Runtime(format!("cannot write {path}: {e}")))?;
    }
    Ok(if cli.strict && outcome.inconclusive {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_OK
    })
}

fn write_report(cfg: &ExperimentConfig, text: &str) -> Result<(), Failure> {
    match &cfg.output.report {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("cannot write {path}: {e}"))),
        None => {
            let stdout = io::stdout();
            let mut out = BufWriter::new(stdout.lock());
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(runtime)
        }
    }
}

struct Outcome {
    report: String,
    csv: Option<Vec<u8>>,
    inconclusive: bool,
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(runtime)?;
    Ok(buf)
}

fn finish<T: Serialize>(
    command: Command,
    evidence: bool,
    cfg: &ExperimentConfig,
    result: T,
    csv: Option<Vec<u8>>,
    inconclusive: bool,
) -> Result<Outcome, Failure> {
    let report =
        report::render(command.name(), evidence.then_some(NUMERICAL_EVIDENCE), cfg, result).map_err(runtime)?;
    Ok(Outcome {
        report,
        csv,
        inconclusive,
    })
}

#[derive(Serialize)]
struct SimulateResult {
    n: usize,
    x0: f64,
    x_final: f64,
    x_max: f64,
    arrival_final: f64,
    coupling_time: Option<usize>,
}

#[derive(Serialize)]
struct Quantiles {
    p50: f64,
    p90: f64,
    p99: f64,
}

#[derive(Serialize)]
struct StationaryResult {
    samples: usize,
    horizon: usize,
    exact: bool,
    mean: f64,
    std_error: f64,
    quantiles: Quantiles,
    mean_residual_bound: f64,
    max_residual_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    tv: Option<TvReport>,
}

#[derive(Serialize)]
struct RegenResult {
    params: RegenParams,
    path_length: usize,
    taus: Vec<usize>,
    renewal: RenewalSummary,
}

#[derive(Serialize)]
struct Gg1Result {
    n: usize,
    w0: f64,
    w_final: f64,
    w_mean: f64,
    gamma_final: f64,
    running_max_final: f64,
    single_server: Result<classify::EricksonReport, String>,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    sorted[((p * sorted.len() as f64) as usize).min(sorted.len() - 1)]
}

fn dispatch(command: Command, cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    let mut stream = RngStream::from_seed(cfg.seed);
    let m = &cfg.model;
    match command {
        Command::Simulate => {
            let s = &cfg.simulate;
            let path = engine::simulate_path(m, s.x0, s.n, &mut stream);
            let result = SimulateResult {
                n: s.n,
                x0: s.x0,
                x_final: *path.x.last().expect("path has X_0"),
                x_max: path.x.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                arrival_final: *path.arrivals.last().expect("path has T_0"),
                coupling_time: engine::coupling_time(s.x0, &path.arrivals),
            };
            let csv = csv_bytes(|b| path.write_csv(b))?;
            finish(command, false, cfg, result, Some(csv), false)
        }
        Command::Stationary => {
            let st = &cfg.stationary;
            let sampler = StationarySampler::new(m, st.horizon, &st.divergence, &mut stream).map_err(runtime)?;
            let draws = sampler.samples(st.samples, &mut stream);
            let mut values: Vec<f64> = draws.iter().map(|d| d.value).collect();
            let est = stats::mean_estimate(&values);
            values.sort_by(f64::total_cmp);
            let tv = st
                .tv
                .as_ref()
                .map(|tv| loynes::tv_discrepancy(m, tv.x0, tv.n, tv.reps, tv.bins, &mut stream));
            let result = StationaryResult {
                samples: st.samples,
                horizon: st.horizon,
                exact: sampler.is_exact(),
                mean: est.mean,
                std_error: est.std_error,
                quantiles: Quantiles {
                    p50: quantile(&values, 0.5),
                    p90: quantile(&values, 0.9),
                    p99: quantile(&values, 0.99),
                },
                mean_residual_bound: draws.iter().map(|d| d.residual_bound).sum::<f64>() / draws.len() as f64,
                max_residual_bound: draws.iter().map(|d| d.residual_bound).fold(0.0, f64::max),
                tv,
            };
            let csv = csv_bytes(|b| loynes::write_values_csv(&draws, b))?;
            finish(command, false, cfg, result, Some(csv), false)
        }
        Command::Classify => {
            let report = classify::classify(m, &cfg.classify, &mut stream);
            let csv = csv_bytes(|b| write_series_csv(&report, b))?;
            let inconclusive = report.verdict == Verdict::Inconclusive;
            finish(command, true, cfg, report, Some(csv), inconclusive)
        }
        Command::Regen => {
            let r = &cfg.regen;
            let params = regen::find_params(m);
            let path = engine::simulate_path(m, 0.0, r.path_length, &mut stream);
            let trace = regen::detect(&path, &params);
            let renewal = regen::renewal_tests(m, &params, r.reps, r.horizon, &mut stream);
            let csv = csv_bytes(|b| trace.write_csv(b))?;
            let result = RegenResult {
                params,
                path_length: r.path_length,
                taus: trace.taus,
                renewal,
            };
            finish(command, true, cfg, result, Some(csv), false)
        }
        Command::Tails => {
            let t = &cfg.tails;
            let regime = t.regime.unwrap_or_else(|| TailRegime::detect(&m.service));
            let grid = match &t.grid {
                Some(g) => g.clone(),
                None => {
                    let pilot = StationarySampler::new(m, t.horizon, &cfg.stationary.divergence, &mut stream)
                        .map_err(runtime)?
                        .samples(t.pilot_samples, &mut stream);
                    let values: Vec<f64> = pilot.iter().map(|d| d.value).collect();
                    tails::default_grid(&values, t.grid_points)
                }
            };
            let report = tails::empirical_tail(m, regime, &grid, t.samples, t.horizon, &cfg.classify, &mut stream)
                .map_err(runtime)?;
            let csv = csv_bytes(|b| report.write_csv(b))?;
            finish(command, false, cfg, report, Some(csv), false)
        }
        Command::Gg1 => {
            let g = &cfg.gg1;
            let path = engine::simulate_gg1(m, g.w0, g.n, &mut stream);
            let result = Gg1Result {
                n: g.n,
                w0: g.w0,
                w_final: *path.w.last().expect("path has W_0"),
                w_mean: path.w.iter().sum::<f64>() / path.w.len() as f64,
                gamma_final: *path.gamma.last().expect("path has Γ_0"),
                running_max_final: *path.m.last().expect("path has M_0"),
                single_server: classify::erickson(m, cfg.classify.quad_tol).map_err(|e| e.to_string()),
            };
            let csv = csv_bytes(|b| path.write_csv(b))?;
            finish(command, false, cfg, result, Some(csv), false)
        }
        Command::Compare => {
            let cmp = classify::compare_queues(m, &cfg.classify, &mut stream);
            let csv = csv_bytes(|b| write_series_csv(&cmp.infinite_server, b))?;
            let inconclusive = cmp.infinite_server.verdict == Verdict::Inconclusive;
            finish(command, true, cfg, cmp, Some(csv), inconclusive)
        }
    }
}

fn write_series_csv<W: Write>(report: &ClassificationReport, mut out: W) -> io::Result<()> {
    writeln!(out, "series,n,S_n")?;
    for d in &report.diagnostics {
        let name = match d.kind {
            SeriesKind::TailSeries => "tail",
            SeriesKind::TransienceSeries => "transience",
            SeriesKind::RecurrenceSeries => "recurrence",
        };
        for (n, s) in d.grid.iter().zip(&d.partial_sums) {
            writeln!(out, "{name},{n},{s}")?;
        }
    }
    Ok(())
}
