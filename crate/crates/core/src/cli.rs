//! Command-line front end.
//!
//! Exit codes: 0 success, 1 rejection under `--gate`, 2 usage or
//! configuration error.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::experiment::tables::{builtin_targets, parse_targets};
use crate::experiment::{
    all_cells, mixture_for, read_results, run_experiment_to_disk, run_meta, thread_pool, ExperimentFile,
    ExperimentSpec, MarketConfig, OutputPaths,
};
use crate::market::{simulate, simulate_traced, RunOptions, RunOutput};
use crate::metrics::{aggregate_run, ExecTimeMode, RunResult};
use crate::stats::{
    aggregate_results, alignment_seed, alignment_test, bootstrap_ci, self_alignment_experiment, write_csv,
    AlignmentRow, MixtureGroupedSample, SelfTestParams, DEFAULT_BOOTSTRAP_SAMPLES, DEFAULT_DRAW_SIZE,
    DEFAULT_LEVELS,
};
use crate::traders::{GreedyVariant, StrategyId};
use crate::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_REJECTED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "fragsim", version, about = "Fragmented-market latency arbitrage simulator")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a single simulation and print its result row.
    Run(RunArgs),
    /// Run every (mixture, run) cell of an experiment to a results CSV.
    Experiment(ExperimentArgs),
    /// Bootstrap alignment of results against target means.
    Align(AlignArgs),
    /// False-rejection rates of the t-test and bootstrap against the
    /// results themselves.
    Selftest(SelftestArgs),
    /// Per-experiment metric means in long format.
    Report(ReportArgs),
    /// List the built-in experiment ids.
    List,
}

/// Options selecting an experiment, shared by `run` and `experiment`.
#[derive(Debug, Clone, Default, Args)]
pub struct SpecArgs {
    /// Market configuration name (cda, 2m-nola, 2m-la) or the path of a
    /// TOML experiment file.
    #[arg(long, value_name = "NAME|PATH")]
    pub config: Option<String>,
    /// Built-in experiment id, e.g. env1-2mla-d100.
    #[arg(long)]
    pub experiment: Option<String>,
    /// Environment number (1-4).
    #[arg(long)]
    pub env: Option<u8>,
    /// SIP latency in ticks.
    #[arg(long)]
    pub latency: Option<u64>,
    #[arg(long, value_enum)]
    pub variant: Option<GreedyVariant>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated strategy rows (1-11), one per trader.
    #[arg(long, value_delimiter = ',')]
    pub mixture: Option<Vec<u8>>,
    #[arg(long, value_enum)]
    pub metrics_exec_time: Option<ExecTimeMode>,
}

impl SpecArgs {
    /// Merge the flags over the config file (if any) into an experiment file.
    pub fn to_file(&self) -> Result<ExperimentFile, Error> {
        let mut file = match &self.config {
            Some(c) => match c.parse::<MarketConfig>() {
                Ok(mc) => ExperimentFile {
                    config: Some(mc),
                    ..ExperimentFile::default()
                },
                Err(_) => {
                    let path = Path::new(c);
                    if !path.exists() {
                        return Err(Error::Config(format!(
                            "config: '{c}' is neither a market configuration (cda, 2m-nola, 2m-la) nor a file"
                        )));
                    }
                    ExperimentFile::load(path)?
                }
            },
            None => ExperimentFile::default(),
        };
        if let Some(id) = &self.experiment {
            file.experiment = Some(id.clone());
        }
        if self.env.is_some() {
            file.env = self.env;
        }
        if self.latency.is_some() {
            file.latency = self.latency;
        }
        if self.variant.is_some() {
            file.variant = self.variant;
        }
        if self.seed.is_some() {
            file.seed = self.seed;
        }
        if let Some(m) = &self.mixture {
            file.mixture = Some(m.clone());
            file.profile = None;
        }
        if self.metrics_exec_time.is_some() {
            file.exec_time = self.metrics_exec_time;
        }
        Ok(file)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Mixture index used when sampling from the profile.
    #[arg(long, default_value_t = 0)]
    pub mixture_idx: usize,
    #[arg(long, default_value_t = 0)]
    pub run_idx: usize,
    /// Write one line per dispatched event to this file.
    #[arg(long, value_name = "PATH")]
    pub trace_events: Option<PathBuf>,
    /// Write order, trade, quote, fundamental and trader logs here.
    #[arg(long, value_name = "DIR")]
    pub dump_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long, value_name = "M")]
    pub mixtures: Option<usize>,
    #[arg(long, value_name = "R")]
    pub runs: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "results")]
    pub out: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Results CSV files.
    #[arg(required = true)]
    pub results: Vec<PathBuf>,
    /// Targets CSV (experiment_id,metric,target); built-in table if omitted.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// Only align this metric.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_SAMPLES)]
    pub boot: usize,
    #[arg(long, default_value_t = DEFAULT_DRAW_SIZE)]
    pub draw_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report CSV; stdout if omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Exit 1 if any row is rejected.
    #[arg(long)]
    pub gate: bool,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    pub results: PathBuf,
    /// Experiment to use when the file holds several.
    #[arg(long)]
    pub experiment: Option<String>,
    #[arg(long, default_value = "zi_surplus")]
    pub metric: String,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 500)]
    pub holdout: usize,
    #[arg(long, default_value_t = DEFAULT_DRAW_SIZE)]
    pub draw_size: usize,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_SAMPLES)]
    pub boot: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub results: Vec<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    init_logging(cli.verbose);
    match execute(&cli.command, &mut io::stdout().lock()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Run a parsed command, writing primary output to `stdout`.
pub fn execute<W: Write>(command: &Command, stdout: &mut W) -> Result<u8, Error> {
    match command {
        Command::Run(a) => cmd_run(a, stdout),
        Command::Experiment(a) => cmd_experiment(a, stdout),
        Command::Align(a) => cmd_align(a, stdout),
        Command::Selftest(a) => cmd_selftest(a, stdout),
        Command::Report(a) => cmd_report(a, stdout),
        Command::List => {
            for cell in all_cells() {
                writeln!(stdout, "{}", cell.id()).map_err(|e| Error::io("<stdout>", e))?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn default_jobs(jobs: Option<usize>) -> usize {
    jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Resolve the experiment for a single run. With no mixture count given it
/// describes exactly one run.
fn run_spec(args: &SpecArgs) -> Result<ExperimentSpec, Error> {
    let mut file = args.to_file()?;
    file.mixtures.get_or_insert(1);
    file.runs.get_or_insert(1);
    file.resolve()
}

pub fn cmd_run<W: Write>(args: &RunArgs, stdout: &mut W) -> Result<u8, Error> {
    let spec = run_spec(&args.spec)?;
    let mixture: Vec<StrategyId> = mixture_for(&spec, args.mixture_idx);
    let meta = run_meta(&spec, args.mixture_idx, args.run_idx);
    let options = RunOptions {
        record_orders: args.dump_dir.is_some(),
        audit_nbbo: false,
    };
    let out = match &args.trace_events {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
            let out = simulate_traced(&spec.params, &mixture, meta.seed, options, &mut w)?;
            w.flush().map_err(|e| Error::io(path, e))?;
            out
        }
        None => simulate(&spec.params, &mixture, meta.seed, options)?,
    };
    if let Some(dir) = &args.dump_dir {
        dump_logs(dir, &out)?;
    }
    let row = aggregate_run(&out, meta, spec.exec_time);
    write_csv(stdout, &[row])?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct TradeRow {
    time: u64,
    venue: u32,
    price: i64,
    aggressor: &'static str,
    buyer: String,
    seller: String,
    buy_order: u64,
    sell_order: u64,
    buy_submit_time: u64,
    sell_submit_time: u64,
}

#[derive(Serialize)]
struct BboRow {
    time: u64,
    venue: u32,
    bid: Option<i64>,
    ask: Option<i64>,
}

#[derive(Serialize)]
struct NbboRow {
    time: u64,
    bid: Option<i64>,
    bid_ex: Option<u32>,
    ask: Option<i64>,
    ask_ex: Option<u32>,
}

#[derive(Serialize)]
struct SeriesRow {
    t: usize,
    r_t: f64,
}

fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Error> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(BufWriter::new(file), rows)
}

/// Write the per-run logs of `out` as CSV files under `dir`.
pub fn dump_logs(dir: &Path, out: &RunOutput) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let trades: Vec<TradeRow> = out
        .logs
        .trades
        .iter()
        .map(|t| TradeRow {
            time: t.time,
            venue: t.venue.0,
            price: t.price.get(),
            aggressor: t.aggressor.as_str(),
            buyer: t.buyer.to_string(),
            seller: t.seller.to_string(),
            buy_order: t.buy_order.0,
            sell_order: t.sell_order.0,
            buy_submit_time: t.buy_submit_time,
            sell_submit_time: t.sell_submit_time,
        })
        .collect();
    write_csv_file(&dir.join("trades.csv"), &trades)?;
    let bbo: Vec<BboRow> = out
        .logs
        .bbo
        .iter()
        .flatten()
        .map(|q| BboRow {
            time: q.time,
            venue: q.venue.0,
            bid: q.bid.map(|p| p.get()),
            ask: q.ask.map(|p| p.get()),
        })
        .collect();
    write_csv_file(&dir.join("bbo.csv"), &bbo)?;
    let nbbo: Vec<NbboRow> = out
        .logs
        .nbbo
        .iter()
        .map(|q| NbboRow {
            time: q.time,
            bid: q.bid.map(|v| v.price.get()),
            bid_ex: q.bid.map(|v| v.venue.0),
            ask: q.ask.map(|v| v.price.get()),
            ask_ex: q.ask.map(|v| v.venue.0),
        })
        .collect();
    write_csv_file(&dir.join("nbbo.csv"), &nbbo)?;
    let series: Vec<SeriesRow> = out
        .series
        .values()
        .iter()
        .enumerate()
        .map(|(t, &r_t)| SeriesRow { t, r_t })
        .collect();
    write_csv_file(&dir.join("fundamental.csv"), &series)?;
    write_csv_file(&dir.join("traders.csv"), &out.trader_records())?;
    if let Some(orders) = &out.logs.orders {
        write_csv_file(&dir.join("orders.csv"), orders)?;
    }
    Ok(())
}

pub fn cmd_experiment<W: Write>(args: &ExperimentArgs, stdout: &mut W) -> Result<u8, Error> {
    let mut file = args.spec.to_file()?;
    if args.mixtures.is_some() {
        file.mixtures = args.mixtures;
    }
    if args.runs.is_some() {
        file.runs = args.runs;
    }
    let spec = file.resolve()?;
    let paths = OutputPaths::for_spec(&spec, &args.out);
    if let Some(parent) = paths.results.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    info!(
        "{} ({}): {} mixtures x {} runs -> {}",
        spec.id,
        spec.variant(),
        spec.mixtures,
        spec.runs,
        paths.results.display()
    );
    let report = run_experiment_to_disk(&spec, &paths, default_jobs(args.jobs))?;
    writeln!(
        stdout,
        "{}: {} rows ({} new) in {}",
        spec.id,
        report.rows,
        report.newly_run,
        paths.results.display()
    )
    .map_err(|e| Error::io("<stdout>", e))?;
    Ok(EXIT_OK)
}

/// Rows of each results file, labelled by file name.
fn load_each(paths: &[PathBuf]) -> Result<Vec<(String, Vec<RunResult>)>, Error> {
    paths
        .iter()
        .map(|p| {
            let label = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            Ok((label, read_results(p)?))
        })
        .collect()
}

fn by_experiment(rows: &[RunResult]) -> BTreeMap<&str, Vec<&RunResult>> {
    let mut map: BTreeMap<&str, Vec<&RunResult>> = BTreeMap::new();
    for r in rows {
        map.entry(r.experiment_id.as_str()).or_default().push(r);
    }
    map
}

fn output<W: Write, T: Serialize>(path: &Option<PathBuf>, stdout: &mut W, rows: &[T]) -> Result<(), Error> {
    match path {
        Some(p) => write_csv_file(p, rows),
        None => write_csv(stdout, rows),
    }
}

pub fn cmd_align<W: Write>(args: &AlignArgs, stdout: &mut W) -> Result<u8, Error> {
    let targets = match &args.targets {
        Some(p) => parse_targets(File::open(p).map_err(|e| Error::io(p, e))?)?,
        None => builtin_targets()?,
    };
    let mut report = Vec::new();
    for (source, rows) in load_each(&args.results)? {
        align_file(args, &targets, &source, &rows, &mut report)?;
    }
    output(&args.out, stdout, &report)?;
    let rejected = report.iter().any(AlignmentRow::rejected);
    Ok(if args.gate && rejected { EXIT_REJECTED } else { EXIT_OK })
}

fn align_file(
    args: &AlignArgs,
    targets: &BTreeMap<(String, String), f64>,
    source: &str,
    rows: &[RunResult],
    report: &mut Vec<AlignmentRow>,
) -> Result<(), Error> {
    for (id, group) in by_experiment(rows) {
        let metrics: Vec<&str> = targets
            .keys()
            .filter(|(e, m)| e == id && args.metric.as_deref().is_none_or(|want| want == m))
            .map(|(_, m)| m.as_str())
            .collect();
        if metrics.is_empty() {
            warn!("{source}: no target for experiment {id}; skipped");
            continue;
        }
        for metric in metrics {
            let target = targets[&(id.to_string(), metric.to_string())];
            let sample = MixtureGroupedSample::from_results(group.iter().copied(), metric)?;
            let mut rng = ChaCha8Rng::seed_from_u64(alignment_seed(args.seed, id, metric));
            let boot = bootstrap_ci(&sample, args.boot, args.draw_size, &DEFAULT_LEVELS, &mut rng)
                .map_err(|e| Error::Config(format!("{id} {metric}: {e}")))?;
            let outcome = alignment_test(&boot, target);
            report.push(AlignmentRow::new(source, id, metric, &boot, &outcome, sample.n_mixtures()));
        }
    }
    Ok(())
}

pub fn cmd_selftest<W: Write>(args: &SelftestArgs, stdout: &mut W) -> Result<u8, Error> {
    let rows = read_results(&args.results)?;
    let groups = by_experiment(&rows);
    let selected = match &args.experiment {
        Some(id) => groups
            .get(id.as_str())
            .ok_or_else(|| Error::Config(format!("experiment {id} not in {}", args.results.display())))?,
        None if groups.len() == 1 => groups.values().next().expect("one group"),
        None if groups.is_empty() => return Err(Error::Config("results file is empty".into())),
        None => return Err(Error::Config("results hold several experiments; pick one with --experiment".into())),
    };
    let sample = MixtureGroupedSample::from_results(selected.iter().copied(), &args.metric)?;
    let params = SelfTestParams {
        trials: args.trials,
        holdout: args.holdout,
        draw_size: args.draw_size,
        bootstrap_samples: args.boot,
        seed: args.seed,
    };
    let pool = thread_pool(default_jobs(args.jobs))?;
    let rates = pool.install(|| self_alignment_experiment(&sample, &params, &DEFAULT_LEVELS))?;
    output(&args.out, stdout, &rates)?;
    Ok(EXIT_OK)
}

pub fn cmd_report<W: Write>(args: &ReportArgs, stdout: &mut W) -> Result<u8, Error> {
    let mut table = Vec::new();
    for (source, rows) in load_each(&args.results)? {
        table.extend(aggregate_results(&source, &rows));
    }
    output(&args.out, stdout, &table)?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn config_name_or_path() {
        let a = SpecArgs {
            config: Some("2m-la".into()),
            env: Some(3),
            latency: Some(25),
            ..SpecArgs::default()
        };
        let f = a.to_file().unwrap();
        assert_eq!(f.config, Some(MarketConfig::TwoMarketLa));
        let bad = SpecArgs {
            config: Some("no-such-thing".into()),
            ..SpecArgs::default()
        };
        assert!(matches!(bad.to_file(), Err(Error::Config(_))));
    }

    #[test]
    fn inline_mixture_replaces_profile() {
        let a = SpecArgs {
            env: Some(1),
            mixture: Some(vec![3; 24]),
            ..SpecArgs::default()
        };
        let spec = run_spec(&a).unwrap();
        assert_eq!(mixture_for(&spec, 0), vec![StrategyId::new(3).unwrap(); 24]);
    }
}
