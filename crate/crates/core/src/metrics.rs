//! Per-run output metrics computed from the event logs.

use serde::{Deserialize, Serialize};

use crate::exchange::{Quote, Side, Trade, TraderRef};
use crate::market::RunOutput;
use crate::sip::NbboQuote;

/// Identifies a run within an experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub experiment_id: String,
    pub env: String,
    pub config: String,
    pub latency: u64,
    pub mixture_idx: usize,
    pub run_idx: usize,
    pub seed: u64,
}

/// One results row. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub experiment_id: String,
    pub env: String,
    pub config: String,
    pub latency: u64,
    pub mixture_idx: usize,
    pub run_idx: usize,
    pub seed: u64,
    pub zi_surplus: f64,
    pub la_surplus: f64,
    pub nbbo_spread_median: Option<f64>,
    pub bbo_spread_mean_median: Option<f64>,
    pub exec_time_mean: Option<f64>,
    pub zi_tx: u64,
    pub la_tx: u64,
}

pub const RESULT_COLUMNS: [&str; 14] = [
    "experiment_id",
    "env",
    "config",
    "latency",
    "mixture_idx",
    "run_idx",
    "seed",
    "zi_surplus",
    "la_surplus",
    "nbbo_spread_median",
    "bbo_spread_mean_median",
    "exec_time_mean",
    "zi_tx",
    "la_tx",
];

/// Names of the numeric metric columns, in column order.
pub const METRIC_COLUMNS: [&str; 7] = [
    "zi_surplus",
    "la_surplus",
    "nbbo_spread_median",
    "bbo_spread_mean_median",
    "exec_time_mean",
    "zi_tx",
    "la_tx",
];

impl RunResult {
    /// Value of a metric column by name; `None` for an absent metric or an
    /// unknown name.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "zi_surplus" => Some(self.zi_surplus),
            "la_surplus" => Some(self.la_surplus),
            "nbbo_spread_median" => self.nbbo_spread_median,
            "bbo_spread_mean_median" => self.bbo_spread_mean_median,
            "exec_time_mean" => self.exec_time_mean,
            "zi_tx" => Some(self.zi_tx as f64),
            "la_tx" => Some(self.la_tx as f64),
            _ => None,
        }
    }
}

/// Which order legs enter the execution-time mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum ExecTimeMode {
    #[default]
    #[serde(rename = "all")]
    #[value(name = "all")]
    All,
    #[serde(rename = "zi-only")]
    #[value(name = "zi-only")]
    ZiOnly,
}

/// Median of `values`, averaging the two middle elements for even counts.
/// Reorders the slice.
pub fn median(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let (left, mid, _) = values.select_nth_unstable_by(n / 2, f64::total_cmp);
    let upper = *mid;
    if n % 2 == 1 {
        return Some(upper);
    }
    let lower = left.iter().copied().max_by(f64::total_cmp).expect("n >= 2");
    Some((lower + upper) / 2.0)
}

/// Median spread over NBBO publications that are two-sided and not crossed.
pub fn median_nbbo_spread(log: &[NbboQuote]) -> Option<f64> {
    let mut spreads: Vec<f64> = log.iter().filter_map(|q| q.valid_spread()).map(|s| s as f64).collect();
    median(&mut spreads)
}

/// Mean over exchanges of each exchange's median two-sided BBO spread.
/// Exchanges that were never two-sided are left out.
pub fn mean_median_bbo_spread(logs: &[Vec<Quote>]) -> Option<f64> {
    let medians: Vec<f64> = logs
        .iter()
        .filter_map(|log| {
            let mut spreads: Vec<f64> = log.iter().filter_map(Quote::spread).map(|s| s as f64).collect();
            median(&mut spreads)
        })
        .collect();
    if medians.is_empty() {
        None
    } else {
        Some(medians.iter().sum::<f64>() / medians.len() as f64)
    }
}

/// Mean wait between submission and execution over both legs of every
/// trade. The aggressing leg always contributes zero.
pub fn mean_execution_time(trades: &[Trade], mode: ExecTimeMode) -> Option<f64> {
    let mut total = 0u64;
    let mut legs = 0u64;
    for t in trades {
        for (owner, submitted, side) in [
            (t.buyer, t.buy_submit_time, Side::Buy),
            (t.seller, t.sell_submit_time, Side::Sell),
        ] {
            if mode == ExecTimeMode::ZiOnly && owner.is_la() {
                continue;
            }
            if side != t.aggressor {
                total += t.time - submitted;
            }
            legs += 1;
        }
    }
    (legs > 0).then(|| total as f64 / legs as f64)
}

/// `(zi, la)` transaction counts; every trade has two parties.
pub fn count_transactions(trades: &[Trade]) -> (u64, u64) {
    let mut zi = 0;
    let mut la = 0;
    for t in trades {
        for who in [t.buyer, t.seller] {
            match who {
                TraderRef::Zi(_) => zi += 1,
                TraderRef::La => la += 1,
            }
        }
    }
    (zi, la)
}

/// All metrics of a finished run.
pub fn aggregate_run(out: &RunOutput, meta: RunMeta, mode: ExecTimeMode) -> RunResult {
    let (zi_tx, la_tx) = count_transactions(&out.logs.trades);
    debug_assert_eq!(zi_tx + la_tx, 2 * out.logs.trades.len() as u64);
    debug_assert_eq!(la_tx % 2, 0);
    RunResult {
        experiment_id: meta.experiment_id,
        env: meta.env,
        config: meta.config,
        latency: meta.latency,
        mixture_idx: meta.mixture_idx,
        run_idx: meta.run_idx,
        seed: meta.seed,
        zi_surplus: out.zi_surplus(),
        la_surplus: out.la_surplus(),
        nbbo_spread_median: median_nbbo_spread(&out.logs.nbbo),
        bbo_spread_mean_median: mean_median_bbo_spread(&out.logs.bbo),
        exec_time_mean: mean_execution_time(&out.logs.trades, mode),
        zi_tx,
        la_tx,
    }
}
