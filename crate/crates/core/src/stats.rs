//! Mixture-level bootstrap alignment, the one-sample t-test baseline and the
//! self-alignment false-rejection experiment.
//!
//! Everything here works on persisted result rows, never on live runs.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::experiment::trial_seed;
use crate::metrics::{RunResult, METRIC_COLUMNS};
use crate::Error;

pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 1000;
pub const DEFAULT_DRAW_SIZE: usize = 500;
pub const DEFAULT_LEVELS: [u32; 2] = [95, 99];

/// Per-mixture run values of one metric. The mixture is the resampling unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureGroupedSample {
    groups: Vec<Vec<f64>>,
    sums: Vec<f64>,
}

impl MixtureGroupedSample {
    pub fn new(groups: Vec<Vec<f64>>) -> Result<Self, Error> {
        if groups.is_empty() {
            return Err(Error::InvalidParameter("grouped sample has no mixtures".into()));
        }
        if let Some(i) = groups.iter().position(Vec::is_empty) {
            return Err(Error::InvalidParameter(format!("mixture group {i} is empty")));
        }
        if groups.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("grouped sample has a non-finite value".into()));
        }
        let sums = groups.iter().map(|g| g.iter().sum()).collect();
        Ok(Self { groups, sums })
    }

    /// Groups `rows` by mixture index for one metric. Rows where the metric
    /// is absent are skipped, and so are mixtures left with no values.
    pub fn from_results<'a, I>(rows: I, metric: &str) -> Result<Self, Error>
    where
        I: IntoIterator<Item = &'a RunResult>,
    {
        if !METRIC_COLUMNS.contains(&metric) {
            return Err(Error::InvalidParameter(format!("unknown metric {metric:?}")));
        }
        let mut by_mixture: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for row in rows {
            if let Some(v) = row.metric(metric) {
                by_mixture.entry(row.mixture_idx).or_default().push(v);
            }
        }
        Self::new(by_mixture.into_values().collect())
    }

    pub fn n_mixtures(&self) -> usize {
        self.groups.len()
    }

    pub fn n_values(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn group(&self, i: usize) -> &[f64] {
        &self.groups[i]
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }

    /// Mean over every run of every mixture.
    pub fn mean(&self) -> f64 {
        self.sums.iter().sum::<f64>() / self.n_values() as f64
    }

    /// Mean over all runs of the listed mixtures, repeats counted again.
    pub fn mean_of(&self, mixtures: &[usize]) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for &m in mixtures {
            sum += self.sums[m];
            n += self.groups[m].len();
        }
        sum / n as f64
    }
}

/// Percentile interval at one confidence level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub level: u32,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    /// Closed-interval membership.
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReport {
    /// Bootstrap means, sorted ascending.
    pub means: Vec<f64>,
    pub mean: f64,
    pub se: f64,
    pub intervals: Vec<Interval>,
    pub draw_size: usize,
}

impl BootstrapReport {
    pub fn interval(&self, level: u32) -> Option<Interval> {
        self.intervals.iter().copied().find(|i| i.level == level)
    }
}

/// 1-based nearest ranks of the lower and upper percentile endpoints.
pub fn percentile_ranks(level: u32, b: usize) -> (usize, usize) {
    let tail = (100 - level) as usize;
    let lower = (tail * b).div_ceil(200).max(1);
    let upper = ((200 - tail) * b).div_ceil(200).clamp(1, b);
    (lower, upper)
}

fn validate_levels(levels: &[u32]) -> Result<(), Error> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter("no confidence levels".into()));
    }
    match levels.iter().find(|&&l| l == 0 || l >= 100) {
        Some(l) => Err(Error::InvalidParameter(format!("confidence level {l} outside 1..=99"))),
        None => Ok(()),
    }
}

fn sample_sd(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Bootstrap means of `draw_size` mixtures drawn with replacement from
/// `pool` (indices into the sample).
fn bootstrap_over<R: Rng + ?Sized>(
    sample: &MixtureGroupedSample,
    pool: &[usize],
    b: usize,
    draw_size: usize,
    levels: &[u32],
    rng: &mut R,
) -> BootstrapReport {
    let mut picks = vec![0usize; draw_size];
    let mut means = Vec::with_capacity(b);
    for _ in 0..b {
        for p in picks.iter_mut() {
            *p = pool[rng.random_range(0..pool.len())];
        }
        means.push(sample.mean_of(&picks));
    }
    means.sort_by(f64::total_cmp);
    let mean = means.iter().sum::<f64>() / b as f64;
    let se = sample_sd(&means, mean);
    let intervals = levels
        .iter()
        .map(|&level| {
            let (lo, hi) = percentile_ranks(level, b);
            Interval {
                level,
                lower: means[lo - 1],
                upper: means[hi - 1],
            }
        })
        .collect();
    BootstrapReport {
        means,
        mean,
        se,
        intervals,
        draw_size,
    }
}

/// Mixture-level bootstrap with percentile intervals at each of `levels`
/// (percent).
pub fn bootstrap_ci<R: Rng + ?Sized>(
    sample: &MixtureGroupedSample,
    b: usize,
    draw_size: usize,
    levels: &[u32],
    rng: &mut R,
) -> Result<BootstrapReport, Error> {
    if b == 0 {
        return Err(Error::InvalidParameter("bootstrap sample count must be at least 1".into()));
    }
    if draw_size == 0 || draw_size > sample.n_mixtures() {
        return Err(Error::InvalidParameter(format!(
            "draw size {draw_size} must be in 1..={}",
            sample.n_mixtures()
        )));
    }
    validate_levels(levels)?;
    let pool: Vec<usize> = (0..sample.n_mixtures()).collect();
    Ok(bootstrap_over(sample, &pool, b, draw_size, levels, rng))
}

/// Decision at one level, with the interval shifted by the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelDecision {
    pub level: u32,
    pub accept: bool,
    pub diff_lower: f64,
    pub diff_upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentOutcome {
    pub target: f64,
    pub decisions: Vec<LevelDecision>,
}

impl AlignmentOutcome {
    pub fn accepts(&self, level: u32) -> Option<bool> {
        self.decisions.iter().find(|d| d.level == level).map(|d| d.accept)
    }

    pub fn all_accept(&self) -> bool {
        self.decisions.iter().all(|d| d.accept)
    }
}

/// Accept at a level iff the target lies in that closed percentile interval.
pub fn alignment_test(report: &BootstrapReport, target: f64) -> AlignmentOutcome {
    let decisions = report
        .intervals
        .iter()
        .map(|i| LevelDecision {
            level: i.level,
            accept: i.contains(target),
            diff_lower: i.lower - target,
            diff_upper: i.upper - target,
        })
        .collect();
    AlignmentOutcome { target, decisions }
}

/// Two-sided p-value of a one-sample t-test of `mean == target`.
///
/// Zero variance gives 1 when the mean equals the target and 0 otherwise.
pub fn one_sample_t_test(values: &[f64], target: f64) -> Result<f64, Error> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidParameter("t-test needs at least two values".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = sample_sd(values, mean);
    if sd == 0.0 {
        return Ok(if mean == target { 1.0 } else { 0.0 });
    }
    let t = (mean - target) / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("df >= 1");
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}

/// Rejection counts for one method at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRate {
    pub method: String,
    pub level: u32,
    pub rejections: usize,
    pub trials: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelfTestParams {
    pub trials: usize,
    pub holdout: usize,
    pub draw_size: usize,
    pub bootstrap_samples: usize,
    pub seed: u64,
}

/// Per-trial outcome: `(t_test_rejects, bootstrap_rejects)` per level.
fn self_test_trial(sample: &MixtureGroupedSample, p: &SelfTestParams, levels: &[u32], trial: usize) -> Vec<(bool, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(p.seed, trial));
    let m = sample.n_mixtures();
    let held = index::sample(&mut rng, m, p.holdout).into_vec();
    let mut is_held = vec![false; m];
    for &h in &held {
        is_held[h] = true;
    }
    let target = sample.mean_of(&held);
    let rest: Vec<usize> = (0..m).filter(|&i| !is_held[i]).collect();

    // t-test on the runs of one comparison draw from the remainder.
    let mut values = Vec::new();
    for _ in 0..p.draw_size {
        let g = rest[rng.random_range(0..rest.len())];
        values.extend_from_slice(sample.group(g));
    }
    let pval = one_sample_t_test(&values, target).unwrap_or(1.0);

    let report = bootstrap_over(sample, &rest, p.bootstrap_samples, p.draw_size, levels, &mut rng);
    let outcome = alignment_test(&report, target);
    levels
        .iter()
        .zip(&outcome.decisions)
        .map(|(&level, d)| {
            let rho = f64::from(100 - level) / 100.0;
            (pval < rho, !d.accept)
        })
        .collect()
}

/// Repeatedly hold out mixtures as a target and test the remainder against
/// it. Trials are independent and sub-seeded, so results do not depend on
/// thread count.
pub fn self_alignment_experiment(
    sample: &MixtureGroupedSample,
    params: &SelfTestParams,
    levels: &[u32],
) -> Result<Vec<RejectionRate>, Error> {
    validate_levels(levels)?;
    if params.trials == 0 || params.bootstrap_samples == 0 || params.holdout == 0 || params.draw_size == 0 {
        return Err(Error::InvalidParameter(
            "trials, holdout, draw size and bootstrap samples must be positive".into(),
        ));
    }
    if sample.n_mixtures() < params.holdout + params.draw_size {
        return Err(Error::InvalidParameter(format!(
            "{} mixtures is fewer than holdout {} plus draw size {}",
            sample.n_mixtures(),
            params.holdout,
            params.draw_size
        )));
    }
    let outcomes: Vec<Vec<(bool, bool)>> = (0..params.trials)
        .into_par_iter()
        .map(|t| self_test_trial(sample, params, levels, t))
        .collect();
    let rate = |method: &str, level_idx: usize, pick: fn(&(bool, bool)) -> bool| {
        let rejections = outcomes.iter().filter(|o| pick(&o[level_idx])).count();
        RejectionRate {
            method: method.to_string(),
            level: levels[level_idx],
            rejections,
            trials: params.trials,
            rate: rejections as f64 / params.trials as f64,
        }
    };
    let mut rows = Vec::new();
    for i in 0..levels.len() {
        rows.push(rate("t-test", i, |o| o.0));
    }
    for i in 0..levels.len() {
        rows.push(rate("bootstrap", i, |o| o.1));
    }
    Ok(rows)
}

/// Seed of the bootstrap stream for one (experiment, metric) pair.
pub fn alignment_seed(master: u64, experiment_id: &str, metric: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(b"fragsim/align");
    h.update(master.to_le_bytes());
    h.update(experiment_id.as_bytes());
    h.update([0]);
    h.update(metric.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// One line of the alignment report. `source` names the results file, since
/// rows of different variants share experiment ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRow {
    pub source: String,
    pub experiment_id: String,
    pub metric: String,
    pub target: f64,
    pub boot_mean: f64,
    pub boot_se: f64,
    pub diff95_lower: Option<f64>,
    pub diff95_upper: Option<f64>,
    pub accept95: Option<bool>,
    pub diff99_lower: Option<f64>,
    pub diff99_upper: Option<f64>,
    pub accept99: Option<bool>,
    pub mixtures: usize,
}

impl AlignmentRow {
    pub fn new(
        source: &str,
        experiment_id: &str,
        metric: &str,
        report: &BootstrapReport,
        outcome: &AlignmentOutcome,
        mixtures: usize,
    ) -> Self {
        let at = |level| outcome.decisions.iter().find(|d| d.level == level);
        AlignmentRow {
            source: source.to_string(),
            experiment_id: experiment_id.to_string(),
            metric: metric.to_string(),
            target: outcome.target,
            boot_mean: report.mean,
            boot_se: report.se,
            diff95_lower: at(95).map(|d| d.diff_lower),
            diff95_upper: at(95).map(|d| d.diff_upper),
            accept95: at(95).map(|d| d.accept),
            diff99_lower: at(99).map(|d| d.diff_lower),
            diff99_upper: at(99).map(|d| d.diff_upper),
            accept99: at(99).map(|d| d.accept),
            mixtures,
        }
    }

    pub fn rejected(&self) -> bool {
        self.accept95 == Some(false) || self.accept99 == Some(false)
    }
}

/// Mean of one metric over one experiment of one results file, in long
/// format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub source: String,
    pub experiment_id: String,
    pub env: String,
    pub config: String,
    pub latency: u64,
    pub metric: String,
    pub mean: Option<f64>,
    pub n: usize,
}

/// Per-experiment mean of every metric. Absent values are left out of both
/// the mean and the count.
pub fn aggregate_results(source: &str, rows: &[RunResult]) -> Vec<AggregateRow> {
    let mut by_exp: BTreeMap<(&str, &str, u64, &str), Vec<&RunResult>> = BTreeMap::new();
    for r in rows {
        by_exp
            .entry((&r.env, &r.config, r.latency, &r.experiment_id))
            .or_default()
            .push(r);
    }
    let mut out = Vec::new();
    for ((env, config, latency, id), group) in by_exp {
        for metric in METRIC_COLUMNS {
            let present: Vec<f64> = group.iter().filter_map(|r| r.metric(metric)).collect();
            let mean = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
            out.push(AggregateRow {
                source: source.to_string(),
                experiment_id: id.to_string(),
                env: env.to_string(),
                config: config.to_string(),
                latency,
                metric: metric.to_string(),
                mean,
                n: present.len(),
            });
        }
    }
    out
}

/// Serialize rows as CSV with a header.
pub fn write_csv<W: std::io::Write, T: Serialize>(writer: W, rows: &[T]) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn rejects_empty_groups() {
        assert!(MixtureGroupedSample::new(vec![]).is_err());
        assert!(MixtureGroupedSample::new(vec![vec![1.0], vec![]]).is_err());
        assert!(MixtureGroupedSample::new(vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn ranks_are_nearest_rank() {
        assert_eq!(percentile_ranks(95, 1000), (25, 975));
        assert_eq!(percentile_ranks(99, 1000), (5, 995));
        assert_eq!(percentile_ranks(95, 500), (13, 488));
        assert_eq!(percentile_ranks(95, 1), (1, 1));
        assert_eq!(percentile_ranks(90, 10), (1, 10));
    }

    #[test]
    fn constant_values_degenerate() {
        let s = MixtureGroupedSample::new(vec![vec![4.0; 3]; 6]).unwrap();
        let r = bootstrap_ci(&s, 200, 3, &DEFAULT_LEVELS, &mut rng(1)).unwrap();
        assert!(r.means.iter().all(|&m| m == 4.0));
        assert_eq!(r.se, 0.0);
        assert_eq!(r.interval(95).unwrap(), Interval { level: 95, lower: 4.0, upper: 4.0 });
        assert!(alignment_test(&r, 4.0).all_accept());
    }

    #[test]
    fn single_draw_support() {
        let s = MixtureGroupedSample::new(vec![vec![0.0, 0.0], vec![10.0, 10.0]]).unwrap();
        let r = bootstrap_ci(&s, 5000, 1, &[95], &mut rng(2)).unwrap();
        assert!(r.means.iter().all(|&m| m == 0.0 || m == 10.0));
        assert!(r.means.contains(&0.0) && r.means.contains(&10.0));
    }

    #[test]
    fn draw_size_bounds() {
        let s = MixtureGroupedSample::new(vec![vec![1.0]; 3]).unwrap();
        assert!(bootstrap_ci(&s, 10, 4, &[95], &mut rng(0)).is_err());
        assert!(bootstrap_ci(&s, 10, 0, &[95], &mut rng(0)).is_err());
        assert!(bootstrap_ci(&s, 0, 1, &[95], &mut rng(0)).is_err());
        assert!(bootstrap_ci(&s, 10, 3, &[100], &mut rng(0)).is_err());
    }

    #[test]
    fn mixtures_weighted_by_run_count() {
        let s = MixtureGroupedSample::new(vec![vec![0.0], vec![3.0, 3.0, 3.0]]).unwrap();
        assert_eq!(s.mean_of(&[0, 1]), 9.0 / 4.0);
        assert_eq!(s.mean(), 9.0 / 4.0);
    }

    #[test]
    fn target_outside_rejects() {
        let s = MixtureGroupedSample::new((0..50).map(|i| vec![i as f64]).collect()).unwrap();
        let r = bootstrap_ci(&s, 300, 10, &DEFAULT_LEVELS, &mut rng(3)).unwrap();
        let below = r.means[0] - 1.0;
        let out = alignment_test(&r, below);
        assert_eq!(out.accepts(95), Some(false));
        assert_eq!(out.accepts(99), Some(false));
    }

    #[test]
    fn endpoint_accepts() {
        let s = MixtureGroupedSample::new((0..50).map(|i| vec![i as f64]).collect()).unwrap();
        let r = bootstrap_ci(&s, 1000, 10, &[95], &mut rng(4)).unwrap();
        let upper = r.means[974];
        let out = alignment_test(&r, upper);
        assert_eq!(out.accepts(95), Some(true));
        assert_eq!(out.decisions[0].diff_upper, 0.0);
        let above = alignment_test(&r, upper + 1e-9);
        assert_eq!(above.accepts(95), Some(false));
    }

    #[test]
    fn t_test_edge_cases() {
        assert!(one_sample_t_test(&[1.0], 1.0).is_err());
        assert_eq!(one_sample_t_test(&[2.0, 2.0, 2.0], 2.0).unwrap(), 1.0);
        assert_eq!(one_sample_t_test(&[2.0, 2.0, 2.0], 3.0).unwrap(), 0.0);
        let p = one_sample_t_test(&[9.0, 10.0, 11.0, 12.0, 8.0], 10.0).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = (0..100).map(|i| 50.0 + 1e-6 * (i % 3) as f64).collect();
        assert!(one_sample_t_test(&shifted, 10.0).unwrap() < 1e-100);
    }

    #[test]
    fn t_test_two_values_matches_cauchy() {
        // df = 1 is the Cauchy distribution: p = 1 - 2/pi * atan(|t|).
        let p = one_sample_t_test(&[1.0, 3.0], 0.0).unwrap();
        // mean 2, sd sqrt(2), n 2: t = 2.
        let t = 2.0f64;
        let expected = 1.0 - 2.0 / std::f64::consts::PI * t.atan();
        assert!((p - expected).abs() < 1e-12, "{p} vs {expected}");
    }

    #[test]
    fn self_test_constant_never_rejects() {
        let s = MixtureGroupedSample::new(vec![vec![7.0; 4]; 30]).unwrap();
        let p = SelfTestParams {
            trials: 20,
            holdout: 10,
            draw_size: 10,
            bootstrap_samples: 50,
            seed: 1,
        };
        let rows = self_alignment_experiment(&s, &p, &DEFAULT_LEVELS).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.rejections == 0 && r.trials == 20));
    }

    #[test]
    fn self_test_needs_enough_mixtures() {
        let s = MixtureGroupedSample::new(vec![vec![1.0, 2.0]; 10]).unwrap();
        let p = SelfTestParams {
            trials: 1,
            holdout: 6,
            draw_size: 5,
            bootstrap_samples: 10,
            seed: 0,
        };
        assert!(self_alignment_experiment(&s, &p, &DEFAULT_LEVELS).is_err());
    }

    #[test]
    fn aggregate_skips_absent() {
        let mk = |mix, exec: Option<f64>| RunResult {
            experiment_id: "e".into(),
            env: "1".into(),
            config: "cda".into(),
            latency: 0,
            mixture_idx: mix,
            run_idx: 0,
            seed: 0,
            zi_surplus: mix as f64,
            la_surplus: 0.0,
            nbbo_spread_median: None,
            bbo_spread_mean_median: None,
            exec_time_mean: exec,
            zi_tx: 2,
            la_tx: 0,
        };
        let rows = aggregate_results("f", &[mk(0, Some(4.0)), mk(1, None), mk(2, Some(8.0))]);
        assert_eq!(rows.len(), METRIC_COLUMNS.len());
        let get = |m: &str| rows.iter().find(|r| r.metric == m).unwrap();
        assert_eq!(get("zi_surplus").mean, Some(1.0));
        assert_eq!(get("exec_time_mean").mean, Some(6.0));
        assert_eq!(get("exec_time_mean").n, 2);
        assert_eq!(get("nbbo_spread_median").mean, None);
    }
}
