//! Seeds, mixtures and the M x R run loop.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentSpec, MixtureSource};
use super::tables::{sha256_hex, StrategyProfile, PROFILES_SHA256};
use crate::market::{simulate, RunOptions};
use crate::metrics::{aggregate_run, RunMeta, RunResult};
use crate::traders::StrategyId;
use crate::Error;

fn derive(tag: &[u8], parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(tag);
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Seed of run `run_idx` of mixture `mixture_idx`.
pub fn run_seed(master: u64, mixture_idx: usize, run_idx: usize) -> u64 {
    derive(b"fragsim/run", &[master, mixture_idx as u64, run_idx as u64])
}

/// Seed of the stream that draws mixture `mixture_idx`. Independent of R.
pub fn mixture_seed(master: u64, mixture_idx: usize) -> u64 {
    derive(b"fragsim/mixture", &[master, mixture_idx as u64])
}

/// Sub-seed for trial `trial` of a resampling procedure.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive(b"fragsim/trial", &[master, trial as u64])
}

/// `n` independent categorical draws from `profile`.
pub fn sample_mixture<R: Rng + ?Sized>(profile: &StrategyProfile, n: usize, rng: &mut R) -> Vec<StrategyId> {
    let dist = WeightedIndex::new(profile.probabilities()).expect("profiles are validated on load");
    (0..n)
        .map(|_| StrategyId::new(dist.sample(rng) as u8 + 1).expect("index within table"))
        .collect()
}

/// Strategy assignment for one mixture of `spec`.
pub fn mixture_for(spec: &ExperimentSpec, mixture_idx: usize) -> Vec<StrategyId> {
    match &spec.source {
        MixtureSource::Fixed(v) => v.clone(),
        MixtureSource::Profile(p) => {
            let mut rng = ChaCha8Rng::seed_from_u64(mixture_seed(spec.seed, mixture_idx));
            sample_mixture(p, spec.n_zi, &mut rng)
        }
    }
}

pub fn run_meta(spec: &ExperimentSpec, mixture_idx: usize, run_idx: usize) -> RunMeta {
    RunMeta {
        experiment_id: spec.id.clone(),
        env: spec.env_label.clone(),
        config: spec.config.as_str().to_string(),
        latency: spec.params.latency,
        mixture_idx,
        run_idx,
        seed: run_seed(spec.seed, mixture_idx, run_idx),
    }
}

/// One cell of the experiment, reproducible in isolation.
pub fn run_one(spec: &ExperimentSpec, mixture: &[StrategyId], mixture_idx: usize, run_idx: usize) -> Result<RunResult, Error> {
    let meta = run_meta(spec, mixture_idx, run_idx);
    let out = simulate(&spec.params, mixture, meta.seed, RunOptions::default()).map_err(|e| Error::Run {
        experiment: spec.id.clone(),
        mixture: mixture_idx,
        run: run_idx,
        message: e.to_string(),
    })?;
    Ok(aggregate_run(&out, meta, spec.exec_time))
}

/// Worker pool with `jobs` threads (at least one).
pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("jobs: {e}")))
}

/// Run the cells of mixtures `range`, skipping those in `done`, in
/// `(mixture, run)` order.
fn run_mixtures(
    spec: &ExperimentSpec,
    range: std::ops::Range<usize>,
    done: &HashSet<(usize, usize)>,
    pool: &rayon::ThreadPool,
) -> Result<Vec<RunResult>, Error> {
    let mut cells = Vec::new();
    for m in range {
        let mixture = mixture_for(spec, m);
        for r in 0..spec.runs {
            if !done.contains(&(m, r)) {
                cells.push((m, r, mixture.clone()));
            }
        }
    }
    pool.install(|| {
        cells
            .par_iter()
            .map(|(m, r, mixture)| run_one(spec, mixture, *m, *r))
            .collect()
    })
}

/// All M x R results in `(mixture, run)` order, without touching disk.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<Vec<RunResult>, Error> {
    let pool = thread_pool(jobs)?;
    run_mixtures(spec, 0..spec.mixtures, &HashSet::new(), &pool)
}

/// Echo of the experiment plus provenance, written next to the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment_id: String,
    pub version: String,
    pub spec: serde_json::Value,
    pub spec_sha256: String,
    pub profiles_sha256: String,
    pub rows: usize,
    pub created_unix: u64,
}

impl Manifest {
    pub fn for_spec(spec: &ExperimentSpec) -> Result<Self, Error> {
        let value = serde_json::to_value(spec).map_err(|e| Error::Config(e.to_string()))?;
        let canonical = serde_json::to_string(&value).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Manifest {
            experiment_id: spec.id.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            spec_sha256: sha256_hex(canonical.as_bytes()),
            spec: value,
            profiles_sha256: PROFILES_SHA256.to_string(),
            rows: spec.mixtures * spec.runs,
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        })
    }
}

/// Where an experiment's results and manifest go.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub results: PathBuf,
    pub manifest: PathBuf,
}

impl OutputPaths {
    /// `spec.output` if set, otherwise `<dir>/<id>-<variant>.csv`.
    pub fn for_spec(spec: &ExperimentSpec, dir: &Path) -> Self {
        let results = match &spec.output {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => dir.join(p),
            None => dir.join(format!("{}-{}.csv", spec.id, spec.variant())),
        };
        let manifest = results.with_extension("manifest.json");
        OutputPaths { results, manifest }
    }
}

pub fn read_results(path: &Path) -> Result<Vec<RunResult>, Error> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_results_from(file)
}

pub fn read_results_from<R: std::io::Read>(reader: R) -> Result<Vec<RunResult>, Error> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(crate::metrics::RESULT_COLUMNS) {
        return Err(Error::Parse(format!(
            "results header {:?} does not match {:?}",
            headers.iter().collect::<Vec<_>>(),
            crate::metrics::RESULT_COLUMNS
        )));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_results(path: &Path, rows: &[RunResult]) -> Result<(), Error> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Summary of a disk-backed experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentReport {
    pub rows: usize,
    pub newly_run: usize,
}

/// Run an experiment into `paths`, resuming from completed rows of a
/// previous attempt with the same experiment settings. Rows are appended in mixture
/// batches and the file is rewritten sorted at the end.
pub fn run_experiment_to_disk(
    spec: &ExperimentSpec,
    paths: &OutputPaths,
    jobs: usize,
) -> Result<ExperimentReport, Error> {
    let manifest = Manifest::for_spec(spec)?;
    if let Some(dir) = paths.results.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut existing = Vec::new();
    if paths.results.exists() {
        let previous: Manifest = match fs::read_to_string(&paths.manifest) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", paths.manifest.display())))?,
            Err(_) => {
                return Err(Error::Config(format!(
                    "{} exists without a manifest; refusing to resume",
                    paths.results.display()
                )))
            }
        };
        if previous.spec_sha256 != manifest.spec_sha256 {
            return Err(Error::Config(format!(
                "{} was produced by a different experiment spec; refusing to resume",
                paths.results.display()
            )));
        }
        existing = read_results(&paths.results)?;
    }
    let manifest_text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&paths.manifest, manifest_text + "\n").map_err(|e| Error::io(&paths.manifest, e))?;

    let done: HashSet<(usize, usize)> = existing.iter().map(|r| (r.mixture_idx, r.run_idx)).collect();
    if done.len() != existing.len() {
        return Err(Error::Parse(format!("{} has duplicate rows", paths.results.display())));
    }
    if existing.is_empty() {
        write_results(&paths.results, &[])?;
    }

    let pool = thread_pool(jobs)?;
    let batch = (jobs.max(1) * 8).div_ceil(spec.runs.max(1)).max(1);
    let mut newly_run = 0;
    let mut start = 0;
    while start < spec.mixtures {
        let end = (start + batch).min(spec.mixtures);
        if (start..end).all(|m| (0..spec.runs).all(|r| done.contains(&(m, r)))) {
            start = end;
            continue;
        }
        let rows = run_mixtures(spec, start..end, &done, &pool)?;
        append_rows(&paths.results, &rows)?;
        newly_run += rows.len();
        log::info!(
            "{}: mixtures {}..{} of {} done ({} new rows)",
            spec.id,
            start,
            end,
            spec.mixtures,
            rows.len()
        );
        start = end;
    }

    let mut all = read_results(&paths.results)?;
    all.sort_by_key(|r| (r.mixture_idx, r.run_idx));
    all.dedup_by_key(|r| (r.mixture_idx, r.run_idx));
    if all.len() != spec.mixtures * spec.runs {
        return Err(Error::Parse(format!(
            "{} holds {} rows, expected {}",
            paths.results.display(),
            all.len(),
            spec.mixtures * spec.runs
        )));
    }
    write_results(&paths.results, &all)?;
    Ok(ExperimentReport {
        rows: all.len(),
        newly_run,
    })
}

fn append_rows(path: &Path, rows: &[RunResult]) -> Result<(), Error> {
    let file = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
    let needs_header = file.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
    let mut w = csv::WriterBuilder::new().has_headers(needs_header).from_writer(file);
    if needs_header && rows.is_empty() {
        w.write_record(crate::metrics::RESULT_COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    let mut file = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    file.flush().map_err(|e| Error::io(path, e))
}
