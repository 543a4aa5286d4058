//! C interface to the simulator and the alignment statistics.
//!
//! Handles are opaque and owned by the caller, who frees them with the
//! matching `*_free` function. Every function returns an [`FsStatus`]; on
//! failure a description is available from [`fs_last_error`] on the same
//! thread. Absent metrics are reported as NaN.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fragsim::experiment::{mixture_for, run_one, ExperimentFile, ExperimentSpec};
use fragsim::stats::{bootstrap_ci, one_sample_t_test, MixtureGroupedSample};
use fragsim::traders::GreedyVariant;
use fragsim::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Simulation = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsVariant {
    BestGuess = 0,
    MarketSim = 1,
    MarketSimWithRoutingBug = 2,
}

fn variant_from_code(code: u32) -> Option<GreedyVariant> {
    match code {
        c if c == FsVariant::BestGuess as u32 => Some(GreedyVariant::BestGuess),
        c if c == FsVariant::MarketSim as u32 => Some(GreedyVariant::MarketSim),
        c if c == FsVariant::MarketSimWithRoutingBug as u32 => Some(GreedyVariant::MarketSimWithRoutingBug),
        _ => None,
    }
}

/// A resolved experiment.
pub struct FsSpec(ExperimentSpec);

/// Per-mixture groups of one metric.
pub struct FsSample(MixtureGroupedSample);

/// Metrics of one run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsRunResult {
    pub mixture_idx: u64,
    pub run_idx: u64,
    pub seed: u64,
    pub zi_surplus: f64,
    pub la_surplus: f64,
    pub nbbo_spread_median: f64,
    pub bbo_spread_mean_median: f64,
    pub exec_time_mean: f64,
    pub zi_tx: u64,
    pub la_tx: u64,
}

/// Bootstrap summary at the 95% and 99% levels.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsBootstrap {
    pub mean: f64,
    pub se: f64,
    pub lower95: f64,
    pub upper95: f64,
    pub lower99: f64,
    pub upper99: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: FsStatus, msg: impl Into<String>) -> FsStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> FsStatus {
    let status = match e {
        Error::Config(_) | Error::Parse(_) => FsStatus::Config,
        Error::InvalidParameter(_) => FsStatus::InvalidArgument,
        Error::Run { .. } => FsStatus::Simulation,
        _ => FsStatus::Config,
    };
    fail(status, e.to_string())
}

/// Run `f`, turning a panic into [`FsStatus::Panic`].
fn guard(f: impl FnOnce() -> FsStatus) -> FsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(FsStatus::Panic, msg)
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, FsStatus> {
    if p.is_null() {
        return Err(fail(FsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn fs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Spec for a built-in experiment id such as `env3-cda`. `variant` is an
/// [`FsVariant`] value.
///
/// # Safety
///
/// `id` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_spec_builtin(
    id: *const c_char,
    variant: u32,
    mixtures: u64,
    runs: u64,
    seed: u64,
    out: *mut *mut FsSpec,
) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return fail(FsStatus::NullPointer, "out is null");
        }
        let id = match str_arg(id, "id") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let Some(variant) = variant_from_code(variant) else {
            return fail(FsStatus::InvalidArgument, format!("unknown variant code {variant}"));
        };
        match ExperimentSpec::builtin(id, variant, mixtures as usize, runs as usize, seed) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(FsSpec(spec)));
                FsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Spec from the text of a TOML experiment file.
///
/// # Safety
///
/// `toml` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_spec_from_toml(toml: *const c_char, out: *mut *mut FsSpec) -> FsStatus {
    guard(|| {
        if out.is_null() {
            return fail(FsStatus::NullPointer, "out is null");
        }
        let text = match str_arg(toml, "toml") {
            Ok(s) => s,
            Err(s) => return s,
        };
        match ExperimentFile::parse(text).and_then(|f| f.resolve()) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(FsSpec(spec)));
                FsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
///
/// `spec` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn fs_spec_free(spec: *mut FsSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Run cell `(mixture_idx, run_idx)` of `spec`. The result equals the
/// corresponding row of a full experiment run.
///
/// # Safety
///
/// `spec` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_run_simulation(
    spec: *const FsSpec,
    mixture_idx: u64,
    run_idx: u64,
    out: *mut FsRunResult,
) -> FsStatus {
    guard(|| {
        if spec.is_null() || out.is_null() {
            return fail(FsStatus::NullPointer, "spec or out is null");
        }
        let spec = &(*spec).0;
        let (m, r) = (mixture_idx as usize, run_idx as usize);
        let mixture = mixture_for(spec, m);
        match run_one(spec, &mixture, m, r) {
            Ok(row) => {
                *out = FsRunResult {
                    mixture_idx,
                    run_idx,
                    seed: row.seed,
                    zi_surplus: row.zi_surplus,
                    la_surplus: row.la_surplus,
                    nbbo_spread_median: row.nbbo_spread_median.unwrap_or(f64::NAN),
                    bbo_spread_mean_median: row.bbo_spread_mean_median.unwrap_or(f64::NAN),
                    exec_time_mean: row.exec_time_mean.unwrap_or(f64::NAN),
                    zi_tx: row.zi_tx,
                    la_tx: row.la_tx,
                };
                FsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Grouped sample from a flat value array: the first `group_lens[0]` values
/// belong to mixture 0, the next `group_lens[1]` to mixture 1, and so on.
///
/// # Safety
///
/// `values` must hold the sum of `group_lens` entries, `group_lens` must
/// hold `n_groups` entries, and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_sample_new(
    values: *const f64,
    group_lens: *const usize,
    n_groups: usize,
    out: *mut *mut FsSample,
) -> FsStatus {
    guard(|| {
        if values.is_null() || group_lens.is_null() || out.is_null() {
            return fail(FsStatus::NullPointer, "values, group_lens or out is null");
        }
        let lens = std::slice::from_raw_parts(group_lens, n_groups);
        let total: usize = lens.iter().sum();
        let flat = std::slice::from_raw_parts(values, total);
        let mut groups = Vec::with_capacity(n_groups);
        let mut at = 0;
        for &n in lens {
            groups.push(flat[at..at + n].to_vec());
            at += n;
        }
        match MixtureGroupedSample::new(groups) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(FsSample(s)));
                FsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
///
/// `sample` must come from this library and not be used afterwards. Null
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn fs_sample_free(sample: *mut FsSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Mixture-level bootstrap with `b` resamples of `draw_size` mixtures,
/// driven by a ChaCha8 stream seeded with `seed`.
///
/// # Safety
///
/// `sample` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_bootstrap_ci(
    sample: *const FsSample,
    b: usize,
    draw_size: usize,
    seed: u64,
    out: *mut FsBootstrap,
) -> FsStatus {
    guard(|| {
        if sample.is_null() || out.is_null() {
            return fail(FsStatus::NullPointer, "sample or out is null");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match bootstrap_ci(&(*sample).0, b, draw_size, &[95, 99], &mut rng) {
            Ok(r) => {
                let i95 = r.interval(95).expect("requested level");
                let i99 = r.interval(99).expect("requested level");
                *out = FsBootstrap {
                    mean: r.mean,
                    se: r.se,
                    lower95: i95.lower,
                    upper95: i95.upper,
                    lower99: i99.lower,
                    upper99: i99.upper,
                };
                FsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Two-sided one-sample t-test p-value of `mean == target`.
///
/// # Safety
///
/// `values` must hold `n` entries and `p_value` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_t_test(values: *const f64, n: usize, target: f64, p_value: *mut f64) -> FsStatus {
    guard(|| {
        if values.is_null() || p_value.is_null() {
            return fail(FsStatus::NullPointer, "values or p_value is null");
        }
        match one_sample_t_test(std::slice::from_raw_parts(values, n), target) {
            Ok(p) => {
                *p_value = p;
                FsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
