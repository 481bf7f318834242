//! C ABI over `ccbank`.
//!
//! Oracles are opaque handles created by `ccb_oracle_*` and released with
//! `ccb_oracle_free`. Every fallible function returns a `CcbStatus`; on
//! failure, `ccb_last_error` describes the most recent error on the calling
//! thread. Strings returned through out-parameters are owned by the caller
//! and must be released with `ccb_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ccbank::analysis::{point_biserial, rescale_cc_shap};
use ccbank::ccshap::{aggregate, cc_shap, ratios};
use ccbank::harness::{load_dataset, run_suite, synthetic_instances, RunConfig};
use ccbank::oracle::{HttpOracle, Oracle, ToyModel};
use ccbank::shapley::{exact_shapley, permutation_shapley, EstimatorConfig};
use ccbank::types::{AttributionVector, ContributionProfile, PromptLayout, SpanRole, Token, TokenRatios};
use ccbank::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    TooManyTokens = 3,
    OracleUnreachable = 4,
    ContextTooLong = 5,
    ProtocolError = 6,
    /// Shapley values with next to no mass, or a zero-norm profile.
    Degenerate = 7,
    /// A statistic that is not defined for the given data.
    Undefined = 8,
    /// A caller-provided buffer is too small.
    BufferTooSmall = 9,
    DataError = 10,
    IoError = 11,
    Panic = 12,
    Other = 13,
}

/// Estimator selector for `ccb_shapley`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcbEstimator {
    Exact = 0,
    Permutation = 1,
}

/// A model handle.
pub struct CcbOracle {
    inner: Box<dyn Oracle>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CcbStatus {
    match e {
        Error::TooManyTokens { .. } => CcbStatus::TooManyTokens,
        Error::OracleUnreachable(_) => CcbStatus::OracleUnreachable,
        Error::ContextTooLong { .. } => CcbStatus::ContextTooLong,
        Error::ProtocolError(_) => CcbStatus::ProtocolError,
        Error::AllTokensDegenerate | Error::ZeroProfile => CcbStatus::Degenerate,
        Error::ParseError { .. } | Error::SchemaError(_) => CcbStatus::DataError,
        Error::Io(_) => CcbStatus::IoError,
        Error::InvalidArgument(_)
        | Error::IndexOutOfRange(_)
        | Error::EmptyMaskableSet
        | Error::LengthMismatch(..)
        | Error::OutOfRange(_)
        | Error::TemplateError(_)
        | Error::UnsupportedTask(_) => CcbStatus::InvalidArgument,
        _ => CcbStatus::Other,
    }
}

/// Runs `f`, turning errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), (CcbStatus, String)>) -> CcbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CcbStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CcbStatus::Panic
        }
    }
}

fn fail(e: Error) -> (CcbStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CcbStatus, String) {
    (CcbStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (CcbStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, (CcbStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (CcbStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message for the last failed call on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn ccb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ccb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Built-in toy model whose weights are drawn with `seed`.
#[no_mangle]
pub extern "C" fn ccb_oracle_toy(seed: u64) -> *mut CcbOracle {
    Box::into_raw(Box::new(CcbOracle { inner: Box::new(ToyModel::with_seed(seed)) }))
}

/// Client for an oracle server at `base_url`. Returns null if the URL is
/// null or not UTF-8. No connection is made until first use.
///
/// # Safety
/// `base_url` must be null or a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ccb_oracle_http(base_url: *const c_char) -> *mut CcbOracle {
    match string(base_url, "base_url") {
        Ok(url) => Box::into_raw(Box::new(CcbOracle { inner: Box::new(HttpOracle::new(url)) })),
        Err((_, msg)) => {
            set_error(&msg);
            ptr::null_mut()
        }
    }
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `oracle` must be null or a handle from `ccb_oracle_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ccb_oracle_free(oracle: *mut CcbOracle) {
    if !oracle.is_null() {
        drop(Box::from_raw(oracle));
    }
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string returned through an out-parameter of this
/// library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ccb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Shapley values for `target` following the prompt `ids`.
///
/// `maskable[i]` non-zero marks `ids[i]` as a player; all other positions
/// stay visible in every coalition. `phi_out` receives one value per
/// player, in prompt order, and must hold `phi_capacity >= players`.
/// `base_out` and `explained_out` (either may be null) receive the target
/// probability with every player masked and with none masked.
/// `num_permutations` and `seed` only apply to the permutation estimator;
/// `exact_limit` only to the exact one.
///
/// # Safety
/// `ids` and `maskable` must point to `len` elements; `phi_out` to
/// `phi_capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn ccb_shapley(
    oracle: *const CcbOracle,
    ids: *const u32,
    maskable: *const u8,
    len: usize,
    target: u32,
    estimator: CcbEstimator,
    exact_limit: usize,
    num_permutations: usize,
    seed: u64,
    phi_out: *mut f64,
    phi_capacity: usize,
    base_out: *mut f64,
    explained_out: *mut f64,
) -> CcbStatus {
    guard(|| {
        let oracle = oracle.as_ref().ok_or_else(|| null("oracle"))?;
        let ids = slice(ids, len, "ids")?;
        let flags = slice(maskable, len, "maskable")?;
        let tokens: Vec<Token> = ids.iter().map(|&id| Token::new(id, "")).collect();
        let roles = flags.iter().map(|&f| if f != 0 { SpanRole::TaskInput } else { SpanRole::Scaffold }).collect();
        let layout = PromptLayout::from_parts(tokens, roles).map_err(fail)?;
        let o = oracle.inner.as_ref();
        let v: AttributionVector = match estimator {
            CcbEstimator::Exact => exact_shapley(o, &layout, &[target], 0, exact_limit),
            CcbEstimator::Permutation => {
                let cfg = EstimatorConfig { exact_limit, ..EstimatorConfig::permutation(num_permutations, seed) };
                permutation_shapley(o, &layout, &[target], 0, &cfg)
            }
        }
        .map_err(fail)?;
        if v.phi.len() > phi_capacity {
            return Err((CcbStatus::BufferTooSmall, format!("need room for {} values", v.phi.len())));
        }
        if !v.phi.is_empty() && phi_out.is_null() {
            return Err(null("phi_out"));
        }
        ptr::copy_nonoverlapping(v.phi.as_ptr(), phi_out, v.phi.len());
        if !base_out.is_null() {
            *base_out = v.base_value;
        }
        if !explained_out.is_null() {
            *explained_out = v.explained_value;
        }
        Ok(())
    })
}

/// Contribution ratios `phi / sum |phi|` into `out` (same length).
/// Returns `Degenerate` when the L1 mass is below `epsilon`.
///
/// # Safety
/// `phi` and `out` must point to `len` elements.
#[no_mangle]
pub unsafe extern "C" fn ccb_ratios(phi: *const f64, len: usize, epsilon: f64, out: *mut f64) -> CcbStatus {
    guard(|| {
        let phi = slice(phi, len, "phi")?.to_vec();
        let v = AttributionVector { base_value: 0.0, explained_value: phi.iter().sum(), phi };
        match ratios(&v, epsilon) {
            TokenRatios::Degenerate => Err((CcbStatus::Degenerate, "contributions below epsilon".into())),
            TokenRatios::Ratios(r) => {
                if len > 0 && out.is_null() {
                    return Err(null("out"));
                }
                ptr::copy_nonoverlapping(r.r.as_ptr(), out, len);
                Ok(())
            }
        }
    })
}

/// Averages `count` ratio vectors of length `len`, stored row after row in
/// `rows`, into `out`. Rows flagged non-zero in `degenerate` (may be null)
/// are skipped.
///
/// # Safety
/// `rows` must point to `count * len` elements, `degenerate` to `count`
/// elements or be null, and `out` to `len` elements.
#[no_mangle]
pub unsafe extern "C" fn ccb_aggregate(
    rows: *const f64,
    count: usize,
    len: usize,
    degenerate: *const u8,
    out: *mut f64,
) -> CcbStatus {
    guard(|| {
        let total = count.checked_mul(len).ok_or_else(|| (CcbStatus::InvalidArgument, "size overflow".into()))?;
        let data = slice(rows, total, "rows")?;
        let flags = if degenerate.is_null() { vec![0u8; count] } else { slice(degenerate, count, "degenerate")?.to_vec() };
        let vectors: Vec<TokenRatios> = (0..count)
            .map(|i| {
                if flags[i] != 0 {
                    TokenRatios::Degenerate
                } else {
                    TokenRatios::Ratios(ccbank::types::RatioVector { r: data[i * len..(i + 1) * len].to_vec() })
                }
            })
            .collect();
        let p = aggregate(&vectors).map_err(fail)?;
        if len > 0 && out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(p.c.as_ptr(), out, len);
        Ok(())
    })
}

/// CC-SHAP score of two contribution profiles of length `len`.
///
/// # Safety
/// `prediction` and `explanation` must point to `len` elements; `out` to one.
#[no_mangle]
pub unsafe extern "C" fn ccb_cc_shap(
    prediction: *const f64,
    explanation: *const f64,
    len: usize,
    out: *mut f64,
) -> CcbStatus {
    guard(|| {
        let profile = |c: &[f64]| ContributionProfile { c: c.to_vec(), tokens_used: 1, tokens_dropped: 0 };
        let p = profile(slice(prediction, len, "prediction")?);
        let e = profile(slice(explanation, len, "explanation")?);
        let s = cc_shap(&p, &e).map_err(fail)?;
        *out.as_mut().ok_or_else(|| null("out"))? = s;
        Ok(())
    })
}

/// Point-biserial correlation. Returns `Undefined` when either class is
/// empty or the continuous values are constant.
///
/// # Safety
/// `binary` and `continuous` must point to `len` elements; `out` to one.
#[no_mangle]
pub unsafe extern "C" fn ccb_point_biserial(
    binary: *const u8,
    continuous: *const f64,
    len: usize,
    out: *mut f64,
) -> CcbStatus {
    guard(|| {
        let b: Vec<bool> = slice(binary, len, "binary")?.iter().map(|&x| x != 0).collect();
        let c = slice(continuous, len, "continuous")?;
        match point_biserial(&b, c).map_err(fail)? {
            Some(r) => {
                *out.as_mut().ok_or_else(|| null("out"))? = r;
                Ok(())
            }
            None => Err((CcbStatus::Undefined, "correlation undefined".into())),
        }
    })
}

/// Maps a CC-SHAP score from [-1, 1] to [0, 100].
///
/// # Safety
/// `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn ccb_rescale_cc_shap(score: f64, out: *mut f64) -> CcbStatus {
    guard(|| {
        let v = rescale_cc_shap(score).map_err(fail)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Runs a test suite. `config_json` holds a run configuration (unset fields
/// take their defaults); `dataset_path` may be null to use generated
/// instances. Records go to `results_path`. On success `manifest_out` (may
/// be null) receives the run manifest as JSON.
///
/// # Safety
/// String arguments must be valid NUL-terminated strings (or null where
/// allowed); `manifest_out` must be null or point to a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ccb_run(
    oracle: *const CcbOracle,
    config_json: *const c_char,
    dataset_path: *const c_char,
    results_path: *const c_char,
    manifest_out: *mut *mut c_char,
) -> CcbStatus {
    guard(|| {
        let oracle = oracle.as_ref().ok_or_else(|| null("oracle"))?;
        let config: RunConfig = serde_json::from_str(string(config_json, "config_json")?)
            .map_err(|e| (CcbStatus::InvalidArgument, format!("config: {e}")))?;
        let instances = if dataset_path.is_null() {
            synthetic_instances(config.task, config.samples.unwrap_or(100), config.seed)
        } else {
            load_dataset(Path::new(string(dataset_path, "dataset_path")?), config.task).map_err(fail)?
        };
        let results = Path::new(string(results_path, "results_path")?);
        let outcome = run_suite(&instances, oracle.inner.as_ref(), &config, results).map_err(fail)?;
        if !manifest_out.is_null() {
            let json = serde_json::to_string(&outcome.manifest).map_err(|e| (CcbStatus::Other, e.to_string()))?;
            *manifest_out = CString::new(json).unwrap_or_default().into_raw();
        }
        Ok(())
    })
}
