//! C ABI for the mtr-meta toolkit.
//!
//! Conventions:
//! - every fallible call returns an [`MtrStatus`]; results go through out-pointers;
//! - on failure, `mtr_last_error_message` describes the most recent error of
//!   the calling thread;
//! - matrices are dense, row-major `double` arrays;
//! - handles (`MtrDataset`, `MtrForest`) are opaque and released with their
//!   `*_free` function. Freeing NULL is a no-op.
//!
//! # Safety
//!
//! Every pointer argument must be NULL or valid for the number of elements
//! implied by the other arguments, handles must come from this library and
//! not be used after they are freed, and strings must be NUL-terminated.
//! NULL where a value is required yields `MTR_STATUS_NULL_POINTER`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use mtr_meta::dataset::{load_csv, Dataset};
use mtr_meta::generator::{generate_dataset, FunctionFamily, GenConfig};
use mtr_meta::metafeatures::{extract_all, META_FEATURE_NAMES, N_META_FEATURES};
use mtr_meta::metalearn::{fit_forest, ForestConfig, ForestModel, MetaDataset};
use mtr_meta::methods::{arrmse, cv_evaluate_all, select_best_method, MtrConfig, MtrMethodId};
use mtr_meta::regressors::BaseRegressorSpec;
use mtr_meta::stats::{friedman_test, nemenyi_cd};
use mtr_meta::Error;
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidData = 3,
    Degenerate = 4,
    Io = 5,
    Panic = 6,
}

/// Method identifiers; the numeric order is the tie-break order.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtrMethod {
    St = 0,
    Sst = 1,
    Motc = 2,
    Erc = 3,
}

impl From<MtrMethodId> for MtrMethod {
    fn from(m: MtrMethodId) -> Self {
        match m {
            MtrMethodId::St => MtrMethod::St,
            MtrMethodId::Sst => MtrMethod::Sst,
            MtrMethodId::Motc => MtrMethod::Motc,
            MtrMethodId::Erc => MtrMethod::Erc,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtrBaseKind {
    Ridge = 0,
    Knn = 1,
}

/// Opaque dataset handle.
pub struct MtrDataset(Dataset);

/// Opaque random forest handle.
pub struct MtrForest(ForestModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> MtrStatus {
    match e {
        Error::Io { .. } => MtrStatus::Io,
        Error::Degenerate(_) | Error::DegenerateTarget { .. } => MtrStatus::Degenerate,
        Error::InvalidConfig(_) | Error::DimensionMismatch { .. } => MtrStatus::InvalidArgument,
        Error::Context { source, .. } => status_of(source),
        _ => MtrStatus::InvalidData,
    }
}

struct Fail(MtrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MtrStatus::NullPointer, format!("{what} is NULL"))
}

fn bad(msg: impl Into<String>) -> Fail {
    Fail(MtrStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus last-error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MtrStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MtrStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            MtrStatus::Panic
        }
    }
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let len = rows.checked_mul(cols).ok_or_else(|| bad(format!("{what}: size overflows")))?;
    let data: &[f64] = slice::from_raw_parts(p, len);
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn method_of(label: u32) -> Result<MtrMethodId, Fail> {
    MtrMethodId::from_index(label as usize).ok_or_else(|| bad(format!("label {label} is not a method id (0..=3)")))
}

// ---------------------------------------------------------------- errors & metadata

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to fit) and returns the full message length excluding the NUL.
/// Returns 0 when there is no error. `buf` may be NULL to query the length.
#[no_mangle]
pub unsafe extern "C" fn mtr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Static, NUL-terminated version string.
#[no_mangle]
pub extern "C" fn mtr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

#[no_mangle]
pub extern "C" fn mtr_meta_feature_count() -> usize {
    N_META_FEATURES
}

/// Canonical name of meta-feature `index` as a static string, or NULL when out of range.
#[no_mangle]
pub extern "C" fn mtr_meta_feature_name(index: usize) -> *const c_char {
    static NAMES: std::sync::OnceLock<Vec<CString>> = std::sync::OnceLock::new();
    let names = NAMES.get_or_init(|| META_FEATURE_NAMES.iter().map(|n| CString::new(*n).unwrap()).collect());
    names.get(index).map_or(ptr::null(), |n| n.as_ptr())
}

// ---------------------------------------------------------------- datasets

/// Builds a dataset from row-major `x` (n x m) and `y` (n x d).
#[no_mangle]
pub unsafe extern "C" fn mtr_dataset_new(
    x: *const f64,
    y: *const f64,
    n: usize,
    m: usize,
    d: usize,
    out: *mut *mut MtrDataset,
) -> MtrStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let ds = Dataset::from_matrices("dataset", matrix(x, n, m, "x")?, matrix(y, n, d, "y")?)?;
        *out = Box::into_raw(Box::new(MtrDataset(ds)));
        Ok(())
    })
}

/// Loads a CSV file whose last `n_targets` columns are targets.
#[no_mangle]
pub unsafe extern "C" fn mtr_dataset_load_csv(path: *const c_char, n_targets: usize, out: *mut *mut MtrDataset) -> MtrStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| bad("path is not valid UTF-8"))?;
        *out = Box::into_raw(Box::new(MtrDataset(load_csv(path, n_targets)?)));
        Ok(())
    })
}

/// Generates a synthetic dataset. `family`: 0 identity, 1 quadratic, 2 cubic, 3 mixed.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn mtr_dataset_generate(
    n_instances: usize,
    n_features: usize,
    n_targets: usize,
    n_groups: usize,
    noise_pct: f64,
    family: u32,
    seed: u64,
    out: *mut *mut MtrDataset,
) -> MtrStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let function_family = *FunctionFamily::ALL
            .get(family as usize)
            .ok_or_else(|| bad(format!("function family {family} is not in 0..=3")))?;
        let cfg = GenConfig {
            n_instances,
            n_features,
            n_targets,
            n_groups,
            noise_pct,
            noise_sigma: mtr_meta::generator::DEFAULT_NOISE_SIGMA,
            function_family,
            seed,
        };
        *out = Box::into_raw(Box::new(MtrDataset(generate_dataset(&cfg)?)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mtr_dataset_free(ds: *mut MtrDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Writes rows, features and targets; any out-pointer may be NULL.
#[no_mangle]
pub unsafe extern "C" fn mtr_dataset_shape(ds: *const MtrDataset, n: *mut usize, m: *mut usize, d: *mut usize) -> MtrStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("dataset"))?.0;
        if let Some(n) = n.as_mut() {
            *n = ds.n_rows();
        }
        if let Some(m) = m.as_mut() {
            *m = ds.n_features();
        }
        if let Some(d) = d.as_mut() {
            *d = ds.n_targets();
        }
        Ok(())
    })
}

/// Copies the row-major feature matrix (n x m) and target matrix (n x d);
/// either destination may be NULL.
#[no_mangle]
pub unsafe extern "C" fn mtr_dataset_copy(ds: *const MtrDataset, x_out: *mut f64, y_out: *mut f64) -> MtrStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("dataset"))?.0;
        for (mat, dst) in [(ds.x(), x_out), (ds.y(), y_out)] {
            if dst.is_null() {
                continue;
            }
            let (r, c) = mat.shape();
            let dst = slice::from_raw_parts_mut(dst, r * c);
            for i in 0..r {
                for j in 0..c {
                    dst[i * c + j] = mat[(i, j)];
                }
            }
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- base level

/// aRRMSE of `y_pred` against `y_true`, both row-major n x d.
#[no_mangle]
pub unsafe extern "C" fn mtr_arrmse(y_true: *const f64, y_pred: *const f64, n: usize, d: usize, out: *mut f64) -> MtrStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = arrmse(&matrix(y_true, n, d, "y_true")?, &matrix(y_pred, n, d, "y_pred")?)?;
        Ok(())
    })
}

/// k-fold CV aRRMSE of ST, SST, MOTC and ERC (written to `scores[0..4]` in
/// that order) and the best method. `base` is an [`MtrBaseKind`] value;
/// `param` is the ridge penalty or the number of neighbours.
#[no_mangle]
pub unsafe extern "C" fn mtr_cv_evaluate(
    ds: *const MtrDataset,
    base: u32,
    param: f64,
    k: usize,
    seed: u64,
    scores: *mut f64,
    best: *mut MtrMethod,
) -> MtrStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("dataset"))?.0;
        if scores.is_null() {
            return Err(null("scores"));
        }
        let spec = match base {
            b if b == MtrBaseKind::Ridge as u32 => BaseRegressorSpec::Ridge { lambda: param },
            b if b == MtrBaseKind::Knn as u32 => {
                if !(param >= 1.0 && param.fract() == 0.0) {
                    return Err(bad(format!("knn neighbours must be a positive integer, got {param}")));
                }
                BaseRegressorSpec::Knn { k: param as usize }
            }
            other => return Err(bad(format!("base kind {other} is not 0 (ridge) or 1 (knn)"))),
        };
        let result = cv_evaluate_all(ds, &MtrConfig::with_base(spec), k, seed)?;
        let out = slice::from_raw_parts_mut(scores, 4);
        for s in &result {
            out[s.method.index()] = s.arrmse;
        }
        if let Some(b) = best.as_mut() {
            *b = select_best_method(&result)?.into();
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- meta level

/// The 58 meta-features in canonical order, written to `out[0..58]`.
#[no_mangle]
pub unsafe extern "C" fn mtr_meta_features(ds: *const MtrDataset, out: *mut f64) -> MtrStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("dataset"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = extract_all(ds);
        slice::from_raw_parts_mut(out, N_META_FEATURES).copy_from_slice(&v.values);
        Ok(())
    })
}

/// Fits a random forest on row-major `features` (n x m) with method labels
/// (0..=3). `bootstrap` = 0 grows every tree on the full sample.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn mtr_forest_fit(
    features: *const f64,
    labels: *const u32,
    n: usize,
    m: usize,
    n_trees: usize,
    mtry: usize,
    bootstrap: i32,
    seed: u64,
    out: *mut *mut MtrForest,
) -> MtrStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let x = matrix(features, n, m, "features")?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        let labels = slice::from_raw_parts(labels, n)
            .iter()
            .map(|&l| method_of(l))
            .collect::<Result<Vec<_>, _>>()?;
        let names = (0..m).map(|j| format!("f{j}")).collect();
        let md = MetaDataset::from_labels(names, x, &labels)?;
        let cfg = ForestConfig { n_trees, mtry, bootstrap: bootstrap != 0 };
        *out = Box::into_raw(Box::new(MtrForest(fit_forest(&md, &cfg, seed)?)));
        Ok(())
    })
}

/// Predicts one method per row of `features` (n x m) into `out[0..n]`.
#[no_mangle]
pub unsafe extern "C" fn mtr_forest_predict(
    forest: *const MtrForest,
    features: *const f64,
    n: usize,
    m: usize,
    out: *mut MtrMethod,
) -> MtrStatus {
    guard(|| {
        let forest = &forest.as_ref().ok_or_else(|| null("forest"))?.0;
        let x = matrix(features, n, m, "features")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let pred = forest.predict(&x)?;
        let out = slice::from_raw_parts_mut(out, n);
        for (o, p) in out.iter_mut().zip(pred) {
            *o = p.into();
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mtr_forest_free(forest: *mut MtrForest) {
    if !forest.is_null() {
        drop(Box::from_raw(forest));
    }
}

// ---------------------------------------------------------------- statistics

/// Friedman test on row-major `scores` (n datasets x k systems, lower is better).
#[no_mangle]
pub unsafe extern "C" fn mtr_friedman(
    scores: *const f64,
    n: usize,
    k: usize,
    alpha: f64,
    statistic: *mut f64,
    reject: *mut bool,
) -> MtrStatus {
    guard(|| {
        let r = friedman_test(&matrix(scores, n, k, "scores")?, alpha)?;
        *out_ref(statistic, "statistic")? = r.statistic;
        if let Some(rej) = reject.as_mut() {
            *rej = r.reject;
        }
        Ok(())
    })
}

/// Nemenyi critical difference for `k` systems over `n` datasets.
#[no_mangle]
pub unsafe extern "C" fn mtr_nemenyi_cd(k: usize, n: usize, alpha: f64, out: *mut f64) -> MtrStatus {
    guard(|| {
        *out_ref(out, "out")? = nemenyi_cd(k, n, alpha)?;
        Ok(())
    })
}
