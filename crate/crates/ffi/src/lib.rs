//! C ABI over `sba-core`.
//!
//! Every function returns an [`SbaStatus`]. On failure the message is kept
//! per thread and read with [`sba_last_error`]. Models are opaque handles
//! released with their `_free` function. Arrays are row-major `f64`; labels
//! are bytes, nonzero meaning positive.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use ndarray::Array2;
use sba_core::classifiers::{rf_train, svm_train, RfConfig, RfModel, SmoConfig, SvmModel, SvmParams};
use sba_core::error::{Error, ErrorKind};
use sba_core::features::column_means;
use sba_core::metrics::{auc, core_metrics, paired_ttest, ConfusionCounts, TTest};
use sba_core::signal::{AudioBuffer, Mfcc, MfccConfig, SAMPLE_RATE};

/// Result of every call. Codes 1 to 3 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbaStatus {
    Ok = 0,
    ConfigError = 1,
    DataError = 2,
    NumericError = 3,
    NullPointer = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SbaMetrics {
    pub accuracy: f64,
    pub uar: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Paired t-test. When `degenerate` is 1 all differences were equal and
/// nonzero; `t` and `p` are NaN and `mean` holds the common difference.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SbaTTest {
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub degenerate: u8,
    pub mean: f64,
}

/// Number of coefficients [`sba_mfcc40`] writes.
pub const SBA_MFCC_DIM: usize = 40;

/// Opaque RBF-kernel SVM.
pub struct SbaSvm(SvmModel);

/// Opaque random forest.
pub struct SbaForest(RfModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SbaStatus {
    match e.kind() {
        ErrorKind::Config => SbaStatus::ConfigError,
        ErrorKind::Data => SbaStatus::DataError,
        ErrorKind::Numeric => SbaStatus::NumericError,
    }
}

enum Fail {
    Core(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SbaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SbaStatus::Ok,
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SbaStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic".into());
            SbaStatus::Panic
        }
    }
}

unsafe fn view<'a, T>(p: *const T, n: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn view_mut<'a, T>(p: *mut T, n: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, n))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn matrix(x: *const f64, n: usize, d: usize) -> Result<Array2<f64>, Fail> {
    let len = n.checked_mul(d).ok_or_else(|| Error::Config("matrix size overflows".into()))?;
    let data = view(x, len, "x")?;
    Ok(Array2::from_shape_vec((n, d), data.to_vec()).map_err(|e| Error::Config(e.to_string()))?)
}

unsafe fn labels(y: *const u8, n: usize) -> Result<Vec<bool>, Fail> {
    Ok(view(y, n, "y")?.iter().map(|&b| b != 0).collect())
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn sba_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sba_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Rank-based AUC of positive against negative scores, ties counted half.
///
/// # Safety
/// `pos` and `neg` must point to `n_pos` and `n_neg` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn sba_auc(
    pos: *const f64,
    n_pos: usize,
    neg: *const f64,
    n_neg: usize,
    result: *mut f64,
) -> SbaStatus {
    guard(|| {
        let r = auc(view(pos, n_pos, "pos")?, view(neg, n_neg, "neg")?)?;
        *out(result, "result")? = r.auc;
        Ok(())
    })
}

/// Accuracy, UAR, sensitivity and specificity of hard predictions.
///
/// # Safety
/// `labels_` and `predictions` must point to `n` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn sba_core_metrics(
    labels_: *const u8,
    predictions: *const u8,
    n: usize,
    result: *mut SbaMetrics,
) -> SbaStatus {
    guard(|| {
        let y = labels(labels_, n)?;
        let p = labels(predictions, n)?;
        let m = core_metrics(&ConfusionCounts::from_pairs(y.into_iter().zip(p)))?;
        *out(result, "result")? = SbaMetrics {
            accuracy: m.accuracy,
            uar: m.uar,
            sensitivity: m.sensitivity,
            specificity: m.specificity,
        };
        Ok(())
    })
}

/// Two-sided paired t-test on per-fold differences.
///
/// # Safety
/// `differences` must point to `n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn sba_paired_ttest(differences: *const f64, n: usize, result: *mut SbaTTest) -> SbaStatus {
    guard(|| {
        let t = paired_ttest(view(differences, n, "differences")?)?;
        *out(result, "result")? = match t {
            TTest::Test { t, df, p } => SbaTTest {
                t,
                df,
                p,
                degenerate: 0,
                mean: f64::NAN,
            },
            TTest::Degenerate { mean } => SbaTTest {
                t: f64::NAN,
                df: n.saturating_sub(1),
                p: f64::NAN,
                degenerate: 1,
                mean,
            },
        };
        Ok(())
    })
}

/// Time-averaged 40-dim MFCCs of a 16 kHz mono signal in [-1, 1].
///
/// # Safety
/// `samples` must point to `n` readable doubles and `result` to
/// [`SBA_MFCC_DIM`] writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sba_mfcc40(samples: *const f64, n: usize, result: *mut f64) -> SbaStatus {
    guard(|| {
        let buffer = AudioBuffer::new(view(samples, n, "samples")?.to_vec(), SAMPLE_RATE)?;
        let frames = Mfcc::new(MfccConfig::default())?.frames(&buffer)?;
        let mean = column_means(&frames)?;
        view_mut(result, SBA_MFCC_DIM, "result")?.copy_from_slice(&mean);
        Ok(())
    })
}

/// Trains an RBF SVM with fixed `c` and `gamma` (no grid search).
///
/// # Safety
/// `x` must point to `n * d` doubles, `y` to `n` bytes; `model` receives a
/// handle to release with [`sba_svm_free`].
#[no_mangle]
pub unsafe extern "C" fn sba_svm_train(
    x: *const f64,
    n: usize,
    d: usize,
    y: *const u8,
    c: f64,
    gamma: f64,
    model: *mut *mut SbaSvm,
) -> SbaStatus {
    guard(|| {
        let slot = out(model, "model")?;
        *slot = ptr::null_mut();
        let m = svm_train(&matrix(x, n, d)?, &labels(y, n)?, SvmParams { c, gamma }, &SmoConfig::default())?;
        *slot = Box::into_raw(Box::new(SbaSvm(m)));
        Ok(())
    })
}

/// Decision values; nonnegative means positive.
///
/// # Safety
/// `model` must come from [`sba_svm_train`]; `x` holds `n * d` doubles and
/// `result` has room for `n`.
#[no_mangle]
pub unsafe extern "C" fn sba_svm_decision(
    model: *const SbaSvm,
    x: *const f64,
    n: usize,
    d: usize,
    result: *mut f64,
) -> SbaStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Fail::Null("model"))?;
        let dim = m.0.support_vectors.ncols();
        if d != dim {
            return Err(Error::DimensionMismatch {
                context: "svm input".into(),
                expected: dim,
                found: d,
            }
            .into());
        }
        let scores = m.0.decision_function(&matrix(x, n, d)?);
        view_mut(result, n, "result")?.copy_from_slice(&scores);
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`sba_svm_train`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sba_svm_free(model: *mut SbaSvm) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Trains a bootstrap random forest of Gini trees.
///
/// # Safety
/// As [`sba_svm_train`]; release with [`sba_forest_free`].
#[no_mangle]
pub unsafe extern "C" fn sba_forest_train(
    x: *const f64,
    n: usize,
    d: usize,
    y: *const u8,
    n_trees: usize,
    seed: u64,
    model: *mut *mut SbaForest,
) -> SbaStatus {
    guard(|| {
        let slot = out(model, "model")?;
        *slot = ptr::null_mut();
        let config = RfConfig {
            n_trees,
            seed,
            ..RfConfig::default()
        };
        let m = rf_train(&matrix(x, n, d)?, &labels(y, n)?, &config)?;
        *slot = Box::into_raw(Box::new(SbaForest(m)));
        Ok(())
    })
}

/// Positive vote fractions in [0, 1].
///
/// # Safety
/// As [`sba_svm_decision`].
#[no_mangle]
pub unsafe extern "C" fn sba_forest_score(
    model: *const SbaForest,
    x: *const f64,
    n: usize,
    d: usize,
    result: *mut f64,
) -> SbaStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Fail::Null("model"))?;
        let scores = m.0.score(&matrix(x, n, d)?);
        view_mut(result, n, "result")?.copy_from_slice(&scores);
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`sba_forest_train`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sba_forest_free(model: *mut SbaForest) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
