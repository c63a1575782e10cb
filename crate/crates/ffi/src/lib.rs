//! C ABI over trained survmoe checkpoints and the concordance metrics.
//!
//! Every function returns a [`SurvmoeStatus`]. On failure the message is
//! kept per thread and can be read with [`survmoe_last_error`]. Matrices are
//! dense row-major `double` buffers owned by the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use survmoe::metrics;
use survmoe::model::HazardCurve;
use survmoe::trainer::Checkpoint;
use survmoe::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurvmoeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IoError = 3,
    FormatError = 4,
    NumericError = 5,
    UndefinedMetric = 6,
    Panic = 7,
}

/// Opaque handle to a loaded checkpoint.
pub struct SurvmoeModel {
    checkpoint: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> SurvmoeStatus {
    match e {
        Error::Io { .. } => SurvmoeStatus::IoError,
        Error::Format { .. } => SurvmoeStatus::FormatError,
        Error::NumericDomain(_) | Error::NanLoss { .. } | Error::NonConvergence { .. } => SurvmoeStatus::NumericError,
        Error::UndefinedMetric(_) => SurvmoeStatus::UndefinedMetric,
        Error::Config(_) | Error::Usage(_) | Error::Ingestion { .. } => SurvmoeStatus::InvalidArgument,
    }
}

struct Fail(SurvmoeStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(SurvmoeStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SurvmoeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SurvmoeStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SurvmoeStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(SurvmoeStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn input<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or point to `len` writable values.
unsafe fn output<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, name)?;
    Ok(slice::from_raw_parts_mut(p, len))
}

fn rows(data: &[f64], n_rows: usize, n_cols: usize) -> impl Iterator<Item = &[f64]> {
    (0..n_rows).map(move |i| &data[i * n_cols..(i + 1) * n_cols])
}

/// Loads a checkpoint file. On success `*out` owns a handle that must be
/// released with [`survmoe_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn survmoe_model_load(path: *const c_char, out: *mut *mut SurvmoeModel) -> SurvmoeStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| invalid("path is not valid UTF-8"))?;
        let checkpoint = Checkpoint::read(Path::new(path))?;
        *out = Box::into_raw(Box::new(SurvmoeModel { checkpoint }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`survmoe_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn survmoe_model_free(model: *mut SurvmoeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Sizes needed to allocate buffers. Any output pointer may be null.
///
/// # Safety
/// `model` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn survmoe_model_dims(
    model: *const SurvmoeModel,
    num_features: *mut usize,
    num_bins: *mut usize,
    num_feature_experts: *mut usize,
    num_hazard_experts: *mut usize,
) -> SurvmoeStatus {
    guard(|| {
        non_null(model, "model")?;
        let cfg = (*model).checkpoint.model.config();
        for (p, v) in [
            (num_features, cfg.input_dim),
            (num_bins, cfg.num_bins()),
            (num_feature_experts, cfg.k()),
            (num_hazard_experts, cfg.l()),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Imputes and standardizes raw covariates with the training-split
/// statistics stored in the checkpoint. NaN marks a missing value.
///
/// # Safety
/// `raw` and `out` must hold `n_rows * n_cols` values.
#[no_mangle]
pub unsafe extern "C" fn survmoe_model_preprocess(
    model: *const SurvmoeModel,
    raw: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
) -> SurvmoeStatus {
    guard(|| {
        non_null(model, "model")?;
        let pre = &(*model).checkpoint.preprocessor;
        if n_cols != pre.num_features() {
            return Err(invalid(format!(
                "expected {} columns, got {n_cols}",
                pre.num_features()
            )));
        }
        let raw = input(raw, n_rows * n_cols, "raw")?;
        let out = output(out, n_rows * n_cols, "out")?;
        for (row, dst) in rows(raw, n_rows, n_cols).zip(out.chunks_mut(n_cols.max(1))) {
            dst.copy_from_slice(&pre.transform(row)?);
        }
        Ok(())
    })
}

/// Predicts hazards and, when `survival` is non-null, survival curves for
/// preprocessed rows. Both outputs are `n_rows × num_bins`.
///
/// # Safety
/// `x` must hold `n_rows * n_cols` values; outputs `n_rows * num_bins`.
#[no_mangle]
pub unsafe extern "C" fn survmoe_model_predict(
    model: *const SurvmoeModel,
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    hazard: *mut f64,
    survival: *mut f64,
) -> SurvmoeStatus {
    guard(|| {
        non_null(model, "model")?;
        let m = &(*model).checkpoint.model;
        let t1 = m.config().num_bins();
        if n_cols != m.config().input_dim {
            return Err(invalid(format!(
                "expected {} columns, got {n_cols}",
                m.config().input_dim
            )));
        }
        let x = input(x, n_rows * n_cols, "x")?;
        let hazard = output(hazard, n_rows * t1, "hazard")?;
        let mut survival = if survival.is_null() {
            None
        } else {
            Some(output(survival, n_rows * t1, "survival")?)
        };
        for (i, row) in rows(x, n_rows, n_cols).enumerate() {
            let c = m.predict_curve(row)?;
            hazard[i * t1..(i + 1) * t1].copy_from_slice(&c.lambda);
            if let Some(s) = survival.as_deref_mut() {
                s[i * t1..(i + 1) * t1].copy_from_slice(&c.survival);
            }
        }
        Ok(())
    })
}

/// Routing probabilities for preprocessed rows: `pi_feat` is
/// `n_rows × K`, `pi_haz` is `n_rows × num_bins × L`.
///
/// # Safety
/// Buffers must have the sizes above.
#[no_mangle]
pub unsafe extern "C" fn survmoe_model_routing(
    model: *const SurvmoeModel,
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    pi_feat: *mut f64,
    pi_haz: *mut f64,
) -> SurvmoeStatus {
    guard(|| {
        non_null(model, "model")?;
        let m = &(*model).checkpoint.model;
        let cfg = m.config();
        let (k, l, t1) = (cfg.k(), cfg.l(), cfg.num_bins());
        if n_cols != cfg.input_dim {
            return Err(invalid(format!("expected {} columns, got {n_cols}", cfg.input_dim)));
        }
        let x = input(x, n_rows * n_cols, "x")?;
        let pi_feat = output(pi_feat, n_rows * k, "pi_feat")?;
        let pi_haz = output(pi_haz, n_rows * t1 * l, "pi_haz")?;
        for (i, row) in rows(x, n_rows, n_cols).enumerate() {
            let (_, trace) = m.predict_with_trace(row)?;
            pi_feat[i * k..(i + 1) * k].copy_from_slice(&trace.pi_feat);
            pi_haz[i * t1 * l..(i + 1) * t1 * l].copy_from_slice(trace.pi_haz.data());
        }
        Ok(())
    })
}

/// Harrell's C-index. `event` entries are 0 (censored) or 1.
///
/// # Safety
/// Inputs must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn survmoe_cindex(
    risk: *const f64,
    tau: *const usize,
    event: *const u8,
    n: usize,
    out: *mut f64,
) -> SurvmoeStatus {
    guard(|| {
        non_null(out, "out")?;
        let risk = input(risk, n, "risk")?;
        let tau = input(tau, n, "tau")?;
        let event: Vec<bool> = input(event, n, "event")?.iter().map(|&e| e != 0).collect();
        *out = metrics::harrell_cindex(risk, tau, &event)?.value;
        Ok(())
    })
}

/// Time-dependent C-index at bin `horizon` from survival curves
/// (`n × num_bins`).
///
/// # Safety
/// `survival` must hold `n * num_bins` values, the others `n`.
#[no_mangle]
pub unsafe extern "C" fn survmoe_td_cindex(
    survival: *const f64,
    n: usize,
    num_bins: usize,
    tau: *const usize,
    event: *const u8,
    horizon: usize,
    out: *mut f64,
) -> SurvmoeStatus {
    guard(|| {
        non_null(out, "out")?;
        if num_bins == 0 {
            return Err(invalid("num_bins must be positive"));
        }
        let surv = input(survival, n * num_bins, "survival")?;
        let curves: Vec<HazardCurve> = rows(surv, n, num_bins)
            .map(|r| HazardCurve::from_survival(r.to_vec()))
            .collect();
        let tau = input(tau, n, "tau")?;
        let event: Vec<bool> = input(event, n, "event")?.iter().map(|&e| e != 0).collect();
        *out = metrics::td_cindex(&curves, tau, &event, horizon)?.value;
        Ok(())
    })
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length
/// in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn survmoe_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}
