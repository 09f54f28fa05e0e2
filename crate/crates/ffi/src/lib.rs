//! C ABI for `cdfilter`.
//!
//! Filters are exposed as opaque `CdfFilter` handles. Every fallible function
//! returns a [`CdfStatus`]; on failure a description is available from
//! [`cdf_last_error_message`] on the same thread. Matrices cross the boundary
//! as column-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::atomic::{AtomicI32, Ordering};
use std::sync::Arc;

use cdfilter::bench::{BenchConfig, FilterId};
use cdfilter::scenarios::RadarScenario;
use cdfilter::{
    ContinuousDiscreteFilter, Error, GaussianBelief, MeasurementModel, Propagator, SdeModel,
};
use nalgebra::{DMatrix, DVector};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotPositiveSemiDefinite = 4,
    SingularFactor = 5,
    SolverFailure = 6,
    DegenerateInnovation = 7,
    NonFinite = 8,
    CallbackFailed = 9,
    MissingDerivatives = 10,
    Panic = 11,
    Other = 99,
}

/// Time-update method.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdfPropagator {
    LskfAdaptive = 0,
    LskfRk4 = 1,
    LskfRk2 = 2,
    Cdckf = 3,
    CdckfProper = 4,
}

/// Drift or measurement callback: writes `out_len` values for the input
/// `x[0..x_len]` at time `t`. Return 0 on success; any other value aborts the
/// current call with `CallbackFailed`.
pub type CdfVectorFn = Option<
    unsafe extern "C" fn(
        ctx: *mut c_void,
        t: f64,
        x: *const f64,
        x_len: usize,
        out: *mut f64,
        out_len: usize,
    ) -> i32,
>;

/// Opaque filter handle.
pub struct CdfFilter {
    inner: ContinuousDiscreteFilter,
    callback_status: Arc<AtomicI32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CdfStatus {
    match e.root() {
        Error::NotSymmetric { .. } | Error::NotPositiveSemiDefinite { .. } => {
            CdfStatus::NotPositiveSemiDefinite
        }
        Error::SingularFactor { .. } => CdfStatus::SingularFactor,
        Error::DimensionMismatch(_) => CdfStatus::DimensionMismatch,
        Error::InvalidArgument(_) | Error::Config(_) => CdfStatus::InvalidArgument,
        Error::MaxStepsExceeded { .. } | Error::StepUnderflow { .. } => CdfStatus::SolverFailure,
        Error::MissingDerivatives(_) => CdfStatus::MissingDerivatives,
        Error::DegenerateInnovationCovariance | Error::AtStationSingularity => {
            CdfStatus::DegenerateInnovation
        }
        Error::NonFinite(_) => CdfStatus::NonFinite,
        Error::Callback(_) => CdfStatus::CallbackFailed,
        _ => CdfStatus::Other,
    }
}

fn guard<F>(f: F) -> CdfStatus
where
    F: FnOnce() -> Result<(), (CdfStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CdfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            CdfStatus::Panic
        }
    }
}

fn fail(e: Error) -> (CdfStatus, String) {
    (status_of(&e), e.to_string())
}

fn invalid(msg: &str) -> (CdfStatus, String) {
    (CdfStatus::InvalidArgument, msg.to_string())
}

fn null(what: &str) -> (CdfStatus, String) {
    (CdfStatus::NullPointer, format!("null pointer: {what}"))
}

fn propagator(
    kind: CdfPropagator,
    m: usize,
    finite_differences: bool,
) -> Result<Propagator, (CdfStatus, String)> {
    if m == 0 {
        return Err(invalid("m must be >= 1"));
    }
    let id = match kind {
        CdfPropagator::LskfAdaptive => FilterId::LskfAdaptive,
        CdfPropagator::LskfRk4 => FilterId::LskfRk4,
        CdfPropagator::LskfRk2 => FilterId::LskfRk2,
        CdfPropagator::Cdckf => FilterId::Cdckf,
        CdfPropagator::CdckfProper => FilterId::CdckfProper,
    };
    let mut p = BenchConfig::default().propagator(id, m);
    if let Propagator::Cdckf(v) = &mut p {
        v.finite_differences = finite_differences;
    }
    Ok(p)
}

unsafe fn slice<'a>(
    p: *const f64,
    len: usize,
    what: &str,
) -> Result<&'a [f64], (CdfStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a>(f: *mut CdfFilter) -> Result<&'a mut CdfFilter, (CdfStatus, String)> {
    f.as_mut().ok_or_else(|| null("filter"))
}

fn callback_result(f: &CdfFilter) -> Result<(), (CdfStatus, String)> {
    match f.callback_status.swap(0, Ordering::SeqCst) {
        0 => Ok(()),
        code => Err(fail(Error::Callback(code))),
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cdf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cdf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a filter for the coordinated-turn radar model, initialized at the
/// nominal initial state and covariance.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cdf_filter_new_radar(
    omega_deg: f64,
    interval_s: f64,
    kind: CdfPropagator,
    m: usize,
    out: *mut *mut CdfFilter,
) -> CdfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = RadarScenario::new(omega_deg, interval_s).map_err(fail)?;
        let belief =
            GaussianBelief::from_covariance(s.initial_state(), &s.initial_covariance(), 0.0)
                .map_err(fail)?;
        let inner = ContinuousDiscreteFilter::new(
            s.sde_model(),
            s.measurement_model(),
            propagator(kind, m, false)?,
            belief,
        )
        .map_err(fail)?;
        *out = Box::into_raw(Box::new(CdfFilter {
            inner,
            callback_status: Arc::new(AtomicI32::new(0)),
        }));
        Ok(())
    })
}

struct Callback {
    f: unsafe extern "C" fn(*mut c_void, f64, *const f64, usize, *mut f64, usize) -> i32,
    ctx: *mut c_void,
    status: Arc<AtomicI32>,
}

// The caller guarantees the callbacks may be invoked from any thread.
unsafe impl Send for Callback {}
unsafe impl Sync for Callback {}

impl Callback {
    fn call(&self, x: &DVector<f64>, t: f64, out_len: usize) -> DVector<f64> {
        let mut out = DVector::from_element(out_len, f64::NAN);
        let code = unsafe { (self.f)(self.ctx, t, x.as_ptr(), x.len(), out.as_mut_ptr(), out_len) };
        if code != 0 {
            self.status.store(code, Ordering::SeqCst);
            out.fill(f64::NAN);
        }
        out
    }
}

/// Creates a filter for a user model given by callbacks.
///
/// `sqrt_k` is the `dim × dim` diffusion factor and `sqrt_r` the
/// `meas_dim × meas_dim` measurement-noise factor, both column-major. The
/// CD-CKF propagators need derivatives of the drift; they are obtained by
/// finite differences. The filter starts at `mean0`, `cov0` at time 0.
///
/// # Safety
/// All pointers must be valid for the stated lengths; the callbacks and their
/// contexts must stay valid for the lifetime of the handle.
#[no_mangle]
pub unsafe extern "C" fn cdf_filter_new_callback(
    dim: usize,
    drift: CdfVectorFn,
    drift_ctx: *mut c_void,
    sqrt_k: *const f64,
    meas_dim: usize,
    measure: CdfVectorFn,
    measure_ctx: *mut c_void,
    sqrt_r: *const f64,
    mean0: *const f64,
    cov0: *const f64,
    kind: CdfPropagator,
    m: usize,
    out: *mut *mut CdfFilter,
) -> CdfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let drift = drift.ok_or_else(|| null("drift"))?;
        let measure = measure.ok_or_else(|| null("measure"))?;
        if dim == 0 || meas_dim == 0 {
            return Err(invalid("dimensions must be >= 1"));
        }
        let sqrt_k = DMatrix::from_column_slice(dim, dim, slice(sqrt_k, dim * dim, "sqrt_k")?);
        let sqrt_r = DMatrix::from_column_slice(
            meas_dim,
            meas_dim,
            slice(sqrt_r, meas_dim * meas_dim, "sqrt_r")?,
        );
        let mean0 = DVector::from_column_slice(slice(mean0, dim, "mean0")?);
        let cov0 = DMatrix::from_column_slice(dim, dim, slice(cov0, dim * dim, "cov0")?);

        let status = Arc::new(AtomicI32::new(0));
        let dcb = Callback {
            f: drift,
            ctx: drift_ctx,
            status: status.clone(),
        };
        let mcb = Callback {
            f: measure,
            ctx: measure_ctx,
            status: status.clone(),
        };
        let model = SdeModel::new(dim, move |x, t| dcb.call(x, t, dim), sqrt_k).map_err(fail)?;
        let mm = MeasurementModel::new(meas_dim, move |x| mcb.call(x, f64::NAN, meas_dim), sqrt_r)
            .map_err(fail)?;
        let belief = GaussianBelief::from_covariance(mean0, &cov0, 0.0).map_err(fail)?;
        let inner = ContinuousDiscreteFilter::new(model, mm, propagator(kind, m, true)?, belief)
            .map_err(fail)?;
        *out = Box::into_raw(Box::new(CdfFilter {
            inner,
            callback_status: status,
        }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `filter` must come from a constructor of this library and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn cdf_filter_free(filter: *mut CdfFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

/// State dimension, or 0 for a null handle.
///
/// # Safety
/// `filter` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cdf_filter_dim(filter: *const CdfFilter) -> usize {
    filter.as_ref().map_or(0, |f| f.inner.belief().dim())
}

/// Replaces the belief with mean `mean[0..dim]` and covariance `cov`
/// (column-major) at time `time`.
///
/// # Safety
/// Pointers must be valid for `dim` and `dim * dim` values.
#[no_mangle]
pub unsafe extern "C" fn cdf_filter_set_belief(
    filter: *mut CdfFilter,
    time: f64,
    mean: *const f64,
    cov: *const f64,
    dim: usize,
) -> CdfStatus {
    guard(|| {
        let f = handle(filter)?;
        if dim != f.inner.belief().dim() {
            return Err(fail(Error::DimensionMismatch(format!(
                "belief of dimension {dim} for a {}-dimensional filter",
                f.inner.belief().dim()
            ))));
        }
        let mean = DVector::from_column_slice(slice(mean, dim, "mean")?);
        let cov = DMatrix::from_column_slice(dim, dim, slice(cov, dim * dim, "cov")?);
        let b = GaussianBelief::from_covariance(mean, &cov, time).map_err(fail)?;
        f.inner.set_belief(b).map_err(fail)
    })
}

/// Time update to `t1`.
///
/// # Safety
/// `filter` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cdf_filter_predict(filter: *mut CdfFilter, t1: f64) -> CdfStatus {
    guard(|| {
        let f = handle(filter)?;
        let r = f.inner.predict(t1).map(|_| ());
        callback_result(f)?;
        r.map_err(fail)
    })
}

/// Measurement update with `y[0..meas_dim]` at the current belief time.
///
/// # Safety
/// `filter` must be a live handle and `y` valid for `meas_dim` values.
#[no_mangle]
pub unsafe extern "C" fn cdf_filter_update(
    filter: *mut CdfFilter,
    y: *const f64,
    meas_dim: usize,
) -> CdfStatus {
    guard(|| {
        let f = handle(filter)?;
        if meas_dim != f.inner.measurement.meas_dim() {
            return Err(fail(Error::DimensionMismatch(format!(
                "measurement of length {meas_dim}, expected {}",
                f.inner.measurement.meas_dim()
            ))));
        }
        let y = DVector::from_column_slice(slice(y, meas_dim, "y")?);
        let r = f.inner.update(&y).map(|_| ());
        callback_result(f)?;
        r.map_err(fail)
    })
}

/// Predict to `t` then update with `y`.
///
/// # Safety
/// As for [`cdf_filter_update`].
#[no_mangle]
pub unsafe extern "C" fn cdf_filter_step(
    filter: *mut CdfFilter,
    t: f64,
    y: *const f64,
    meas_dim: usize,
) -> CdfStatus {
    match cdf_filter_predict(filter, t) {
        CdfStatus::Ok => cdf_filter_update(filter, y, meas_dim),
        s => s,
    }
}

/// Copies the mean into `out[0..len]`; `len` must equal the dimension.
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn cdf_filter_mean(
    filter: *const CdfFilter,
    out: *mut f64,
    len: usize,
) -> CdfStatus {
    guard(|| {
        let f = filter.as_ref().ok_or_else(|| null("filter"))?;
        copy_out(f.inner.belief().mean.as_slice(), out, len)
    })
}

/// Copies the covariance (column-major) into `out[0..len]`; `len` must be
/// the squared dimension.
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn cdf_filter_covariance(
    filter: *const CdfFilter,
    out: *mut f64,
    len: usize,
) -> CdfStatus {
    guard(|| {
        let f = filter.as_ref().ok_or_else(|| null("filter"))?;
        copy_out(f.inner.belief().covariance().as_slice(), out, len)
    })
}

/// Writes the belief time to `out`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cdf_filter_time(filter: *const CdfFilter, out: *mut f64) -> CdfStatus {
    guard(|| {
        let f = filter.as_ref().ok_or_else(|| null("filter"))?;
        copy_out(&[f.inner.belief().time], out, 1)
    })
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), (CdfStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len != src.len() {
        return Err(fail(Error::DimensionMismatch(format!(
            "output buffer of length {len}, need {}",
            src.len()
        ))));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, len);
    Ok(())
}
