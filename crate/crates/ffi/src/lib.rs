//! C interface to `wdgnn`: graph filters and WD-GNN inference behind opaque
//! handles.
//!
//! Every fallible function returns a [`WdgnnStatus`]. On failure a message
//! is kept per thread and read with [`wdgnn_last_error_message`]. Arrays are
//! row-major `double` buffers with explicit lengths. Handles are created by
//! the library and must be released with the matching `_free` function.
//! Panics never cross the boundary; they surface as `WDGNN_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wdgnn::graph::{apply_filter, FilterTaps, GraphSignal, ShiftRegister, SupportMatrix};
use wdgnn::model::{checkpoint, forward, Architecture, Frames, Nonlinearity, WdGnnParams};
use wdgnn::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WdgnnStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    InvalidArgument = 2,
    /// A buffer length or shape disagrees with the handle it is used with.
    DimensionMismatch = 3,
    /// Non-finite values or a numerical failure.
    Numeric = 4,
    Io = 5,
    Parse = 6,
    /// A bug inside the library; the message carries the panic payload.
    Panic = 7,
}

/// A sparse graph support matrix.
pub struct WdgnnSupport(SupportMatrix);

/// WD-GNN parameters plus the signal history used by [`wdgnn_model_step`].
pub struct WdgnnModel {
    params: WdGnnParams,
    register: ShiftRegister,
}

type Failure = (WdgnnStatus, String);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn from_error(e: Error) -> Failure {
    let status = match &e {
        Error::DimensionMismatch { .. } => WdgnnStatus::DimensionMismatch,
        Error::Io { .. } => WdgnnStatus::Io,
        Error::Parse { .. } | Error::Json(_) => WdgnnStatus::Parse,
        e if e.is_numeric() => WdgnnStatus::Numeric,
        _ => WdgnnStatus::InvalidArgument,
    };
    (status, e.to_string())
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> WdgnnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => WdgnnStatus::Ok,
        Ok(Err((status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {message}"));
            WdgnnStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    (WdgnnStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `ptr` must be null or valid for `len` reads.
unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or valid for `len` writes.
unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

/// # Safety
/// `ptr` must be null or point to a live `T`.
unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<(), Failure> {
    if expected == found {
        Ok(())
    } else {
        Err((
            WdgnnStatus::DimensionMismatch,
            format!("{what}: expected {expected} values, found {found}"),
        ))
    }
}

fn signal(x: &[f64], n_nodes: usize, n_features: usize) -> Result<GraphSignal, Failure> {
    check_len("signal", n_nodes * n_features, x.len())?;
    let a = Array2::from_shape_vec((n_nodes, n_features), x.to_vec()).expect("length checked");
    GraphSignal::new(a).map_err(from_error)
}

fn copy_out(values: &Array2<f64>, out: &mut [f64]) -> Result<(), Failure> {
    check_len("output buffer", values.len(), out.len())?;
    for (o, v) in out.iter_mut().zip(values.iter()) {
        *o = *v;
    }
    Ok(())
}

/// # Safety
/// `out` must be null or valid for one write.
unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Version and build of the library, as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wdgnn_version() -> *const c_char {
    static VERSION: OnceLock<CString> = OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(wdgnn::experiment::BUILD_ID).expect("no NUL in build id"))
        .as_ptr()
}

/// Message of the last failed call on this thread, or null if none failed.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wdgnn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Binary symmetric support from `n_edges` undirected edges, given as
/// `2 * n_edges` node indices `(i0, j0, i1, j1, ...)`.
///
/// # Safety
/// `edges` must be valid for `2 * n_edges` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn wdgnn_support_from_edges(
    n_nodes: usize,
    edges: *const usize,
    n_edges: usize,
    out: *mut *mut WdgnnSupport,
) -> WdgnnStatus {
    guard(|| {
        let flat = slice(edges, 2 * n_edges, "edges")?;
        let pairs: Vec<(usize, usize)> = flat.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        let s = SupportMatrix::from_undirected_edges(n_nodes, &pairs).map_err(from_error)?;
        emit(out, WdgnnSupport(s))
    })
}

/// Weighted support from `nnz` entries `S[rows[k], cols[k]] = weights[k]`.
///
/// # Safety
/// `rows`, `cols` and `weights` must be valid for `nnz` reads and `out` for
/// one write.
#[no_mangle]
pub unsafe extern "C" fn wdgnn_support_from_triplets(
    n_nodes: usize,
    rows: *const usize,
    cols: *const usize,
    weights: *const f64,
    nnz: usize,
    out: *mut *mut WdgnnSupport,
) -> WdgnnStatus {
    guard(|| {
        let (r, c, w) = (
            slice(rows, nnz, "rows")?,
            slice(cols, nnz, "cols")?,
            slice(weights, nnz, "weights")?,
        );
        let triplets: Vec<_> = (0..nnz).map(|k| (r[k], c[k], w[k])).collect();
        let s = SupportMatrix::from_triplets(n_nodes, &triplets).map_err(from_error)?;
        emit(out, WdgnnSupport(s))
    })
}

/// Node count of `support`, or 0 for a null handle.
///
/// # Safety
/// `support` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wdgnn_support_n_nodes(support: *const WdgnnSupport) -> usize {
    support.as_ref().map_or(0, |s| s.0.n_nodes())
}

/// # Safety
/// `support` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wdgnn_support_free(support: *mut WdgnnSupport) {
    if !support.is_null() {
        drop(Box::from_raw(support));
    }
}

/// Graph filter `Σ_k S^k X B_k` for `k = 0..=order`. `x` is
/// `n_nodes × in_features`, `taps` holds `order + 1` matrices of
/// `in_features × out_features` back to back, and `out` receives
/// `n_nodes × out_features` values.
///
/// # Safety
/// Every buffer must be valid for the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn wdgnn_filter_apply(
    support: *const WdgnnSupport,
    x: *const f64,
    n_nodes: usize,
    in_features: usize,
    taps: *const f64,
    order: usize,
    out_features: usize,
    out: *mut f64,
) -> WdgnnStatus {
    guard(|| {
        let s = &handle(support, "support")?.0;
        let x = signal(slice(x, n_nodes * in_features, "x")?, n_nodes, in_features)?;
        let per_tap = in_features * out_features;
        let flat = slice(taps, (order + 1) * per_tap, "taps")?;
        let mats = flat
            .chunks_exact(per_tap.max(1))
            .take(order + 1)
            .map(|c| Array2::from_shape_vec((in_features, out_features), c[..per_tap].to_vec()).expect("chunk size"))
            .collect();
        let taps = FilterTaps::new(mats).map_err(from_error)?;
        let y = apply_filter(s, &x, &taps).map_err(from_error)?;
        copy_out(y.as_array(), slice_mut(out, n_nodes * out_features, "out")?)
    })
}

fn model(params: WdGnnParams) -> WdgnnModel {
    let register = ShiftRegister::new(params.temporal_depth());
    WdgnnModel { params, register }
}

/// Randomly initialized WD-GNN with tanh nonlinearities, reproducible from
/// `seed`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn wdgnn_model_random(
    in_features: usize,
    hidden: usize,
    out_features: usize,
    order: usize,
    layers: usize,
    seed: u64,
    out: *mut *mut WdgnnModel,
) -> WdgnnStatus {
    guard(|| {
        if in_features == 0 || hidden == 0 || out_features == 0 || layers == 0 {
            return Err((
                WdgnnStatus::InvalidArgument,
                "sizes and layer count must be positive".into(),
            ));
        }
        let arch = Architecture {
            in_features,
            hidden,
            out_features,
            order,
            layers,
            nonlinearity: Nonlinearity::Tanh,
        };
        emit(
            out,
            model(WdGnnParams::random(&arch, &mut ChaCha8Rng::seed_from_u64(seed))),
        )
    })
}

fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    // SAFETY: checked non-null; the caller promises a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(path) }
        .to_str()
        .map_err(|_| (WdgnnStatus::InvalidArgument, "path is not valid UTF-8".to_string()))?;
    Ok(Path::new(s))
}

/// Loads a JSON checkpoint written by the `wdgnn` tools.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn wdgnn_model_load(path: *const c_char, out: *mut *mut WdgnnModel) -> WdgnnStatus {
    guard(|| {
        let (params, _) = checkpoint::load(path_arg(path)?).map_err(from_error)?;
        emit(out, model(params))
    })
}

/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn wdgnn_model_save(m: *const WdgnnModel, path: *const c_char) -> WdgnnStatus {
    guard(|| {
        let m = handle(m, "model")?;
        checkpoint::save(path_arg(path)?, &m.params, &Default::default()).map_err(from_error)
    })
}

/// Input features per node, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wdgnn_model_in_features(m: *const WdgnnModel) -> usize {
    m.as_ref().map_or(0, |m| m.params.in_features())
}

/// Output features per node, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wdgnn_model_out_features(m: *const WdgnnModel) -> usize {
    m.as_ref().map_or(0, |m| m.params.out_features())
}

/// Past frames [`wdgnn_model_step`] keeps besides the current one.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wdgnn_model_temporal_depth(m: *const WdgnnModel) -> usize {
    m.as_ref().map_or(0, |m| m.params.temporal_depth())
}

/// Output for one graph and signal, with every filter using powers of the
/// same support. `out_len` must equal `n_nodes * out_features`.
///
/// # Safety
/// `x` must be valid for `n_nodes * in_features` reads and `out` for
/// `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn wdgnn_model_forward(
    m: *const WdgnnModel,
    support: *const WdgnnSupport,
    x: *const f64,
    n_nodes: usize,
    in_features: usize,
    out: *mut f64,
    out_len: usize,
) -> WdgnnStatus {
    guard(|| {
        let m = handle(m, "model")?;
        let s = &handle(support, "support")?.0;
        let x = signal(slice(x, n_nodes * in_features, "x")?, n_nodes, in_features)?;
        let (y, _) = forward(Frames::Static { support: s, signal: &x }, &m.params).map_err(from_error)?;
        copy_out(y.as_array(), slice_mut(out, out_len, "out")?)
    })
}

/// Records this step's graph and signal in the model's history and writes
/// the output of the delayed (time-varying graph) filters. Use once per
/// time step; [`wdgnn_model_reset`] clears the history.
///
/// # Safety
/// As for [`wdgnn_model_forward`], with `m` mutable.
#[no_mangle]
pub unsafe extern "C" fn wdgnn_model_step(
    m: *mut WdgnnModel,
    support: *const WdgnnSupport,
    x: *const f64,
    n_nodes: usize,
    in_features: usize,
    out: *mut f64,
    out_len: usize,
) -> WdgnnStatus {
    guard(|| {
        let m = m.as_mut().ok_or_else(|| null("model"))?;
        let s = &handle(support, "support")?.0;
        let x = signal(slice(x, n_nodes * in_features, "x")?, n_nodes, in_features)?;
        let out = slice_mut(out, out_len, "out")?;
        let mut next = m.register.clone();
        next.push(s.clone(), x).map_err(from_error)?;
        let (y, _) = forward(Frames::Delayed(&next), &m.params).map_err(from_error)?;
        copy_out(y.as_array(), out)?;
        // Only a successful step enters the history.
        m.register = next;
        Ok(())
    })
}

/// Clears the history used by [`wdgnn_model_step`].
///
/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wdgnn_model_reset(m: *mut WdgnnModel) -> WdgnnStatus {
    guard(|| {
        let m = m.as_mut().ok_or_else(|| null("model"))?;
        m.register = ShiftRegister::new(m.params.temporal_depth());
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wdgnn_model_free(m: *mut WdgnnModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}
