//! C ABI for bridgelab.
//!
//! Models and bridges are opaque handles created by `*_new` and released by
//! the matching `*_free`. Every fallible call returns a [`BridgelabStatus`];
//! the message of the last failure on the calling thread is available from
//! [`bridgelab_last_error`]. Points cross the boundary as chart coordinates
//! (`bridgelab_model_chart_len` doubles each).

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bridgelab::bridge::{sample_bridge_sde, BridgePath, BridgeSpec, ExactSampler, TimeGrid};
use bridgelab::geometry::{ManifoldModel, Point};
use bridgelab::heatkernel::{kernel, SeriesControl};
use bridgelab::lift::{horizontal_lift, Frame};
use bridgelab::rng::RngStream;
use bridgelab::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BridgelabStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad model name, point, time, grid or other argument.
    InvalidArgument = 2,
    /// Series truncation, quadrature accuracy or rejection efficiency failure.
    Numerical = 3,
    /// An output buffer is shorter than required.
    BufferTooSmall = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Bridge sampler choice.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BridgelabSampler {
    Sde = 0,
    Exact = 1,
}

/// Opaque model handle.
pub struct BridgelabModel {
    model: ManifoldModel,
}

/// Opaque bridge handle: endpoints, horizon, grid and sampler.
pub struct BridgelabBridge {
    spec: BridgeSpec,
    grid: TimeGrid,
    exact: Option<ExactSampler>,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|b| *b != 0));
    });
}

fn status_of(e: &Error) -> BridgelabStatus {
    match e {
        Error::Truncation { .. } | Error::Accuracy { .. } | Error::Efficiency { .. } | Error::Budget { .. } => BridgelabStatus::Numerical,
        _ => BridgelabStatus::InvalidArgument,
    }
}

/// Runs `f`, recording failures and converting panics.
fn guard<F: FnOnce() -> Result<(), (BridgelabStatus, String)>>(f: F) -> BridgelabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            BridgelabStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned()).unwrap_or_default();
            set_error(&format!("panic: {msg}"));
            BridgelabStatus::Panic
        }
    }
}

type Res<T> = Result<T, (BridgelabStatus, String)>;

fn lib<T>(r: bridgelab::Result<T>) -> Res<T> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (BridgelabStatus, String) {
    (BridgelabStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Res<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Res<&'a [f64]> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_slice<'a>(p: *mut f64, have: usize, need: usize, what: &str) -> Res<&'a mut [f64]> {
    if p.is_null() {
        return Err(null(what));
    }
    if have < need {
        return Err((BridgelabStatus::BufferTooSmall, format!("{what} holds {have} values, {need} needed")));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn point(m: &ManifoldModel, p: *const f64, what: &str) -> Res<Point> {
    lib(m.point(slice(p, m.chart_len(), what)?))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bridgelab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length. An
/// empty message means the last call succeeded. `buf` may be null to query
/// the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn bridgelab_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Creates a model from `euclidean:<m>`, `s1`, `s2` or `h3`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn bridgelab_model_new(name: *const c_char, out: *mut *mut BridgelabModel) -> BridgelabStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let s = CStr::from_ptr(name).to_str().map_err(|_| (BridgelabStatus::InvalidArgument, "model name is not UTF-8".to_string()))?;
        let model = lib(s.parse::<ManifoldModel>())?;
        *out = Box::into_raw(Box::new(BridgelabModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`bridgelab_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bridgelab_model_free(model: *mut BridgelabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Intrinsic dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bridgelab_model_dim(model: *const BridgelabModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.dim)
}

/// Number of chart coordinates per point, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bridgelab_model_chart_len(model: *const BridgelabModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.chart_len())
}

/// Converts lenient input (an angle on the circle, colatitude and longitude
/// on the sphere, three spatial coordinates on H3, Cartesian coordinates on
/// Euclidean space) into chart coordinates.
///
/// # Safety
/// `input` must hold `n` doubles and `out` `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bridgelab_model_point(
    model: *const BridgelabModel,
    input: *const f64,
    n: usize,
    out: *mut f64,
    out_len: usize,
) -> BridgelabStatus {
    guard(|| {
        let m = &deref(model, "model")?.model;
        let p = lib(m.point_from_input(slice(input, n, "input")?))?;
        out_slice(out, out_len, m.chart_len(), "out")?.copy_from_slice(&p.coords);
        Ok(())
    })
}

/// Geodesic distance between two points.
///
/// # Safety
/// `x` and `y` must hold `chart_len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bridgelab_distance(model: *const BridgelabModel, x: *const f64, y: *const f64, out: *mut f64) -> BridgelabStatus {
    guard(|| {
        let m = &deref(model, "model")?.model;
        let (x, y) = (point(m, x, "x")?, point(m, y, "y")?);
        *out_slice(out, 1, 1, "out")?.first_mut().unwrap() = m.distance(&x, &y);
        Ok(())
    })
}

/// Heat kernel of `(1/2)Δ` at `(t, x, y)`. Writes the value and its log;
/// when `grad` is non-null, also the gradient of `log p(t, ·, y)` at `x` in
/// the model's canonical frame (`dim` doubles).
///
/// # Safety
/// Pointers must be null where allowed or valid for the sizes above.
#[no_mangle]
pub unsafe extern "C" fn bridgelab_kernel(
    model: *const BridgelabModel,
    t: f64,
    x: *const f64,
    y: *const f64,
    value: *mut f64,
    log_value: *mut f64,
    grad: *mut f64,
    grad_len: usize,
) -> BridgelabStatus {
    guard(|| {
        let m = &deref(model, "model")?.model;
        let (x, y) = (point(m, x, "x")?, point(m, y, "y")?);
        let k = lib(kernel(m, t, &x, &y, &SeriesControl::default()))?;
        if !grad.is_null() {
            out_slice(grad, grad_len, m.dim, "grad")?.copy_from_slice(&k.log_grad_x.components);
        }
        if !value.is_null() {
            *value = k.value;
        }
        if !log_value.is_null() {
            *log_value = k.log_value;
        }
        Ok(())
    })
}

/// Bridge from `x` to `y` over `[0, horizon]` on a uniform grid of `steps`
/// steps. The model handle may be freed afterwards.
///
/// # Safety
/// `x` and `y` must hold `chart_len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bridgelab_bridge_new(
    model: *const BridgelabModel,
    x: *const f64,
    y: *const f64,
    horizon: f64,
    steps: usize,
    sampler: BridgelabSampler,
    out: *mut *mut BridgelabBridge,
) -> BridgelabStatus {
    guard(|| {
        let m = deref(model, "model")?.model;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = lib(BridgeSpec::new(m, point(&m, x, "x")?, point(&m, y, "y")?, horizon))?;
        let grid = lib(TimeGrid::uniform(horizon, steps))?;
        let exact = match sampler {
            BridgelabSampler::Exact => Some(lib(ExactSampler::new(spec.clone(), grid.clone()))?),
            BridgelabSampler::Sde => None,
        };
        *out = Box::into_raw(Box::new(BridgelabBridge { spec, grid, exact }));
        Ok(())
    })
}

/// # Safety
/// `bridge` must be null or a handle from [`bridgelab_bridge_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bridgelab_bridge_free(bridge: *mut BridgelabBridge) {
    if !bridge.is_null() {
        drop(Box::from_raw(bridge));
    }
}

/// Grid points per path (`steps + 1`), or 0 for a null handle.
///
/// # Safety
/// `bridge` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bridgelab_bridge_len(bridge: *const BridgelabBridge) -> usize {
    bridge.as_ref().map_or(0, |b| b.grid.times().len())
}

/// Writes the grid times (`bridgelab_bridge_len` doubles).
///
/// # Safety
/// `out` must hold `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bridgelab_bridge_times(bridge: *const BridgelabBridge, out: *mut f64, out_len: usize) -> BridgelabStatus {
    guard(|| {
        let b = deref(bridge, "bridge")?;
        out_slice(out, out_len, b.grid.times().len(), "out")?.copy_from_slice(b.grid.times());
        Ok(())
    })
}

fn sample_path(b: &BridgelabBridge, seed: u64, index: u64) -> Res<BridgePath> {
    let mut stream = RngStream::new(seed, "ffi-bridge", index);
    lib(match &b.exact {
        Some(s) => s.sample(&mut stream),
        None => sample_bridge_sde(&b.spec, &b.grid, &mut stream),
    })
}

/// Samples path number `index` of the stream family `seed` and writes its
/// points row by row (`len · chart_len` doubles). The same `(seed, index)`
/// always gives the same path.
///
/// # Safety
/// `out` must hold `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bridgelab_bridge_sample(
    bridge: *const BridgelabBridge,
    seed: u64,
    index: u64,
    out: *mut f64,
    out_len: usize,
) -> BridgelabStatus {
    guard(|| {
        let b = deref(bridge, "bridge")?;
        let k = b.spec.model.chart_len();
        let buf = out_slice(out, out_len, b.grid.times().len() * k, "out")?;
        let path = sample_path(b, seed, index)?;
        for (row, p) in buf.chunks_exact_mut(k).zip(&path.points) {
            row.copy_from_slice(&p.coords);
        }
        Ok(())
    })
}

/// Samples like [`bridgelab_bridge_sample`] and writes the horizontal lift of
/// the path started from the canonical frame: per grid point, `dim` frame
/// vectors of `chart_len` ambient components (`len · dim · chart_len`
/// doubles, row-major). `points` may be null.
///
/// # Safety
/// `frames` must hold `frames_len` writable doubles; `points` null or
/// `points_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bridgelab_bridge_sample_lift(
    bridge: *const BridgelabBridge,
    seed: u64,
    index: u64,
    points: *mut f64,
    points_len: usize,
    frames: *mut f64,
    frames_len: usize,
) -> BridgelabStatus {
    guard(|| {
        let b = deref(bridge, "bridge")?;
        let m = &b.spec.model;
        let (n, k) = (b.grid.times().len(), m.chart_len());
        let fbuf = out_slice(frames, frames_len, n * m.dim * k, "frames")?;
        let pbuf = if points.is_null() { None } else { Some(out_slice(points, points_len, n * k, "points")?) };
        let path = sample_path(b, seed, index)?;
        let lift = lib(horizontal_lift(&path, &Frame::canonical(m, &path.points[0])))?;
        for (row, f) in fbuf.chunks_exact_mut(m.dim * k).zip(&lift.frames) {
            row.copy_from_slice(&f.entries());
        }
        if let Some(pbuf) = pbuf {
            for (row, p) in pbuf.chunks_exact_mut(k).zip(&path.points) {
                row.copy_from_slice(&p.coords);
            }
        }
        Ok(())
    })
}
