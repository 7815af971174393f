//! C ABI for the cloudflow point-cloud model.
//!
//! The surface is a conventional handle-based C API: `cf_model_load` returns
//! an opaque `CfModel*`, every fallible call returns a [`CfStatus`], and the
//! most recent failure on the calling thread is described by
//! [`cf_last_error_message`]. Point clouds cross the boundary as row-major
//! `double` buffers of length `3 * n_points`, regardless of the precision
//! the model was trained in.
//!
//! Panics never unwind across the boundary; they are caught and reported as
//! [`CfStatus::Panic`].

#![deny(unsafe_op_in_unsafe_fn)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use cloudflow::align::{align_pose, AlignConfig};
use cloudflow::data::PointCloud;
use cloudflow::metrics::{chamfer, emd};
use cloudflow::train::checkpoint::{load_model, peek_dtype};
use cloudflow::{Dtype, Error, FlowModel, Scalar};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result of every fallible call. `CF_STATUS_OK` is zero; anything else is
/// an error whose text is available from `cf_last_error_message()`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range or otherwise unusable.
    InvalidArgument = 2,
    /// The operating system reported an I/O failure.
    Io = 3,
    /// A file was readable but not a usable checkpoint or cloud.
    BadData = 4,
    /// A computation produced non-finite values or failed a numeric check.
    Numerical = 5,
    /// An internal panic was caught at the boundary.
    Panic = 6,
}

/// Floating-point precision a model was trained in.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfPrecision {
    F32 = 0,
    F64 = 1,
}

enum ModelImpl {
    F32(FlowModel<f32>),
    F64(FlowModel<f64>),
}

/// Opaque handle to a loaded model. Create with `cf_model_load`, release
/// with `cf_model_free`. The handle is immutable, so sharing it across
/// threads for concurrent reads is safe; the per-thread error message is
/// the only thread-local state.
pub struct CfModel {
    inner: ModelImpl,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let safe = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = safe);
}

fn status_of(err: &Error) -> CfStatus {
    match err {
        Error::InvalidArgument(_) => CfStatus::InvalidArgument,
        Error::Io { .. } => CfStatus::Io,
        Error::Parse { .. } | Error::Checkpoint(_) | Error::Data(_) => CfStatus::BadData,
        Error::ShapeMismatch { .. } | Error::NonFinite { .. } | Error::Numerical(_) => {
            CfStatus::Numerical
        }
    }
}

/// Runs `f`, translating both `Err` and panics into status codes.
fn guarded<F: FnOnce() -> Result<(), Error>>(f: F) -> CfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CfStatus::Ok,
        Ok(Err(err)) => {
            set_error(&err.to_string());
            status_of(&err)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unidentified panic".to_string());
            set_error(&format!("panic: {msg}"));
            CfStatus::Panic
        }
    }
}

fn null_arg(what: &str) -> CfStatus {
    set_error(&format!("{what} must not be null"));
    CfStatus::NullPointer
}

/// Length of a flat xyz buffer for `n_points` points, guarding overflow.
fn xyz_len(n_points: usize, what: &str) -> Result<usize, Error> {
    n_points
        .checked_mul(3)
        .ok_or_else(|| Error::InvalidArgument(format!("{what}: point count overflows")))
}

/// # Safety
/// `ptr` must point to `3 * n_points` readable doubles.
unsafe fn xyz_slice<'a>(ptr: *const f64, n_points: usize, what: &str) -> Result<&'a [f64], Error> {
    let len = xyz_len(n_points, what)?;
    Ok(unsafe { std::slice::from_raw_parts(ptr, len) })
}

/// # Safety
/// `dst` must point to `src.len()` writable doubles.
unsafe fn write_out(src: &[f64], dst: *mut f64) {
    unsafe { std::ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len()) };
}

fn widen<S: Scalar>(v: &[S]) -> Vec<f64> {
    v.iter().map(|&x| x.to_f64()).collect()
}

fn narrow<S: Scalar>(v: &[f64]) -> Vec<S> {
    v.iter().map(|&x| S::from_f64(x)).collect()
}

impl CfModel {
    fn precision(&self) -> CfPrecision {
        match self.inner {
            ModelImpl::F32(_) => CfPrecision::F32,
            ModelImpl::F64(_) => CfPrecision::F64,
        }
    }

    fn embed_dim(&self) -> usize {
        match &self.inner {
            ModelImpl::F32(m) => m.embed_dim(),
            ModelImpl::F64(m) => m.embed_dim(),
        }
    }

    fn sample(&self, n_points: usize, temperature: f64, seed: u64) -> Result<Vec<f64>, Error> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &self.inner {
            ModelImpl::F32(m) => Ok(widen(&m.sample_cloud(n_points, temperature, &mut rng)?)),
            ModelImpl::F64(m) => m.sample_cloud(n_points, temperature, &mut rng),
        }
    }

    fn reconstruct(&self, cloud: &[f64], n_out: usize, seed: u64) -> Result<Vec<f64>, Error> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &self.inner {
            ModelImpl::F32(m) => {
                Ok(widen(&m.reconstruct(&narrow(cloud), n_out, &mut rng)?))
            }
            ModelImpl::F64(m) => m.reconstruct(cloud, n_out, &mut rng),
        }
    }

    /// Returns (embedding, embedding log-likelihood).
    fn embed(&self, cloud: &[f64]) -> Result<(Vec<f64>, f64), Error> {
        match &self.inner {
            ModelImpl::F32(m) => {
                let (e, logp) = m.embed(&narrow(cloud))?;
                Ok((widen(&e), logp))
            }
            ModelImpl::F64(m) => m.embed(cloud),
        }
    }

    fn align(
        &self,
        cloud: &[f64],
        cfg: &AlignConfig,
    ) -> Result<cloudflow::align::AlignResult, Error> {
        match &self.inner {
            ModelImpl::F32(m) => align_pose(m, cloud, cfg),
            ModelImpl::F64(m) => align_pose(m, cloud, cfg),
        }
    }
}

/// Returns the library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Returns a static name for a status code, e.g. `"ok"` or `"io"`.
#[no_mangle]
pub extern "C" fn cf_status_name(status: CfStatus) -> *const c_char {
    let name: &'static str = match status {
        CfStatus::Ok => "ok\0",
        CfStatus::NullPointer => "null pointer\0",
        CfStatus::InvalidArgument => "invalid argument\0",
        CfStatus::Io => "io\0",
        CfStatus::BadData => "bad data\0",
        CfStatus::Numerical => "numerical\0",
        CfStatus::Panic => "panic\0",
    };
    name.as_ptr().cast()
}

/// Returns the message of the most recent failure on the calling thread,
/// or an empty string if nothing has failed yet. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Loads a model checkpoint. The file records its own precision; the
/// returned handle dispatches to the right implementation internally.
/// On success, `*out_model` owns the model until `cf_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_model_load(
    path: *const c_char,
    out_model: *mut *mut CfModel,
) -> CfStatus {
    if path.is_null() {
        return null_arg("cf_model_load: path");
    }
    let Some(out_slot) = (unsafe { out_model.as_mut() }) else {
        return null_arg("cf_model_load: out_model");
    };
    guarded(|| {
        let raw = unsafe { CStr::from_ptr(path) };
        let text = raw.to_str().map_err(|_| {
            Error::InvalidArgument("cf_model_load: path is not valid UTF-8".into())
        })?;
        let path = Path::new(text);
        let inner = match peek_dtype(path)? {
            Dtype::F32 => ModelImpl::F32(load_model::<f32>(path)?),
            Dtype::F64 => ModelImpl::F64(load_model::<f64>(path)?),
        };
        *out_slot = Box::into_raw(Box::new(CfModel { inner }));
        Ok(())
    })
}

/// Releases a model handle. A null handle is a no-op.
///
/// # Safety
/// `model` must have come from `cf_model_load` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cf_model_free(model: *mut CfModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Reports the precision the model was trained in.
///
/// # Safety
/// `model` must be a live handle and `out_precision` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_model_precision(
    model: *const CfModel,
    out_precision: *mut CfPrecision,
) -> CfStatus {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return null_arg("cf_model_precision: model");
    };
    let Some(out) = (unsafe { out_precision.as_mut() }) else {
        return null_arg("cf_model_precision: out_precision");
    };
    *out = model.precision();
    CfStatus::Ok
}

/// Reports the length of the model's shape-embedding vector.
///
/// # Safety
/// `model` must be a live handle and `out_dim` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_model_embed_dim(
    model: *const CfModel,
    out_dim: *mut usize,
) -> CfStatus {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return null_arg("cf_model_embed_dim: model");
    };
    let Some(out) = (unsafe { out_dim.as_mut() }) else {
        return null_arg("cf_model_embed_dim: out_dim");
    };
    *out = model.embed_dim();
    CfStatus::Ok
}

/// Draws a new cloud from the model. `temperature` scales the embedding
/// prior (1.0 reproduces training conditions, 0.0 gives the mean shape).
/// The same seed always produces the same cloud.
///
/// # Safety
/// `model` must be a live handle and `out_xyz` must have room for
/// `3 * n_points` doubles.
#[no_mangle]
pub unsafe extern "C" fn cf_model_sample(
    model: *const CfModel,
    n_points: usize,
    temperature: f64,
    seed: u64,
    out_xyz: *mut f64,
) -> CfStatus {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return null_arg("cf_model_sample: model");
    };
    if out_xyz.is_null() {
        return null_arg("cf_model_sample: out_xyz");
    }
    guarded(|| {
        let flat = model.sample(n_points, temperature, seed)?;
        unsafe { write_out(&flat, out_xyz) };
        Ok(())
    })
}

/// Encodes `in_xyz` and decodes a fresh cloud of `out_points` points from
/// the same embedding.
///
/// # Safety
/// `model` must be a live handle, `in_xyz` must hold `3 * in_points`
/// doubles, and `out_xyz` must have room for `3 * out_points` doubles.
#[no_mangle]
pub unsafe extern "C" fn cf_model_reconstruct(
    model: *const CfModel,
    in_xyz: *const f64,
    in_points: usize,
    out_points: usize,
    seed: u64,
    out_xyz: *mut f64,
) -> CfStatus {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return null_arg("cf_model_reconstruct: model");
    };
    if in_xyz.is_null() {
        return null_arg("cf_model_reconstruct: in_xyz");
    }
    if out_xyz.is_null() {
        return null_arg("cf_model_reconstruct: out_xyz");
    }
    guarded(|| {
        let cloud = unsafe { xyz_slice(in_xyz, in_points, "cf_model_reconstruct") }?;
        let flat = model.reconstruct(cloud, out_points, seed)?;
        unsafe { write_out(&flat, out_xyz) };
        Ok(())
    })
}

/// Writes the shape embedding of a cloud into `out_embedding`, which must
/// hold `cf_model_embed_dim` doubles.
///
/// # Safety
/// `model` must be a live handle, `in_xyz` must hold `3 * n_points`
/// doubles, and `out_embedding` must have room for the embedding.
#[no_mangle]
pub unsafe extern "C" fn cf_model_embed(
    model: *const CfModel,
    in_xyz: *const f64,
    n_points: usize,
    out_embedding: *mut f64,
) -> CfStatus {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return null_arg("cf_model_embed: model");
    };
    if in_xyz.is_null() {
        return null_arg("cf_model_embed: in_xyz");
    }
    if out_embedding.is_null() {
        return null_arg("cf_model_embed: out_embedding");
    }
    guarded(|| {
        let cloud = unsafe { xyz_slice(in_xyz, n_points, "cf_model_embed") }?;
        let (e, _) = model.embed(cloud)?;
        unsafe { write_out(&e, out_embedding) };
        Ok(())
    })
}

/// Scores how unusual a cloud's shape is: the negative log-likelihood of
/// its embedding under the model's prior. Higher means rarer; this is the
/// quantity used for outlier ranking.
///
/// # Safety
/// `model` must be a live handle, `in_xyz` must hold `3 * n_points`
/// doubles, and `out_nll` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_model_embedding_nll(
    model: *const CfModel,
    in_xyz: *const f64,
    n_points: usize,
    out_nll: *mut f64,
) -> CfStatus {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return null_arg("cf_model_embedding_nll: model");
    };
    if in_xyz.is_null() {
        return null_arg("cf_model_embedding_nll: in_xyz");
    }
    if out_nll.is_null() {
        return null_arg("cf_model_embedding_nll: out_nll");
    }
    guarded(|| {
        let cloud = unsafe { xyz_slice(in_xyz, n_points, "cf_model_embedding_nll") }?;
        let (_, logp) = model.embed(cloud)?;
        unsafe { *out_nll = -logp };
        Ok(())
    })
}

/// Recovers the canonical pose of a cloud by minimizing its point NLL over
/// rotations, with `restarts` optimizer starts (0 means the default of 4;
/// the first start is always the identity). Writes the recovered rotation
/// as an axis-angle triple into `out_axis_angle`. `out_aligned_xyz` (room
/// for `3 * n_points` doubles), `out_nll`, and `out_identity_nll` may each
/// be null if the caller does not need them.
///
/// # Safety
/// `model` must be a live handle, `in_xyz` must hold `3 * n_points`
/// doubles, `out_axis_angle` must have room for 3 doubles, and the
/// optional pointers must be valid when non-null.
#[no_mangle]
pub unsafe extern "C" fn cf_model_align(
    model: *const CfModel,
    in_xyz: *const f64,
    n_points: usize,
    restarts: usize,
    max_generations: usize,
    seed: u64,
    out_axis_angle: *mut f64,
    out_aligned_xyz: *mut f64,
    out_nll: *mut f64,
    out_identity_nll: *mut f64,
) -> CfStatus {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return null_arg("cf_model_align: model");
    };
    if in_xyz.is_null() {
        return null_arg("cf_model_align: in_xyz");
    }
    if out_axis_angle.is_null() {
        return null_arg("cf_model_align: out_axis_angle");
    }
    guarded(|| {
        let cloud = unsafe { xyz_slice(in_xyz, n_points, "cf_model_align") }?;
        let defaults = AlignConfig::default();
        let cfg = AlignConfig {
            restarts: if restarts == 0 { defaults.restarts } else { restarts },
            max_generations: if max_generations == 0 {
                defaults.max_generations
            } else {
                max_generations
            },
            seed,
            ..defaults
        };
        let result = model.align(cloud, &cfg)?;
        unsafe { write_out(&result.axis_angle, out_axis_angle) };
        if !out_aligned_xyz.is_null() {
            unsafe { write_out(&result.aligned, out_aligned_xyz) };
        }
        if !out_nll.is_null() {
            unsafe { *out_nll = result.nll };
        }
        if !out_identity_nll.is_null() {
            unsafe { *out_identity_nll = result.identity_nll };
        }
        Ok(())
    })
}

/// Chamfer distance between two clouds: the mean squared distance to the
/// nearest neighbor, taken in both directions and summed. The clouds may
/// have different sizes.
///
/// # Safety
/// `a_xyz` and `b_xyz` must hold `3 * a_points` and `3 * b_points` doubles
/// and `out_distance` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_chamfer(
    a_xyz: *const f64,
    a_points: usize,
    b_xyz: *const f64,
    b_points: usize,
    out_distance: *mut f64,
) -> CfStatus {
    if a_xyz.is_null() {
        return null_arg("cf_chamfer: a_xyz");
    }
    if b_xyz.is_null() {
        return null_arg("cf_chamfer: b_xyz");
    }
    if out_distance.is_null() {
        return null_arg("cf_chamfer: out_distance");
    }
    guarded(|| {
        let a = PointCloud::from_flat(unsafe { xyz_slice(a_xyz, a_points, "cf_chamfer") }?)?;
        let b = PointCloud::from_flat(unsafe { xyz_slice(b_xyz, b_points, "cf_chamfer") }?)?;
        unsafe { *out_distance = chamfer(&a, &b)? };
        Ok(())
    })
}

/// Earth-mover distance between two equal-sized clouds: the mean pointwise
/// distance under the exact minimum-cost matching.
///
/// # Safety
/// `a_xyz` and `b_xyz` must hold `3 * a_points` and `3 * b_points` doubles
/// and `out_distance` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_emd(
    a_xyz: *const f64,
    a_points: usize,
    b_xyz: *const f64,
    b_points: usize,
    out_distance: *mut f64,
) -> CfStatus {
    if a_xyz.is_null() {
        return null_arg("cf_emd: a_xyz");
    }
    if b_xyz.is_null() {
        return null_arg("cf_emd: b_xyz");
    }
    if out_distance.is_null() {
        return null_arg("cf_emd: out_distance");
    }
    guarded(|| {
        let a = PointCloud::from_flat(unsafe { xyz_slice(a_xyz, a_points, "cf_emd") }?)?;
        let b = PointCloud::from_flat(unsafe { xyz_slice(b_xyz, b_points, "cf_emd") }?)?;
        unsafe { *out_distance = emd(&a, &b)? };
        Ok(())
    })
}
