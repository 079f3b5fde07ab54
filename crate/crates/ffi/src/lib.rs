//! C ABI over the `polyfield` library.
//!
//! Objects cross the boundary as opaque handles (`PfScene`, `PfImage`,
//! `PfField`) that the caller releases with the matching `*_free`
//! function. Every fallible function returns a [`PfStatus`]; on failure a
//! description is available from [`pf_last_error`] on the same thread.
//! Output pointers are written only on success. Panics are caught at the
//! boundary and reported as `PF_STATUS_PANIC`.
//!
//! The header `include/polyfield.h` is generated by the build script.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use polyfield::dataset;
use polyfield::geometry::Scene;
use polyfield::groundtruth::{self, FieldParams};
use polyfield::metrics;
use polyfield::polyvector::{self, Coefficients, PolyVectorField};
use polyfield::raster::RasterImage;
use polyfield::variational::{self, SolveConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numerical = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// A parsed scene.
pub struct PfScene(Scene);

/// A grayscale raster image with intensities in `[0, 1]`.
pub struct PfImage(RasterImage);

/// A 2-PolyVector field: four channels `[Re c0, Im c0, Re c2, Im c2]` per
/// pixel plus a definition mask.
pub struct PfField(PolyVectorField);

/// Ground-truth construction parameters. Obtain defaults from
/// [`pf_field_params_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PfFieldParams {
    pub d_near: f64,
    pub d_far: f64,
    pub sigma: f64,
    pub threshold: f64,
    pub stroke_width: f64,
    pub intersection_tol: f64,
}

/// Variational solver settings. `sigma <= 0` disables target smoothing.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PfSolveConfig {
    pub gamma: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub threshold: f64,
    pub sigma: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PfEvalReport {
    pub mse: f64,
    pub smoothness: f64,
    pub regularized: f64,
    pub gamma: f64,
    pub defined_pixels: usize,
    pub alignment_sum: f64,
    pub regularized_sum: f64,
}

impl From<PfFieldParams> for FieldParams {
    fn from(p: PfFieldParams) -> Self {
        FieldParams {
            d_near: p.d_near,
            d_far: p.d_far,
            sigma: p.sigma,
            threshold: p.threshold,
            stroke_width: p.stroke_width,
            intersection_tol: p.intersection_tol,
        }
    }
}

impl From<FieldParams> for PfFieldParams {
    fn from(p: FieldParams) -> Self {
        PfFieldParams {
            d_near: p.d_near,
            d_far: p.d_far,
            sigma: p.sigma,
            threshold: p.threshold,
            stroke_width: p.stroke_width,
            intersection_tol: p.intersection_tol,
        }
    }
}

impl From<PfSolveConfig> for SolveConfig {
    fn from(c: PfSolveConfig) -> Self {
        SolveConfig {
            gamma: c.gamma,
            max_iters: c.max_iters,
            tol: c.tol,
            threshold: c.threshold,
            sigma: (c.sigma > 0.0).then_some(c.sigma),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(PfStatus, String);

fn fail<T>(status: PfStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn set_last_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> PfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => PfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            PfStatus::Panic
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    match p.as_ref() {
        Some(r) => Ok(r),
        None => fail(PfStatus::NullPointer, format!("{what} is null")),
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    match p.as_mut() {
        Some(r) => Ok(r),
        None => fail(PfStatus::NullPointer, format!("{what} is null")),
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(PfStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(PfStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn c_path(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    c_str(p, what).map(PathBuf::from)
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

fn pvf_failure(e: dataset::PvfError) -> Failure {
    match e {
        dataset::PvfError::Io(_) => Failure(PfStatus::Io, e.to_string()),
        dataset::PvfError::Format { .. } => Failure(PfStatus::Format, e.to_string()),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message describing the most recent failure on the calling thread, or an
/// empty string. The pointer stays valid until the next failing call on
/// this thread.
#[no_mangle]
pub extern "C" fn pf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn pf_field_params_default() -> PfFieldParams {
    FieldParams::default().into()
}

#[no_mangle]
pub extern "C" fn pf_solve_config_default() -> PfSolveConfig {
    let c = SolveConfig::default();
    PfSolveConfig {
        gamma: c.gamma,
        max_iters: c.max_iters,
        tol: c.tol,
        threshold: c.threshold,
        sigma: c.sigma.unwrap_or(0.0),
    }
}

/// Coefficients of the direction pair `(alpha, beta)` written to
/// `out_channels[0..4]`.
///
/// # Safety
/// `out_channels` must point to four writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pf_encode(alpha: f64, beta: f64, out_channels: *mut f64) -> PfStatus {
    guard(|| {
        if !(alpha.is_finite() && beta.is_finite()) {
            return fail(PfStatus::InvalidArgument, "angles must be finite");
        }
        out(out_channels, "out_channels")?;
        let ch = polyvector::encode_angles(alpha, beta).to_channels();
        ptr::copy_nonoverlapping(ch.as_ptr(), out_channels, 4);
        Ok(())
    })
}

/// Canonical direction pair of the four channels, with
/// `0 <= alpha <= beta < pi`.
///
/// # Safety
/// `channels` must point to four readable doubles; the outputs must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn pf_decode(
    channels: *const f64,
    out_alpha: *mut f64,
    out_beta: *mut f64,
) -> PfStatus {
    guard(|| {
        handle(channels, "channels")?;
        let (a, b) = (out(out_alpha, "out_alpha")?, out(out_beta, "out_beta")?);
        let mut ch = [0.0; 4];
        ptr::copy_nonoverlapping(channels, ch.as_mut_ptr(), 4);
        if !ch.iter().all(|v| v.is_finite()) {
            return fail(PfStatus::InvalidArgument, "channels must be finite");
        }
        let pair = polyvector::decode(Coefficients::from_channels(ch));
        *a = pair.alpha;
        *b = pair.beta;
        Ok(())
    })
}

/// Parses a scene from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out_scene` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_scene_from_json(json: *const c_char, out_scene: *mut *mut PfScene) -> PfStatus {
    guard(|| {
        let text = c_str(json, "json")?;
        let slot = out(out_scene, "out_scene")?;
        let scene = Scene::from_json(text).map_err(|e| Failure(PfStatus::Format, e.to_string()))?;
        *slot = boxed(PfScene(scene));
        Ok(())
    })
}

/// # Safety
/// `scene` must be a live handle and `out_count` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_scene_primitive_count(scene: *const PfScene, out_count: *mut usize) -> PfStatus {
    guard(|| {
        let s = handle(scene, "scene")?;
        *out(out_count, "out_count")? = s.0.primitives.len();
        Ok(())
    })
}

/// # Safety
/// `scene` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pf_scene_free(scene: *mut PfScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Renders `scene` and builds its ground-truth field. `params` may be null
/// for defaults; `out_image` may be null if the image is not wanted.
///
/// # Safety
/// Non-null pointers must be valid for their access.
#[no_mangle]
pub unsafe extern "C" fn pf_ground_truth(
    scene: *const PfScene,
    params: *const PfFieldParams,
    out_image: *mut *mut PfImage,
    out_field: *mut *mut PfField,
) -> PfStatus {
    guard(|| {
        let s = handle(scene, "scene")?;
        let field_slot = out(out_field, "out_field")?;
        let params = params.as_ref().map_or_else(FieldParams::default, |p| (*p).into());
        params
            .validate()
            .map_err(|e| Failure(PfStatus::InvalidArgument, e.to_string()))?;
        let gt = groundtruth::build_field(&s.0, &params)
            .map_err(|e| Failure(PfStatus::Numerical, e.to_string()))?;
        if let Some(slot) = out_image.as_mut() {
            *slot = boxed(PfImage(gt.image));
        }
        *field_slot = boxed(PfField(gt.field));
        Ok(())
    })
}

/// Image from `width * height` row-major intensities, clamped to `[0, 1]`.
///
/// # Safety
/// `data` must point to `width * height` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn pf_image_from_data(
    width: u32,
    height: u32,
    data: *const f64,
    out_image: *mut *mut PfImage,
) -> PfStatus {
    guard(|| {
        handle(data, "data")?;
        let slot = out(out_image, "out_image")?;
        let n = (width as usize)
            .checked_mul(height as usize)
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure(PfStatus::InvalidArgument, "image must have a positive size".into()))?;
        let values = std::slice::from_raw_parts(data, n).to_vec();
        let img = RasterImage::from_data(width, height, values)
            .map_err(|e| Failure(PfStatus::InvalidArgument, e.to_string()))?;
        *slot = boxed(PfImage(img));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out_image` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_image_read_png(path: *const c_char, out_image: *mut *mut PfImage) -> PfStatus {
    guard(|| {
        let path = c_path(path, "path")?;
        let slot = out(out_image, "out_image")?;
        let img = RasterImage::read_png(&path).map_err(|e| match e {
            polyfield::raster::RasterError::Io(_) => Failure(PfStatus::Io, e.to_string()),
            other => Failure(PfStatus::Format, other.to_string()),
        })?;
        *slot = boxed(PfImage(img));
        Ok(())
    })
}

/// # Safety
/// `image` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pf_image_write_png(image: *const PfImage, path: *const c_char) -> PfStatus {
    guard(|| {
        let img = handle(image, "image")?;
        let path = c_path(path, "path")?;
        img.0
            .write_png(&path)
            .map_err(|e| Failure(PfStatus::Io, e.to_string()))
    })
}

/// # Safety
/// `image` must be a live handle and the outputs writable.
#[no_mangle]
pub unsafe extern "C" fn pf_image_dims(image: *const PfImage, out_width: *mut u32, out_height: *mut u32) -> PfStatus {
    guard(|| {
        let img = handle(image, "image")?;
        *out(out_width, "out_width")? = img.0.width();
        *out(out_height, "out_height")? = img.0.height();
        Ok(())
    })
}

/// # Safety
/// `image` must be a live handle and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_image_get(image: *const PfImage, x: u32, y: u32, out_value: *mut f64) -> PfStatus {
    guard(|| {
        let img = handle(image, "image")?;
        let slot = out(out_value, "out_value")?;
        if x >= img.0.width() || y >= img.0.height() {
            return fail(PfStatus::OutOfRange, format!("pixel ({x}, {y}) outside image"));
        }
        *slot = img.0.get(x, y);
        Ok(())
    })
}

/// # Safety
/// `image` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pf_image_free(image: *mut PfImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Reads a PVF1 field file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_field` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_field_read(path: *const c_char, out_field: *mut *mut PfField) -> PfStatus {
    guard(|| {
        let path = c_path(path, "path")?;
        let slot = out(out_field, "out_field")?;
        let field = dataset::read_field(&path).map_err(pvf_failure)?;
        *slot = boxed(PfField(field));
        Ok(())
    })
}

/// Writes a PVF1 field file; channels are stored as 32-bit floats.
///
/// # Safety
/// `field` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pf_field_write(field: *const PfField, path: *const c_char) -> PfStatus {
    guard(|| {
        let f = handle(field, "field")?;
        let path = c_path(path, "path")?;
        dataset::write_field(&f.0, &path).map_err(pvf_failure)
    })
}

/// # Safety
/// `field` must be a live handle and the outputs writable.
#[no_mangle]
pub unsafe extern "C" fn pf_field_dims(field: *const PfField, out_width: *mut u32, out_height: *mut u32) -> PfStatus {
    guard(|| {
        let f = handle(field, "field")?;
        *out(out_width, "out_width")? = f.0.width();
        *out(out_height, "out_height")? = f.0.height();
        Ok(())
    })
}

/// # Safety
/// `field` must be a live handle and `out_count` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_field_defined_count(field: *const PfField, out_count: *mut usize) -> PfStatus {
    guard(|| {
        let f = handle(field, "field")?;
        *out(out_count, "out_count")? = f.0.defined_count();
        Ok(())
    })
}

/// Channels of pixel `(x, y)`; all zero where the pixel is undefined.
///
/// # Safety
/// `field` must be a live handle, `out_channels` must point to four
/// writable doubles and `out_defined` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pf_field_get(
    field: *const PfField,
    x: u32,
    y: u32,
    out_channels: *mut f64,
    out_defined: *mut bool,
) -> PfStatus {
    guard(|| {
        let f = handle(field, "field")?;
        out(out_channels, "out_channels")?;
        let defined = out(out_defined, "out_defined")?;
        if x >= f.0.width() || y >= f.0.height() {
            return fail(PfStatus::OutOfRange, format!("pixel ({x}, {y}) outside field"));
        }
        let ch = f.0.channels(x, y);
        ptr::copy_nonoverlapping(ch.as_ptr(), out_channels, 4);
        *defined = f.0.is_defined(x, y);
        Ok(())
    })
}

/// # Safety
/// `field` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pf_field_free(field: *mut PfField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Estimates a field from `image` with the variational solver. `config`
/// may be null for defaults; `out_iterations` and `out_energy` may be null.
///
/// # Safety
/// Non-null pointers must be valid for their access.
#[no_mangle]
pub unsafe extern "C" fn pf_solve(
    image: *const PfImage,
    config: *const PfSolveConfig,
    out_field: *mut *mut PfField,
    out_iterations: *mut usize,
    out_energy: *mut f64,
) -> PfStatus {
    guard(|| {
        let img = handle(image, "image")?;
        let slot = out(out_field, "out_field")?;
        let config: SolveConfig = config.as_ref().map_or_else(SolveConfig::default, |c| (*c).into());
        config
            .validate()
            .map_err(|e| Failure(PfStatus::InvalidArgument, e.to_string()))?;
        let result = variational::solve(&img.0, &config)
            .map_err(|e| Failure(PfStatus::Numerical, e.to_string()))?;
        if let Some(it) = out_iterations.as_mut() {
            *it = result.iterations;
        }
        if let Some(e) = out_energy.as_mut() {
            *e = result.final_energy();
        }
        *slot = boxed(PfField(result.field));
        Ok(())
    })
}

/// Compares `pred` with `gt` over the ground truth's defined pixels.
///
/// # Safety
/// `pred` and `gt` must be live handles and `out_report` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_eval(
    pred: *const PfField,
    gt: *const PfField,
    gamma: f64,
    out_report: *mut PfEvalReport,
) -> PfStatus {
    guard(|| {
        let (p, g) = (handle(pred, "pred")?, handle(gt, "gt")?);
        let slot = out(out_report, "out_report")?;
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return fail(PfStatus::InvalidArgument, "gamma must be a non-negative number");
        }
        let r = metrics::regularized_loss(&p.0, &g.0, gamma).map_err(|e| match e {
            metrics::MetricsError::Field(_) => Failure(PfStatus::InvalidArgument, e.to_string()),
            metrics::MetricsError::EmptyMask => Failure(PfStatus::Numerical, e.to_string()),
        })?;
        *slot = PfEvalReport {
            mse: r.mse,
            smoothness: r.smoothness,
            regularized: r.regularized,
            gamma: r.gamma,
            defined_pixels: r.defined_pixels,
            alignment_sum: r.alignment_sum,
            regularized_sum: r.regularized_sum,
        };
        Ok(())
    })
}
