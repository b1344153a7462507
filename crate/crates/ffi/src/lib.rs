//! C ABI over `hsisel`.
//!
//! Objects cross the boundary as opaque handles created by `hsi_*_new`,
//! `hsi_*_load` or a computation, and released with the matching
//! `hsi_*_free`. Every fallible call returns an [`HsiStatus`]; on failure the
//! message is available from [`hsi_last_error_message`] on the same thread.
//! Strings returned by the library are freed with [`hsi_string_free`].
//! Panics never unwind across the boundary; they surface as
//! `HSI_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use hsisel::cube_io::{load_cube, load_mask, CubeHeader, Hypercube, LabelMask};
use hsisel::metrics::{class_metrics, ConfusionMatrix};
use hsisel::pca::{fit_pca, PcaModel};
use hsisel::pseudorgb::{render_pseudo_rgb, RenderConfig, RenderSource};
use hsisel::selection::{select_bands_in_memory, SelectionConfig, SelectionResult};
use hsisel::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsiStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Argument out of range, mismatched shapes or invalid configuration.
    InvalidArgument = 2,
    /// File could not be read or written.
    Io = 3,
    /// Malformed header, raster, image or JSON.
    Format = 4,
    /// Data too small or degenerate for the requested computation.
    InsufficientData = 5,
    /// Caller-provided output buffer is too small.
    BufferTooSmall = 6,
    Panic = 7,
}

pub struct HsiCube(Hypercube);
pub struct HsiMask(LabelMask);
pub struct HsiSelection(SelectionResult);
pub struct HsiPcaModel(PcaModel);
pub struct HsiConfusion(ConfusionMatrix);

/// Per-class scores in percent.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HsiClassMetrics {
    pub iou: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub support: u64,
    /// Non-zero when the class has no ground-truth and no predicted pixels.
    pub absent: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HsiStatus {
    match e {
        Error::Io { .. } => HsiStatus::Io,
        Error::MissingField(_)
        | Error::InvalidField { .. }
        | Error::WavelengthCountMismatch { .. }
        | Error::NonMonotonicWavelengths { .. }
        | Error::SizeMismatch { .. }
        | Error::NanInInput { .. }
        | Error::BadMagic(_)
        | Error::DimensionOverflow { .. }
        | Error::Json(_)
        | Error::Csv(_) => HsiStatus::Format,
        Error::InsufficientSamples { .. }
        | Error::TooFewRows { .. }
        | Error::EmptyScoreTable
        | Error::EmptyWindow { .. }
        | Error::NoIncludedClasses => HsiStatus::InsufficientData,
        Error::LabelOutOfRange { .. }
        | Error::EmptyCubeList
        | Error::DimensionMismatch(_)
        | Error::BandMismatch { .. }
        | Error::LengthMismatch(..)
        | Error::IndexOutOfRange { .. }
        | Error::KeyMismatch(_)
        | Error::InvalidConfig(_)
        | Error::DuplicatePath(_) => HsiStatus::InvalidArgument,
    }
}

/// Failure inside a wrapper: a status plus its message.
struct Fail(HsiStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: HsiStatus, msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail(status, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HsiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            HsiStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            HsiStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail(HsiStatus::NullPointer, format!("{what} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| Fail(HsiStatus::NullPointer, format!("{what} is null")))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    let s = CStr::from_ptr(deref(p, what)?);
    s.to_str()
        .map_err(|_| Fail(HsiStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    Ok(std::slice::from_raw_parts(deref(p, what)?, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    let slot = deref_mut(out, "output handle")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into the library on this
/// thread.
#[no_mangle]
pub extern "C" fn hsi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hsi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn hsi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- cubes

/// Load an ENVI cube from its `.hdr` path.
///
/// # Safety
/// `header_path` must be a NUL-terminated string; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hsi_cube_load(header_path: *const c_char, out: *mut *mut HsiCube) -> HsiStatus {
    guard(|| {
        let path = PathBuf::from(c_str(header_path, "header_path")?);
        put(out, HsiCube(load_cube(&path)?))
    })
}

/// Build a cube from `height * width * bands` values in `(y, x, band)` order.
///
/// # Safety
/// `wavelengths` must hold `bands` values and `data` `height * width * bands`.
#[no_mangle]
pub unsafe extern "C" fn hsi_cube_from_data(
    width: usize,
    height: usize,
    bands: usize,
    wavelengths: *const f64,
    data: *const f32,
    out: *mut *mut HsiCube,
) -> HsiStatus {
    guard(|| {
        let grid = slice(wavelengths, bands, "wavelengths")?.to_vec();
        let n = width
            .checked_mul(height)
            .and_then(|p| p.checked_mul(bands))
            .ok_or_else(|| Fail(HsiStatus::InvalidArgument, "cube size overflows".into()))?;
        let values = slice(data, n, "data")?.to_vec();
        let header = CubeHeader::new(height, width, grid)?;
        put(out, HsiCube(Hypercube::from_parts(header, values)?))
    })
}

/// # Safety
/// `cube` must be a live handle; the outputs writable or null.
#[no_mangle]
pub unsafe extern "C" fn hsi_cube_dims(
    cube: *const HsiCube,
    width: *mut usize,
    height: *mut usize,
    bands: *mut usize,
) -> HsiStatus {
    guard(|| {
        let c = &deref(cube, "cube")?.0;
        for (p, v) in [(width, c.width()), (height, c.height()), (bands, c.bands())] {
            if let Some(slot) = p.as_mut() {
                *slot = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `cube` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hsi_cube_free(cube: *mut HsiCube) {
    free(cube)
}

// ---- masks

/// Load a PGM (P5, maxval 255) label mask.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hsi_mask_load(path: *const c_char, out: *mut *mut HsiMask) -> HsiStatus {
    guard(|| {
        let path = PathBuf::from(c_str(path, "path")?);
        put(out, HsiMask(load_mask(&path, false)?))
    })
}

/// # Safety
/// `labels` must hold `width * height` bytes, row-major.
#[no_mangle]
pub unsafe extern "C" fn hsi_mask_from_labels(
    width: usize,
    height: usize,
    labels: *const u8,
    out: *mut *mut HsiMask,
) -> HsiStatus {
    guard(|| {
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Fail(HsiStatus::InvalidArgument, "mask size overflows".into()))?;
        let labels = slice(labels, n, "labels")?.to_vec();
        put(out, HsiMask(LabelMask::new(width, height, labels)?))
    })
}

/// # Safety
/// `mask` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hsi_mask_free(mask: *mut HsiMask) {
    free(mask)
}

// ---- band selection

/// Select bands from `count` cube/mask pairs. `config_json` may be null for
/// defaults; otherwise it is a selection config object (unknown keys are
/// rejected).
///
/// # Safety
/// `cubes` and `masks` must each hold `count` live handles.
#[no_mangle]
pub unsafe extern "C" fn hsi_select_bands(
    cubes: *const *const HsiCube,
    masks: *const *const HsiMask,
    count: usize,
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut HsiSelection,
) -> HsiStatus {
    guard(|| {
        let cfg: SelectionConfig = if config_json.is_null() {
            SelectionConfig::default()
        } else {
            SelectionConfig::from_json(c_str(config_json, "config_json")?)?
        };
        let cubes = slice(cubes, count, "cubes")?;
        let masks = slice(masks, count, "masks")?;
        let mut pairs = Vec::with_capacity(count);
        for (&c, &m) in cubes.iter().zip(masks) {
            pairs.push((&deref(c, "cube")?.0, &deref(m, "mask")?.0));
        }
        put(out, HsiSelection(select_bands_in_memory(&pairs, &cfg, seed)?))
    })
}

/// Number of chosen bands.
///
/// # Safety
/// `sel` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hsi_selection_len(sel: *const HsiSelection, len: *mut usize) -> HsiStatus {
    guard(|| {
        *deref_mut(len, "len")? = deref(sel, "selection")?.0.chosen.len();
        Ok(())
    })
}

/// Copy the chosen band indices, in selection order, into `bands`.
///
/// # Safety
/// `bands` must have room for `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn hsi_selection_bands(
    sel: *const HsiSelection,
    bands: *mut usize,
    capacity: usize,
) -> HsiStatus {
    guard(|| {
        let chosen = &deref(sel, "selection")?.0.chosen;
        if capacity < chosen.len() {
            return fail(
                HsiStatus::BufferTooSmall,
                format!("need {} slots, got {capacity}", chosen.len()),
            );
        }
        let out = std::slice::from_raw_parts_mut(deref_mut(bands, "bands")?, chosen.len());
        for (o, c) in out.iter_mut().zip(chosen) {
            *o = c.band;
        }
        Ok(())
    })
}

/// Selection as JSON; free with [`hsi_string_free`].
///
/// # Safety
/// `sel` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hsi_selection_to_json(sel: *const HsiSelection, out: *mut *mut c_char) -> HsiStatus {
    guard(|| {
        *deref_mut(out, "out")? = to_c_string(deref(sel, "selection")?.0.to_json());
        Ok(())
    })
}

/// # Safety
/// `sel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hsi_selection_free(sel: *mut HsiSelection) {
    free(sel)
}

// ---- PCA

/// Fit `k` components on `samples_per_cube` pixels drawn from each cube.
///
/// # Safety
/// `cubes` must hold `count` live handles.
#[no_mangle]
pub unsafe extern "C" fn hsi_pca_fit(
    cubes: *const *const HsiCube,
    count: usize,
    k: usize,
    standardize: bool,
    samples_per_cube: usize,
    seed: u64,
    out: *mut *mut HsiPcaModel,
) -> HsiStatus {
    guard(|| {
        let handles = slice(cubes, count, "cubes")?;
        let mut refs = Vec::with_capacity(count);
        for &c in handles {
            refs.push(&deref(c, "cube")?.0);
        }
        let pixels = hsisel::cube_io::sample_pixels(&refs, samples_per_cube, seed)?;
        let mut model = fit_pca(&pixels, k, standardize)?;
        model.seed = Some(seed);
        model.samples_per_cube = Some(samples_per_cube);
        put(out, HsiPcaModel(model))
    })
}

/// Parse a model previously written as JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hsi_pca_from_json(json: *const c_char, out: *mut *mut HsiPcaModel) -> HsiStatus {
    guard(|| put(out, HsiPcaModel(PcaModel::from_json(c_str(json, "json")?)?)))
}

/// Model as JSON; free with [`hsi_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hsi_pca_to_json(model: *const HsiPcaModel, out: *mut *mut c_char) -> HsiStatus {
    guard(|| {
        *deref_mut(out, "out")? = to_c_string(deref(model, "model")?.0.to_json());
        Ok(())
    })
}

/// Copy the explained variance of each component into `values`.
///
/// # Safety
/// `values` must have room for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn hsi_pca_explained_variance(
    model: *const HsiPcaModel,
    values: *mut f64,
    capacity: usize,
) -> HsiStatus {
    guard(|| {
        let ev = &deref(model, "model")?.0.explained_variance;
        if capacity < ev.len() {
            return fail(
                HsiStatus::BufferTooSmall,
                format!("need {} slots, got {capacity}", ev.len()),
            );
        }
        std::slice::from_raw_parts_mut(deref_mut(values, "values")?, ev.len()).copy_from_slice(ev);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hsi_pca_free(model: *mut HsiPcaModel) {
    free(model)
}

// ---- pseudo-RGB

unsafe fn render_into(
    cube: *const HsiCube,
    source: RenderSource<'_>,
    half_width: f64,
    rgb: *mut u8,
    capacity: usize,
) -> Result<(), Fail> {
    let cube = &deref(cube, "cube")?.0;
    let cfg = RenderConfig {
        half_width,
        ..RenderConfig::default()
    };
    let img = render_pseudo_rgb(cube, source, &cfg)?;
    let n = img.width * img.height;
    if capacity < n * 3 {
        return fail(
            HsiStatus::BufferTooSmall,
            format!("need {} bytes, got {capacity}", n * 3),
        );
    }
    let out = std::slice::from_raw_parts_mut(deref_mut(rgb, "rgb")?, n * 3);
    for i in 0..n {
        out[3 * i..3 * i + 3].copy_from_slice(&[img.planes[0][i], img.planes[1][i], img.planes[2][i]]);
    }
    Ok(())
}

/// Render interleaved 8-bit RGB from a 3-band selection into `rgb`
/// (`width * height * 3` bytes), using percentile normalization.
///
/// # Safety
/// Handles must be live; `rgb` must have room for `capacity` bytes.
#[no_mangle]
pub unsafe extern "C" fn hsi_render_selection(
    cube: *const HsiCube,
    sel: *const HsiSelection,
    half_width: f64,
    rgb: *mut u8,
    capacity: usize,
) -> HsiStatus {
    guard(|| {
        let sel = &deref(sel, "selection")?.0;
        render_into(cube, RenderSource::Selection(sel), half_width, rgb, capacity)
    })
}

/// Render interleaved 8-bit RGB from the first three principal components.
///
/// # Safety
/// Handles must be live; `rgb` must have room for `capacity` bytes.
#[no_mangle]
pub unsafe extern "C" fn hsi_render_pca(
    cube: *const HsiCube,
    model: *const HsiPcaModel,
    rgb: *mut u8,
    capacity: usize,
) -> HsiStatus {
    guard(|| {
        let model = &deref(model, "model")?.0;
        render_into(cube, RenderSource::Pca(model), 0.0, rgb, capacity)
    })
}

// ---- confusion matrices

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hsi_confusion_new(num_classes: usize, out: *mut *mut HsiConfusion) -> HsiStatus {
    guard(|| {
        if num_classes == 0 || num_classes > 255 {
            return fail(HsiStatus::InvalidArgument, "num_classes must be in 1..=255");
        }
        put(out, HsiConfusion(ConfusionMatrix::new(num_classes)))
    })
}

/// Add one predicted/ground-truth mask pair. On error the matrix is
/// unchanged.
///
/// # Safety
/// All handles must be live.
#[no_mangle]
pub unsafe extern "C" fn hsi_confusion_accumulate(
    cm: *mut HsiConfusion,
    pred: *const HsiMask,
    gt: *const HsiMask,
) -> HsiStatus {
    guard(|| {
        let cm = &mut deref_mut(cm, "confusion")?.0;
        cm.accumulate(&deref(pred, "pred")?.0, &deref(gt, "gt")?.0)?;
        Ok(())
    })
}

/// # Safety
/// `cm` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hsi_confusion_class_metrics(
    cm: *const HsiConfusion,
    class_id: u8,
    out: *mut HsiClassMetrics,
) -> HsiStatus {
    guard(|| {
        let cm = &deref(cm, "confusion")?.0;
        if class_id as usize >= cm.num_classes {
            return fail(
                HsiStatus::InvalidArgument,
                format!("class {class_id} >= {}", cm.num_classes),
            );
        }
        let m = class_metrics(cm, class_id);
        *deref_mut(out, "out")? = HsiClassMetrics {
            iou: m.iou,
            f1: m.f1,
            precision: m.precision,
            recall: m.recall,
            support: m.support,
            absent: i32::from(m.absent),
        };
        Ok(())
    })
}

/// # Safety
/// `cm` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hsi_confusion_free(cm: *mut HsiConfusion) {
    free(cm)
}
