//! C interface to the colorgan library.
//!
//! Every function returns a [`ColorganStatus`]. On failure a description is
//! kept per thread and can be read with [`colorgan_last_error`]. Images cross
//! the boundary as tightly packed, row-major 8-bit buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use colorgan::colorspace::{rgb_to_lab, RgbImage};
use colorgan::metrics::MetricReport;
use colorgan::trainer::Colorizer;
use colorgan::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorganStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotFound = 3,
    Decode = 4,
    Shape = 5,
    Config = 6,
    EmptyDataset = 7,
    Checkpoint = 8,
    Manifest = 9,
    NonFinite = 10,
    Io = 11,
    Panic = 12,
}

impl From<&Error> for ColorganStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::NotFound(_) => Self::NotFound,
            Error::Format { .. } => Self::Decode,
            Error::Shape(_) => Self::Shape,
            Error::Config(_) => Self::Config,
            Error::EmptyDataset(_) => Self::EmptyDataset,
            Error::NonFinite { .. } => Self::NonFinite,
            Error::Checkpoint(_) => Self::Checkpoint,
            Error::Manifest(_) => Self::Manifest,
            Error::Io(_) => Self::Io,
        }
    }
}

/// Opaque handle to a generator loaded from a checkpoint.
pub struct ColorganModel {
    colorizer: Colorizer,
}

/// Scores of one predicted image against its reference.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ColorganMetrics {
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
    pub uqi: f64,
    pub vif: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(ColorganStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure((&e).into(), e.to_string())
    }
}

fn fail<T>(status: ColorganStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, records any error or panic and converts it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ColorganStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ColorganStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            ColorganStatus::Panic
        }
    }
}

fn pixel_count(height: usize, width: usize, channels: usize) -> Result<usize, Failure> {
    if height == 0 || width == 0 {
        return fail(ColorganStatus::InvalidArgument, "image dimensions must be positive");
    }
    height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(channels))
        .map_or_else(
            || fail(ColorganStatus::InvalidArgument, "image dimensions overflow"),
            Ok,
        )
}

/// # Safety
/// `ptr` must be null or point to `len` readable bytes.
unsafe fn input<'a>(ptr: *const u8, len: usize, what: &str) -> Result<&'a [u8], Failure> {
    if ptr.is_null() {
        return fail(ColorganStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or point to `len` readable bytes.
unsafe fn rgb_image(ptr: *const u8, height: usize, width: usize, what: &str) -> Result<RgbImage, Failure> {
    let raw = input(ptr, pixel_count(height, width, 3)?, what)?;
    Ok(RgbImage::from_raw(height, width, raw.to_vec())?)
}

/// Text of the most recent error on this thread, or null after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn colorgan_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn colorgan_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads the generator stored in a training checkpoint.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
/// On success `*out` owns a model that must be released with
/// [`colorgan_model_free`].
#[no_mangle]
pub unsafe extern "C" fn colorgan_model_load(path: *const c_char, out: *mut *mut ColorganModel) -> ColorganStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(ColorganStatus::NullPointer, "path and out must not be null");
        }
        *out = std::ptr::null_mut();
        let path = match CStr::from_ptr(path).to_str() {
            Ok(p) => p,
            Err(_) => return fail(ColorganStatus::InvalidArgument, "path is not valid UTF-8"),
        };
        let colorizer = Colorizer::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(ColorganModel { colorizer }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`colorgan_model_load`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn colorgan_model_free(model: *mut ColorganModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Side length of the square images the model was trained on, or 0 for a
/// null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn colorgan_model_image_size(model: *const ColorganModel) -> usize {
    model.as_ref().map_or(0, |m| m.colorizer.image_size())
}

/// Colourizes an image. `channels` is 1 (gray) or 3 (RGB; only its
/// lightness is used). `out_rgb` receives `height * width * 3` bytes.
///
/// # Safety
/// `model` must be a live handle, `pixels` must hold
/// `height * width * channels` bytes and `out_rgb` must have room for
/// `height * width * 3` bytes.
#[no_mangle]
pub unsafe extern "C" fn colorgan_colorize(
    model: *mut ColorganModel,
    pixels: *const u8,
    height: usize,
    width: usize,
    channels: usize,
    out_rgb: *mut u8,
) -> ColorganStatus {
    guard(|| {
        let Some(model) = model.as_mut() else {
            return fail(ColorganStatus::NullPointer, "model is null");
        };
        if out_rgb.is_null() {
            return fail(ColorganStatus::NullPointer, "output buffer is null");
        }
        let raw = match channels {
            1 => input(pixels, pixel_count(height, width, 1)?, "pixels")?
                .iter()
                .flat_map(|&v| [v, v, v])
                .collect(),
            3 => input(pixels, pixel_count(height, width, 3)?, "pixels")?.to_vec(),
            n => {
                return fail(
                    ColorganStatus::InvalidArgument,
                    format!("channels must be 1 or 3, got {n}"),
                )
            }
        };
        let image = RgbImage::from_raw(height, width, raw)?;
        let rgb = model.colorizer.colorize(&image)?.to_raw();
        std::ptr::copy_nonoverlapping(rgb.as_ptr(), out_rgb, rgb.len());
        Ok(())
    })
}

/// Scores `predicted` against `reference`, both RGB of the same size.
///
/// # Safety
/// Both buffers must hold `height * width * 3` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn colorgan_metrics(
    predicted: *const u8,
    reference: *const u8,
    height: usize,
    width: usize,
    out: *mut ColorganMetrics,
) -> ColorganStatus {
    guard(|| {
        if out.is_null() {
            return fail(ColorganStatus::NullPointer, "out is null");
        }
        let pred = rgb_image(predicted, height, width, "predicted")?;
        let truth = rgb_image(reference, height, width, "reference")?;
        let [psnr, ssim, mse, uqi, vif] = MetricReport::compute(&pred, &truth)?.values();
        *out = ColorganMetrics {
            psnr,
            ssim,
            mse,
            uqi,
            vif,
        };
        Ok(())
    })
}

/// Converts RGB to CIELAB (D65). `out_lab` receives `height * width * 3`
/// doubles, interleaved as L, a, b.
///
/// # Safety
/// `rgb` must hold `height * width * 3` bytes and `out_lab` must have room
/// for `height * width * 3` doubles.
#[no_mangle]
pub unsafe extern "C" fn colorgan_rgb_to_lab(
    rgb: *const u8,
    height: usize,
    width: usize,
    out_lab: *mut f64,
) -> ColorganStatus {
    guard(|| {
        if out_lab.is_null() {
            return fail(ColorganStatus::NullPointer, "out_lab is null");
        }
        let lab = rgb_to_lab(&rgb_image(rgb, height, width, "rgb")?);
        let out = std::slice::from_raw_parts_mut(out_lab, height * width * 3);
        for ((px, l), (a, b)) in out.chunks_exact_mut(3).zip(&lab.l).zip(lab.a.iter().zip(&lab.b)) {
            px.copy_from_slice(&[*l, *a, *b]);
        }
        Ok(())
    })
}
