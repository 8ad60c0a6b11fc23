//! C ABI over `clcgen`.
//!
//! Every function returns a [`ClcStatus`]. On failure the message is kept per
//! thread and can be read with [`clcgen_last_error`]. Models are opaque
//! handles created by [`clcgen_model_load`] and released with
//! [`clcgen_model_free`]. Frames are packed 8-bit RGB, row-major.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, c_void, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use clcgen::diffusion::NoiseSchedule;
use clcgen::io::checkpoint::load_checkpoint;
use clcgen::latent::{LatentGrid, Shape};
use clcgen::metrics::{akd_adjust, psnr_float, psnr_int, tje};
use clcgen::sampler::{feedback_update, generate_unbounded, FeedbackConfig, NoiseMode};
use clcgen::toy::{appearance, motion, ToyDenoiser};
use clcgen::video::{Frame, VideoClip};
use clcgen::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    NumericDivergence = 4,
    MissingInput = 5,
    Io = 6,
    Parse = 7,
    UndefinedMetric = 8,
    /// The frame callback asked generation to stop.
    Cancelled = 9,
    Internal = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClcNoiseMode {
    Fixed = 0,
    Independent = 1,
}

/// Sampling settings; see [`clcgen_feedback_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct ClcFeedbackConfig {
    pub beta: f64,
    pub noise_mode: ClcNoiseMode,
    pub seed: u64,
    pub cfg_scale: f64,
}

/// A trained toy model together with its noise schedule.
pub struct ClcModel {
    net: ToyDenoiser,
    sched: NoiseSchedule,
}

/// Receives each generated frame (`width * height * 3` bytes, valid only
/// during the call). Returning nonzero stops generation.
pub type ClcFrameCallback = Option<extern "C" fn(index: usize, rgb: *const u8, user: *mut c_void) -> c_int>;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> ClcStatus {
    match e {
        Error::Parameter(_) | Error::Config(_) | Error::Validation(_) => ClcStatus::InvalidArgument,
        Error::Shape { .. } => ClcStatus::ShapeMismatch,
        Error::NumericDivergence { .. } | Error::TrainingDivergence { .. } => ClcStatus::NumericDivergence,
        Error::MissingInput(_) => ClcStatus::MissingInput,
        Error::Io { .. } => ClcStatus::Io,
        Error::Parse(_) => ClcStatus::Parse,
        Error::UndefinedMetric(_) | Error::UnsupportedMetric(_) => ClcStatus::UndefinedMetric,
        Error::Stage { source, .. } => status_of(source),
    }
}

enum Fail {
    Lib(Error),
    Status(ClcStatus, String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(ClcStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ClcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ClcStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            ClcStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn frames(p: *const u8, n: usize, width: usize, height: usize, what: &str) -> Result<Vec<Frame>, Fail> {
    let size = width * height * 3;
    let data = slice(p, n * size, what)?;
    Ok(data
        .chunks_exact(size.max(1))
        .take(n)
        .map(|c| Frame::new(width, height, c.to_vec()))
        .collect::<Result<_, _>>()?)
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the full message
/// length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn clcgen_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Default sampling settings: gain 0.05, fixed noise, seed 0, no guidance.
#[no_mangle]
pub extern "C" fn clcgen_feedback_default() -> ClcFeedbackConfig {
    let d = FeedbackConfig::default();
    ClcFeedbackConfig {
        beta: d.beta,
        noise_mode: ClcNoiseMode::Fixed,
        seed: d.seed,
        cfg_scale: d.cfg_scale,
    }
}

/// Loads a checkpoint written by `clcgen train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn clcgen_model_load(path: *const c_char, out: *mut *mut ClcModel) -> ClcStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail::Status(ClcStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let (net, sched, _) = load_checkpoint(Path::new(path))?;
        *out = Box::into_raw(Box::new(ClcModel { net, sched }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`clcgen_model_load`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn clcgen_model_free(model: *mut ClcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Frame size the model generates.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn clcgen_model_frame_size(
    model: *const ClcModel,
    width: *mut usize,
    height: *mut usize,
) -> ClcStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if width.is_null() || height.is_null() {
            return Err(null("width/height"));
        }
        let s = m.net.shape();
        *width = s.width * s.factor;
        *height = s.height * s.factor;
        Ok(())
    })
}

/// Animates the appearance of `source` along the motion of `n_driving`
/// driving frames, producing `n_frames` frames (the driving frames loop).
/// Frames are handed to `callback` as they are produced, so memory use does
/// not depend on `n_frames`.
///
/// # Safety
/// `source` must hold one frame and `driving` `n_driving` frames of the
/// model's size; `config` must be valid.
#[no_mangle]
pub unsafe extern "C" fn clcgen_animate(
    model: *const ClcModel,
    config: *const ClcFeedbackConfig,
    source: *const u8,
    driving: *const u8,
    n_driving: usize,
    n_frames: usize,
    callback: ClcFrameCallback,
    user: *mut c_void,
) -> ClcStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        let cb = callback.ok_or_else(|| null("callback"))?;
        let s = m.net.shape();
        let (w, h) = (s.width * s.factor, s.height * s.factor);
        let src = frames(source, 1, w, h, "source")?;
        let drv = frames(driving, n_driving, w, h, "driving")?;
        if src.is_empty() || drv.is_empty() {
            return Err(Fail::Status(ClcStatus::InvalidArgument, "need a source and at least one driving frame".into()));
        }
        let cfg = FeedbackConfig {
            beta: c.beta,
            noise_mode: match c.noise_mode {
                ClcNoiseMode::Fixed => NoiseMode::Fixed,
                ClcNoiseMode::Independent => NoiseMode::Independent,
            },
            seed: c.seed,
            cfg_scale: c.cfg_scale,
        };
        let app = appearance(&src[0]).to_vec();
        let motions = drv
            .iter()
            .map(|f| motion(m.net.codec(), f))
            .collect::<Result<Vec<_>, _>>()?;
        let stream = motions.iter().cycle().take(n_frames).cloned();
        let gen = generate_unbounded(&m.net, m.net.codec(), &app, stream, s, &m.sched, &cfg)?;
        for (k, frame) in gen.enumerate() {
            let frame = frame?;
            if cb(k, frame.data().as_ptr(), user) != 0 {
                return Err(Fail::Status(ClcStatus::Cancelled, format!("stopped by callback at frame {k}")));
            }
        }
        Ok(())
    })
}

/// `out = (1 - beta) z_t + beta z0_hat`, elementwise over `len` values.
///
/// # Safety
/// Each pointer must address `len` values; `out` may alias neither input.
#[no_mangle]
pub unsafe extern "C" fn clcgen_feedback_update(
    z_t: *const f64,
    z0_hat: *const f64,
    len: usize,
    beta: f64,
    out: *mut f64,
) -> ClcStatus {
    guard(|| {
        if len == 0 {
            return Err(Fail::Status(ClcStatus::InvalidArgument, "len must be positive".into()));
        }
        let shape = Shape::new(1, 1, len, 1)?;
        let a = LatentGrid::new(shape, slice(z_t, len, "z_t")?.to_vec())?;
        let b = LatentGrid::new(shape, slice(z0_hat, len, "z0_hat")?.to_vec())?;
        if out.is_null() {
            return Err(null("out"));
        }
        let x = feedback_update(&a, &b, beta)?;
        ptr::copy_nonoverlapping(x.data().as_ptr(), out, len);
        Ok(())
    })
}

/// Temporal jitter error between two clips of `n_frames` frames.
///
/// # Safety
/// `real` and `gen` must each hold `n_frames * width * height * 3` bytes.
#[no_mangle]
pub unsafe extern "C" fn clcgen_tje(
    real: *const u8,
    gen: *const u8,
    n_frames: usize,
    width: usize,
    height: usize,
    delta: usize,
    out: *mut f64,
) -> ClcStatus {
    guard(|| {
        let r = VideoClip::new(frames(real, n_frames, width, height, "real")?, 0.0)?;
        let g = VideoClip::new(frames(gen, n_frames, width, height, "gen")?, 0.0)?;
        let v = tje(&r, &g, delta)?.mean_error;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// PSNR of two frames. With `wrapping` nonzero the error is accumulated in
/// wrapping 8-bit arithmetic, as some evaluation scripts do. Identical
/// frames give infinity.
///
/// # Safety
/// `a` and `b` must each hold `width * height * 3` bytes.
#[no_mangle]
pub unsafe extern "C" fn clcgen_psnr(
    a: *const u8,
    b: *const u8,
    width: usize,
    height: usize,
    wrapping: c_int,
    out: *mut f64,
) -> ClcStatus {
    guard(|| {
        let fa = frames(a, 1, width, height, "a")?;
        let fb = frames(b, 1, width, height, "b")?;
        if fa.is_empty() || fb.is_empty() {
            return Err(Fail::Status(ClcStatus::InvalidArgument, "empty frame".into()));
        }
        let v = if wrapping != 0 { psnr_int(&fa[0], &fb[0]) } else { psnr_float(&fa[0], &fb[0]) }?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Keypoint distance rescaled by the detection fraction.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn clcgen_akd_adjust(raw: f64, detection_fraction: f64, out: *mut f64) -> ClcStatus {
    guard(|| {
        let v = akd_adjust(raw, detection_fraction)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}
