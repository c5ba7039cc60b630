//! C ABI over the simulator core.
//!
//! Every function returns a [`TeleopStatus`]; results come back through out
//! pointers. On failure `teleop_last_error` gives a message for the calling
//! thread. Handles are opaque and must be released with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use teleop_core::config::AppConfig;
use teleop_core::harness::{parse_mode, run_with_gain, ModeReport, RunConfig, RunOptions};
use teleop_core::network::{sample_downlink_delay, DelayPolicy};
use teleop_core::track::{RegionId, TrackModel};
use teleop_core::{Pose2D, SimError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeleopStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    MissingGain = 4,
    Runtime = 5,
    Panic = 6,
}

/// Sampled test track.
pub struct TeleopTrack {
    inner: TrackModel,
}

/// Outcome of one simulation run.
pub struct TeleopReport {
    inner: ModeReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &SimError) -> TeleopStatus {
    match e {
        SimError::Config(_) | SimError::Schema(_) => TeleopStatus::Config,
        SimError::MissingGain { .. } => TeleopStatus::MissingGain,
        _ => TeleopStatus::Runtime,
    }
}

struct Fail(TeleopStatus, String);

impl From<SimError> for Fail {
    fn from(e: SimError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null() -> Fail {
    Fail(TeleopStatus::NullPointer, "null pointer argument".into())
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(TeleopStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TeleopStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TeleopStatus::Ok,
        Ok(Err(Fail(s, m))) => {
            set_error(&m);
            s
        }
        Err(_) => {
            set_error("internal panic");
            TeleopStatus::Panic
        }
    }
}

unsafe fn opt_str<'a>(p: *const c_char) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| invalid("string is not valid UTF-8"))
}

unsafe fn config(toml: *const c_char) -> Result<AppConfig, Fail> {
    Ok(match opt_str(toml)? {
        Some(text) => AppConfig::from_toml_str(text)?,
        None => AppConfig::default(),
    })
}

unsafe fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(null)
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn teleop_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds the track from a TOML configuration, or the defaults if `config_toml` is null.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn teleop_track_new(config_toml: *const c_char, out: *mut *mut TeleopTrack) -> TeleopStatus {
    guard(|| {
        let out = out_ref(out)?;
        *out = ptr::null_mut();
        let sc = config(config_toml)?.scenario()?;
        *out = Box::into_raw(Box::new(TeleopTrack { inner: sc.track }));
        Ok(())
    })
}

/// # Safety
/// `track` must be null or a handle from `teleop_track_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn teleop_track_free(track: *mut TeleopTrack) {
    if !track.is_null() {
        drop(Box::from_raw(track));
    }
}

/// Course length from the start of A to the end of H, m.
///
/// # Safety
/// `track` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn teleop_track_length(track: *const TeleopTrack, out: *mut f64) -> TeleopStatus {
    guard(|| {
        let t = track.as_ref().ok_or_else(null)?;
        *out_ref(out)? = t.inner.total_length();
        Ok(())
    })
}

/// Region index (0 = A .. 7 = H) at arc length `s`.
///
/// # Safety
/// `track` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn teleop_track_region_at(track: *const TeleopTrack, s: f64, out: *mut u32) -> TeleopStatus {
    guard(|| {
        let t = track.as_ref().ok_or_else(null)?;
        if !s.is_finite() {
            return Err(invalid("s must be finite"));
        }
        *out_ref(out)? = t.inner.region_at(s).index() as u32;
        Ok(())
    })
}

/// Closest centerline point to (x, y): arc length and signed cross-track error.
///
/// # Safety
/// `track` must be a live handle; `out_s` and `out_cross_track` must be writable.
#[no_mangle]
pub unsafe extern "C" fn teleop_track_closest_point(
    track: *const TeleopTrack,
    x: f64,
    y: f64,
    out_s: *mut f64,
    out_cross_track: *mut f64,
) -> TeleopStatus {
    guard(|| {
        let t = track.as_ref().ok_or_else(null)?;
        let (s, e) = (out_ref(out_s)?, out_ref(out_cross_track)?);
        if !(x.is_finite() && y.is_finite()) {
            return Err(invalid("coordinates must be finite"));
        }
        let p = t.inner.closest_point(&Pose2D::new(x, y, 0.0))?;
        *s = p.s;
        *e = p.cross_track;
        Ok(())
    })
}

/// Peak open-loop steer-rate requirement per region at `speed` m/s; writes 8 values.
///
/// # Safety
/// `track` must be a live handle; `out8` must point to 8 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn teleop_track_peak_steer_rate(
    track: *const TeleopTrack,
    speed: f64,
    wheelbase: f64,
    out8: *mut f64,
) -> TeleopStatus {
    guard(|| {
        let t = track.as_ref().ok_or_else(null)?;
        if out8.is_null() {
            return Err(null());
        }
        if !(speed >= 0.0 && wheelbase > 0.0) {
            return Err(invalid("speed must be non-negative and wheelbase positive"));
        }
        let peaks = t.inner.peak_steer_rate_by_region(speed, wheelbase);
        std::slice::from_raw_parts_mut(out8, 8).copy_from_slice(&peaks);
        Ok(())
    })
}

/// Draws `n` downlink delays, s, from the configured policy.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must point to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn teleop_sample_delays(
    config_toml: *const c_char,
    seed: u64,
    n: usize,
    out: *mut f64,
) -> TeleopStatus {
    guard(|| {
        if out.is_null() && n > 0 {
            return Err(null());
        }
        let cfg = config(config_toml)?;
        let buf = if n == 0 {
            &mut [][..]
        } else {
            std::slice::from_raw_parts_mut(out, n)
        };
        match cfg.network.downlink {
            DelayPolicy::Constant { delay } => buf.fill(delay),
            DelayPolicy::Gev(g) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for d in buf.iter_mut() {
                    *d = sample_downlink_delay(&g, &mut rng);
                }
            }
        }
        Ok(())
    })
}

/// Runs one mode. `gain` is the driver gain (k1 or k) and is ignored for SRPT
/// modes; a non-positive gain for a driver mode yields `MissingGain`.
/// Faults during the run still produce a report; see `teleop_report_failed`.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `mode` must be a
/// NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn teleop_run(
    config_toml: *const c_char,
    mode: *const c_char,
    speed_kmh: u32,
    seed: u64,
    gain: f64,
    out: *mut *mut TeleopReport,
) -> TeleopStatus {
    guard(|| {
        let out = out_ref(out)?;
        *out = ptr::null_mut();
        let mode = parse_mode(opt_str(mode)?.ok_or_else(null)?).map_err(|e| invalid(e.to_string()))?;
        let sc = config(config_toml)?.scenario()?;
        let gain = (gain > 0.0).then_some(gain);
        let cfg = RunConfig {
            mode,
            v_ref_kmh: speed_kmh,
            seed,
        };
        let rep = run_with_gain(&sc, cfg, gain, RunOptions::default())?.report;
        *out = Box::into_raw(Box::new(TeleopReport { inner: rep }));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle from `teleop_run` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn teleop_report_free(report: *mut TeleopReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

unsafe fn region_arg(region: i32) -> Result<Option<RegionId>, Fail> {
    match region {
        -1 => Ok(None),
        r => RegionId::from_index(r as usize)
            .filter(|_| r >= 0)
            .map(Some)
            .ok_or_else(|| invalid(format!("region {r} is outside -1..=7"))),
    }
}

/// RMS cross-track error, m, of region 0..7, or of the whole run for -1.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn teleop_report_rms(report: *const TeleopReport, region: i32, out: *mut f64) -> TeleopStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(null)?.inner;
        *out_ref(out)? = match region_arg(region)? {
            Some(id) => r.region(id).rms_cross_track,
            None => r.rms_cross_track,
        };
        Ok(())
    })
}

/// Completion time, s, of region 0..7 (NaN if not left), or total run time for -1.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn teleop_report_completion_time(
    report: *const TeleopReport,
    region: i32,
    out: *mut f64,
) -> TeleopStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(null)?.inner;
        *out_ref(out)? = match region_arg(region)? {
            Some(id) => r.region(id).completion_time,
            None => r.total_time,
        };
        Ok(())
    })
}

/// Reset count of region 0..7, or of the whole run for -1.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn teleop_report_reset_count(
    report: *const TeleopReport,
    region: i32,
    out: *mut u32,
) -> TeleopStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(null)?.inner;
        *out_ref(out)? = match region_arg(region)? {
            Some(id) => r.region(id).reset_count,
            None => r.reset_count,
        };
        Ok(())
    })
}

/// Peak plant steer rate over the run, rad/s.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn teleop_report_peak_steer_rate(report: *const TeleopReport, out: *mut f64) -> TeleopStatus {
    guard(|| {
        *out_ref(out)? = report.as_ref().ok_or_else(null)?.inner.peak_steer_rate;
        Ok(())
    })
}

/// 1 if the run was aborted, else 0. The reason is available through
/// `teleop_last_error` after this call returns 1.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn teleop_report_failed(report: *const TeleopReport, out: *mut u32) -> TeleopStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(null)?.inner;
        *out_ref(out)? = r.failure.is_some() as u32;
        if let Some(why) = &r.failure {
            set_error(why);
        }
        Ok(())
    })
}
