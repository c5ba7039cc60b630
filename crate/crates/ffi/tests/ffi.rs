use std::ffi::{CStr, CString};
use std::ptr;

use teleop_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(teleop_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn track_handle_round_trip() {
    unsafe {
        let mut t: *mut TeleopTrack = ptr::null_mut();
        assert_eq!(teleop_track_new(ptr::null(), &mut t), TeleopStatus::Ok);
        assert!(!t.is_null());
        let mut len = 0.0;
        assert_eq!(teleop_track_length(t, &mut len), TeleopStatus::Ok);
        assert!(len > 300.0, "{len}");

        let mut region = 99;
        assert_eq!(teleop_track_region_at(t, 0.0, &mut region), TeleopStatus::Ok);
        assert_eq!(region, 0);
        assert_eq!(teleop_track_region_at(t, len - 1.0, &mut region), TeleopStatus::Ok);
        assert_eq!(region, 7);

        let (mut s, mut e) = (0.0, 0.0);
        assert_eq!(
            teleop_track_closest_point(t, 10.0, 1.0, &mut s, &mut e),
            TeleopStatus::Ok
        );
        assert!((s - 10.0).abs() < 0.05 && (e.abs() - 1.0).abs() < 0.05, "{s} {e}");
        assert_eq!(
            teleop_track_closest_point(t, 1e4, 1e4, &mut s, &mut e),
            TeleopStatus::Runtime
        );
        assert!(last_error().contains("corridor"));

        let mut peaks = [0.0f64; 8];
        assert_eq!(
            teleop_track_peak_steer_rate(t, 26.0 / 3.6, 2.7, peaks.as_mut_ptr()),
            TeleopStatus::Ok
        );
        assert!(peaks[2] > 2.0 * std::f64::consts::PI && peaks[7] > 2.0 * std::f64::consts::PI);
        teleop_track_free(t);
    }
}

#[test]
fn null_and_bad_arguments_are_reported() {
    unsafe {
        assert_eq!(
            teleop_track_new(ptr::null(), ptr::null_mut()),
            TeleopStatus::NullPointer
        );
        assert_eq!(teleop_track_length(ptr::null(), &mut 0.0), TeleopStatus::NullPointer);
        teleop_track_free(ptr::null_mut());
        teleop_report_free(ptr::null_mut());

        let bad = CString::new("[vehicle]\nmass = 1\n").unwrap();
        let mut t: *mut TeleopTrack = ptr::null_mut();
        assert_eq!(teleop_track_new(bad.as_ptr(), &mut t), TeleopStatus::Config);
        assert!(t.is_null());
        assert!(last_error().contains("mass"));

        let mode = CString::new("bogus").unwrap();
        let mut r: *mut TeleopReport = ptr::null_mut();
        assert_eq!(
            teleop_run(ptr::null(), mode.as_ptr(), 26, 1, 0.0, &mut r),
            TeleopStatus::InvalidArgument
        );
        assert!(last_error().contains("delay-srpt"));

        let mode = CString::new("delay-stanley").unwrap();
        assert_eq!(
            teleop_run(ptr::null(), mode.as_ptr(), 26, 1, 0.0, &mut r),
            TeleopStatus::MissingGain
        );
        assert_eq!(
            teleop_run(ptr::null(), mode.as_ptr(), 40, 1, 1.0, &mut r),
            TeleopStatus::Config
        );
    }
}

#[test]
fn delay_sampling_is_seeded_and_bounded() {
    unsafe {
        let mut a = vec![0.0; 1000];
        let mut b = vec![0.0; 1000];
        assert_eq!(
            teleop_sample_delays(ptr::null(), 5, a.len(), a.as_mut_ptr()),
            TeleopStatus::Ok
        );
        assert_eq!(
            teleop_sample_delays(ptr::null(), 5, b.len(), b.as_mut_ptr()),
            TeleopStatus::Ok
        );
        assert_eq!(a, b);
        assert!(a.iter().all(|d| (0.168..=0.300).contains(d)));

        let cfg = CString::new("[network.downlink]\nkind = \"constant\"\ndelay = 0.25\n").unwrap();
        assert_eq!(
            teleop_sample_delays(cfg.as_ptr(), 5, a.len(), a.as_mut_ptr()),
            TeleopStatus::Ok
        );
        assert!(a.iter().all(|&d| d == 0.25));
        assert_eq!(
            teleop_sample_delays(ptr::null(), 5, 3, ptr::null_mut()),
            TeleopStatus::NullPointer
        );
    }
}

#[test]
fn driver_run_report_accessors() {
    unsafe {
        let mode = CString::new("nodelay-stanley").unwrap();
        let mut r: *mut TeleopReport = ptr::null_mut();
        assert_eq!(
            teleop_run(ptr::null(), mode.as_ptr(), 18, 1, 1.0, &mut r),
            TeleopStatus::Ok
        );
        let mut failed = 9;
        assert_eq!(teleop_report_failed(r, &mut failed), TeleopStatus::Ok);
        assert_eq!(failed, 0);
        let (mut rms, mut t, mut total) = (0.0, 0.0, 0.0);
        assert_eq!(teleop_report_rms(r, -1, &mut rms), TeleopStatus::Ok);
        assert!(rms > 0.0 && rms < 1.0);
        assert_eq!(teleop_report_completion_time(r, 0, &mut t), TeleopStatus::Ok);
        assert_eq!(teleop_report_completion_time(r, -1, &mut total), TeleopStatus::Ok);
        assert!(t > 0.0 && t < total);
        let mut resets = 99;
        assert_eq!(teleop_report_reset_count(r, -1, &mut resets), TeleopStatus::Ok);
        let mut peak = 0.0;
        assert_eq!(teleop_report_peak_steer_rate(r, &mut peak), TeleopStatus::Ok);
        assert!(peak <= 2.0 * std::f64::consts::PI * (1.0 + 1e-9));
        assert_eq!(teleop_report_rms(r, 8, &mut rms), TeleopStatus::InvalidArgument);
        assert_eq!(teleop_report_rms(r, -2, &mut rms), TeleopStatus::InvalidArgument);
        teleop_report_free(r);
    }
}

#[test]
fn header_is_generated_and_valid_c() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/teleop_sim.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in [
        "teleop_track_new",
        "teleop_run",
        "teleop_last_error",
        "TELEOP_STATUS_MISSING_GAIN",
    ] {
        assert!(text.contains(sym), "{sym}");
    }
    // syntax check when a C compiler is around
    if let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
    {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
