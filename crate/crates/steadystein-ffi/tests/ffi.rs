use std::ptr;

use steadystein_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { ss_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf.iter().take(n.min(255)).map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn lattice_round_trip() {
    let mut h: *mut SsLattice = ptr::null_mut();
    unsafe {
        assert_eq!(ss_lattice_new(0.5, 1.0, 1, 0.0, 1e-14, &mut h), SsStatus::Ok);
        let mut len = 0usize;
        assert_eq!(ss_lattice_len(h, &mut len), SsStatus::Ok);
        assert!(len > 10);
        let mut p = 0.0;
        assert_eq!(ss_lattice_pmf(h, 2, &mut p), SsStatus::Ok);
        // M/M/1 with load 1/2 is geometric.
        assert!((p - 0.125).abs() < 1e-13);
        let mut m = 0.0;
        assert_eq!(ss_lattice_mean_count(h, &mut m), SsStatus::Ok);
        assert!((m - 1.0).abs() < 1e-12);
        ss_lattice_free(h);
    }
}

#[test]
fn distances_between_handles() {
    let (mut l, mut c) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(ss_lattice_new(4.0, 1.0, 5, 0.0, 1e-14, &mut l), SsStatus::Ok);
        assert_eq!(ss_density_new(4.0, 1.0, 5, 0.0, SsMode::Constant, &mut c), SsStatus::Ok);
        let mut k = 0.0;
        assert_eq!(ss_distance(l, c, SsMetric::Kolmogorov, &mut k), SsStatus::Ok);
        assert!(k > 0.0 && k < 156.0 / 2.0);
        let mut w = 0.0;
        assert_eq!(ss_distance(l, c, SsMetric::Wasserstein, &mut w), SsStatus::Ok);
        assert!(w > 0.0 && w < 95.0);
        let mut cdf = 0.0;
        assert_eq!(ss_density_cdf(c, 1e9, &mut cdf), SsStatus::Ok);
        assert!((cdf - 1.0).abs() < 1e-12);
        ss_lattice_free(l);
        ss_density_free(c);
    }
}

#[test]
fn mismatched_handles_rejected() {
    let (mut l, mut c) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        ss_lattice_new(4.0, 1.0, 5, 0.0, 1e-14, &mut l);
        ss_density_new(3.0, 1.0, 5, 0.0, SsMode::StateDependent, &mut c);
        let mut v = 0.0;
        assert_eq!(ss_distance(l, c, SsMetric::PmfSup, &mut v), SsStatus::InvalidParam);
        assert!(last_error().contains("different queues"));
        ss_lattice_free(l);
        ss_density_free(c);
    }
}

#[test]
fn error_codes() {
    let mut h: *mut SsLattice = ptr::null_mut();
    unsafe {
        assert_eq!(ss_lattice_new(6.0, 1.0, 5, 0.0, 1e-14, &mut h), SsStatus::Stability);
        assert!(h.is_null());
        assert!(last_error().contains("unstable"));
        assert_eq!(ss_lattice_new(-1.0, 1.0, 5, 0.0, 1e-14, &mut h), SsStatus::InvalidParam);
        assert_eq!(ss_lattice_new(4.0, 1.0, 5, 0.0, 1e-14, ptr::null_mut()), SsStatus::NullPointer);
        let mut v = 0.0;
        assert_eq!(ss_lattice_pmf(ptr::null(), 0, &mut v), SsStatus::NullPointer);
        ss_lattice_free(ptr::null_mut());
        assert_eq!(ss_c2_mean_abs_total(15, 0.0, 1e-12, &mut v), SsStatus::InvalidParam);
    }
}

#[test]
fn truncated_buffer_is_terminated() {
    unsafe {
        let mut h = ptr::null_mut();
        ss_lattice_new(6.0, 1.0, 5, 0.0, 1e-14, &mut h);
        let mut buf = [1 as std::ffi::c_char; 4];
        let n = ss_last_error(buf.as_mut_ptr(), buf.len());
        assert!(n > 3);
        assert_eq!(buf[3], 0);
    }
}

#[test]
fn c2_matches_library() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(ss_c2_mean_abs_total(15, 1.0, 1e-12, &mut v), SsStatus::Ok);
    }
    assert_eq!(v, steadystein::tables::c2_exact_abs_total(15, 1.0, 1e-12).unwrap());
}

#[test]
fn header_declares_interface() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/steadystein.h")).unwrap();
    for name in [
        "SsLattice",
        "SsDensity",
        "SS_STATUS_NULL_POINTER",
        "ss_lattice_new",
        "ss_lattice_free",
        "ss_density_new",
        "ss_distance",
        "ss_last_error",
    ] {
        assert!(h.contains(name), "{name} missing from header");
    }
}
