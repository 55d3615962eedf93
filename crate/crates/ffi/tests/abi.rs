use std::ffi::{CStr, CString};
use std::ptr;

use mpw_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mpw_last_error_message()) }.to_string_lossy().into_owned()
}

fn defaults() -> (MpwParams, MpwOptions) {
    let mut p = MpwParams { n_f: 0, n_b: 0, eps_f: 0.0, eps_b: 0.0, v_f: 0.0, v_b: 0.0, mu: 0.0 };
    let mut o = MpwOptions { solver: MpwSolver::Full, tolerance: 0.0, max_iterations: 0, seed: 0 };
    unsafe {
        assert_eq!(mpw_default_params(&mut p), MpwStatus::Ok);
        assert_eq!(mpw_default_options(&mut o), MpwStatus::Ok);
    }
    (p, o)
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(mpw_version()) }.to_str().unwrap();
    assert_eq!(v, mpw_core::VERSION);
}

#[test]
fn bound_and_errors() {
    let mut b = 0.0;
    unsafe {
        assert_eq!(mpw_theoretical_bound(6, 12, &mut b), MpwStatus::Ok);
        assert_eq!(b, 3.0);
        assert_eq!(mpw_theoretical_bound(4, 8, &mut b), MpwStatus::Ok);
        assert_eq!(b, 2.0);
        assert_eq!(mpw_theoretical_bound(5, 4, &mut b), MpwStatus::InvalidArgument);
        assert!(last_error().contains("exceed"));
        assert_eq!(mpw_theoretical_bound(1, 2, ptr::null_mut()), MpwStatus::NullPointer);
    }
}

#[test]
fn witness_matches_core() {
    let (mut p, o) = defaults();
    p.n_f = 3;
    p.n_b = 3;
    p.v_f = -0.7;
    p.mu = 0.3;
    let mut w = MpwWitness::default();
    unsafe {
        assert_eq!(mpw_compute_witness(&p, &o, &mut w), MpwStatus::Ok);
    }
    assert_eq!(last_error(), "");
    let core = mpw_core::compute_witness(
        &mpw_core::SystemParams { n_f: 3, n_b: 3, v_f: -0.7, mu: 0.3, ..Default::default() },
        &Default::default(),
    )
    .unwrap();
    assert_eq!(w.lambda_g_f, core.lambda_g_f());
    assert_eq!(w.lambda_g_b, core.lambda_g_b());
    assert_eq!(w.energy, core.energy);
    assert!(w.converged);

    // null options mean defaults
    let mut w2 = MpwWitness::default();
    unsafe {
        assert_eq!(mpw_compute_witness(&p, ptr::null(), &mut w2), MpwStatus::Ok);
    }
    assert_eq!(w2.lambda_g_f, w.lambda_g_f);
}

#[test]
fn witness_error_codes() {
    let (mut p, mut o) = defaults();
    let mut w = MpwWitness::default();
    unsafe {
        assert_eq!(mpw_compute_witness(ptr::null(), &o, &mut w), MpwStatus::NullPointer);
        p.n_b = 3;
        p.mu = 0.2;
        assert_eq!(mpw_compute_witness(&p, &o, &mut w), MpwStatus::InvalidArgument);
        assert!(!last_error().is_empty());

        p = defaults().0;
        p.n_f = 5;
        p.n_b = 5;
        p.v_f = -1.0;
        p.mu = 0.2;
        o.max_iterations = 2;
        assert_eq!(mpw_compute_witness(&p, &o, &mut w), MpwStatus::NotConverged);
        assert!(!w.converged);
        assert!(last_error().contains("not converged"));
    }
}

#[test]
fn sweep_handle_lifecycle() {
    let (mut p, o) = defaults();
    p.v_f = -0.5;
    let mut h: *mut MpwSweep = ptr::null_mut();
    let mu = CString::new("mu").unwrap();
    let bogus = CString::new("temperature").unwrap();
    unsafe {
        assert_eq!(mpw_sweep_new(&p, &o, &mut h), MpwStatus::Ok);
        assert!(!h.is_null());
        assert_eq!(mpw_sweep_add_axis(h, bogus.as_ptr(), 0.0, 1.0, 0.5), MpwStatus::InvalidArgument);
        assert_eq!(mpw_sweep_add_axis(h, mu.as_ptr(), 0.0, 1.0, 0.0), MpwStatus::InvalidArgument);
        assert_eq!(mpw_sweep_add_axis(h, mu.as_ptr(), 0.0, 1.0, 0.5), MpwStatus::Ok);
        assert_eq!(mpw_sweep_add_axis(h, mu.as_ptr(), 0.0, 1.0, 0.5), MpwStatus::InvalidArgument);
        assert_eq!(mpw_sweep_row_count(h), 0);
        assert_eq!(mpw_sweep_run(h, 1), MpwStatus::Ok);
        assert_eq!(mpw_sweep_row_count(h), 3);

        let mut row = MpwSweepRow::default();
        assert_eq!(mpw_sweep_get_row(h, 2, &mut row), MpwStatus::Ok);
        assert_eq!(row.mu, 1.0);
        assert_eq!(row.v_f, -0.5);
        assert!(row.converged);
        assert_eq!(mpw_sweep_get_row(h, 3, &mut row), MpwStatus::InvalidArgument);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(mpw_sweep_write_csv(h, cpath.as_ptr()), MpwStatus::Ok);
        let csv = std::fs::read_to_string(&path).unwrap();
        assert!(csv.starts_with(mpw_core::sweep::CSV_HEADER));
        assert_eq!(csv.lines().count(), 4);
        let bad = CString::new("/nonexistent/dir/s.csv").unwrap();
        assert_eq!(mpw_sweep_write_csv(h, bad.as_ptr()), MpwStatus::Io);

        mpw_sweep_free(h);
        mpw_sweep_free(ptr::null_mut());
        assert_eq!(mpw_sweep_row_count(ptr::null()), 0);
        assert_eq!(mpw_sweep_run(ptr::null_mut(), 0), MpwStatus::NullPointer);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mpw.h")).unwrap();
    for symbol in [
        "MPW_H",
        "MPW_STATUS_OK = 0",
        "MPW_STATUS_PANIC",
        "typedef struct MpwSweep MpwSweep;",
        "MpwStatus mpw_compute_witness(",
        "MpwStatus mpw_sweep_new(",
        "MpwStatus mpw_sweep_add_axis(",
        "MpwStatus mpw_sweep_run(",
        "size_t mpw_sweep_row_count(",
        "MpwStatus mpw_sweep_get_row(",
        "MpwStatus mpw_sweep_write_csv(",
        "void mpw_sweep_free(",
        "MpwStatus mpw_theoretical_bound(",
        "const char *mpw_last_error_message(void);",
        "const char *mpw_version(void);",
    ] {
        assert!(header.contains(symbol), "header lacks {symbol}");
    }
}
