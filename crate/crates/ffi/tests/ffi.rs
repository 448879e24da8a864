use std::ffi::{CStr, CString};
use std::ptr;

use crossover_ffi::*;

fn last_error() -> String {
    let p = cx_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn d2_certificate_and_evaluation() {
    unsafe {
        let name = CString::new("d2").unwrap();
        let (mut d, mut m) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(
            cx_design_fixture(name.as_ptr(), &mut d, &mut m),
            CxStatus::Ok
        );
        assert_eq!(cx_design_subjects(d), 16);

        let mut cert = ptr::null_mut();
        assert_eq!(cx_solve_minimax(m, 4, &mut cert), CxStatus::Ok);
        let mut s = CxCertificateSummary {
            x_star: 0.0,
            y_star: 0.0,
            t: 0,
            support_len: 0,
            regime: CxRegime::Numeric,
        };
        assert_eq!(cx_certificate_summary(cert, &mut s), CxStatus::Ok);
        assert_eq!(s.regime, CxRegime::ClosedFormIi);
        assert!((s.x_star - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.y_star - 2.1745528).abs() < 1e-6);

        let mut r = CxReport::default();
        let st = cx_evaluate(d, m, cert, CxCriterion::T, CxMethod::Exact, 0, 0, 0, &mut r);
        assert_eq!(st, CxStatus::Ok);
        assert!((r.phi0 - 0.7130567).abs() < 1e-6);
        assert_eq!(r.replications, 36864);

        let mut res = 0.0;
        assert_eq!(cx_design_residual(d, cert, m, &mut res), CxStatus::Ok);
        assert!((res - 0.5166436913467418).abs() < 1e-9);

        let mut json = ptr::null_mut();
        assert_eq!(cx_certificate_to_json(cert, &mut json), CxStatus::Ok);
        assert!(CStr::from_ptr(json)
            .to_str()
            .unwrap()
            .contains("closed_form_ii"));
        cx_string_free(json);

        cx_certificate_free(cert);
        cx_design_free(d);
        cx_mechanism_free(m);
    }
}

#[test]
fn mechanism_and_q_coefficients() {
    unsafe {
        let a = [0.0, 0.0, 0.0, 1.0];
        let mut m = ptr::null_mut();
        assert_eq!(
            cx_mechanism_new(4, 16, a.as_ptr(), a.len(), &mut m),
            CxStatus::Ok
        );
        let mut alpha = 0.0;
        assert_eq!(cx_mechanism_alpha(m, 4, &mut alpha), CxStatus::Ok);
        assert_eq!(alpha, 1.0);
        let seq = CString::new("1234").unwrap();
        let mut q = CxQCoefficients::default();
        assert_eq!(cx_q_coeffs(m, seq.as_ptr(), 4, &mut q), CxStatus::Ok);
        assert!((q.q11 - 3.0).abs() < 1e-12);
        assert!((q.q12 + 0.75).abs() < 1e-12);
        assert!((q.q22 - 33.0 / 16.0).abs() < 1e-12);
        cx_mechanism_free(m);
    }
}

#[test]
fn search_and_json_round_trip() {
    unsafe {
        let mech = CString::new(r#"{"p":3,"n":4,"a":[0,0,1]}"#).unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(cx_mechanism_from_json(mech.as_ptr(), &mut m), CxStatus::Ok);
        let mut cert = ptr::null_mut();
        assert_eq!(cx_solve_minimax(m, 2, &mut cert), CxStatus::Ok);
        let (mut d, mut res) = (ptr::null_mut(), -1.0);
        assert_eq!(
            cx_exact_search(4, cert, m, 3, 1, 20, &mut d, &mut res),
            CxStatus::Ok
        );
        assert!(res >= 0.0);
        assert_eq!(cx_design_subjects(d), 4);

        let mut json = ptr::null_mut();
        assert_eq!(cx_design_to_json(d, &mut json), CxStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(cx_design_from_json(json, &mut back), CxStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(cx_design_to_json(back, &mut again), CxStatus::Ok);
        assert_eq!(CStr::from_ptr(json), CStr::from_ptr(again));
        cx_string_free(json);
        cx_string_free(again);
        cx_design_free(back);
        cx_design_free(d);
        cx_certificate_free(cert);
        cx_mechanism_free(m);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let a = [0.0, 0.5, 0.6];
        let mut m = ptr::null_mut();
        assert_eq!(
            cx_mechanism_new(3, 4, a.as_ptr(), a.len(), &mut m),
            CxStatus::Invalid
        );
        assert!(m.is_null());
        assert!(last_error().contains("sum"));

        assert_eq!(
            cx_mechanism_new(3, 4, ptr::null(), 3, &mut m),
            CxStatus::NullPointer
        );
        assert!(last_error().contains("null"));

        let bad = CString::new("{").unwrap();
        let mut d = ptr::null_mut();
        assert_eq!(cx_design_from_json(bad.as_ptr(), &mut d), CxStatus::Invalid);

        let name = CString::new("d8").unwrap();
        let (mut d, mut m) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(
            cx_design_fixture(name.as_ptr(), &mut d, &mut m),
            CxStatus::Ok
        );
        assert!(cx_last_error_message().is_null());
        let mut cert = ptr::null_mut();
        assert_eq!(cx_solve_minimax(m, 3, &mut cert), CxStatus::Ok);
        let mut r = CxReport::default();
        let st = cx_evaluate(d, m, cert, CxCriterion::T, CxMethod::Exact, 0, 0, 0, &mut r);
        assert_eq!(st, CxStatus::Budget);
        assert!(last_error().contains("budget"));
        cx_certificate_free(cert);
        cx_design_free(d);
        cx_mechanism_free(m);

        cx_design_free(ptr::null_mut());
        cx_string_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/crossover.h");
    let source = include_str!("../src/lib.rs");
    let exports: Vec<&str> = source
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
}
