//! Exercises the C ABI exactly as a foreign caller would: raw pointers,
//! flat buffers, status codes, and the error channel.

use std::ffi::{c_int, CStr, CString};
use std::ptr;

use nlvar_ffi::*;

fn parse(json: &str) -> *mut NlvarModel {
    let c = CString::new(json).unwrap();
    let mut handle: *mut NlvarModel = ptr::null_mut();
    let status = unsafe { nlvar_model_parse_json(c.as_ptr(), &mut handle) };
    assert_eq!(status, NlvarStatus::Ok);
    assert!(!handle.is_null());
    handle
}

fn ex_t_json() -> &'static str {
    include_str!("../../nlvar/fixtures/ex_t.json")
}

fn ex_l_json() -> &'static str {
    include_str!("../../nlvar/fixtures/ex_l.json")
}

#[test]
fn parse_dims_roundtrip_and_free() {
    let model = parse(ex_t_json());
    let (mut p, mut k) = (0usize, 0usize);
    assert_eq!(
        unsafe { nlvar_model_dims(model, &mut p, &mut k) },
        NlvarStatus::Ok
    );
    assert_eq!((p, k), (2, 1));

    let mut json: *mut std::ffi::c_char = ptr::null_mut();
    assert_eq!(unsafe { nlvar_model_to_json(model, &mut json) }, NlvarStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_string();
    unsafe { nlvar_string_free(json) };
    let again = parse(&text);
    unsafe {
        nlvar_model_free(again);
        nlvar_model_free(model);
    }
}

#[test]
fn parse_error_reports_message_and_status() {
    let c = CString::new("{\"p\": 2").unwrap();
    let mut handle: *mut NlvarModel = ptr::null_mut();
    let status = unsafe { nlvar_model_parse_json(c.as_ptr(), &mut handle) };
    assert_eq!(status, NlvarStatus::ParseError);
    assert!(handle.is_null());
    let msg = unsafe { CStr::from_ptr(nlvar_last_error_message()) };
    assert!(!msg.to_str().unwrap().is_empty());
}

#[test]
fn eval_and_inverse_roundtrip() {
    let model = parse(ex_t_json());
    let z = [0.7f64, -1.3];
    let mut y = [0.0f64; 2];
    assert_eq!(
        unsafe { nlvar_eval_f(model, 0, z.as_ptr(), 2, y.as_mut_ptr()) },
        NlvarStatus::Ok
    );
    let mut back = [0.0f64; 2];
    assert_eq!(
        unsafe { nlvar_f0_inverse(model, y.as_ptr(), 2, back.as_mut_ptr()) },
        NlvarStatus::Ok
    );
    assert!((back[0] - z[0]).abs() < 1e-12 && (back[1] - z[1]).abs() < 1e-12);

    // Dimension errors are flagged, not UB.
    assert_eq!(
        unsafe { nlvar_eval_f(model, 0, z.as_ptr(), 1, y.as_mut_ptr()) },
        NlvarStatus::InvalidArgument
    );
    unsafe { nlvar_model_free(model) };
}

#[test]
fn membership_json_carries_verdict() {
    let model = parse(ex_l_json());
    let mut json: *mut std::ffi::c_char = ptr::null_mut();
    assert_eq!(
        unsafe { nlvar_check_membership_json(model, 1.0, 12, &mut json) },
        NlvarStatus::Ok
    );
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap();
    assert!(text.contains("\"type\": \"member\""), "{text}");
    unsafe {
        nlvar_string_free(json);
        nlvar_model_free(model);
    }
}

#[test]
fn analysis_pipeline_chi_limit_multiplier() {
    let model = parse(ex_t_json());
    let mut analysis: *mut NlvarAnalysis = ptr::null_mut();
    assert_eq!(
        unsafe { nlvar_analysis_new(model, 1.0, 12, &mut analysis) },
        NlvarStatus::Ok
    );
    let (mut r, mut q) = (0usize, 0usize);
    assert_eq!(
        unsafe { nlvar_analysis_rank(analysis, &mut r, &mut q) },
        NlvarStatus::Ok
    );
    assert_eq!((r, q), (1, 1));

    // chi then chi_inverse round-trips.
    let z = [0.4f64, 2.2];
    let mut y = [0.0f64; 2];
    assert_eq!(
        unsafe { nlvar_chi(analysis, z.as_ptr(), 2, y.as_mut_ptr()) },
        NlvarStatus::Ok
    );
    let mut back = [0.0f64; 2];
    assert_eq!(
        unsafe { nlvar_chi_inverse(analysis, y.as_ptr(), 2, back.as_mut_ptr()) },
        NlvarStatus::Ok
    );
    assert!((back[0] - z[0]).abs() < 1e-10 && (back[1] - z[1]).abs() < 1e-10);

    // Limit after a span-alpha shock from a steady state stays put.
    let window = [-1.0f64, -1.0];
    let u = [-0.5f64, 0.0];
    let mut zinf = [0.0f64; 2];
    assert_eq!(
        unsafe { nlvar_z_infinity(analysis, u.as_ptr(), window.as_ptr(), zinf.as_mut_ptr()) },
        NlvarStatus::Ok
    );
    assert!((zinf[0] + 1.0).abs() < 1e-8 && (zinf[1] + 1.0).abs() < 1e-8);

    // Multiplier at an interior attractor point kills span alpha.
    let mut theta = [0.0f64; 4];
    let mut rank = 0usize;
    let mut diff: c_int = 0;
    assert_eq!(
        unsafe {
            nlvar_longrun_multipliers(
                analysis,
                window.as_ptr(),
                theta.as_mut_ptr(),
                &mut rank,
                &mut diff,
            )
        },
        NlvarStatus::Ok
    );
    assert_eq!((rank, diff), (1, 1));
    // Theta * (1, 0)' = first column is zero (alpha direction normalized).
    assert!(theta[0].abs() < 1e-9 && theta[2].abs() < 1e-9, "{theta:?}");

    unsafe {
        nlvar_analysis_free(analysis);
        nlvar_model_free(model);
    }
}

#[test]
fn analysis_rejects_non_members() {
    let model = parse(include_str!("../../nlvar/fixtures/ex_v.json"));
    let mut analysis: *mut NlvarAnalysis = ptr::null_mut();
    assert_eq!(
        unsafe { nlvar_analysis_new(model, 1.0, 12, &mut analysis) },
        NlvarStatus::DomainError
    );
    assert!(analysis.is_null());
    unsafe { nlvar_model_free(model) };
}

#[test]
fn simulate_gaussian_fills_buffers_deterministically() {
    let model = parse(ex_l_json());
    let window = [0.0f64, 0.0];
    let sigma = [1.0f64, 0.0, 0.0, 1.0];
    let t = 40usize;
    let mut path1 = vec![0.0f64; t * 2];
    let mut shocks1 = vec![0.0f64; t * 2];
    let mut path2 = vec![0.0f64; t * 2];
    let mut shocks2 = vec![0.0f64; t * 2];
    for (path, shocks) in [(&mut path1, &mut shocks1), (&mut path2, &mut shocks2)] {
        assert_eq!(
            unsafe {
                nlvar_simulate_gaussian(
                    model,
                    window.as_ptr(),
                    sigma.as_ptr(),
                    t,
                    1234,
                    path.as_mut_ptr(),
                    shocks.as_mut_ptr(),
                )
            },
            NlvarStatus::Ok
        );
    }
    assert_eq!(path1, path2);
    assert_eq!(shocks1, shocks2);
    assert!(path1.iter().any(|x| *x != 0.0));
    unsafe { nlvar_model_free(model) };
}

#[test]
fn jsr_bounds_over_flat_buffer() {
    let mats = [
        1.0f64, 1.0, 0.0, 1.0, // [[1,1],[0,1]]
        1.0, 0.0, 1.0, 1.0, // [[1,0],[1,1]]
    ];
    let (mut lower, mut upper) = (0.0f64, 0.0f64);
    let mut certified: c_int = 0;
    assert_eq!(
        unsafe {
            nlvar_jsr_bounds(
                mats.as_ptr(),
                2,
                2,
                10,
                &mut lower,
                &mut upper,
                &mut certified,
            )
        },
        NlvarStatus::Ok
    );
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    assert!(lower <= phi + 1e-9 && phi <= upper + 1e-9);
    assert_eq!(certified, 1);
}

#[test]
fn null_pointers_are_rejected() {
    let mut handle: *mut NlvarModel = ptr::null_mut();
    assert_eq!(
        unsafe { nlvar_model_parse_json(ptr::null(), &mut handle) },
        NlvarStatus::InvalidArgument
    );
    let version = unsafe { CStr::from_ptr(nlvar_version()) };
    assert!(!version.to_str().unwrap().is_empty());
}
