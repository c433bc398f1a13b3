use std::ffi::CStr;
use std::ptr;

use mtr_meta_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    let len = unsafe { mtr_last_error_message(buf.as_mut_ptr(), buf.len()) };
    if len == 0 {
        return String::new();
    }
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn dataset(x: &[f64], y: &[f64], n: usize, m: usize, d: usize) -> *mut MtrDataset {
    let mut ds = ptr::null_mut();
    let st = unsafe { mtr_dataset_new(x.as_ptr(), y.as_ptr(), n, m, d, &mut ds) };
    assert_eq!(st, MtrStatus::Ok, "{}", last_error());
    ds
}

#[test]
fn arrmse_through_the_abi() {
    let y = [1.0, 10.0, 2.0, 20.0, 3.0, 30.0];
    let mean = [2.0, 20.0, 2.0, 20.0, 2.0, 20.0];
    let mut out = f64::NAN;
    assert_eq!(unsafe { mtr_arrmse(y.as_ptr(), mean.as_ptr(), 3, 2, &mut out) }, MtrStatus::Ok);
    assert!((out - 1.0).abs() < 1e-12);
    assert_eq!(unsafe { mtr_arrmse(y.as_ptr(), y.as_ptr(), 3, 2, &mut out) }, MtrStatus::Ok);
    assert_eq!(out, 0.0);
}

#[test]
fn null_and_range_errors_set_a_message() {
    let mut out = 0.0;
    assert_eq!(unsafe { mtr_arrmse(ptr::null(), ptr::null(), 3, 2, &mut out) }, MtrStatus::NullPointer);
    assert!(last_error().contains("NULL"));
    assert_eq!(unsafe { mtr_nemenyi_cd(7, 648, 0.3, &mut out) }, MtrStatus::InvalidArgument);
    assert!(last_error().contains("alpha"));
    assert_eq!(unsafe { mtr_nemenyi_cd(7, 648, 0.05, &mut out) }, MtrStatus::Ok);
    assert_eq!(last_error(), "");
}

#[test]
fn error_message_truncates_and_reports_full_length() {
    let mut out = 0.0;
    unsafe { mtr_nemenyi_cd(1, 10, 0.05, &mut out) };
    let full = unsafe { mtr_last_error_message(ptr::null_mut(), 0) };
    assert!(full > 8);
    let mut small = [0 as std::ffi::c_char; 8];
    assert_eq!(unsafe { mtr_last_error_message(small.as_mut_ptr(), small.len()) }, full);
    assert_eq!(unsafe { CStr::from_ptr(small.as_ptr()) }.to_bytes().len(), 7);
}

#[test]
fn dataset_roundtrip_and_shape() {
    let x: Vec<f64> = (0..20).map(|v| v as f64 * 0.1).collect();
    let y: Vec<f64> = (0..10).map(|v| (v as f64).sin()).collect();
    let ds = dataset(&x, &y, 10, 2, 1);
    let (mut n, mut m, mut d) = (0, 0, 0);
    assert_eq!(unsafe { mtr_dataset_shape(ds, &mut n, &mut m, &mut d) }, MtrStatus::Ok);
    assert_eq!((n, m, d), (10, 2, 1));
    let mut xo = vec![0.0; 20];
    let mut yo = vec![0.0; 10];
    assert_eq!(unsafe { mtr_dataset_copy(ds, xo.as_mut_ptr(), yo.as_mut_ptr()) }, MtrStatus::Ok);
    assert_eq!(xo, x);
    assert_eq!(yo, y);
    unsafe { mtr_dataset_free(ds) };
}

#[test]
fn invalid_dataset_is_rejected() {
    let x = [1.0, f64::NAN];
    let y = [0.0, 1.0];
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { mtr_dataset_new(x.as_ptr(), y.as_ptr(), 2, 1, 1, &mut ds) }, MtrStatus::InvalidData);
    assert!(ds.is_null());
}

#[test]
fn meta_features_and_names() {
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { mtr_dataset_generate(80, 5, 2, 1, 1.0, 1, 11, &mut ds) }, MtrStatus::Ok);
    let mut mf = [f64::NAN; 58];
    assert_eq!(unsafe { mtr_meta_features(ds, mf.as_mut_ptr()) }, MtrStatus::Ok);
    assert!(mf.iter().all(|v| v.is_finite()));
    assert_eq!(mf[2], 2.0);
    assert_eq!(mtr_meta_feature_count(), 58);
    let name = unsafe { CStr::from_ptr(mtr_meta_feature_name(10)) };
    assert_eq!(name.to_str().unwrap(), "cor.targets.avg");
    assert!(mtr_meta_feature_name(58).is_null());
    unsafe { mtr_dataset_free(ds) };
}

#[test]
fn bad_generator_arguments() {
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { mtr_dataset_generate(80, 5, 2, 1, 1.0, 9, 11, &mut ds) }, MtrStatus::InvalidArgument);
    assert_eq!(unsafe { mtr_dataset_generate(80, 5, 2, 3, 1.0, 0, 11, &mut ds) }, MtrStatus::InvalidArgument);
}

#[test]
fn cv_evaluate_reports_the_argmin() {
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { mtr_dataset_generate(60, 4, 3, 1, 5.0, 0, 2, &mut ds) }, MtrStatus::Ok);
    let mut scores = [0.0; 4];
    let mut best = MtrMethod::Erc;
    let st = unsafe { mtr_cv_evaluate(ds, MtrBaseKind::Knn as u32, 3.0, 5, 1, scores.as_mut_ptr(), &mut best) };
    assert_eq!(st, MtrStatus::Ok, "{}", last_error());
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(scores[best as usize], min);
    assert_eq!(
        unsafe { mtr_cv_evaluate(ds, 7, 1.0, 5, 1, scores.as_mut_ptr(), &mut best) },
        MtrStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { mtr_cv_evaluate(ds, MtrBaseKind::Knn as u32, 2.5, 5, 1, scores.as_mut_ptr(), &mut best) },
        MtrStatus::InvalidArgument
    );
    unsafe { mtr_dataset_free(ds) };
}

#[test]
fn forest_fit_predict() {
    // label 3 (ERC) when the first feature exceeds 0.5, else 0 (ST)
    let n = 40;
    let features: Vec<f64> = (0..n).flat_map(|i| [i as f64 / n as f64, ((i * 7) % 5) as f64]).collect();
    let labels: Vec<u32> = (0..n).map(|i| if i * 2 >= n { 3 } else { 0 }).collect();
    let mut forest = ptr::null_mut();
    let st = unsafe { mtr_forest_fit(features.as_ptr(), labels.as_ptr(), n, 2, 25, 1, 1, 5, &mut forest) };
    assert_eq!(st, MtrStatus::Ok, "{}", last_error());
    let mut pred = vec![MtrMethod::Sst; n];
    assert_eq!(unsafe { mtr_forest_predict(forest, features.as_ptr(), n, 2, pred.as_mut_ptr()) }, MtrStatus::Ok);
    for (p, l) in pred.iter().zip(&labels) {
        assert_eq!(*p as u32, *l);
    }
    assert_eq!(
        unsafe { mtr_forest_predict(forest, features.as_ptr(), n / 2, 4, pred.as_mut_ptr()) },
        MtrStatus::InvalidArgument
    );
    unsafe { mtr_forest_free(forest) };

    let bad_labels = vec![9u32; n];
    let st = unsafe { mtr_forest_fit(features.as_ptr(), bad_labels.as_ptr(), n, 2, 5, 1, 1, 5, &mut forest) };
    assert_eq!(st, MtrStatus::InvalidArgument);
}

#[test]
fn friedman_hand_case() {
    let scores = [1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0];
    let mut stat = 0.0;
    let mut reject = false;
    assert_eq!(unsafe { mtr_friedman(scores.as_ptr(), 3, 3, 0.05, &mut stat, &mut reject) }, MtrStatus::Ok);
    assert!((stat - 6.0).abs() < 1e-12);
    assert!(reject);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(mtr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
