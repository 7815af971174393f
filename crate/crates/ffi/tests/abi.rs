//! Exercises the C ABI end to end from Rust: checkpoints written by the
//! core crate are loaded through `cf_model_load`, and every exported
//! function is driven through raw pointers exactly as a C caller would.

use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use cloudflow::train::checkpoint;
use cloudflow::train::{TrainConfig, Trainer};
use cloudflow::{FlowModel, ModelConfig, Scalar};
use cloudflow_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(cf_last_error_message()) }
        .to_str()
        .unwrap()
        .to_string()
}

/// Writes an untrained toy checkpoint and returns its path.
fn toy_checkpoint<S: Scalar>(dir: &Path, seed: u64) -> PathBuf {
    let model = FlowModel::<S>::new(ModelConfig::toy(seed)).unwrap();
    let trainer = Trainer::new(model, TrainConfig::default()).unwrap();
    let path = dir.join(format!("toy_{}.ckpt", std::any::type_name::<S>()));
    checkpoint::save(&trainer, &path).unwrap();
    path
}

fn load(path: &Path) -> *mut CfModel {
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle: *mut CfModel = ptr::null_mut();
    let status = unsafe { cf_model_load(c_path.as_ptr(), &mut handle) };
    assert_eq!(status, CfStatus::Ok, "{}", last_error());
    assert!(!handle.is_null());
    handle
}

#[test]
fn loading_a_missing_file_reports_io_with_a_message() {
    let c_path = CString::new("/no/such/model.ckpt").unwrap();
    let mut handle: *mut CfModel = ptr::null_mut();
    let status = unsafe { cf_model_load(c_path.as_ptr(), &mut handle) };
    assert_eq!(status, CfStatus::Io);
    assert!(handle.is_null());
    assert!(last_error().contains("/no/such/model.ckpt"), "{}", last_error());
}

#[test]
fn null_arguments_are_rejected_not_dereferenced() {
    let mut handle: *mut CfModel = ptr::null_mut();
    assert_eq!(
        unsafe { cf_model_load(ptr::null(), &mut handle) },
        CfStatus::NullPointer
    );
    let c_path = CString::new("x").unwrap();
    assert_eq!(
        unsafe { cf_model_load(c_path.as_ptr(), ptr::null_mut()) },
        CfStatus::NullPointer
    );
    let mut out = [0.0f64; 3];
    assert_eq!(
        unsafe { cf_model_sample(ptr::null(), 1, 1.0, 0, out.as_mut_ptr()) },
        CfStatus::NullPointer
    );
    assert_eq!(
        unsafe { cf_chamfer(ptr::null(), 1, out.as_ptr(), 1, out.as_mut_ptr()) },
        CfStatus::NullPointer
    );
    // freeing null is a documented no-op
    unsafe { cf_model_free(ptr::null_mut()) };
}

#[test]
fn a_loaded_model_reports_its_precision_and_embedding_size() {
    let dir = tempfile::tempdir().unwrap();
    for (want, path) in [
        (CfPrecision::F32, toy_checkpoint::<f32>(dir.path(), 1)),
        (CfPrecision::F64, toy_checkpoint::<f64>(dir.path(), 1)),
    ] {
        let handle = load(&path);
        let mut precision = CfPrecision::F32;
        assert_eq!(
            unsafe { cf_model_precision(handle, &mut precision) },
            CfStatus::Ok
        );
        assert_eq!(precision, want);

        let mut dim = 0usize;
        assert_eq!(unsafe { cf_model_embed_dim(handle, &mut dim) }, CfStatus::Ok);
        let expect = FlowModel::<f64>::new(ModelConfig::toy(1)).unwrap().embed_dim();
        assert_eq!(dim, expect);
        unsafe { cf_model_free(handle) };
    }
}

#[test]
fn sampling_is_deterministic_per_seed_and_respects_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let handle = load(&toy_checkpoint::<f64>(dir.path(), 2));

    let n = 20usize;
    let mut a = vec![0.0f64; 3 * n];
    let mut b = vec![0.0f64; 3 * n];
    let mut c = vec![0.0f64; 3 * n];
    unsafe {
        assert_eq!(cf_model_sample(handle, n, 1.0, 7, a.as_mut_ptr()), CfStatus::Ok);
        assert_eq!(cf_model_sample(handle, n, 1.0, 7, b.as_mut_ptr()), CfStatus::Ok);
        assert_eq!(cf_model_sample(handle, n, 1.0, 8, c.as_mut_ptr()), CfStatus::Ok);
    }
    assert_eq!(a, b, "same seed must sample identically");
    assert_ne!(a, c, "different seeds must sample differently");
    assert!(a.iter().all(|v| v.is_finite()));

    // invalid arguments surface as status codes, not crashes
    let status = unsafe { cf_model_sample(handle, n, -1.0, 0, a.as_mut_ptr()) };
    assert_eq!(status, CfStatus::InvalidArgument);
    assert!(last_error().contains("temperature"), "{}", last_error());
    let status = unsafe { cf_model_sample(handle, 0, 1.0, 0, a.as_mut_ptr()) };
    assert_eq!(status, CfStatus::InvalidArgument);

    unsafe { cf_model_free(handle) };
}

#[test]
fn ffi_results_match_the_core_crate_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let path = toy_checkpoint::<f64>(dir.path(), 3);
    let handle = load(&path);
    let core_model = checkpoint::load_model::<f64>(&path).unwrap();

    // an arbitrary but fixed cloud
    let cloud: Vec<f64> = (0..30).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.5).collect();
    let n = cloud.len() / 3;

    let mut dim = 0usize;
    unsafe { cf_model_embed_dim(handle, &mut dim) };
    let mut embedding = vec![0.0f64; dim];
    let status = unsafe { cf_model_embed(handle, cloud.as_ptr(), n, embedding.as_mut_ptr()) };
    assert_eq!(status, CfStatus::Ok, "{}", last_error());
    let (expect_e, expect_logp) = core_model.embed(&cloud).unwrap();
    assert_eq!(embedding, expect_e);

    let mut nll = 0.0f64;
    let status = unsafe { cf_model_embedding_nll(handle, cloud.as_ptr(), n, &mut nll) };
    assert_eq!(status, CfStatus::Ok, "{}", last_error());
    assert_eq!(nll, -expect_logp);

    unsafe { cf_model_free(handle) };
}

#[test]
fn reconstruction_resizes_clouds_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let handle = load(&toy_checkpoint::<f64>(dir.path(), 4));
    let cloud: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin() * 0.5).collect();
    let mut out = vec![f64::NAN; 3 * 13];
    let status = unsafe {
        cf_model_reconstruct(handle, cloud.as_ptr(), 8, 13, 5, out.as_mut_ptr())
    };
    assert_eq!(status, CfStatus::Ok, "{}", last_error());
    assert!(out.iter().all(|v| v.is_finite()));
    unsafe { cf_model_free(handle) };
}

#[test]
fn f32_models_accept_and_return_double_buffers() {
    let dir = tempfile::tempdir().unwrap();
    let handle = load(&toy_checkpoint::<f32>(dir.path(), 5));
    let cloud: Vec<f64> = (0..30).map(|i| (i as f64 * 0.21).cos() * 0.4).collect();
    let mut nll = f64::NAN;
    let status = unsafe { cf_model_embedding_nll(handle, cloud.as_ptr(), 10, &mut nll) };
    assert_eq!(status, CfStatus::Ok, "{}", last_error());
    assert!(nll.is_finite());
    let mut out = vec![f64::NAN; 3 * 6];
    let status = unsafe { cf_model_sample(handle, 6, 0.5, 1, out.as_mut_ptr()) };
    assert_eq!(status, CfStatus::Ok, "{}", last_error());
    assert!(out.iter().all(|v| v.is_finite()));
    unsafe { cf_model_free(handle) };
}

#[test]
fn alignment_never_does_worse_than_the_identity_pose() {
    let dir = tempfile::tempdir().unwrap();
    let handle = load(&toy_checkpoint::<f64>(dir.path(), 6));
    let cloud: Vec<f64> = (0..36).map(|i| ((i * 5 + 1) % 13) as f64 / 13.0 - 0.5).collect();
    let n = cloud.len() / 3;
    let mut axis_angle = [f64::NAN; 3];
    let mut aligned = vec![f64::NAN; cloud.len()];
    let mut nll = f64::NAN;
    let mut identity_nll = f64::NAN;
    let status = unsafe {
        cf_model_align(
            handle,
            cloud.as_ptr(),
            n,
            1,
            3,
            0,
            axis_angle.as_mut_ptr(),
            aligned.as_mut_ptr(),
            &mut nll,
            &mut identity_nll,
        )
    };
    assert_eq!(status, CfStatus::Ok, "{}", last_error());
    assert!(axis_angle.iter().all(|v| v.is_finite()));
    assert!(aligned.iter().all(|v| v.is_finite()));
    assert!(nll <= identity_nll, "nll {nll} vs identity {identity_nll}");

    // the optional outputs really are optional
    let status = unsafe {
        cf_model_align(
            handle,
            cloud.as_ptr(),
            n,
            1,
            3,
            0,
            axis_angle.as_mut_ptr(),
            ptr::null_mut(),
            ptr::null_mut(),
            ptr::null_mut(),
        )
    };
    assert_eq!(status, CfStatus::Ok, "{}", last_error());
    unsafe { cf_model_free(handle) };
}

#[test]
fn distance_functions_match_the_core_metrics() {
    use cloudflow::data::PointCloud;
    use cloudflow::metrics;

    let a: Vec<f64> = vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
    let b: Vec<f64> = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
    let pa = PointCloud::from_flat(&a).unwrap();
    let pb = PointCloud::from_flat(&b).unwrap();

    let mut d = f64::NAN;
    let status = unsafe { cf_chamfer(a.as_ptr(), 2, b.as_ptr(), 2, &mut d) };
    assert_eq!(status, CfStatus::Ok, "{}", last_error());
    assert_eq!(d, metrics::chamfer(&pa, &pb).unwrap());
    assert_eq!(d, 2.0); // every nearest neighbor is at squared distance 1

    let status = unsafe { cf_emd(a.as_ptr(), 2, b.as_ptr(), 2, &mut d) };
    assert_eq!(status, CfStatus::Ok, "{}", last_error());
    assert_eq!(d, metrics::emd(&pa, &pb).unwrap());
    assert_eq!(d, 1.0); // optimal matching moves each point by 1

    // earth-mover requires equal sizes
    let status = unsafe { cf_emd(a.as_ptr(), 2, b.as_ptr(), 1, &mut d) };
    assert_eq!(status, CfStatus::InvalidArgument);
    assert!(last_error().contains("resample"), "{}", last_error());
}

#[test]
fn bad_cloud_data_is_reported_not_propagated() {
    let dir = tempfile::tempdir().unwrap();
    let handle = load(&toy_checkpoint::<f64>(dir.path(), 7));
    let cloud = vec![f64::NAN; 9];
    let mut nll = 0.0f64;
    let status = unsafe { cf_model_embedding_nll(handle, cloud.as_ptr(), 3, &mut nll) };
    assert_ne!(status, CfStatus::Ok);
    assert!(!last_error().is_empty());
    unsafe { cf_model_free(handle) };
}
