use std::ffi::{CStr, CString};
use std::ptr;

use gadsel_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        gadsel_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn synthetic(n: usize) -> *mut GadselGraph {
    let mut g = ptr::null_mut();
    let st = unsafe { gadsel_graph_synthetic(n, 4, 3, 0.3, 0.02, 5, &mut g) };
    assert_eq!(st, GadselStatus::Ok);
    g
}

#[test]
fn csm_worked_example() {
    let s = [0.9, 0.8, 0.1, 0.1, 0.1];
    let mut t = 0.0;
    unsafe {
        assert_eq!(gadsel_csm(s.as_ptr(), 5, 2, GadselCsmVariant::Original, &mut t), GadselStatus::Ok);
        assert!((t - 15.0 * 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(gadsel_csm(s.as_ptr(), 5, 2, GadselCsmVariant::Improved, &mut t), GadselStatus::Ok);
        assert!((t - 15.0).abs() < 1e-9);
        // flat top and rest: zero spread, positive gap
        let flat = [2.0, 2.0, 1.0, 1.0];
        assert_eq!(gadsel_csm(flat.as_ptr(), 4, 2, GadselCsmVariant::Improved, &mut t), GadselStatus::Ok);
        assert_eq!(t, f64::INFINITY);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let s = [1.0, 2.0, 3.0];
    let mut t = -1.0;
    unsafe {
        let st = gadsel_csm(s.as_ptr(), 3, 3, GadselCsmVariant::Improved, &mut t);
        assert_eq!(st, GadselStatus::InvalidArgument);
        assert_eq!(t, -1.0);
        assert!(!last_error().is_empty());

        assert_eq!(gadsel_csm(ptr::null(), 3, 1, GadselCsmVariant::Improved, &mut t), GadselStatus::NullPointer);
        assert_eq!(gadsel_csm(s.as_ptr(), 3, 1, GadselCsmVariant::Improved, ptr::null_mut()), GadselStatus::NullPointer);

        assert_eq!(gadsel_expected_improvement(0.0, 1.0, 0.0, &mut t), GadselStatus::Ok);
        assert_eq!(gadsel_last_error_message(ptr::null_mut(), 0), 0);
        assert!((t - 0.398942).abs() < 1e-6);
        assert_eq!(gadsel_expected_improvement(0.0, -1.0, 0.0, &mut t), GadselStatus::InvalidArgument);
    }
}

#[test]
fn truncated_error_message() {
    let s = [1.0];
    let mut t = 0.0;
    unsafe {
        gadsel_csm(s.as_ptr(), 1, 1, GadselCsmVariant::Improved, &mut t);
        let full = gadsel_last_error_message(ptr::null_mut(), 0);
        let mut buf = [0x7f as std::ffi::c_char; 4];
        assert_eq!(gadsel_last_error_message(buf.as_mut_ptr(), 4), full);
        assert_eq!(buf[3], 0);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_bytes().len(), 3);
    }
}

#[test]
fn roc_auc_through_abi() {
    let s = [0.1, 0.4, 0.35, 0.8];
    let l = [0u8, 0, 1, 1];
    let mut auc = 0.0;
    unsafe {
        assert_eq!(gadsel_roc_auc(s.as_ptr(), l.as_ptr(), 4, &mut auc), GadselStatus::Ok);
    }
    assert!((auc - 0.75).abs() < 1e-12);
    let bad = [0u8, 0, 0, 0];
    unsafe {
        assert_eq!(gadsel_roc_auc(s.as_ptr(), bad.as_ptr(), 4, &mut auc), GadselStatus::InvalidArgument);
    }
}

#[test]
fn graph_lifecycle_and_training() {
    let edges: [u64; 6] = [0, 1, 1, 2, 2, 0];
    let attrs = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(gadsel_graph_new(3, edges.as_ptr(), 3, attrs.as_ptr(), 2, &mut g), GadselStatus::Ok);
        assert_eq!(gadsel_graph_node_count(g), 3);
        assert_eq!(gadsel_graph_attribute_dim(g), 2);
        assert_eq!(gadsel_graph_edge_count(g), 3);
        gadsel_graph_free(g);

        let self_loop: [u64; 2] = [1, 1];
        let mut h = ptr::null_mut();
        assert_eq!(gadsel_graph_new(3, self_loop.as_ptr(), 1, attrs.as_ptr(), 2, &mut h), GadselStatus::InvalidArgument);
        assert!(h.is_null());
        assert_eq!(gadsel_graph_node_count(ptr::null()), 0);
        gadsel_graph_free(ptr::null_mut());
    }

    let base = synthetic(60);
    let mut labels = vec![0u8; 60];
    let mut g = ptr::null_mut();
    let mut training = gadsel_training_defaults();
    training.epochs = 20;
    training.hidden_dim = 8;
    training.embed_dim = 4;
    training.rounds = 2;
    let mut a = vec![0.0; 60];
    let mut b = vec![0.0; 60];
    unsafe {
        assert_eq!(
            gadsel_graph_inject(base, 6, 3, 10, 1, labels.as_mut_ptr(), 60, &mut g),
            GadselStatus::Ok
        );
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 6);
        assert!(gadsel_graph_edge_count(g) >= gadsel_graph_edge_count(base));

        for det in [GadselDetector::GenerativeAe, GadselDetector::ContrastiveEgonet] {
            assert_eq!(gadsel_train(g, det, 0.5, 3, &training, 9, a.as_mut_ptr(), 60), GadselStatus::Ok);
            assert_eq!(gadsel_train(g, det, 0.5, 3, &training, 9, b.as_mut_ptr(), 60), GadselStatus::Ok);
            assert_eq!(a, b);
            assert!(a.iter().all(|v| v.is_finite()));
        }
        assert_eq!(
            gadsel_train(g, GadselDetector::GenerativeAe, 1.5, 0, &training, 9, a.as_mut_ptr(), 60),
            GadselStatus::InvalidArgument
        );
        assert_eq!(
            gadsel_train(g, GadselDetector::GenerativeAe, 0.5, 0, &training, 9, a.as_mut_ptr(), 59),
            GadselStatus::BufferTooSmall
        );
        training.max_nodes = 10;
        assert_eq!(
            gadsel_train(g, GadselDetector::GenerativeAe, 0.5, 0, &training, 9, a.as_mut_ptr(), 60),
            GadselStatus::Capacity
        );
        gadsel_graph_free(g);
        gadsel_graph_free(base);
    }
}

#[test]
fn missing_files_and_bad_config() {
    let missing = CString::new("/nonexistent/edges.txt").unwrap();
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(gadsel_graph_load(missing.as_ptr(), missing.as_ptr(), &mut g), GadselStatus::Io);
        assert!(g.is_null());
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "detector = \"nope\"\n").unwrap();
    let cfg = CString::new(cfg.to_str().unwrap()).unwrap();
    let out = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(gadsel_run_experiment(cfg.as_ptr(), out.as_ptr()), GadselStatus::Config);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(gadsel_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
