//! Exercises the C ABI end to end from Rust.

use std::ffi::{CStr, CString};
use std::ptr;

use dgtd_ffi::*;

#[test]
fn preset_run_metrics_and_export() {
    unsafe {
        let name = CString::new("toy2x2").unwrap();
        let mut scenario: *mut DgtdScenario = ptr::null_mut();
        assert_eq!(
            dgtd_scenario_preset(name.as_ptr(), &mut scenario),
            DgtdStatus::Ok
        );
        assert_eq!(dgtd_scenario_num_agents(scenario), 2);
        assert_eq!(dgtd_scenario_feature_dim(scenario), 1);
        assert_eq!(dgtd_scenario_num_states(scenario), 2);

        let mut w_star = [0.0f64; 4];
        let mut written = 0usize;
        assert_eq!(
            dgtd_exact_solution(scenario, w_star.as_mut_ptr(), 4, &mut written),
            DgtdStatus::Ok
        );
        assert_eq!(written, 1);
        assert!((w_star[0] - 6.0 / 11.0).abs() < 1e-12);

        let mut bounds = [0.0f64; 4];
        assert_eq!(
            dgtd_solution_bounds(scenario, bounds.as_mut_ptr()),
            DgtdStatus::Ok
        );
        assert!(bounds.iter().all(|b| *b > 0.0));

        let mut run: *mut DgtdRun = ptr::null_mut();
        assert_eq!(
            dgtd_run_simulation(scenario, 11, 2_000, &mut run),
            DgtdStatus::Ok
        );
        assert!(dgtd_run_consensus_penalty(run).is_finite());
        assert!(dgtd_run_max_pairwise_w(run) >= 0.0);
        assert!(dgtd_run_solution_error(run) < 1.0);
        assert!(dgtd_run_empirical_c(run) > 0.0);

        let mut weights = [0.0f64; 2];
        let mut n = 0usize;
        assert_eq!(
            dgtd_run_averaged_weights(run, weights.as_mut_ptr(), 2, &mut n),
            DgtdStatus::Ok
        );
        assert_eq!(n, 2);
        assert!(weights.iter().all(|w| w.is_finite()));

        let dir = tempfile::tempdir().unwrap();
        let csv = CString::new(dir.path().join("trace.csv").to_str().unwrap()).unwrap();
        assert_eq!(dgtd_run_export_trace_csv(run, csv.as_ptr()), DgtdStatus::Ok);
        let text = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
        assert!(text.starts_with("k,consensus_penalty,"));
        assert_eq!(text.lines().count(), 2_001);

        dgtd_run_free(run);
        dgtd_scenario_free(scenario);
    }
}

#[test]
fn identical_seeds_reproduce_through_the_abi() {
    unsafe {
        let name = CString::new("chain4").unwrap();
        let mut scenario: *mut DgtdScenario = ptr::null_mut();
        assert_eq!(
            dgtd_scenario_preset(name.as_ptr(), &mut scenario),
            DgtdStatus::Ok
        );
        let weights = |seed: u64| {
            let mut run: *mut DgtdRun = ptr::null_mut();
            assert_eq!(
                dgtd_run_simulation(scenario, seed, 500, &mut run),
                DgtdStatus::Ok
            );
            let mut out = [0.0f64; 10];
            assert_eq!(
                dgtd_run_averaged_weights(run, out.as_mut_ptr(), 10, ptr::null_mut()),
                DgtdStatus::Ok
            );
            dgtd_run_free(run);
            out
        };
        let a = weights(99);
        let b = weights(99);
        let c = weights(100);
        assert_eq!(a, b);
        assert_ne!(a, c);
        dgtd_scenario_free(scenario);
    }
}

#[test]
fn error_paths_set_status_and_message() {
    unsafe {
        let mut scenario: *mut DgtdScenario = ptr::null_mut();
        let bad = CString::new("not-a-preset").unwrap();
        assert_eq!(
            dgtd_scenario_preset(bad.as_ptr(), &mut scenario),
            DgtdStatus::UnknownPreset
        );
        let msg = CStr::from_ptr(dgtd_last_error_message());
        assert!(msg.to_str().unwrap().contains("not-a-preset"));

        assert_eq!(
            dgtd_scenario_preset(ptr::null(), &mut scenario),
            DgtdStatus::NullArgument
        );

        let name = CString::new("toy2x2").unwrap();
        assert_eq!(
            dgtd_scenario_preset(name.as_ptr(), &mut scenario),
            DgtdStatus::Ok
        );
        let mut tiny = [0.0f64; 0];
        assert_eq!(
            dgtd_exact_solution(scenario, tiny.as_mut_ptr(), 0, ptr::null_mut()),
            DgtdStatus::BufferTooSmall
        );
        dgtd_scenario_free(scenario);
        // Freeing NULL is a no-op.
        dgtd_scenario_free(ptr::null_mut());
        dgtd_run_free(ptr::null_mut());
    }
}

#[test]
fn complexity_matches_library() {
    unsafe {
        let (mut o1, mut o2, mut t) = (0.0f64, 0.0f64, 0.0f64);
        assert_eq!(
            dgtd_sample_complexity(0.1, 0.1, 1.0, 1.0, &mut o1, &mut o2, &mut t),
            DgtdStatus::Ok
        );
        let direct = dgtd::saddle::sample_complexity(0.1, 0.1, 1.0, 1.0).unwrap();
        assert_eq!(o1, direct.omega1);
        assert_eq!(o2, direct.omega2);
        assert_eq!(t, direct.t_required);

        assert_eq!(
            dgtd_sample_complexity(0.1, 2.0, 1.0, 1.0, &mut o1, &mut o2, &mut t),
            DgtdStatus::DomainError
        );
    }
}

#[test]
fn generated_header_covers_the_surface() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dgtd.h");
    let text = std::fs::read_to_string(&header).expect("cbindgen header exists");
    for symbol in [
        "DGTD_H",
        "typedef struct DgtdScenario DgtdScenario;",
        "typedef struct DgtdRun DgtdRun;",
        "dgtd_scenario_preset",
        "dgtd_run_simulation",
        "dgtd_sample_complexity",
        "dgtd_last_error_message",
    ] {
        assert!(text.contains(symbol), "header missing: {symbol}");
    }
}
