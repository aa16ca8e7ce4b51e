//! C ABI for the distributed GTD policy-evaluation library.
//!
//! Conventions: objects are opaque handles created and freed by this
//! library; every fallible call returns a [`DgtdStatus`] and writes results
//! through out-pointers; `dgtd_last_error_message` describes the most recent
//! failure on the calling thread.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use dgtd::engine::{run, OutputSelect, RewardNoise, RunConfig, RunTrace};
use dgtd::graph::GraphDistribution;
use dgtd::harness::{
    export_trace, load_spec, preset, resolve_scenario, PresetDefaults,
};
use dgtd::mdp::{exact_global_solution, FeatureMap, MdpModel};
use dgtd::saddle::{sample_complexity, solution_bounds, SaddleProblem};
use dgtd::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgtdStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    UnknownPreset = 3,
    InvalidConfig = 4,
    DomainError = 5,
    DimensionMismatch = 6,
    NotConnected = 7,
    SingularMatrix = 8,
    NonErgodic = 9,
    NoConvergence = 10,
    BufferTooSmall = 11,
    IoError = 12,
    InternalError = 13,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> DgtdStatus {
    match err {
        Error::NonErgodic(_) => DgtdStatus::NonErgodic,
        Error::RankDeficient(_) | Error::SingularGram | Error::SingularB
        | Error::SingularSystem => DgtdStatus::SingularMatrix,
        Error::DimensionMismatch(_) => DgtdStatus::DimensionMismatch,
        Error::NotConnected(_) => DgtdStatus::NotConnected,
        Error::DomainError(_) => DgtdStatus::DomainError,
        Error::NoConvergence(_) => DgtdStatus::NoConvergence,
        Error::UnknownPreset(_) => DgtdStatus::UnknownPreset,
        Error::Config(_) => DgtdStatus::InvalidConfig,
        Error::Io(_) => DgtdStatus::IoError,
    }
}

fn fail(err: Error) -> DgtdStatus {
    let code = status_of(&err);
    set_error(&err.to_string());
    code
}

fn guard<F: FnOnce() -> DgtdStatus>(body: F) -> DgtdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            DgtdStatus::InternalError
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, DgtdStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(DgtdStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        DgtdStatus::InvalidUtf8
    })
}

/// An assembled scenario: model, features, communication graph, and run
/// defaults.
pub struct DgtdScenario {
    model: MdpModel,
    features: FeatureMap,
    graph: GraphDistribution,
    defaults: PresetDefaults,
}

/// A completed simulation run with its trace and reference solution.
pub struct DgtdRun {
    trace: RunTrace,
    num_agents: usize,
    feature_dim: usize,
    consensus_penalty: f64,
    max_pairwise_w: f64,
    solution_error: f64,
}

/// Last error message for this thread; the pointer stays valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dgtd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version string (static storage).
#[no_mangle]
pub extern "C" fn dgtd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Builds a named preset scenario (chain4, gridworld, single-agent, toy2x2).
///
/// # Safety
/// `name` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgtd_scenario_preset(
    name: *const c_char,
    out: *mut *mut DgtdScenario,
) -> DgtdStatus {
    guard(|| {
        if out.is_null() {
            set_error("null out pointer");
            return DgtdStatus::NullArgument;
        }
        let name = match cstr_arg(name) {
            Ok(s) => s,
            Err(code) => return code,
        };
        match preset(name) {
            Ok((model, features, graph, defaults)) => {
                let handle = Box::new(DgtdScenario {
                    model,
                    features,
                    graph,
                    defaults,
                });
                *out = Box::into_raw(handle);
                DgtdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Loads the scenario section of an experiment spec file (TOML).
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgtd_scenario_from_spec_file(
    path: *const c_char,
    out: *mut *mut DgtdScenario,
) -> DgtdStatus {
    guard(|| {
        if out.is_null() {
            set_error("null out pointer");
            return DgtdStatus::NullArgument;
        }
        let path = match cstr_arg(path) {
            Ok(s) => PathBuf::from(s),
            Err(code) => return code,
        };
        let spec = match load_spec(&path) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        match resolve_scenario(&spec, &base) {
            Ok(resolved) => {
                let handle = Box::new(DgtdScenario {
                    model: resolved.model,
                    features: resolved.features,
                    graph: resolved.graph,
                    defaults: resolved.defaults,
                });
                *out = Box::into_raw(handle);
                DgtdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Frees a scenario handle. Passing NULL is a no-op.
///
/// # Safety
/// `scenario` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dgtd_scenario_free(scenario: *mut DgtdScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of agents in the scenario; 0 on NULL.
///
/// # Safety
/// `scenario` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dgtd_scenario_num_agents(scenario: *const DgtdScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.model.num_agents())
}

/// Feature dimension q; 0 on NULL.
///
/// # Safety
/// `scenario` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dgtd_scenario_feature_dim(scenario: *const DgtdScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.features.dim())
}

/// Number of states |S|; 0 on NULL.
///
/// # Safety
/// `scenario` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dgtd_scenario_num_states(scenario: *const DgtdScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.model.num_states())
}

/// Writes the closed-form solution w* (length q) into `out`.
///
/// # Safety
/// `out` must point to at least `len` writable doubles; `written` may be
/// NULL.
#[no_mangle]
pub unsafe extern "C" fn dgtd_exact_solution(
    scenario: *const DgtdScenario,
    out: *mut f64,
    len: usize,
    written: *mut usize,
) -> DgtdStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            set_error("null scenario");
            return DgtdStatus::NullArgument;
        };
        if out.is_null() {
            set_error("null out buffer");
            return DgtdStatus::NullArgument;
        }
        let mats = match dgtd::mdp::assemble_bellman(&s.model, &s.features) {
            Ok(m) => m,
            Err(e) => return fail(e),
        };
        let w = match exact_global_solution(&mats, &s.model) {
            Ok(w) => w,
            Err(e) => return fail(e),
        };
        if len < w.len() {
            set_error("output buffer too small for w*");
            return DgtdStatus::BufferTooSmall;
        }
        for (i, x) in w.iter().enumerate() {
            *out.add(i) = *x;
        }
        if !written.is_null() {
            *written = w.len();
        }
        DgtdStatus::Ok
    })
}

/// Writes the four analytic solution bounds (theta, v, mu, w) into `out4`.
///
/// # Safety
/// `out4` must point to at least 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dgtd_solution_bounds(
    scenario: *const DgtdScenario,
    out4: *mut f64,
) -> DgtdStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            set_error("null scenario");
            return DgtdStatus::NullArgument;
        };
        if out4.is_null() {
            set_error("null out buffer");
            return DgtdStatus::NullArgument;
        }
        let problem = match SaddleProblem::assemble(
            &s.model,
            &s.features,
            &s.graph,
            s.defaults.kappa,
            s.defaults.rho,
            2.0,
        ) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match solution_bounds(&problem, &s.model) {
            Ok(b) => {
                *out4.add(0) = b.theta;
                *out4.add(1) = b.v;
                *out4.add(2) = b.mu;
                *out4.add(3) = b.w;
                DgtdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Runs the stochastic engine for `iterations` steps (0 uses the scenario
/// default) with the given seed, returning a run handle.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgtd_run_simulation(
    scenario: *const DgtdScenario,
    seed: u64,
    iterations: u64,
    out: *mut *mut DgtdRun,
) -> DgtdStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            set_error("null scenario");
            return DgtdStatus::NullArgument;
        };
        if out.is_null() {
            set_error("null out pointer");
            return DgtdStatus::NullArgument;
        }
        let problem = match SaddleProblem::assemble(
            &s.model,
            &s.features,
            &s.graph,
            s.defaults.kappa,
            s.defaults.rho,
            2.0,
        ) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        let cfg = RunConfig {
            total_iterations: if iterations == 0 {
                s.defaults.iterations
            } else {
                iterations as usize
            },
            kappa: s.defaults.kappa,
            rho: s.defaults.rho,
            schedule: s.defaults.schedule,
            seed,
            reward_noise: RewardNoise::None,
            output: OutputSelect::Both,
            independent_chains: false,
            stride: None,
        };
        let trace = match run(&problem, &s.model, &s.features, &s.graph, &cfg) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        let q = s.features.dim();
        let mats = problem.mats();
        let w_star = match exact_global_solution(mats, &s.model) {
            Ok(w) => w,
            Err(e) => return fail(e),
        };
        let avg = &trace.averaged;
        let consensus_penalty = problem.mean_block().quadratic_form(&avg.w);
        let max_pairwise_w = avg.max_pairwise_w_distance(q);
        let solution_error = (0..s.model.num_agents())
            .map(|i| (avg.w_block(i, q) - &w_star).amax())
            .fold(0.0f64, f64::max);
        let handle = Box::new(DgtdRun {
            trace,
            num_agents: s.model.num_agents(),
            feature_dim: q,
            consensus_penalty,
            max_pairwise_w,
            solution_error,
        });
        *out = Box::into_raw(handle);
        DgtdStatus::Ok
    })
}

/// Frees a run handle. Passing NULL is a no-op.
///
/// # Safety
/// `run` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dgtd_run_free(run: *mut DgtdRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Consensus penalty of the averaged iterate; NaN on NULL.
///
/// # Safety
/// `run` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dgtd_run_consensus_penalty(run: *const DgtdRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.consensus_penalty)
}

/// Max pairwise infinity distance between averaged per-agent weights; NaN on
/// NULL.
///
/// # Safety
/// `run` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dgtd_run_max_pairwise_w(run: *const DgtdRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.max_pairwise_w)
}

/// Max over agents of the infinity distance between the averaged weights and
/// w*; NaN on NULL.
///
/// # Safety
/// `run` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dgtd_run_solution_error(run: *const DgtdRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.solution_error)
}

/// Max observed stochastic-gradient norm; NaN on NULL.
///
/// # Safety
/// `run` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dgtd_run_empirical_c(run: *const DgtdRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.trace.empirical_c)
}

/// Writes the averaged stacked weights (length N*q) into `out`.
///
/// # Safety
/// `out` must point to at least `len` writable doubles; `written` may be
/// NULL.
#[no_mangle]
pub unsafe extern "C" fn dgtd_run_averaged_weights(
    run: *const DgtdRun,
    out: *mut f64,
    len: usize,
    written: *mut usize,
) -> DgtdStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            set_error("null run");
            return DgtdStatus::NullArgument;
        };
        if out.is_null() {
            set_error("null out buffer");
            return DgtdStatus::NullArgument;
        }
        let w = &r.trace.averaged.w;
        if len < w.len() {
            set_error("output buffer too small for averaged weights");
            return DgtdStatus::BufferTooSmall;
        }
        for (i, x) in w.iter().enumerate() {
            *out.add(i) = *x;
        }
        if !written.is_null() {
            *written = w.len();
        }
        DgtdStatus::Ok
    })
}

/// Exports the run trace as CSV to `path`.
///
/// # Safety
/// `run` must be a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dgtd_run_export_trace_csv(
    run: *const DgtdRun,
    path: *const c_char,
) -> DgtdStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            set_error("null run");
            return DgtdStatus::NullArgument;
        };
        let path = match cstr_arg(path) {
            Ok(s) => PathBuf::from(s),
            Err(code) => return code,
        };
        let _ = r.feature_dim;
        match export_trace(&r.trace, r.num_agents, &path) {
            Ok(()) => DgtdStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Evaluates the finite-time complexity formulas Omega_1, Omega_2 and their
/// maximum.
///
/// # Safety
/// The out pointers must each be NULL or valid writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dgtd_sample_complexity(
    epsilon: f64,
    delta: f64,
    alpha0: f64,
    c: f64,
    omega1: *mut f64,
    omega2: *mut f64,
    t_required: *mut f64,
) -> DgtdStatus {
    guard(|| match sample_complexity(epsilon, delta, alpha0, c) {
        Ok(sc) => {
            if !omega1.is_null() {
                *omega1 = sc.omega1;
            }
            if !omega2.is_null() {
                *omega2 = sc.omega2;
            }
            if !t_required.is_null() {
                *t_required = sc.t_required;
            }
            DgtdStatus::Ok
        }
        Err(e) => fail(e),
    })
}

#[allow(unused)]
fn assert_send_handles() {
    fn is_send<T: Send>() {}
    is_send::<DgtdScenario>();
    is_send::<DgtdRun>();
}
