//! End-to-end checks of the `dgtd` binary: subcommands, exit codes, output
//! artifacts, and the determinism contract.

use std::process::Command;

fn dgtd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dgtd"))
}

#[test]
fn complexity_subcommand_prints_formulas() {
    let out = dgtd()
        .args([
            "complexity", "--epsilon", "0.1", "--delta", "0.1", "--alpha0", "1", "--c", "1",
            "--kappa", "2",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    // omega2 = 4 * (2/1 + 1)^2 / 0.01 = 3600.
    let omega2 = doc["omega2"].as_f64().unwrap();
    assert!((omega2 - 3600.0).abs() <= 1e-9, "omega2 {omega2}");
    let omega1 = 800.0 * (9.0 + 0.5 / 6.0) * (10.0f64).ln();
    assert!((doc["omega1"].as_f64().unwrap() - omega1).abs() < 1e-9 * omega1);
    assert!(doc["t_required"].as_f64().unwrap() >= 3600.0);
    // kappa = 2 makes the consensus requirement equal the base one at eps.
    assert!(doc["consensus_t_required"].as_f64().is_some());
}

#[test]
fn complexity_rejects_bad_delta() {
    let out = dgtd()
        .args([
            "complexity", "--epsilon", "0.1", "--delta", "1.0", "--alpha0", "1", "--c", "1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("delta"));
}

#[test]
fn run_preset_is_deterministic_across_invocations() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let out = dgtd()
            .args([
                "run",
                "--preset",
                "toy2x2",
                "--seeds",
                "7,8",
                "--iterations",
                "400",
                "--out",
            ])
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for name in ["trace_seed7.csv", "trace_seed8.csv", "summary.json"] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between invocations");
    }
}

#[test]
fn run_respects_output_dir_env() {
    let dir = tempfile::tempdir().unwrap();
    let out = dgtd()
        .args([
            "run", "--preset", "toy2x2", "--seeds", "3", "--iterations", "100",
        ])
        .env("DGTD_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("trace_seed3.csv").is_file());
}

#[test]
fn run_spec_file_with_failing_thresholds_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("exp.toml");
    std::fs::write(
        &spec,
        r#"
seeds = [1]

[scenario]
preset = "toy2x2"

[run]
iterations = 200

[thresholds]
solution_rel = 1e-15
min_pass_fraction = 1.0
"#,
    )
    .unwrap();
    let out = dgtd()
        .arg("run")
        .arg(&spec)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "threshold failure must exit 1");
}

#[test]
fn verify_passes_on_presets() {
    for preset in ["toy2x2", "single-agent"] {
        let out = dgtd().args(["verify", "--preset", preset]).output().unwrap();
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(
            out.status.success(),
            "{preset} verify failed:\n{stdout}"
        );
        assert!(stdout.contains("[PASS] kkt-certificate"));
        assert!(stdout.contains("[PASS] brute-force-kkt"));
        assert!(stdout.contains("[PASS] deterministic-oracle"));
    }
}

#[test]
fn shipped_sample_specs_stay_valid() {
    let specs_dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .join("specs");

    // The flagship spec parses and resolves (running its 10x50k iterations
    // is the acceptance suite's job).
    let chain4 = specs_dir.join("chain4.toml");
    let out = dgtd()
        .arg("verify")
        .arg(&chain4)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "chain4 sample spec failed verify: {}",
        String::from_utf8_lossy(&out.stdout)
    );

    // The inline sample runs end to end.
    let dir = tempfile::tempdir().unwrap();
    let out = dgtd()
        .arg("run")
        .arg(specs_dir.join("inline-two-state.toml"))
        .args(["--iterations", "500", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "inline sample spec failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("trace_seed1.csv").is_file());
    assert!(dir.path().join("trace_seed2.csv").is_file());
}

#[test]
fn unknown_preset_reports_config_error() {
    let out = dgtd().args(["run", "--preset", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));
}

#[test]
fn run_overrides_spec_scenario_with_preset_flag() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("exp.toml");
    std::fs::write(
        &spec,
        r#"
seeds = [5]

[scenario]
preset = "chain4"

[run]
iterations = 50
"#,
    )
    .unwrap();
    let out = dgtd()
        .arg("run")
        .arg(&spec)
        .args(["--preset", "toy2x2", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("2 agents, q = 1"), "stdout: {stdout}");
}
