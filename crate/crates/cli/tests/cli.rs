//! End-to-end checks of the `liftmac` binary: exit codes, determinism of the
//! result payloads, and the frame dump/replay loop.

use std::path::Path;
use std::process::Command;

fn liftmac() -> Command {
    Command::new(env!("CARGO_BIN_EXE_liftmac"))
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

#[test]
fn de_results_are_byte_deterministic() {
    let base = std::env::temp_dir().join("liftmac-test-de");
    let (a, b) = (base.join("a"), base.join("b"));
    for dir in [&a, &b] {
        let status = liftmac()
            .args(["de", "--alpha", "1", "--snr", "6:2:10"])
            .arg("--out")
            .arg(dir)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(read(&a, "results.csv"), read(&b, "results.csv"));
    assert_eq!(read(&a, "results.json"), read(&b, "results.json"));
    let csv = String::from_utf8(read(&a, "results.csv")).unwrap();
    assert!(csv.starts_with("alpha,snr_db,sigma2,gamma_sq,pb,multiplicity\n"));
    // the zero-load reference rows are present
    assert!(csv.lines().any(|l| l.starts_with("0,")));
}

#[test]
fn zero_load_curve_equals_reference() {
    let dir = std::env::temp_dir().join("liftmac-test-de0");
    let status = liftmac()
        .args(["de", "--alpha", "0", "--snr", "4:2:8"])
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let json: serde_json::Value = serde_json::from_slice(&read(&dir, "results.json")).unwrap();
    for p in json["points"].as_array().unwrap() {
        assert_eq!(p["pb"], p["pb_awgn"]);
    }
}

#[test]
fn threshold_window_zero_matches_uncoupled_boundary() {
    let dir = std::env::temp_dir().join("liftmac-test-th");
    let status = liftmac()
        .args(["threshold", "--window", "0", "--alpha-tol", "0.02"])
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let json: serde_json::Value = serde_json::from_slice(&read(&dir, "results.json")).unwrap();
    let th = json[0]["alpha_threshold"].as_f64().unwrap();
    assert!((th - 2.085).abs() < 0.05, "threshold {th}");
    assert_eq!(json[0]["censored"], serde_json::Value::Bool(false));
}

#[test]
fn simulate_dump_and_replay_agree() {
    let dir = std::env::temp_dir().join("liftmac-test-sim");
    let frames = dir.join("frames");
    let status = liftmac()
        .args([
            "simulate", "--k", "4", "--n", "8", "--m", "2", "--l", "4", "--snr", "8", "--trials",
            "3", "--iterations", "10", "--seed", "5",
        ])
        .arg("--dump-frames")
        .arg(&frames)
        .arg("--out")
        .arg(dir.join("run"))
        .status()
        .unwrap();
    assert!(status.success());
    let json: serde_json::Value =
        serde_json::from_slice(&read(&dir.join("run"), "results.json")).unwrap();
    let first = &json["trials"][0];
    let seed = first["seed"].as_u64().unwrap();
    let errors = first["errors"].as_u64().unwrap();

    let replay_dir = dir.join("replay");
    let status = liftmac()
        .args(["simulate", "--iterations", "10"])
        .arg("--replay")
        .arg(frames.join(format!("frame-{seed}.lmfr")))
        .arg("--out")
        .arg(&replay_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let replay: serde_json::Value = serde_json::from_slice(&read(&replay_dir, "results.json")).unwrap();
    assert_eq!(replay["report"]["bit_error_count"].as_u64().unwrap(), errors);
}

#[test]
fn verify_suites_pass() {
    let dir = std::env::temp_dir().join("liftmac-test-verify");
    let status = liftmac()
        .args(["verify", "--appendix", "b", "--n", "16", "--samples", "5000", "--gkernel"])
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let status = liftmac()
        .args(["verify", "--appendix", "a", "--alpha", "2.5"])
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn usage_errors_exit_two() {
    let status = liftmac().arg("frobnicate").status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = liftmac().args(["verify"]).arg("--out").arg(std::env::temp_dir().join("liftmac-test-u")).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = std::env::temp_dir().join("liftmac-test-cfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("defaults.toml");
    std::fs::write(&cfg, "[de]\nalpha = 0.5\nsnr = \"6:2:8\"\n").unwrap();
    let status = liftmac()
        .args(["de"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("run"))
        .status()
        .unwrap();
    assert!(status.success());
    let json: serde_json::Value = serde_json::from_slice(&read(&dir.join("run"), "results.json")).unwrap();
    assert_eq!(json["alpha"].as_f64().unwrap(), 0.5);
    // explicit flag overrides the file
    let status = liftmac()
        .args(["de", "--alpha", "0.25"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("run2"))
        .status()
        .unwrap();
    assert!(status.success());
    let json: serde_json::Value = serde_json::from_slice(&read(&dir.join("run2"), "results.json")).unwrap();
    assert_eq!(json["alpha"].as_f64().unwrap(), 0.25);
}
