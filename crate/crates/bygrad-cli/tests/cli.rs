//! End-to-end checks of the CLI surface.

use std::path::Path;
use std::process::Command;

fn bygrad() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bygrad"))
}

const SMALL_TRAIN: &str = r#"
seeds = [1, 2]

[base]
n = 12
h = 9
d = 3
q = 6
iterations = 20
gamma = 1e-6
sigma_h = 0.3
aggregator = "cwtm:0.1"
attack = "signflip:-2"
log_stride = 5

[[runs]]
method = "baseline_va"
label = "va"
aggregator = "mean"

[[runs]]
method = "com_lad"
label = "com_lad3"
compressor = "sparsify:2"
"#;

#[test]
fn train_writes_records_manifest_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    std::fs::write(&config, SMALL_TRAIN).unwrap();
    let out = dir.path().join("out");

    let run = || {
        bygrad()
            .args(["train", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap()
    };
    let first = run();
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let manifest = std::fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert!(manifest.lines().count() == 5, "header + 4 runs:\n{manifest}");
    let record_file = manifest.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    let record_before = std::fs::read_to_string(out.join(&record_file)).unwrap();
    assert!(record_before.starts_with("t,loss,grad_norm_sq,agg_deviation_sq,uplink_scalars\n"));

    // identical rerun overwrites identically
    let second = run();
    assert!(second.status.success());
    let record_after = std::fs::read_to_string(out.join(&record_file)).unwrap();
    assert_eq!(record_before, record_after);
    assert_eq!(manifest, std::fs::read_to_string(out.join("manifest.csv")).unwrap());
}

#[test]
fn train_seed_override_runs_single_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    std::fs::write(&config, SMALL_TRAIN).unwrap();
    let out = dir.path().join("out");
    let status = bygrad()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "9", "--jobs", "1"])
        .status()
        .unwrap();
    assert!(status.success());
    let manifest = std::fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 3, "header + 2 runs");
    assert!(manifest.lines().skip(1).all(|l| l.contains(",9,")));
}

#[test]
fn invalid_config_fails_with_named_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, SMALL_TRAIN.replace("sigma_h = 0.3", "sigma_h = 0.3\nbogus = 1"))
        .unwrap();
    let output = bygrad()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("bogus"), "stderr: {err}");
}

#[test]
fn empty_sweep_is_a_successful_noop() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("empty.toml");
    std::fs::write(
        &config,
        "seeds = [1]\n[base]\nn = 8\nh = 6\nq = 4\niterations = 5\ngamma = 1e-6\naggregator = \"mean\"\n",
    )
    .unwrap();
    let output = bygrad()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).contains("nothing to do"));
}

#[test]
fn theory_presets_emit_monotone_curves() {
    let dir = tempfile::tempdir().unwrap();
    let status = bygrad()
        .args(["theory", "--preset", "fig2", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let curve = std::fs::read_to_string(dir.path().join("fig2_delta_curve.csv")).unwrap();
    let values: Vec<f64> = curve
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 61);
    assert!(values.windows(2).all(|w| w[1] > w[0]), "delta curve must rise");

    let status = bygrad()
        .args(["theory", "--preset", "fig3", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let curve = std::fs::read_to_string(dir.path().join("fig3_d_curve.csv")).unwrap();
    let values: Vec<f64> = curve
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 100);
    assert!(values.windows(2).all(|w| w[1] < w[0]), "load curve must fall");
}

#[test]
fn experiment_presets_parse_and_expand() {
    for name in ["fig4", "fig5a", "fig5b", "fig7"] {
        let text = std::fs::read_to_string(
            Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../presets/{name}.toml")),
        )
        .unwrap();
        let cfg = bygrad::config::TrainConfig::parse(&text).unwrap();
        let entries = cfg.expand().unwrap();
        assert!(!entries.is_empty(), "{name} expands to runs");
        assert_eq!(entries.len() % cfg.seeds.len(), 0);
    }
}

#[test]
fn verify_quick_passes_and_mutation_fails() {
    let ok = bygrad().args(["verify", "--quick"]).output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("OK:"));

    let bad = bygrad()
        .args(["verify", "--quick", "--mutate-weight-formula"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL weight_deviation_enumeration"));
}

#[test]
fn plot_handles_manifests_curves_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    std::fs::write(&config, SMALL_TRAIN).unwrap();
    let out = dir.path().join("out");
    assert!(bygrad()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let status = bygrad()
        .args(["plot", "--manifest"])
        .arg(out.join("manifest.csv"))
        .arg("--out")
        .arg(&out)
        .args(["--log-scale"])
        .status()
        .unwrap();
    assert!(status.success());
    let svg = std::fs::read_to_string(out.join("manifest.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.contains("com_lad3"));

    let missing = bygrad()
        .args(["plot", "--manifest"])
        .arg(out.join("nonexistent.csv"))
        .output()
        .unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nonexistent.csv"));
}
