use std::fs;
use std::process::{Command, Output};

use csqpt::pipeline::{RunManifest, MANIFEST_NAME};

fn csqpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csqpt"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

const SMALL: &str = r#"
seed = 9

[[channels.signal_powers]]
signal_power_mw = 0.55
channel = { phase_shift = 1.46, transmission = 0.25 }

[detection]
samples = 3000
phase_bins = 12
quad_bins = 12

[probes]
count = 4
max_amplitude = 1.2

[process_mle]
dim = 2
iterations = 15
"#;

#[test]
fn run_verbs_write_manifests_independent_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, SMALL).unwrap();
    let mut hashes = Vec::new();
    for threads in ["1", "2"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = csqpt(&["csqpt", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let m = RunManifest::load(out.join(MANIFEST_NAME)).unwrap();
        assert!(m.verify(&out).unwrap().is_empty());
        hashes.push(m.artifacts.into_iter().map(|a| (a.path, a.sha256)).collect::<Vec<_>>());
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, SMALL).unwrap();
    let out = dir.path().join("o");
    let o = csqpt(&["sweep-signal-power", "--config", config.to_str().unwrap(), "--seed", "77", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(RunManifest::load(out.join(MANIFEST_NAME)).unwrap().seed, 77);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    // no seed anywhere
    let o = csqpt(&["state-demo", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "seed = 1\n[probes]\ncount = 0\n").unwrap();
    let o = csqpt(&["validate-config", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("probes"));

    let o = csqpt(&["validate-config", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = csqpt(&["export", "--kind", "fig7", "--artifact", "x.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_config_prints_resolved_toml() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, SMALL).unwrap();
    let o = csqpt(&["validate-config", "--config", config.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let parsed = csqpt::pipeline::RunConfig::from_toml(&text).unwrap();
    assert_eq!(parsed.seed, Some(9));
    assert_eq!(parsed.probes.count, 4);
}

#[test]
fn numeric_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    // a tensor that is not completely positive
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"n_max": 0, "elements": [[-1.0, 0.0]]}"#).unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, format!("seed = 1\n[squeezing]\nsource = \"files\"\ntensor_paths = [\"{}\"]\n", bad.display())).unwrap();
    let o = csqpt(&["squeezed-predict", "--config", config.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn export_writes_next_to_the_artifact_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("map.json");
    fs::write(&map, serde_json::to_string(&csqpt::channel::SignalPowerMap::illustrative()).unwrap()).unwrap();
    let o = csqpt(&["export", "--kind", "fig3b", "--artifact", map.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("fig3b.csv").is_file());
}
