use std::fs;
use std::path::Path;

use csqpt::channel::{oracle_tensor, ChannelParams};
use csqpt::fock::{DensityMatrix, FockDim};
use csqpt::pipeline::{export_plotdata, run, Experiment, ExportKind, RunConfig, RunManifest, MANIFEST_NAME};

/// Small enough to run in a few seconds in the test profile.
fn small_config() -> RunConfig {
    RunConfig::from_toml(
        r#"
seed = 5

[[channels.signal_powers]]
signal_power_mw = 0.55
channel = { phase_shift = 1.46, transmission = 0.25 }

[[channels.signal_powers]]
signal_power_mw = 2.1
channel = { phase_shift = 0.67, transmission = 0.035 }

[detection]
samples = 4000
phase_bins = 16
quad_bins = 16

[probes]
count = 5
max_amplitude = 1.5

[process_mle]
dim = 3
iterations = 25

[bootstrap]
resamples = 2

[state_demo]
mean_photon_number = 1.5
wigner_points = 21
"#,
    )
    .unwrap()
}

fn artifact_bytes(root: &Path, m: &RunManifest) -> Vec<(String, Vec<u8>)> {
    m.artifacts
        .iter()
        .map(|a| (a.path.display().to_string(), fs::read(root.join(&a.path)).unwrap()))
        .collect()
}

#[test]
fn every_written_file_is_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(Experiment::Csqpt, &small_config(), dir.path()).unwrap();
    assert!(m.verify(dir.path()).unwrap().is_empty());
    let mut on_disk = Vec::new();
    for entry in walk(dir.path()) {
        let rel = entry.strip_prefix(dir.path()).unwrap().to_path_buf();
        if rel != Path::new(MANIFEST_NAME) {
            on_disk.push(rel);
        }
    }
    let mut listed: Vec<_> = m.artifacts.iter().map(|a| a.path.clone()).collect();
    on_disk.sort();
    listed.sort();
    assert_eq!(on_disk, listed);
    assert_eq!(m.summary["powers"].as_array().unwrap().len(), 2);
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn identical_seed_gives_identical_artifacts_at_any_thread_count() {
    let config = small_config();
    let runs: Vec<_> = [1, 3]
        .into_iter()
        .map(|threads| {
            let dir = tempfile::tempdir().unwrap();
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let m = pool.install(|| run(Experiment::Bootstrap, &config, dir.path())).unwrap();
            (artifact_bytes(dir.path(), &m), m)
        })
        .collect();
    assert_eq!(runs[0].0, runs[1].0);
    assert_eq!(runs[0].1.summary, runs[1].1.summary);
}

#[test]
fn rerun_from_manifest_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let first = run(Experiment::StateDemo, &small_config(), a.path()).unwrap();
    let reloaded = RunConfig::load(a.path().join(MANIFEST_NAME)).unwrap();
    let b = tempfile::tempdir().unwrap();
    let second = run(Experiment::StateDemo, &reloaded, b.path()).unwrap();
    assert_eq!(artifact_bytes(a.path(), &first), artifact_bytes(b.path(), &second));
}

#[test]
fn different_seeds_differ() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut config = small_config();
    let first = run(Experiment::SweepSignalPower, &config, a.path()).unwrap();
    config.seed = Some(6);
    let second = run(Experiment::SweepSignalPower, &config, b.path()).unwrap();
    assert_ne!(first.artifacts[0].sha256, second.artifacts[0].sha256);
}

#[test]
fn state_demo_recovers_the_configured_shifts() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config();
    config.detection.samples = 20_000;
    let m = run(Experiment::StateDemo, &config, dir.path()).unwrap();
    let d_eit = m.summary["delta_theta_eit"].as_f64().unwrap();
    let d_n = m.summary["delta_theta_n_type"].as_f64().unwrap();
    assert!((d_eit - 2.13).abs() < 0.05, "{d_eit}");
    assert!((d_n - 0.67).abs() < 0.1, "{d_n}");
    for name in ["input", "eit", "n_type"] {
        let rho = DensityMatrix::from_json(&fs::read_to_string(dir.path().join(name).join("density_matrix.json")).unwrap()).unwrap();
        rho.validate().unwrap();
    }
}

#[test]
fn oracle_squeezed_prediction_matches_loss_formula() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config();
    config.squeezing.source = csqpt::pipeline::TensorSource::Oracle;
    let m = run(Experiment::SqueezedPredict, &config, dir.path()).unwrap();
    let eit = &m.summary["reports"][0]["prediction"];
    assert!((eit["min_db"].as_f64().unwrap() + 0.74).abs() < 0.02);
    assert!((eit["max_db"].as_f64().unwrap() - 1.53).abs() < 0.02);
    assert!(dir.path().join("variance_curve_eit.csv").is_file());
}

#[test]
fn squeezed_prediction_from_tensor_files() {
    let dir = tempfile::tempdir().unwrap();
    let identity = oracle_tensor(&ChannelParams::identity(), FockDim::new(30)).unwrap();
    let path = dir.path().join("identity.json");
    fs::write(&path, identity.to_json().unwrap()).unwrap();
    let mut config = small_config();
    config.squeezing.source = csqpt::pipeline::TensorSource::Files;
    config.squeezing.tensor_paths = vec![path];
    let out = dir.path().join("run");
    let m = run(Experiment::SqueezedPredict, &config, &out).unwrap();
    let p = &m.summary["reports"][0]["prediction"];
    assert!((p["min_db"].as_f64().unwrap() + 4.3).abs() < 1e-3);
    assert!((p["max_db"].as_f64().unwrap() - 4.3).abs() < 1e-3);
}

#[test]
fn missing_tensor_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config();
    config.squeezing.source = csqpt::pipeline::TensorSource::Files;
    config.squeezing.tensor_paths = vec![dir.path().join("absent.json")];
    assert!(matches!(run(Experiment::SqueezedPredict, &config, dir.path()), Err(csqpt::Error::Config(_))));
}

#[test]
fn wigner_export_of_vacuum_peaks_at_one_over_pi() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vacuum.json");
    fs::write(&path, DensityMatrix::vacuum(FockDim::new(4)).to_json().unwrap()).unwrap();
    let written = export_plotdata(ExportKind::Wigner, &path, dir.path(), &RunConfig::default()).unwrap();
    let text = fs::read_to_string(dir.path().join(&written[0].path)).unwrap();
    let (mut best, mut at) = (f64::NEG_INFINITY, (0.0, 0.0));
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        if v[2] > best {
            best = v[2];
            at = (v[0], v[1]);
        }
    }
    assert!((best - std::f64::consts::FRAC_1_PI).abs() < 1e-12);
    assert!(at.0.abs() < 1e-12 && at.1.abs() < 1e-12);
}

#[test]
fn fig3b_export_of_default_map_decreases_with_power() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("map.json");
    fs::write(&path, serde_json::to_string(&csqpt::channel::SignalPowerMap::illustrative()).unwrap()).unwrap();
    export_plotdata(ExportKind::Fig3b, &path, dir.path(), &RunConfig::default()).unwrap();
    let phases: Vec<f64> = fs::read_to_string(dir.path().join("fig3b.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(phases.len(), 6);
    assert!(phases.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn fig4b_export_of_oracle_has_constant_band_height() {
    let dir = tempfile::tempdir().unwrap();
    let theta = 1.46;
    let path = dir.path().join("tensor.json");
    fs::write(&path, oracle_tensor(&ChannelParams::new(theta, 0.25), FockDim::new(6)).unwrap().to_json().unwrap()).unwrap();
    export_plotdata(ExportKind::Fig4b, &path, dir.path(), &RunConfig::default()).unwrap();
    let text = fs::read_to_string(dir.path().join("fig4b.csv")).unwrap();
    let mut defined = 0;
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        if v[3] == 1.0 {
            defined += 1;
            assert_eq!(v[1], v[0] + 1.0);
            assert!((v[2] + theta).abs() < 1e-9 && (v[4] + theta).abs() < 1e-9, "{line}");
        }
    }
    assert_eq!(defined, 6);
}

#[test]
fn fig2a_and_fig5c_exports_from_run_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config();
    run(Experiment::StateDemo, &config, dir.path()).unwrap();
    let out = dir.path().join("plots");
    let written = export_plotdata(ExportKind::Fig2a, &dir.path().join("eit/records.csv"), &out, &config).unwrap();
    assert_eq!(written.len(), 3);
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("fig2a_fit.json")).unwrap()).unwrap();
    assert!(fit["amplitude"].as_f64().unwrap() > 0.0);

    let tensor = dir.path().join("tensor.json");
    fs::write(&tensor, oracle_tensor(&ChannelParams::eit(), FockDim::new(30)).unwrap().to_json().unwrap()).unwrap();
    export_plotdata(ExportKind::Fig5c, &tensor, &out, &config).unwrap();
    let rows = fs::read_to_string(out.join("fig5c.csv")).unwrap().lines().count();
    assert_eq!(rows, config.squeezing.curve_points + 1);
}

#[test]
fn unknown_export_kind_is_rejected() {
    assert!(matches!("fig9".parse::<ExportKind>(), Err(csqpt::Error::Config(_))));
}

#[test]
fn locked_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(".csqpt.lock"), "1").unwrap();
    assert!(matches!(run(Experiment::SweepSignalPower, &small_config(), dir.path()), Err(csqpt::Error::Config(_))));
}
