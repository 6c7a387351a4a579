use std::f64::consts::{PI, TAU};
use std::path::Path;

use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use super::config::{RunConfig, TensorSource};
use super::{Experiment, RunDir, RunManifest};
use crate::channel::{apply_channel, apply_process, oracle_tensor, ChannelParams, ProcessTensor};
use crate::error::{Error, Result};
use crate::fock::{
    coherent_state, mean_variance, recommended_n_max, squeezed_vacuum, state_fidelity, wigner, CoherentAmplitude, FockDim,
    GridSpec,
};
use crate::homodyne::{bin_records_with, fit_phase, relative_phase, sample_quadratures, write_records_csv, BinEdges, PhaseFit};
use crate::linalg::binomial;
use crate::process_mle::{
    bootstrap_from, default_amplitudes, output_phase, phase_slice, predict_qubit, predict_squeezed, process_fidelity,
    reconstruct_process_full, variance_curve, ProbeSet, ProcessReconstruction, SqueezedPrediction,
};
use crate::seed;
use crate::state_mle::reconstruct_state;

/// Runs `experiment` into `out`, validating the config first.
pub fn run(experiment: Experiment, config: &RunConfig, out: &Path) -> Result<RunManifest> {
    let mut config = config.clone();
    config.experiment = Some(experiment);
    config.output_dir = Some(out.to_path_buf());
    config.validate()?;
    config.resolve()?;
    config.channels.signal_powers.validate()?;
    match experiment {
        Experiment::StateDemo => run_state_demo(&config, out),
        Experiment::Csqpt => run_csqpt(&config, out),
        Experiment::SqueezedPredict => run_squeezed_predict(&config, out),
        Experiment::Bootstrap => run_bootstrap(&config, out),
        Experiment::SweepSignalPower => run_sweep_signal_power(&config, out),
    }
}

/// Wraps `x` into `(−π, π]`.
fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

fn demo_amplitude(config: &RunConfig) -> CoherentAmplitude {
    CoherentAmplitude::from_mean_photon_number(config.state_demo.mean_photon_number)
}

#[derive(Serialize)]
struct StateSummary {
    label: String,
    phase_offset: f64,
    phase_stderr: f64,
    fit_amplitude: f64,
    /// Phase relative to the input state's fit.
    relative_phase: f64,
    relative_phase_stderr: f64,
    /// `(A_out / A_in)²` from the fits.
    transmission: f64,
    mean_variance: f64,
    fidelity_to_truth: f64,
    iterations: usize,
}

/// Input, EIT and N-type states for one coherent amplitude: sampled
/// records, sinusoidal fits, reconstructed states and Wigner grids.
pub fn run_state_demo(config: &RunConfig, out: &Path) -> Result<RunManifest> {
    let master = config.seed()?;
    let mut dir = RunDir::open(out)?;
    let alpha = demo_amplitude(config);
    let dim = FockDim::new(config.state_mle.n_max.unwrap_or_else(|| recommended_n_max(alpha.value().norm())));
    let det = config.detection.params();
    let channels = [
        ChannelParams::identity().with_label("input"),
        config.channels.eit.clone(),
        config.channels.n_type.clone(),
    ];
    let names = ["input", "eit", "n_type"];
    let sampled = dir.stage("sample", |dir| {
        let input = coherent_state(alpha, dim)?;
        let mut sets = Vec::new();
        for (name, ch) in names.iter().zip(&channels) {
            let truth = apply_channel(ch, &input)?;
            let records = sample_quadratures(&truth, &det, seed::derive(master, &format!("state-demo-{name}")))?;
            let path = dir.root().join(format!("{name}/records.csv"));
            std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| Error::io(&path, e))?;
            write_records_csv(&path, &records)?;
            dir.register("sample", &path)?;
            sets.push((truth, records));
        }
        Ok(sets)
    })?;
    let fits: Vec<PhaseFit> = dir.stage("fit", |_| sampled.iter().map(|(_, r)| fit_phase(r)).collect())?;
    let edges = BinEdges::covering(
        sampled.iter().map(|(_, r)| r.as_slice()),
        config.detection.phase_bins,
        config.detection.quad_bins,
    )?;
    let summaries = dir.stage("reconstruct", |dir| {
        let mut out = Vec::new();
        for (i, ((truth, records), fit)) in sampled.iter().zip(&fits).enumerate() {
            let name = names[i];
            let hist = bin_records_with(records, &edges)?;
            dir.write_json("reconstruct", format!("{name}/histogram.json"), &hist)?;
            let (rho, diag) = reconstruct_state(&hist, &config.state_mle.config(dim, config.detection.efficiency))?;
            dir.write_bytes("reconstruct", format!("{name}/density_matrix.json"), rho.to_json()?.as_bytes())?;
            dir.write_json("reconstruct", format!("{name}/diagnostics.json"), &diag)?;
            let grid = wigner(&rho, &GridSpec::covering(dim, config.state_demo.wigner_points))?;
            dir.write_csv("reconstruct", format!("{name}/wigner.csv"), &["x", "p", "w"], wigner_rows(&grid))?;
            let (rel, rel_err) = relative_phase(&fits[0], fit);
            out.push(StateSummary {
                label: channels[i].label.clone(),
                phase_offset: fit.phase_offset,
                phase_stderr: fit.phase_stderr,
                fit_amplitude: fit.amplitude,
                relative_phase: rel,
                relative_phase_stderr: rel_err,
                transmission: (fit.amplitude / fits[0].amplitude).powi(2),
                mean_variance: mean_variance(&rho),
                fidelity_to_truth: state_fidelity(&rho, truth)?,
                iterations: diag.iterations_run,
            });
        }
        Ok(out)
    })?;
    let (d_eit, e_eit) = (summaries[1].relative_phase, summaries[1].relative_phase_stderr);
    let (d_n, e_n) = (summaries[2].relative_phase, summaries[2].relative_phase_stderr);
    let summary = json!({
        "alpha": alpha.value().re,
        "states": summaries,
        "delta_theta_eit": d_eit,
        "delta_theta_n_type": d_n,
        "difference": wrap(d_eit - d_n),
        "difference_stderr": e_eit.hypot(e_n),
    });
    dir.write_json("summary", "summary.json", &summary)?;
    info!("Δθ_EIT = {d_eit:.4}, Δθ_N = {d_n:.4}, difference {:.4}", wrap(d_eit - d_n));
    dir.finish(Experiment::StateDemo, config, summary)
}

pub(super) fn wigner_rows(grid: &crate::fock::WignerGrid) -> Vec<(f64, f64, f64)> {
    let mut rows = Vec::with_capacity(grid.x_axis.len() * grid.p_axis.len());
    for (i, &x) in grid.x_axis.iter().enumerate() {
        for (j, &p) in grid.p_axis.iter().enumerate() {
            rows.push((x, p, grid.values[i][j]));
        }
    }
    rows
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub(super) struct SweepPoint {
    pub signal_power_mw: f64,
    pub relative_phase: f64,
    pub stderr: f64,
    pub transmission: f64,
    pub configured_phase: f64,
    pub configured_transmission: f64,
}

/// Relative phase of a coherent state against the signal-field power.
pub fn run_sweep_signal_power(config: &RunConfig, out: &Path) -> Result<RunManifest> {
    let master = config.seed()?;
    let mut dir = RunDir::open(out)?;
    let alpha = demo_amplitude(config);
    let dim = FockDim::new(recommended_n_max(alpha.value().norm()));
    let det = config.detection.params();
    let points = dir.stage("sweep", |_| {
        let input = coherent_state(alpha, dim)?;
        let reference = fit_phase(&sample_quadratures(&input, &det, seed::derive(master, "sweep-input"))?)?;
        config
            .channels
            .signal_powers
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let state = apply_channel(&e.channel, &input)?;
                let fit = fit_phase(&sample_quadratures(&state, &det, seed::derive(master, &format!("sweep-{i}")))?)?;
                let (phase, stderr) = relative_phase(&reference, &fit);
                Ok(SweepPoint {
                    signal_power_mw: e.signal_power_mw,
                    relative_phase: phase,
                    stderr,
                    transmission: (fit.amplitude / reference.amplitude).powi(2),
                    configured_phase: e.channel.phase_shift,
                    configured_transmission: e.channel.transmission,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    dir.write_json("sweep", "sweep.json", &points)?;
    dir.write_csv(
        "sweep",
        "phase_vs_power.csv",
        &["signal_power_mw", "relative_phase", "stderr", "transmission", "configured_phase", "configured_transmission"],
        points.iter().map(|p| {
            (p.signal_power_mw, p.relative_phase, p.stderr, p.transmission, p.configured_phase, p.configured_transmission)
        }),
    )?;
    let summary = json!({ "points": points });
    dir.finish(Experiment::SweepSignalPower, config, summary)
}

/// Probe data through `channel`: sampled, or expected counts when the
/// config asks for analytic probes.
fn probe_data(config: &RunConfig, channel: &ChannelParams, seed: u64) -> Result<ProbeSet> {
    let amps = default_amplitudes(config.probes.count, config.probes.max_amplitude);
    let det = config.detection.params();
    let mut probes = if config.probes.analytic {
        let dim = FockDim::new(recommended_n_max(config.probes.max_amplitude).max(config.process_mle.dim.n_max()));
        ProbeSet::analytic(
            &oracle_tensor(channel, dim)?,
            &amps,
            &config.analytic_edges()?,
            det.efficiency,
            det.samples as f64,
        )?
    } else {
        ProbeSet::simulate(channel, &amps, &det, config.detection.phase_bins, config.detection.quad_bins, seed)?
    };
    if config.probes.calibrate {
        probes.calibrate_amplitudes()?;
    }
    Ok(probes)
}

/// `φ_01` for every probe input with a defined phase.
fn probe_phases(tensor: &ProcessTensor, probes: &ProbeSet) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for p in probes.probes() {
        let rho = coherent_state(p.amplitude, tensor.dim())?;
        match output_phase(tensor, &rho, 0, 1) {
            Ok(phi) => out.push((p.amplitude.value().norm(), phi)),
            Err(Error::UndefinedPhase { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Max − min of phases unwrapped around their circular mean.
pub fn phase_spread(phases: &[f64]) -> f64 {
    if phases.is_empty() {
        return 0.0;
    }
    let (s, c) = phases.iter().fold((0.0, 0.0), |(s, c), p| (s + p.sin(), c + p.cos()));
    let centre = f64::atan2(s, c);
    let unwrapped: Vec<f64> = phases.iter().map(|p| wrap(p - centre)).collect();
    unwrapped.iter().copied().fold(f64::NEG_INFINITY, f64::max) - unwrapped.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `T` estimated from the photon survival of each input number state,
/// `Σ_m Σ_k k E_kk^mm / Σ_m m`.
fn transmission_estimate(tensor: &ProcessTensor) -> f64 {
    let d = tensor.dim().size();
    let (mut num, mut den) = (0.0, 0.0);
    for m in 1..d {
        num += (0..d).map(|k| k as f64 * tensor.get(k, k, m, m).re).sum::<f64>();
        den += m as f64;
    }
    num / den
}

#[derive(Serialize)]
struct PowerSummary {
    signal_power_mw: f64,
    label: String,
    fidelity_to_oracle: f64,
    phi_01_mean: f64,
    phi_01_spread: f64,
    qubit_phase: f64,
    qubit_coherence_retention: f64,
    transmission_estimate: f64,
    covariance_violation: f64,
    iterations: usize,
    final_log_likelihood: f64,
}

/// One process reconstruction per configured signal power.
pub fn run_csqpt(config: &RunConfig, out: &Path) -> Result<RunManifest> {
    let master = config.seed()?;
    let mut dir = RunDir::open(out)?;
    let mut powers = Vec::new();
    for (i, entry) in config.channels.signal_powers.entries().iter().enumerate() {
        let stage = format!("power_{i:02}");
        let summary = dir.stage(&stage.clone(), |dir| {
            let probes = probe_data(config, &entry.channel, seed::derive(master, &format!("csqpt-power-{i}")))?;
            if !probes.is_analytic() {
                let (_, files) = probes.save_manifest(dir.root().join(format!("{stage}/probes")))?;
                for f in files {
                    dir.register(&stage, &f)?;
                }
            }
            let rec = reconstruct_process_full(&probes, &config.process_mle)?;
            write_tensor_artifacts(dir, &stage, &rec)?;
            let oracle = oracle_tensor(&entry.channel, config.process_mle.dim)?;
            dir.write_csv(&stage, format!("{stage}/attenuation.csv"), &["m", "k", "reconstructed", "oracle", "bernoulli"], {
                let d = config.process_mle.dim.size();
                let t = entry.channel.transmission;
                let (rec, oracle) = (&rec, &oracle);
                (0..d).flat_map(move |m| (0..=m).map(move |k| (m, k))).map(move |(m, k)| {
                    let bern = binomial(m, m - k) * t.powi(k as i32) * (1.0 - t).powi((m - k) as i32);
                    (m, k, rec.tensor.get(k, k, m, m).re, oracle.get(k, k, m, m).re, bern)
                })
            })?;
            let phases = probe_phases(&rec.tensor, &probes)?;
            dir.write_csv(&stage, format!("{stage}/probe_phases.csv"), &["abs_alpha", "phi_01"], &phases)?;
            let phis: Vec<f64> = phases.iter().map(|p| p.1).collect();
            let (s, c) = phis.iter().fold((0.0, 0.0), |(s, c), p| (s + p.sin(), c + p.cos()));
            let qubit = predict_qubit(&rec.tensor)?;
            Ok(PowerSummary {
                signal_power_mw: entry.signal_power_mw,
                label: entry.channel.label.clone(),
                fidelity_to_oracle: process_fidelity(&rec.tensor, &oracle)?,
                phi_01_mean: f64::atan2(s, c),
                phi_01_spread: phase_spread(&phis),
                qubit_phase: qubit.phase,
                qubit_coherence_retention: qubit.coherence_retention,
                transmission_estimate: transmission_estimate(&rec.tensor),
                covariance_violation: rec.tensor.covariance_violation(),
                iterations: rec.diagnostics.iterations_run,
                final_log_likelihood: rec.diagnostics.final_log_likelihood,
            })
        })?;
        info!(
            "{:.2} mW: fidelity {:.5}, φ01 {:.4} ± {:.4}",
            summary.signal_power_mw, summary.fidelity_to_oracle, summary.phi_01_mean, summary.phi_01_spread
        );
        powers.push(summary);
    }
    let summary = json!({ "powers": powers });
    dir.write_json("summary", "summary.json", &summary)?;
    dir.finish(Experiment::Csqpt, config, summary)
}

fn write_tensor_artifacts(dir: &mut RunDir, stage: &str, rec: &ProcessReconstruction) -> Result<()> {
    dir.write_bytes(stage, format!("{stage}/tensor.json"), rec.tensor.to_json()?.as_bytes())?;
    dir.write_json(stage, format!("{stage}/diagnostics.json"), &rec.diagnostics)?;
    let slice = phase_slice(&rec.tensor, 0, 1);
    let mut bytes = Vec::new();
    slice.write_csv(&mut bytes)?;
    dir.write_bytes(stage, format!("{stage}/phase_slice.csv"), &bytes)?;
    Ok(())
}

/// Predictions obtained from tensors reconstructed on the laboratory channels,
/// kept next to ours for comparison.
fn laboratory_reference(role: &str) -> Option<(f64, f64)> {
    match role {
        "eit" => Some((-0.83, 2.47)),
        "n_type" => Some((-0.15, 0.43)),
        _ => None,
    }
}

#[derive(Serialize)]
struct SqueezedReport {
    role: String,
    label: String,
    source: TensorSource,
    prediction: SqueezedPrediction,
    /// Bootstrap standard deviations of `(min dB, max dB, phase shift)`.
    spread: Option<(f64, f64, f64)>,
    oracle: Option<SqueezedPrediction>,
    laboratory_reference: Option<(f64, f64)>,
}

/// Squeezed vacuum through the slowdown and N-type processes.
pub fn run_squeezed_predict(config: &RunConfig, out: &Path) -> Result<RunManifest> {
    let master = config.seed()?;
    let mut dir = RunDir::open(out)?;
    let spec = config.squeezing.spec();
    let oracle_dim = FockDim::new(config.squeezing.oracle_n_max);
    let roles: Vec<(String, ChannelParams)> = vec![
        ("eit".into(), config.channels.eit.clone()),
        ("n_type".into(), config.channels.n_type.clone()),
    ];
    let mut reports = Vec::new();
    match config.squeezing.source {
        TensorSource::Files => {
            for (i, path) in config.squeezing.tensor_paths.iter().enumerate() {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let tensor = ProcessTensor::from_json(&text)?;
                let label = path.display().to_string();
                let role = roles.get(i).map(|r| r.0.clone()).unwrap_or_else(|| format!("tensor_{i}"));
                let prediction = predict_squeezed(&tensor, &spec)?;
                write_curve(&mut dir, &role, &tensor, &spec, config.squeezing.curve_points)?;
                reports.push(SqueezedReport {
                    laboratory_reference: None,
                    role,
                    label,
                    source: TensorSource::Files,
                    prediction,
                    spread: None,
                    oracle: None,
                });
            }
        }
        source => {
            for (role, ch) in &roles {
                let oracle = oracle_tensor(ch, oracle_dim)?;
                let oracle_prediction = predict_squeezed(&oracle, &spec)?;
                let (prediction, spread, tensor) = if source == TensorSource::Oracle {
                    (oracle_prediction, None, oracle)
                } else {
                    dir.stage(&format!("reconstruct_{role}"), |dir| {
                        let probes = probe_data(config, ch, seed::derive(master, &format!("squeezed-{role}")))?;
                        let rec = reconstruct_process_full(&probes, &config.process_mle)?;
                        write_tensor_artifacts(dir, role, &rec)?;
                        let boot = bootstrap_from(
                            &rec,
                            &probes,
                            &config.process_mle,
                            config.bootstrap.resamples,
                            seed::derive(master, &format!("squeezed-{role}-bootstrap")),
                            Some(&spec),
                        )?;
                        let point = boot.squeezed_point.ok_or_else(|| Error::Numeric("missing squeezed prediction".into()))?;
                        Ok((point, boot.squeezed_spread(), rec.full))
                    })?
                };
                write_curve(&mut dir, role, &tensor, &spec, config.squeezing.curve_points)?;
                reports.push(SqueezedReport {
                    role: role.clone(),
                    label: ch.label.clone(),
                    source,
                    prediction,
                    spread,
                    oracle: Some(oracle_prediction),
                    laboratory_reference: laboratory_reference(role),
                });
            }
        }
    }
    for r in &reports {
        info!(
            "{}: {:+.3} dB / {:+.3} dB, axis shift {:.4}",
            r.role, r.prediction.min_db, r.prediction.max_db, r.prediction.phase_shift
        );
    }
    let summary = json!({ "squeezing_db": config.squeezing.db, "reports": reports });
    dir.write_json("summary", "squeezed_report.json", &summary)?;
    dir.finish(Experiment::SqueezedPredict, config, summary)
}

pub(super) fn curve_rows(
    tensor: &ProcessTensor,
    spec: &crate::fock::SqueezingSpec,
    points: usize,
) -> Result<Vec<(f64, f64, f64)>> {
    let input = squeezed_vacuum(*spec, tensor.dim())?;
    let output = apply_process(tensor, &input)?.state;
    Ok(variance_curve(&input, points)
        .into_iter()
        .zip(variance_curve(&output, points))
        .map(|((theta, a), (_, b))| (theta, a, b))
        .collect())
}

fn write_curve(dir: &mut RunDir, role: &str, tensor: &ProcessTensor, spec: &crate::fock::SqueezingSpec, points: usize) -> Result<()> {
    let rows = curve_rows(tensor, spec, points)?;
    dir.write_csv("curves", format!("variance_curve_{role}.csv"), &["theta", "input_db", "output_db"], rows)?;
    Ok(())
}

/// Point reconstruction of the bootstrap channel plus Poisson resamples.
pub fn run_bootstrap(config: &RunConfig, out: &Path) -> Result<RunManifest> {
    let master = config.seed()?;
    let mut dir = RunDir::open(out)?;
    let channel = &config.channels.bootstrap;
    let probes = dir.stage("probes", |_| probe_data(config, channel, seed::derive(master, "bootstrap-probes")))?;
    let rec = dir.stage("reconstruct", |dir| {
        let rec = reconstruct_process_full(&probes, &config.process_mle)?;
        write_tensor_artifacts(dir, "point", &rec)?;
        Ok(rec)
    })?;
    let summary = dir.stage("bootstrap", |_| {
        bootstrap_from(
            &rec,
            &probes,
            &config.process_mle,
            config.bootstrap.resamples,
            seed::derive(master, "bootstrap-resamples"),
            None,
        )
    })?;
    if summary.min_fidelity < 0.995 {
        warn!("lowest resample fidelity {:.5}", summary.min_fidelity);
    }
    dir.write_json("bootstrap", "bootstrap.json", &summary)?;
    dir.write_csv(
        "bootstrap",
        "slice_spreads.csv",
        &["m", "n", "value", "std", "relative"],
        summary
            .slice_spreads
            .iter()
            .map(|&(m, n, v, s)| (m, n, v, s, if v != 0.0 { s / v.abs() } else { 0.0 })),
    )?;
    dir.write_csv("bootstrap", "fidelities.csv", &["resample", "fidelity"], summary.fidelities.iter().enumerate())?;
    let oracle = oracle_tensor(channel, config.process_mle.dim)?;
    let result = json!({
        "label": channel.label,
        "resamples": summary.resamples,
        "min_fidelity": summary.min_fidelity,
        "max_relative_spread": summary.max_relative_spread,
        "point_fidelity_to_oracle": process_fidelity(&rec.tensor, &oracle)?,
    });
    dir.finish(Experiment::Bootstrap, config, result)
}
