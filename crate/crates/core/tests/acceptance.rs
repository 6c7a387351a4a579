//! Acceptance criteria 1–7 at their stated tolerances. Runs without the
//! libtest harness so each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::f64::consts::{PI, TAU};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use csqpt::channel::{oracle_tensor, ChannelParams, ProcessTensor};
use csqpt::fock::{
    coherent_state, recommended_n_max, squeezed_vacuum, state_fidelity, wigner, CoherentAmplitude, DensityMatrix, FockDim,
    GridSpec, SqueezingSpec,
};
use csqpt::homodyne::{
    bin_records_with, fit_phase, quadrature_pdf, relative_phase, sample_quadratures, BinEdges, DetectionParams, HomodynePovm,
};
use csqpt::pipeline::RunConfig;
use csqpt::process_mle::{
    bootstrap_from, default_amplitudes, output_phase, predict_squeezed, process_fidelity, reconstruct_process_full,
    BootstrapSummary, ProbeSet, ProcessMleConfig, ProcessReconstruction, SqueezedPrediction,
};
use csqpt::seed;
use csqpt::state_mle::{expected_counts, reconstruct_state, reconstruct_state_with, StateMleConfig};
use csqpt::Error;

const SEED: u64 = 20_240_601;
const SAMPLES: usize = 50_000;
const BINS: usize = 40;
const PROBES: usize = 13;
const MAX_AMPLITUDE: f64 = 3.3;
const RESAMPLES: usize = 20;
const SQUEEZING_DB: f64 = 4.3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, elapsed: Duration, outcome: &Outcome) {
    println!(
        "criterion {n} [{}] {name}: {} ({:.1} s)",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64()
    );
}

fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

fn detection() -> DetectionParams {
    DetectionParams::uniform(1.0, SAMPLES)
}

fn criterion_1() -> csqpt::Result<Outcome> {
    let eit = ChannelParams::eit();
    let n_type = ChannelParams::n_type();
    let target = eit.phase_shift - n_type.phase_shift;
    let alpha = CoherentAmplitude::from_mean_photon_number(5.4);
    let input = coherent_state(alpha, FockDim::new(recommended_n_max(alpha.value().norm())))?;
    let outputs = [
        csqpt::channel::apply_channel(&eit, &input)?,
        csqpt::channel::apply_channel(&n_type, &input)?,
    ];
    let mut hits = 0;
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for run in 0..20u64 {
        let start = Instant::now();
        let base = seed::derive(SEED, &format!("phase-run-{run}"));
        let fit_in = fit_phase(&sample_quadratures(&input, &detection(), seed::derive(base, "input"))?)?;
        let fit_eit = fit_phase(&sample_quadratures(&outputs[0], &detection(), seed::derive(base, "eit"))?)?;
        let fit_n = fit_phase(&sample_quadratures(&outputs[1], &detection(), seed::derive(base, "n_type"))?)?;
        let d = wrap(relative_phase(&fit_in, &fit_eit).0 - relative_phase(&fit_in, &fit_n).0);
        let err = (d - target).abs();
        worst = worst.max(err);
        if err <= 0.06 {
            hits += 1;
        }
        slowest = slowest.max(start.elapsed().as_secs_f64());
    }
    Ok(Outcome {
        pass: hits >= 19 && slowest < 60.0,
        detail: format!(
            "{hits}/20 runs within ±0.06 rad of {target:.2} rad (worst {worst:.4}), slowest run {slowest:.2} s"
        ),
    })
}

fn criterion_2() -> csqpt::Result<(Outcome, f64)> {
    let d10 = FockDim::new(10);
    let truths = [
        ("coherent", coherent_state(CoherentAmplitude::new(1.2, 0.5), d10)?),
        ("squeezed", squeezed_vacuum(SqueezingSpec::pure(3.0, 0.6), d10)?),
    ];
    let config = StateMleConfig::new(d10);
    let mut lines = Vec::new();
    let mut pass = true;
    let mut max_decrease = 0.0f64;
    for (i, (name, truth)) in truths.iter().enumerate() {
        let start = Instant::now();
        let edges = BinEdges::uniform(BINS, BINS, 5.0)?;
        let povm = HomodynePovm::new(&edges, 1.0, d10)?;
        let counts = expected_counts(&povm, truth.matrix(), SAMPLES as f64);
        let exact = StateMleConfig {
            log_likelihood_tol: 1e-15,
            ..config.clone()
        };
        let (est, diag) = reconstruct_state_with(&povm, &counts, &exact)?;
        let f_analytic = state_fidelity(&est, truth)?;
        max_decrease = max_decrease.max(diag.max_decrease());
        let t_analytic = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let records = sample_quadratures(truth, &detection(), seed::derive(SEED, &format!("state-{i}")))?;
        let hist = bin_records_with(&records, &BinEdges::covering([records.as_slice()], BINS, BINS)?)?;
        let (est, diag) = reconstruct_state(&hist, &config)?;
        let f_sampled = state_fidelity(&est, truth)?;
        max_decrease = max_decrease.max(diag.max_decrease());
        let t_sampled = start.elapsed().as_secs_f64();

        let ok = f_analytic >= 1.0 - 1e-6 && f_sampled >= 0.99 && t_analytic < 30.0 && t_sampled < 30.0;
        pass &= ok;
        lines.push(format!(
            "{name}: analytic 1−F = {:.1e} ({t_analytic:.1} s), sampled F = {f_sampled:.5} ({t_sampled:.1} s)",
            1.0 - f_analytic
        ));
    }
    Ok((
        Outcome {
            pass,
            detail: lines.join("; "),
        },
        max_decrease,
    ))
}

struct Csqpt {
    oracle: ProcessTensor,
    probes: ProbeSet,
    sampled: ProcessReconstruction,
    analytic: ProcessReconstruction,
    sampled_seconds: f64,
    analytic_seconds: f64,
}

fn channel() -> ChannelParams {
    ChannelParams::new(1.46, 0.25)
}

fn run_csqpt() -> csqpt::Result<Csqpt> {
    let config = ProcessMleConfig::default();
    let amps = default_amplitudes(PROBES, MAX_AMPLITUDE);
    let start = Instant::now();
    let probes = ProbeSet::simulate(&channel(), &amps, &detection(), BINS, BINS, seed::derive(SEED, "csqpt"))?;
    let sampled = reconstruct_process_full(&probes, &config)?;
    let sampled_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let run_config = RunConfig::default();
    let fit_dim = config.reconstruction_dim(&probes);
    let analytic_probes = ProbeSet::analytic(
        &oracle_tensor(&channel(), fit_dim)?,
        &amps,
        &run_config.analytic_edges()?,
        1.0,
        SAMPLES as f64,
    )?;
    let analytic = reconstruct_process_full(&analytic_probes, &config)?;
    let analytic_seconds = start.elapsed().as_secs_f64();
    Ok(Csqpt {
        oracle: oracle_tensor(&channel(), config.dim)?,
        probes,
        sampled,
        analytic,
        sampled_seconds,
        analytic_seconds,
    })
}

fn criterion_3(c: &Csqpt) -> csqpt::Result<Outcome> {
    let f_sampled = process_fidelity(&c.sampled.tensor, &c.oracle)?;
    let f_analytic = process_fidelity(&c.analytic.tensor, &c.oracle)?;
    let total = c.sampled_seconds + c.analytic_seconds;
    Ok(Outcome {
        pass: f_sampled >= 0.98 && f_analytic >= 1.0 - 1e-4 && total < 600.0,
        detail: format!(
            "Monte Carlo F = {f_sampled:.5} ({:.1} s, {} iterations), analytic 1−F = {:.1e} ({:.1} s)",
            c.sampled_seconds,
            c.sampled.diagnostics.iterations_run,
            1.0 - f_analytic,
            c.analytic_seconds
        ),
    })
}

fn criterion_4(c: &Csqpt) -> csqpt::Result<Outcome> {
    let mut phases = Vec::new();
    let mut undefined = 0;
    for p in c.probes.probes() {
        let rho = coherent_state(p.amplitude, c.sampled.tensor.dim())?;
        match output_phase(&c.sampled.tensor, &rho, 0, 1) {
            Ok(phi) => phases.push(phi),
            Err(Error::UndefinedPhase { .. }) => undefined += 1,
            Err(e) => return Err(e),
        }
    }
    let centre = phases[0];
    let unwrapped: Vec<f64> = phases.iter().map(|p| wrap(p - centre)).collect();
    let spread = unwrapped.iter().copied().fold(f64::NEG_INFINITY, f64::max) - unwrapped.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = centre + unwrapped.iter().sum::<f64>() / unwrapped.len() as f64;
    Ok(Outcome {
        pass: spread < 0.06 && phases.len() + undefined == PROBES,
        detail: format!(
            "φ_01 = {mean:.4} rad, spread {spread:.2e} rad over {} probes ({undefined} vacuum probe without a phase)",
            phases.len()
        ),
    })
}

fn criterion_5(b: &BootstrapSummary, seconds: f64) -> Outcome {
    Outcome {
        pass: b.min_fidelity >= 0.995 && b.max_relative_spread <= 0.01,
        detail: format!(
            "{} resamples, min fidelity {:.5}, largest slice spread {:.3}% (limit 1%), {seconds:.0} s",
            b.resamples,
            b.min_fidelity,
            100.0 * b.max_relative_spread
        ),
    }
}

fn loss_db(db: f64, t: f64) -> f64 {
    10.0 * (t * 10f64.powf(db / 10.0) + 1.0 - t).log10()
}

fn criterion_6(b: &BootstrapSummary) -> csqpt::Result<Outcome> {
    let spec = SqueezingSpec::pure(SQUEEZING_DB, 0.0);
    let oracle: SqueezedPrediction = predict_squeezed(&oracle_tensor(&channel(), FockDim::new(30))?, &spec)?;
    let (lo, hi) = (loss_db(-SQUEEZING_DB, 0.25), loss_db(SQUEEZING_DB, 0.25));
    let oracle_ok = (oracle.min_db - lo).abs() <= 0.02
        && (oracle.max_db - hi).abs() <= 0.02
        && (oracle.min_db + 0.74).abs() <= 0.02
        && (oracle.max_db - 1.53).abs() <= 0.02;
    let point = b.squeezed_point.as_ref().expect("squeezed prediction requested");
    let (s_min, s_max, _) = b.squeezed_spread().expect("resamples");
    // two bootstrap standard deviations
    let recon_ok = (point.min_db - oracle.min_db).abs() <= 2.0 * s_min && (point.max_db - oracle.max_db).abs() <= 2.0 * s_max;
    Ok(Outcome {
        pass: oracle_ok && recon_ok,
        detail: format!(
            "oracle {:+.3}/{:+.3} dB (loss formula {lo:+.3}/{hi:+.3}); reconstructed {:+.3} ± {:.3} / {:+.3} ± {:.3} dB; laboratory −0.83/+2.47 dB shown for context",
            oracle.min_db, oracle.max_db, point.min_db, s_min, point.max_db, s_max
        ),
    })
}

fn criterion_7(c: &Csqpt, state_decrease: f64) -> csqpt::Result<Outcome> {
    let mut failures = Vec::new();

    let d10 = FockDim::new(10);
    let povm = HomodynePovm::new(&BinEdges::uniform(BINS, BINS, 7.0)?, 0.9, d10)?;
    let completeness = povm.completeness_error();
    if completeness > 1e-6 {
        failures.push(format!("POVM completeness {completeness:.1e}"));
    }

    let process_decrease = c.sampled.diagnostics.max_decrease().max(c.analytic.diagnostics.max_decrease());
    let decrease = state_decrease.max(process_decrease);
    if decrease > 1e-10 {
        failures.push(format!("likelihood decrease {decrease:.1e}"));
    }

    for (name, t) in [
        ("sampled", &c.sampled.tensor),
        ("sampled full", &c.sampled.full),
        ("analytic", &c.analytic.tensor),
        ("oracle", &c.oracle),
    ] {
        if let Err(e) = t.validate() {
            failures.push(format!("{name} tensor: {e}"));
        }
        if t.covariance_violation() != 0.0 {
            failures.push(format!("{name} tensor off-band {:.1e}", t.covariance_violation()));
        }
    }

    let dim = FockDim::new(8);
    let mut composition = 0.0f64;
    for &(t1, a, t2, b) in &[(1.46, 0.25, 0.67, 0.035), (2.13, 0.9, -3.0, 0.5), (0.3, 1.0, 0.4, 0.2)] {
        let composed = oracle_tensor(&ChannelParams::new(t1, a), dim)?.then(&oracle_tensor(&ChannelParams::new(t2, b), dim)?)?;
        let direct = oracle_tensor(&ChannelParams::new(t1 + t2, a * b), dim)?;
        let diff = composed
            .elements()
            .iter()
            .zip(direct.elements())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        composition = composition.max(diff);
    }
    if composition > 1e-9 {
        failures.push(format!("composition {composition:.1e}"));
    }

    let mut marginal = 0.0f64;
    let states: [DensityMatrix; 2] = [
        coherent_state(CoherentAmplitude::new(1.0, -0.6), d10)?,
        squeezed_vacuum(SqueezingSpec::pure(4.3, 0.0), FockDim::new(20))?,
    ];
    for rho in &states {
        let grid = wigner(rho, &GridSpec::symmetric(6.0, 241))?;
        let pdf = quadrature_pdf(rho, 0.0, 1.0)?;
        for (x, m) in grid.x_axis.iter().zip(grid.x_marginal()) {
            marginal = marginal.max((m - pdf.eval(*x)).abs());
        }
    }
    if marginal > 1e-3 {
        failures.push(format!("Wigner marginal {marginal:.1e}"));
    }

    Ok(Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "POVM {completeness:.1e}, monotone slack {decrease:.1e}, tensors CP/Hermitian/trace-bounded and banded, composition {composition:.1e}, Wigner marginal {marginal:.1e}"
            )
        } else {
            failures.join("; ")
        },
    })
}

fn outcome_of(r: csqpt::Result<Outcome>) -> Outcome {
    r.unwrap_or_else(|e| Outcome {
        pass: false,
        detail: format!("error: {e}"),
    })
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters from the workspace run are not meaningful here
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut all = true;
    let mut record = |n, name, start: Instant, o: Outcome| {
        report(n, name, start.elapsed(), &o);
        all &= o.pass;
    };

    let start = Instant::now();
    record(1, "phase-shift pipeline", start, outcome_of(criterion_1()));

    let start = Instant::now();
    let (o2, state_decrease) = match criterion_2() {
        Ok(x) => x,
        Err(e) => (outcome_of(Err(e)), f64::INFINITY),
    };
    record(2, "state MLE oracle equivalence", start, o2);

    let start = Instant::now();
    let c = match run_csqpt() {
        Ok(c) => c,
        Err(e) => {
            for (n, name) in [(3, "csQPT oracle equivalence"), (4, "amplitude independence"), (5, "bootstrap"), (6, "squeezed prediction"), (7, "invariants")] {
                record(n, name, start, outcome_of(Err(Error::Numeric(format!("csQPT run failed: {e}")))));
            }
            return ExitCode::FAILURE;
        }
    };
    record(3, "csQPT oracle equivalence", start, outcome_of(criterion_3(&c)));
    let start = Instant::now();
    record(4, "amplitude independence of φ_01", start, outcome_of(criterion_4(&c)));

    let start = Instant::now();
    let spec = SqueezingSpec::pure(SQUEEZING_DB, 0.0);
    let boot = bootstrap_from(
        &c.sampled,
        &c.probes,
        &ProcessMleConfig::default(),
        RESAMPLES,
        seed::derive(SEED, "bootstrap"),
        Some(&spec),
    );
    match &boot {
        Ok(b) => {
            let secs = start.elapsed().as_secs_f64();
            record(5, "bootstrap stability", start, criterion_5(b, secs));
            let start = Instant::now();
            record(6, "squeezed prediction", start, outcome_of(criterion_6(b)));
        }
        Err(e) => {
            record(5, "bootstrap stability", start, outcome_of(Err(Error::Numeric(e.to_string()))));
            record(6, "squeezed prediction", start, outcome_of(Err(Error::Numeric(e.to_string()))));
        }
    }

    let start = Instant::now();
    record(7, "invariant suites", start, outcome_of(criterion_7(&c, state_decrease)));

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
