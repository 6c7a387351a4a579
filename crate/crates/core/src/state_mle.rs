//! Maximum-likelihood state reconstruction from binned homodyne data by the
//! iterative `ρ ← N[R ρ R]` map, with a diluted step whenever a full step
//! would lower the likelihood.

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, FockDim};
use crate::homodyne::{BinnedHistogram, HomodynePovm};
use crate::linalg::{self, CMatrix};
use crate::mle::{self, Evaluation, Objective};

/// Floor on predicted bin probabilities.
pub const PROBABILITY_FLOOR: f64 = 1e-12;
/// Steps may lower the per-count log-likelihood by at most this much.
pub const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMleConfig {
    pub dim: FockDim,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tol")]
    pub log_likelihood_tol: f64,
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
    /// Follow each step with a likelihood-checked extrapolation along it.
    #[serde(default = "default_accelerate")]
    pub accelerate: bool,
}

fn default_accelerate() -> bool {
    true
}

fn default_max_iterations() -> usize {
    200
}

fn default_tol() -> f64 {
    1e-9
}

fn default_efficiency() -> f64 {
    1.0
}

impl StateMleConfig {
    pub fn new(dim: FockDim) -> Self {
        StateMleConfig {
            dim,
            max_iterations: default_max_iterations(),
            log_likelihood_tol: default_tol(),
            efficiency: default_efficiency(),
            accelerate: default_accelerate(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        if !(self.log_likelihood_tol > 0.0) {
            return Err(Error::InvalidArgument("log_likelihood_tol must be positive".into()));
        }
        crate::homodyne::check_efficiency(self.efficiency)
    }
}

/// Convergence record shared by the state and process reconstructions.
/// Log-likelihoods are per count and relative to the saturated model,
/// `Σ_j f̂_j ln(p_j / f̂_j)` with `f̂` the empirical bin distribution, so they
/// are `≤ 0` with equality for a perfect fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleDiagnostics {
    pub iterations_run: usize,
    pub final_log_likelihood: f64,
    pub log_likelihood_trace: Vec<f64>,
    pub converged: bool,
    /// Bins with counts whose predicted probability hit the floor.
    pub regularized_bins: usize,
    /// Iterations where the full step was replaced by a diluted one.
    pub diluted_steps: usize,
}

impl MleDiagnostics {
    /// Largest drop between consecutive trace entries (0 for a monotone trace).
    pub fn max_decrease(&self) -> f64 {
        self.log_likelihood_trace
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max)
    }
}

/// Threads a detection efficiency into a reconstruction configuration. Loss
/// is corrected on the measurement side by smoothing the POVM, never by
/// inverting the loss map on a reconstructed state.
pub trait LossCorrection: Sized {
    fn set_efficiency(&mut self, eta: f64);
}

impl LossCorrection for StateMleConfig {
    fn set_efficiency(&mut self, eta: f64) {
        self.efficiency = eta;
    }
}

pub fn correct_linear_loss<T: LossCorrection>(mut target: T, eta: f64) -> Result<T> {
    crate::homodyne::check_efficiency(eta)?;
    if eta < 0.3 {
        warn!("detection efficiency {eta} is low; the loss-corrected reconstruction is poorly conditioned");
    }
    target.set_efficiency(eta);
    Ok(target)
}

/// Reconstructs a state from a histogram, building the POVM from its edges.
pub fn reconstruct_state(hist: &BinnedHistogram, config: &StateMleConfig) -> Result<(DensityMatrix, MleDiagnostics)> {
    config.validate()?;
    hist.validate()?;
    let povm = HomodynePovm::new(&hist.edges(), config.efficiency, config.dim)?;
    reconstruct_state_with(&povm, &hist.frequencies(), config)
}

/// Reconstruction against a prebuilt POVM; `frequencies` may be non-integer
/// (e.g. analytic expected counts).
pub fn reconstruct_state_with(
    povm: &HomodynePovm,
    frequencies: &[f64],
    config: &StateMleConfig,
) -> Result<(DensityMatrix, MleDiagnostics)> {
    config.validate()?;
    povm.dim().ensure_eq(config.dim)?;
    povm.check_frequencies(frequencies)?;
    if frequencies.iter().any(|f| !(*f >= 0.0)) {
        return Err(Error::InvalidArgument("bin frequencies must be non-negative".into()));
    }
    let total: f64 = frequencies.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("histogram is empty".into()));
    }
    let d = config.dim.size();
    let objective = StateObjective { povm, frequencies, total };
    let settings = mle::Settings {
        max_iterations: config.max_iterations,
        tol: config.log_likelihood_tol,
        accelerate: config.accelerate,
    };
    let (mut x, diag) = mle::maximize(&objective, vec![CMatrix::identity(d, d)], &settings);
    if diag.regularized_bins > 0 {
        warn!("{} occupied bins had predicted probability below {PROBABILITY_FLOOR:e}", diag.regularized_bins);
    }
    let state = DensityMatrix::from_matrix_normalized(linalg::hermitian_part(&x.remove(0)))?;
    Ok((state, diag))
}

struct StateObjective<'a> {
    povm: &'a HomodynePovm,
    frequencies: &'a [f64],
    total: f64,
}

impl Objective for StateObjective<'_> {
    fn evaluate(&self, x: &[CMatrix]) -> Evaluation {
        let p = self.povm.probabilities(&x[0]);
        // Each term is taken relative to the saturated model p_j ∝ f_j, so the
        // sum stays accurate when the fit is nearly exact.
        let scale = self.povm.edges().phase_bins() as f64 / self.total;
        let (log_likelihood, weights, regularized) = saturated_terms(self.frequencies, &p, scale, self.total);
        Evaluation {
            log_likelihood: log_likelihood / self.total,
            weights,
            regularized,
        }
    }

    fn gradient(&self, _x: &[CMatrix], eval: &Evaluation) -> Vec<CMatrix> {
        vec![self.povm.weighted_sum(&eval.weights)]
    }

    fn normalize(&self, mut x: Vec<CMatrix>) -> Vec<CMatrix> {
        let tr = linalg::trace(&x[0]).re;
        x[0] /= Complex64::new(tr, 0.0);
        x
    }

    fn multiplier(&self, x: &[CMatrix], grad: &[CMatrix]) -> Vec<CMatrix> {
        let d = x[0].nrows();
        let mu = linalg::trace(&(&grad[0] * &x[0])).re;
        vec![CMatrix::identity(d, d).scale(mu)]
    }
}

/// Sum of `f ln(q / (f·scale))` over occupied bins with `q` floored at
/// [`PROBABILITY_FLOOR`], the gradient weights `f / (q·norm)`, and the number
/// of floored bins.
pub(crate) fn saturated_terms(frequencies: &[f64], p: &[f64], scale: f64, norm: f64) -> (f64, Vec<f64>, usize) {
    let mut ll = 0.0;
    let mut regularized = 0;
    let weights = frequencies
        .iter()
        .zip(p)
        .map(|(&f, &pj)| {
            if f == 0.0 {
                return 0.0;
            }
            let q = if pj < PROBABILITY_FLOOR {
                regularized += 1;
                PROBABILITY_FLOOR
            } else {
                pj
            };
            ll += f * (q / (f * scale)).ln();
            f / (q * norm)
        })
        .collect();
    (ll, weights, regularized)
}

/// Expected counts `N Tr(Π_j ρ) / phase_bins` for uniformly distributed phases.
pub fn expected_counts(povm: &HomodynePovm, rho: &CMatrix, samples: f64) -> Vec<f64> {
    let nb = povm.edges().phase_bins() as f64;
    povm.probabilities(rho).iter().map(|p| samples * p.max(0.0) / nb).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, squeezed_vacuum, state_fidelity, CoherentAmplitude, SqueezingSpec};
    use crate::homodyne::{bin_records_with, sample_quadratures, BinEdges, DetectionParams};

    fn edges() -> BinEdges {
        BinEdges::uniform(40, 40, 5.0).unwrap()
    }

    #[test]
    fn analytic_counts_fixed_point() {
        let dim = FockDim::new(6);
        let truth = DensityMatrix::mixture(&[
            (0.5, &coherent_state(CoherentAmplitude::new(0.7, 0.3), dim).unwrap()),
            (0.3, &DensityMatrix::thermal(0.8, dim).unwrap()),
            (0.2, &DensityMatrix::number_state(2, dim).unwrap()),
        ])
        .unwrap();
        let povm = HomodynePovm::new(&edges(), 0.9, dim).unwrap();
        let f = expected_counts(&povm, truth.matrix(), 50_000.0);
        let config = StateMleConfig {
            max_iterations: 5000,
            log_likelihood_tol: 1e-15,
            efficiency: 0.9,
            accelerate: true,
            dim,
        };
        let (est, diag) = reconstruct_state_with(&povm, &f, &config).unwrap();
        let fid = state_fidelity(&est, &truth).unwrap();
        assert!(fid >= 1.0 - 1e-6, "fidelity {fid}");
        assert!(diag.max_decrease() <= 1e-10);
    }

    #[test]
    fn vacuum_from_samples() {
        let dim = FockDim::new(6);
        let vac = DensityMatrix::vacuum(dim);
        let recs = sample_quadratures(&vac, &DetectionParams::uniform(1.0, 50_000), 10).unwrap();
        let hist = bin_records_with(&recs, &BinEdges::covering([recs.as_slice()], 40, 40).unwrap()).unwrap();
        let (est, diag) = reconstruct_state(&hist, &StateMleConfig::new(dim)).unwrap();
        // boundary MLE on 50k counts scatters between 0.996 and 0.9995 over seeds
        assert!(state_fidelity(&est, &vac).unwrap() >= 0.995);
        assert!(diag.max_decrease() <= 1e-10);
        est.validate().unwrap();
    }

    #[test]
    fn pure_truth_from_analytic_counts() {
        let d10 = FockDim::new(10);
        let truth = coherent_state(CoherentAmplitude::new(1.2, 0.5), d10).unwrap();
        let povm = HomodynePovm::new(&BinEdges::uniform(40, 40, 4.0).unwrap(), 1.0, d10).unwrap();
        let f = expected_counts(&povm, truth.matrix(), 50_000.0);
        let cfg = StateMleConfig {
            log_likelihood_tol: 1e-15,
            ..StateMleConfig::new(d10)
        };
        let (est, diag) = reconstruct_state_with(&povm, &f, &cfg).unwrap();
        assert!(state_fidelity(&est, &truth).unwrap() >= 1.0 - 1e-6);
        assert!(diag.max_decrease() <= 1e-10);
    }

    #[test]
    fn likelihood_never_decreases() {
        let dim = FockDim::new(8);
        let truth = squeezed_vacuum(SqueezingSpec::pure(3.0, 0.4), dim).unwrap();
        let recs = sample_quadratures(&truth, &DetectionParams::uniform(0.7, 3_000), 5).unwrap();
        let hist = bin_records_with(&recs, &BinEdges::covering([recs.as_slice()], 24, 30).unwrap()).unwrap();
        for accelerate in [false, true] {
            let cfg = StateMleConfig {
                accelerate,
                efficiency: 0.7,
                max_iterations: 300,
                ..StateMleConfig::new(dim)
            };
            let (_, diag) = reconstruct_state(&hist, &cfg).unwrap();
            assert!(diag.max_decrease() <= MONOTONE_SLACK, "{}", diag.max_decrease());
            assert!(diag.final_log_likelihood <= 0.0);
        }
    }

    #[test]
    fn loss_correction_on_single_photon() {
        let dim = FockDim::new(6);
        let one = DensityMatrix::number_state(1, dim).unwrap();
        let recs = sample_quadratures(&one, &DetectionParams::uniform(0.8, 50_000), 21).unwrap();
        let hist = bin_records_with(&recs, &BinEdges::covering([recs.as_slice()], 40, 40).unwrap()).unwrap();
        let corrected = correct_linear_loss(StateMleConfig::new(dim), 0.8).unwrap();
        let (est, _) = reconstruct_state(&hist, &corrected).unwrap();
        assert!(est.get(1, 1).re >= 0.97, "{}", est.get(1, 1).re);
        let (raw, _) = reconstruct_state(&hist, &StateMleConfig::new(dim)).unwrap();
        assert!((raw.get(1, 1).re - 0.8).abs() < 0.02, "{}", raw.get(1, 1).re);
    }

    #[test]
    fn unit_efficiency_leaves_povm_unchanged() {
        let cfg = correct_linear_loss(StateMleConfig::new(FockDim::new(3)), 1.0).unwrap();
        assert_eq!(cfg, StateMleConfig::new(FockDim::new(3)));
        assert!(correct_linear_loss(StateMleConfig::new(FockDim::new(3)), 0.0).is_err());
    }

    #[test]
    fn empty_phase_column_is_tolerated() {
        let dim = FockDim::new(6);
        let truth = coherent_state(CoherentAmplitude::new(0.9, -0.4), dim).unwrap();
        let recs = sample_quadratures(&truth, &DetectionParams::uniform(1.0, 50_000), 4).unwrap();
        let e = edges();
        let mut hist = bin_records_with(&recs, &e).unwrap();
        hist.counts[7].iter_mut().for_each(|c| *c = 0);
        let (est, diag) = reconstruct_state(&hist, &StateMleConfig::new(dim)).unwrap();
        assert!(state_fidelity(&est, &truth).unwrap() > 0.99);
        assert!(diag.iterations_run > 0);
    }

    #[test]
    fn record_order_does_not_matter() {
        let dim = FockDim::new(5);
        let truth = coherent_state(CoherentAmplitude::new(0.5, 0.5), dim).unwrap();
        let mut recs = sample_quadratures(&truth, &DetectionParams::uniform(1.0, 5_000), 8).unwrap();
        let e = edges();
        let a = reconstruct_state(&bin_records_with(&recs, &e).unwrap(), &StateMleConfig::new(dim)).unwrap().0;
        recs.reverse();
        recs.swap(3, 1000);
        let b = reconstruct_state(&bin_records_with(&recs, &e).unwrap(), &StateMleConfig::new(dim)).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_histogram_is_rejected() {
        let povm = HomodynePovm::new(&edges(), 1.0, FockDim::new(3)).unwrap();
        let err = reconstruct_state_with(&povm, &[1.0; 10], &StateMleConfig::new(FockDim::new(3))).unwrap_err();
        assert!(matches!(err, Error::BinningMismatch(_)));
    }
}
