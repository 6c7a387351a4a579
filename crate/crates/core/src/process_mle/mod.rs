//! Coherent-state process tomography: maximum-likelihood reconstruction of
//! the Fock-basis superoperator from probe histograms, and the quantities
//! read off the result.
//!
//! The Jamiolkowski operator is indexed by input⊗output pairs `(m, k)`.
//! For a phase-covariant fit it is block diagonal in `s = m − k`, and the
//! iteration runs on those blocks directly.

mod analysis;
mod bootstrap;
mod probes;

use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use analysis::{
    output_phase, phase_slice, predict_qubit, predict_squeezed, process_fidelity, variance_curve, PhaseSlice,
    QubitPrediction, SqueezedPrediction,
};
pub use bootstrap::{bootstrap, bootstrap_from, bootstrap_with, BootstrapSummary};
pub use probes::{default_amplitudes, Probe, ProbeEntry, ProbeManifest, ProbeSet};

use crate::channel::{ProcessTensor, CP_TOL, TRACE_BOUND_TOL};
use crate::error::{Error, Result};
use crate::fock::{coherent_state, recommended_n_max, FockDim};
use crate::homodyne::HomodynePovm;
use crate::linalg::{self, CMatrix, ZERO};
use crate::mle::{self, Evaluation, Objective};
use crate::state_mle::{reconstruct_state, saturated_terms, LossCorrection, MleDiagnostics, StateMleConfig, PROBABILITY_FLOOR};

/// Trace constraint on the reconstructed process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceMode {
    /// `Tr_out J = I` on the reconstruction space.
    Preserving,
    /// `Tr_out J ≤ I`: input directions the probes barely reach may lose trace.
    NonIncreasing,
}

/// Where the probe input states come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputModel {
    /// Ideal coherent states at the probe amplitudes.
    Coherent,
    /// States reconstructed from each probe's input histogram.
    Reconstructed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessMleConfig {
    /// Dimension of the reported tensor.
    #[serde(default = "default_dim")]
    pub dim: FockDim,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_true")]
    pub phase_covariant: bool,
    #[serde(default = "default_trace_mode")]
    pub trace_mode: TraceMode,
    /// Photon-number cutoff used during the fit; defaults to the truncation
    /// guard of the largest probe amplitude. The result is then truncated to `dim`.
    #[serde(default)]
    pub reconstruction_n_max: Option<usize>,
    #[serde(default = "default_input_model")]
    pub input_model: InputModel,
    /// Stop early once the relative likelihood change falls below this.
    #[serde(default = "default_tol")]
    pub log_likelihood_tol: f64,
    #[serde(default = "default_true")]
    pub accelerate: bool,
}

fn default_dim() -> FockDim {
    FockDim::new(6)
}

fn default_iterations() -> usize {
    100
}

fn default_true() -> bool {
    true
}

fn default_trace_mode() -> TraceMode {
    TraceMode::NonIncreasing
}

fn default_input_model() -> InputModel {
    InputModel::Coherent
}

fn default_tol() -> f64 {
    1e-12
}

impl Default for ProcessMleConfig {
    fn default() -> Self {
        ProcessMleConfig {
            dim: default_dim(),
            iterations: default_iterations(),
            phase_covariant: true,
            trace_mode: default_trace_mode(),
            reconstruction_n_max: None,
            input_model: default_input_model(),
            log_likelihood_tol: default_tol(),
            accelerate: true,
        }
    }
}

impl ProcessMleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        if !(self.log_likelihood_tol > 0.0) {
            return Err(Error::InvalidArgument("log_likelihood_tol must be positive".into()));
        }
        if let Some(n) = self.reconstruction_n_max {
            if n < self.dim.n_max() {
                return Err(Error::InvalidArgument(format!(
                    "reconstruction_n_max {n} is below the reported n_max {}",
                    self.dim.n_max()
                )));
            }
        }
        Ok(())
    }

    /// Cutoff used during the fit for a given probe set.
    pub fn reconstruction_dim(&self, probes: &ProbeSet) -> FockDim {
        let n = self
            .reconstruction_n_max
            .unwrap_or_else(|| recommended_n_max(probes.max_amplitude()).max(self.dim.n_max()));
        FockDim::new(n)
    }
}

impl LossCorrection for ProbeSet {
    fn set_efficiency(&mut self, eta: f64) {
        self.efficiency = eta;
    }
}

/// Result of a process fit: the tensor truncated to the requested
/// dimension and the untruncated tensor on the reconstruction space.
#[derive(Debug, Clone)]
pub struct ProcessReconstruction {
    pub tensor: ProcessTensor,
    pub full: ProcessTensor,
    pub diagnostics: MleDiagnostics,
}

pub fn reconstruct_process(probes: &ProbeSet, config: &ProcessMleConfig) -> Result<(ProcessTensor, MleDiagnostics)> {
    let rec = reconstruct_process_full(probes, config)?;
    Ok((rec.tensor, rec.diagnostics))
}

pub fn reconstruct_process_full(probes: &ProbeSet, config: &ProcessMleConfig) -> Result<ProcessReconstruction> {
    config.validate()?;
    probes.validate()?;
    if probes.distinct_moduli() < 2 {
        warn!("probe set has a single amplitude modulus; the process is not tomographically determined");
    }
    let rec_dim = config.reconstruction_dim(probes);
    let povm = HomodynePovm::new(probes.edges(), probes.efficiency(), rec_dim)?;
    let inputs = input_states(probes, config, rec_dim)?;
    let layout = Layout::new(rec_dim.size(), config.phase_covariant);
    let frequencies: Vec<&[f64]> = probes.probes().iter().map(|p| p.output.as_slice()).collect();
    let objective = ProcessObjective {
        povm: &povm,
        inputs: &inputs,
        frequencies,
        totals: probes.probes().iter().map(|p| p.output.iter().sum()).collect(),
        total: probes.probes().iter().flat_map(|p| p.output.iter()).sum(),
        layout: &layout,
        trace_mode: config.trace_mode,
    };
    if !(objective.total > 0.0) || objective.totals.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidArgument("every probe needs a non-empty output histogram".into()));
    }
    let start = layout.groups.iter().map(|g| CMatrix::identity(g.len(), g.len())).collect();
    let settings = mle::Settings {
        max_iterations: config.iterations,
        tol: config.log_likelihood_tol,
        accelerate: config.accelerate,
    };
    let (blocks, diagnostics) = mle::maximize(&objective, start, &settings);
    if diagnostics.regularized_bins > 0 {
        warn!(
            "{} occupied bins had predicted probability below {PROBABILITY_FLOOR:e}",
            diagnostics.regularized_bins
        );
    }
    layout.check(&blocks)?;
    let full = layout.to_tensor(rec_dim, &blocks);
    let tensor = full.truncate(config.dim)?;
    tensor.validate()?;
    Ok(ProcessReconstruction {
        tensor,
        full,
        diagnostics,
    })
}

fn input_states(probes: &ProbeSet, config: &ProcessMleConfig, dim: FockDim) -> Result<Vec<CMatrix>> {
    match config.input_model {
        InputModel::Coherent => probes
            .probes()
            .iter()
            .map(|p| Ok(coherent_state(p.amplitude, dim)?.into_matrix()))
            .collect(),
        InputModel::Reconstructed => probes
            .probes()
            .par_iter()
            .map(|p| {
                let hist = p.input.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("reconstructed input states need every probe's input histogram".into())
                })?;
                let state_config = StateMleConfig {
                    efficiency: probes.efficiency(),
                    max_iterations: 500,
                    ..StateMleConfig::new(dim)
                };
                Ok(reconstruct_state(hist, &state_config)?.0.into_matrix())
            })
            .collect(),
    }
}

/// Partition of the Jamiolkowski index pairs `(m, k)` into independent blocks.
pub(crate) struct Layout {
    d: usize,
    groups: Vec<Vec<(usize, usize)>>,
}

impl Layout {
    fn new(d: usize, covariant: bool) -> Self {
        let groups = if covariant {
            // s = m − k from −(d−1) to d−1
            (0..2 * d - 1)
                .map(|i| {
                    let s = i as isize - (d as isize - 1);
                    (0..d)
                        .filter_map(|k| {
                            let m = k as isize + s;
                            (0..d as isize).contains(&m).then_some((m as usize, k))
                        })
                        .collect()
                })
                .collect()
        } else {
            vec![(0..d).flat_map(|m| (0..d).map(move |k| (m, k))).collect()]
        };
        Layout { d, groups }
    }

    /// Complete positivity and trace non-increase, checked block by block.
    fn check(&self, blocks: &[CMatrix]) -> Result<()> {
        for block in blocks {
            let min = linalg::min_eigenvalue(block);
            if min < -CP_TOL {
                return Err(Error::NotPositive { min_eigenvalue: min });
            }
        }
        let max = linalg::max_eigenvalue(&self.trace_out(blocks));
        if max > 1.0 + TRACE_BOUND_TOL {
            return Err(Error::InvalidProcess(format!(
                "trace-increasing (largest trace-operator eigenvalue {max})"
            )));
        }
        Ok(())
    }

    fn to_tensor(&self, dim: FockDim, blocks: &[CMatrix]) -> ProcessTensor {
        let mut e = ProcessTensor::zeros(dim);
        for (group, block) in self.groups.iter().zip(blocks) {
            let h = linalg::hermitian_part(block);
            for (a, &(m, k)) in group.iter().enumerate() {
                for (b, &(n, l)) in group.iter().enumerate() {
                    e.set(k, l, m, n, h[(a, b)]);
                }
            }
        }
        e
    }

    /// `Σ_mn J[(m,k),(n,l)] ρ[m,n]`.
    fn apply(&self, blocks: &[CMatrix], rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.d, self.d);
        for (group, block) in self.groups.iter().zip(blocks) {
            for (a, &(m, k)) in group.iter().enumerate() {
                for (b, &(n, l)) in group.iter().enumerate() {
                    out[(k, l)] += block[(a, b)] * rho[(m, n)];
                }
            }
        }
        out
    }

    /// Partial trace over the output index of a block-diagonal operator.
    fn trace_out(&self, blocks: &[CMatrix]) -> CMatrix {
        let mut lambda = CMatrix::zeros(self.d, self.d);
        for (group, block) in self.groups.iter().zip(blocks) {
            for (a, &(m, k)) in group.iter().enumerate() {
                for (b, &(n, l)) in group.iter().enumerate() {
                    if k == l {
                        lambda[(m, n)] += block[(a, b)];
                    }
                }
            }
        }
        lambda
    }

    /// Blocks of `A ⊗ I` for an input-space operator `A`.
    fn lift(&self, a: &CMatrix) -> Vec<CMatrix> {
        self.groups
            .iter()
            .map(|g| CMatrix::from_fn(g.len(), g.len(), |i, j| if g[i].1 == g[j].1 { a[(g[i].0, g[j].0)] } else { ZERO }))
            .collect()
    }
}

struct ProcessObjective<'a> {
    povm: &'a HomodynePovm,
    inputs: &'a [CMatrix],
    frequencies: Vec<&'a [f64]>,
    totals: Vec<f64>,
    total: f64,
    layout: &'a Layout,
    trace_mode: TraceMode,
}

impl Objective for ProcessObjective<'_> {
    fn evaluate(&self, x: &[CMatrix]) -> Evaluation {
        let nb = self.povm.edges().phase_bins() as f64;
        let parts: Vec<(f64, Vec<f64>, usize)> = (0..self.inputs.len())
            .into_par_iter()
            .map(|i| {
                let out = self.layout.apply(x, &self.inputs[i]);
                let p = self.povm.probabilities(&out);
                saturated_terms(self.frequencies[i], &p, nb / self.totals[i], self.total)
            })
            .collect();
        let mut log_likelihood = 0.0;
        let mut weights = Vec::with_capacity(self.povm.len() * parts.len());
        let mut regularized = 0;
        for (ll, w, r) in parts {
            log_likelihood += ll;
            weights.extend(w);
            regularized += r;
        }
        Evaluation {
            log_likelihood: log_likelihood / self.total,
            weights,
            regularized,
        }
    }

    fn gradient(&self, _x: &[CMatrix], eval: &Evaluation) -> Vec<CMatrix> {
        let n = self.povm.len();
        let per_probe: Vec<CMatrix> = (0..self.inputs.len())
            .into_par_iter()
            .map(|i| self.povm.weighted_sum(&eval.weights[i * n..(i + 1) * n]))
            .collect();
        // R[(m,k),(n,l)] = Σ_i ρ_i[n,m] R_i[k,l]
        self.layout
            .groups
            .iter()
            .map(|g| {
                CMatrix::from_fn(g.len(), g.len(), |a, b| {
                    let ((ma, ka), (mb, kb)) = (g[a], g[b]);
                    self.inputs
                        .iter()
                        .zip(&per_probe)
                        .map(|(rho, r)| rho[(mb, ma)] * r[(ka, kb)])
                        .sum()
                })
            })
            .collect()
    }

    fn normalize(&self, x: Vec<CMatrix>) -> Vec<CMatrix> {
        let lambda = self.layout.trace_out(&x);
        let (values, vectors) = linalg::hermitian_eigen(&lambda);
        let top = values[values.len() - 1];
        let floor = match self.trace_mode {
            TraceMode::Preserving => f64::MIN_POSITIVE,
            TraceMode::NonIncreasing => NON_INCREASING_CLIP * top,
        };
        let mut scaled = vectors.clone();
        for (j, &v) in values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(1.0 / v.max(floor).sqrt());
        }
        let inv_sqrt = scaled * vectors.adjoint();
        self.layout
            .lift(&inv_sqrt)
            .iter()
            .zip(&x)
            .map(|(k, b)| linalg::hermitian_part(&(k * b * k)))
            .collect()
    }

    fn multiplier(&self, x: &[CMatrix], grad: &[CMatrix]) -> Vec<CMatrix> {
        let rx: Vec<CMatrix> = grad.iter().zip(x).map(|(r, b)| r * b).collect();
        self.layout.lift(&linalg::hermitian_part(&self.layout.trace_out(&rx)))
    }
}

/// In trace-non-increasing mode, input directions whose `Tr_out(RJR)` falls
/// below this fraction of the largest are left with trace below one instead
/// of being rescaled up.
pub const NON_INCREASING_CLIP: f64 = 1e-12;

/// Output-element phase `arg Σ_mn E_kl^mn ρ_mn` helper shared with the
/// analysis routines.
pub(crate) fn contract(tensor: &ProcessTensor, rho: &CMatrix, k: usize, l: usize) -> Complex64 {
    let d = tensor.dim().size();
    let mut acc = ZERO;
    for m in 0..d.min(rho.nrows()) {
        for n in 0..d.min(rho.ncols()) {
            acc += tensor.get(k, l, m, n) * rho[(m, n)];
        }
    }
    acc
}
