//! Phase-rotation-plus-loss channels, their Fock-basis superoperators, and
//! the map primitives (loss, amplification, additive noise) they are built from.
//!
//! Rotation convention: `ρ_mn → e^{iθ(m−n)} ρ_mn`, so a coherent amplitude
//! `α` becomes `α e^{iθ}` and a homodyne sinusoid shifts by `+θ`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, FockDim};
use crate::linalg::{self, binomial, CMatrix, ZERO};

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const CP_TOL: f64 = 1e-8;
pub const TRACE_BOUND_TOL: f64 = 1e-8;

/// Phase shift, transmission and added thermal noise for one channel setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub phase_shift: f64,
    pub transmission: f64,
    #[serde(default)]
    pub excess_noise: f64,
    #[serde(default)]
    pub label: String,
}

impl ChannelParams {
    pub fn new(phase_shift: f64, transmission: f64) -> Self {
        ChannelParams {
            phase_shift,
            transmission,
            excess_noise: 0.0,
            label: String::new(),
        }
    }

    pub fn with_noise(mut self, excess_noise: f64) -> Self {
        self.excess_noise = excess_noise;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn identity() -> Self {
        Self::new(0.0, 1.0).with_label("identity")
    }

    /// Slowdown (EIT) setting: 2.13 rad at 25% transmission.
    pub fn eit() -> Self {
        Self::new(2.13, 0.25).with_label("EIT")
    }

    /// N-type setting with a 2.1 mW signal field: 0.67 rad at 3.5% transmission.
    pub fn n_type() -> Self {
        Self::new(0.67, 0.035).with_label("N-type @ 2.1 mW")
    }

    pub fn validate(&self) -> Result<()> {
        if !self.phase_shift.is_finite() {
            return Err(Error::InvalidArgument("phase_shift must be finite".into()));
        }
        check_transmission(self.transmission)?;
        if !(self.excess_noise >= 0.0) || !self.excess_noise.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "excess_noise must be >= 0, got {}",
                self.excess_noise
            )));
        }
        Ok(())
    }
}

fn check_transmission(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("transmission must lie in (0, 1], got {t}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalPowerEntry {
    pub signal_power_mw: f64,
    pub channel: ChannelParams,
}

/// Channel settings indexed by signal-field power, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignalPowerMap {
    entries: Vec<SignalPowerEntry>,
}

impl SignalPowerMap {
    pub fn new(entries: Vec<SignalPowerEntry>) -> Result<Self> {
        let map = SignalPowerMap { entries };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::InvalidArgument("signal power map is empty".into()));
        }
        for pair in self.entries.windows(2) {
            if !(pair[1].signal_power_mw > pair[0].signal_power_mw) {
                return Err(Error::InvalidArgument(format!(
                    "signal powers must be strictly increasing ({} then {})",
                    pair[0].signal_power_mw, pair[1].signal_power_mw
                )));
            }
        }
        for e in &self.entries {
            e.channel.validate()?;
        }
        Ok(())
    }

    pub fn entries(&self) -> &[SignalPowerEntry] {
        &self.entries
    }

    pub fn weakest(&self) -> &SignalPowerEntry {
        &self.entries[0]
    }

    /// Six illustrative settings over 0.55–2.10 mW. Phase falls linearly from
    /// 1.48 rad to 0.67 rad; transmission falls geometrically from 25% to 3.5%.
    pub fn illustrative() -> Self {
        let powers = [0.55, 0.86, 1.17, 1.48, 1.79, 2.10];
        let (p0, p1) = (powers[0], powers[5]);
        let entries = powers
            .iter()
            .map(|&p| {
                let s = (p - p0) / (p1 - p0);
                let phase = 1.48 + s * (0.67 - 1.48);
                let t = 0.25 * (0.035f64 / 0.25).powf(s);
                SignalPowerEntry {
                    signal_power_mw: p,
                    channel: ChannelParams::new(phase, t).with_label(format!("N-type @ {p:.2} mW")),
                }
            })
            .collect();
        SignalPowerMap { entries }
    }
}

/// Rank-4 superoperator with `ρ_out[k][l] = Σ_mn E[k][l][m][n] ρ_in[m][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessTensor {
    dim: FockDim,
    elements: Vec<Complex64>,
}

impl ProcessTensor {
    pub fn zeros(dim: FockDim) -> Self {
        let d = dim.size();
        ProcessTensor {
            dim,
            elements: vec![ZERO; d * d * d * d],
        }
    }

    pub fn identity(dim: FockDim) -> Self {
        let mut e = Self::zeros(dim);
        let d = dim.size();
        for k in 0..d {
            for l in 0..d {
                e.set(k, l, k, l, Complex64::new(1.0, 0.0));
            }
        }
        e
    }

    /// Builds the tensor column by column by applying `map` to every `|m⟩⟨n|`.
    pub fn from_map(dim: FockDim, map: impl Fn(&CMatrix) -> CMatrix) -> Self {
        let d = dim.size();
        let mut e = Self::zeros(dim);
        let mut basis = CMatrix::zeros(d, d);
        for m in 0..d {
            for n in 0..d {
                basis[(m, n)] = Complex64::new(1.0, 0.0);
                let out = map(&basis);
                basis[(m, n)] = ZERO;
                for k in 0..d {
                    for l in 0..d {
                        e.set(k, l, m, n, out[(k, l)]);
                    }
                }
            }
        }
        e
    }

    pub fn from_elements(dim: FockDim, elements: Vec<Complex64>) -> Result<Self> {
        let d = dim.size();
        if elements.len() != d * d * d * d {
            return Err(Error::InvalidProcess(format!(
                "expected {} elements for {dim}, got {}",
                d * d * d * d,
                elements.len()
            )));
        }
        Ok(ProcessTensor { dim, elements })
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn elements(&self) -> &[Complex64] {
        &self.elements
    }

    #[inline]
    fn index(&self, k: usize, l: usize, m: usize, n: usize) -> usize {
        let d = self.dim.size();
        ((k * d + l) * d + m) * d + n
    }

    /// `E_kl^mn`.
    #[inline]
    pub fn get(&self, k: usize, l: usize, m: usize, n: usize) -> Complex64 {
        self.elements[self.index(k, l, m, n)]
    }

    #[inline]
    pub fn set(&mut self, k: usize, l: usize, m: usize, n: usize, value: Complex64) {
        let i = self.index(k, l, m, n);
        self.elements[i] = value;
    }

    /// `Σ_mn E_kl^mn ρ_mn` on a raw matrix.
    pub fn apply_matrix(&self, rho: &CMatrix) -> CMatrix {
        let d = self.dim.size();
        let mut out = CMatrix::zeros(d, d);
        let mut idx = 0;
        for k in 0..d {
            for l in 0..d {
                let mut acc = ZERO;
                for m in 0..d {
                    for n in 0..d {
                        acc += self.elements[idx] * rho[(m, n)];
                        idx += 1;
                    }
                }
                out[(k, l)] = acc;
            }
        }
        out
    }

    /// Jamiolkowski operator `J = Σ E_kl^mn |m⟩⟨n| ⊗ |k⟩⟨l|` with row index
    /// `m·d + k` and column index `n·d + l`.
    pub fn jamiolkowski_matrix(&self) -> CMatrix {
        let d = self.dim.size();
        let mut j = CMatrix::zeros(d * d, d * d);
        for k in 0..d {
            for l in 0..d {
                for m in 0..d {
                    for n in 0..d {
                        j[(m * d + k, n * d + l)] = self.get(k, l, m, n);
                    }
                }
            }
        }
        j
    }

    /// Inverse of [`jamiolkowski_matrix`](Self::jamiolkowski_matrix); a pure index permutation.
    pub fn from_jamiolkowski_matrix(dim: FockDim, j: &CMatrix) -> Result<Self> {
        let d = dim.size();
        if j.nrows() != d * d || j.ncols() != d * d {
            return Err(Error::InvalidProcess(format!(
                "Jamiolkowski matrix must be {0}x{0}",
                d * d
            )));
        }
        let mut e = Self::zeros(dim);
        for k in 0..d {
            for l in 0..d {
                for m in 0..d {
                    for n in 0..d {
                        e.set(k, l, m, n, j[(m * d + k, n * d + l)]);
                    }
                }
            }
        }
        Ok(e)
    }

    /// `Σ_k E_kk^mn` as an operator on the input space.
    pub fn trace_operator(&self) -> CMatrix {
        let d = self.dim.size();
        CMatrix::from_fn(d, d, |m, n| (0..d).map(|k| self.get(k, k, m, n)).sum())
    }

    /// Largest deviation from `E_lk^nm = conj(E_kl^mn)`.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim.size();
        let mut worst: f64 = 0.0;
        for k in 0..d {
            for l in 0..d {
                for m in 0..d {
                    for n in 0..d {
                        let diff = self.get(l, k, n, m) - self.get(k, l, m, n).conj();
                        worst = worst.max(diff.norm());
                    }
                }
            }
        }
        worst
    }

    /// Largest `|E_kl^mn|` with `k − l ≠ m − n`.
    pub fn covariance_violation(&self) -> f64 {
        let d = self.dim.size() as isize;
        let mut worst: f64 = 0.0;
        for k in 0..d {
            for l in 0..d {
                for m in 0..d {
                    for n in 0..d {
                        if k - l != m - n {
                            worst = worst.max(self.get(k as usize, l as usize, m as usize, n as usize).norm());
                        }
                    }
                }
            }
        }
        worst
    }

    /// Checks Hermiticity preservation, complete positivity and trace non-increase.
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > HERMITICITY_TOL {
            return Err(Error::InvalidProcess(format!(
                "not Hermiticity preserving (deviation {herm:e})"
            )));
        }
        let min = linalg::min_eigenvalue(&self.jamiolkowski_matrix());
        if min < -CP_TOL {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        let max = linalg::max_eigenvalue(&self.trace_operator());
        if max > 1.0 + TRACE_BOUND_TOL {
            return Err(Error::InvalidProcess(format!(
                "trace-increasing (largest trace-operator eigenvalue {max})"
            )));
        }
        Ok(())
    }

    /// Restriction to photon numbers `≤ dim.n_max()` on both input and output.
    pub fn truncate(&self, dim: FockDim) -> Result<Self> {
        if dim > self.dim {
            return Err(Error::InvalidArgument(format!("cannot truncate {} to {dim}", self.dim)));
        }
        let d = dim.size();
        let mut out = Self::zeros(dim);
        for k in 0..d {
            for l in 0..d {
                for m in 0..d {
                    for n in 0..d {
                        out.set(k, l, m, n, self.get(k, l, m, n));
                    }
                }
            }
        }
        Ok(out)
    }

    /// `other ∘ self`: apply `self` first.
    pub fn then(&self, other: &ProcessTensor) -> Result<Self> {
        self.dim.ensure_eq(other.dim)?;
        Ok(Self::from_map(self.dim, |basis| other.apply_matrix(&self.apply_matrix(basis))))
    }

    pub fn to_file(&self) -> ProcessTensorFile {
        ProcessTensorFile {
            n_max: self.dim.n_max(),
            elements: self.elements.iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn from_file(file: &ProcessTensorFile) -> Result<Self> {
        Self::from_elements(
            FockDim::new(file.n_max),
            file.elements.iter().map(|&[re, im]| Complex64::new(re, im)).collect(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }
}

/// On-disk tensor: elements flattened row-major over `[k][l][m][n]` as `(re, im)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessTensorFile {
    pub n_max: usize,
    pub elements: Vec<[f64; 2]>,
}

/// Coefficient of `ρ_{k+j,l+j}` in the loss output element `(k, l)`.
#[inline]
fn loss_coefficient(k: usize, l: usize, j: usize, t: f64) -> f64 {
    (binomial(k + j, j) * binomial(l + j, j)).sqrt() * t.powf(0.5 * (k + l) as f64) * (1.0 - t).powi(j as i32)
}

/// Generalized Bernoulli transformation of a raw matrix.
pub fn loss_matrix(rho: &CMatrix, t: f64) -> CMatrix {
    let d = rho.nrows();
    CMatrix::from_fn(d, d, |k, l| {
        let top = d - k.max(l);
        (0..top).map(|j| rho[(k + j, l + j)] * loss_coefficient(k, l, j, t)).sum()
    })
}

/// Heisenberg-picture (adjoint) loss map, so `Tr(L†(Π) ρ) = Tr(Π L(ρ))`.
pub fn loss_adjoint_matrix(op: &CMatrix, t: f64) -> CMatrix {
    let d = op.nrows();
    CMatrix::from_fn(d, d, |m, n| {
        (0..=m.min(n))
            .map(|j| op[(m - j, n - j)] * loss_coefficient(m - j, n - j, j, t))
            .sum()
    })
}

/// Real-valued variant of [`loss_adjoint_matrix`].
pub fn loss_adjoint_real(op: &nalgebra::DMatrix<f64>, t: f64) -> nalgebra::DMatrix<f64> {
    let d = op.nrows();
    nalgebra::DMatrix::from_fn(d, d, |m, n| {
        (0..=m.min(n))
            .map(|j| op[(m - j, n - j)] * loss_coefficient(m - j, n - j, j, t))
            .sum()
    })
}

/// Kraus operators `A_j = Σ_m sqrt(C(m,j) T^{m−j} (1−T)^j) |m−j⟩⟨m|`.
pub fn loss_kraus(t: f64, dim: FockDim) -> Vec<CMatrix> {
    let d = dim.size();
    (0..d)
        .map(|j| {
            let mut a = CMatrix::zeros(d, d);
            for m in j..d {
                let c = (binomial(m, j) * t.powi((m - j) as i32) * (1.0 - t).powi(j as i32)).sqrt();
                a[(m - j, m)] = Complex64::new(c, 0.0);
            }
            a
        })
        .collect()
}

/// Quantum-limited phase-insensitive amplifier with gain `g ≥ 1`.
pub fn amplify_matrix(rho: &CMatrix, g: f64) -> CMatrix {
    let d = rho.nrows();
    let gain_ratio = (g - 1.0) / g;
    CMatrix::from_fn(d, d, |k, l| {
        (0..=k.min(l))
            .map(|j| {
                let (a, b) = (k - j, l - j);
                let c = (binomial(a + j, j) * binomial(b + j, j)).sqrt()
                    * g.powf(-0.5 * (a + b) as f64)
                    * gain_ratio.powi(j as i32)
                    / g;
                rho[(a, b)] * c
            })
            .sum()
    })
}

pub fn rotate_matrix(rho: &CMatrix, theta: f64) -> CMatrix {
    let d = rho.nrows();
    CMatrix::from_fn(d, d, |m, n| rho[(m, n)] * Complex64::from_polar(1.0, theta * (m as f64 - n as f64)))
}

/// Classical Gaussian additive noise raising every quadrature variance by
/// `added_variance`, realized as loss `1/G` followed by amplification `G = 1 + added_variance`.
pub fn thermalize_matrix(rho: &CMatrix, added_variance: f64) -> CMatrix {
    if added_variance == 0.0 {
        return rho.clone();
    }
    let g = 1.0 + added_variance;
    amplify_matrix(&loss_matrix(rho, 1.0 / g), g)
}

fn channel_matrix(params: &ChannelParams, rho: &CMatrix) -> CMatrix {
    let out = loss_matrix(&rotate_matrix(rho, params.phase_shift), params.transmission);
    thermalize_matrix(&out, params.excess_noise)
}

/// Ground-truth superoperator for a rotation + loss (+ noise) channel.
pub fn oracle_tensor(params: &ChannelParams, dim: FockDim) -> Result<ProcessTensor> {
    params.validate()?;
    if params.excess_noise > 0.0 {
        // Loss lowers and amplification raises photon numbers, so every
        // intermediate index stays below max(input, output): the truncated
        // composition is exact.
        return Ok(ProcessTensor::from_map(dim, |basis| channel_matrix(params, basis)));
    }
    let d = dim.size();
    let t = params.transmission;
    let mut e = ProcessTensor::zeros(dim);
    for k in 0..d {
        for l in 0..d {
            for j in 0..d - k.max(l) {
                let (m, n) = (k + j, l + j);
                let phase = Complex64::from_polar(1.0, params.phase_shift * (m as f64 - n as f64));
                e.set(k, l, m, n, phase * loss_coefficient(k, l, j, t));
            }
        }
    }
    Ok(e)
}

/// Output of [`apply_process`]: the renormalized state and the trace before renormalization.
#[derive(Debug, Clone)]
pub struct ProcessOutput {
    pub state: DensityMatrix,
    pub trace: f64,
}

pub fn apply_process(tensor: &ProcessTensor, rho: &DensityMatrix) -> Result<ProcessOutput> {
    tensor.dim().ensure_eq(rho.dim())?;
    let out = tensor.apply_matrix(rho.matrix());
    let trace = linalg::trace(&out).re;
    if !(trace > 0.0) {
        return Err(Error::InvalidProcess(format!("output trace {trace:e} is not positive")));
    }
    let state = DensityMatrix::from_matrix_normalized(out)?.with_truncated_weight(1.0 - trace.min(1.0));
    Ok(ProcessOutput { state, trace })
}

pub fn loss_map(rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    check_transmission(t)?;
    let out = loss_matrix(rho.matrix(), t);
    Ok(DensityMatrix::from_matrix_normalized(out)?.with_truncated_weight(rho.truncated_weight()))
}

/// Adds phase-insensitive Gaussian noise that raises the mean quadrature
/// variance by `added_variance`. Population pushed above `n_max` is
/// discarded and the state renormalized.
pub fn thermalize(rho: &DensityMatrix, added_variance: f64) -> Result<DensityMatrix> {
    if !(added_variance >= 0.0) || !added_variance.is_finite() {
        return Err(Error::InvalidArgument(format!("added variance must be >= 0, got {added_variance}")));
    }
    let out = thermalize_matrix(rho.matrix(), added_variance);
    let kept = linalg::trace(&out).re;
    Ok(DensityMatrix::from_matrix_normalized(out)?.with_truncated_weight(1.0 - kept.min(1.0)))
}

/// Applies the channel described by `params` to a state.
pub fn apply_channel(params: &ChannelParams, rho: &DensityMatrix) -> Result<DensityMatrix> {
    params.validate()?;
    let out = channel_matrix(params, rho.matrix());
    let kept = linalg::trace(&out).re;
    Ok(DensityMatrix::from_matrix_normalized(out)?.with_truncated_weight(1.0 - kept.min(1.0)))
}
