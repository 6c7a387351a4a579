//! Single-mode states in a truncated photon-number basis.
//!
//! Quadratures follow `x_θ = (a e^{-iθ} + a† e^{iθ}) / sqrt(2)`, so the vacuum
//! has variance 1/2 and a coherent state `|α⟩` has `⟨x_θ⟩ = sqrt(2)|α| cos(θ - arg α)`.
//! Every constructor truncates at `n_max`, renormalizes, and records the
//! discarded tail weight.

use std::f64::consts::{LN_10, PI};

use log::warn;
use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ONE, ZERO};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = 1e-9;

/// Maximum photon number of a truncated Fock space; the matrix dimension is `n_max + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FockDim(usize);

impl FockDim {
    pub const fn new(n_max: usize) -> Self {
        FockDim(n_max)
    }

    pub const fn n_max(self) -> usize {
        self.0
    }

    /// Matrix dimension, `n_max + 1`.
    pub const fn size(self) -> usize {
        self.0 + 1
    }

    pub(crate) fn ensure_eq(self, other: FockDim) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::DimMismatch {
                expected: self.0,
                found: other.0,
            })
        }
    }
}

impl std::fmt::Display for FockDim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n_max={}", self.0)
    }
}

/// Complex coherent-state amplitude; `|α|²` is the mean photon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentAmplitude(pub Complex64);

impl CoherentAmplitude {
    pub fn new(re: f64, im: f64) -> Self {
        CoherentAmplitude(Complex64::new(re, im))
    }

    pub fn real(re: f64) -> Self {
        Self::new(re, 0.0)
    }

    pub fn from_polar(modulus: f64, phase: f64) -> Self {
        CoherentAmplitude(Complex64::from_polar(modulus, phase))
    }

    /// Real amplitude with the given mean photon number.
    pub fn from_mean_photon_number(n: f64) -> Self {
        Self::real(n.sqrt())
    }

    pub fn value(self) -> Complex64 {
        self.0
    }

    pub fn mean_photon_number(self) -> f64 {
        self.0.norm_sqr()
    }
}

/// Squeezing in dB relative to the vacuum variance.
///
/// `phase` is the argument φ of the squeezing parameter `ξ = r e^{iφ}`; the
/// squeezed quadrature sits at `θ = φ/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezingSpec {
    pub squeezing_db: f64,
    pub antisqueezing_db: f64,
    #[serde(default)]
    pub phase: f64,
    /// Allows `squeezing_db != -antisqueezing_db`, realized as a squeezed thermal state.
    #[serde(default)]
    pub thermal: bool,
}

impl SqueezingSpec {
    /// Pure squeezed vacuum with `±db` squeezing/anti-squeezing.
    pub fn pure(db: f64, phase: f64) -> Self {
        SqueezingSpec {
            squeezing_db: -db.abs(),
            antisqueezing_db: db.abs(),
            phase,
            thermal: false,
        }
    }

    /// Squeezing parameter `r`.
    pub fn r(&self) -> f64 {
        if self.thermal {
            (self.antisqueezing_db - self.squeezing_db) * LN_10 / 40.0
        } else {
            self.squeezing_db.abs() * LN_10 / 20.0
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.squeezing_db.is_finite() && self.antisqueezing_db.is_finite() && self.phase.is_finite()) {
            return Err(Error::InvalidArgument("non-finite squeezing spec".into()));
        }
        if self.squeezing_db > 0.0 || self.antisqueezing_db < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "squeezing_db must be <= 0 <= antisqueezing_db, got {} / {}",
                self.squeezing_db, self.antisqueezing_db
            )));
        }
        let asymmetric = (self.squeezing_db + self.antisqueezing_db).abs() > 1e-12;
        if asymmetric && !self.thermal {
            return Err(Error::InvalidArgument(format!(
                "asymmetric squeezing {} / {} dB is not a pure state; set `thermal`",
                self.squeezing_db, self.antisqueezing_db
            )));
        }
        if self.thermal && self.squeezing_db + self.antisqueezing_db < -1e-12 {
            return Err(Error::InvalidArgument(
                "squeezing below the uncertainty bound (squeezing_db + antisqueezing_db < 0)".into(),
            ));
        }
        Ok(())
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix in a truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: FockDim,
    elements: CMatrix,
    truncated_weight: f64,
}

impl DensityMatrix {
    /// Validates and wraps a matrix. The matrix must already satisfy every
    /// density-matrix invariant within the module tolerances.
    pub fn from_matrix(elements: CMatrix) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(elements)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Wraps a matrix after Hermitian symmetrization and trace normalization,
    /// checking only positivity.
    pub fn from_matrix_normalized(elements: CMatrix) -> Result<Self> {
        let mut rho = Self::from_matrix_unchecked(elements)?;
        rho.elements = linalg::hermitian_part(&rho.elements);
        let tr = rho.trace();
        if !(tr > 0.0) {
            return Err(Error::InvalidState(format!("non-positive trace {tr:e}")));
        }
        rho.elements.unscale_mut(tr);
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(elements: CMatrix) -> Result<Self> {
        if elements.nrows() != elements.ncols() || elements.nrows() == 0 {
            return Err(Error::InvalidState(format!(
                "matrix must be square and non-empty, got {}x{}",
                elements.nrows(),
                elements.ncols()
            )));
        }
        if elements.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite entries".into()));
        }
        Ok(DensityMatrix {
            dim: FockDim::new(elements.nrows() - 1),
            elements,
            truncated_weight: 0.0,
        })
    }

    /// Normalized pure state from (possibly truncated) Fock amplitudes.
    /// `total_norm` is the squared norm of the untruncated vector, used to
    /// record the discarded weight.
    pub(crate) fn from_amplitudes(amplitudes: &[Complex64], total_norm: f64) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if !(norm > 0.0) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v = DVector::from_iterator(amplitudes.len(), amplitudes.iter().map(|c| c / norm.sqrt()));
        let mut elements = &v * v.adjoint();
        elements = linalg::hermitian_part(&elements);
        Ok(DensityMatrix {
            dim: FockDim::new(amplitudes.len() - 1),
            elements,
            truncated_weight: ((total_norm - norm) / total_norm).max(0.0),
        })
    }

    pub fn vacuum(dim: FockDim) -> Self {
        Self::number_state(0, dim).expect("vacuum fits every dimension")
    }

    /// The Fock state `|n⟩⟨n|`.
    pub fn number_state(n: usize, dim: FockDim) -> Result<Self> {
        if n > dim.n_max() {
            return Err(Error::InvalidArgument(format!("|{n}⟩ does not fit in {dim}")));
        }
        let mut elements = CMatrix::zeros(dim.size(), dim.size());
        elements[(n, n)] = ONE;
        Ok(DensityMatrix {
            dim,
            elements,
            truncated_weight: 0.0,
        })
    }

    /// Thermal state with mean photon number `nbar`, truncated and renormalized.
    pub fn thermal(nbar: f64, dim: FockDim) -> Result<Self> {
        if !(nbar >= 0.0) || !nbar.is_finite() {
            return Err(Error::InvalidArgument(format!("thermal nbar must be >= 0, got {nbar}")));
        }
        let ratio = nbar / (1.0 + nbar);
        let pops: Vec<f64> = (0..dim.size()).map(|n| ratio.powi(n as i32) / (1.0 + nbar)).collect();
        let kept: f64 = pops.iter().sum();
        let elements = CMatrix::from_diagonal(&DVector::from_iterator(
            dim.size(),
            pops.iter().map(|p| Complex64::new(p / kept, 0.0)),
        ));
        Ok(DensityMatrix {
            dim,
            elements,
            truncated_weight: 1.0 - kept,
        })
    }

    /// Convex mixture `Σ w_i ρ_i` with weights normalized to one.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty mixture".into()))?;
        let dim = first.1.dim;
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        if parts.iter().any(|(w, _)| *w < 0.0) || !(total > 0.0) {
            return Err(Error::InvalidArgument("mixture weights must be non-negative".into()));
        }
        let mut m = CMatrix::zeros(dim.size(), dim.size());
        for (w, rho) in parts {
            dim.ensure_eq(rho.dim)?;
            m += rho.elements.scale(*w / total);
        }
        Self::from_matrix(m)
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.elements
    }

    pub fn into_matrix(self) -> CMatrix {
        self.elements
    }

    /// `ρ_mn`.
    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.elements[(m, n)]
    }

    /// Population weight discarded when this state was truncated to `dim`.
    pub fn truncated_weight(&self) -> f64 {
        self.truncated_weight
    }

    pub(crate) fn with_truncated_weight(mut self, weight: f64) -> Self {
        self.truncated_weight = weight;
        self
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.elements).re
    }

    pub fn purity(&self) -> f64 {
        linalg::trace(&(&self.elements * &self.elements)).re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.elements)
    }

    /// Checks Hermiticity, unit trace and positivity within the module tolerances.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim.size();
        for i in 0..n {
            for j in i..n {
                let d = self.elements[(i, j)] - self.elements[(j, i)].conj();
                if d.norm() > HERMITIAN_TOL {
                    return Err(Error::InvalidState(format!(
                        "not Hermitian at ({i},{j}): deviation {:e}",
                        d.norm()
                    )));
                }
            }
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < -POSITIVITY_TOL {
            return Err(Error::NotPositive { min_eigenvalue: min_eig });
        }
        Ok(())
    }

    /// Zero-pads into a larger space.
    pub fn embed(&self, dim: FockDim) -> Result<Self> {
        if dim < self.dim {
            return Err(Error::InvalidArgument(format!("cannot embed {} into {dim}", self.dim)));
        }
        let mut elements = CMatrix::zeros(dim.size(), dim.size());
        elements
            .view_mut((0, 0), (self.dim.size(), self.dim.size()))
            .copy_from(&self.elements);
        Ok(DensityMatrix {
            dim,
            elements,
            truncated_weight: self.truncated_weight,
        })
    }

    /// Projects onto a smaller space and renormalizes.
    pub fn truncate(&self, dim: FockDim) -> Result<Self> {
        if dim > self.dim {
            return self.embed(dim);
        }
        let s = dim.size();
        let block = self.elements.view((0, 0), (s, s)).into_owned();
        let kept = linalg::trace(&block).re;
        if !(kept > 0.0) {
            return Err(Error::InvalidState("no population below the truncation".into()));
        }
        let discarded = 1.0 - kept;
        Ok(DensityMatrix {
            dim,
            elements: linalg::hermitian_part(&block.unscale(kept)),
            truncated_weight: 1.0 - (1.0 - self.truncated_weight) * (1.0 - discarded),
        })
    }

    /// `⟨a⟩ = Σ_k sqrt(k) ρ_{k,k-1}`.
    pub fn expect_a(&self) -> Complex64 {
        (1..self.dim.size())
            .map(|k| self.elements[(k, k - 1)] * (k as f64).sqrt())
            .sum()
    }

    /// `⟨a²⟩ = Σ_k sqrt(k(k-1)) ρ_{k,k-2}`.
    pub fn expect_a2(&self) -> Complex64 {
        (2..self.dim.size())
            .map(|k| self.elements[(k, k - 2)] * ((k * (k - 1)) as f64).sqrt())
            .sum()
    }

    /// Elementwise phase rotation `ρ_mn → e^{iθ(m−n)} ρ_mn`.
    pub fn rotated(&self, theta: f64) -> DensityMatrix {
        let mut out = self.clone();
        for m in 0..self.dim.size() {
            for n in 0..self.dim.size() {
                out.elements[(m, n)] *= Complex64::from_polar(1.0, theta * (m as f64 - n as f64));
            }
        }
        out
    }

    pub fn to_file(&self) -> DensityMatrixFile {
        let n = self.dim.size();
        DensityMatrixFile {
            n_max: self.dim.n_max(),
            re: (0..n).map(|i| (0..n).map(|j| self.elements[(i, j)].re).collect()).collect(),
            im: (0..n).map(|i| (0..n).map(|j| self.elements[(i, j)].im).collect()).collect(),
        }
    }

    pub fn from_file(file: &DensityMatrixFile) -> Result<Self> {
        let n = file.n_max + 1;
        let rows_ok = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if !rows_ok(&file.re) || !rows_ok(&file.im) {
            return Err(Error::InvalidState(format!("expected {n}x{n} re/im arrays")));
        }
        let m = CMatrix::from_fn(n, n, |i, j| Complex64::new(file.re[i][j], file.im[i][j]));
        Self::from_matrix(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }
}

/// On-disk form of a density matrix, row-major real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrixFile {
    pub n_max: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

/// Smallest `n_max` with `|α|² + 4|α| + 4 ≤ n_max`.
pub fn recommended_n_max(alpha: f64) -> usize {
    let a = alpha.abs();
    (a * a + 4.0 * a + 4.0).ceil() as usize
}

/// Coherent state `|α⟩⟨α|` truncated at `dim`.
pub fn coherent_state(alpha: CoherentAmplitude, dim: FockDim) -> Result<DensityMatrix> {
    let a = alpha.value();
    if !a.re.is_finite() || !a.im.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite coherent amplitude {a}")));
    }
    if recommended_n_max(a.norm()) > dim.n_max() {
        warn!(
            "coherent amplitude |α| = {:.3} exceeds the truncation guard for {dim}",
            a.norm()
        );
    }
    DensityMatrix::from_amplitudes(&coherent_amplitudes(a, dim), 1.0)
}

/// `⟨n|α⟩ = e^{-|α|²/2} αⁿ / sqrt(n!)` for `n ≤ n_max`, without renormalization.
pub fn coherent_amplitudes(alpha: Complex64, dim: FockDim) -> Vec<Complex64> {
    let mut c = Vec::with_capacity(dim.size());
    c.push(Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0));
    for n in 1..dim.size() {
        let prev = c[n - 1];
        c.push(prev * alpha / (n as f64).sqrt());
    }
    c
}

/// Squeezed vacuum, or a squeezed thermal state when `spec.thermal` is set.
pub fn squeezed_vacuum(spec: SqueezingSpec, dim: FockDim) -> Result<DensityMatrix> {
    spec.validate()?;
    let rho = if spec.thermal {
        squeezed_thermal(&spec, dim)?
    } else {
        let c = squeezed_vacuum_amplitudes(spec.r(), spec.phase, dim);
        DensityMatrix::from_amplitudes(&c, 1.0)?
    };
    if rho.truncated_weight() > 1e-4 {
        warn!(
            "squeezed state truncated at {dim} discards {:.2e} of its population",
            rho.truncated_weight()
        );
    }
    Ok(rho)
}

/// `c_2k = (−e^{iφ} tanh r)^k sqrt((2k)!) / (2^k k!) / sqrt(cosh r)`, odd terms zero.
pub fn squeezed_vacuum_amplitudes(r: f64, phase: f64, dim: FockDim) -> Vec<Complex64> {
    let mut c = vec![ZERO; dim.size()];
    let step = -Complex64::from_polar(r.tanh(), phase);
    let mut term = Complex64::new(1.0 / r.cosh().sqrt(), 0.0);
    c[0] = term;
    let mut k = 1;
    while 2 * k <= dim.n_max() {
        // ratio c_2k / c_2(k-1) = step * sqrt((2k)(2k-1)) / (2k)
        let kf = k as f64;
        term *= step * ((2.0 * kf) * (2.0 * kf - 1.0)).sqrt() / (2.0 * kf);
        c[2 * k] = term;
        k += 1;
    }
    c
}

fn squeezed_thermal(spec: &SqueezingSpec, dim: FockDim) -> Result<DensityMatrix> {
    let r = spec.r();
    let amplification = 10f64.powf((spec.squeezing_db + spec.antisqueezing_db) / 20.0);
    let nbar = 0.5 * (amplification - 1.0);
    // Work in a padded space so the truncation of S ρ_th S† only touches the tail.
    let big = FockDim::new((2 * dim.size() + 40).max(60));
    let n = big.size();
    let xi = Complex64::from_polar(r, spec.phase);
    // H = i (ξ* a² − ξ a†²)/2, S = exp(K) = exp(−iH)
    let mut h = CMatrix::zeros(n, n);
    for k in 2..n {
        let s = ((k * (k - 1)) as f64).sqrt();
        // a² |k⟩ = s |k−2⟩
        h[(k - 2, k)] += Complex64::i() * xi.conj() * s * 0.5;
        h[(k, k - 2)] += -Complex64::i() * xi * s * 0.5;
    }
    let (values, vectors) = linalg::hermitian_eigen(&h);
    let mut phased = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        let f = Complex64::from_polar(1.0, -v);
        for i in 0..n {
            phased[(i, j)] *= f;
        }
    }
    let s_op = phased * vectors.adjoint();
    let thermal = DensityMatrix::thermal(nbar, FockDim::new(dim.n_max().max(big.n_max() / 2)))?.embed(big)?;
    let full = &s_op * thermal.matrix() * s_op.adjoint();
    let full = DensityMatrix::from_matrix_unchecked(linalg::hermitian_part(&full))?;
    full.truncate(dim)
}

pub fn mean_photon_number(rho: &DensityMatrix) -> f64 {
    (0..rho.dim().size()).map(|n| n as f64 * rho.get(n, n).re).sum()
}

/// `⟨x_θ⟩ = sqrt(2) Re(⟨a⟩ e^{−iθ})`.
pub fn quadrature_mean(rho: &DensityMatrix, theta: f64) -> f64 {
    std::f64::consts::SQRT_2 * (rho.expect_a() * Complex64::from_polar(1.0, -theta)).re
}

/// `Var(x_θ)` using the canonical commutator, so the vacuum gives exactly 1/2.
pub fn quadrature_variance(rho: &DensityMatrix, theta: f64) -> f64 {
    let a = rho.expect_a();
    let a2 = rho.expect_a2();
    let n = mean_photon_number(rho);
    let rot = Complex64::from_polar(1.0, -2.0 * theta);
    let second = (a2 * rot).re + n + 0.5;
    let mean = std::f64::consts::SQRT_2 * (a * Complex64::from_polar(1.0, -theta)).re;
    second - mean * mean
}

/// Variance averaged uniformly over the LO phase, `(Var(x) + Var(p)) / 2`.
pub fn mean_variance(rho: &DensityMatrix) -> f64 {
    0.5 * (quadrature_variance(rho, 0.0) + quadrature_variance(rho, 0.5 * PI))
}

/// Angle of the least-noisy quadrature in `[0, π)`.
pub fn squeezing_axis(rho: &DensityMatrix) -> f64 {
    let a = rho.expect_a();
    let c = rho.expect_a2() - a * a;
    // Var(x_θ) = n_c + 1/2 + Re(c e^{−2iθ}); minimal where 2θ − arg c = π.
    (0.5 * (c.arg() + PI)).rem_euclid(PI)
}

/// Axis-aligned sampling grid for Wigner functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub x_points: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub p_points: usize,
}

impl GridSpec {
    pub fn symmetric(half_width: f64, points: usize) -> Self {
        GridSpec {
            x_min: -half_width,
            x_max: half_width,
            x_points: points,
            p_min: -half_width,
            p_max: half_width,
            p_points: points,
        }
    }

    /// Square grid over `±(sqrt(2 n_max) + 2)`.
    pub fn covering(dim: FockDim, points: usize) -> Self {
        Self::symmetric((2.0 * dim.n_max() as f64).sqrt() + 2.0, points)
    }

    fn axis(min: f64, max: f64, points: usize) -> Vec<f64> {
        let step = (max - min) / (points - 1) as f64;
        (0..points).map(|i| min + step * i as f64).collect()
    }
}

/// Wigner function sampled on a grid; `values[ix][ip]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub x_axis: Vec<f64>,
    pub p_axis: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl WignerGrid {
    pub fn dx(&self) -> f64 {
        self.x_axis[1] - self.x_axis[0]
    }

    pub fn dp(&self) -> f64 {
        self.p_axis[1] - self.p_axis[0]
    }

    /// Riemann sum of `W Δx Δp`.
    pub fn integral(&self) -> f64 {
        self.values.iter().flatten().sum::<f64>() * self.dx() * self.dp()
    }

    /// Location and value of the maximum.
    pub fn peak(&self) -> (f64, f64, f64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for (i, row) in self.values.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                if w > best.2 {
                    best = (i, j, w);
                }
            }
        }
        (self.x_axis[best.0], self.p_axis[best.1], best.2)
    }

    /// `∫ W(x, p) dp` by the trapezoid rule, one value per `x_axis` point.
    pub fn x_marginal(&self) -> Vec<f64> {
        let dp = self.dp();
        self.values
            .iter()
            .map(|row| {
                let inner: f64 = row.iter().sum();
                (inner - 0.5 * (row[0] + row[row.len() - 1])) * dp
            })
            .collect()
    }
}

/// Wigner function from the Fock-basis Laguerre kernel, normalized so
/// `∫ W dx dp = 1` and the vacuum peak is `1/π`.
pub fn wigner(rho: &DensityMatrix, grid: &GridSpec) -> Result<WignerGrid> {
    if grid.x_points < 2 || grid.p_points < 2 || !(grid.x_max > grid.x_min) || !(grid.p_max > grid.p_min) {
        return Err(Error::InvalidArgument("Wigner grid needs at least 2 points per axis".into()));
    }
    let x_axis = GridSpec::axis(grid.x_min, grid.x_max, grid.x_points);
    let p_axis = GridSpec::axis(grid.p_min, grid.p_max, grid.p_points);
    let size = rho.dim().size();
    // sqrt(n!/m!) for m ≥ n
    let ln_fact: Vec<f64> = (0..size).map(linalg::ln_factorial).collect();
    let values = x_axis
        .iter()
        .map(|&x| {
            p_axis
                .iter()
                .map(|&p| {
                    let r2 = x * x + p * p;
                    let gauss = (-r2).exp() / PI;
                    let z = Complex64::new(x, -p) * std::f64::consts::SQRT_2;
                    let mut w = 0.0;
                    for m in 0..size {
                        for n in 0..=m {
                            let d = m - n;
                            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                            let pref = sign * (0.5 * (ln_fact[n] - ln_fact[m])).exp();
                            let kernel = z.powu(d as u32) * (pref * gauss * linalg::laguerre(n, d as f64, 2.0 * r2));
                            let term = rho.get(m, n) * kernel;
                            w += if d == 0 { term.re } else { 2.0 * term.re };
                        }
                    }
                    w
                })
                .collect()
        })
        .collect();
    Ok(WignerGrid { x_axis, p_axis, values })
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(a) b sqrt(a)))²`, clamped to `[0, 1]`.
pub fn state_fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    a.dim().ensure_eq(b.dim())?;
    for rho in [a, b] {
        let min = rho.min_eigenvalue();
        if min < -POSITIVITY_TOL {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
    }
    Ok(linalg::uhlmann_fidelity(a.matrix(), b.matrix()).clamp(0.0, 1.0))
}

/// `c0|0⟩ + c1|1⟩`, normalized.
pub fn fock_qubit(c0: Complex64, c1: Complex64, dim: FockDim) -> Result<DensityMatrix> {
    if dim.n_max() < 1 {
        return Err(Error::InvalidArgument("a Fock qubit needs n_max >= 1".into()));
    }
    if c0.norm_sqr() + c1.norm_sqr() == 0.0 {
        return Err(Error::InvalidArgument("both qubit coefficients are zero".into()));
    }
    let mut amps = vec![ZERO; dim.size()];
    amps[0] = c0;
    amps[1] = c1;
    DensityMatrix::from_amplitudes(&amps, c0.norm_sqr() + c1.norm_sqr())
        .map(|rho| rho.with_truncated_weight(0.0))
}
