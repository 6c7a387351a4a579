use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{check_efficiency, BinEdges};
use crate::channel::loss_adjoint_real;
use crate::error::{Error, Result};
use crate::fock::FockDim;
use crate::linalg::{gauss_legendre, hermite_functions, CMatrix, ZERO};

const PANEL_WIDTH: f64 = 0.25;
const PANEL_ORDER: usize = 20;

/// Bin POVM for phase-swept homodyne detection.
///
/// Each element is the quadrature projector integrated over its quadrature
/// bin and averaged over its phase bin, which factors as
/// `Π_mn = Φ_{m−n}(phase bin) · Y_mn(quadrature bin)` with `Φ_δ` the bin
/// average of `e^{iδθ}` and `Y = L_η†(∫ψ_m ψ_n)` real symmetric.
/// Element order is `phase_bin · quad_bins + quad_bin`.
#[derive(Debug, Clone)]
pub struct HomodynePovm {
    dim: FockDim,
    eta: f64,
    edges: BinEdges,
    // [phase bin][δ] for δ = 0..d
    phase_factors: Vec<Vec<Complex64>>,
    // [quad bin]
    quad_kernels: Vec<DMatrix<f64>>,
}

impl HomodynePovm {
    pub fn new(edges: &BinEdges, eta: f64, dim: FockDim) -> Result<Self> {
        edges.validate()?;
        check_efficiency(eta)?;
        let d = dim.size();
        let phase_factors = edges
            .phase_edges
            .windows(2)
            .map(|w| (0..d).map(|delta| phase_average(delta as f64, w[0], w[1])).collect())
            .collect();
        let mut quad_kernels = quadrature_kernels(&edges.quad_edges, dim);
        if eta < 1.0 {
            for k in quad_kernels.iter_mut() {
                *k = loss_adjoint_real(k, eta);
            }
        }
        Ok(HomodynePovm {
            dim,
            eta,
            edges: edges.clone(),
            phase_factors,
            quad_kernels,
        })
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn efficiency(&self) -> f64 {
        self.eta
    }

    pub fn edges(&self) -> &BinEdges {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_frequencies(&self, frequencies: &[f64]) -> Result<()> {
        if frequencies.len() != self.len() {
            return Err(Error::BinningMismatch(format!(
                "{} frequencies for {} POVM elements",
                frequencies.len(),
                self.len()
            )));
        }
        Ok(())
    }

    pub fn check_edges(&self, edges: &BinEdges) -> Result<()> {
        if edges != &self.edges {
            return Err(Error::BinningMismatch("histogram edges differ from the POVM edges".into()));
        }
        Ok(())
    }

    fn factor(&self, b: usize, delta: isize) -> Complex64 {
        if delta >= 0 {
            self.phase_factors[b][delta as usize]
        } else {
            self.phase_factors[b][(-delta) as usize].conj()
        }
    }

    /// Explicit operator for one bin.
    pub fn element(&self, phase_bin: usize, quad_bin: usize) -> CMatrix {
        let d = self.dim.size();
        let y = &self.quad_kernels[quad_bin];
        CMatrix::from_fn(d, d, |m, n| self.factor(phase_bin, m as isize - n as isize) * y[(m, n)])
    }

    pub fn elements(&self) -> Vec<CMatrix> {
        let mut out = Vec::with_capacity(self.len());
        for b in 0..self.edges.phase_bins() {
            for x in 0..self.edges.quad_bins() {
                out.push(self.element(b, x));
            }
        }
        out
    }

    /// `Tr(Π_j ρ)` for every bin, in element order. `rho` must be Hermitian.
    pub fn probabilities(&self, rho: &CMatrix) -> Vec<f64> {
        let d = self.dim.size();
        let nx = self.edges.quad_bins();
        // g[x][δ] = Σ_{m−n=δ} Y_mn ρ_nm
        let g: Vec<Vec<Complex64>> = self
            .quad_kernels
            .iter()
            .map(|y| {
                (0..d)
                    .map(|delta| (delta..d).map(|m| rho[(m - delta, m)] * y[(m, m - delta)]).sum())
                    .collect()
            })
            .collect();
        let mut p = Vec::with_capacity(self.len());
        for phase in &self.phase_factors {
            for gx in g.iter().take(nx) {
                let mut acc = gx[0].re;
                for delta in 1..d {
                    acc += 2.0 * (phase[delta] * gx[delta]).re;
                }
                p.push(acc);
            }
        }
        p
    }

    /// `Σ_j w_j Π_j` for weights in element order.
    pub fn weighted_sum(&self, weights: &[f64]) -> CMatrix {
        let d = self.dim.size();
        let nx = self.edges.quad_bins();
        let mut out = CMatrix::zeros(d, d);
        let mut h = vec![ZERO; d];
        for (x, y) in self.quad_kernels.iter().enumerate() {
            h.iter_mut().for_each(|v| *v = ZERO);
            for (b, phase) in self.phase_factors.iter().enumerate() {
                let w = weights[b * nx + x];
                if w != 0.0 {
                    for delta in 0..d {
                        h[delta] += phase[delta] * w;
                    }
                }
            }
            for m in 0..d {
                for n in 0..d {
                    let hv = if m >= n { h[m - n] } else { h[n - m].conj() };
                    out[(m, n)] += hv * y[(m, n)];
                }
            }
        }
        out
    }

    /// Largest deviation of `Σ_x Π_(b,x)` from the identity over phase bins.
    pub fn completeness_error(&self) -> f64 {
        let d = self.dim.size();
        let nx = self.edges.quad_bins();
        let mut worst: f64 = 0.0;
        for b in 0..self.edges.phase_bins() {
            let mut w = vec![0.0; self.len()];
            w[b * nx..(b + 1) * nx].iter_mut().for_each(|v| *v = 1.0);
            let sum = self.weighted_sum(&w);
            let err = (sum - CMatrix::identity(d, d)).iter().map(|z| z.norm()).fold(0.0, f64::max);
            worst = worst.max(err);
        }
        worst
    }
}

/// Explicit POVM operators in element order.
pub fn povm_elements(edges: &BinEdges, eta: f64, dim: FockDim) -> Result<Vec<CMatrix>> {
    Ok(HomodynePovm::new(edges, eta, dim)?.elements())
}

/// Mean of `e^{iδθ}` over `[a, b]`.
fn phase_average(delta: f64, a: f64, b: f64) -> Complex64 {
    if delta == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let half = 0.5 * delta * (b - a);
    let sinc = half.sin() / half;
    Complex64::from_polar(sinc, 0.5 * delta * (a + b))
}

/// `∫ ψ_m ψ_n dx` over each quadrature bin, outer bins running to ±∞.
fn quadrature_kernels(edges: &[f64], dim: FockDim) -> Vec<DMatrix<f64>> {
    let d = dim.size();
    let bins = edges.len() - 1;
    let reach = (2.0 * dim.n_max() as f64 + 1.0).sqrt() + 12.0;
    let far = reach.max(edges[0].abs() + 1.0).max(edges[bins].abs() + 1.0);
    let mut limits = Vec::with_capacity(bins + 1);
    limits.push(-far);
    limits.extend_from_slice(&edges[1..bins]);
    limits.push(far);
    let (nodes, weights) = gauss_legendre(PANEL_ORDER);
    limits
        .windows(2)
        .map(|w| {
            let mut k = DMatrix::<f64>::zeros(d, d);
            let (a, b) = (w[0], w[1]);
            let panels = ((b - a) / PANEL_WIDTH).ceil().max(1.0) as usize;
            let h = (b - a) / panels as f64;
            for p in 0..panels {
                let lo = a + p as f64 * h;
                for (t, wt) in nodes.iter().zip(&weights) {
                    let x = lo + 0.5 * h * (t + 1.0);
                    let psi = hermite_functions(x, d - 1);
                    let s = 0.5 * h * wt;
                    for m in 0..d {
                        let pm = s * psi[m];
                        for n in m..d {
                            k[(m, n)] += pm * psi[n];
                        }
                    }
                }
            }
            for m in 0..d {
                for n in 0..m {
                    k[(m, n)] = k[(n, m)];
                }
            }
            k
        })
        .collect()
}
