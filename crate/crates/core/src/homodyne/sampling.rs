use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::{check_efficiency, DetectionParams, QuadratureRecord};
use crate::channel::loss_map;
use crate::error::{Error, Result};
use crate::fock::DensityMatrix;
use crate::linalg::{gauss_legendre, hermite_functions, ZERO};
use crate::seed;

const CELLS: usize = 8192;
const MARGIN: f64 = 6.0;
const NEGATIVE_MASS_TOL: f64 = -1e-9;
const CHECK_PHASES: usize = 64;

/// Inverse-CDF sampler for `p(x|θ)` at arbitrary LO phase.
///
/// The density is `Σ_δ e^{−iδθ} g_δ(x)` with `g_δ = Σ_{m−n=δ} ρ_mn ψ_m ψ_n`,
/// so one table of cumulative components `∫ g_δ` serves every phase.
#[derive(Debug, Clone)]
pub struct QuadratureSampler {
    d: usize,
    x0: f64,
    h: f64,
    // [cell edge][δ]
    cumulative: Vec<Complex64>,
}

impl QuadratureSampler {
    pub fn new(rho: &DensityMatrix, eta: f64) -> Result<Self> {
        check_efficiency(eta)?;
        let detected = if eta < 1.0 { loss_map(rho, eta)? } else { rho.clone() };
        let d = rho.dim().size();
        let half = (2.0 * rho.dim().n_max() as f64).sqrt() + MARGIN;
        let h = 2.0 * half / CELLS as f64;
        let (nodes, weights) = gauss_legendre(3);
        let cell_mass: Vec<Vec<Complex64>> = (0..CELLS)
            .into_par_iter()
            .map(|k| {
                let lo = -half + k as f64 * h;
                let mut acc = vec![ZERO; d];
                for (t, w) in nodes.iter().zip(&weights) {
                    let psi = hermite_functions(lo + 0.5 * h * (t + 1.0), d - 1);
                    let s = 0.5 * h * w;
                    for (delta, slot) in acc.iter_mut().enumerate() {
                        let mut g = ZERO;
                        for m in delta..d {
                            g += detected.get(m, m - delta) * (psi[m] * psi[m - delta]);
                        }
                        *slot += g * s;
                    }
                }
                acc
            })
            .collect();
        let mut cumulative = vec![ZERO; (CELLS + 1) * d];
        for k in 0..CELLS {
            for delta in 0..d {
                cumulative[(k + 1) * d + delta] = cumulative[k * d + delta] + cell_mass[k][delta];
            }
        }
        let sampler = QuadratureSampler {
            d,
            x0: -half,
            h,
            cumulative,
        };
        sampler.check_masses((0..CHECK_PHASES).map(|j| j as f64 * TAU / CHECK_PHASES as f64))?;
        Ok(sampler)
    }

    fn phasors(&self, theta: f64) -> Vec<Complex64> {
        (0..self.d).map(|delta| Complex64::from_polar(1.0, -(delta as f64) * theta)).collect()
    }

    #[inline]
    fn cdf_at(&self, k: usize, phasors: &[Complex64]) -> f64 {
        let row = &self.cumulative[k * self.d..(k + 1) * self.d];
        let mut acc = row[0].re;
        for delta in 1..self.d {
            acc += 2.0 * (phasors[delta] * row[delta]).re;
        }
        acc
    }

    /// Tabulated `∫_{−L}^{x} p(y|θ) dy` at the cell edge nearest below `x`.
    pub fn cdf(&self, theta: f64, x: f64) -> f64 {
        let ph = self.phasors(theta);
        let k = (((x - self.x0) / self.h).floor().max(0.0) as usize).min(CELLS);
        self.cdf_at(k, &ph)
    }

    /// Support `[−L, L]` of the tabulation.
    pub fn support(&self) -> (f64, f64) {
        (self.x0, self.x0 + self.h * CELLS as f64)
    }

    pub fn check_masses(&self, phases: impl IntoIterator<Item = f64>) -> Result<()> {
        for theta in phases {
            let ph = self.phasors(theta);
            let mut prev = self.cdf_at(0, &ph);
            for k in 1..=CELLS {
                let c = self.cdf_at(k, &ph);
                if c - prev < NEGATIVE_MASS_TOL {
                    return Err(Error::Numeric(format!(
                        "negative probability mass {:.2e} near x = {:.3} at θ = {theta:.3}; raise n_max",
                        c - prev,
                        self.x0 + k as f64 * self.h
                    )));
                }
                prev = c;
            }
        }
        Ok(())
    }

    /// Quadrature with CDF fraction `u ∈ [0, 1)` at phase `theta`.
    pub fn sample(&self, theta: f64, u: f64) -> f64 {
        let ph = self.phasors(theta);
        let total = self.cdf_at(CELLS, &ph);
        let target = u * total;
        let (mut lo, mut hi) = (0usize, CELLS);
        // invariant: cdf(lo) <= target < cdf(hi)
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cdf_at(mid, &ph) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (c0, c1) = (self.cdf_at(lo, &ph), self.cdf_at(hi, &ph));
        let frac = if c1 > c0 { ((target - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.5 };
        self.x0 + (lo as f64 + frac) * self.h
    }
}

/// Simulated acquisition of `det.samples` records. Record `i` draws its
/// phase and quadrature from its own stream, so output is bit-identical for
/// a given seed regardless of thread count.
pub fn sample_quadratures(rho: &DensityMatrix, det: &DetectionParams, seed: u64) -> Result<Vec<QuadratureRecord>> {
    det.validate()?;
    let sampler = QuadratureSampler::new(rho, det.efficiency)?;
    let sweep: Vec<f64> = det.phase_sweep.iter().map(|t| t.rem_euclid(TAU)).collect();
    sampler.check_masses(sweep.iter().copied())?;
    let records = (0..det.samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::stream(seed, i);
            let theta = if sweep.is_empty() {
                rng.random::<f64>() * TAU
            } else {
                sweep[i as usize % sweep.len()]
            };
            let u: f64 = rng.random();
            QuadratureRecord {
                pulse_id: i,
                phase: theta,
                value: sampler.sample(theta, u),
            }
        })
        .collect();
    Ok(records)
}
