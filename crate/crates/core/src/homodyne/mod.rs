//! Balanced homodyne detection: quadrature distributions, bin POVMs,
//! Monte-Carlo acquisition, pulse integration and sinusoidal phase fits.

mod binning;
mod fit;
mod povm;
mod pulse;
mod sampling;

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::loss_map;
use crate::error::{Error, Result};
use crate::fock::DensityMatrix;
use crate::linalg::hermite_functions;

pub use binning::{bin_records, bin_records_with, BinEdges, BinnedHistogram};
pub use fit::{fit_phase, fit_phase_points, relative_phase, PhaseFit};
pub use povm::{povm_elements, HomodynePovm};
pub use pulse::{integrate_pulse, make_mask, synthetic_trace, vacuum_trace, TemporalMask, TimeSeries};
pub use sampling::{sample_quadratures, QuadratureSampler};

/// Detection efficiency, sample count and LO phase schedule.
///
/// An empty `phase_sweep` draws each record's phase uniformly from `[0, 2π)`;
/// otherwise records cycle through the listed phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    pub efficiency: f64,
    pub samples: usize,
    #[serde(default)]
    pub phase_sweep: Vec<f64>,
}

impl DetectionParams {
    pub fn uniform(efficiency: f64, samples: usize) -> Self {
        DetectionParams {
            efficiency,
            samples,
            phase_sweep: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_efficiency(self.efficiency)?;
        if self.samples == 0 {
            return Err(Error::InvalidArgument("samples must be positive".into()));
        }
        if !self.phase_sweep.is_empty() {
            // Require at least three distinct phases with no circular gap of π or more.
            let mut p: Vec<f64> = self.phase_sweep.iter().map(|t| t.rem_euclid(TAU)).collect();
            if p.iter().any(|t| !t.is_finite()) {
                return Err(Error::InvalidArgument("phase sweep contains non-finite phases".into()));
            }
            p.sort_by(f64::total_cmp);
            p.dedup();
            let mut gap = p[0] + TAU - p[p.len() - 1];
            for w in p.windows(2) {
                gap = gap.max(w[1] - w[0]);
            }
            if p.len() < 3 || gap >= std::f64::consts::PI {
                return Err(Error::InvalidArgument(
                    "phase sweep does not cover a full period".into(),
                ));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_efficiency(eta: f64) -> Result<()> {
    if eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("efficiency must lie in (0, 1], got {eta}")))
    }
}

/// One integrated pulse: LO phase in `[0, 2π)` and quadrature value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRecord {
    pub pulse_id: u64,
    #[serde(rename = "phase_rad")]
    pub phase: f64,
    #[serde(rename = "quadrature")]
    pub value: f64,
}

pub fn write_records_csv(path: impl AsRef<Path>, records: &[QuadratureRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<QuadratureRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Quadrature density `p(x|θ)` after detection loss.
#[derive(Debug, Clone)]
pub struct QuadraturePdf {
    // Re(ρ'_mn e^{i(n−m)θ}); the imaginary parts cancel pairwise.
    kernel: DMatrix<f64>,
}

impl QuadraturePdf {
    pub fn eval(&self, x: f64) -> f64 {
        let d = self.kernel.nrows();
        let psi = hermite_functions(x, d - 1);
        let mut acc = 0.0;
        for m in 0..d {
            let mut row = 0.0;
            for n in 0..d {
                row += self.kernel[(m, n)] * psi[n];
            }
            acc += psi[m] * row;
        }
        acc
    }
}

/// `p(x|θ) = Σ_mn ρ'_mn e^{i(n−m)θ} ψ_m(x) ψ_n(x)` with `ρ' = loss_map(ρ, η)`.
pub fn quadrature_pdf(rho: &DensityMatrix, theta: f64, eta: f64) -> Result<QuadraturePdf> {
    check_efficiency(eta)?;
    let detected = if eta < 1.0 { loss_map(rho, eta)? } else { rho.clone() };
    let d = rho.dim().size();
    let kernel = DMatrix::from_fn(d, d, |m, n| {
        (detected.get(m, n) * num_complex::Complex64::from_polar(1.0, (n as f64 - m as f64) * theta)).re
    });
    Ok(QuadraturePdf { kernel })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, squeezed_vacuum, wigner, CoherentAmplitude, FockDim, GridSpec, SqueezingSpec};
    use crate::linalg::gauss_legendre;
    use std::f64::consts::{PI, SQRT_2};

    fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let (x, w) = gauss_legendre(32);
        let panels = 64;
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = a + p as f64 * h;
                x.iter().zip(&w).map(|(xi, wi)| 0.5 * h * wi * f(lo + 0.5 * h * (xi + 1.0))).sum::<f64>()
            })
            .sum()
    }

    fn gaussian(x: f64, mean: f64, var: f64) -> f64 {
        (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
    }

    #[test]
    fn vacuum_pdf_is_gaussian() {
        let vac = DensityMatrix::vacuum(FockDim::new(4));
        for theta in [0.0, 1.0, 4.0] {
            let pdf = quadrature_pdf(&vac, theta, 0.7).unwrap();
            for x in [-2.0, -0.3, 0.0, 1.1] {
                assert!((pdf.eval(x) - gaussian(x, 0.0, 0.5)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn coherent_pdf_is_displaced_gaussian() {
        let dim = FockDim::new(40);
        let alpha = 1.3;
        let pdf = quadrature_pdf(&coherent_state(CoherentAmplitude::real(alpha), dim).unwrap(), 0.0, 1.0).unwrap();
        for x in [-1.0, 0.5, 1.84, 3.0] {
            assert!((pdf.eval(x) - gaussian(x, SQRT_2 * alpha, 0.5)).abs() < 1e-10);
        }
        // and the loss-scaled amplitude at η = 0.25
        let lossy = quadrature_pdf(&coherent_state(CoherentAmplitude::real(alpha), dim).unwrap(), 0.0, 0.25).unwrap();
        assert!((lossy.eval(0.9) - gaussian(0.9, SQRT_2 * alpha * 0.5, 0.5)).abs() < 1e-10);
    }

    #[test]
    fn single_photon_has_node_at_origin() {
        let one = DensityMatrix::number_state(1, FockDim::new(3)).unwrap();
        for theta in [0.0, 2.0] {
            assert!(quadrature_pdf(&one, theta, 1.0).unwrap().eval(0.0).abs() < 1e-15);
        }
        assert!(quadrature_pdf(&one, 0.0, 0.5).unwrap().eval(0.0) > 0.1);
    }

    #[test]
    fn pdf_normalization_and_squeezed_variance() {
        let sq = squeezed_vacuum(SqueezingSpec::pure(4.3, 0.0), FockDim::new(50)).unwrap();
        let pdf = quadrature_pdf(&sq, 0.0, 1.0).unwrap();
        let norm = integrate(|x| pdf.eval(x), -10.0, 10.0);
        let var = integrate(|x| x * x * pdf.eval(x), -10.0, 10.0);
        assert!((norm - 1.0).abs() < 1e-9);
        assert!((var - 0.5 * 10f64.powf(-0.43)).abs() < 1e-6);
    }

    #[test]
    fn wigner_marginal_matches_pdf() {
        let dim = FockDim::new(20);
        let rho = DensityMatrix::mixture(&[
            (0.6, &coherent_state(CoherentAmplitude::new(0.8, -0.5), dim).unwrap()),
            (0.4, &squeezed_vacuum(SqueezingSpec::pure(3.0, 0.7), dim).unwrap()),
        ])
        .unwrap();
        let grid = GridSpec::symmetric(8.0, 321);
        let w = wigner(&rho, &grid).unwrap();
        let marginal = w.x_marginal();
        let pdf = quadrature_pdf(&rho, 0.0, 1.0).unwrap();
        let worst = w
            .x_axis
            .iter()
            .zip(&marginal)
            .map(|(&x, &m)| (m - pdf.eval(x)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "worst {worst}");
    }

    #[test]
    fn records_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let records = vec![
            QuadratureRecord { pulse_id: 0, phase: 0.1, value: -1.25 },
            QuadratureRecord { pulse_id: 1, phase: 6.2, value: 0.1 + 0.2 },
        ];
        write_records_csv(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("pulse_id,phase_rad,quadrature\n"));
        assert_eq!(read_records_csv(&path).unwrap(), records);
    }

    #[test]
    fn detection_params_validation() {
        DetectionParams::uniform(0.85, 10).validate().unwrap();
        assert!(DetectionParams::uniform(0.0, 10).validate().is_err());
        assert!(DetectionParams::uniform(1.2, 10).validate().is_err());
        let half = DetectionParams {
            efficiency: 1.0,
            samples: 10,
            phase_sweep: vec![0.0, 1.0, 2.0],
        };
        assert!(half.validate().is_err());
        let full = DetectionParams {
            phase_sweep: (0..8).map(|k| k as f64 * TAU / 8.0).collect(),
            ..half
        };
        full.validate().unwrap();
    }
}
