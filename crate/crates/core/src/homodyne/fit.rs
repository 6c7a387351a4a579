use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::QuadratureRecord;
use crate::error::{Error, Result};

/// Least-squares fit of `A cos(θ − φ₀) + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseFit {
    pub amplitude: f64,
    pub phase_offset: f64,
    pub dc_offset: f64,
    pub residual_rms: f64,
    pub phase_stderr: f64,
    pub amplitude_stderr: f64,
}

/// Fits individual records.
pub fn fit_phase(records: &[QuadratureRecord]) -> Result<PhaseFit> {
    let points: Vec<(f64, f64, f64)> = records
        .iter()
        .filter(|r| r.phase.is_finite() && r.value.is_finite())
        .map(|r| (r.phase, r.value, 1.0))
        .collect();
    fit_phase_points(&points)
}

/// Weighted fit of `(θ, y, weight)` points, e.g. per-bin means weighted by counts.
pub fn fit_phase_points(points: &[(f64, f64, f64)]) -> Result<PhaseFit> {
    if points.len() < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 points for a phase fit, got {}", points.len())));
    }
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    let mut weight_sum = 0.0;
    for &(theta, y, w) in points {
        let basis = Vector3::new(theta.cos(), theta.sin(), 1.0);
        normal += w * basis * basis.transpose();
        rhs += w * y * basis;
        weight_sum += w;
    }
    let inv = normal
        .try_inverse()
        .ok_or_else(|| Error::Numeric("phase fit is singular: phases do not span a period".into()))?;
    let coef = inv * rhs;
    let (a, b, c) = (coef[0], coef[1], coef[2]);
    let rss: f64 = points
        .iter()
        .map(|&(theta, y, w)| w * (y - a * theta.cos() - b * theta.sin() - c).powi(2))
        .sum();
    let dof = (weight_sum - 3.0).max(1.0);
    let sigma2 = rss / dof;
    let cov = inv * sigma2;
    let amplitude = a.hypot(b);
    let (va, vb, vab) = (cov[(0, 0)], cov[(1, 1)], cov[(0, 1)]);
    let amplitude_stderr = if amplitude > 0.0 {
        ((a * a * va + b * b * vb + 2.0 * a * b * vab) / (amplitude * amplitude)).max(0.0).sqrt()
    } else {
        va.max(vb).sqrt()
    };
    if !(amplitude >= 3.0 * amplitude_stderr) {
        return Err(Error::UndefinedPhase {
            amplitude,
            stderr: amplitude_stderr,
        });
    }
    let a4 = amplitude.powi(4);
    let phase_stderr = ((b * b * va + a * a * vb - 2.0 * a * b * vab) / a4).max(0.0).sqrt();
    Ok(PhaseFit {
        amplitude,
        phase_offset: b.atan2(a).rem_euclid(TAU),
        dc_offset: c,
        residual_rms: (rss / weight_sum).sqrt(),
        phase_stderr,
        amplitude_stderr,
    })
}

/// `output.phase_offset − input.phase_offset` wrapped to `(−π, π]`, with
/// the stderrs added in quadrature.
pub fn relative_phase(input: &PhaseFit, output: &PhaseFit) -> (f64, f64) {
    let mut d = (output.phase_offset - input.phase_offset).rem_euclid(TAU);
    if d > PI {
        d -= TAU;
    }
    (d, input.phase_stderr.hypot(output.phase_stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn synthetic(amp: f64, phi: f64, noise: f64, n: usize, s: u64) -> Vec<QuadratureRecord> {
        let mut rng = seed::stream(s, 0);
        let normal = Normal::new(0.0, noise).unwrap();
        (0..n)
            .map(|i| {
                let theta = rng.random::<f64>() * TAU;
                QuadratureRecord {
                    pulse_id: i as u64,
                    phase: theta,
                    value: amp * (theta - phi).cos() + 0.1 + normal.sample(&mut rng),
                }
            })
            .collect()
    }

    #[test]
    fn noiseless_fit_is_exact() {
        let fit = fit_phase(&synthetic(2.0, 0.0, 1e-9, 100, 1)).unwrap();
        assert!(fit.phase_offset.min(TAU - fit.phase_offset) < 1e-8);
        assert!((fit.amplitude - 2.0).abs() < 1e-8);
        assert!((fit.dc_offset - 0.1).abs() < 1e-8);
    }

    #[test]
    fn zero_phase_within_stderr() {
        let fit = fit_phase(&synthetic(1.0, 0.0, 0.7, 5000, 2)).unwrap();
        let wrapped = if fit.phase_offset > PI { fit.phase_offset - TAU } else { fit.phase_offset };
        assert!(wrapped.abs() < 4.0 * fit.phase_stderr);
    }

    #[test]
    fn vacuum_phase_is_undefined() {
        let err = fit_phase(&synthetic(0.0, 0.0, 0.7, 5000, 3)).unwrap_err();
        assert!(matches!(err, Error::UndefinedPhase { .. }));
    }

    #[test]
    fn coverage_of_reported_stderr() {
        let trials = 400;
        let mut inside = 0;
        for t in 0..trials {
            let phi = 0.013 * t as f64;
            let fit = fit_phase(&synthetic(0.8, phi, 0.7, 800, 100 + t)).unwrap();
            let mut d = (fit.phase_offset - phi).rem_euclid(TAU);
            if d > PI {
                d -= TAU;
            }
            if d.abs() <= 3.0 * fit.phase_stderr {
                inside += 1;
            }
        }
        assert!(inside as f64 >= 0.99 * trials as f64, "{inside}/{trials}");
    }

    #[test]
    fn relative_phase_wraps() {
        let mk = |p| PhaseFit {
            amplitude: 1.0,
            phase_offset: p,
            dc_offset: 0.0,
            residual_rms: 0.0,
            phase_stderr: 0.03,
            amplitude_stderr: 0.0,
        };
        let (d, s) = relative_phase(&mk(6.0), &mk(0.5));
        assert!((d - (0.5 + TAU - 6.0)).abs() < 1e-12);
        assert!((s - 0.03 * 2f64.sqrt()).abs() < 1e-12);
    }
}
