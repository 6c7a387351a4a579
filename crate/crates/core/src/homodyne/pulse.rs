use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub time_axis: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(time_axis: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if time_axis.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "time axis has {} samples, values {}",
                time_axis.len(),
                values.len()
            )));
        }
        sample_spacing(&time_axis)?;
        Ok(TimeSeries { time_axis, values })
    }

    pub fn from_fn(time_axis: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = time_axis.iter().map(|&t| f(t)).collect();
        Self::new(time_axis, values)
    }

    pub fn dt(&self) -> f64 {
        self.time_axis[1] - self.time_axis[0]
    }
}

fn sample_spacing(axis: &[f64]) -> Result<f64> {
    if axis.len() < 2 {
        return Err(Error::InvalidArgument("time axis needs at least two samples".into()));
    }
    let dt = axis[1] - axis[0];
    let uniform = axis
        .windows(2)
        .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs());
    if !(dt > 0.0) || !uniform {
        return Err(Error::InvalidArgument("time axis must be increasing and uniformly spaced".into()));
    }
    Ok(dt)
}

/// Unit-norm temporal mode: `Σ w_i² Δt = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalMask {
    pub time_axis: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TemporalMask {
    /// Normalizes `weights` to unit norm.
    pub fn new(time_axis: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let dt = sample_spacing(&time_axis)?;
        if weights.len() != time_axis.len() {
            return Err(Error::InvalidArgument("mask weights and time axis differ in length".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("mask weights must be finite and non-negative".into()));
        }
        let norm = (weights.iter().map(|w| w * w).sum::<f64>() * dt).sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidArgument("mask is identically zero".into()));
        }
        Ok(TemporalMask {
            weights: weights.iter().map(|w| w / norm).collect(),
            time_axis,
        })
    }

    pub fn dt(&self) -> f64 {
        self.time_axis[1] - self.time_axis[0]
    }

    /// `Σ u_i v_i Δt` with another mode on the same axis.
    pub fn overlap(&self, other: &TemporalMask) -> Result<f64> {
        same_axis(&self.time_axis, &other.time_axis)?;
        Ok(self.weights.iter().zip(&other.weights).map(|(a, b)| a * b).sum::<f64>() * self.dt())
    }
}

fn same_axis(a: &[f64], b: &[f64]) -> Result<()> {
    let tol = 1e-9 * (a[1] - a[0]).abs();
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| (x - y).abs() > tol) {
        return Err(Error::InvalidArgument("trace and mask do not share a time axis".into()));
    }
    Ok(())
}

/// Field mode from a recorded intensity envelope: `√I`, normalized.
/// The pulse phase is taken as flat across the envelope.
pub fn make_mask(envelope: &TimeSeries) -> Result<TemporalMask> {
    if envelope.values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("intensity envelope must be finite and non-negative".into()));
    }
    TemporalMask::new(envelope.time_axis.clone(), envelope.values.iter().map(|v| v.sqrt()).collect())
}

/// Quadrature value `Σ w_i s_i Δt`.
pub fn integrate_pulse(trace: &TimeSeries, mask: &TemporalMask) -> Result<f64> {
    same_axis(&trace.time_axis, &mask.time_axis)?;
    Ok(trace.values.iter().zip(&mask.weights).map(|(s, w)| s * w).sum::<f64>() * mask.dt())
}

/// White shot-noise trace with spectral density such that any unit-norm
/// mode integrates to a variance of 1/2.
pub fn vacuum_trace<R: Rng + ?Sized>(time_axis: &[f64], rng: &mut R) -> Result<TimeSeries> {
    let dt = sample_spacing(time_axis)?;
    let sigma = (0.5 / dt).sqrt();
    let values = time_axis
        .iter()
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect::<Vec<f64>>();
    Ok(TimeSeries {
        time_axis: time_axis.to_vec(),
        values,
    })
}

/// Vacuum noise plus a coherent pulse `α` in `mode`, seen at LO phase `theta`.
pub fn synthetic_trace<R: Rng + ?Sized>(mode: &TemporalMask, alpha: Complex64, theta: f64, rng: &mut R) -> Result<TimeSeries> {
    let mut trace = vacuum_trace(&mode.time_axis, rng)?;
    let mean = std::f64::consts::SQRT_2 * (alpha * Complex64::from_polar(1.0, -theta)).re;
    for (v, u) in trace.values.iter_mut().zip(&mode.weights) {
        *v += mean * u;
    }
    Ok(trace)
}
