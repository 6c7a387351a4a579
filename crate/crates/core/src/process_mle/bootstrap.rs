use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    phase_slice, predict_squeezed, process_fidelity, reconstruct_process_full, ProbeSet, ProcessMleConfig, ProcessReconstruction,
    SqueezedPrediction,
};
use crate::channel::ProcessTensor;
use crate::error::Result;
use crate::fock::SqueezingSpec;
use crate::seed;

/// Spread of Poisson-resampled reconstructions around the point estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub resamples: usize,
    /// Fidelity of each resampled tensor to the point estimate.
    pub fidelities: Vec<f64>,
    pub min_fidelity: f64,
    /// `(m, n, point value, standard deviation)` of `Im ln E_01^mn` for every
    /// element defined in the point estimate.
    pub slice_spreads: Vec<(usize, usize, f64, f64)>,
    /// Largest `std / |value|` over the slice.
    pub max_relative_spread: f64,
    /// Point prediction and per-resample predictions for a squeezed input, if requested.
    pub squeezed_point: Option<SqueezedPrediction>,
    pub squeezed: Vec<SqueezedPrediction>,
}

impl BootstrapSummary {
    /// Standard deviations of `(min dB, max dB, phase shift)` over the resamples.
    pub fn squeezed_spread(&self) -> Option<(f64, f64, f64)> {
        if self.squeezed.len() < 2 {
            return None;
        }
        let sd = |f: fn(&SqueezedPrediction) -> f64| std_dev(&self.squeezed.iter().map(f).collect::<Vec<_>>());
        Some((sd(|p| p.min_db), sd(|p| p.max_db), sd(|p| p.phase_shift)))
    }
}

pub fn bootstrap(probes: &ProbeSet, config: &ProcessMleConfig, n_resamples: usize, seed: u64) -> Result<BootstrapSummary> {
    bootstrap_with(probes, config, n_resamples, seed, None)
}

/// Resamples every count from a Poisson distribution with its observed mean
/// and refits. Resample `r` draws from its own seeded stream. A squeezed
/// input, when given, is propagated through the untruncated tensors.
pub fn bootstrap_with(
    probes: &ProbeSet,
    config: &ProcessMleConfig,
    n_resamples: usize,
    seed: u64,
    squeezed: Option<&SqueezingSpec>,
) -> Result<BootstrapSummary> {
    let point = reconstruct_process_full(probes, config)?;
    bootstrap_from(&point, probes, config, n_resamples, seed, squeezed)
}

/// As [`bootstrap_with`], around an already computed point estimate.
pub fn bootstrap_from(
    point: &ProcessReconstruction,
    probes: &ProbeSet,
    config: &ProcessMleConfig,
    n_resamples: usize,
    seed: u64,
    squeezed: Option<&SqueezingSpec>,
) -> Result<BootstrapSummary> {
    let base = seed::derive(seed, "bootstrap");
    let fits: Vec<(ProcessTensor, Option<SqueezedPrediction>)> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|r| {
            let resampled = probes.resample(&mut seed::stream(base, r));
            let rec = reconstruct_process_full(&resampled, config)?;
            let pred = squeezed.map(|s| predict_squeezed(&rec.full, s)).transpose()?;
            Ok((rec.tensor, pred))
        })
        .collect::<Result<_>>()?;
    let fidelities = fits
        .iter()
        .map(|(t, _)| process_fidelity(t, &point.tensor))
        .collect::<Result<Vec<_>>>()?;
    let reference = phase_slice(&point.tensor, 0, 1);
    let slices: Vec<_> = fits.iter().map(|(t, _)| phase_slice(t, 0, 1)).collect();
    let slice_spreads: Vec<(usize, usize, f64, f64)> = reference
        .defined()
        .map(|(m, n, v)| {
            // unwrap each resample onto the branch nearest the point value
            let samples: Vec<f64> = slices
                .iter()
                .filter_map(|s| s.values[m][n])
                .map(|x| v + wrap(x - v))
                .collect();
            (m, n, v, std_dev(&samples))
        })
        .collect();
    let max_relative_spread = slice_spreads
        .iter()
        .filter(|s| s.2 != 0.0)
        .map(|s| s.3 / s.2.abs())
        .fold(0.0, f64::max);
    Ok(BootstrapSummary {
        resamples: n_resamples,
        min_fidelity: fidelities.iter().copied().fold(1.0, f64::min),
        fidelities,
        slice_spreads,
        max_relative_spread,
        squeezed_point: squeezed.map(|s| predict_squeezed(&point.full, s)).transpose()?,
        squeezed: fits.into_iter().filter_map(|(_, p)| p).collect(),
    })
}

fn wrap(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}
