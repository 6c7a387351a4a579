use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::contract;
use crate::channel::{apply_process, ProcessTensor, CP_TOL};
use crate::error::{Error, Result};
use crate::fock::{fock_qubit, quadrature_variance, squeezed_vacuum, squeezing_axis, DensityMatrix, SqueezingSpec};
use crate::linalg;

/// Elements below this modulus have no defined phase in a slice.
pub const SLICE_FLOOR: f64 = 1e-10;
/// Squeezed inputs losing more than this to truncation trigger a warning.
const TAIL_WARNING: f64 = 1e-3;

/// `arg Σ_mn E_kl^mn ρ_mn` in `(−π, π]`. The input is restricted or
/// zero-padded to the tensor's dimension.
pub fn output_phase(tensor: &ProcessTensor, rho_in: &DensityMatrix, k: usize, l: usize) -> Result<f64> {
    let d = tensor.dim().size();
    if k >= d || l >= d {
        return Err(Error::InvalidArgument(format!("output element ({k}, {l}) outside {}", tensor.dim())));
    }
    let z = contract(tensor, rho_in.matrix(), k, l);
    if z.norm() < 1e-12 {
        return Err(Error::UndefinedPhase {
            amplitude: z.norm(),
            stderr: 0.0,
        });
    }
    Ok(z.arg())
}

/// `Im ln E_kl^mn` over the input indices `(m, n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSlice {
    pub k: usize,
    pub l: usize,
    /// `values[m][n]`, `None` where `|E_kl^mn| ≤` [`SLICE_FLOOR`].
    pub values: Vec<Vec<Option<f64>>>,
    pub magnitudes: Vec<Vec<f64>>,
}

impl PhaseSlice {
    pub fn defined(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .flat_map(|(m, row)| row.iter().enumerate().filter_map(move |(n, v)| v.map(|v| (m, n, v))))
    }

    /// CSV with columns `m,n,value,defined`; undefined entries carry value 0.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::Io {
            path: "phase slice".into(),
            source: e.into(),
        };
        w.write_record(["m", "n", "value", "defined"]).map_err(wrap)?;
        for (m, row) in self.values.iter().enumerate() {
            for (n, v) in row.iter().enumerate() {
                let value = v.unwrap_or(0.0);
                w.serialize((m, n, value, v.is_some() as u8)).map_err(wrap)?;
            }
        }
        w.flush().map_err(|e| Error::io("phase slice", e))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub fn phase_slice(tensor: &ProcessTensor, k: usize, l: usize) -> PhaseSlice {
    let d = tensor.dim().size();
    let mut values = vec![vec![None; d]; d];
    let mut magnitudes = vec![vec![0.0; d]; d];
    for m in 0..d {
        for n in 0..d {
            let e = tensor.get(k, l, m, n);
            magnitudes[m][n] = e.norm();
            if e.norm() > SLICE_FLOOR {
                values[m][n] = Some(e.arg());
            }
        }
    }
    PhaseSlice { k, l, values, magnitudes }
}

/// Uhlmann fidelity between the trace-normalized Jamiolkowski operators.
pub fn process_fidelity(a: &ProcessTensor, b: &ProcessTensor) -> Result<f64> {
    a.dim().ensure_eq(b.dim())?;
    let mut ops = Vec::with_capacity(2);
    for t in [a, b] {
        let j = linalg::hermitian_part(&t.jamiolkowski_matrix());
        let min = linalg::min_eigenvalue(&j);
        if min < -CP_TOL {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        let tr = linalg::trace(&j).re;
        if !(tr > 0.0) {
            return Err(Error::InvalidProcess("Jamiolkowski operator has zero trace".into()));
        }
        ops.push(j.unscale(tr));
    }
    Ok(linalg::uhlmann_fidelity(&ops[0], &ops[1]).clamp(0.0, 1.0))
}

/// Effect on the Fock qubit `(|0⟩ + |1⟩)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitPrediction {
    /// `φ_01 = arg ρ^out_01`; a rotation by `θ` gives `−θ`.
    pub phase: f64,
    /// `|ρ^out_01| / ρ^in_01` after normalizing the output trace.
    pub coherence_retention: f64,
    pub output_trace: f64,
}

pub fn predict_qubit(tensor: &ProcessTensor) -> Result<QubitPrediction> {
    let one = Complex64::new(1.0, 0.0);
    let rho = fock_qubit(one, one, tensor.dim())?;
    let out = apply_process(tensor, &rho)?;
    let phase = output_phase(tensor, &rho, 0, 1)?;
    Ok(QubitPrediction {
        phase,
        coherence_retention: out.state.get(0, 1).norm() / rho.get(0, 1).norm(),
        output_trace: out.trace,
    })
}

/// Squeezed vacuum sent through a process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezedPrediction {
    pub input_min_db: f64,
    pub input_max_db: f64,
    pub min_db: f64,
    pub max_db: f64,
    pub input_axis: f64,
    pub output_axis: f64,
    /// Rotation of the squeezed axis, in `[0, π)`.
    pub phase_shift: f64,
    pub output_trace: f64,
}

pub fn predict_squeezed(tensor: &ProcessTensor, spec: &SqueezingSpec) -> Result<SqueezedPrediction> {
    let input = squeezed_vacuum(*spec, tensor.dim())?;
    if input.truncated_weight() > TAIL_WARNING {
        warn!(
            "squeezed input loses {:.2e} of its weight above {}",
            input.truncated_weight(),
            tensor.dim()
        );
    }
    let out = apply_process(tensor, &input)?;
    let (input_min_db, input_max_db, input_axis) = extremes(&input);
    let (min_db, max_db, output_axis) = extremes(&out.state);
    Ok(SqueezedPrediction {
        input_min_db,
        input_max_db,
        min_db,
        max_db,
        input_axis,
        output_axis,
        phase_shift: (output_axis - input_axis).rem_euclid(PI),
        output_trace: out.trace,
    })
}

fn db(variance: f64) -> f64 {
    10.0 * (variance / 0.5).log10()
}

fn extremes(rho: &DensityMatrix) -> (f64, f64, f64) {
    let axis = squeezing_axis(rho);
    (
        db(quadrature_variance(rho, axis)),
        db(quadrature_variance(rho, axis + 0.5 * PI)),
        axis,
    )
}

/// `(θ, variance in dB)` at `points` phases over `[0, 2π)`.
pub fn variance_curve(rho: &DensityMatrix, points: usize) -> Vec<(f64, f64)> {
    (0..points)
        .map(|i| {
            let theta = 2.0 * PI * i as f64 / points as f64;
            (theta, db(quadrature_variance(rho, theta)))
        })
        .collect()
}
