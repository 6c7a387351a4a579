use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::runs::{curve_rows, wigner_rows, SweepPoint};
use super::{csv_bytes, sha256_hex, ArtifactEntry};
use crate::channel::{ProcessTensor, SignalPowerMap};
use crate::error::{Error, Result};
use crate::fock::{wigner, DensityMatrix, GridSpec};
use crate::homodyne::{fit_phase, read_records_csv};
use crate::process_mle::phase_slice;

/// Plot-data series that [`export_plotdata`] can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportKind {
    /// Quadrature-vs-phase scatter and its sinusoidal fit, from a records CSV.
    Fig2a,
    /// Wigner grid of a density-matrix JSON.
    Wigner,
    /// Relative phase against signal power, from `sweep.json` or a signal-power map.
    Fig3b,
    /// `Im ln E_01^mn` bars of a tensor JSON.
    Fig4b,
    /// Squeezed-vacuum variance against phase through a tensor JSON.
    Fig5c,
}

impl std::str::FromStr for ExportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2a" => Ok(ExportKind::Fig2a),
            "wigner" => Ok(ExportKind::Wigner),
            "fig3b" => Ok(ExportKind::Fig3b),
            "fig4b" => Ok(ExportKind::Fig4b),
            "fig5c" => Ok(ExportKind::Fig5c),
            other => Err(Error::Config(format!(
                "unknown export kind `{other}` (expected fig2a, wigner, fig3b, fig4b or fig5c)"
            ))),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("artifact {}: {e}", path.display())))
}

fn write(out_dir: &Path, name: &str, bytes: Vec<u8>, written: &mut Vec<ArtifactEntry>) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join(name);
    std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
    written.push(ArtifactEntry {
        stage: "export".into(),
        path: PathBuf::from(name),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    });
    Ok(())
}

/// Writes CSV series for `kind` from `artifact` into `out_dir`. Data only;
/// nothing is rendered.
pub fn export_plotdata(kind: ExportKind, artifact: &Path, out_dir: &Path, config: &RunConfig) -> Result<Vec<ArtifactEntry>> {
    let mut written = Vec::new();
    match kind {
        ExportKind::Fig2a => {
            let records = read_records_csv(artifact)?;
            let fit = fit_phase(&records)?;
            let step = (records.len() / config.state_demo.scatter_points.max(1)).max(1);
            let scatter = records.iter().step_by(step).map(|r| (r.phase, r.value));
            write(out_dir, "fig2a_scatter.csv", csv_bytes(&["phase", "quadrature"], scatter)?, &mut written)?;
            let curve = (0..=360).map(|i| {
                let theta = std::f64::consts::TAU * i as f64 / 360.0;
                (theta, fit.amplitude * (theta - fit.phase_offset).cos() + fit.dc_offset)
            });
            write(out_dir, "fig2a_fit.csv", csv_bytes(&["phase", "fit"], curve)?, &mut written)?;
            let mut text = serde_json::to_string_pretty(&fit)?;
            text.push('\n');
            write(out_dir, "fig2a_fit.json", text.into_bytes(), &mut written)?;
        }
        ExportKind::Wigner => {
            let rho = DensityMatrix::from_json(&read(artifact)?)?;
            let grid = wigner(&rho, &GridSpec::covering(rho.dim(), config.state_demo.wigner_points))?;
            write(out_dir, "wigner.csv", csv_bytes(&["x", "p", "w"], wigner_rows(&grid))?, &mut written)?;
        }
        ExportKind::Fig3b => {
            let text = read(artifact)?;
            let rows: Vec<(f64, f64, f64)> = if let Ok(points) = serde_json::from_str::<Vec<SweepPoint>>(&text) {
                points.iter().map(|p| (p.signal_power_mw, p.relative_phase, p.stderr)).collect()
            } else {
                let map: SignalPowerMap = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("artifact {}: neither sweep results nor a signal-power map: {e}", artifact.display())))?;
                map.validate()?;
                map.entries().iter().map(|e| (e.signal_power_mw, e.channel.phase_shift, 0.0)).collect()
            };
            write(out_dir, "fig3b.csv", csv_bytes(&["signal_power_mw", "relative_phase", "stderr"], rows)?, &mut written)?;
        }
        ExportKind::Fig4b => {
            let tensor = ProcessTensor::from_json(&read(artifact)?)?;
            let slice = phase_slice(&tensor, 0, 1);
            // unwrapped along each diagonal band; stored slices stay in (−π, π]
            let d = tensor.dim().size();
            let mut unwrapped = vec![vec![None::<f64>; d]; d];
            let mut rows = Vec::new();
            for m in 0..d {
                for n in 0..d {
                    let v = slice.values[m][n];
                    unwrapped[m][n] = v.map(|v| match (m > 0 && n > 0).then(|| unwrapped[m - 1][n - 1]).flatten() {
                        Some(p) => p + wrap(v - p),
                        None => v,
                    });
                    rows.push((
                        m,
                        n,
                        v.unwrap_or(0.0),
                        v.is_some() as u8,
                        unwrapped[m][n].unwrap_or(0.0),
                        slice.magnitudes[m][n],
                    ));
                }
            }
            write(
                out_dir,
                "fig4b.csv",
                csv_bytes(&["m", "n", "value", "defined", "unwrapped", "magnitude"], rows)?,
                &mut written,
            )?;
        }
        ExportKind::Fig5c => {
            let tensor = ProcessTensor::from_json(&read(artifact)?)?;
            let rows = curve_rows(&tensor, &config.squeezing.spec(), config.squeezing.curve_points)?;
            write(out_dir, "fig5c.csv", csv_bytes(&["theta", "input_db", "output_db"], rows)?, &mut written)?;
        }
    }
    Ok(written)
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
