use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, ChannelParams, ProcessTensor};
use crate::error::{Error, Result};
use crate::fock::{coherent_state, recommended_n_max, CoherentAmplitude, FockDim};
use crate::homodyne::{bin_records_with, fit_phase_points, sample_quadratures, BinEdges, BinnedHistogram, DetectionParams, HomodynePovm};
use crate::seed;
use crate::state_mle::expected_counts;

/// `count` real amplitudes evenly spaced on `[0, max]`.
pub fn default_amplitudes(count: usize, max: f64) -> Vec<CoherentAmplitude> {
    if count == 1 {
        return vec![CoherentAmplitude::real(max)];
    }
    (0..count)
        .map(|i| CoherentAmplitude::real(max * i as f64 / (count - 1) as f64))
        .collect()
}

/// One coherent probe: its amplitude, optionally its measured input
/// histogram, and the output bin counts flattened as `phase_bin · quad_bins + quad_bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub amplitude: CoherentAmplitude,
    pub input: Option<BinnedHistogram>,
    pub output: Vec<f64>,
}

/// Probe ensemble sharing one set of bin edges and one detection efficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    edges: BinEdges,
    pub(super) efficiency: f64,
    pub(super) probes: Vec<Probe>,
    analytic: bool,
}

impl ProbeSet {
    /// Measured probes. All histograms must share edges.
    pub fn from_histograms(
        efficiency: f64,
        probes: Vec<(CoherentAmplitude, Option<BinnedHistogram>, BinnedHistogram)>,
    ) -> Result<Self> {
        let first = probes
            .first()
            .ok_or_else(|| Error::InvalidArgument("probe set is empty".into()))?;
        let edges = first.2.edges();
        let probes = probes
            .into_iter()
            .map(|(amplitude, input, output)| {
                output.validate()?;
                same_edges(&edges, &output)?;
                if let Some(h) = &input {
                    h.validate()?;
                    same_edges(&edges, h)?;
                }
                Ok(Probe {
                    amplitude,
                    input,
                    output: output.frequencies(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let set = ProbeSet {
            edges,
            efficiency,
            probes,
            analytic: false,
        };
        set.validate()?;
        Ok(set)
    }

    /// Expected (non-integer) counts of `samples` records per probe sent
    /// through `tensor`, with uniformly distributed phases.
    pub fn analytic(
        tensor: &ProcessTensor,
        amplitudes: &[CoherentAmplitude],
        edges: &BinEdges,
        efficiency: f64,
        samples: f64,
    ) -> Result<Self> {
        let dim = tensor.dim();
        let povm = HomodynePovm::new(edges, efficiency, dim)?;
        let probes = amplitudes
            .iter()
            .map(|&amplitude| {
                let out = tensor.apply_matrix(coherent_state(amplitude, dim)?.matrix());
                Ok(Probe {
                    amplitude,
                    input: None,
                    output: expected_counts(&povm, &out, samples),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let set = ProbeSet {
            edges: edges.clone(),
            efficiency,
            probes,
            analytic: true,
        };
        set.validate()?;
        Ok(set)
    }

    /// Monte-Carlo probe data through `channel`: every probe's input and
    /// output are sampled with `detection` and binned on common edges that
    /// cover all records.
    pub fn simulate(
        channel: &ChannelParams,
        amplitudes: &[CoherentAmplitude],
        detection: &DetectionParams,
        phase_bins: usize,
        quad_bins: usize,
        master_seed: u64,
    ) -> Result<Self> {
        channel.validate()?;
        detection.validate()?;
        let max = amplitudes.iter().map(|a| a.value().norm()).fold(0.0, f64::max);
        let dim = FockDim::new(recommended_n_max(max).max(6));
        let records = amplitudes
            .par_iter()
            .enumerate()
            .map(|(i, &amplitude)| {
                let input = coherent_state(amplitude, dim)?;
                let output = apply_channel(channel, &input)?;
                let in_seed = seed::derive(master_seed, &format!("probe-{i}-input"));
                let out_seed = seed::derive(master_seed, &format!("probe-{i}-output"));
                Ok((
                    sample_quadratures(&input, detection, in_seed)?,
                    sample_quadratures(&output, detection, out_seed)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let edges = BinEdges::covering(
            records.iter().flat_map(|(i, o)| [i.as_slice(), o.as_slice()]),
            phase_bins,
            quad_bins,
        )?;
        let probes = amplitudes
            .iter()
            .zip(&records)
            .map(|(&a, (i, o))| Ok((a, Some(bin_records_with(i, &edges)?), bin_records_with(o, &edges)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_histograms(detection.efficiency, probes)
    }

    pub fn edges(&self) -> &BinEdges {
        &self.edges
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    /// True for expected-count data, which bootstrap resampling leaves unchanged.
    pub fn is_analytic(&self) -> bool {
        self.analytic
    }

    pub fn max_amplitude(&self) -> f64 {
        self.probes.iter().map(|p| p.amplitude.value().norm()).fold(0.0, f64::max)
    }

    /// Number of distinct `|α|` values (to 1e-9).
    pub fn distinct_moduli(&self) -> usize {
        self.probes
            .iter()
            .map(|p| (p.amplitude.value().norm() * 1e9).round() as i64)
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.probes.is_empty() {
            return Err(Error::InvalidArgument("probe set is empty".into()));
        }
        crate::homodyne::check_efficiency(self.efficiency)?;
        self.edges.validate()?;
        for (i, p) in self.probes.iter().enumerate() {
            if p.output.len() != self.edges.len() {
                return Err(Error::BinningMismatch(format!(
                    "probe {i} has {} output bins, edges define {}",
                    p.output.len(),
                    self.edges.len()
                )));
            }
            if p.output.iter().any(|f| !(*f >= 0.0) || !f.is_finite()) {
                return Err(Error::InvalidArgument(format!("probe {i} has negative or non-finite counts")));
            }
            let a = p.amplitude.value();
            if !(a.re.is_finite() && a.im.is_finite()) {
                return Err(Error::InvalidArgument(format!("probe {i} has a non-finite amplitude")));
            }
        }
        Ok(())
    }

    /// Replaces each amplitude with the one implied by a sinusoidal fit to
    /// its input histogram, `α = A / sqrt(2η) · e^{iφ₀}`. Probes whose fit has
    /// no significant amplitude are set to the vacuum. Probes without an
    /// input histogram keep their amplitude.
    pub fn calibrate_amplitudes(&mut self) -> Result<()> {
        let eta = self.efficiency;
        for p in self.probes.iter_mut() {
            let Some(hist) = &p.input else { continue };
            let points = histogram_points(hist);
            p.amplitude = match fit_phase_points(&points) {
                Ok(fit) => CoherentAmplitude::from_polar(fit.amplitude / (2.0 * eta).sqrt(), fit.phase_offset),
                Err(Error::UndefinedPhase { .. }) => CoherentAmplitude::real(0.0),
                Err(e) => return Err(e),
            };
        }
        Ok(())
    }

    /// Poisson-resampled copy of every count (inputs and outputs). Analytic
    /// sets are returned unchanged.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> ProbeSet {
        if self.analytic {
            return self.clone();
        }
        let mut draw = |c: f64| -> f64 {
            if c > 0.0 {
                Poisson::new(c).map(|d| d.sample(rng)).unwrap_or(c)
            } else {
                0.0
            }
        };
        let probes = self
            .probes
            .iter()
            .map(|p| {
                let output = p.output.iter().map(|&c| draw(c)).collect();
                let input = p.input.as_ref().map(|h| {
                    let mut h = h.clone();
                    for row in h.counts.iter_mut() {
                        for c in row.iter_mut() {
                            *c = draw(*c as f64) as u64;
                        }
                    }
                    h
                });
                Probe {
                    amplitude: p.amplitude,
                    input,
                    output,
                }
            })
            .collect();
        ProbeSet {
            probes,
            ..self.clone()
        }
    }

    /// Output histogram of probe `i` (measured sets only).
    pub fn output_histogram(&self, i: usize) -> Result<BinnedHistogram> {
        if self.analytic {
            return Err(Error::InvalidArgument("analytic probe sets have no integer histograms".into()));
        }
        let p = self
            .probes
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("no probe {i}")))?;
        let mut h = BinnedHistogram::empty(&self.edges);
        let nx = self.edges.quad_bins();
        for (j, &c) in p.output.iter().enumerate() {
            h.counts[j / nx][j % nx] = c as u64;
        }
        Ok(h)
    }

    /// Loads a probe manifest; relative paths resolve against its directory.
    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: ProbeManifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let edges_path = resolve(&manifest.edges_path);
        let edges: BinEdges = serde_json::from_str(
            &std::fs::read_to_string(&edges_path).map_err(|e| Error::io(&edges_path, e))?,
        )?;
        let probes = manifest
            .probes
            .iter()
            .map(|entry| {
                let output = BinnedHistogram::read(resolve(&entry.output_hist_path))?;
                let input = entry
                    .input_hist_path
                    .as_ref()
                    .map(|p| BinnedHistogram::read(resolve(p)))
                    .transpose()?;
                Ok((CoherentAmplitude::new(entry.alpha_re, entry.alpha_im), input, output))
            })
            .collect::<Result<Vec<_>>>()?;
        let set = Self::from_histograms(manifest.eta, probes)?;
        if set.edges != edges {
            return Err(Error::BinningMismatch(format!(
                "histograms do not use the edges in {}",
                edges_path.display()
            )));
        }
        Ok(set)
    }

    /// Writes edges, histograms and the manifest into `dir`; returns the
    /// manifest path and every file written.
    pub fn save_manifest(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, Vec<PathBuf>)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let edges_name = PathBuf::from("edges.json");
        let edges_path = dir.join(&edges_name);
        std::fs::write(&edges_path, serde_json::to_string(&self.edges)?).map_err(|e| Error::io(&edges_path, e))?;
        written.push(edges_path);
        let mut entries = Vec::new();
        for (i, p) in self.probes.iter().enumerate() {
            let out_name = PathBuf::from(format!("probe_{i:02}_output.json"));
            self.output_histogram(i)?.write(dir.join(&out_name))?;
            written.push(dir.join(&out_name));
            let in_name = match &p.input {
                Some(h) => {
                    let name = PathBuf::from(format!("probe_{i:02}_input.json"));
                    h.write(dir.join(&name))?;
                    written.push(dir.join(&name));
                    Some(name)
                }
                None => None,
            };
            let a = p.amplitude.value();
            entries.push(ProbeEntry {
                alpha_re: a.re,
                alpha_im: a.im,
                input_hist_path: in_name,
                output_hist_path: out_name,
            });
        }
        let manifest = ProbeManifest {
            probes: entries,
            eta: self.efficiency,
            edges_path: edges_name,
        };
        let path = dir.join("probes.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
        written.push(path.clone());
        Ok((path, written))
    }
}

/// On-disk description of a probe set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeManifest {
    pub probes: Vec<ProbeEntry>,
    pub eta: f64,
    pub edges_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub alpha_re: f64,
    pub alpha_im: f64,
    #[serde(default)]
    pub input_hist_path: Option<PathBuf>,
    pub output_hist_path: PathBuf,
}

fn same_edges(edges: &BinEdges, hist: &BinnedHistogram) -> Result<()> {
    if hist.phase_edges != edges.phase_edges || hist.quad_edges != edges.quad_edges {
        return Err(Error::BinningMismatch("probe histograms must share bin edges".into()));
    }
    Ok(())
}

/// `(phase-bin centre, quadrature-bin centre, count)` for every occupied cell,
/// which weights the fit exactly like the individual records at those centres.
fn histogram_points(hist: &BinnedHistogram) -> Vec<(f64, f64, f64)> {
    let centres: Vec<f64> = hist.quad_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    hist.phase_edges
        .windows(2)
        .zip(&hist.counts)
        .flat_map(|(w, row)| {
            let theta = 0.5 * (w[0] + w[1]);
            row.iter()
                .zip(&centres)
                .filter(|(&c, _)| c > 0)
                .map(move |(&c, &x)| (theta, x, c as f64))
        })
        .collect()
}
