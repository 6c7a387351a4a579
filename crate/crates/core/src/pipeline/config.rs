use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, SignalPowerMap};
use crate::error::{Error, Result};
use crate::fock::{FockDim, SqueezingSpec};
use crate::homodyne::{BinEdges, DetectionParams};
use crate::process_mle::ProcessMleConfig;
use crate::state_mle::StateMleConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    StateDemo,
    Csqpt,
    SqueezedPredict,
    Bootstrap,
    SweepSignalPower,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::StateDemo => "state-demo",
            Experiment::Csqpt => "csqpt",
            Experiment::SqueezedPredict => "squeezed-predict",
            Experiment::Bootstrap => "bootstrap",
            Experiment::SweepSignalPower => "sweep-signal-power",
        }
    }
}

/// One run, as read from a TOML file. Every section is optional and
/// defaults to the standard protocol (13 probes up to |α| = 3.3, 40×40 bins,
/// 50 000 samples, 100 iterations, n_max = 6). The seed is mandatory; it
/// may come from the file or the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub channels: ChannelsConfig,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default)]
    pub probes: ProbeConfig,
    #[serde(default)]
    pub state_mle: StateSection,
    #[serde(default)]
    pub process_mle: ProcessMleConfig,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub squeezing: SqueezingConfig,
    #[serde(default)]
    pub state_demo: StateDemoConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelsConfig {
    #[serde(default = "ChannelParams::eit")]
    pub eit: ChannelParams,
    #[serde(default = "ChannelParams::n_type")]
    pub n_type: ChannelParams,
    /// Channel characterized by the `bootstrap` experiment.
    #[serde(default = "default_bootstrap_channel")]
    pub bootstrap: ChannelParams,
    /// JSON file holding a signal-power map; replaces `signal_powers`.
    #[serde(default)]
    pub signal_power_map_path: Option<PathBuf>,
    #[serde(default = "SignalPowerMap::illustrative")]
    pub signal_powers: SignalPowerMap,
}

fn default_bootstrap_channel() -> ChannelParams {
    ChannelParams::new(1.46, 0.25).with_label("relative @ 0.55 mW")
}

impl Default for ChannelsConfig {
    fn default() -> Self {
        ChannelsConfig {
            eit: ChannelParams::eit(),
            n_type: ChannelParams::n_type(),
            bootstrap: default_bootstrap_channel(),
            signal_power_map_path: None,
            signal_powers: SignalPowerMap::illustrative(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    /// Not reported for the experiment; 0.85 is an arbitrary default.
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "forty")]
    pub phase_bins: usize,
    #[serde(default = "forty")]
    pub quad_bins: usize,
}

fn default_efficiency() -> f64 {
    0.85
}

fn default_samples() -> usize {
    50_000
}

fn forty() -> usize {
    40
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            efficiency: default_efficiency(),
            samples: default_samples(),
            phase_bins: 40,
            quad_bins: 40,
        }
    }
}

impl DetectionConfig {
    pub fn params(&self) -> DetectionParams {
        DetectionParams::uniform(self.efficiency, self.samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default = "default_probe_count")]
    pub count: usize,
    #[serde(default = "default_max_amplitude")]
    pub max_amplitude: f64,
    /// Use expected counts instead of sampled ones.
    #[serde(default)]
    pub analytic: bool,
    /// Fit each probe's |α| from its input histogram.
    #[serde(default)]
    pub calibrate: bool,
}

fn default_probe_count() -> usize {
    13
}

fn default_max_amplitude() -> f64 {
    3.3
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            count: 13,
            max_amplitude: 3.3,
            analytic: false,
            calibrate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    /// Defaults to the truncation guard of the state's amplitude.
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default = "default_state_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_state_tol")]
    pub log_likelihood_tol: f64,
}

fn default_state_iterations() -> usize {
    200
}

fn default_state_tol() -> f64 {
    1e-9
}

impl Default for StateSection {
    fn default() -> Self {
        StateSection {
            n_max: None,
            max_iterations: 200,
            log_likelihood_tol: 1e-9,
        }
    }
}

impl StateSection {
    pub fn config(&self, dim: FockDim, efficiency: f64) -> StateMleConfig {
        StateMleConfig {
            max_iterations: self.max_iterations,
            log_likelihood_tol: self.log_likelihood_tol,
            efficiency,
            ..StateMleConfig::new(dim)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default = "default_resamples")]
    pub resamples: usize,
}

fn default_resamples() -> usize {
    20
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { resamples: 20 }
    }
}

/// Where `squeezed-predict` takes its process tensors from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TensorSource {
    /// Simulate probes, reconstruct and bootstrap.
    Reconstruct,
    /// Closed-form tensors of the configured channels.
    Oracle,
    /// Tensor JSON files listed in `tensor_paths`.
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqueezingConfig {
    #[serde(default = "default_squeezing_db")]
    pub db: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "default_source")]
    pub source: TensorSource,
    #[serde(default)]
    pub tensor_paths: Vec<PathBuf>,
    /// Fock cutoff for oracle predictions.
    #[serde(default = "default_oracle_n_max")]
    pub oracle_n_max: usize,
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
}

fn default_squeezing_db() -> f64 {
    4.3
}

fn default_source() -> TensorSource {
    TensorSource::Reconstruct
}

fn default_oracle_n_max() -> usize {
    30
}

fn default_curve_points() -> usize {
    181
}

impl Default for SqueezingConfig {
    fn default() -> Self {
        SqueezingConfig {
            db: 4.3,
            phase: 0.0,
            source: TensorSource::Reconstruct,
            tensor_paths: Vec::new(),
            oracle_n_max: 30,
            curve_points: 181,
        }
    }
}

impl SqueezingConfig {
    pub fn spec(&self) -> SqueezingSpec {
        SqueezingSpec::pure(self.db, self.phase)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDemoConfig {
    #[serde(default = "default_mean_photons")]
    pub mean_photon_number: f64,
    #[serde(default = "default_wigner_points")]
    pub wigner_points: usize,
    /// Records kept in the scatter export.
    #[serde(default = "default_scatter_points")]
    pub scatter_points: usize,
}

fn default_mean_photons() -> f64 {
    5.4
}

fn default_wigner_points() -> usize {
    81
}

fn default_scatter_points() -> usize {
    2000
}

impl Default for StateDemoConfig {
    fn default() -> Self {
        StateDemoConfig {
            mean_photon_number: 5.4,
            wigner_points: 81,
            scatter_points: 2000,
        }
    }
}

fn field(path: &str, e: Error) -> Error {
    let msg = match e {
        Error::InvalidArgument(m) | Error::Config(m) => m,
        other => other.to_string(),
    };
    Error::Config(format!("{path}: {msg}"))
}

fn require(ok: bool, path: &str, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{path}: {msg}")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML config, or the config embedded in a run manifest when
    /// the path ends in `.json`. Relative paths inside the file resolve
    /// against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = if path.extension().is_some_and(|e| e == "json") {
            let manifest: super::RunManifest =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            manifest.config
        } else {
            Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.channels.signal_power_map_path.as_mut() {
            join(p);
        }
        self.squeezing.tensor_paths.iter_mut().for_each(join);
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads the referenced signal-power map, if any, into `signal_powers`.
    pub fn resolve(&mut self) -> Result<()> {
        if let Some(path) = self.channels.signal_power_map_path.take() {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("channels.signal_power_map_path: {}: {e}", path.display())))?;
            self.channels.signal_powers = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("channels.signal_power_map_path: {}: {e}", path.display())))?;
        }
        Ok(())
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("seed: missing (set `seed` in the config or pass --seed)".into()))
    }

    /// Bin edges for analytic probe sets, spanning about what sampled
    /// records of the largest probe reach.
    pub fn analytic_edges(&self) -> Result<BinEdges> {
        let d = &self.detection;
        let half = 2.0f64.sqrt() * self.probes.max_amplitude + 3.5;
        BinEdges::uniform(d.phase_bins, d.quad_bins, half).map_err(|e| field("detection", e))
    }

    /// Schema checks beyond parsing, reported with the offending field path.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        for (name, c) in [
            ("channels.eit", &self.channels.eit),
            ("channels.n_type", &self.channels.n_type),
            ("channels.bootstrap", &self.channels.bootstrap),
        ] {
            c.validate().map_err(|e| field(name, e))?;
        }
        if let Some(p) = &self.channels.signal_power_map_path {
            require(p.is_file(), "channels.signal_power_map_path", &format!("{} does not exist", p.display()))?;
        } else {
            self.channels.signal_powers.validate().map_err(|e| field("channels.signal_powers", e))?;
        }
        self.detection.params().validate().map_err(|e| field("detection", e))?;
        require(self.detection.phase_bins >= 2, "detection.phase_bins", "must be >= 2")?;
        require(self.detection.quad_bins >= 2, "detection.quad_bins", "must be >= 2")?;
        require(self.probes.count >= 2, "probes.count", "must be >= 2")?;
        require(
            self.probes.max_amplitude > 0.0 && self.probes.max_amplitude.is_finite(),
            "probes.max_amplitude",
            "must be positive",
        )?;
        require(self.state_mle.max_iterations >= 1, "state_mle.max_iterations", "must be >= 1")?;
        require(self.state_mle.log_likelihood_tol > 0.0, "state_mle.log_likelihood_tol", "must be positive")?;
        self.process_mle.validate().map_err(|e| field("process_mle", e))?;
        require(self.bootstrap.resamples >= 1, "bootstrap.resamples", "must be >= 1")?;
        require(self.squeezing.db.is_finite() && self.squeezing.db > 0.0, "squeezing.db", "must be positive")?;
        require(self.squeezing.curve_points >= 2, "squeezing.curve_points", "must be >= 2")?;
        if self.squeezing.source == TensorSource::Files {
            require(!self.squeezing.tensor_paths.is_empty(), "squeezing.tensor_paths", "needed when source = \"files\"")?;
            for p in &self.squeezing.tensor_paths {
                require(p.is_file(), "squeezing.tensor_paths", &format!("{} does not exist", p.display()))?;
            }
        }
        require(
            self.state_demo.mean_photon_number > 0.0 && self.state_demo.mean_photon_number.is_finite(),
            "state_demo.mean_photon_number",
            "must be positive",
        )?;
        require(self.state_demo.wigner_points >= 2, "state_demo.wigner_points", "must be >= 2")?;
        Ok(())
    }
}
