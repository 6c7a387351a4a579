//! Experiment runs: configuration, artifact persistence with content
//! hashes, and plot-data export.
//!
//! Every file a run writes goes through [`RunDir`], which records its
//! SHA-256 in the manifest. Numeric artifacts depend only on the config and
//! seed; timings live in the manifest alone.

mod config;
mod export;
mod runs;

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    BootstrapConfig, ChannelsConfig, DetectionConfig, Experiment, ProbeConfig, RunConfig, SqueezingConfig, StateDemoConfig,
    StateSection, TensorSource,
};
pub use export::{export_plotdata, ExportKind};
pub use runs::{run, run_bootstrap, run_csqpt, run_squeezed_predict, run_state_demo, run_sweep_signal_power};

use crate::error::{Error, Result};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
const LOCK_NAME: &str = ".csqpt.lock";
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub stage: String,
    /// Relative to the output directory.
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub experiment: Experiment,
    pub seed: u64,
    /// SHA-256 of the resolved config serialized as TOML.
    pub config_sha256: String,
    pub config: RunConfig,
    pub artifacts: Vec<ArtifactEntry>,
    pub timings: Vec<StageTiming>,
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Recomputes every artifact hash and returns the paths that differ.
    pub fn verify(&self, root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let mut bad = Vec::new();
        for a in &self.artifacts {
            let path = root.as_ref().join(&a.path);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if hex::encode(Sha256::digest(&bytes)) != a.sha256 {
                bad.push(a.path.clone());
            }
        }
        Ok(bad)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Exclusive lock on an output directory, released on drop.
#[derive(Debug)]
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "output directory {} is locked by another run (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Output directory of one run.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    artifacts: Vec<ArtifactEntry>,
    timings: Vec<StageTiming>,
    _lock: DirLock,
}

impl RunDir {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let lock = DirLock::acquire(&root)?;
        Ok(RunDir {
            root,
            artifacts: Vec::new(),
            timings: Vec::new(),
            _lock: lock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn artifacts(&self) -> &[ArtifactEntry] {
        &self.artifacts
    }

    pub fn write_bytes(&mut self, stage: &str, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel.as_ref());
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&path, e))?;
        self.artifacts.push(ArtifactEntry {
            stage: stage.to_string(),
            path: rel.as_ref().to_path_buf(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, stage: &str, rel: impl AsRef<Path>, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(stage, rel, text.as_bytes())
    }

    /// CSV with a header row; floats use the shortest round-trip form.
    pub fn write_csv<R, I>(&mut self, stage: &str, rel: impl AsRef<Path>, header: &[&str], rows: I) -> Result<PathBuf>
    where
        R: Serialize,
        I: IntoIterator<Item = R>,
    {
        let bytes = csv_bytes(header, rows)?;
        self.write_bytes(stage, rel, &bytes)
    }

    /// Registers a file written elsewhere under this directory.
    pub fn register(&mut self, stage: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let rel = path.strip_prefix(&self.root).unwrap_or(path).to_path_buf();
        self.artifacts.push(ArtifactEntry {
            stage: stage.to_string(),
            path: rel,
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        info!("stage {name}");
        let start = Instant::now();
        let out = f(self)?;
        self.timings.push(StageTiming {
            stage: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    /// Writes `manifest.json` and releases the lock.
    pub fn finish(self, experiment: Experiment, config: &RunConfig, summary: serde_json::Value) -> Result<RunManifest> {
        let manifest = RunManifest {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            experiment,
            seed: config.seed()?,
            config_sha256: sha256_hex(config.to_toml()?.as_bytes()),
            config: config.clone(),
            artifacts: self.artifacts,
            timings: self.timings,
            summary,
        };
        let path = self.root.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

pub(crate) fn csv_bytes<R, I>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    R: Serialize,
    I: IntoIterator<Item = R>,
{
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Numeric(format!("CSV serialization: {e}"));
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.serialize(r).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| Error::Numeric(format!("CSV serialization: {e}")))
}
