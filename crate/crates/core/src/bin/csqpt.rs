use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use csqpt::pipeline::{self, Experiment, ExportKind, RunConfig};
use csqpt::Error;

#[derive(Parser)]
#[command(name = "csqpt", version, about = "Coherent-state process tomography of phase-shift channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config, or a run manifest to re-run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Input, EIT and N-type coherent states: fits, reconstructions, Wigner grids.
    StateDemo(Common),
    /// Process reconstruction at every configured signal power.
    Csqpt(Common),
    /// Squeezed-vacuum predictions through the EIT and N-type processes.
    SqueezedPredict(Common),
    /// Poisson-resampled reconstructions of the bootstrap channel.
    Bootstrap(Common),
    /// Relative phase of a coherent state against signal power.
    SweepSignalPower(Common),
    /// Plot-ready data from an existing artifact.
    Export {
        /// fig2a, wigner, fig3b, fig4b or fig5c.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        artifact: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Parses and validates a config, then prints it fully resolved.
    ValidateConfig(Common),
}

fn load_config(common: &Common) -> csqpt::Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        config.seed = common.seed;
    }
    if common.out.is_some() {
        config.output_dir = common.out.clone();
    }
    Ok(config)
}

fn set_threads(threads: Option<usize>) -> csqpt::Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("--threads: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    Ok(())
}

fn output_dir(config: &RunConfig) -> csqpt::Result<PathBuf> {
    config
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("output_dir: missing (set `output_dir` in the config or pass --out)".into()))
}

fn run_experiment(experiment: Experiment, common: &Common) -> csqpt::Result<()> {
    set_threads(common.threads)?;
    let mut config = load_config(common)?;
    if let Some(e) = config.experiment {
        if e != experiment {
            log::warn!("config names experiment `{}`; running `{}`", e.name(), experiment.name());
        }
    }
    config.experiment = Some(experiment);
    let out = output_dir(&config)?;
    let manifest = pipeline::run(experiment, &config, &out)?;
    println!("{}", serde_json::to_string_pretty(&manifest.summary)?);
    println!("manifest: {}", out.join(pipeline::MANIFEST_NAME).display());
    Ok(())
}

fn export(kind: &str, artifact: &Path, common: &Common) -> csqpt::Result<()> {
    set_threads(common.threads)?;
    let kind: ExportKind = kind.parse()?;
    let config = load_config(common)?;
    let out = match &config.output_dir {
        Some(dir) => dir.clone(),
        None => artifact.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    for entry in pipeline::export_plotdata(kind, artifact, &out, &config)? {
        println!("{}  {}", entry.sha256, out.join(&entry.path).display());
    }
    Ok(())
}

fn validate(common: &Common) -> csqpt::Result<()> {
    let mut config = load_config(common)?;
    config.validate()?;
    config.resolve()?;
    config.channels.signal_powers.validate()?;
    print!("{}", config.to_toml()?);
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        e if e.is_numeric() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::StateDemo(c) => run_experiment(Experiment::StateDemo, c),
        Command::Csqpt(c) => run_experiment(Experiment::Csqpt, c),
        Command::SqueezedPredict(c) => run_experiment(Experiment::SqueezedPredict, c),
        Command::Bootstrap(c) => run_experiment(Experiment::Bootstrap, c),
        Command::SweepSignalPower(c) => run_experiment(Experiment::SweepSignalPower, c),
        Command::Export { kind, artifact, common } => export(kind, artifact, common),
        Command::ValidateConfig(c) => validate(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
