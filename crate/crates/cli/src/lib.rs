//! Command-line front end: configuration, sweeps and result files.

pub mod commands;
pub mod config;
pub mod error;
pub mod table;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::Config;
pub use error::CliError;
pub use table::Table;

use config::{ScanAxis, SchemeKind, WaveformChoice};

/// Environment variable overriding the worker count from the config file.
pub const WORKERS_ENV: &str = "SPADE_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "spade", version, about = "Frequency estimation of an oscillating point source with mode sorting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-frame gamma against displacement, or frequency Fisher information against b/nu.
    FisherScan(Overrides),
    /// Monte Carlo mean and rescaled variance against frequency, no background.
    IdealSweep(Overrides),
    /// Monte Carlo mean and rescaled variance against b/nu.
    NoiseSweep(Overrides),
    /// Sinusoid and square-wave motion under trigger-delay jitter.
    JitterStudy(Overrides),
    /// Hologram synthesis, export and demultiplexing self-check.
    Holo(Overrides),
    /// Check a configuration and print it with defaults filled in.
    ValidateConfig(Overrides),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::FisherScan(_) => "fisher-scan",
            Command::IdealSweep(_) => "ideal-sweep",
            Command::NoiseSweep(_) => "noise-sweep",
            Command::JitterStudy(_) => "jitter-study",
            Command::Holo(_) => "holo",
            Command::ValidateConfig(_) => "validate-config",
        }
    }

    pub fn overrides(&self) -> &Overrides {
        match self {
            Command::FisherScan(o)
            | Command::IdealSweep(o)
            | Command::NoiseSweep(o)
            | Command::JitterStudy(o)
            | Command::Holo(o)
            | Command::ValidateConfig(o) => o,
        }
    }
}

/// Flags shared by every subcommand; each wins over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Comma-separated subset of di, hg, pm.
    #[arg(long, value_delimiter = ',', value_parser = parse_scheme)]
    pub schemes: Option<Vec<SchemeKind>>,
    /// sinusoid, square-wave or square-fundamental.
    #[arg(long, value_parser = parse_waveform)]
    pub waveform: Option<WaveformChoice>,
    /// Motion amplitude in sigma units.
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Motion frequency f_o / f_s.
    #[arg(long)]
    pub frequency: Option<f64>,
    /// Background per detector relative to nu.
    #[arg(long)]
    pub b_over_nu: Option<f64>,
    /// Comma-separated frequency grid for ideal-sweep.
    #[arg(long, value_delimiter = ',')]
    pub frequencies: Option<Vec<f64>>,
    /// Comma-separated frequency grid for jitter-study.
    #[arg(long, value_delimiter = ',')]
    pub jitter_frequencies: Option<Vec<f64>>,
    /// Comma-separated b/nu grid.
    #[arg(long, value_delimiter = ',')]
    pub noise_grid: Option<Vec<f64>>,
    /// fisher-scan axis: displacement or noise.
    #[arg(long, value_parser = parse_axis)]
    pub axis: Option<ScanAxis>,
    /// Trigger-delay mean in milliseconds (enables jitter).
    #[arg(long)]
    pub jitter_mean_ms: Option<f64>,
    /// Trigger-delay standard deviation in milliseconds (enables jitter).
    #[arg(long)]
    pub jitter_sd_ms: Option<f64>,
}

fn parse_scheme(s: &str) -> Result<SchemeKind, String> {
    SchemeKind::parse(s).ok_or_else(|| format!("unknown scheme `{s}` (expected di, hg or pm)"))
}

fn parse_waveform(s: &str) -> Result<WaveformChoice, String> {
    match s {
        "sinusoid" => Ok(WaveformChoice::Sinusoid),
        "square-wave" => Ok(WaveformChoice::SquareWave),
        "square-fundamental" => Ok(WaveformChoice::SquareFundamental),
        _ => Err(format!("unknown waveform `{s}`")),
    }
}

fn parse_axis(s: &str) -> Result<ScanAxis, String> {
    match s {
        "displacement" => Ok(ScanAxis::Displacement),
        "noise" => Ok(ScanAxis::Noise),
        _ => Err(format!("unknown axis `{s}` (expected displacement or noise)")),
    }
}

impl Overrides {
    /// Config file (or defaults), then `SPADE_WORKERS`, then flags.
    pub fn resolve(&self, env_workers: Option<&str>) -> Result<Config, CliError> {
        let mut c = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(w) = env_workers {
            c.workers = w
                .trim()
                .parse()
                .map_err(|_| CliError::Validation(vec![format!("{WORKERS_ENV}: `{w}` is not a worker count")]))?;
        }
        macro_rules! set {
            ($src:expr, $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(self.output, c.output);
        set!(self.seed, c.seed);
        set!(self.trials, c.trials);
        set!(self.workers, c.workers);
        set!(self.schemes, c.schemes.enabled);
        set!(self.waveform, c.motion.waveform);
        set!(self.amplitude, c.motion.amplitude);
        set!(self.frequency, c.motion.frequency);
        set!(self.b_over_nu, c.noise.b_over_nu);
        set!(self.frequencies, c.sweep.frequencies);
        set!(self.jitter_frequencies, c.sweep.jitter_frequencies);
        set!(self.noise_grid, c.sweep.b_over_nu);
        set!(self.axis, c.sweep.axis);
        if self.jitter_mean_ms.is_some() || self.jitter_sd_ms.is_some() {
            let mut j = c.schedule.jitter.unwrap_or_default();
            set!(self.jitter_mean_ms, j.mean_ms);
            set!(self.jitter_sd_ms, j.sd_ms);
            c.schedule.jitter = Some(j);
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub git_revision: Option<String>,
    pub wall_time_s: f64,
    pub tool_version: String,
    pub files: Vec<String>,
    /// Failure message of the numerical self-check, if one ran and failed.
    pub self_check: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn git_revision() -> Option<String> {
    let out = std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

/// What a command wrote.
#[derive(Debug)]
pub struct RunReport {
    pub output: PathBuf,
    pub tables: Vec<Table>,
    pub manifest: Option<Manifest>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Runs one parsed command. A failed self-check still writes its outputs
/// before returning [`CliError::SelfCheck`].
pub fn run(command: &Command, env_workers: Option<&str>) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let mut cfg = command.overrides().resolve(env_workers)?;
    if let Command::JitterStudy(_) = command {
        cfg.schedule.jitter.get_or_insert_with(Default::default);
    }
    if let Command::ValidateConfig(_) = command {
        print!("{}", cfg.to_toml());
        return Ok(RunReport {
            output: cfg.output.clone(),
            tables: Vec::new(),
            manifest: None,
        });
    }

    let mut hologram = None;
    let mut self_check = None;
    let tables = match command {
        Command::FisherScan(_) => commands::fisher_scan(&cfg)?,
        Command::IdealSweep(_) => commands::ideal_sweep(&cfg)?,
        Command::NoiseSweep(_) => commands::noise_sweep(&cfg)?,
        Command::JitterStudy(_) => commands::jitter_study(&cfg)?,
        Command::Holo(_) => {
            let h = commands::holo(&cfg)?;
            hologram = Some(h.hologram);
            self_check = h.failure;
            vec![h.table]
        }
        Command::ValidateConfig(_) => unreachable!(),
    };

    let dir = cfg.output.clone();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let snapshot = cfg.to_toml();
    write_file(&dir.join("config.toml"), snapshot.as_bytes())?;
    let mut files = vec!["config.toml".to_string()];
    for t in &tables {
        t.write_csv(&dir)?;
        files.push(format!("{}.csv", t.name));
    }
    if let Some(h) = &hologram {
        h.export(&dir, "hologram").map_err(|e| CliError::io(&dir, e))?;
        files.push("hologram.pgm".into());
        files.push("hologram.json".into());
    }
    files.push("manifest.json".into());
    let manifest = Manifest {
        command: command.name().to_string(),
        seed: cfg.seed,
        config_sha256: sha256_hex(snapshot.as_bytes()),
        git_revision: git_revision(),
        wall_time_s: start.elapsed().as_secs_f64(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        files,
        self_check: self_check.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join("manifest.json"), json.as_bytes())?;

    if let Some(msg) = self_check {
        return Err(CliError::SelfCheck(msg));
    }
    Ok(RunReport {
        output: dir,
        tables,
        manifest: Some(manifest),
    })
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let env = std::env::var(WORKERS_ENV).ok();
    match run(&cli.command, env.as_deref()) {
        Ok(r) => {
            if !matches!(cli.command, Command::ValidateConfig(_)) {
                eprintln!("wrote {} table(s) to {}", r.tables.len(), r.output.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
