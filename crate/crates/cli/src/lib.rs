//! Command-line runner for the fdmodels studies.
//!
//! Each run writes its artifacts together with `config.json` and a
//! `manifest.json` that lists every file with its SHA-256 hash.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use fdmodels::config::{preset, validate, ExperimentConfig, PRESETS};
use fdmodels::studies::{analyze, run_study, study_bases, Artifact, Summary};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "fdmodels",
    version,
    about = "Finite-dimensional models of random processes and their extremes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory (or file for `preset`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Use the full-scale sample counts instead of the desk-scale ones.
    #[arg(long, global = true)]
    pub paper_scale: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print a built-in configuration, or list the available names.
    Preset { name: Option<String> },
    /// Check a configuration and list every violation.
    Validate {
        /// Built-in configuration to use instead of --config
        #[arg(long)]
        preset: Option<String>,
    },
    /// Run a study and write its artifacts.
    Run {
        /// Built-in configuration to use instead of --config
        #[arg(long)]
        preset: Option<String>,
    },
    /// Compute and export the spectral bases only.
    Eigen {
        /// Built-in configuration to use instead of --config
        #[arg(long)]
        preset: Option<String>,
    },
    /// Recompute statistics from the stored inputs of a previous run.
    Report {
        /// Directory of the earlier run
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    Validation(Vec<String>),
    Numerical(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Other(_) => EXIT_OTHER,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(v) => {
                writeln!(f, "invalid configuration:")?;
                for m in v {
                    writeln!(f, "  - {m}")?;
                }
                Ok(())
            }
            CliError::Numerical(m) => write!(f, "{m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<fdmodels::Error> for CliError {
    fn from(e: fdmodels::Error) -> Self {
        match e {
            fdmodels::Error::Numerical { .. } => CliError::Numerical(e.to_string()),
            fdmodels::Error::Argument(_) | fdmodels::Error::Domain { .. } => {
                CliError::Validation(vec![e.to_string()])
            }
            _ => CliError::Other(e.to_string()),
        }
    }
}

/// One output file and its content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Fields that legitimately differ between otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub timestamp_unix: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub experiment: String,
    pub kind: String,
    pub seed: u64,
    pub n_samples: usize,
    pub paper_scale: bool,
    pub levels: Vec<Vec<usize>>,
    pub config_sha256: String,
    pub versions: std::collections::BTreeMap<String, String>,
    pub files: Vec<FileEntry>,
    pub run_info: RunInfo,
}

impl Manifest {
    /// The manifest without its run-specific fields.
    pub fn deterministic_part(&self) -> Manifest {
        let mut m = self.clone();
        m.run_info = RunInfo {
            timestamp_unix: 0,
            threads: 0,
        };
        m
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Other(format!("{}: {e}", path.display()))
}

/// Parses a configuration, reporting syntax errors with their location.
pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig, CliError> {
    serde_json::from_str(text).map_err(|e| {
        CliError::Validation(vec![format!(
            "{origin}: syntax error at line {}, column {}: {e}",
            e.line(),
            e.column()
        )])
    })
}

fn load_config(cli: &Cli, preset_name: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&cli.config, preset_name) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            parse_config(&text, &path.display().to_string())?
        }
        (None, Some(name)) => preset(name).ok_or_else(|| unknown_preset(name))?,
        (Some(_), Some(_)) => {
            return Err(CliError::Validation(vec![
                "give either --config or --preset, not both".into(),
            ]))
        }
        (None, None) => {
            return Err(CliError::Validation(vec![
                "a configuration is required (--config PATH or --preset NAME)".into(),
            ]))
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn unknown_preset(name: &str) -> CliError {
    CliError::Validation(vec![format!(
        "unknown preset {name:?}; available: {}",
        PRESETS.join(", ")
    )])
}

fn checked(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let v = validate(cfg);
    if v.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(v))
    }
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    match threads {
        None => f(),
        Some(0) => Err(CliError::Validation(vec![
            "--threads must be at least 1".into()
        ])),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Other(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn hash_files(dir: &Path, names: &[String]) -> Result<Vec<FileEntry>, CliError> {
    names
        .iter()
        .map(|n| {
            let path = dir.join(n);
            let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
            Ok(FileEntry {
                path: n.clone(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            })
        })
        .collect()
}

fn versions() -> std::collections::BTreeMap<String, String> {
    [
        ("fdmodels".to_string(), fdmodels::VERSION.to_string()),
        (
            "fdmodels-cli".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        ),
    ]
    .into_iter()
    .collect()
}

/// Writes the effective configuration, the artifacts and the manifest.
fn finish_run(
    dir: &Path,
    cfg: &ExperimentConfig,
    summary: &Summary,
    artifacts: &[Artifact],
    paper_scale: bool,
    threads: usize,
) -> Result<Manifest, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let cfg_text =
        serde_json::to_string_pretty(cfg).map_err(|e| CliError::Other(e.to_string()))? + "\n";
    let cfg_path = dir.join("config.json");
    std::fs::write(&cfg_path, &cfg_text).map_err(|e| io_err(&cfg_path, e))?;
    let mut names = vec!["config.json".to_string()];
    for a in artifacts {
        names.extend(a.write(dir)?);
    }
    fdmodels::io::write_json(&dir.join("summary.json"), summary)?;
    names.push("summary.json".into());
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        experiment: cfg.name.clone(),
        kind: cfg.study.kind().to_string(),
        seed: cfg.seed,
        n_samples: summary.n_samples,
        paper_scale,
        levels: summary.levels.clone(),
        config_sha256: sha256_hex(cfg_text.as_bytes()),
        versions: versions(),
        files: hash_files(dir, &names)?,
        run_info: RunInfo {
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            threads,
        },
    };
    fdmodels::io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name))
}

/// Runs a validated configuration into `dir` and returns its manifest.
pub fn run_config(
    cfg: &ExperimentConfig,
    dir: &Path,
    paper_scale: bool,
    threads: Option<usize>,
) -> Result<Manifest, CliError> {
    checked(cfg)?;
    let n = cfg.sample_count(paper_scale);
    with_threads(threads, || {
        let result = run_study(cfg, n)?;
        finish_run(
            dir,
            cfg,
            &result.summary,
            &result.artifacts,
            paper_scale,
            rayon::current_num_threads(),
        )
    })
}

/// Re-analyzes the stored inputs of the run in `run_dir` and writes to `dir`.
pub fn report_run(
    run_dir: &Path,
    dir: &Path,
    threads: Option<usize>,
) -> Result<Manifest, CliError> {
    let cfg_path = run_dir.join("config.json");
    let text = std::fs::read_to_string(&cfg_path).map_err(|e| io_err(&cfg_path, e))?;
    let cfg = parse_config(&text, &cfg_path.display().to_string())?;
    checked(&cfg)?;
    let prior: Option<Manifest> = fdmodels::io::read_json(&run_dir.join("manifest.json")).ok();
    let inputs =
        fdmodels::io::read_ensemble(&run_dir.join("inputs.bin"), &run_dir.join("inputs.json"))?;
    if let Some(m) = &prior {
        for f in m.files.iter().filter(|f| f.path.starts_with("inputs.")) {
            let path = run_dir.join(&f.path);
            let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(CliError::Other(format!(
                    "{}: content hash differs from the manifest (expected {})",
                    path.display(),
                    f.sha256
                )));
            }
        }
    }
    let paper_scale = prior.map(|m| m.paper_scale).unwrap_or(false);
    with_threads(threads, || {
        let result = analyze(&cfg, Arc::new(inputs))?;
        finish_run(
            dir,
            &cfg,
            &result.summary,
            &result.artifacts,
            paper_scale,
            rayon::current_num_threads(),
        )
    })
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Preset { name: None } => {
            write_or_print(cli.out.as_deref(), &(PRESETS.join("\n") + "\n"))
        }
        Command::Preset { name: Some(name) } => {
            let cfg = preset(name).ok_or_else(|| unknown_preset(name))?;
            let text =
                serde_json::to_string_pretty(&cfg).map_err(|e| CliError::Other(e.to_string()))?;
            write_or_print(cli.out.as_deref(), &(text + "\n"))
        }
        Command::Validate { preset } => {
            let cfg = load_config(cli, preset.as_deref())?;
            checked(&cfg)?;
            println!("{}: valid", cfg.name);
            Ok(())
        }
        Command::Run { preset } => {
            let cfg = load_config(cli, preset.as_deref())?;
            let dir = out_dir(cli, &cfg);
            let m = run_config(&cfg, &dir, cli.paper_scale, cli.threads)?;
            println!(
                "{}: {} samples, {} files written to {}",
                m.experiment,
                m.n_samples,
                m.files.len() + 1,
                dir.display()
            );
            Ok(())
        }
        Command::Eigen { preset } => {
            let cfg = load_config(cli, preset.as_deref())?;
            checked(&cfg)?;
            let dir = out_dir(cli, &cfg);
            with_threads(cli.threads, || {
                for (name, basis) in study_bases(&cfg)? {
                    Artifact::Basis(name.clone(), basis.clone()).write(&dir)?;
                    let head: Vec<String> = basis
                        .eigenvalues()
                        .iter()
                        .take(5)
                        .map(|l| format!("{l:.6}"))
                        .collect();
                    println!(
                        "{name}: {} modes, leading eigenvalues {}",
                        basis.n_modes(),
                        head.join(" ")
                    );
                }
                Ok(())
            })
        }
        Command::Report { run } => {
            let dir = cli.out.clone().unwrap_or_else(|| run.join("report"));
            let m = report_run(run, &dir, cli.threads)?;
            println!("{}: report written to {}", m.experiment, dir.display());
            Ok(())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprint!("error: {e}");
            if !matches!(e, CliError::Validation(_)) {
                eprintln!();
            }
            e.exit_code()
        }
    }
}
