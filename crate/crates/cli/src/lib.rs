//! `deep-prior-lab`: command-line experiments on deep Gaussian-process
//! priors. Each run writes CSV tables, optional SVG plots and a
//! `manifest.txt` that replays the run via `--config`.

pub mod commands;
pub mod config;
pub mod svg;
pub mod table;

use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::Parser;

pub use commands::{execute, Artifact};
pub use config::{Cli, Command, Depth, Format, Partial, RunConfig};
pub use svg::{render_svg, PlotKind};

pub const MANIFEST_NAME: &str = "manifest.txt";
pub const THREADS_ENV: &str = "DEEP_PRIOR_LAB_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Argument(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Argument(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<deep_prior_core::Error> for CliError {
    fn from(e: deep_prior_core::Error) -> Self {
        match e {
            deep_prior_core::Error::Argument(m) => CliError::Argument(m),
            e @ deep_prior_core::Error::Numerical { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

/// Parse flags and an optional config file into a resolved configuration.
pub fn resolve_args(cli: &Cli) -> Result<RunConfig, CliError> {
    let file = match &cli.config {
        Some(path) => config::read_config_file(path)?,
        None => Partial::default(),
    };
    RunConfig::resolve(file.overridden_by(Partial::from_cli(cli)))
}

fn thread_cap() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Argument(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`"))),
    }
}

/// Write every artifact then the manifest; on any failure remove what this
/// call created.
pub fn write_outputs(cfg: &RunConfig, artifacts: &[Artifact]) -> Result<Vec<PathBuf>, CliError> {
    let dir = &cfg.output_dir;
    let created_dir = !dir.exists();
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let manifest = Artifact {
            file_name: MANIFEST_NAME.into(),
            contents: cfg.manifest(),
        };
        for a in artifacts.iter().chain(std::iter::once(&manifest)) {
            let path = dir.join(&a.file_name);
            fs::write(&path, &a.contents).map_err(|e| io_err(&path, e))?;
            written.push(path);
        }
        Ok(())
    })();
    match result {
        Ok(()) => Ok(written),
        Err(e) => {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            if created_dir {
                let _ = fs::remove_dir(dir);
            }
            Err(e)
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("cannot write {}: {e}", path.display()))
}

fn run_config(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let threads = thread_cap()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker threads: {e}")))?;
    let artifacts = pool.install(|| execute(cfg))?;
    write_outputs(cfg, &artifacts)
}

/// Entry point: `argv[0]` is the program name. Returns the process exit
/// code: 0 on success, 2 for argument errors, 1 for numerical or I/O
/// failures.
pub fn run(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = resolve_args(&cli).and_then(|cfg| run_config(&cfg));
    match outcome {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            let kind = match e {
                CliError::Argument(_) => "argument error",
                CliError::Numerical(_) => "numerical error",
                CliError::Io(_) => "i/o error",
            };
            eprintln!("deep-prior-lab: {kind}: {e}");
            e.exit_code()
        }
    }
}
