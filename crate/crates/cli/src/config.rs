//! Command-line flags, `key=value` config files and the resolved run
//! configuration recorded in every manifest.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Layer-by-layer draws of a 1-D deep GP on a grid.
    #[value(name = "sample-1d")]
    Sample1d,
    /// A 2-D Gaussian point cloud warped by a deep GP.
    #[value(name = "warp-2d")]
    Warp2d,
    /// A deep GP evaluated on a 2-D lattice.
    FeatureMap,
    /// Quantiles of normalized Jacobian singular values.
    Spectrum,
    /// Monte Carlo moments of log|df/dx| for one layer.
    DerivativeStats,
    /// Composed, input-connected and fixed-point kernels against distance.
    KernelCompose,
    /// Input-dropout kernel and its additive orders over an offset grid.
    DropoutKernel,
    /// Covariance and normality of random-feature networks.
    FeatureClt,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sample1d => "sample-1d",
            Command::Warp2d => "warp-2d",
            Command::FeatureMap => "feature-map",
            Command::Spectrum => "spectrum",
            Command::DerivativeStats => "derivative-stats",
            Command::KernelCompose => "kernel-compose",
            Command::DropoutKernel => "dropout-kernel",
            Command::FeatureClt => "feature-clt",
        }
    }
}

impl Command {
    fn from_str_value(s: &str) -> Result<Self, String> {
        <Command as ValueEnum>::from_str(s, false).map_err(|_| format!("unknown command `{s}`"))
    }
}

/// A depth value; `inf` is accepted where a limit exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Depth {
    Finite(usize),
    Infinite,
}

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Depth::Finite(n) => write!(f, "{n}"),
            Depth::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Svg,
}

pub fn parse_depth(s: &str) -> Result<Depth, String> {
    match s.trim() {
        "inf" | "infinity" => Ok(Depth::Infinite),
        t => t
            .parse::<usize>()
            .map(Depth::Finite)
            .map_err(|_| format!("depth must be a non-negative integer or `inf`, got `{t}`")),
    }
}

pub fn parse_depths(s: &str) -> Result<Vec<Depth>, String> {
    let out = s.split(',').map(parse_depth).collect::<Result<Vec<_>, _>>()?;
    if out.is_empty() {
        return Err("empty depth list".into());
    }
    Ok(out)
}

pub fn parse_counts(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("expected a positive integer, got `{t}`")))
        .collect()
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s.trim() {
        "csv" => Ok(Format::Csv),
        "svg" => Ok(Format::Svg),
        t => Err(format!("unknown format `{t}` (expected csv or svg)")),
    }
}

pub fn parse_formats(s: &str) -> Result<Vec<Format>, String> {
    let mut out = Vec::new();
    for t in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let f = parse_format(t)?;
        if !out.contains(&f) {
            out.push(f);
        }
    }
    if out.is_empty() {
        return Err("at least one output format is required".into());
    }
    Ok(out)
}

fn parse_real(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("expected a number, got `{s}`"))?;
    if !v.is_finite() {
        return Err(format!("expected a finite number, got `{s}`"));
    }
    Ok(v)
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true or false, got `{s}`")),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "deep-prior-lab",
    version,
    about = "Experiments on deep Gaussian-process priors",
    after_help = "Settings may also come from --config FILE (key=value lines, as written to manifest.txt); flags override the file.\nDEEP_PRIOR_LAB_THREADS caps worker threads (0 = all cores)."
)]
pub struct Cli {
    /// Experiment to run; may instead be given as `command=` in the config file.
    #[arg(value_enum)]
    pub command: Option<Command>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Depth, or comma-separated depths for spectrum and kernel-compose (`inf` allowed there).
    #[arg(long, value_parser = parse_depth, value_delimiter = ',', allow_hyphen_values = true)]
    pub depth: Option<Vec<Depth>>,
    /// Layer width / input dimension.
    #[arg(long)]
    pub dims: Option<usize>,
    /// Grid size (points, lattice side or offsets per axis, depending on command).
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long)]
    pub n_draws: Option<usize>,
    /// Keep probability.
    #[arg(long, value_parser = parse_real, allow_hyphen_values = true)]
    pub p: Option<f64>,
    /// Kernel amplitude (variance sigma^2).
    #[arg(long, value_parser = parse_real, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    #[arg(long, value_parser = parse_real, allow_hyphen_values = true)]
    pub lengthscale: Option<f64>,
    /// Feature counts K for feature-clt.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<usize>>,
    /// Input-connected architecture.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_parser = parse_bool)]
    pub connected: Option<bool>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Comma-separated subset of csv,svg.
    #[arg(long, value_parser = parse_format, value_delimiter = ',')]
    pub formats: Option<Vec<Format>>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Settings before defaults are applied; filled from the config file and
/// then overridden by flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Partial {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub depth: Option<Vec<Depth>>,
    pub dims: Option<usize>,
    pub grid_n: Option<usize>,
    pub n_draws: Option<usize>,
    pub p: Option<f64>,
    pub sigma: Option<f64>,
    pub lengthscale: Option<f64>,
    pub features: Option<Vec<usize>>,
    pub connected: Option<bool>,
    pub output_dir: Option<PathBuf>,
    pub formats: Option<Vec<Format>>,
}

impl Partial {
    pub fn from_cli(cli: &Cli) -> Self {
        Self {
            command: cli.command,
            seed: cli.seed,
            depth: cli.depth.clone(),
            dims: cli.dims,
            grid_n: cli.grid_n,
            n_draws: cli.n_draws,
            p: cli.p,
            sigma: cli.sigma,
            lengthscale: cli.lengthscale,
            features: cli.features.clone(),
            connected: cli.connected,
            output_dir: cli.output_dir.clone(),
            formats: cli.formats.as_ref().map(|f| {
                let mut out: Vec<Format> = Vec::new();
                for x in f {
                    if !out.contains(x) {
                        out.push(*x);
                    }
                }
                out
            }),
        }
    }

    /// Parse `key=value` lines; `#` starts a comment, keys accept `-` or `_`.
    pub fn from_kv(text: &str) -> Result<Self, String> {
        let mut out = Partial::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", no + 1))?;
            let key = key.trim().replace('-', "_");
            let value = value.trim();
            let int = |v: &str| v.parse::<usize>().map_err(|_| format!("line {}: `{key}` expects an integer", no + 1));
            match key.as_str() {
                "command" => out.command = Some(Command::from_str_value(value)?),
                "seed" => out.seed = Some(value.parse().map_err(|_| format!("line {}: bad seed", no + 1))?),
                "depth" => out.depth = Some(parse_depths(value)?),
                "dims" => out.dims = Some(int(value)?),
                "grid_n" => out.grid_n = Some(int(value)?),
                "n_draws" => out.n_draws = Some(int(value)?),
                "p" => out.p = Some(parse_real(value)?),
                "sigma" => out.sigma = Some(parse_real(value)?),
                "lengthscale" => out.lengthscale = Some(parse_real(value)?),
                "features" => out.features = Some(parse_counts(value)?),
                "connected" => out.connected = Some(parse_bool(value)?),
                "output_dir" => out.output_dir = Some(PathBuf::from(value)),
                "formats" => out.formats = Some(parse_formats(value)?),
                // informational in manifests
                "version" => {}
                other => return Err(format!("line {}: unknown key `{other}`", no + 1)),
            }
        }
        Ok(out)
    }

    /// `self` with every field set in `over` replaced.
    pub fn overridden_by(self, over: Partial) -> Partial {
        Partial {
            command: over.command.or(self.command),
            seed: over.seed.or(self.seed),
            depth: over.depth.or(self.depth),
            dims: over.dims.or(self.dims),
            grid_n: over.grid_n.or(self.grid_n),
            n_draws: over.n_draws.or(self.n_draws),
            p: over.p.or(self.p),
            sigma: over.sigma.or(self.sigma),
            lengthscale: over.lengthscale.or(self.lengthscale),
            features: over.features.or(self.features),
            connected: over.connected.or(self.connected),
            output_dir: over.output_dir.or(self.output_dir),
            formats: over.formats.or(self.formats),
        }
    }
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub depth: Vec<Depth>,
    pub dims: usize,
    pub grid_n: usize,
    pub n_draws: usize,
    pub p: f64,
    pub sigma: f64,
    pub lengthscale: f64,
    pub features: Vec<usize>,
    pub connected: bool,
    pub output_dir: PathBuf,
    pub formats: Vec<Format>,
}

pub const DEFAULT_OUTPUT_DIR: &str = "deep-prior-out";

impl RunConfig {
    /// Apply per-command defaults and validate ranges.
    pub fn resolve(p: Partial) -> Result<Self, CliError> {
        let command = p
            .command
            .ok_or_else(|| CliError::Argument("no command given (pass one or set command= in --config)".into()))?;
        use Command::*;
        let default_depth: Vec<Depth> = match command {
            Sample1d => vec![Depth::Finite(10)],
            Warp2d => vec![Depth::Finite(6)],
            FeatureMap => vec![Depth::Finite(if p.connected == Some(true) { 20 } else { 10 })],
            Spectrum => [2, 6, 25, 50].map(Depth::Finite).to_vec(),
            DerivativeStats => vec![Depth::Finite(1)],
            KernelCompose => vec![1, 2, 3, 5, 10].into_iter().map(Depth::Finite).chain([Depth::Infinite]).collect(),
            DropoutKernel | FeatureClt => vec![Depth::Finite(1)],
        };
        let dims = p.dims.unwrap_or(match command {
            Sample1d | DerivativeStats | FeatureClt => 1,
            Warp2d | FeatureMap | DropoutKernel => 2,
            Spectrum => 5,
            KernelCompose => 1,
        });
        let grid_n = p.grid_n.unwrap_or(match command {
            Sample1d => 300,
            Warp2d => 1000,
            // connected warps stay rough, so the low-rank factors approach
            // full rank; a 40 x 40 lattice keeps the dense path
            FeatureMap if p.connected == Some(true) => 40,
            FeatureMap => 100,
            KernelCompose => 101,
            DropoutKernel => 41,
            Spectrum | DerivativeStats | FeatureClt => 0,
        });
        let n_draws = p.n_draws.unwrap_or(match command {
            Spectrum => 1000,
            DerivativeStats => 1_000_000,
            FeatureClt => 20_000,
            _ => 1,
        });
        let default_ls = match command {
            Sample1d => (2.0 / PI).sqrt(),
            Spectrum => (dims as f64).sqrt(),
            _ => 1.0,
        };
        let cfg = RunConfig {
            command,
            seed: p.seed.unwrap_or(0),
            depth: p.depth.unwrap_or(default_depth),
            dims,
            grid_n,
            n_draws,
            p: p.p.unwrap_or(0.5),
            sigma: p.sigma.unwrap_or(1.0),
            lengthscale: p.lengthscale.unwrap_or(default_ls),
            features: p.features.unwrap_or_else(|| vec![10, 100, 1000]),
            connected: p.connected.unwrap_or(false),
            output_dir: p.output_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            formats: p.formats.unwrap_or_else(|| vec![Format::Csv, Format::Svg]),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Argument(m));
        use Command::*;
        if !(self.sigma > 0.0) {
            return bad(format!("--sigma must be positive, got {}", self.sigma));
        }
        if !(self.lengthscale > 0.0) {
            return bad(format!("--lengthscale must be positive, got {}", self.lengthscale));
        }
        if self.dims == 0 {
            return bad("--dims must be at least 1".into());
        }
        let finite: Vec<usize> = self
            .depth
            .iter()
            .filter_map(|d| match d {
                Depth::Finite(n) => Some(*n),
                Depth::Infinite => None,
            })
            .collect();
        if self.command != KernelCompose && finite.len() != self.depth.len() {
            return bad("`inf` depth is only accepted by kernel-compose".into());
        }
        let single = matches!(self.command, Sample1d | Warp2d | FeatureMap);
        if single && self.depth.len() != 1 {
            return bad(format!("{} takes a single --depth", self.command.name()));
        }
        let max_depth = match self.command {
            Sample1d | Warp2d | FeatureMap => 200,
            Spectrum => 10_000,
            _ => 1 << 20,
        };
        if let Some(&d) = finite.iter().find(|&&d| d == 0 || d > max_depth) {
            return bad(format!("--depth must lie in 1..={max_depth}, got {d}"));
        }
        match self.command {
            Sample1d => {
                if self.dims != 1 {
                    return bad("sample-1d draws scalar layers; --dims must be 1".into());
                }
                self.check_grid(2, deep_prior_core::sampler::MAX_POINTS)?;
            }
            Warp2d => {
                if self.dims < 2 || self.dims > 16 {
                    return bad("warp-2d needs --dims in 2..=16".into());
                }
                self.check_grid(2, deep_prior_core::sampler::MAX_POINTS)?;
            }
            FeatureMap => {
                if self.dims != 2 {
                    return bad("feature-map works on 2-D inputs; --dims must be 2".into());
                }
                self.check_grid(2, 100)?;
            }
            Spectrum => {
                if self.dims > 512 {
                    return bad("--dims must be at most 512".into());
                }
                if self.n_draws < 100 {
                    return bad(format!("--n-draws must be at least 100, got {}", self.n_draws));
                }
            }
            DerivativeStats => {
                if self.n_draws < 10_000 || self.n_draws > 100_000_000 {
                    return bad(format!("--n-draws must lie in 10^4..=10^8, got {}", self.n_draws));
                }
                if finite.len() != 1 {
                    return bad("derivative-stats takes a single --depth".into());
                }
            }
            KernelCompose => self.check_grid(2, 100_000)?,
            DropoutKernel => {
                if !(self.p > 0.0 && self.p < 1.0) {
                    return bad(format!("--p must lie in (0, 1), got {}", self.p));
                }
                if self.dims > 25 {
                    return bad("dropout-kernel supports --dims up to 25".into());
                }
                self.check_grid(2, 201)?;
            }
            FeatureClt => {
                if self.features.is_empty() || self.features.iter().any(|&k| k == 0 || k > 100_000) {
                    return bad("--features entries must lie in 1..=100000".into());
                }
                if self.n_draws < 100 || self.n_draws > 10_000_000 {
                    return bad(format!("--n-draws must lie in 100..=10^7, got {}", self.n_draws));
                }
            }
        }
        Ok(())
    }

    fn check_grid(&self, lo: usize, hi: usize) -> Result<(), CliError> {
        if self.grid_n < lo || self.grid_n > hi {
            return Err(CliError::Argument(format!(
                "--grid-n must lie in {lo}..={hi} for {}, got {}",
                self.command.name(),
                self.grid_n
            )));
        }
        Ok(())
    }

    pub fn single_depth(&self) -> usize {
        match self.depth[0] {
            Depth::Finite(n) => n,
            Depth::Infinite => unreachable!("validated"),
        }
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    /// Settings that determine the computed numbers; written into every CSV.
    pub fn model_pairs(&self) -> Vec<(String, String)> {
        let join = |v: Vec<String>| v.join(",");
        vec![
            ("command".into(), self.command.name().into()),
            ("seed".into(), self.seed.to_string()),
            ("depth".into(), join(self.depth.iter().map(|d| d.to_string()).collect())),
            ("dims".into(), self.dims.to_string()),
            ("grid_n".into(), self.grid_n.to_string()),
            ("n_draws".into(), self.n_draws.to_string()),
            ("p".into(), self.p.to_string()),
            ("sigma".into(), self.sigma.to_string()),
            ("lengthscale".into(), self.lengthscale.to_string()),
            ("features".into(), join(self.features.iter().map(|k| k.to_string()).collect())),
            ("connected".into(), self.connected.to_string()),
        ]
    }

    /// Every resolved setting as `(key, value)`; replaying these reproduces
    /// the run.
    pub fn pairs(&self) -> Vec<(String, String)> {
        let join = |v: Vec<String>| v.join(",");
        let mut out = self.model_pairs();
        out.extend([
            ("output_dir".into(), self.output_dir.display().to_string()),
            (
                "formats".into(),
                join(
                    self.formats
                        .iter()
                        .map(|f| match f {
                            Format::Csv => "csv".to_string(),
                            Format::Svg => "svg".to_string(),
                        })
                        .collect(),
                ),
            ),
        ]);
        out
    }

    /// Manifest text: version plus every resolved setting.
    pub fn manifest(&self) -> String {
        let mut out = String::from("# deep-prior-lab manifest; replay with --config <this file>\n");
        out.push_str(&format!("version={}\n", env!("CARGO_PKG_VERSION")));
        for (k, v) in self.pairs() {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}

pub fn read_config_file(path: &Path) -> Result<Partial, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Argument(format!("cannot read config {}: {e}", path.display())))?;
    Partial::from_kv(&text).map_err(|e| CliError::Argument(format!("{}: {e}", path.display())))
}
