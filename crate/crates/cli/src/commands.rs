//! One function per subcommand; each returns its artifacts in memory so
//! nothing touches the disk until the whole computation has succeeded.

use deep_prior_core::dropout::additive_order_term;
use deep_prior_core::sampler::LatticeSpec;
use deep_prior_core::stats;
use deep_prior_core::{
    deep_kernel_chain, dropout_input_kernel, feature_map_grid, fixed_point_kernel, input_connected_deep_kernel,
    mc_log_derivative_moments, random_feature_network, sample_deep_composition, spectrum_distribution,
    ComposedKernelChain, DeepArchitecture, FeatureFamily, FeatureSet, FixedPointQuery, JacobianSpec, KernelSpec,
    LayerTrace, PointSet, RngStream, WeightDistribution,
};
use rayon::prelude::*;

use crate::config::{Command, Depth, Format, RunConfig};
use crate::svg::{render_svg, PlotKind};
use crate::table::{num, Table, SCHEMA_VERSION};
use crate::CliError;

/// Input range of `sample-1d`.
pub const SAMPLE_1D_RANGE: (f64, f64) = (-5.0, 5.0);
/// Lattice range of `feature-map`.
pub const FEATURE_MAP_RANGE: (f64, f64) = (-3.0, 3.0);
/// Distance range of `kernel-compose`.
pub const KERNEL_COMPOSE_MAX_R: f64 = 4.0;
/// Per-axis offset range of `dropout-kernel`.
pub const DROPOUT_OFFSET_MAX: f64 = 4.0;
/// The two inputs of `feature-clt` along the first axis.
pub const CLT_POINTS: (f64, f64) = (0.3, -0.5);

// stream ids kept clear of the per-layer ids `base << 32 | layer << 16 | dim`
const CLOUD_STREAM: u64 = 1 << 40;
const FEATURE_STREAM: u64 = 2 << 40;
const NETWORK_STREAM: u64 = 3 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: String,
}

struct Output {
    cfg: RunConfig,
    artifacts: Vec<Artifact>,
}

impl Output {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            artifacts: Vec::new(),
        }
    }

    fn add(&mut self, stem: &str, csv: String, plots: &[(&str, PlotKind)]) -> Result<(), CliError> {
        if self.cfg.wants(Format::Svg) {
            for (suffix, kind) in plots {
                let svg = render_svg(&csv, kind).map_err(|e| CliError::Argument(format!("rendering {stem}: {e}")))?;
                self.artifacts.push(Artifact {
                    file_name: format!("{stem}{suffix}.svg"),
                    contents: svg,
                });
            }
        }
        if self.cfg.wants(Format::Csv) {
            self.artifacts.push(Artifact {
                file_name: format!("{stem}.csv"),
                contents: csv,
            });
        }
        Ok(())
    }

    fn table(&mut self, stem: &str, mut t: Table, plots: &[(&str, PlotKind)]) -> Result<(), CliError> {
        let mut meta = self.cfg.model_pairs();
        meta.append(&mut t.meta);
        t.meta = meta;
        self.add(stem, t.to_csv(), plots)
    }

    fn trace(&mut self, stem: &str, trace: &LayerTrace, plots: &[(&str, PlotKind)]) -> Result<(), CliError> {
        let csv = format!("# schema={SCHEMA_VERSION}\n{}", trace.to_csv(&self.cfg.model_pairs()));
        self.add(stem, csv, plots)
    }
}

/// Compute every artifact of `cfg` (the manifest excluded).
pub fn execute(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let mut out = Output::new(cfg);
    match cfg.command {
        Command::Sample1d => sample_1d(cfg, &mut out)?,
        Command::Warp2d => warp_2d(cfg, &mut out)?,
        Command::FeatureMap => feature_map(cfg, &mut out)?,
        Command::Spectrum => spectrum(cfg, &mut out)?,
        Command::DerivativeStats => derivative_stats(cfg, &mut out)?,
        Command::KernelCompose => kernel_compose(cfg, &mut out)?,
        Command::DropoutKernel => dropout_kernel(cfg, &mut out)?,
        Command::FeatureClt => feature_clt(cfg, &mut out)?,
    }
    Ok(out.artifacts)
}

fn layer_kernel(cfg: &RunConfig, dim: usize) -> Result<KernelSpec, CliError> {
    Ok(KernelSpec::squared_exp(cfg.sigma * cfg.sigma, cfg.lengthscale, dim)?)
}

fn sample_1d(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let arch = DeepArchitecture::new(cfg.single_depth(), 1, cfg.connected, layer_kernel(cfg, 1)?);
    let pts = PointSet::grid_1d(SAMPLE_1D_RANGE.0, SAMPLE_1D_RANGE.1, cfg.grid_n)?;
    let trace = sample_deep_composition(&arch, &pts, RngStream::new(cfg.seed, 0))?;
    out.trace("sample1d", &trace, &[("", PlotKind::Lines)])
}

fn last_layer_columns(depth: usize) -> (String, String) {
    (format!("f_layer{depth}_dim1"), format!("f_layer{depth}_dim2"))
}

fn warp_2d(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let depth = cfg.single_depth();
    let pts = PointSet::gaussian_cloud(cfg.grid_n, cfg.dims, RngStream::new(cfg.seed, CLOUD_STREAM))?;
    let arch = DeepArchitecture::new(depth, cfg.dims, cfg.connected, layer_kernel(cfg, cfg.dims)?);
    let trace = sample_deep_composition(&arch, &pts, RngStream::new(cfg.seed, 0))?;
    let (x, y) = last_layer_columns(depth);
    out.trace("warp2d", &trace, &[("", PlotKind::Scatter { x, y })])
}

fn feature_map(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let depth = cfg.single_depth();
    let arch = DeepArchitecture::new(depth, 2, cfg.connected, layer_kernel(cfg, 2)?);
    let grid = LatticeSpec {
        x_min: FEATURE_MAP_RANGE.0,
        x_max: FEATURE_MAP_RANGE.1,
        resolution: cfg.grid_n,
    };
    let trace = feature_map_grid(&arch, grid, RngStream::new(cfg.seed, 0))?;
    let (f1, f2) = last_layer_columns(depth);
    out.trace("featuremap", &trace, &[("", PlotKind::FeatureMap { f1, f2 })])
}

fn spectrum(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let single = cfg.depth.len() == 1;
    for d in &cfg.depth {
        let Depth::Finite(depth) = *d else { unreachable!("validated") };
        let spec = JacobianSpec::isotropic(depth, cfg.dims, cfg.sigma, cfg.lengthscale, cfg.connected);
        let summary = spectrum_distribution(&spec, cfg.n_draws, RngStream::new(cfg.seed, depth as u64))?;
        let mut t = Table::new(&["index", "q10", "q50", "q90"]);
        t.meta("L", depth);
        t.meta("D", cfg.dims);
        for (i, q) in summary.quantiles.iter().enumerate() {
            t.push(vec![(i + 1).to_string(), num(q[0]), num(q[1]), num(q[2])]);
        }
        let stem = if single { "spectrum".to_string() } else { format!("spectrum_L{depth}") };
        out.table(&stem, t, &[("", PlotKind::Spectrum)])?;
    }
    Ok(())
}

fn derivative_stats(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let r = mc_log_derivative_moments(cfg.sigma, cfg.lengthscale, cfg.n_draws, RngStream::new(cfg.seed, 0))?;
    let mut t = Table::new(&[
        "sigma",
        "w",
        "m_log_paper",
        "v_log_paper",
        "m_log_exact",
        "v_log_exact",
        "m_log_mc",
        "m_log_se",
        "v_log_mc",
        "v_log_se",
        "n_samples",
    ]);
    t.push(vec![
        num(r.sigma),
        num(r.w),
        num(r.m_log_paper),
        num(r.v_log_paper),
        num(r.m_log_exact),
        num(r.v_log_exact),
        num(r.m_log_mc),
        num(r.m_log_se),
        num(r.v_log_mc),
        num(r.v_log_se),
        r.n_samples.to_string(),
    ]);
    out.table("derivative_stats", t, &[])
}

fn kernel_compose(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let base = KernelSpec::squared_exp(1.0, cfg.lengthscale, 1)?;
    let n = cfg.grid_n;
    let rs: Vec<f64> = (0..n).map(|i| KERNEL_COMPOSE_MAX_R * i as f64 / (n - 1) as f64).collect();
    let fixed: Vec<f64> = rs
        .iter()
        .map(|&r| fixed_point_kernel(&FixedPointQuery::new(r)))
        .collect::<Result<_, _>>()?;
    let mut t = Table::new(&["r", "depth", "k_chain", "k_connected", "k_fixed_point"]);
    for d in &cfg.depth {
        let rows: Vec<(f64, f64)> = match *d {
            Depth::Finite(depth) => {
                let chain = ComposedKernelChain::new(base.clone(), depth, false)?;
                let conn = ComposedKernelChain::new(base.clone(), depth, true)?;
                rs.par_iter()
                    .map(|&r| {
                        Ok((
                            deep_kernel_chain(&chain, &[0.0], &[r])?,
                            input_connected_deep_kernel(&conn, &[0.0], &[r])?,
                        ))
                    })
                    .collect::<Result<_, deep_prior_core::Error>>()?
            }
            // the standard chain degenerates to the constant 1; the
            // connected one converges to the fixed point
            Depth::Infinite => fixed.iter().map(|&k| (1.0, k)).collect(),
        };
        for ((r, (kc, kn)), kf) in rs.iter().zip(rows).zip(&fixed) {
            t.push(vec![num(*r), d.to_string(), num(kc), num(kn), num(*kf)]);
        }
    }
    let plot = |y: &str| PlotKind::Grouped {
        x: "r".into(),
        y: y.into(),
        group: "depth".into(),
        log_x: false,
    };
    out.table(
        "kernel_compose",
        t,
        &[("_chain", plot("k_chain")), ("_connected", plot("k_connected"))],
    )
}

fn dropout_kernel(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let d = cfg.dims;
    let n = cfg.grid_n;
    let axis: Vec<f64> = (0..n)
        .map(|i| -DROPOUT_OFFSET_MAX + 2.0 * DROPOUT_OFFSET_MAX * i as f64 / (n - 1) as f64)
        .collect();
    let mut header: Vec<String> = (1..=d).map(|i| format!("offset_{i}")).collect();
    header.extend((0..=d).map(|o| format!("k_order_{o}")));
    header.push("k_dropout".into());
    let mut t = Table::with_header(header);
    // slice through the first two offset components, the rest held at 0
    let slices: Vec<Vec<f64>> = if d == 1 {
        axis.iter().map(|&a| vec![a]).collect()
    } else {
        axis.iter()
            .flat_map(|&b| {
                axis.iter().map(move |&a| {
                    let mut v = vec![0.0; d];
                    v[0] = a;
                    v[1] = b;
                    v
                })
            })
            .collect()
    };
    let w2 = cfg.lengthscale * cfg.lengthscale;
    for off in slices {
        let k: Vec<f64> = off.iter().map(|o| (-0.5 * o * o / w2).exp()).collect();
        let mut row: Vec<String> = off.iter().map(|&v| num(v)).collect();
        for o in 0..=d {
            row.push(num(additive_order_term(&k, o)?));
        }
        row.push(num(dropout_input_kernel(&k, cfg.p)?));
        t.push(row);
    }
    let plot = if d == 1 {
        PlotKind::Lines
    } else {
        PlotKind::Heatmap {
            value: "k_dropout".into(),
        }
    };
    out.table("dropout_kernel", t, &[("", plot)])
}

fn weight_name(w: WeightDistribution) -> &'static str {
    match w {
        WeightDistribution::Gaussian => "gaussian",
        WeightDistribution::Uniform => "uniform",
        WeightDistribution::Rademacher => "rademacher",
    }
}

fn feature_clt(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let mut x = vec![0.0; cfg.dims];
    let mut xp = vec![0.0; cfg.dims];
    x[0] = CLT_POINTS.0;
    xp[0] = CLT_POINTS.1;
    let pts = PointSet::from_rows(&[x.clone(), xp.clone()])?;
    let weight_variance = cfg.sigma * cfg.sigma;
    let mut t = Table::new(&[
        "weights", "K", "var", "var_se", "var_limit", "cov", "cov_se", "cov_limit", "ks", "ks_critical",
    ]);
    for (wi, w) in [WeightDistribution::Gaussian, WeightDistribution::Uniform, WeightDistribution::Rademacher]
        .into_iter()
        .enumerate()
    {
        for &k in &cfg.features {
            let features = FeatureSet::draw(
                FeatureFamily::RandomStep,
                k,
                cfg.dims,
                RngStream::new(cfg.seed, FEATURE_STREAM | k as u64),
            )?;
            let design = features.design(&pts)?;
            let base = RngStream::new(cfg.seed, NETWORK_STREAM | (wi as u64) << 32 | k as u64);
            let draws: Vec<Vec<f64>> = (0..cfg.n_draws as u64)
                .into_par_iter()
                .map(|i| random_feature_network(&design, weight_variance, w, None, base.substream(i)))
                .collect::<Result<_, _>>()?;
            let f0: Vec<f64> = draws.iter().map(|d| d[0]).collect();
            let f1: Vec<f64> = draws.iter().map(|d| d[1]).collect();
            let (var, var_se) = stats::covariance(&f0, &f0);
            let (cov, cov_se) = stats::covariance(&f0, &f1);
            let var_limit = features.limit_covariance(weight_variance, &x, &x);
            let ks = stats::ks_normal(&f0, 0.0, var_limit.sqrt());
            t.push(vec![
                weight_name(w).into(),
                k.to_string(),
                num(var),
                num(var_se),
                num(var_limit),
                num(cov),
                num(cov_se),
                num(features.limit_covariance(weight_variance, &x, &xp)),
                num(ks),
                num(stats::ks_critical(cfg.n_draws)),
            ]);
        }
    }
    let plot = PlotKind::Grouped {
        x: "K".into(),
        y: "ks".into(),
        group: "weights".into(),
        log_x: true,
    };
    out.table("feature_clt", t, &[("", plot)])
}
