//! Draws from GP priors on point sets and from layered (deep) compositions.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{eval_kernel, kernel_matrix, KernelSpec, PointSet};
use crate::psd::{pivoted_cholesky, psd_factorize, JitterPolicy};
use crate::rng::{standard_normals, RngStream};

const MODULE: &str = "gp-sampler";

/// Largest point set handled by the dense factorization; beyond this the
/// pivoted low-rank factorization is used.
pub const DENSE_LIMIT: usize = 2500;
/// Hard guard on point-set size.
pub const MAX_POINTS: usize = 10_000;

/// Factor `F` with `F Fᵀ ≈ K`, shared by every draw on the same inputs.
#[derive(Debug, Clone)]
pub struct GpFactor {
    pub factor: DMatrix<f64>,
    /// Diagonal jitter added (dense path) or 0 for the pivoted path.
    pub jitter: f64,
}

impl GpFactor {
    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    /// `F z` for a fresh standard-normal `z` drawn from `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_vec(standard_normals(rng, self.rank()));
        (&self.factor * z).iter().copied().collect()
    }
}

pub fn factor_gp(spec: &KernelSpec, pts: &PointSet) -> Result<GpFactor> {
    if pts.dim() != spec.dim() {
        return Err(Error::arg(format!(
            "point set dimension {} does not match kernel dimension {}",
            pts.dim(),
            spec.dim()
        )));
    }
    let n = pts.len();
    if n > MAX_POINTS {
        return Err(Error::arg(format!("{n} points exceed the limit of {MAX_POINTS}")));
    }
    if n <= DENSE_LIMIT {
        let k = kernel_matrix(spec, pts)?;
        let f = psd_factorize(&k, JitterPolicy::default())?;
        Ok(GpFactor {
            factor: f.lower,
            jitter: f.jitter_used,
        })
    } else {
        let tol = JitterPolicy::default().initial;
        let factor = pivoted_cholesky(
            n,
            |i, j| eval_kernel(spec, pts.point(i), pts.point(j)).unwrap_or(f64::NAN),
            tol,
        )?;
        if factor.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(MODULE, "low-rank factorization produced non-finite values"));
        }
        Ok(GpFactor { factor, jitter: 0.0 })
    }
}

/// One draw of `f ~ GP(0, k)` at `pts`.
pub fn sample_gp(spec: &KernelSpec, pts: &PointSet, stream: RngStream) -> Result<Vec<f64>> {
    Ok(factor_gp(spec, pts)?.draw(&mut stream.rng()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepArchitecture {
    pub depth: usize,
    pub layer_width: usize,
    /// Width of the last layer; `layer_width` when `None`.
    pub output_width: Option<usize>,
    pub input_connected: bool,
    /// Per-layer kernel; an isotropic template is widened to each layer's
    /// input dimension.
    pub layer_kernel: KernelSpec,
}

impl DeepArchitecture {
    pub fn new(depth: usize, layer_width: usize, input_connected: bool, layer_kernel: KernelSpec) -> Self {
        Self {
            depth,
            layer_width,
            output_width: None,
            input_connected,
            layer_kernel,
        }
    }

    pub fn width_of(&self, layer: usize) -> usize {
        if layer + 1 == self.depth {
            self.output_width.unwrap_or(self.layer_width)
        } else {
            self.layer_width
        }
    }

    /// Kernel for a layer whose inputs have dimension `dim`.
    pub fn kernel_for(&self, dim: usize) -> Result<KernelSpec> {
        let t = &self.layer_kernel;
        if t.dim() == dim {
            return Ok(t.clone());
        }
        let w0 = t.lengthscales[0];
        if t.lengthscales.iter().any(|w| *w != w0) {
            return Err(Error::arg(format!(
                "layer kernel has {} lengthscales but a layer needs {dim}; only isotropic templates are widened",
                t.dim()
            )));
        }
        let mut spec = t.clone();
        spec.lengthscales = vec![w0; dim];
        spec.validate()?;
        Ok(spec)
    }
}

/// Per-layer values of a deep composition.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub input_points: PointSet,
    /// `layers[ℓ]` is `N × width_ℓ`: the composition through layer `ℓ + 1`.
    pub layers: Vec<DMatrix<f64>>,
    pub jitter: Vec<f64>,
    pub rank: Vec<usize>,
}

impl LayerTrace {
    /// Output of the whole composition; the inputs when there are no layers.
    pub fn output(&self) -> DMatrix<f64> {
        match self.layers.last() {
            Some(m) => m.clone(),
            None => {
                let p = &self.input_points;
                DMatrix::from_fn(p.len(), p.dim(), |i, d| p.point(i)[d])
            }
        }
    }

    /// CSV with `#`-prefixed metadata lines, one row per input point:
    /// `x_1..x_D`, then `f_layer{ℓ}_dim{d}` for every layer and output
    /// dimension (both 1-based).
    pub fn to_csv(&self, metadata: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        for (l, j) in self.jitter.iter().enumerate() {
            let _ = writeln!(out, "# jitter_layer{}={:e} rank={}", l + 1, j, self.rank[l]);
        }
        let dim = self.input_points.dim();
        let mut header: Vec<String> = (1..=dim).map(|d| format!("x_{d}")).collect();
        for (l, m) in self.layers.iter().enumerate() {
            header.extend((1..=m.ncols()).map(|d| format!("f_layer{}_dim{}", l + 1, d)));
        }
        out.push_str(&header.join(","));
        out.push('\n');
        for (i, x) in self.input_points.iter().enumerate() {
            let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            for m in &self.layers {
                row.extend((0..m.ncols()).map(|d| m[(i, d)].to_string()));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn layer_stream(stream: RngStream, layer: usize, dim: usize) -> RngStream {
    stream.with_id((stream.stream_id << 32) | ((layer as u64) << 16) | dim as u64)
}

/// Sample every layer of a deep composition at `pts`.
///
/// Layer `ℓ + 1` is evaluated at the outputs of layer `ℓ` (concatenated
/// with the original inputs when input-connected). All output dimensions
/// of a layer share one factorization; dimension `d` of layer `ℓ` draws
/// from stream id `base << 32 | ℓ << 16 | d`.
pub fn sample_deep_composition(arch: &DeepArchitecture, pts: &PointSet, stream: RngStream) -> Result<LayerTrace> {
    if arch.layer_width == 0 || arch.output_width == Some(0) {
        return Err(Error::arg("layer width must be at least 1"));
    }
    if arch.depth >= 1 << 16 || arch.layer_width.max(arch.output_width.unwrap_or(0)) >= 1 << 16 {
        return Err(Error::arg("depth and width must stay below 65536"));
    }
    if pts.len() > MAX_POINTS {
        return Err(Error::arg(format!("{} points exceed the limit of {MAX_POINTS}", pts.len())));
    }
    let n = pts.len();
    let mut layers = Vec::with_capacity(arch.depth);
    let mut jitter = Vec::with_capacity(arch.depth);
    let mut rank = Vec::with_capacity(arch.depth);
    let mut inputs = pts.clone();
    for layer in 0..arch.depth {
        let spec = arch.kernel_for(inputs.dim())?;
        let factor = factor_gp(&spec, &inputs).map_err(|e| match e {
            Error::Numerical { module, message } => Error::Numerical {
                module,
                message: format!("layer {}: {message}", layer + 1),
            },
            other => other,
        })?;
        let width = arch.width_of(layer);
        let columns: Vec<Vec<f64>> = (0..width)
            .into_par_iter()
            .map(|d| factor.draw(&mut layer_stream(stream, layer, d).rng()))
            .collect();
        let values = DMatrix::from_fn(n, width, |i, d| columns[d][i]);
        let next = PointSet::new(width, (0..n).flat_map(|i| columns.iter().map(move |c| c[i])).collect())?;
        inputs = if arch.input_connected {
            next.concat_columns(pts)?
        } else {
            next
        };
        jitter.push(factor.jitter);
        rank.push(factor.rank());
        layers.push(values);
    }
    Ok(LayerTrace {
        input_points: pts.clone(),
        layers,
        jitter,
        rank,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub resolution: usize,
}

/// Deep composition evaluated on a `resolution²` lattice of 2-D inputs.
pub fn feature_map_grid(arch: &DeepArchitecture, grid: LatticeSpec, stream: RngStream) -> Result<LayerTrace> {
    if arch.depth > 0 && arch.width_of(arch.depth - 1) != 2 {
        return Err(Error::arg("feature maps need a 2-dimensional final layer"));
    }
    if grid.resolution < 2 || !(grid.x_max > grid.x_min) {
        return Err(Error::arg("lattice needs resolution >= 2 and x_max > x_min"));
    }
    let pts = PointSet::lattice_2d(grid.x_min, grid.x_max, grid.resolution)?;
    sample_deep_composition(arch, &pts, stream)
}

/// Fixed basis families for the one-hidden-layer construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureFamily {
    /// `√2 cos(ωᵀx + b)`, `ω ~ N(0, I/w²)`, `b ~ U[0, 2π)`; the feature
    /// inner product approximates the SE kernel with lengthscale `w`.
    RandomCosine { lengthscale: f64 },
    /// `sign(vᵀx - c)` with Gaussian `v` and `c`.
    RandomStep,
    /// `h ≡ 1`.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightDistribution {
    Gaussian,
    Uniform,
    Rademacher,
}

impl WeightDistribution {
    /// Zero-mean draw with variance `variance`.
    pub fn sample<R: Rng + ?Sized>(self, variance: f64, rng: &mut R) -> f64 {
        let sd = variance.sqrt();
        match self {
            WeightDistribution::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            }
            WeightDistribution::Uniform => sd * 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
            WeightDistribution::Rademacher => {
                if rng.random::<bool>() {
                    sd
                } else {
                    -sd
                }
            }
        }
    }
}

/// A drawn-once set of `K` features; networks resample only the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    family: FeatureFamily,
    dim: usize,
    directions: Vec<Vec<f64>>,
    offsets: Vec<f64>,
}

impl FeatureSet {
    pub fn draw(family: FeatureFamily, k: usize, dim: usize, stream: RngStream) -> Result<Self> {
        if k == 0 {
            return Err(Error::arg("need at least one feature"));
        }
        if dim == 0 {
            return Err(Error::arg("feature input dimension must be at least 1"));
        }
        let mut rng = stream.rng();
        let (directions, offsets) = match family {
            FeatureFamily::RandomCosine { lengthscale } => {
                if !(lengthscale > 0.0) {
                    return Err(Error::arg("feature lengthscale must be positive"));
                }
                let dirs = (0..k)
                    .map(|_| standard_normals(&mut rng, dim).into_iter().map(|z| z / lengthscale).collect())
                    .collect();
                let offs = (0..k).map(|_| 2.0 * PI * rng.random::<f64>()).collect();
                (dirs, offs)
            }
            FeatureFamily::RandomStep => {
                let dirs = (0..k).map(|_| standard_normals(&mut rng, dim)).collect();
                let offs = standard_normals(&mut rng, k);
                (dirs, offs)
            }
            FeatureFamily::Constant => (vec![vec![0.0; dim]; k], vec![0.0; k]),
        };
        Ok(Self {
            family,
            dim,
            directions,
            offsets,
        })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// `h_i(x)` for every feature.
    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        self.directions
            .iter()
            .zip(&self.offsets)
            .map(|(v, &b)| {
                let proj: f64 = v.iter().zip(x).map(|(a, c)| a * c).sum();
                match self.family {
                    FeatureFamily::RandomCosine { .. } => 2f64.sqrt() * (proj + b).cos(),
                    FeatureFamily::RandomStep => {
                        if proj >= b {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    FeatureFamily::Constant => 1.0,
                }
            })
            .collect()
    }

    /// Feature matrix `H` (N × K) at `pts`.
    pub fn design(&self, pts: &PointSet) -> Result<DMatrix<f64>> {
        if pts.dim() != self.dim {
            return Err(Error::arg("point dimension does not match features"));
        }
        let rows: Vec<Vec<f64>> = pts.iter().map(|x| self.evaluate(x)).collect();
        Ok(DMatrix::from_fn(pts.len(), self.len(), |i, k| rows[i][k]))
    }

    /// Limiting covariance `(σ_w²/K) Σ_i h_i(x) h_i(x')`.
    pub fn limit_covariance(&self, weight_variance: f64, x: &[f64], xp: &[f64]) -> f64 {
        let a = self.evaluate(x);
        let b = self.evaluate(xp);
        weight_variance / self.len() as f64 * a.iter().zip(&b).map(|(u, v)| u * v).sum::<f64>()
    }
}

/// Hidden-unit dropout applied to a random-feature network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HiddenDropout {
    pub keep_prob: f64,
    /// Divide surviving weights by `√p`.
    pub rescale: bool,
}

/// One network `f(x) = K^{-1/2} Σ_i w_i h_i(x)` with fresh i.i.d. weights,
/// evaluated at every point of `pts` given the feature matrix `design`.
///
/// The `K^{-1/2}` prefactor is the one under which the covariance is
/// `(σ_w²/K) Σ h_i(x) h_i(x')` for every `K`.
pub fn random_feature_network(
    design: &DMatrix<f64>,
    weight_variance: f64,
    weights: WeightDistribution,
    dropout: Option<HiddenDropout>,
    stream: RngStream,
) -> Result<Vec<f64>> {
    let k = design.ncols();
    if k == 0 {
        return Err(Error::arg("need at least one feature"));
    }
    if !(weight_variance > 0.0 && weight_variance.is_finite()) {
        return Err(Error::arg("weight variance must be positive"));
    }
    if let Some(d) = dropout {
        if !(d.keep_prob > 0.0 && d.keep_prob <= 1.0) {
            return Err(Error::arg("keep probability must lie in (0, 1]"));
        }
    }
    let mut rng = stream.rng();
    let w = DVector::from_fn(k, |_, _| {
        let mut v = weights.sample(weight_variance, &mut rng);
        if let Some(d) = dropout {
            let keep = rng.random::<f64>() < d.keep_prob;
            v = if keep { v } else { 0.0 };
            if d.rescale {
                v /= d.keep_prob.sqrt();
            }
        }
        v
    });
    Ok((design * w / (k as f64).sqrt()).iter().copied().collect())
}
