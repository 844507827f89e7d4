//! Derivative statistics of deep GP priors.
//!
//! In one dimension each layer's derivative at a point is `N(0, σ²/w²)`
//! and the derivative of the composition is their product. In `D`
//! dimensions each layer's Jacobian has independent Gaussian entries with
//! column variance `σ²/w_j²`, so the Jacobian of the composition is a
//! product of independent Gaussian matrices. The input-connected variant
//! appends an identity block before each multiplication.

use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, QR};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};
use crate::rng::{standard_normals, RngStream};
use crate::stats::{self, EULER_GAMMA};
use crate::svd::singular_values_jacobi;

const MODULE: &str = "jacobian-analysis";
const MC_CHUNK: usize = 1 << 14;
/// Factors multiplied between re-orthogonalizations of a long product.
pub const REORTHOGONALIZE_EVERY: usize = 10;

/// The log-derivative moments as printed in the source analysis:
/// `m = 2 log(σ/w) - log 2 - γ` and
/// `v = π²/4 + log²2/2 - γ² - γ log 4 + 2 log(σ/w) [γ + log 2 - log(σ/w)]`.
///
/// These are `E[log Z²]`-style constants and do not match `E[log|Z|]`;
/// they are reported next to the Monte Carlo values, not used as truth.
pub fn closed_form_log_moments(sigma: f64, w: f64) -> (f64, f64) {
    let g = EULER_GAMMA;
    let lr = (sigma / w).ln();
    let m = 2.0 * lr - LN_2 - g;
    let v = PI * PI / 4.0 + LN_2 * LN_2 / 2.0 - g * g - g * 2.0 * LN_2
        + 2.0 * lr * (g + LN_2 - lr);
    (m, v)
}

/// Exact mean and variance of `log|Z|` for `Z ~ N(0, σ²/w²)`:
/// `log(σ/w) + ½(ψ(½) + log 2)` and `¼ ψ'(½) = π²/8`.
pub fn log_abs_normal_moments(sigma: f64, w: f64) -> (f64, f64) {
    (
        (sigma / w).ln() + 0.5 * (digamma(0.5) + LN_2),
        PI * PI / 8.0,
    )
}

/// Mean of `|Z|`, `Z ~ N(0, σ²/w²)`: `sqrt(2σ² / (π w²))`.
pub fn half_normal_mean(sigma: f64, w: f64) -> f64 {
    (2.0 * sigma * sigma / (PI * w * w)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivMomentReport {
    pub sigma: f64,
    pub w: f64,
    pub m_log_paper: f64,
    pub v_log_paper: f64,
    pub m_log_exact: f64,
    pub v_log_exact: f64,
    pub m_log_mc: f64,
    pub m_log_se: f64,
    pub v_log_mc: f64,
    pub v_log_se: f64,
    pub n_samples: usize,
}

fn check_scale(sigma: f64, w: f64) -> Result<f64> {
    if !(sigma > 0.0 && w > 0.0 && sigma.is_finite() && w.is_finite()) {
        return Err(Error::arg(format!(
            "sigma and lengthscale must be positive, got {sigma}, {w}"
        )));
    }
    Ok(sigma / w)
}

/// `n` draws of `f(chunk_rng)` spread over fixed-size chunks, each with
/// its own substream, so the result does not depend on thread count.
fn chunked_draws<F>(n: usize, stream: RngStream, draw: F) -> Vec<f64>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync,
{
    let chunks = n.div_ceil(MC_CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = stream.substream(c as u64).rng();
            let len = MC_CHUNK.min(n - c * MC_CHUNK);
            (0..len).map(|_| draw(&mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

/// Monte Carlo moments of `log|∂f/∂x|` for a single SE layer.
pub fn mc_log_derivative_moments(
    sigma: f64,
    w: f64,
    n: usize,
    stream: RngStream,
) -> Result<DerivMomentReport> {
    let scale = check_scale(sigma, w)?;
    if n < 10_000 {
        return Err(Error::arg(format!("need at least 10^4 samples, got {n}")));
    }
    let logs = chunked_draws(n, stream, |rng| {
        let z: f64 = StandardNormal.sample(rng);
        (scale * z).abs().ln()
    });
    let m = stats::moments(&logs);
    let (m_log_paper, v_log_paper) = closed_form_log_moments(sigma, w);
    let (m_log_exact, v_log_exact) = log_abs_normal_moments(sigma, w);
    Ok(DerivMomentReport {
        sigma,
        w,
        m_log_paper,
        v_log_paper,
        m_log_exact,
        v_log_exact,
        m_log_mc: m.mean,
        m_log_se: m.mean_se,
        v_log_mc: m.variance,
        v_log_se: m.variance_se,
        n_samples: n,
    })
}

/// `n_paths` samples of `Σ_ℓ log|d_ℓ|` over `depth` independent layers.
pub fn deep_derivative_log_sum(
    sigma: f64,
    w: f64,
    depth: usize,
    n_paths: usize,
    stream: RngStream,
) -> Result<Vec<f64>> {
    let scale = check_scale(sigma, w)?;
    if depth == 0 {
        return Err(Error::arg("depth must be at least 1"));
    }
    Ok(chunked_draws(n_paths, stream, |rng| {
        (0..depth)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                (scale * z).abs().ln()
            })
            .sum()
    }))
}

/// Immediate Jacobian of a layer with `rows` outputs: independent
/// `N(0, σ²/w_j²)` entries, column `j` scaled by input `j`'s lengthscale.
pub fn sample_layer_jacobian<R: Rng + ?Sized>(
    rows: usize,
    sigma: f64,
    lengthscales: &[f64],
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if rows == 0 || lengthscales.is_empty() {
        return Err(Error::arg("Jacobian dimensions must be at least 1"));
    }
    for &w in lengthscales {
        check_scale(sigma, w)?;
    }
    // Fill row-major so the draw order is independent of nalgebra's layout.
    let cols = lengthscales.len();
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for (j, w) in lengthscales.iter().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            m[(i, j)] = z * sigma / w;
        }
    }
    Ok(m)
}

/// Shape and hyperparameters of a deep Jacobian product.
///
/// Layer 1 maps the `input_dim` inputs to `width` outputs using
/// `input_lengthscales`. Later layers see the `width` hidden outputs
/// (`hidden_lengthscales`), followed by the original inputs when
/// `input_connected`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianSpec {
    pub depth: usize,
    pub width: usize,
    pub input_dim: usize,
    pub sigma: f64,
    pub hidden_lengthscales: Vec<f64>,
    pub input_lengthscales: Vec<f64>,
    pub input_connected: bool,
}

impl JacobianSpec {
    /// Shared lengthscale everywhere, `input_dim = width`.
    pub fn isotropic(depth: usize, width: usize, sigma: f64, w: f64, input_connected: bool) -> Self {
        Self {
            depth,
            width,
            input_dim: width,
            sigma,
            hidden_lengthscales: vec![w; width],
            input_lengthscales: vec![w; width],
            input_connected,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 || self.input_dim == 0 {
            return Err(Error::arg("depth, width and input_dim must be at least 1"));
        }
        if self.hidden_lengthscales.len() != self.width {
            return Err(Error::arg(format!(
                "expected {} hidden lengthscales, got {}",
                self.width,
                self.hidden_lengthscales.len()
            )));
        }
        if self.input_lengthscales.len() != self.input_dim {
            return Err(Error::arg(format!(
                "expected {} input lengthscales, got {}",
                self.input_dim,
                self.input_lengthscales.len()
            )));
        }
        for &w in self.hidden_lengthscales.iter().chain(&self.input_lengthscales) {
            check_scale(self.sigma, w)?;
        }
        Ok(())
    }

    fn later_lengthscales(&self) -> Vec<f64> {
        let mut ls = self.hidden_lengthscales.clone();
        if self.input_connected {
            ls.extend_from_slice(&self.input_lengthscales);
        }
        ls
    }
}

/// Jacobian of the full composition, multiplied out directly.
///
/// Standard: `J^{(L)} ⋯ J^{(1)}`. Connected: `J_C ← J^{(ℓ)} [J_C; I]`.
/// Either way the result is `width × input_dim`. Long products can
/// overflow; [`spectrum_distribution`] uses a rescaled form instead.
pub fn deep_jacobian<R: Rng + ?Sized>(spec: &JacobianSpec, rng: &mut R) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let mut j = sample_layer_jacobian(spec.width, spec.sigma, &spec.input_lengthscales, rng)?;
    let later = spec.later_lengthscales();
    for _ in 1..spec.depth {
        let factor = sample_layer_jacobian(spec.width, spec.sigma, &later, rng)?;
        j = if spec.input_connected {
            let stacked = stack_identity(&j, spec.input_dim);
            factor * stacked
        } else {
            factor * j
        };
    }
    Ok(j)
}

fn stack_identity(j: &DMatrix<f64>, input_dim: usize) -> DMatrix<f64> {
    let rows = j.nrows();
    DMatrix::from_fn(rows + input_dim, input_dim, |i, c| {
        if i < rows {
            j[(i, c)]
        } else if i - rows == c {
            1.0
        } else {
            0.0
        }
    })
}

/// Singular values of one deep Jacobian draw, normalized by the largest.
///
/// The standard square case keeps the product as `Q · diag(e^a) · T` with
/// `Q` orthogonal, `T` upper triangular with unit-max rows and `a` the
/// row log-scales, re-orthogonalizing every
/// [`REORTHOGONALIZE_EVERY`] factors. Other cases carry a single global
/// log-scale. Ratios below the smallest positive double are floored there.
pub fn normalized_singular_values<R: Rng + ?Sized>(
    spec: &JacobianSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let sv = if !spec.input_connected && spec.input_dim == spec.width {
        graded_product_singular_values(spec, rng)?
    } else {
        rescaled_product_singular_values(spec, rng)?
    };
    let top = sv[0];
    if !(top.is_finite() && top > 0.0) || sv.iter().any(|s| !s.is_finite()) {
        return Err(Error::numerical(
            MODULE,
            format!("non-finite or zero singular values at depth {}", spec.depth),
        ));
    }
    Ok(sv.iter().map(|s| (s / top).clamp(f64::MIN_POSITIVE, 1.0)).collect())
}

fn graded_product_singular_values<R: Rng + ?Sized>(
    spec: &JacobianSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d = spec.width;
    let mut q = DMatrix::<f64>::identity(d, d);
    let mut tri = DMatrix::<f64>::identity(d, d);
    let mut log_scale = vec![0.0f64; d];
    let mut layer = 0;
    while layer < spec.depth {
        let block = REORTHOGONALIZE_EVERY.min(spec.depth - layer);
        let mut m = q.clone();
        for k in 0..block {
            let ls = if layer + k == 0 {
                &spec.input_lengthscales
            } else {
                &spec.hidden_lengthscales
            };
            let factor = sample_layer_jacobian(d, spec.sigma, ls, rng)?;
            m = factor * m;
        }
        layer += block;
        let block_scale = m.amax();
        if !(block_scale.is_finite() && block_scale > 0.0) {
            return Err(Error::numerical(
                MODULE,
                format!("Jacobian block overflowed before layer {layer}"),
            ));
        }
        m /= block_scale;
        let qr = QR::new(m);
        let r = qr.r();
        q = qr.q();
        // new graded triangle: rows of R · diag(e^a) · T
        let mut next = DMatrix::<f64>::zeros(d, d);
        let mut next_scale = vec![0.0f64; d];
        for i in 0..d {
            let pivot = (i..d)
                .filter(|&j| r[(i, j)] != 0.0)
                .map(|j| log_scale[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if pivot == f64::NEG_INFINITY {
                next_scale[i] = f64::NEG_INFINITY;
                continue;
            }
            for j in i..d {
                let coeff = r[(i, j)] * (log_scale[j] - pivot).exp();
                if coeff != 0.0 {
                    for c in j..d {
                        next[(i, c)] += coeff * tri[(j, c)];
                    }
                }
            }
            let row_max = (i..d).map(|c| next[(i, c)].abs()).fold(0.0, f64::max);
            if row_max > 0.0 {
                for c in i..d {
                    next[(i, c)] /= row_max;
                }
                next_scale[i] = pivot + row_max.ln() + block_scale.ln();
            } else {
                next_scale[i] = f64::NEG_INFINITY;
            }
        }
        tri = next;
        log_scale = next_scale;
    }
    let top = log_scale.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // diag(e^{a - top}) · T, transposed so the grading is by column
    let scaled = DMatrix::from_fn(d, d, |i, c| tri[(c, i)] * (log_scale[c] - top).exp());
    Ok(singular_values_jacobi(&scaled))
}

fn rescaled_product_singular_values<R: Rng + ?Sized>(
    spec: &JacobianSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut j = sample_layer_jacobian(spec.width, spec.sigma, &spec.input_lengthscales, rng)?;
    let mut log_scale = 0.0f64;
    let later = spec.later_lengthscales();
    for _ in 1..spec.depth {
        let factor = sample_layer_jacobian(spec.width, spec.sigma, &later, rng)?;
        j = if spec.input_connected {
            let hidden = factor.columns(0, spec.width);
            let direct = factor.columns(spec.width, spec.input_dim);
            hidden * &j + direct * (-log_scale).exp()
        } else {
            factor * &j
        };
        let norm = j.amax();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::numerical(MODULE, "Jacobian product lost all magnitude"));
        }
        j /= norm;
        log_scale += norm.ln();
    }
    Ok(singular_values_jacobi(&j))
}

/// Monte Carlo distribution of normalized singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSummary {
    pub depth: usize,
    pub width: usize,
    pub input_connected: bool,
    pub n_draws: usize,
    /// `(q10, q50, q90)` of `s_i / s_1` for each index `i`.
    pub quantiles: Vec<[f64; 3]>,
}

impl SpectrumSummary {
    pub fn median(&self, index: usize) -> f64 {
        self.quantiles[index][1]
    }
}

/// Raw normalized spectra of `n_draws` independent Jacobians; draw `k`
/// uses substream `k`.
pub fn spectrum_draws(spec: &JacobianSpec, n_draws: usize, stream: RngStream) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    (0..n_draws)
        .into_par_iter()
        .map(|k| normalized_singular_values(spec, &mut stream.substream(k as u64).rng()))
        .collect()
}

pub fn spectrum_distribution(spec: &JacobianSpec, n_draws: usize, stream: RngStream) -> Result<SpectrumSummary> {
    if n_draws < 100 {
        return Err(Error::arg(format!("need at least 100 draws, got {n_draws}")));
    }
    let draws = spectrum_draws(spec, n_draws, stream)?;
    let count = draws[0].len();
    let quantiles = (0..count)
        .map(|i| {
            let mut col: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            col.sort_by(f64::total_cmp);
            [
                stats::quantile_sorted(&col, 0.1),
                stats::quantile_sorted(&col, 0.5),
                stats::quantile_sorted(&col, 0.9),
            ]
        })
        .collect();
    Ok(SpectrumSummary {
        depth: spec.depth,
        width: spec.width,
        input_connected: spec.input_connected,
        n_draws,
        quantiles,
    })
}

/// Draw normals without going through nalgebra, for callers that only
/// need scalar chains.
pub fn scalar_chain_product<R: Rng + ?Sized>(sigma: f64, w: f64, depth: usize, rng: &mut R) -> f64 {
    standard_normals(rng, depth)
        .into_iter()
        .map(|z| z * sigma / w)
        .product()
}
