//! Kernel specifications, pointwise evaluation and Gram matrices.
//!
//! Every variant is evaluated on a canonically ordered pair (lexicographic
//! on coordinates), so `eval(x, x')` and `eval(x', x)` are bit-identical.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::deep_kernel;
use crate::dropout;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelVariant {
    /// Isotropic squared-exponential: one lengthscale shared by all dimensions.
    SquaredExp,
    /// Squared-exponential with a lengthscale per dimension.
    ProductSquaredExp,
    Constant,
    WhiteNoise,
    /// `depth` SE compositions on top of a unit-variance product SE base.
    ComposedSE,
    /// Input-connected composition recurrence, `depth` steps.
    InputConnectedDeep,
    /// Infinite-depth limit of the input-connected recurrence.
    FixedPointConnected,
    /// Input-dropout mixture kernel over one-dimensional SE factors.
    DropoutAdditive,
}

impl KernelVariant {
    pub const ALL: [KernelVariant; 8] = [
        KernelVariant::SquaredExp,
        KernelVariant::ProductSquaredExp,
        KernelVariant::Constant,
        KernelVariant::WhiteNoise,
        KernelVariant::ComposedSE,
        KernelVariant::InputConnectedDeep,
        KernelVariant::FixedPointConnected,
        KernelVariant::DropoutAdditive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelVariant::SquaredExp => "SquaredExp",
            KernelVariant::ProductSquaredExp => "ProductSquaredExp",
            KernelVariant::Constant => "Constant",
            KernelVariant::WhiteNoise => "WhiteNoise",
            KernelVariant::ComposedSE => "ComposedSE",
            KernelVariant::InputConnectedDeep => "InputConnectedDeep",
            KernelVariant::FixedPointConnected => "FixedPointConnected",
            KernelVariant::DropoutAdditive => "DropoutAdditive",
        }
    }

    /// Whether `eval` depends on `x - x'` only.
    pub fn is_stationary(self) -> bool {
        !matches!(self, KernelVariant::WhiteNoise)
    }
}

impl fmt::Display for KernelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelVariant::ALL
            .iter()
            .copied()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::arg(format!("unknown kernel variant `{s}`")))
    }
}

/// Declarative kernel description carrying all hyperparameters.
///
/// Deep variants (`ComposedSE`, `InputConnectedDeep`, `FixedPointConnected`)
/// use a unit-variance product SE base on inputs scaled by `lengthscales`
/// and multiply the result by `variance`. `DropoutAdditive` additionally
/// needs `keep_prob`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub variant: KernelVariant,
    pub variance: f64,
    pub lengthscales: Vec<f64>,
    pub depth: usize,
    pub keep_prob: Option<f64>,
}

impl KernelSpec {
    pub fn squared_exp(variance: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::build(KernelVariant::SquaredExp, variance, vec![lengthscale; dim], 0, None)
    }

    pub fn product_se(variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        Self::build(KernelVariant::ProductSquaredExp, variance, lengthscales, 0, None)
    }

    pub fn constant(variance: f64, dim: usize) -> Result<Self> {
        Self::build(KernelVariant::Constant, variance, vec![1.0; dim], 0, None)
    }

    pub fn white_noise(variance: f64, dim: usize) -> Result<Self> {
        Self::build(KernelVariant::WhiteNoise, variance, vec![1.0; dim], 0, None)
    }

    pub fn composed_se(variance: f64, lengthscales: Vec<f64>, depth: usize) -> Result<Self> {
        Self::build(KernelVariant::ComposedSE, variance, lengthscales, depth, None)
    }

    pub fn input_connected(variance: f64, lengthscales: Vec<f64>, depth: usize) -> Result<Self> {
        Self::build(KernelVariant::InputConnectedDeep, variance, lengthscales, depth, None)
    }

    pub fn fixed_point(variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        Self::build(KernelVariant::FixedPointConnected, variance, lengthscales, 0, None)
    }

    pub fn dropout_additive(variance: f64, lengthscales: Vec<f64>, keep_prob: f64) -> Result<Self> {
        Self::build(
            KernelVariant::DropoutAdditive,
            variance,
            lengthscales,
            0,
            Some(keep_prob),
        )
    }

    fn build(
        variant: KernelVariant,
        variance: f64,
        lengthscales: Vec<f64>,
        depth: usize,
        keep_prob: Option<f64>,
    ) -> Result<Self> {
        let spec = Self {
            variant,
            variance,
            lengthscales,
            depth,
            keep_prob,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(Error::arg(format!(
                "kernel variance must be positive and finite, got {}",
                self.variance
            )));
        }
        if self.lengthscales.is_empty() {
            return Err(Error::arg("kernel dimension must be at least 1"));
        }
        if let Some(w) = self
            .lengthscales
            .iter()
            .find(|w| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::arg(format!(
                "lengthscales must be positive and finite, got {w}"
            )));
        }
        if self.variant == KernelVariant::SquaredExp
            && self.lengthscales.iter().any(|w| *w != self.lengthscales[0])
        {
            return Err(Error::arg(
                "SquaredExp is isotropic; use ProductSquaredExp for per-dimension lengthscales",
            ));
        }
        match (self.variant, self.keep_prob) {
            (KernelVariant::DropoutAdditive, Some(p)) if p > 0.0 && p <= 1.0 => {}
            (KernelVariant::DropoutAdditive, Some(p)) => {
                return Err(Error::arg(format!("keep probability must lie in (0, 1], got {p}")))
            }
            (KernelVariant::DropoutAdditive, None) => {
                return Err(Error::arg("DropoutAdditive requires a keep probability"))
            }
            (_, Some(_)) => {
                return Err(Error::arg(format!(
                    "keep probability is only meaningful for DropoutAdditive, not {}",
                    self.variant
                )))
            }
            (_, None) => {}
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Value of `eval(x, x)` for variants whose diagonal is constant.
    pub fn diagonal(&self) -> f64 {
        self.variance
    }

    pub fn eval(&self, x: &[f64], xp: &[f64]) -> Result<f64> {
        eval_kernel(self, x, xp)
    }

    /// Serialize as a `key=value` block.
    pub fn to_kv(&self) -> String {
        let ls: Vec<String> = self.lengthscales.iter().map(|w| w.to_string()).collect();
        let mut out = format!(
            "variant={}\nvariance={}\nlengthscales={}\ndepth={}\n",
            self.variant,
            self.variance,
            ls.join(","),
            self.depth
        );
        if let Some(p) = self.keep_prob {
            out.push_str(&format!("p={p}\n"));
        }
        out
    }

    /// Parse a `key=value` block. Blank lines and `#` comments are skipped;
    /// unknown keys are rejected.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut variant = None;
        let mut variance = None;
        let mut lengthscales = None;
        let mut depth = 0usize;
        let mut keep_prob = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::arg(format!("expected key=value, got `{line}`")))?;
            let value = value.trim();
            match key.trim() {
                "variant" => variant = Some(value.parse::<KernelVariant>()?),
                "variance" => variance = Some(parse_f64(value)?),
                "lengthscales" => {
                    lengthscales = Some(
                        value
                            .split(',')
                            .map(|s| parse_f64(s.trim()))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "depth" => {
                    depth = value
                        .parse()
                        .map_err(|_| Error::arg(format!("invalid depth `{value}`")))?
                }
                "p" => keep_prob = Some(parse_f64(value)?),
                other => return Err(Error::arg(format!("unknown kernel key `{other}`"))),
            }
        }
        let spec = KernelSpec {
            variant: variant.ok_or_else(|| Error::arg("missing `variant`"))?,
            variance: variance.ok_or_else(|| Error::arg("missing `variance`"))?,
            lengthscales: lengthscales.ok_or_else(|| Error::arg("missing `lengthscales`"))?,
            depth,
            keep_prob,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::arg(format!("invalid number `{s}`")))
}

/// Ordered list of `D`-dimensional points stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("point dimension must be at least 1"));
        }
        if coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::arg(format!(
                "{} coordinates do not form a non-empty set of {dim}-dimensional points",
                coords.len()
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::arg("all points must share the same dimension"));
        }
        Self::new(dim, rows.concat())
    }

    /// `n` evenly spaced points on `[lo, hi]`.
    pub fn grid_1d(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("grid needs at least one point"));
        }
        let coords = if n == 1 {
            vec![lo]
        } else {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| lo + step * i as f64).collect()
        };
        Self::new(1, coords)
    }

    /// `n × n` lattice on `[lo, hi]²`, row-major with the first coordinate
    /// varying fastest.
    pub fn lattice_2d(lo: f64, hi: f64, n: usize) -> Result<Self> {
        let axis = Self::grid_1d(lo, hi, n)?.coords;
        let mut coords = Vec::with_capacity(2 * n * n);
        for &y in &axis {
            for &x in &axis {
                coords.push(x);
                coords.push(y);
            }
        }
        Self::new(2, coords)
    }

    /// `n` i.i.d. standard-normal points in `dim` dimensions.
    pub fn gaussian_cloud(n: usize, dim: usize, stream: crate::RngStream) -> Result<Self> {
        let mut rng = stream.rng();
        Self::new(dim, crate::rng::standard_normals(&mut rng, n * dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Append the columns of `other` to every point.
    pub fn concat_columns(&self, other: &PointSet) -> Result<PointSet> {
        if self.len() != other.len() {
            return Err(Error::arg("cannot concatenate point sets of different sizes"));
        }
        let dim = self.dim + other.dim;
        let mut coords = Vec::with_capacity(dim * self.len());
        for (a, b) in self.iter().zip(other.iter()) {
            coords.extend_from_slice(a);
            coords.extend_from_slice(b);
        }
        PointSet::new(dim, coords)
    }
}

fn canonical<'a>(x: &'a [f64], xp: &'a [f64]) -> (&'a [f64], &'a [f64]) {
    for (a, b) in x.iter().zip(xp) {
        match a.total_cmp(b) {
            Ordering::Less => return (x, xp),
            Ordering::Greater => return (xp, x),
            Ordering::Equal => {}
        }
    }
    (x, xp)
}

/// Squared distance after scaling each coordinate by its lengthscale.
pub(crate) fn scaled_sq_dist(x: &[f64], xp: &[f64], lengthscales: &[f64]) -> f64 {
    x.iter()
        .zip(xp)
        .zip(lengthscales)
        .map(|((a, b), w)| {
            let d = (a - b) / w;
            d * d
        })
        .sum()
}

/// Per-dimension unit-variance SE factors `exp(-(x_d - x'_d)^2 / (2 w_d^2))`.
pub(crate) fn se_factors(x: &[f64], xp: &[f64], lengthscales: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(xp)
        .zip(lengthscales)
        .map(|((a, b), w)| {
            let d = (a - b) / w;
            (-0.5 * d * d).exp()
        })
        .collect()
}

pub fn eval_kernel(spec: &KernelSpec, x: &[f64], xp: &[f64]) -> Result<f64> {
    let dim = spec.dim();
    if x.len() != dim || xp.len() != dim {
        return Err(Error::arg(format!(
            "kernel of dimension {dim} evaluated at points of dimension {} and {}",
            x.len(),
            xp.len()
        )));
    }
    if x.iter().chain(xp).any(|v| !v.is_finite()) {
        return Err(Error::arg("kernel inputs must be finite"));
    }
    let (a, b) = canonical(x, xp);
    let w = &spec.lengthscales;
    let value = match spec.variant {
        KernelVariant::SquaredExp | KernelVariant::ProductSquaredExp => {
            spec.variance * (-0.5 * scaled_sq_dist(a, b, w)).exp()
        }
        KernelVariant::Constant => spec.variance,
        KernelVariant::WhiteNoise => {
            if a == b {
                spec.variance
            } else {
                0.0
            }
        }
        KernelVariant::ComposedSE => {
            let base = (-0.5 * scaled_sq_dist(a, b, w)).exp();
            spec.variance * deep_kernel::iterate_stationary_chain(base, spec.depth)?
        }
        KernelVariant::InputConnectedDeep => {
            let sq = scaled_sq_dist(a, b, w);
            let base = (-0.5 * sq).exp();
            spec.variance * deep_kernel::iterate_connected_chain(base, sq, spec.depth)?
        }
        KernelVariant::FixedPointConnected => {
            let r = scaled_sq_dist(a, b, w).sqrt();
            spec.variance * deep_kernel::fixed_point_kernel(&deep_kernel::FixedPointQuery::new(r))?
        }
        KernelVariant::DropoutAdditive => {
            let p = spec.keep_prob.expect("validated keep probability");
            spec.variance * dropout::dropout_input_kernel(&se_factors(a, b, w), p)?
        }
    };
    Ok(value)
}

/// Gram matrix `M[i][j] = eval_kernel(spec, p_i, p_j)`; only the upper
/// triangle is evaluated and mirrored, so the result is exactly symmetric.
pub fn kernel_matrix(spec: &KernelSpec, pts: &PointSet) -> Result<DMatrix<f64>> {
    if pts.dim() != spec.dim() {
        return Err(Error::arg(format!(
            "point set dimension {} does not match kernel dimension {}",
            pts.dim(),
            spec.dim()
        )));
    }
    let n = pts.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = eval_kernel(spec, pts.point(i), pts.point(j))?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Covariance between `∂f/∂x_{d1}` and `∂f/∂x_{d2}` at a common point for a
/// product SE prior: `σ²/w_{d1}²` on the diagonal, zero elsewhere.
pub fn derivative_covariance(spec: &KernelSpec, d1: usize, d2: usize) -> Result<f64> {
    if !matches!(
        spec.variant,
        KernelVariant::SquaredExp | KernelVariant::ProductSquaredExp
    ) {
        return Err(Error::arg(format!(
            "derivative covariance is defined for SE product kernels, not {}",
            spec.variant
        )));
    }
    let dim = spec.dim();
    if d1 >= dim || d2 >= dim {
        return Err(Error::arg(format!(
            "dimension index ({d1}, {d2}) out of range for {dim}-dimensional kernel"
        )));
    }
    if d1 == d2 {
        let w = spec.lengthscales[d1];
        Ok(spec.variance / (w * w))
    } else {
        Ok(0.0)
    }
}
