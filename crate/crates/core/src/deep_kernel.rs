//! Kernel composition: SE applied on top of another kernel's feature map,
//! repeated composition, the input-connected recurrence and its
//! infinite-depth fixed point.
//!
//! The outer SE always has unit variance and unit lengthscale, so
//! `(k_SE ∘ k)(x, x') = exp(-½ [k(x,x) - 2k(x,x') + k(x',x')])`.

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

const MODULE: &str = "deep-kernel";
const NEGATIVE_DISTANCE_TOL: f64 = 1e-12;
const NORMALIZATION_TOL: f64 = 1e-12;

/// SE kernel evaluated on the feature-space distance implied by `k`.
pub fn compose_se(k_xx: f64, k_xxp: f64, k_xpxp: f64) -> Result<f64> {
    compose_se_with_input(k_xx, k_xxp, k_xpxp, 0.0)
}

/// As [`compose_se`], with an extra squared input distance added to the
/// feature distance (the input-connected layer).
fn compose_se_with_input(k_xx: f64, k_xxp: f64, k_xpxp: f64, input_sq: f64) -> Result<f64> {
    if !(k_xx.is_finite() && k_xxp.is_finite() && k_xpxp.is_finite() && input_sq.is_finite()) {
        return Err(Error::arg("kernel values must be finite"));
    }
    if k_xx < 0.0 || k_xpxp < 0.0 {
        return Err(Error::arg(format!(
            "kernel diagonal must be nonnegative, got k(x,x)={k_xx}, k(x',x')={k_xpxp}"
        )));
    }
    let dist = k_xx - 2.0 * k_xxp + k_xpxp;
    if dist < -NEGATIVE_DISTANCE_TOL {
        return Err(Error::numerical(
            MODULE,
            format!("implied squared feature distance {dist:e} is negative; base kernel is not a valid covariance"),
        ));
    }
    Ok((-0.5 * (dist.max(0.0) + input_sq)).exp())
}

/// A base kernel with `depth` SE compositions applied on top.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedKernelChain {
    pub base: KernelSpec,
    pub depth: usize,
    pub input_connected: bool,
}

impl ComposedKernelChain {
    pub fn new(base: KernelSpec, depth: usize, input_connected: bool) -> Result<Self> {
        base.validate()?;
        Ok(Self {
            base,
            depth,
            input_connected,
        })
    }

    fn base_triple(&self, x: &[f64], xp: &[f64]) -> Result<(f64, f64, f64)> {
        let kxx = self.base.eval(x, x)?;
        let kxpxp = self.base.eval(xp, xp)?;
        for k in [kxx, kxpxp] {
            if (k - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::arg(format!(
                    "composition requires a normalized base kernel (k(x,x) = 1), got {k}"
                )));
            }
        }
        Ok((kxx, self.base.eval(x, xp)?, kxpxp))
    }
}

/// `k^{(L)}(x, x')` for the standard (non-connected) composition.
pub fn deep_kernel_chain(chain: &ComposedKernelChain, x: &[f64], xp: &[f64]) -> Result<f64> {
    if chain.input_connected {
        return Err(Error::arg(
            "deep_kernel_chain expects input_connected = false; use input_connected_deep_kernel",
        ));
    }
    let (mut kxx, mut kxy, mut kyy) = chain.base_triple(x, xp)?;
    for _ in 0..chain.depth {
        let next = (
            compose_se(kxx, kxx, kxx)?,
            compose_se(kxx, kxy, kyy)?,
            compose_se(kyy, kyy, kyy)?,
        );
        (kxx, kxy, kyy) = next;
    }
    Ok(kxy)
}

/// `k_C^{(L)}(x, x')` for the input-connected recurrence.
pub fn input_connected_deep_kernel(
    chain: &ComposedKernelChain,
    x: &[f64],
    xp: &[f64],
) -> Result<f64> {
    if !chain.input_connected {
        return Err(Error::arg(
            "input_connected_deep_kernel expects input_connected = true",
        ));
    }
    let (mut kxx, mut kxy, mut kyy) = chain.base_triple(x, xp)?;
    let input_sq: f64 = x.iter().zip(xp).map(|(a, b)| (a - b) * (a - b)).sum();
    for _ in 0..chain.depth {
        let next = (
            compose_se_with_input(kxx, kxx, kxx, 0.0)?,
            compose_se_with_input(kxx, kxy, kyy, input_sq)?,
            compose_se_with_input(kyy, kyy, kyy, 0.0)?,
        );
        (kxx, kxy, kyy) = next;
    }
    Ok(kxy)
}

/// Standard chain from a normalized stationary base value.
pub(crate) fn iterate_stationary_chain(base: f64, depth: usize) -> Result<f64> {
    (0..depth).try_fold(base, |k, _| compose_se(1.0, k, 1.0))
}

/// Input-connected chain from a normalized stationary base value and the
/// squared input distance.
pub(crate) fn iterate_connected_chain(base: f64, input_sq: f64, depth: usize) -> Result<f64> {
    (0..depth).try_fold(base, |k, _| compose_se_with_input(1.0, k, 1.0, input_sq))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointQuery {
    pub r: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl FixedPointQuery {
    pub fn new(r: f64) -> Self {
        Self {
            r,
            tol: 1e-12,
            max_iter: 200,
        }
    }
}

/// `k - log k - (1 + r²/2)`, evaluated without cancellation near `k = 1`.
pub fn fixed_point_residual(k: f64, r: f64) -> f64 {
    if k > 0.5 {
        let e = k - 1.0;
        e - e.ln_1p() - 0.5 * r * r
    } else {
        k - k.ln() - (1.0 + 0.5 * r * r)
    }
}

/// Infinite-depth input-connected kernel at distance `r`: the root in
/// `(0, 1]` of `k - log k = 1 + r²/2`, i.e. `k = -W₀(-exp(-(1 + r²/2)))`.
///
/// `W₀` is found by Halley iteration started at `z` itself. Near `r = 0`
/// the root approaches the branch point where Halley slows down; if the
/// residual fails to halve within five iterations the root is bracketed
/// and bisected instead.
pub fn fixed_point_kernel(q: &FixedPointQuery) -> Result<f64> {
    let r = q.r;
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::arg(format!("distance must be finite and nonnegative, got {r}")));
    }
    if !(q.tol > 0.0) {
        return Err(Error::arg("tolerance must be positive"));
    }
    if r == 0.0 {
        return Ok(1.0);
    }
    let c = 1.0 + 0.5 * r * r;
    let z = -(-c).exp();
    let residual = |w: f64| fixed_point_residual(-w, r).abs();

    let mut w = z;
    let mut res = residual(w);
    let mut best_since = res;
    let mut stalled = 0usize;
    let mut converged = res <= q.tol;
    let mut iter = 0;
    while !converged && iter < q.max_iter {
        iter += 1;
        let ew = w.exp();
        let f = w * ew - z;
        let fp = ew * (w + 1.0);
        if fp <= 0.0 {
            break;
        }
        let step = f / (fp - (w + 2.0) * f / (2.0 * (w + 1.0)));
        let next = w - step;
        if !next.is_finite() || next <= -1.0 || next >= 0.0 {
            break;
        }
        w = next;
        res = residual(w);
        if res <= q.tol {
            converged = true;
            // one polishing step; Halley is cubic so this settles the last bits
            let ew = w.exp();
            let f = w * ew - z;
            let fp = ew * (w + 1.0);
            if fp > 0.0 {
                let polished = w - f / (fp - (w + 2.0) * f / (2.0 * (w + 1.0)));
                if polished.is_finite() && polished > -1.0 && polished < 0.0 && residual(polished) <= res {
                    w = polished;
                }
            }
            break;
        }
        if res <= 0.5 * best_since {
            best_since = res;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 5 {
                break;
            }
        }
    }
    if converged {
        return Ok(-w);
    }

    let k = bisect_fixed_point(r, c);
    let res = fixed_point_residual(k, r).abs();
    if res <= q.tol {
        Ok(k)
    } else {
        Err(Error::numerical(
            MODULE,
            format!("fixed-point kernel did not converge at r = {r}: final residual {res:e}"),
        ))
    }
}

/// Bisection on the decreasing map `k ↦ k - log k` over `[e^{-c}, 1]`.
pub(crate) fn bisect_fixed_point(r: f64, c: f64) -> f64 {
    let mut lo = (-c).exp();
    let mut hi = 1.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if fixed_point_residual(mid, r) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (rl, rh) = (fixed_point_residual(lo, r).abs(), fixed_point_residual(hi, r).abs());
    if rl <= rh {
        lo
    } else {
        hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    OutputConnected,
    FullyConnected,
}

/// Infinite-depth limit of the output-connected and fully-connected
/// composition architectures: the white-noise kernel `δ(x, x')`.
pub fn alternative_architecture_limit(_arch: Architecture, x: &[f64], xp: &[f64]) -> Result<f64> {
    if x.len() != xp.len() {
        return Err(Error::arg(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            xp.len()
        )));
    }
    Ok(if x == xp { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn se_chain(depth: usize, connected: bool) -> ComposedKernelChain {
        ComposedKernelChain::new(KernelSpec::squared_exp(1.0, 1.0, 1).unwrap(), depth, connected)
            .unwrap()
    }

    #[test]
    fn compose_examples() {
        assert_eq!(compose_se(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(compose_se(1.0, 0.0, 1.0).unwrap(), (-1.0f64).exp(), max_relative = 1e-15);
        let e = (-0.5f64).exp();
        let v = compose_se(1.0, e, 1.0).unwrap();
        assert_relative_eq!(v, (-(1.0 - e)).exp(), max_relative = 1e-15);
        assert!((v - 0.67471).abs() < 1e-5);
    }

    #[test]
    fn compose_clamps_and_rejects() {
        assert_eq!(compose_se(1.0, 1.0 + 4e-13, 1.0).unwrap(), 1.0);
        assert!(matches!(compose_se(1.0, 1.1, 1.0), Err(Error::Numerical { .. })));
        assert!(compose_se(f64::NAN, 0.0, 1.0).unwrap_err().is_argument());
    }

    #[test]
    fn chain_examples() {
        assert_relative_eq!(
            deep_kernel_chain(&se_chain(0, false), &[0.0], &[1.0]).unwrap(),
            (-0.5f64).exp()
        );
        let v = deep_kernel_chain(&se_chain(1, false), &[0.0], &[1.0]).unwrap();
        assert_relative_eq!(v, compose_se(1.0, (-0.5f64).exp(), 1.0).unwrap());
        let deep = deep_kernel_chain(&se_chain(1000, false), &[0.0], &[3.0]).unwrap();
        assert!((deep - 1.0).abs() < 0.01);
    }

    #[test]
    fn chain_matches_scalar_iteration() {
        // eps_{n+1} = 1 - exp(-eps_n), eps_0 = 1 - k_base
        let r = 2.0f64;
        let mut eps = 1.0 - (-0.5 * r * r).exp();
        for _ in 0..50 {
            eps = 1.0 - (-eps).exp();
        }
        let v = deep_kernel_chain(&se_chain(50, false), &[0.0], &[r]).unwrap();
        assert!((v - (1.0 - eps)).abs() < 1e-14);
        // eps_n ~ 2/n
        assert!((eps * 50.0 - 2.0).abs() < 0.5);
    }

    #[test]
    fn chain_rejects_unnormalized_base() {
        let chain =
            ComposedKernelChain::new(KernelSpec::squared_exp(2.0, 1.0, 1).unwrap(), 2, false).unwrap();
        assert!(deep_kernel_chain(&chain, &[0.0], &[1.0]).unwrap_err().is_argument());
        assert!(deep_kernel_chain(&se_chain(1, true), &[0.0], &[1.0]).is_err());
        assert!(input_connected_deep_kernel(&se_chain(1, false), &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn connected_examples() {
        for depth in [0, 1, 7, 100] {
            assert_eq!(input_connected_deep_kernel(&se_chain(depth, true), &[0.4], &[0.4]).unwrap(), 1.0);
        }
        let v = input_connected_deep_kernel(&se_chain(1, true), &[0.0], &[1.0]).unwrap();
        assert_relative_eq!(v, (-1.5 + (-0.5f64).exp()).exp(), max_relative = 1e-14);
        assert!((v - 0.40924).abs() < 1e-5);
    }

    #[test]
    fn fixed_point_examples() {
        assert_eq!(fixed_point_kernel(&FixedPointQuery::new(0.0)).unwrap(), 1.0);
        let k = fixed_point_kernel(&FixedPointQuery::new(1.0)).unwrap();
        assert!((k - k.ln() - 1.5).abs() < 1e-12);
        assert!((k - 0.30171).abs() < 1e-5, "{k}");
        let k10 = fixed_point_kernel(&FixedPointQuery::new(10.0)).unwrap();
        assert!(k10 < (-(1.0 + 50.0) + 1.0f64).exp());
        assert!(fixed_point_kernel(&FixedPointQuery::new(-1.0)).unwrap_err().is_argument());
    }

    #[test]
    fn fixed_point_near_branch_point() {
        for r in [1e-8, 1e-5, 1e-3, 0.05] {
            let k = fixed_point_kernel(&FixedPointQuery::new(r)).unwrap();
            assert!(fixed_point_residual(k, r).abs() < 1e-12, "r={r}");
            assert!(k < 1.0 && k > 0.0);
        }
    }

    #[test]
    fn white_noise_limit() {
        for arch in [Architecture::OutputConnected, Architecture::FullyConnected] {
            assert_eq!(alternative_architecture_limit(arch, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
            assert_eq!(alternative_architecture_limit(arch, &[1.0, 2.0], &[1.0, 2.5]).unwrap(), 0.0);
            assert!(alternative_architecture_limit(arch, &[1.0], &[1.0, 2.0]).is_err());
        }
    }
}
