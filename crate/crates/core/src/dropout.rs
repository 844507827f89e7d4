//! Dropout on GP priors.
//!
//! Hidden-unit dropout only rescales weight variance. Input dropout turns a
//! product kernel into a mixture of `2^D` GPs, one per subset of kept
//! dimensions, whose covariance is `Σ_r P(r) Π_d k_d^{r_d} = Π_d [(1-p) + p k_d]`.
//!
//! Throughout, `p` is the probability that a unit or dimension is KEPT.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, KernelVariant, PointSet};
use crate::rng::RngStream;
use crate::sampler::factor_gp;

/// Largest dimension accepted by the `2^D` enumeration.
pub const BRUTE_FORCE_MAX_DIM: usize = 25;

/// Keep probability for a given drop probability.
pub fn keep_from_drop(drop_prob: f64) -> f64 {
    1.0 - drop_prob
}

/// Weight variance after dropping hidden units: `p σ_w²`, or `σ_w²` when
/// survivors are divided by `√p`.
pub fn dropout_hidden_variance(p: f64, sigma_w2: f64, rescale: bool) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::arg(format!("keep probability must lie in (0, 1], got {p}")));
    }
    if !(sigma_w2 > 0.0 && sigma_w2.is_finite()) {
        return Err(Error::arg("weight variance must be positive"));
    }
    Ok(if rescale { sigma_w2 } else { p * sigma_w2 })
}

fn check_inputs(k_values: &[f64], p: f64) -> Result<()> {
    if k_values.is_empty() {
        return Err(Error::arg("need at least one dimension"));
    }
    if k_values.iter().any(|k| !k.is_finite()) {
        return Err(Error::arg("kernel values must be finite"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::arg(format!("keep probability must lie in (0, 1], got {p}")));
    }
    Ok(())
}

/// Mixture covariance by enumerating every keep-mask.
pub fn dropout_input_kernel_bruteforce(k_values: &[f64], p: f64) -> Result<f64> {
    check_inputs(k_values, p)?;
    let d = k_values.len();
    if d > BRUTE_FORCE_MAX_DIM {
        return Err(Error::arg(format!(
            "enumeration over 2^{d} masks exceeds the limit of 2^{BRUTE_FORCE_MAX_DIM}"
        )));
    }
    let mut total = 0.0;
    for mask in 0u64..(1u64 << d) {
        let mut term = 1.0;
        for (i, k) in k_values.iter().enumerate() {
            if mask >> i & 1 == 1 {
                term *= p * k;
            } else {
                term *= 1.0 - p;
            }
        }
        total += term;
    }
    Ok(total)
}

/// Mixture covariance via the product form, O(D).
pub fn dropout_input_kernel(k_values: &[f64], p: f64) -> Result<f64> {
    check_inputs(k_values, p)?;
    Ok(k_values.iter().map(|k| (1.0 - p) + p * k).product())
}

/// `e_0..e_D` of `k_1..k_D`, the coefficients of `Π_d (1 + k_d t)`.
fn elementary_symmetric(k_values: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; k_values.len() + 1];
    e[0] = 1.0;
    for (n, &k) in k_values.iter().enumerate() {
        for j in (1..=n + 1).rev() {
            e[j] += k * e[j - 1];
        }
    }
    e
}

/// Elementary symmetric polynomial `e_order(k_1..k_D)`: the order-`order`
/// additive interaction term.
pub fn additive_order_term(k_values: &[f64], order: usize) -> Result<f64> {
    if order > k_values.len() {
        return Err(Error::arg(format!(
            "order {order} exceeds dimension {}",
            k_values.len()
        )));
    }
    Ok(elementary_symmetric(k_values)[order])
}

/// `Σ_d p^d (1-p)^{D-d} e_d(k)`: the mixture covariance assembled from
/// additive orders.
pub fn order_decomposition(k_values: &[f64], p: f64) -> Result<f64> {
    check_inputs(k_values, p)?;
    let d = k_values.len();
    let e = elementary_symmetric(k_values);
    Ok((0..=d)
        .map(|order| p.powi(order as i32) * (1.0 - p).powi((d - order) as i32) * e[order])
        .sum())
}

/// Input-dropout prior over a normalized product of one-dimensional kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutInputKernel {
    pub base_kernels: Vec<KernelSpec>,
    pub p: f64,
}

impl DropoutInputKernel {
    pub fn new(base_kernels: Vec<KernelSpec>, p: f64) -> Result<Self> {
        if base_kernels.is_empty() {
            return Err(Error::arg("need at least one base kernel"));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::arg(format!("dropout keep probability must lie in (0, 1), got {p}")));
        }
        for k in &base_kernels {
            if k.dim() != 1 {
                return Err(Error::arg("base kernels must be one-dimensional"));
            }
            if (k.eval(&[0.0], &[0.0])? - 1.0).abs() > 1e-12 {
                return Err(Error::arg("base kernels must be normalized so k(x, x) = 1"));
            }
        }
        Ok(Self { base_kernels, p })
    }

    /// Unit-variance SE factors with the given lengthscales.
    pub fn squared_exp(lengthscales: &[f64], p: f64) -> Result<Self> {
        let bases = lengthscales
            .iter()
            .map(|&w| KernelSpec::squared_exp(1.0, w, 1))
            .collect::<Result<Vec<_>>>()?;
        Self::new(bases, p)
    }

    pub fn dim(&self) -> usize {
        self.base_kernels.len()
    }

    pub fn factor_values(&self, x: &[f64], xp: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() || xp.len() != self.dim() {
            return Err(Error::arg("point dimension does not match kernel"));
        }
        self.base_kernels
            .iter()
            .enumerate()
            .map(|(d, k)| k.eval(&x[d..=d], &xp[d..=d]))
            .collect()
    }

    pub fn eval(&self, x: &[f64], xp: &[f64]) -> Result<f64> {
        dropout_input_kernel(&self.factor_values(x, xp)?, self.p)
    }

    /// Product kernel over the kept dimensions; the constant kernel when
    /// nothing is kept.
    pub fn conditional_kernel(&self, mask: &[bool]) -> Result<KernelSpec> {
        if mask.len() != self.dim() {
            return Err(Error::arg("mask length does not match dimension"));
        }
        let mut ls = Vec::with_capacity(self.dim());
        for (k, &keep) in self.base_kernels.iter().zip(mask) {
            if !keep {
                ls.push(f64::INFINITY);
                continue;
            }
            match k.variant {
                KernelVariant::SquaredExp | KernelVariant::ProductSquaredExp => ls.push(k.lengthscales[0]),
                other => {
                    return Err(Error::arg(format!(
                        "mixture sampling supports SE base kernels, not {other}"
                    )))
                }
            }
        }
        if ls.iter().all(|w| w.is_infinite()) {
            return KernelSpec::constant(1.0, self.dim());
        }
        // a dropped dimension has infinite lengthscale: its factor is 1
        KernelSpec::product_se(1.0, ls.into_iter().map(|w| if w.is_infinite() { f64::MAX } else { w }).collect())
    }
}

/// Draw a keep-mask from `rng`.
pub fn sample_mask<R: Rng + ?Sized>(d: usize, p: f64, rng: &mut R) -> Vec<bool> {
    (0..d).map(|_| rng.random::<f64>() < p).collect()
}

/// One function from the input-dropout mixture: draw the keep-mask, then a
/// GP with the product kernel over kept dimensions.
pub fn sample_dropout_mixture(kernel: &DropoutInputKernel, pts: &PointSet, stream: RngStream) -> Result<(Vec<bool>, Vec<f64>)> {
    if pts.dim() != kernel.dim() {
        return Err(Error::arg("point dimension does not match kernel"));
    }
    let mut rng = stream.rng();
    let mask = sample_mask(kernel.dim(), kernel.p, &mut rng);
    let spec = kernel.conditional_kernel(&mask)?;
    let factor = factor_gp(&spec, pts)?;
    Ok((mask, factor.draw(&mut rng)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LengthscaleView {
    Finite(f64),
    Infinite,
}

/// Per-dimension lengthscales under a keep-mask: dropped dimensions have an
/// infinite lengthscale.
pub fn spike_slab_lengthscale_view(kernel: &DropoutInputKernel, mask: &[bool]) -> Result<Vec<LengthscaleView>> {
    if mask.len() != kernel.dim() {
        return Err(Error::arg("mask length does not match dimension"));
    }
    kernel
        .base_kernels
        .iter()
        .zip(mask)
        .map(|(k, &keep)| match k.variant {
            KernelVariant::SquaredExp | KernelVariant::ProductSquaredExp => Ok(if keep {
                LengthscaleView::Finite(k.lengthscales[0])
            } else {
                LengthscaleView::Infinite
            }),
            other => Err(Error::arg(format!(
                "{other} is not a function of a lengthscale-scaled distance"
            ))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hidden_variance() {
        assert_eq!(dropout_hidden_variance(1.0, 3.0, false).unwrap(), 3.0);
        assert_eq!(dropout_hidden_variance(1.0, 3.0, true).unwrap(), 3.0);
        assert_eq!(dropout_hidden_variance(0.5, 2.0, false).unwrap(), 1.0);
        assert_eq!(dropout_hidden_variance(0.5, 2.0, true).unwrap(), 2.0);
        assert!(dropout_hidden_variance(0.0, 2.0, true).is_err());
        assert!(dropout_hidden_variance(1.5, 2.0, true).is_err());
    }

    #[test]
    fn brute_force_examples() {
        assert!((dropout_input_kernel_bruteforce(&[0.6], 0.5).unwrap() - 0.8).abs() < 1e-15);
        for p in [0.1, 0.5, 0.9] {
            assert!((dropout_input_kernel_bruteforce(&[1.0; 3], p).unwrap() - 1.0).abs() < 1e-15);
        }
        let v = dropout_input_kernel_bruteforce(&[0.5; 3], 0.5).unwrap();
        assert!((v - 0.421875).abs() < 1e-15);
        assert!(dropout_input_kernel_bruteforce(&[0.5; 26], 0.5).is_err());
    }

    #[test]
    fn product_form_examples() {
        assert!((dropout_input_kernel(&[0.6], 0.5).unwrap() - 0.8).abs() < 1e-15);
        assert!((dropout_input_kernel(&[0.5; 3], 0.5).unwrap() - 0.421875).abs() < 1e-15);
        let k = [0.3, 0.7, 0.9];
        assert!((dropout_input_kernel(&k, 1.0).unwrap() - 0.3 * 0.7 * 0.9).abs() < 1e-15);
    }

    #[test]
    fn order_terms() {
        let k = [0.2, 0.5, 0.7];
        assert_eq!(additive_order_term(&k, 0).unwrap(), 1.0);
        assert!((additive_order_term(&k, 1).unwrap() - 1.4).abs() < 1e-15);
        assert!((additive_order_term(&k, 2).unwrap() - (0.1 + 0.35 + 0.14)).abs() < 1e-15);
        assert!((additive_order_term(&k, 3).unwrap() - 0.07).abs() < 1e-15);
        assert!((additive_order_term(&[1.0; 4], 2).unwrap() - 6.0).abs() < 1e-12);
        assert!(additive_order_term(&k, 4).is_err());
    }

    #[test]
    fn spike_slab_views() {
        let kern = DropoutInputKernel::squared_exp(&[0.5, 2.0, 3.0], 0.5).unwrap();
        let all = spike_slab_lengthscale_view(&kern, &[true; 3]).unwrap();
        assert_eq!(
            all,
            vec![LengthscaleView::Finite(0.5), LengthscaleView::Finite(2.0), LengthscaleView::Finite(3.0)]
        );
        let mid = spike_slab_lengthscale_view(&kern, &[true, false, true]).unwrap();
        assert_eq!(mid[1], LengthscaleView::Infinite);
        assert_eq!(mid[2], LengthscaleView::Finite(3.0));
        let none = spike_slab_lengthscale_view(&kern, &[false; 3]).unwrap();
        assert!(none.iter().all(|v| *v == LengthscaleView::Infinite));
    }

    #[test]
    fn spike_slab_rejects_non_distance_kernels() {
        let kern = DropoutInputKernel {
            base_kernels: vec![KernelSpec::white_noise(1.0, 1).unwrap()],
            p: 0.5,
        };
        assert!(spike_slab_lengthscale_view(&kern, &[true]).unwrap_err().is_argument());
    }

    #[test]
    fn empty_mask_draws_constant_function() {
        let kern = DropoutInputKernel::squared_exp(&[1.0, 1.0], 0.5).unwrap();
        let spec = kern.conditional_kernel(&[false, false]).unwrap();
        assert_eq!(spec.variant, KernelVariant::Constant);
        let pts = PointSet::from_rows(&[vec![0.0, 0.0], vec![1.0, -2.0], vec![3.0, 0.5]]).unwrap();
        let f = factor_gp(&spec, &pts).unwrap().draw(&mut RngStream::new(1, 0).rng());
        assert!(f.iter().all(|v| (v - f[0]).abs() < 1e-4));
    }

    #[test]
    fn conditional_kernel_ignores_dropped_dimension() {
        let kern = DropoutInputKernel::squared_exp(&[1.0, 1.0], 0.5).unwrap();
        let spec = kern.conditional_kernel(&[true, false]).unwrap();
        let a = spec.eval(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        let b = spec.eval(&[0.0, 0.0], &[1.0, 100.0]).unwrap();
        assert_eq!(a, b);
        assert!((a - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn normalized_diagonal() {
        let kern = DropoutInputKernel::squared_exp(&[0.3, 1.0, 2.0], 0.37).unwrap();
        assert!((kern.eval(&[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3]).unwrap() - 1.0).abs() < 1e-15);
    }
}
