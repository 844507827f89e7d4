//! Deep Gaussian-process priors.
//!
//! Kernels and their compositions ([`kernel`], [`deep_kernel`]), layered
//! function draws ([`sampler`]), Jacobian and derivative statistics
//! ([`jacobian`]) and dropout-induced kernels ([`dropout`]). Every random
//! operation takes an explicit [`RngStream`] so results are reproducible.

pub mod deep_kernel;
pub mod dropout;
pub mod error;
pub mod jacobian;
pub mod kernel;
pub mod psd;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod svd;

pub use deep_kernel::{
    alternative_architecture_limit, compose_se, deep_kernel_chain, fixed_point_kernel,
    input_connected_deep_kernel, Architecture, ComposedKernelChain, FixedPointQuery,
};
pub use dropout::{
    additive_order_term, dropout_hidden_variance, dropout_input_kernel,
    dropout_input_kernel_bruteforce, sample_dropout_mixture, spike_slab_lengthscale_view,
    DropoutInputKernel, LengthscaleView,
};
pub use error::{Error, Result};
pub use jacobian::{
    closed_form_log_moments, deep_derivative_log_sum, deep_jacobian, mc_log_derivative_moments,
    sample_layer_jacobian, spectrum_distribution, DerivMomentReport, JacobianSpec, SpectrumSummary,
};
pub use kernel::{
    derivative_covariance, eval_kernel, kernel_matrix, KernelSpec, KernelVariant, PointSet,
};
pub use psd::{psd_factorize, JitterPolicy, PsdFactor};
pub use rng::RngStream;
pub use sampler::{
    feature_map_grid, random_feature_network, sample_deep_composition, sample_gp,
    DeepArchitecture, FeatureFamily, FeatureSet, HiddenDropout, LatticeSpec, LayerTrace,
    WeightDistribution,
};
