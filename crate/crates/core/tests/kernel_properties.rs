use deep_prior_core::{kernel_matrix, psd_factorize, JitterPolicy, KernelSpec, PointSet};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn min_eigenvalue(m: nalgebra::DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn point_set() -> impl Strategy<Value = PointSet> {
    (1usize..=5, 1usize..=64).prop_flat_map(|(d, n)| {
        prop::collection::vec(-3.0f64..3.0, d * n).prop_map(move |c| PointSet::new(d, c).unwrap())
    })
}

fn variants(dim: usize) -> Vec<KernelSpec> {
    let ls: Vec<f64> = (0..dim).map(|d| 0.6 + 0.4 * d as f64).collect();
    vec![
        KernelSpec::squared_exp(1.5, 0.8, dim).unwrap(),
        KernelSpec::product_se(0.7, ls.clone()).unwrap(),
        KernelSpec::composed_se(1.0, ls.clone(), 4).unwrap(),
        KernelSpec::input_connected(1.0, ls.clone(), 6).unwrap(),
        KernelSpec::fixed_point(1.0, ls.clone()).unwrap(),
        KernelSpec::dropout_additive(2.0, ls, 0.35).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jittered_gram_matrices_are_psd(pts in point_set()) {
        for spec in variants(pts.dim()) {
            let k = kernel_matrix(&spec, &pts).unwrap();
            prop_assert_eq!(&k, &k.transpose());
            let factor = psd_factorize(&k, JitterPolicy::default()).unwrap();
            let mut shifted = k.clone();
            for i in 0..pts.len() {
                shifted[(i, i)] += factor.jitter_used;
            }
            let lam = min_eigenvalue(shifted.clone());
            prop_assert!(lam >= -1e-8 * spec.variance, "{}: min eigenvalue {}", spec.variant, lam);
            let err = (factor.reconstruct() - &shifted).norm() / shifted.norm();
            prop_assert!(err < 1e-10, "{}: reconstruction error {}", spec.variant, err);
        }
    }

    #[test]
    fn stationary_diagonal(pts in point_set()) {
        for spec in variants(pts.dim()) {
            let k = kernel_matrix(&spec, &pts).unwrap();
            for i in 0..pts.len() {
                prop_assert!((k[(i, i)] - spec.variance).abs() <= 1e-14 * spec.variance);
            }
        }
    }
}

#[test]
fn dimension_mismatch_is_an_argument_error() {
    let spec = KernelSpec::squared_exp(1.0, 1.0, 2).unwrap();
    let pts = PointSet::grid_1d(0.0, 1.0, 3).unwrap();
    assert!(kernel_matrix(&spec, &pts).unwrap_err().is_argument());
}
