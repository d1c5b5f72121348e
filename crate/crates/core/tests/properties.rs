use num_complex::Complex64;
use pindelay::bounds::lambert_w;
use pindelay::graph::{
    erdos_renyi, has_spanning_tree, is_strongly_connected, laplacian, random_directed, PinSet,
};
use pindelay::spectral::{eigendecompose, eigenvalues, undelayed_spectral_abscissa};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_laplacians_have_zero_row_sums(n in 1usize..30, p in 0.0f64..1.0, seed in any::<u64>()) {
        for g in [erdos_renyi(n, p, seed).unwrap(), random_directed(n, p, 0.1, 3.0, seed).unwrap()] {
            let sys = laplacian(&g);
            for row in sys.l.row_iter() {
                prop_assert!(row.sum().abs() < 1e-12);
            }
            prop_assert!(sys.k.iter().all(|&k| k >= 0.0));
        }
    }

    #[test]
    fn generators_are_reproducible(n in 1usize..40, p in 0.0f64..1.0, seed in any::<u64>()) {
        prop_assert_eq!(erdos_renyi(n, p, seed).unwrap(), erdos_renyi(n, p, seed).unwrap());
        prop_assert_eq!(
            random_directed(n, p, 1.0, 2.0, seed).unwrap(),
            random_directed(n, p, 1.0, 2.0, seed).unwrap()
        );
    }

    #[test]
    fn strong_connectivity_implies_spanning_tree(n in 1usize..=6, p in 0.0f64..1.0, seed in any::<u64>()) {
        let g = random_directed(n, p, 1.0, 1.0, seed).unwrap();
        if is_strongly_connected(&g) {
            prop_assert!(has_spanning_tree(&g));
        }
    }

    #[test]
    fn lambert_residual(k in -5i64..=5, re in -50.0f64..50.0, im in -50.0f64..50.0) {
        let z = Complex64::new(re, im);
        prop_assume!(z.norm() > 1e-12 || k == 0);
        let w = lambert_w(k, z).unwrap();
        prop_assert!((w * w.exp() - z).norm() < 1e-12 * z.norm().max(1.0), "k={} z={} w={}", k, z, w);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn decomposition_is_biorthonormal(n in 2usize..=100, seed in any::<u64>()) {
        let g = random_directed(n, (4.0 / n as f64).min(1.0), 0.5, 1.5, seed).unwrap();
        let sys = laplacian(&g);
        // skip the rare defective or ill-conditioned draw
        if let Ok(d) = eigendecompose(&sys, 0) {
            prop_assert!(d.biorthonormality_error() < 1e-8, "{}", d.biorthonormality_error());
        }
    }

    #[test]
    fn laplacian_spectrum_in_gershgorin_discs(n in 1usize..=30, p in 0.0f64..1.0, seed in any::<u64>()) {
        let sys = laplacian(&random_directed(n, p, 0.2, 2.0, seed).unwrap());
        for z in eigenvalues(&sys.l).unwrap() {
            let inside = (0..n).any(|i| (z - sys.k[i]).norm() <= sys.k[i] * (1.0 + 1e-9) + 1e-9);
            prop_assert!(inside, "{}", z);
        }
    }

    #[test]
    fn pinned_connected_networks_contract(n in 2usize..=20, m in 1usize..=20, c in 0.01f64..10.0, seed in any::<u64>()) {
        let g = random_directed(n, 0.5, 0.5, 1.5, seed).unwrap();
        prop_assume!(is_strongly_connected(&g));
        let pins = PinSet::random(n, m.min(n), seed).unwrap();
        prop_assert!(undelayed_spectral_abscissa(&laplacian(&g), &pins, c) < 0.0);
    }
}
