use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdrkit::data::{dyadic_partition, kfold_indices, level_sets_or_single, split_indices};
use sdrkit::estimate::{fit_sdr, Method};
use sdrkit::metrics::projection_error;
use sdrkit::numkit::{orthonormalize_columns, pinv_psd, projector_from_basis, sym_eig, SymMatrix, DEFAULT_RTOL};
use sdrkit::proxy::kappa_hat;
use sdrkit::rcls::rcls_matrix;
use sdrkit::regress::{KnnModel, PiecewisePolyModel, Truncation};
use sdrkit::Dataset;

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0f64))
}

fn random_dataset(seed: u64, n: usize, dim: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_matrix(&mut rng, n, dim);
    let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = DVector::from_fn(n, |i, _| {
        let u: f64 = (0..dim).map(|j| w[j] * x[(i, j)]).sum();
        u.sin() + 0.3 * x[(i, 0)].powi(2) + 0.05 * rng.random_range(-1.0..1.0)
    });
    Dataset::new(x, y).unwrap()
}

fn method() -> impl Strategy<Value = Method> {
    prop::sample::select(Method::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigendecomposition_reconstructs(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_matrix(&mut rng, n, n);
        let s = SymMatrix::symmetrized(&g + g.transpose());
        let e = sym_eig(&s);
        let rebuilt = &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues) * e.eigenvectors.transpose();
        prop_assert!((rebuilt - s.as_matrix()).norm() <= 1e-10 * (1.0 + s.as_matrix().norm()));
        prop_assert!(e.eigenvalues.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn pseudoinverse_is_symmetric_psd(seed in any::<u64>(), n in 1usize..10, rank in 1usize..10) {
        let rank = rank.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_matrix(&mut rng, n, rank);
        let s = SymMatrix::symmetrized(&g * g.transpose());
        let p = pinv_psd(&s, DEFAULT_RTOL).unwrap();
        prop_assert!(sym_eig(&p).eigenvalues.iter().all(|&l| l >= -1e-8 * p.spectral_norm()));
        let m = p.as_matrix();
        prop_assert!((m - m.transpose()).norm() == 0.0);
    }

    #[test]
    fn projector_difference_identities(seed in any::<u64>(), dim in 2usize..15, r in 1usize..8) {
        let r = r.min(dim - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = projector_from_basis(&orthonormalize_columns(&random_matrix(&mut rng, dim, r))).unwrap();
        let b = projector_from_basis(&orthonormalize_columns(&random_matrix(&mut rng, dim, r))).unwrap();
        let e = projection_error(&a, &b).unwrap();
        let direct = (DMatrix::<f64>::identity(dim, dim) - b.as_matrix()) * a.as_matrix();
        prop_assert!((e.frobenius - std::f64::consts::SQRT_2 * direct.norm()).abs() <= 1e-10);
        prop_assert!((e.spectral - e.spectral_via_complement.unwrap()).abs() <= 1e-10);
        prop_assert!(e.spectral <= e.frobenius + 1e-12);
        prop_assert!(e.largest_principal_angle <= std::f64::consts::FRAC_PI_2 + 1e-12);
    }

    #[test]
    fn partition_assigns_every_response_once(seed in any::<u64>(), n in 2usize..300, j in 1usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0f64));
        let part = dyadic_partition(&y, j).unwrap();
        for &v in y.iter() {
            let l = part.level_of(v);
            prop_assert!(l < j);
            prop_assert!(part.contains(l, v));
            prop_assert_eq!((0..j).filter(|&m| part.contains(m, v)).count(), 1);
        }
        let levels = level_sets_or_single(&y, j).unwrap();
        let mut all: Vec<usize> = levels.levels.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn splits_and_folds_partition_rows(seed in any::<u64>(), n in 10usize..200, k in 2usize..10, frac in 0.05f64..0.5) {
        let (train, test) = split_indices(n, frac, seed).unwrap();
        prop_assert_eq!(test.len(), (frac * n as f64).ceil() as usize);
        let mut all = [train, test].concat();
        all.sort_unstable();
        prop_assert_eq!(&all, &(0..n).collect::<Vec<_>>());
        let folds = kfold_indices(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn outer_product_matrix_is_psd_with_unit_weights(seed in any::<u64>(), dim in 1usize..8, j in 1usize..12) {
        let ds = random_dataset(seed, 200, dim);
        let (m, stats) = rcls_matrix(&ds, j, DEFAULT_RTOL).unwrap();
        let total: f64 = stats.iter().map(|s| s.weight).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        let eig = sym_eig(&m);
        prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-10 * eig.eigenvalues[0].abs().max(1e-300)));
    }

    #[test]
    fn fitted_projectors_are_orthoprojectors(seed in any::<u64>(), m in method(), dim in 2usize..8, d in 1usize..8, j in 1usize..15) {
        let d = d.min(dim);
        let ds = random_dataset(seed, 150, dim);
        let est = fit_sdr(&ds, m, j, d, DEFAULT_RTOL).unwrap();
        let p = est.projector.as_matrix();
        prop_assert!((p - p.transpose()).norm() <= 1e-8);
        prop_assert!((p * p - p).norm() <= 1e-8);
        prop_assert!((est.projector.trace() - d as f64).abs() <= 1e-8);
    }

    #[test]
    fn condition_proxy_is_at_least_one(seed in any::<u64>(), dim in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_matrix(&mut rng, dim, dim);
        let cov = SymMatrix::symmetrized(&g * g.transpose() + DMatrix::identity(dim, dim) * 0.1);
        let b = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0f64));
        prop_assume!(b.norm() > 1e-3);
        prop_assert!(kappa_hat(&cov, &b, DEFAULT_RTOL).unwrap() >= 1.0 - 1e-10);
    }

    #[test]
    fn knn_prediction_lies_within_response_range(seed in any::<u64>(), k in 1usize..40) {
        let ds = random_dataset(seed, 40, 3);
        let model = KnnModel::new(&ds, SymMatrix::identity(3), k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = model.predict(&q);
        prop_assert!(p >= ds.y().min() - 1e-12 && p <= ds.y().max() + 1e-12);
    }

    #[test]
    fn piecewise_respects_truncation_and_cell_bound(seed in any::<u64>(), level in 0u32..4, degree in 0usize..3) {
        let ds = random_dataset(seed, 300, 3);
        let basis = DMatrix::from_fn(3, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let t = Truncation::new(-0.5, 0.5).unwrap();
        let model = PiecewisePolyModel::fit(&ds, &basis, level, degree, 2.0, t).unwrap();
        prop_assert!(model.num_cells() as f64 <= sdrkit::regress::covering_cell_bound(level, 2.0, 2));
        for p in model.predict_batch(ds.x()) {
            prop_assert!((-0.5..=0.5).contains(&p));
        }
    }
}
