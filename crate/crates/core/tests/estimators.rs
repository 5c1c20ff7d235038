use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sdrkit::baselines::{candidate_matrix, whiten, SdrMethod};
use sdrkit::estimate::{fit_sdr, Method};
use sdrkit::harness::{synth_dataset, Link, SyntheticSpec};
use sdrkit::metrics::projection_error;
use sdrkit::numkit::{orthonormalize_columns, projector_from_basis, DEFAULT_RTOL};
use sdrkit::rcls::rcls_projector;
use sdrkit::Dataset;

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    orthonormalize_columns(&g)
}

fn gaussian_data(seed: u64, n: usize, dim: usize, link: impl Fn(&[f64]) -> f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n, |i, _| {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        link(&row) + 0.01 * rng.sample::<f64, _>(StandardNormal)
    });
    Dataset::new(x, y).unwrap()
}

/// Equal-width slice index straight from the definition.
fn slice_of(y: f64, lo: f64, hi: f64, j: usize) -> usize {
    (((y - lo) / (hi - lo) * j as f64).floor() as usize).min(j - 1)
}

#[test]
fn directional_regression_matches_pairwise_double_loop() {
    let ds = gaussian_data(1, 120, 3, |x| x[0] + x[1] * x[1]);
    let wd = whiten(&ds, DEFAULT_RTOL).unwrap();
    let j = 4;
    let cand = candidate_matrix(&wd, ds.y(), SdrMethod::Dr, j).unwrap();

    let (lo, hi) = (ds.y().min(), ds.y().max());
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); j];
    for (i, &y) in ds.y().iter().enumerate() {
        members[slice_of(y, lo, hi, j)].push(i);
    }
    members.retain(|m| m.len() >= 2);
    let total: usize = members.iter().map(Vec::len).sum();
    let dim = 3;
    let two_id = DMatrix::<f64>::identity(dim, dim) * 2.0;
    let mut oracle = DMatrix::<f64>::zeros(dim, dim);
    for a in &members {
        for b in &members {
            let mut second = DMatrix::<f64>::zeros(dim, dim);
            for &p in a {
                for &q in b {
                    let diff = (wd.z.row(p) - wd.z.row(q)).transpose();
                    second += &diff * diff.transpose();
                }
            }
            second /= (a.len() * b.len()) as f64;
            let dev = &two_id - second;
            let w = (a.len() as f64 / total as f64) * (b.len() as f64 / total as f64);
            oracle += (&dev * &dev) * w;
        }
    }
    let err = (cand.matrix.as_matrix() - &oracle).norm();
    assert!(err <= 1e-10 * oracle.norm(), "{err}");
}

#[test]
fn sir_transforms_covariantly_under_affine_maps() {
    let ds = gaussian_data(2, 2000, 5, |x| (x[0] + 0.5 * x[1]).powi(3));
    let base = fit_sdr(&ds, Method::Sir, 8, 1, DEFAULT_RTOL).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let b = DMatrix::from_fn(5, 5, |i, j| if i == j { 2.0 } else { 0.0 } + rng.random_range(-0.5..0.5f64));
        let shift: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut x = ds.x() * b.transpose();
        for mut row in x.row_iter_mut() {
            for (v, s) in row.iter_mut().zip(&shift) {
                *v += s;
            }
        }
        let moved = fit_sdr(&ds.with_predictors(x).unwrap(), Method::Sir, 8, 1, DEFAULT_RTOL).unwrap();
        let expected = orthonormalize_columns(&(b.transpose().try_inverse().unwrap() * &base.basis));
        let p = projector_from_basis(&expected).unwrap();
        let err = (moved.projector.as_matrix() - p.as_matrix()).norm();
        assert!(err <= 1e-8, "{err}");
    }
}

#[test]
fn phd_finds_quadratic_direction() {
    let ds = gaussian_data(4, 100_000, 10, |x| x[0] * x[0]);
    let est = fit_sdr(&ds, Method::Phd, 1, 1, DEFAULT_RTOL).unwrap();
    let cos = est.basis[(0, 0)].abs();
    let angle = cos.min(1.0).acos().to_degrees();
    assert!(angle < 10.0, "{angle} degrees");
}

#[test]
fn rcls_is_rotation_equivariant() {
    let ds = gaussian_data(5, 800, 6, |x| x[0].sin() + x[1] * x[2]);
    let base = rcls_projector(&ds, 7, 3, DEFAULT_RTOL).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let r = random_orthogonal(&mut rng, 6);
        let rotated = ds.with_predictors(ds.x() * r.transpose()).unwrap();
        let moved = rcls_projector(&rotated, 7, 3, DEFAULT_RTOL).unwrap();
        let expected = &r * base.projector.as_matrix() * r.transpose();
        let err = (moved.projector.as_matrix() - expected).norm();
        assert!(err <= 1e-8, "{err}");
    }
}

#[test]
fn rcls_ignores_response_rescaling() {
    let ds = gaussian_data(7, 1000, 5, |x| x[0].exp() + x[1]);
    let base = rcls_projector(&ds, 6, 2, DEFAULT_RTOL).unwrap();
    for a in [4.0, 0.25, -2.0] {
        let scaled = ds.with_responses(ds.y() * a).unwrap();
        let moved = rcls_projector(&scaled, 6, 2, DEFAULT_RTOL).unwrap();
        let err = (moved.projector.as_matrix() - base.projector.as_matrix()).norm();
        assert!(err <= 1e-8, "scale {a}: {err}");
    }
}

#[test]
fn rcls_estimate_concentrates_in_index_space() {
    let spec = SyntheticSpec::new(Link::A, 20, 100_000, 0.01, 8).unwrap();
    let (ds, a) = synth_dataset(&spec).unwrap();
    let model = rcls_projector(&ds, 20, 2, DEFAULT_RTOL).unwrap();
    let p = projector_from_basis(&a).unwrap();
    let err = projection_error(&model.projector, &p).unwrap();
    assert!(err.frobenius <= 0.02, "{}", err.frobenius);
    let leak = (DMatrix::<f64>::identity(20, 20) - p.as_matrix()) * model.m_hat.as_matrix();
    assert!(leak.norm() <= 0.02 * model.m_hat.as_matrix().norm());
}

#[test]
fn rcls_runtime_grows_linearly_in_samples() {
    let time = |n: usize| {
        let ds = gaussian_data(9, n, 20, |x| x[0] + x[1].sin());
        (0..3)
            .map(|_| {
                let t = Instant::now();
                rcls_projector(&ds, 20, 2, DEFAULT_RTOL).unwrap();
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let small = time(20_000);
    let large = time(80_000);
    assert!(large / small < 8.0, "ratio {}", large / small);
}

#[test]
fn every_method_recovers_linear_single_index() {
    let ds = gaussian_data(10, 4000, 8, |x| x[0] + 2.0 * x[1]);
    let truth = projector_from_basis(&DMatrix::from_column_slice(8, 1, &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).normalize()).unwrap();
    for m in [Method::Rcls, Method::Sir, Method::Dr] {
        let est = fit_sdr(&ds, m, 10, 1, DEFAULT_RTOL).unwrap();
        let err = projection_error(&est.projector, &truth).unwrap().frobenius;
        assert!(err <= 0.05, "{m}: {err}");
    }
}
