//! End-to-end acceptance criteria. Runs as a plain binary so that every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sdrkit::estimate::{fit_sdr, Method};
use sdrkit::harness::{child_seed, run_proxy_scan, run_rate_experiment, synth_dataset, Link, ProxyScanConfig, RateConfig, SyntheticSpec};
use sdrkit::metrics::{loglog_slope, mse, projection_error};
use sdrkit::numkit::{orthonormalize_columns, projector_from_basis, SymMatrix, DEFAULT_RTOL};
use sdrkit::rcls::rcls_projector;
use sdrkit::regress::{knn_theoretical_k, nominal_cell_bound, DyadicCellId, KnnModel, PiecewisePolyModel, Truncation};
use sdrkit::Dataset;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    orthonormalize_columns(&DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal)))
}

fn random_subspace(rng: &mut ChaCha8Rng, dim: usize, r: usize) -> SymMatrix {
    projector_from_basis(&orthonormalize_columns(&DMatrix::from_fn(dim, r, |_, _| rng.sample::<f64, _>(StandardNormal)))).unwrap()
}

fn exact_recovery() -> Outcome {
    let start = Instant::now();
    let spec = SyntheticSpec::new(Link::Linear, 20, 500, 0.0, 1).unwrap();
    let (ds, a) = synth_dataset(&spec).unwrap();
    let model = rcls_projector(&ds, 1, 1, DEFAULT_RTOL).unwrap();
    let p = projector_from_basis(&a).unwrap();
    let err = (model.projector.as_matrix() - p.as_matrix()).norm();
    let secs = start.elapsed().as_secs_f64();
    outcome(err <= 1e-8 && secs < 1.0, format!("‖P̂ − aaᵀ‖_F = {err:.3e}, {secs:.3}s"))
}

fn rate_config() -> RateConfig {
    RateConfig {
        methods: vec![Method::Rcls, Method::Sir],
        links: vec![Link::A],
        ambient_dim: 20,
        n_grid: vec![2000, 4000, 8000, 16000, 32000],
        repetitions: 20,
        level_grid: (2..=40).collect(),
        noise_ratio: 0.01,
        seed: 2024,
        rtol: DEFAULT_RTOL,
    }
}

fn rate_checks() -> (Outcome, Outcome) {
    let start = Instant::now();
    let report = run_rate_experiment(&rate_config()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rcls: Vec<f64> = report.curve(Method::Rcls, &Link::A).iter().map(|r| r.mean_frobenius).collect();
    let sir: Vec<f64> = report.curve(Method::Sir, &Link::A).iter().map(|r| r.mean_frobenius).collect();
    let slope = report.slope(Method::Rcls, &Link::A).unwrap();
    let decreasing = rcls.windows(2).all(|w| w[1] < w[0]);
    let rate = outcome(
        (-0.75..=-0.30).contains(&slope) && decreasing && secs < 300.0,
        format!("slope {slope:.3}, strictly decreasing {decreasing}, {secs:.1}s, errors {rcls:.4?}"),
    );
    let (r, s) = (*rcls.last().unwrap(), *sir.last().unwrap());
    let ordering = outcome(r <= 1.1 * s, format!("N=32000: RCLS {r:.4} vs SIR {s:.4} (ratio {:.3})", r / s));
    (rate, ordering)
}

fn proxy_fidelity() -> Outcome {
    let cfg = ProxyScanConfig {
        link: Link::B,
        ambient_dim: 20,
        n: 20000,
        level_grid: (2..=40).collect(),
        repetitions: 10,
        noise_ratio: 0.01,
        seed: 2024,
        rtol: DEFAULT_RTOL,
    };
    let report = run_proxy_scan(&cfg).unwrap();
    let rho = report.spearman_proxy;
    outcome(rho >= 0.5, format!("Spearman(proxy, true error) = {rho:.4} (log-factor variant {:.4})", report.spearman_proxy_logfactor))
}

fn complement_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dim = 20;
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let r = rng.random_range(1..dim);
        let pa = random_subspace(&mut rng, dim, r);
        let pb = random_subspace(&mut rng, dim, r);
        let lhs = (pa.as_matrix() - pb.as_matrix()).norm();
        let rhs = std::f64::consts::SQRT_2 * ((DMatrix::<f64>::identity(dim, dim) - pa.as_matrix()) * pb.as_matrix()).norm();
        worst = worst.max((lhs - rhs).abs());
        let via_metric = projection_error(&pa, &pb).unwrap().frobenius_via_complement.unwrap();
        worst = worst.max((lhs - via_metric).abs());
    }
    outcome(worst <= 1e-10, format!("max deviation {worst:.3e} over 100 pairs"))
}

fn projector_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0_f64;
    for i in 0..200 {
        let method = Method::ALL[i % Method::ALL.len()];
        let dim = rng.random_range(2..10);
        let n = rng.random_range(50..400);
        let d = rng.random_range(1..=dim);
        let j = rng.random_range(1..20);
        let x = DMatrix::from_fn(n, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |r, _| x[(r, 0)].tanh() + x[(r, dim - 1)].powi(2) + 0.1 * rng.sample::<f64, _>(StandardNormal));
        let est = fit_sdr(&Dataset::new(x, y).unwrap(), method, j, d, DEFAULT_RTOL).unwrap();
        let p = est.projector.as_matrix();
        worst = worst
            .max((p - p.transpose()).norm())
            .max((p * p - p).norm())
            .max((p.trace() - d as f64).abs());
    }
    outcome(worst <= 1e-8, format!("max defect {worst:.3e} over 200 fits"))
}

fn rotation_equivariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spec = SyntheticSpec::new(Link::C, 10, 2000, 0.01, 7).unwrap();
    let (ds, _) = synth_dataset(&spec).unwrap();
    let base = rcls_projector(&ds, 12, 2, DEFAULT_RTOL).unwrap();
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let r = random_orthogonal(&mut rng, 10);
        let moved = rcls_projector(&ds.with_predictors(ds.x() * r.transpose()).unwrap(), 12, 2, DEFAULT_RTOL).unwrap();
        worst = worst.max((moved.projector.as_matrix() - &r * base.projector.as_matrix() * r.transpose()).norm());
    }
    outcome(worst <= 1e-8, format!("max ‖P̂_R − R P̂ Rᵀ‖_F = {worst:.3e} over 20 rotations"))
}

fn piecewise_exactness() -> Outcome {
    let (level, radius) = (2u32, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 3000;
    let x = DMatrix::from_fn(n, 4, |_, _| rng.random_range(-0.5..0.5f64));
    let basis = orthonormalize_columns(&DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, -1.0]));
    let u = &x * &basis;
    // a distinct affine function on every cell
    let y = DVector::from_fn(n, |i, _| {
        let c = DyadicCellId::containing(&[u[(i, 0)], u[(i, 1)]], level);
        let (a, b) = (c.0[0] as f64, c.0[1] as f64);
        (0.3 * a - 0.1) * u[(i, 0)] + (0.2 * b + 0.5) * u[(i, 1)] + a - 2.0 * b
    });
    let ds = Dataset::new(x.clone(), y.clone()).unwrap();
    let model = PiecewisePolyModel::fit(&ds, &basis, level, 1, radius, Truncation::from_responses(&y)).unwrap();
    let pred = model.predict_batch(&x);
    let truth: Vec<f64> = y.iter().copied().collect();
    let err = mse(&pred, &truth).unwrap();
    let bound = nominal_cell_bound(level, radius, 2);
    let cells = model.num_cells();
    outcome(err <= 1e-10 && cells as f64 <= bound, format!("training MSE {err:.3e}, {cells} cells ≤ {bound}"))
}

fn knn_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (n, dim, k) = (500, 6, 9);
    let x = DMatrix::from_fn(n, dim, |_, _| rng.random_range(-1.0..1.0f64));
    let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0f64));
    let model = KnnModel::new(&Dataset::new(x.clone(), y.clone()).unwrap(), SymMatrix::identity(dim), k).unwrap();
    let mut mismatches = 0;
    for _ in 0..100 {
        let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut d: Vec<(f64, usize)> = (0..n).map(|i| ((0..dim).map(|j| (x[(i, j)] - q[j]).powi(2)).sum::<f64>(), i)).collect();
        d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let brute = d[..k].iter().map(|&(_, i)| y[i]).sum::<f64>() / k as f64;
        if model.predict(&q) != brute {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatches on 100 queries"))
}

fn knn_oracle_rate() -> Outcome {
    let ns = [1000, 2000, 4000, 8000, 16000];
    let seeds = 10;
    let curve: Vec<f64> = ns
        .iter()
        .map(|&n| {
            (0..seeds)
                .map(|s| {
                    let seed = child_seed(10, s);
                    let spec = SyntheticSpec::new(Link::B, 20, n, 0.1, seed).unwrap();
                    let (train, a) = synth_dataset(&spec).unwrap();
                    let clean = SyntheticSpec {
                        n: 2000,
                        noise_ratio: 0.0,
                        seed: child_seed(seed, 1),
                        ..spec
                    };
                    let (test, _) = synth_dataset(&clean).unwrap();
                    let k = knn_theoretical_k(n, 1.0, 2, 1.0);
                    let pred = KnnModel::new(&train, projector_from_basis(&a).unwrap(), k).unwrap().predict_batch(test.x());
                    let truth: Vec<f64> = test.y().iter().copied().collect();
                    mse(&pred, &truth).unwrap()
                })
                .sum::<f64>()
                / seeds as f64
        })
        .collect();
    let slope = loglog_slope(&ns, &curve).unwrap();
    let shown: Vec<String> = curve.iter().map(|v| format!("{v:.3e}")).collect();
    outcome((-0.8..=-0.2).contains(&slope), format!("MSE slope {slope:.3}, curve [{}]", shown.join(", ")))
}

fn bench_once(config: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_sdrkit"))
        .args(["bench", "--config"])
        .arg(config)
        .arg("--out-dir")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    Ok(())
}

fn read_rmse(path: &Path, estimator: &str) -> f64 {
    let text = fs::read_to_string(path).unwrap();
    let line = text.lines().find(|l| l.starts_with(&format!("{estimator},"))).unwrap();
    line.split(',').nth(1).unwrap().parse().unwrap()
}

fn pipeline_determinism() -> Outcome {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/planted_d15.csv");
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.json");
    let cfg = serde_json::json!({
        "data": data,
        "response": "y",
        "standardize": false,
        "methods": ["rcls"],
        "folds": 10,
        "repetitions": 20,
        "test_fraction": 0.15,
        "seed": 7
    });
    fs::write(&config, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let (a, b) = (dir.path().join("run1"), dir.path().join("run2"));
    if let Err(e) = bench_once(&config, &a).and_then(|_| bench_once(&config, &b)) {
        return outcome(false, format!("bench failed: {e}"));
    }
    let files = ["bench.csv", "bench_raw.csv", "bench.meta.json"];
    let identical = files.iter().all(|f| fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap());
    let rcls = read_rmse(&a.join("bench.csv"), "rcls");
    let knn = read_rmse(&a.join("bench.csv"), "knn");
    outcome(identical && rcls <= knn, format!("byte-identical {identical}, test RMSE RCLS+kNN {rcls:.4} vs kNN {knn:.4}"))
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let o = f();
        println!("criterion {id:>2} {:<26} {} | {}", name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };
    run(1, "exact recovery", &exact_recovery);
    let (rate, ordering) = rate_checks();
    run(2, "rate slope", &|| Outcome { pass: rate.pass, detail: rate.detail.clone() });
    run(3, "competitive ordering", &|| Outcome { pass: ordering.pass, detail: ordering.detail.clone() });
    run(4, "proxy fidelity", &proxy_fidelity);
    run(5, "complement identity", &complement_identity);
    run(6, "projector invariants", &projector_invariants);
    run(7, "rotation equivariance", &rotation_equivariance);
    run(8, "piecewise exactness", &piecewise_exactness);
    run(9, "knn reduction", &knn_reduction);
    run(10, "knn oracle rate", &knn_oracle_rate);
    run(11, "pipeline determinism", &pipeline_determinism);
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
