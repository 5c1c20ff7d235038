use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{cell, opt_cell, CsvTable};
use super::seeds::child_seed;
use crate::data::{kfold_indices, load_csv, log_transform_response, split_indices, standardize_features, Dataset, ResponseColumn};
use crate::error::{invalid, Result};
use crate::estimate::{Fitter, Method};
use crate::metrics::{mean_std, rmse};
use crate::numkit::{lstsq_min_norm, projector_from_basis, SymMatrix, DEFAULT_RTOL};
use crate::regress::{prefix_predictions, KnnModel};

/// One grid point; the derived order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HyperParams {
    pub d: usize,
    /// `None` for estimators without level sets.
    #[serde(rename = "J")]
    pub levels: Option<usize>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvGrids {
    pub d: Vec<usize>,
    #[serde(rename = "J")]
    pub levels: Vec<usize>,
    pub k: Vec<usize>,
}

impl CvGrids {
    /// `d ∈ [1, min(D, 12)]`, `k ∈ 1..=30`, `J ∈ 2..=30`.
    pub fn defaults(ambient_dim: usize) -> Self {
        CvGrids {
            d: (1..=ambient_dim.min(12)).collect(),
            levels: (2..=30).collect(),
            k: (1..=30).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d.is_empty() || self.levels.is_empty() || self.k.is_empty() {
            return invalid("cross-validation grids must be nonempty");
        }
        if self.d.contains(&0) || self.levels.contains(&0) || self.k.contains(&0) {
            return invalid("cross-validation grid entries must be ≥ 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CvOutcome {
    pub best: HyperParams,
    pub mean_rmse: f64,
}

/// Grid point with the smallest mean fold score, ties to the smallest
/// `(d, J, k)`. Points missing a score on some fold are skipped.
pub fn select_best(scores: &BTreeMap<HyperParams, Vec<f64>>, folds: usize) -> Option<CvOutcome> {
    let mut best: Option<CvOutcome> = None;
    for (hp, s) in scores {
        if s.len() != folds || s.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let mean = s.iter().sum::<f64>() / folds as f64;
        if best.is_none_or(|b| mean < b.mean_rmse) {
            best = Some(CvOutcome { best: *hp, mean_rmse: mean });
        }
    }
    best
}

/// `Ŷ(k)` for every grid `k` on the validation rows, in coordinates `U·Â`.
#[allow(clippy::too_many_arguments)]
fn fold_scores(
    train: &DMatrix<f64>,
    train_y: &DVector<f64>,
    val: &DMatrix<f64>,
    val_y: &DVector<f64>,
    ks: &[usize],
    d: usize,
    levels: Option<usize>,
    out: &mut Vec<(HyperParams, f64)>,
) -> Result<()> {
    let k_max = ks.iter().copied().max().unwrap_or(1).min(train.nrows());
    let preds = prefix_predictions(train, train_y, val, k_max);
    let truth: Vec<f64> = val_y.iter().copied().collect();
    for &k in ks.iter().filter(|&&k| k <= k_max) {
        let p: Vec<f64> = preds.iter().map(|row| row[k - 1]).collect();
        out.push((HyperParams { d, levels, k }, rmse(&p, &truth)?));
    }
    Ok(())
}

fn cv_fold(train: &Dataset, val: &Dataset, method: Option<Method>, grids: &CvGrids, rtol: f64) -> Result<Vec<(HyperParams, f64)>> {
    let mut out = Vec::new();
    let Some(method) = method else {
        fold_scores(train.x(), train.y(), val.x(), val.y(), &grids.k, train.dim(), None, &mut out)?;
        return Ok(out);
    };
    let level_grid: Vec<Option<usize>> = if method.uses_levels() { grids.levels.iter().map(|&j| Some(j)).collect() } else { vec![None] };
    let mut fitter = Fitter::new(train, rtol);
    for levels in level_grid {
        let Ok(dirs) = fitter.directions(method, levels.unwrap_or(1)) else {
            continue;
        };
        for &d in grids.d.iter().filter(|&&d| d <= train.dim()) {
            let basis = dirs.basis(d)?;
            let tr = train.x() * &basis;
            let va = val.x() * &basis;
            fold_scores(&tr, train.y(), &va, val.y(), &grids.k, d, levels, &mut out)?;
        }
    }
    Ok(out)
}

/// `folds`-fold CV of SDR + kNN (`Some(method)`) or plain kNN (`None`).
pub fn crossvalidate(train: &Dataset, method: Option<Method>, grids: &CvGrids, folds: usize, seed: u64, rtol: f64) -> Result<CvOutcome> {
    grids.validate()?;
    let parts = kfold_indices(train.n(), folds, seed)?;
    let per_fold: Vec<Vec<(HyperParams, f64)>> = (0..parts.len())
        .into_par_iter()
        .map(|f| {
            let mut rest: Vec<usize> = parts.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, p)| p.iter().copied()).collect();
            rest.sort_unstable();
            cv_fold(&train.subset(&rest)?, &train.subset(&parts[f])?, method, grids, rtol)
        })
        .collect::<Result<_>>()?;
    let mut scores: BTreeMap<HyperParams, Vec<f64>> = BTreeMap::new();
    for fold in per_fold {
        for (hp, s) in fold {
            scores.entry(hp).or_default().push(s);
        }
    }
    select_best(&scores, parts.len()).ok_or_else(|| crate::error::Error::InvalidInput("no grid point could be evaluated on every fold".into()))
}

/// Ordinary least squares with intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRegression {
    pub coef: DVector<f64>,
    pub intercept: f64,
}

impl LinearRegression {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        let mean_x = ds.x().row_mean();
        let mean_y = ds.y().mean();
        let mut xc = ds.x().clone();
        for mut row in xc.row_iter_mut() {
            row -= &mean_x;
        }
        let yc = ds.y().add_scalar(-mean_y);
        let coef = lstsq_min_norm(&xc, &yc)?;
        let intercept = mean_y - (mean_x * &coef)[0];
        Ok(LinearRegression { coef, intercept })
    }

    pub fn predict_batch(&self, xs: &DMatrix<f64>) -> Vec<f64> {
        (xs * &self.coef).add_scalar(self.intercept).iter().copied().collect()
    }
}

fn default_response() -> ResponseColumn {
    ResponseColumn::Index(-1)
}
fn yes() -> bool {
    true
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_folds() -> usize {
    10
}
fn default_reps() -> usize {
    20
}
fn default_test_fraction() -> f64 {
    0.15
}
fn default_rtol() -> f64 {
    DEFAULT_RTOL
}
fn default_offset() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub data: PathBuf,
    #[serde(default = "default_response")]
    pub response: ResponseColumn,
    /// Map every feature to `[−1, 1]` over the full data set.
    #[serde(default = "yes")]
    pub standardize: bool,
    /// Replace `Y` by `ln(Y + log_offset)`.
    #[serde(default)]
    pub log_response: bool,
    #[serde(default = "default_offset")]
    pub log_offset: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub d_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub k_grid: Option<Vec<usize>>,
    #[serde(rename = "J_grid", default)]
    pub level_grid: Option<Vec<usize>>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    pub seed: u64,
    /// Also run plain kNN and linear regression.
    #[serde(default = "yes")]
    pub baselines: bool,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
}

impl BenchConfig {
    pub fn grids(&self, ambient_dim: usize) -> CvGrids {
        let def = CvGrids::defaults(ambient_dim);
        CvGrids {
            d: self.d_grid.clone().unwrap_or(def.d),
            levels: self.level_grid.clone().unwrap_or(def.levels),
            k: self.k_grid.clone().unwrap_or(def.k),
        }
    }
}

/// Loads and preprocesses the benchmark data.
pub fn prepare_dataset(cfg: &BenchConfig) -> Result<Dataset> {
    let mut ds = load_csv(&cfg.data, &cfg.response)?;
    if cfg.log_response {
        ds = log_transform_response(&ds, cfg.log_offset)?;
    }
    if cfg.standardize {
        ds = standardize_features(&ds)?.0;
    }
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRawRow {
    pub estimator: String,
    pub repetition: usize,
    pub seed: u64,
    pub rmse: f64,
    pub d: Option<usize>,
    pub k: Option<usize>,
    pub levels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub estimator: String,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub d_mean: Option<f64>,
    pub k_mean: Option<f64>,
    pub levels_mean: Option<f64>,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub raw: Vec<BenchRawRow>,
}

pub const BENCH_COLUMNS: [&str; 7] = ["estimator", "rmse_mean", "rmse_std", "d_mean", "k_mean", "J_mean", "repetitions"];
pub const BENCH_RAW_COLUMNS: [&str; 7] = ["estimator", "repetition", "seed", "rmse", "d", "k", "J"];

impl BenchReport {
    pub fn row(&self, estimator: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.estimator == estimator)
    }

    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(&BENCH_COLUMNS);
        for r in &self.rows {
            t.push(vec![
                r.estimator.clone(),
                cell(r.rmse_mean),
                cell(r.rmse_std),
                r.d_mean.map(cell).unwrap_or_default(),
                r.k_mean.map(cell).unwrap_or_default(),
                r.levels_mean.map(cell).unwrap_or_default(),
                r.repetitions.to_string(),
            ]);
        }
        t
    }

    pub fn raw_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&BENCH_RAW_COLUMNS);
        for r in &self.raw {
            t.push(vec![
                r.estimator.clone(),
                r.repetition.to_string(),
                r.seed.to_string(),
                cell(r.rmse),
                opt_cell(r.d),
                opt_cell(r.k),
                opt_cell(r.levels),
            ]);
        }
        t
    }
}

fn knn_test_rmse(train: &Dataset, test: &Dataset, projector: SymMatrix, k: usize) -> Result<f64> {
    let model = KnnModel::new(train, projector, k)?;
    let truth: Vec<f64> = test.y().iter().copied().collect();
    rmse(&model.predict_batch(test.x()), &truth)
}

fn run_repetition(cfg: &BenchConfig, ds: &Dataset, grids: &CvGrids, rep: usize) -> Result<Vec<BenchRawRow>> {
    let seed = child_seed(cfg.seed, rep as u64);
    let (train_idx, test_idx) = split_indices(ds.n(), cfg.test_fraction, child_seed(seed, 0))?;
    let train = ds.subset(&train_idx)?;
    let test = ds.subset(&test_idx)?;
    let cv_seed = child_seed(seed, 1);
    let mut rows = Vec::new();
    let mut fitter = Fitter::new(&train, cfg.rtol);
    for &method in &cfg.methods {
        let cv = crossvalidate(&train, Some(method), grids, cfg.folds, cv_seed, cfg.rtol)?;
        let hp = cv.best;
        let basis = fitter.directions(method, hp.levels.unwrap_or(1))?.basis(hp.d)?;
        rows.push(BenchRawRow {
            estimator: method.to_string(),
            repetition: rep,
            seed,
            rmse: knn_test_rmse(&train, &test, projector_from_basis(&basis)?, hp.k)?,
            d: Some(hp.d),
            k: Some(hp.k),
            levels: hp.levels,
        });
    }
    if cfg.baselines {
        let cv = crossvalidate(&train, None, grids, cfg.folds, cv_seed, cfg.rtol)?;
        rows.push(BenchRawRow {
            estimator: "knn".into(),
            repetition: rep,
            seed,
            rmse: knn_test_rmse(&train, &test, SymMatrix::identity(train.dim()), cv.best.k)?,
            d: Some(train.dim()),
            k: Some(cv.best.k),
            levels: None,
        });
        let lin = LinearRegression::fit(&train)?;
        let truth: Vec<f64> = test.y().iter().copied().collect();
        rows.push(BenchRawRow {
            estimator: "linreg".into(),
            repetition: rep,
            seed,
            rmse: rmse(&lin.predict_batch(test.x()), &truth)?,
            d: None,
            k: None,
            levels: None,
        });
    }
    Ok(rows)
}

fn mean_of(values: impl Iterator<Item = Option<usize>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().map(|x| x as f64).collect();
    (!v.is_empty()).then(|| mean_std(&v).0)
}

pub fn run_benchmark_on(cfg: &BenchConfig, ds: &Dataset) -> Result<BenchReport> {
    if cfg.repetitions == 0 || cfg.folds < 2 {
        return invalid("benchmark needs ≥ 1 repetition and ≥ 2 folds");
    }
    if !cfg.baselines && cfg.methods.is_empty() {
        return invalid("benchmark has nothing to run");
    }
    let grids = cfg.grids(ds.dim());
    grids.validate()?;
    let per_rep: Vec<Vec<BenchRawRow>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(cfg, ds, &grids, r))
        .collect::<Result<_>>()?;
    let raw: Vec<BenchRawRow> = per_rep.into_iter().flatten().collect();

    let mut order: Vec<String> = cfg.methods.iter().map(|m| m.to_string()).collect();
    if cfg.baselines {
        order.extend(["knn".to_string(), "linreg".to_string()]);
    }
    let rows = order
        .into_iter()
        .map(|name| {
            let mine: Vec<&BenchRawRow> = raw.iter().filter(|r| r.estimator == name).collect();
            let errs: Vec<f64> = mine.iter().map(|r| r.rmse).collect();
            let (m, s) = mean_std(&errs);
            BenchRow {
                rmse_mean: m,
                rmse_std: s,
                d_mean: mean_of(mine.iter().map(|r| r.d)),
                k_mean: mean_of(mine.iter().map(|r| r.k)),
                levels_mean: mean_of(mine.iter().map(|r| r.levels)),
                repetitions: mine.len(),
                estimator: name,
            }
        })
        .collect();
    Ok(BenchReport { rows, raw })
}

pub fn run_realdata_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    let ds = prepare_dataset(cfg)?;
    run_benchmark_on(cfg, &ds)
}
