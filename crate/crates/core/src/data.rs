//! Datasets, CSV ingestion, preprocessing, response partitions, and splits.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `N` predictor rows of dimension `D` paired with scalar responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    feature_names: Vec<String>,
    response_name: String,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(x, y, names, "y".to_string())
    }

    pub fn with_names(
        x: DMatrix<f64>,
        y: DVector<f64>,
        feature_names: Vec<String>,
        response_name: String,
    ) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return invalid(format!("dataset must have N ≥ 1 and D ≥ 1, got {}x{}", x.nrows(), x.ncols()));
        }
        if x.nrows() != y.len() {
            return invalid(format!("{} predictor rows but {} responses", x.nrows(), y.len()));
        }
        if feature_names.len() != x.ncols() {
            return invalid("feature name count does not match D");
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return invalid("dataset contains non-finite values");
        }
        Ok(Dataset {
            x,
            y,
            feature_names,
            response_name,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return invalid("empty subset");
        }
        Ok(Dataset {
            x: self.x.select_rows(indices),
            y: self.y.select_rows(indices),
            feature_names: self.feature_names.clone(),
            response_name: self.response_name.clone(),
        })
    }

    /// Same predictors, replaced responses.
    pub fn with_responses(&self, y: DVector<f64>) -> Result<Dataset> {
        Dataset::with_names(self.x.clone(), y, self.feature_names.clone(), self.response_name.clone())
    }

    /// Same responses, replaced predictors (names regenerated if `D` changes).
    pub fn with_predictors(&self, x: DMatrix<f64>) -> Result<Dataset> {
        if x.ncols() == self.dim() {
            Dataset::with_names(x, self.y.clone(), self.feature_names.clone(), self.response_name.clone())
        } else {
            let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
            Dataset::with_names(x, self.y.clone(), names, self.response_name.clone())
        }
    }

    /// Writes the dataset as CSV with predictors first and the response last.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(&self.response_name);
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| format_float(*v)).collect();
            rec.push(format_float(self.y[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// How the response column is located in a CSV header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResponseColumn {
    /// Signed position; negative counts from the end (`-1` is the last column).
    Index(i64),
    Name(String),
}

impl std::str::FromStr for ResponseColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<i64>() {
            Ok(i) => ResponseColumn::Index(i),
            Err(_) => ResponseColumn::Name(s.to_string()),
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, response: &ResponseColumn) -> Result<Dataset> {
    read_csv(File::open(path)?, response)
}

pub fn read_csv<R: Read>(reader: R, response: &ResponseColumn) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Ingestion {
            row: 0,
            column: String::new(),
            message: "empty file or missing header".into(),
        });
    }
    let ncols = header.len();
    let ridx = match response {
        ResponseColumn::Name(name) => header.iter().position(|h| h == name).ok_or_else(|| Error::Ingestion {
            row: 0,
            column: name.clone(),
            message: "response column not found in header".into(),
        })?,
        ResponseColumn::Index(i) => {
            let resolved = if *i < 0 { ncols as i64 + i } else { *i };
            if resolved < 0 || resolved >= ncols as i64 {
                return Err(Error::Ingestion {
                    row: 0,
                    column: i.to_string(),
                    message: format!("response index out of range for {ncols} columns"),
                });
            }
            resolved as usize
        }
    };
    if ncols < 2 {
        return Err(Error::Ingestion {
            row: 0,
            column: header[0].clone(),
            message: "need at least one predictor column besides the response".into(),
        });
    }

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        // row numbers are 1-based data rows; the header is row 0
        let row = r + 1;
        let record = record?;
        if record.len() != ncols {
            return Err(Error::Ingestion {
                row,
                column: String::new(),
                message: format!("expected {ncols} fields, found {}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Ingestion {
                row,
                column: header[j].clone(),
                message: format!("non-numeric cell `{cell}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion {
                    row,
                    column: header[j].clone(),
                    message: format!("non-finite cell `{cell}`"),
                });
            }
            if j == ridx {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    if ys.is_empty() {
        return Err(Error::Ingestion {
            row: 1,
            column: String::new(),
            message: "file has no data rows".into(),
        });
    }
    let n = ys.len();
    let d = ncols - 1;
    let x = DMatrix::from_row_slice(n, d, &xs);
    let names = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != ridx)
        .map(|(_, h)| h.clone())
        .collect();
    Dataset::with_names(x, DVector::from_vec(ys), names, header[ridx].clone())
}

/// `x ↦ scale·x + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: f64,
    pub shift: f64,
}

impl AffineMap {
    pub fn apply(&self, v: f64) -> f64 {
        self.scale * v + self.shift
    }

    /// `None` for the constant-column map (scale 0), which is not invertible.
    pub fn invert(&self, v: f64) -> Option<f64> {
        (self.scale != 0.0).then(|| (v - self.shift) / self.scale)
    }
}

/// Rescales every predictor column affinely onto `[-1, 1]`; constant columns
/// map to 0.
pub fn standardize_features(ds: &Dataset) -> Result<(Dataset, Vec<AffineMap>)> {
    let maps: Vec<AffineMap> = ds
        .x()
        .column_iter()
        .map(|col| {
            let lo = col.min();
            let hi = col.max();
            if hi > lo {
                let scale = 2.0 / (hi - lo);
                AffineMap {
                    scale,
                    shift: -1.0 - scale * lo,
                }
            } else {
                AffineMap { scale: 0.0, shift: 0.0 }
            }
        })
        .collect();
    let mapped = apply_feature_maps(ds, &maps)?;
    // rounding in the affine map can overshoot the endpoints by an ulp
    let x = mapped.x().map(|v| v.clamp(-1.0, 1.0));
    Ok((mapped.with_predictors(x)?, maps))
}

pub fn apply_feature_maps(ds: &Dataset, maps: &[AffineMap]) -> Result<Dataset> {
    if maps.len() != ds.dim() {
        return invalid("affine map count does not match D");
    }
    let x = DMatrix::from_fn(ds.n(), ds.dim(), |i, j| maps[j].apply(ds.x()[(i, j)]));
    ds.with_predictors(x)
}

/// `Y ↦ ln(Y + offset)`.
pub fn log_transform_response(ds: &Dataset, offset: f64) -> Result<Dataset> {
    if let Some((i, v)) = ds.y().iter().enumerate().find(|(_, v)| **v + offset <= 0.0) {
        return invalid(format!("log transform needs Y + offset > 0, row {i} has {v} + {offset}"));
    }
    ds.with_responses(ds.y().map(|v| (v + offset).ln()))
}

/// Ordered interval decomposition of the response range.
///
/// Interval `ℓ` is `[edge_ℓ, edge_{ℓ+1})`, except the last which is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsePartition {
    edges: Vec<f64>,
}

impl ResponsePartition {
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return invalid("partition needs at least two edges");
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("partition edges must be finite and strictly increasing");
        }
        Ok(ResponsePartition { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn num_levels(&self) -> usize {
        self.edges.len() - 1
    }

    /// Level index of `y`. Values outside the range go to the nearest end level.
    pub fn level_of(&self, y: f64) -> usize {
        let interior = &self.edges[1..self.edges.len() - 1];
        interior.partition_point(|&e| e <= y)
    }

    pub fn contains(&self, level: usize, y: f64) -> bool {
        let lo = self.edges[level];
        let hi = self.edges[level + 1];
        if level + 1 == self.num_levels() {
            (lo..=hi).contains(&y)
        } else {
            lo <= y && y < hi
        }
    }
}

/// `J` equal-width intervals over `[min Y, max Y]`.
pub fn dyadic_partition(y: &DVector<f64>, levels: usize) -> Result<ResponsePartition> {
    if levels == 0 {
        return invalid("number of level sets J must be ≥ 1");
    }
    if y.is_empty() {
        return invalid("empty response vector");
    }
    let lo = y.min();
    let hi = y.max();
    if !(hi > lo) {
        return Err(Error::DegenerateRange(lo));
    }
    let width = hi - lo;
    let mut edges: Vec<f64> = (0..levels)
        .map(|l| lo + width * (l as f64) / (levels as f64))
        .collect();
    edges.push(hi);
    ResponsePartition::from_edges(edges)
}

/// Per-level lists of row indices; empty level sets are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetAssignment {
    pub levels: Vec<Vec<usize>>,
}

impl LevelSetAssignment {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// The whole sample as one level set.
    pub fn single(n: usize) -> Self {
        LevelSetAssignment {
            levels: vec![(0..n).collect()],
        }
    }
}

pub fn assign_level_sets(ds: &Dataset, part: &ResponsePartition) -> LevelSetAssignment {
    assign_responses(ds.y(), part)
}

pub fn assign_responses(y: &DVector<f64>, part: &ResponsePartition) -> LevelSetAssignment {
    let mut levels = vec![Vec::new(); part.num_levels()];
    for (i, &v) in y.iter().enumerate() {
        levels[part.level_of(v)].push(i);
    }
    LevelSetAssignment { levels }
}

/// Dyadic partition with `levels` intervals, or a single level set when the
/// responses are constant.
pub fn level_sets_or_single(y: &DVector<f64>, levels: usize) -> Result<LevelSetAssignment> {
    match dyadic_partition(y, levels) {
        Ok(part) => Ok(assign_responses(y, &part)),
        Err(Error::DegenerateRange(_)) => Ok(LevelSetAssignment::single(y.len())),
        Err(e) => Err(e),
    }
}

/// Uniform random split; the test part has `⌈fraction·N⌉` rows.
pub fn split_train_test(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.n(), test_fraction, seed)?;
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

/// Index form of [`split_train_test`]: `(train, test)`, each sorted.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return invalid(format!("test fraction must lie in (0,1), got {test_fraction}"));
    }
    let n_test = (test_fraction * n as f64).ceil() as usize;
    if n_test == 0 || n_test >= n {
        return invalid(format!("split of {n} rows with fraction {test_fraction} leaves an empty side"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = perm[..n_test].to_vec();
    let mut train = perm[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// `k` disjoint validation folds covering `0..n`, sizes differing by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return invalid(format!("fold count must satisfy 2 ≤ k ≤ N, got k={k}, N={n}"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold = perm[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(folds)
}
