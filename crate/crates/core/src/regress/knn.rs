use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::numkit::SymMatrix;

/// kNN regressor whose neighbors are ranked by `‖P̂(x − Xᵢ)‖`.
#[derive(Debug, Clone)]
pub struct KnnModel {
    projector: SymMatrix,
    /// Row `i` is `P̂ Xᵢ`, rows stored contiguously.
    projected: Vec<f64>,
    train_y: DVector<f64>,
    k: usize,
}

impl KnnModel {
    pub fn new(train: &Dataset, projector: SymMatrix, k: usize) -> Result<Self> {
        if projector.dim() != train.dim() {
            return invalid(format!("projector is {0}x{0} but data has D = {1}", projector.dim(), train.dim()));
        }
        if k == 0 || k > train.n() {
            return invalid(format!("k must satisfy 1 ≤ k ≤ N = {}, got {k}", train.n()));
        }
        let projected = row_major(&(train.x() * projector.as_matrix()));
        Ok(KnnModel {
            projector,
            projected,
            train_y: train.y().clone(),
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn projector(&self) -> &SymMatrix {
        &self.projector
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let px = self.projector.as_matrix() * DVector::from_column_slice(x);
        let neighbors = nearest_in(&self.projected, self.projector.dim(), px.as_slice(), self.k);
        neighbors.iter().map(|&(_, i)| self.train_y[i]).sum::<f64>() / self.k as f64
    }

    pub fn predict_batch(&self, xs: &DMatrix<f64>) -> Vec<f64> {
        (0..xs.nrows())
            .into_par_iter()
            .map(|i| {
                let row: Vec<f64> = xs.row(i).iter().copied().collect();
                self.predict(&row)
            })
            .collect()
    }

    pub fn to_document(&self, train_path: Option<String>) -> KnnDocument {
        KnnDocument {
            k: self.k,
            projector: self.projector.to_rows(),
            train_path,
        }
    }
}

/// JSON form of a kNN model: the projector, `k`, and where the training
/// data lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnDocument {
    pub k: usize,
    pub projector: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_path: Option<String>,
}

/// Rows of `m` stored contiguously.
fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn nearest_in(rows: &[f64], dim: usize, query: &[f64], k: usize) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = if dim == 0 {
        Vec::new()
    } else {
        rows.chunks_exact(dim)
            .enumerate()
            .map(|(i, r)| (r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect()
    };
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let k = k.min(all.len());
    if k < all.len() {
        all.select_nth_unstable_by(k, cmp);
        all.truncate(k);
    }
    all.sort_by(cmp);
    all
}

/// The `k` nearest rows as `(squared distance, index)`, sorted by distance
/// with ties broken by the smaller index.
pub fn nearest(points: &DMatrix<f64>, query: &[f64], k: usize) -> Vec<(f64, usize)> {
    nearest_in(&row_major(points), points.ncols(), query, k)
}

/// For every query row, the kNN prediction for each `k = 1..=k_max`.
///
/// Training and query rows may be in any coordinates in which Euclidean
/// distance equals the projected distance, e.g. `Âᵀx` for an orthonormal `Â`.
pub fn prefix_predictions(train: &DMatrix<f64>, train_y: &DVector<f64>, queries: &DMatrix<f64>, k_max: usize) -> Vec<Vec<f64>> {
    let k_max = k_max.min(train.nrows());
    let rows = row_major(train);
    let dim = train.ncols();
    (0..queries.nrows())
        .into_par_iter()
        .map(|q| {
            let query: Vec<f64> = queries.row(q).iter().copied().collect();
            let neighbors = nearest_in(&rows, dim, &query, k_max);
            let mut acc = 0.0;
            neighbors
                .iter()
                .enumerate()
                .map(|(i, &(_, idx))| {
                    acc += train_y[idx];
                    acc / (i + 1) as f64
                })
                .collect()
        })
        .collect()
}

/// `max(1, round(C_k · N^(2s/(2s+d))))`.
pub fn knn_theoretical_k(n: usize, smoothness: f64, intrinsic_dim: usize, c_k: f64) -> usize {
    let exponent = 2.0 * smoothness / (2.0 * smoothness + intrinsic_dim as f64);
    let k = (c_k * (n as f64).powf(exponent)).round();
    if k.is_finite() && k >= 1.0 {
        k as usize
    } else {
        1
    }
}
