//! Link-function regression on projected predictors.

mod knn;
mod piecewise;

pub use knn::{knn_theoretical_k, nearest, prefix_predictions, KnnDocument, KnnModel};
pub use piecewise::{
    covering_cell_bound, enumerate_cells, monomial_exponents, nominal_cell_bound, theoretical_hyperparams, CellCoefficients, DyadicCellId,
    PiecewiseDocument, PiecewisePolyModel, Truncation,
};
