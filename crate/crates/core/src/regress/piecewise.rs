use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::numkit::{lstsq_min_norm, matrix_from_rows, matrix_to_rows};

/// Integer corner `(v₁,…,v_d)` of the half-open cube
/// `Π_j [v_j 2^(−l), (v_j+1) 2^(−l))`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCellId(pub Vec<i64>);

impl DyadicCellId {
    pub fn containing(u: &[f64], level: u32) -> Self {
        let scale = (level as f64).exp2();
        DyadicCellId(u.iter().map(|&v| (v * scale).floor() as i64).collect())
    }

    /// Coordinates of `u` relative to the cell midpoint, in units of the side
    /// length, so they lie in `[−½, ½)`.
    fn local(&self, u: &[f64], level: u32) -> Vec<f64> {
        let scale = (level as f64).exp2();
        u.iter().zip(&self.0).map(|(&x, &v)| x * scale - (v as f64 + 0.5)).collect()
    }
}

/// Clamp applied to raw predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub lo: f64,
    pub hi: f64,
}

impl Truncation {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return invalid(format!("truncation bounds must be finite with lo ≤ hi, got [{lo}, {hi}]"));
        }
        Ok(Truncation { lo, hi })
    }

    pub fn unit() -> Self {
        Truncation { lo: -1.0, hi: 1.0 }
    }

    /// `[min Y, max Y]`.
    pub fn from_responses(y: &DVector<f64>) -> Self {
        Truncation { lo: y.min(), hi: y.max() }
    }

    pub fn apply(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// `⌈(2^(l+1) R)^d⌉`.
pub fn nominal_cell_bound(level: u32, radius: f64, d: usize) -> f64 {
    ((level as f64 + 1.0).exp2() * radius).powi(d as i32).ceil()
}

/// Number of level-`l` cells meeting the cube `[−R, R]^d`, counting the
/// cells whose lower corner sits exactly on `R`.
pub fn covering_cell_bound(level: u32, radius: f64, d: usize) -> f64 {
    let scaled = radius * (level as f64).exp2();
    let per_axis = scaled.floor() - (-scaled).floor() + 1.0;
    per_axis.powi(d as i32)
}

/// Cells containing `Âᵀx` for every row `x` with `‖x‖ ≤ R`.
pub fn enumerate_cells(basis: &DMatrix<f64>, points: &DMatrix<f64>, level: u32, radius: f64) -> BTreeSet<DyadicCellId> {
    let u = points * basis;
    (0..points.nrows())
        .filter(|&i| points.row(i).norm() <= radius)
        .map(|i| {
            let row: Vec<f64> = u.row(i).iter().copied().collect();
            DyadicCellId::containing(&row, level)
        })
        .collect()
}

/// Exponent vectors of all monomials in `d` variables with total degree
/// `≤ degree`, graded and then lexicographically descending.
pub fn monomial_exponents(d: usize, degree: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, remaining: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == d {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e);
            rec(d, remaining - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for total in 0..=degree {
        if d == 0 {
            if total == 0 {
                out.push(Vec::new());
            }
            continue;
        }
        rec(d, total, &mut Vec::with_capacity(d), &mut out);
    }
    out
}

fn monomials(t: &[f64], exponents: &[Vec<usize>], degree: usize) -> Vec<f64> {
    let powers: Vec<Vec<f64>> = t
        .iter()
        .map(|&v| {
            let mut p = Vec::with_capacity(degree + 1);
            let mut acc = 1.0;
            for _ in 0..=degree {
                p.push(acc);
                acc *= v;
            }
            p
        })
        .collect();
    exponents
        .iter()
        .map(|e| e.iter().enumerate().map(|(j, &k)| powers[j][k]).product())
        .collect()
}

/// Piecewise polynomial on the level-`l` dyadic cells of `Âᵀx`, restricted to
/// the ball of radius `R`.
#[derive(Debug, Clone)]
pub struct PiecewisePolyModel {
    basis: DMatrix<f64>,
    level: u32,
    degree: usize,
    radius: f64,
    truncation: Truncation,
    exponents: Vec<Vec<usize>>,
    cells: BTreeMap<DyadicCellId, Vec<f64>>,
}

impl PiecewisePolyModel {
    /// Independent least squares in each occupied cell on monomials of the
    /// cell-local coordinates.
    pub fn fit(train: &Dataset, basis: &DMatrix<f64>, level: u32, degree: usize, radius: f64, truncation: Truncation) -> Result<Self> {
        if basis.nrows() != train.dim() || basis.ncols() == 0 {
            return invalid(format!("basis must be {}×d with d ≥ 1, got {}×{}", train.dim(), basis.nrows(), basis.ncols()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return invalid(format!("radius must be positive and finite, got {radius}"));
        }
        if level > 52 {
            return invalid(format!("level {level} exceeds floating-point resolution"));
        }
        let d = basis.ncols();
        let exponents = monomial_exponents(d, degree);
        let u = train.x() * basis;
        let mut groups: BTreeMap<DyadicCellId, Vec<usize>> = BTreeMap::new();
        for i in 0..train.n() {
            if train.x().row(i).norm() > radius {
                continue;
            }
            let row: Vec<f64> = u.row(i).iter().copied().collect();
            groups.entry(DyadicCellId::containing(&row, level)).or_default().push(i);
        }

        let bound = covering_cell_bound(level, radius, d);
        if groups.len() as f64 > bound {
            return Err(Error::InvariantViolation(format!("{} occupied cells exceed the covering bound {bound}", groups.len())));
        }

        let fitted: Vec<(DyadicCellId, Vec<f64>)> = groups
            .into_par_iter()
            .map(|(cell, idx)| {
                let mut design = DMatrix::zeros(idx.len(), exponents.len());
                let mut y = DVector::zeros(idx.len());
                for (r, &i) in idx.iter().enumerate() {
                    let row: Vec<f64> = u.row(i).iter().copied().collect();
                    let feats = monomials(&cell.local(&row, level), &exponents, degree);
                    for (c, f) in feats.into_iter().enumerate() {
                        design[(r, c)] = f;
                    }
                    y[r] = train.y()[i];
                }
                let coef = lstsq_min_norm(&design, &y)?;
                if coef.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvariantViolation(format!("non-finite coefficients in cell {:?}", cell.0)));
                }
                Ok((cell, coef.iter().copied().collect()))
            })
            .collect::<Result<_>>()?;

        Ok(PiecewisePolyModel {
            basis: basis.clone(),
            level,
            degree,
            radius,
            truncation,
            exponents,
            cells: fitted.into_iter().collect(),
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> impl Iterator<Item = &DyadicCellId> {
        self.cells.keys()
    }

    /// Prediction before truncation; 0 outside the ball or in an empty cell.
    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        if xv.norm() > self.radius {
            return 0.0;
        }
        let u: Vec<f64> = (self.basis.transpose() * xv).iter().copied().collect();
        let cell = DyadicCellId::containing(&u, self.level);
        match self.cells.get(&cell) {
            None => 0.0,
            Some(coef) => monomials(&cell.local(&u, self.level), &self.exponents, self.degree)
                .iter()
                .zip(coef)
                .map(|(m, c)| m * c)
                .sum(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.truncation.apply(self.predict_raw(x))
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

    pub fn to_document(&self) -> PiecewiseDocument {
        PiecewiseDocument {
            basis: matrix_to_rows(&self.basis),
            level: self.level,
            degree: self.degree,
            radius: self.radius,
            truncation: self.truncation,
            cells: self
                .cells
                .iter()
                .map(|(cell, coef)| CellCoefficients {
                    cell: cell.0.clone(),
                    coefficients: coef.clone(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &PiecewiseDocument) -> Result<Self> {
        let basis = matrix_from_rows(&doc.basis)?;
        let exponents = monomial_exponents(basis.ncols(), doc.degree);
        let mut cells = BTreeMap::new();
        for c in &doc.cells {
            if c.cell.len() != basis.ncols() || c.coefficients.len() != exponents.len() {
                return invalid(format!("cell {:?} does not match d = {} and degree {}", c.cell, basis.ncols(), doc.degree));
            }
            cells.insert(DyadicCellId(c.cell.clone()), c.coefficients.clone());
        }
        Ok(PiecewisePolyModel {
            basis,
            level: doc.level,
            degree: doc.degree,
            radius: doc.radius,
            truncation: doc.truncation,
            exponents,
            cells,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCoefficients {
    pub cell: Vec<i64>,
    /// In the order of [`monomial_exponents`], local coordinates centered at
    /// the cell midpoint and scaled by `2^l`.
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseDocument {
    pub basis: Vec<Vec<f64>>,
    pub level: u32,
    pub degree: usize,
    pub radius: f64,
    pub truncation: Truncation,
    pub cells: Vec<CellCoefficients>,
}

/// `l = ⌈log₂N / (2s+d)⌉` and `R = √(σ² ln N)`, or `R = √σ²` when
/// `bounded` (the support radius is passed as `σ²`'s square root).
pub fn theoretical_hyperparams(n: usize, smoothness: f64, intrinsic_dim: usize, sigma_x_sq: f64, bounded: bool) -> Result<(u32, f64)> {
    if n < 2 {
        return invalid(format!("N must be ≥ 2, got {n}"));
    }
    if !(smoothness > 0.0) || intrinsic_dim == 0 || !(sigma_x_sq > 0.0) {
        return invalid("need s > 0, d ≥ 1 and σ² > 0");
    }
    let nf = n as f64;
    let level = (nf.log2() / (2.0 * smoothness + intrinsic_dim as f64)).ceil() as u32;
    let radius = if bounded { sigma_x_sq.sqrt() } else { (sigma_x_sq * nf.ln()).sqrt() };
    Ok((level, radius))
}
