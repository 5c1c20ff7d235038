//! Response-conditional least squares (RCLS) index-space estimation.
//!
//! The response range is cut into `J` equal-width level sets. On each level
//! set an ordinary least squares vector `b̂ = Σ̂† Cov(X, Y)` is computed, and
//! the index space is estimated by the leading eigenvectors of
//! `M̂ = Σ_ℓ ρ̂_ℓ b̂_ℓ b̂_ℓᵀ`, where `ρ̂_ℓ` is the fraction of samples in level `ℓ`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{level_sets_or_single, Dataset};
use crate::error::{invalid, Error, Result};
use crate::numkit::{pinv_psd, projector_from_basis, sym_eig, EigenDecomposition, SymMatrix};

/// Relative threshold under which an eigenvalue of `M̂` counts as zero.
pub const RANK_RTOL: f64 = 1e-12;

/// Empirical moments and OLS vector of one level set.
#[derive(Debug, Clone)]
pub struct LevelSetStats {
    /// Zero-based level index.
    pub level: usize,
    pub count: usize,
    /// `count / N`.
    pub weight: f64,
    pub mean_x: DVector<f64>,
    pub mean_y: f64,
    /// `1/n`-normalized response variance within the level set.
    pub var_y: f64,
    pub cov_x: SymMatrix,
    pub cov_xy: DVector<f64>,
    pub ols_vector: DVector<f64>,
    /// Fewer than two samples; the OLS vector is zero and the level is skipped.
    pub degenerate: bool,
}

impl LevelSetStats {
    fn empty(level: usize, count: usize, total: usize, dim: usize) -> Self {
        LevelSetStats {
            level,
            count,
            weight: count as f64 / total as f64,
            mean_x: DVector::zeros(dim),
            mean_y: 0.0,
            var_y: 0.0,
            cov_x: SymMatrix::zeros(dim),
            cov_xy: DVector::zeros(dim),
            ols_vector: DVector::zeros(dim),
            degenerate: true,
        }
    }

    /// Moments of `xs` (rows are samples) and `ys`.
    pub fn from_samples(
        level: usize,
        xs: &DMatrix<f64>,
        ys: &DVector<f64>,
        total: usize,
        rtol: f64,
    ) -> Result<Self> {
        let n = xs.nrows();
        let dim = xs.ncols();
        if n != ys.len() {
            return invalid("predictor and response counts differ");
        }
        if n < 2 {
            return Ok(Self::empty(level, n, total, dim));
        }
        let inv_n = 1.0 / n as f64;
        let mean_x = xs.row_mean().transpose();
        let mean_y = ys.mean();
        let mut centered = xs.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean_x.transpose();
        }
        let yc = ys.add_scalar(-mean_y);
        let cov_x = SymMatrix::symmetrized(centered.tr_mul(&centered) * inv_n);
        let cov_xy = centered.tr_mul(&yc) * inv_n;
        let var_y = yc.norm_squared() * inv_n;
        let ols_vector = pinv_psd(&cov_x, rtol)?.as_matrix() * &cov_xy;
        Ok(LevelSetStats {
            level,
            count: n,
            weight: n as f64 / total as f64,
            mean_x,
            mean_y,
            var_y,
            cov_x,
            cov_xy,
            ols_vector,
            degenerate: false,
        })
    }
}

/// OLS vector of one sample together with the degeneracy flag.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsVector {
    pub b: DVector<f64>,
    pub degenerate: bool,
}

/// `Σ̂† · (1/n) Σᵢ (Xᵢ − X̄)(Yᵢ − Ȳ)` for the rows of `xs`.
///
/// Fewer than two rows yields the zero vector flagged as degenerate.
pub fn conditional_ols(xs: &DMatrix<f64>, ys: &DVector<f64>, rtol: f64) -> Result<OlsVector> {
    let stats = LevelSetStats::from_samples(0, xs, ys, xs.nrows().max(1), rtol)?;
    Ok(OlsVector {
        b: stats.ols_vector,
        degenerate: stats.degenerate,
    })
}

/// Per-level statistics for a dyadic `J`-level partition of the response
/// range. Constant responses collapse to a single level set.
pub fn level_set_stats(ds: &Dataset, levels: usize, rtol: f64) -> Result<Vec<LevelSetStats>> {
    let assignment = level_sets_or_single(ds.y(), levels)?;
    let n = ds.n();
    assignment
        .levels
        .par_iter()
        .enumerate()
        .map(|(l, idx)| {
            if idx.len() < 2 {
                return Ok(LevelSetStats::empty(l, idx.len(), n, ds.dim()));
            }
            let xs = ds.x().select_rows(idx);
            let ys = ds.y().select_rows(idx);
            LevelSetStats::from_samples(l, &xs, &ys, n, rtol)
        })
        .collect()
}

/// `Σ_ℓ ρ̂_ℓ b̂_ℓ b̂_ℓᵀ` over non-degenerate level sets.
pub fn outer_product_matrix(stats: &[LevelSetStats], dim: usize) -> Result<SymMatrix> {
    if stats.iter().all(|s| s.degenerate) {
        return Err(Error::AllLevelSetsDegenerate);
    }
    let mut m = DMatrix::zeros(dim, dim);
    for s in stats.iter().filter(|s| !s.degenerate) {
        m.ger(s.weight, &s.ols_vector, &s.ols_vector, 1.0);
    }
    Ok(SymMatrix::symmetrized(m))
}

pub fn rcls_matrix(ds: &Dataset, levels: usize, rtol: f64) -> Result<(SymMatrix, Vec<LevelSetStats>)> {
    let stats = level_set_stats(ds, levels, rtol)?;
    let m = outer_product_matrix(&stats, ds.dim())?;
    Ok((m, stats))
}

/// A fitted RCLS index-space estimate.
#[derive(Debug, Clone)]
pub struct RclsModel {
    pub levels: usize,
    pub d_tilde: usize,
    pub m_hat: SymMatrix,
    pub spectrum: EigenDecomposition,
    pub projector: SymMatrix,
    /// `D×d̃` orthonormal basis of the estimated index space.
    pub basis: DMatrix<f64>,
    pub per_level: Vec<LevelSetStats>,
    pub warnings: Vec<String>,
}

/// Warning text when `λ_{d̃}` of a spectrum is numerically zero.
pub(crate) fn rank_warning(eigenvalues: &DVector<f64>, d_tilde: usize) -> Option<String> {
    let top = eigenvalues[0];
    let lambda = eigenvalues[d_tilde - 1];
    (top <= 0.0 || lambda <= RANK_RTOL * top).then(|| {
        format!("rank deficient: eigenvalue {d_tilde} is {lambda:e} (largest {top:e}); trailing directions are arbitrary")
    })
}

pub fn rcls_projector(ds: &Dataset, levels: usize, d_tilde: usize, rtol: f64) -> Result<RclsModel> {
    if d_tilde == 0 || d_tilde > ds.dim() {
        return invalid(format!("d̃ must satisfy 1 ≤ d̃ ≤ D = {}, got {d_tilde}", ds.dim()));
    }
    let (m_hat, per_level) = rcls_matrix(ds, levels, rtol)?;
    let spectrum = sym_eig(&m_hat);
    let basis = spectrum.leading(d_tilde);
    let projector = projector_from_basis(&basis)?;
    let mut warnings: Vec<String> = rank_warning(&spectrum.eigenvalues, d_tilde).into_iter().collect();
    let n_degenerate = per_level.iter().filter(|s| s.degenerate).count();
    if n_degenerate > 0 {
        warnings.push(format!("{n_degenerate} of {} level sets have fewer than 2 samples", per_level.len()));
    }
    Ok(RclsModel {
        levels,
        d_tilde,
        m_hat,
        spectrum,
        projector,
        basis,
        per_level,
        warnings,
    })
}

/// Index of the largest spectral gap `λ_i / λ_{i+1}` (1-based), ties to the
/// smaller index. Eigenvalues below `1e-12·λ₁` count as zero, so a gap onto
/// zero is infinite. Returns 0 when the whole spectrum is zero.
pub fn suggest_dim(spectrum: &EigenDecomposition) -> usize {
    let ev = &spectrum.eigenvalues;
    if ev.is_empty() {
        return 0;
    }
    let top = ev[0];
    if top <= 0.0 {
        return 0;
    }
    if ev.len() == 1 {
        return 1;
    }
    let clean = |v: f64| if v <= RANK_RTOL * top { 0.0 } else { v };
    let mut best = 1;
    let mut best_ratio = f64::NEG_INFINITY;
    for i in 0..ev.len() - 1 {
        let (a, b) = (clean(ev[i]), clean(ev[i + 1]));
        if a == 0.0 {
            break;
        }
        let ratio = if b == 0.0 { f64::INFINITY } else { a / b };
        if ratio > best_ratio {
            best_ratio = ratio;
            best = i + 1;
        }
    }
    best
}

/// JSON-friendly summary of one level set.
#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct LevelDiagnostics {
    pub level: usize,
    pub count: usize,
    pub weight: f64,
    pub mean_y: f64,
    pub ols_norm: f64,
    pub degenerate: bool,
}

impl From<&LevelSetStats> for LevelDiagnostics {
    fn from(s: &LevelSetStats) -> Self {
        LevelDiagnostics {
            level: s.level,
            count: s.count,
            weight: s.weight,
            mean_y: s.mean_y,
            ols_norm: s.ols_vector.norm(),
            degenerate: s.degenerate,
        }
    }
}
