//! Subspace and prediction error metrics, rate-slope fitting, and rank
//! correlation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numkit::{spectral_norm, SymMatrix};

const PROJECTOR_TOL: f64 = 1e-6;

/// Distance between two orthoprojectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceError {
    /// `‖P̂ − P‖_F`.
    pub frobenius: f64,
    /// `‖P̂ − P‖`.
    pub spectral: f64,
    /// Largest principal angle in radians, measured from the smaller subspace.
    pub largest_principal_angle: f64,
    /// `√2‖(I − P)P̂‖_F`, only for equal ranks.
    pub frobenius_via_complement: Option<f64>,
    /// `‖(I − P)P̂‖`, only for equal ranks.
    pub spectral_via_complement: Option<f64>,
    pub equal_rank: bool,
}

fn check_projector(p: &SymMatrix, name: &str) -> Result<usize> {
    let m = p.as_matrix();
    let defect = (m * m - m).norm();
    if defect > PROJECTOR_TOL {
        return invalid(format!("{name} is not idempotent (‖P² − P‖_F = {defect:e})"));
    }
    Ok(p.trace().round().max(0.0) as usize)
}

pub fn projection_error(p_hat: &SymMatrix, p: &SymMatrix) -> Result<SubspaceError> {
    if p_hat.dim() != p.dim() {
        return invalid("projectors have different dimensions");
    }
    let rank_hat = check_projector(p_hat, "estimated projector")?;
    let rank = check_projector(p, "reference projector")?;
    let dim = p.dim();
    let id = DMatrix::<f64>::identity(dim, dim);
    let diff = p_hat.as_matrix() - p.as_matrix();
    let frobenius = diff.norm();
    let spectral = SymMatrix::symmetrized(diff).spectral_norm();

    let (small, big) = if rank_hat <= rank { (p_hat, p) } else { (p, p_hat) };
    let residual = (&id - big.as_matrix()) * small.as_matrix();
    let sin_max = spectral_norm(&residual).min(1.0);
    let largest_principal_angle = if rank_hat.min(rank) == 0 { 0.0 } else { sin_max.asin() };

    let equal_rank = rank_hat == rank;
    let (frobenius_via_complement, spectral_via_complement) = if equal_rank {
        let complement = (&id - p.as_matrix()) * p_hat.as_matrix();
        (
            Some(std::f64::consts::SQRT_2 * complement.norm()),
            Some(spectral_norm(&complement)),
        )
    } else {
        (None, None)
    };
    Ok(SubspaceError {
        frobenius,
        spectral,
        largest_principal_angle,
        frobenius_via_complement,
        spectral_via_complement,
        equal_rank,
    })
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return invalid(format!("length mismatch: {} predictions, {} targets", pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return invalid("rmse of empty vectors");
    }
    Ok(mse_unchecked(pred, truth).sqrt())
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    rmse(pred, truth).map(|r| r * r)
}

fn mse_unchecked(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64
}

/// Least-squares slope of `ln(error)` against `ln(N)`.
pub fn loglog_slope(ns: &[usize], errors: &[f64]) -> Result<f64> {
    if ns.len() != errors.len() {
        return invalid("sample sizes and errors differ in length");
    }
    if ns.len() < 2 {
        return invalid("slope needs at least two points");
    }
    if errors.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return invalid("slope needs positive finite errors");
    }
    if ns.contains(&0) {
        return invalid("sample sizes must be positive");
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("sample sizes are all equal");
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Ranks starting at 1, ties receiving their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return invalid("spearman needs two equal-length samples of size ≥ 2");
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let (ma, _) = mean_std(&ra);
    let (mb, _) = mean_std(&rb);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}
