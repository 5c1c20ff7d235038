//! Data-driven proxy for the leading factor of the RCLS projection error,
//! used to scan the number of level sets `J`.
//!
//! For each level set with more than `5D` samples the proxy accumulates
//! `√(ρ̂ κ̂) ‖b̂‖ η̂⊥`, and the sum is divided by `γ̂ = λ_d̃(M̂_J)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::numkit::{pinv_psd, sym_eig, EigenDecomposition, SymMatrix};
use crate::rcls::{level_set_stats, outer_product_matrix, LevelSetStats, RANK_RTOL};

/// Level sets need strictly more than `INCLUSION_FACTOR · D` samples.
pub const INCLUSION_FACTOR: usize = 5;

/// Rank-one projector onto `b` and its complement.
fn direction_projectors(b: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let nb2 = b.norm_squared();
    if !(nb2 > 0.0) {
        return invalid("OLS vector is zero");
    }
    let p = b * b.transpose() / nb2;
    let q = DMatrix::identity(b.len(), b.len()) - &p;
    Ok((p, q))
}

fn restricted_norm(l: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
    SymMatrix::symmetrized(l * s * l).spectral_norm()
}

fn kappa_with_pinv(cov: &SymMatrix, pinv: &SymMatrix, b: &DVector<f64>) -> Result<f64> {
    let (p, q) = direction_projectors(b)?;
    let (s, si) = (cov.as_matrix(), pinv.as_matrix());
    let along = restricted_norm(&p, s) * restricted_norm(&p, si);
    let across = restricted_norm(&q, s) * restricted_norm(&q, si);
    Ok(along.max(across))
}

fn eta_perp_with_pinv(var_y: f64, pinv: &SymMatrix, b: &DVector<f64>) -> Result<f64> {
    let (_, q) = direction_projectors(b)?;
    Ok((var_y * restricted_norm(&q, pinv.as_matrix())).sqrt())
}

/// Restricted condition number surrogate
/// `max{‖P̂Σ̂P̂‖‖P̂Σ̂†P̂‖, ‖Q̂Σ̂Q̂‖‖Q̂Σ̂†Q̂‖}` with `P̂ = b̂b̂ᵀ/‖b̂‖²`, `Q̂ = I − P̂`.
pub fn kappa_hat(cov: &SymMatrix, b: &DVector<f64>, rtol: f64) -> Result<f64> {
    kappa_with_pinv(cov, &pinv_psd(cov, rtol)?, b)
}

/// `√(mean((Y − Ȳ)²) · ‖Q̂Σ̂†Q̂‖)`.
pub fn eta_perp_hat(ys: &DVector<f64>, cov: &SymMatrix, b: &DVector<f64>, rtol: f64) -> Result<f64> {
    if ys.len() < 2 {
        return invalid("η̂⊥ needs at least two responses");
    }
    let var_y = ys.add_scalar(-ys.mean()).norm_squared() / ys.len() as f64;
    eta_perp_with_pinv(var_y, &pinv_psd(cov, rtol)?, b)
}

/// One level set's contribution to the proxy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyTerm {
    pub level: usize,
    pub count: usize,
    pub weight: f64,
    pub kappa: f64,
    pub ols_norm: f64,
    pub eta_perp: f64,
    pub included: bool,
}

impl ProxyTerm {
    pub fn contribution(&self) -> f64 {
        (self.weight * self.kappa).sqrt() * self.ols_norm * self.eta_perp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyReport {
    #[serde(rename = "J")]
    pub levels: usize,
    pub d_tilde: usize,
    /// NaN when the report is invalid.
    pub proxy_value: f64,
    /// `proxy_value · √(1 + ln J)`.
    pub proxy_value_logfactor: f64,
    pub gamma_hat: f64,
    pub terms: Vec<ProxyTerm>,
    /// `γ̂` was numerically zero.
    pub valid: bool,
}

impl ProxyReport {
    pub fn n_included(&self) -> usize {
        self.terms.iter().filter(|t| t.included).count()
    }

    pub fn numerator(&self) -> f64 {
        self.terms.iter().filter(|t| t.included).map(ProxyTerm::contribution).sum()
    }
}

/// Builds a report from already computed level statistics and the spectrum
/// of `M̂_J`.
pub fn proxy_from_stats(
    levels: usize,
    stats: &[LevelSetStats],
    spectrum: &EigenDecomposition,
    d_tilde: usize,
    rtol: f64,
) -> Result<ProxyReport> {
    let dim = spectrum.dim();
    if d_tilde == 0 || d_tilde > dim {
        return invalid(format!("d̃ must satisfy 1 ≤ d̃ ≤ D = {dim}, got {d_tilde}"));
    }
    let cutoff = INCLUSION_FACTOR * dim;
    let mut terms = Vec::with_capacity(stats.len());
    for s in stats {
        let ols_norm = s.ols_vector.norm();
        let eligible = !s.degenerate && s.count > cutoff && ols_norm > 0.0;
        let (kappa, eta_perp) = if eligible {
            let pinv = pinv_psd(&s.cov_x, rtol)?;
            (
                kappa_with_pinv(&s.cov_x, &pinv, &s.ols_vector)?,
                eta_perp_with_pinv(s.var_y, &pinv, &s.ols_vector)?,
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        terms.push(ProxyTerm {
            level: s.level,
            count: s.count,
            weight: s.weight,
            kappa,
            ols_norm,
            eta_perp,
            included: eligible,
        });
    }
    let top = spectrum.eigenvalues[0];
    let gamma_hat = spectrum.eigenvalues[d_tilde - 1];
    let valid = top > 0.0 && gamma_hat > RANK_RTOL * top;
    let mut report = ProxyReport {
        levels,
        d_tilde,
        proxy_value: f64::NAN,
        proxy_value_logfactor: f64::NAN,
        gamma_hat,
        terms,
        valid,
    };
    if valid {
        report.proxy_value = report.numerator() / gamma_hat;
        report.proxy_value_logfactor = report.proxy_value * (1.0 + (levels as f64).ln()).sqrt();
    }
    Ok(report)
}

pub fn proxy_report(ds: &Dataset, levels: usize, d_tilde: usize, rtol: f64) -> Result<ProxyReport> {
    let stats = level_set_stats(ds, levels, rtol)?;
    let m = outer_product_matrix(&stats, ds.dim())?;
    proxy_from_stats(levels, &stats, &sym_eig(&m), d_tilde, rtol)
}

/// One report per entry of `level_grid`, in grid order.
pub fn proxy_scan(ds: &Dataset, level_grid: &[usize], d_tilde: usize, rtol: f64) -> Result<Vec<ProxyReport>> {
    if level_grid.is_empty() {
        return invalid("empty J grid");
    }
    if d_tilde == 0 {
        return invalid("d̃ must be ≥ 1");
    }
    level_grid
        .par_iter()
        .map(|&j| proxy_report(ds, j, d_tilde, rtol))
        .collect()
}

/// Index of the smallest valid plain proxy value.
pub fn argmin_proxy(reports: &[ProxyReport]) -> Option<usize> {
    reports
        .iter()
        .enumerate()
        .filter(|(_, r)| r.valid && r.proxy_value.is_finite())
        .min_by(|a, b| a.1.proxy_value.total_cmp(&b.1.proxy_value))
        .map(|(i, _)| i)
}
