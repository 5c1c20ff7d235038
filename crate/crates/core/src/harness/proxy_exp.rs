use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{cell, CsvTable};
use super::seeds::{child_seed, name_tag};
use super::synth::{synth_dataset, Link, SyntheticSpec};
use crate::error::{invalid, Result};
use crate::metrics::{mean_std, projection_error, spearman};
use crate::numkit::{projector_from_basis, sym_eig, DEFAULT_RTOL};
use crate::proxy::{proxy_from_stats, ProxyReport};
use crate::rcls::{level_set_stats, outer_product_matrix};

fn default_dim() -> usize {
    20
}
fn default_rtol() -> f64 {
    DEFAULT_RTOL
}
fn default_noise() -> f64 {
    0.01
}

/// True RCLS error and the error proxy across a `J` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxyScanConfig {
    pub link: Link,
    #[serde(rename = "D", default = "default_dim")]
    pub ambient_dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "J_grid")]
    pub level_grid: Vec<usize>,
    pub repetitions: usize,
    #[serde(default = "default_noise")]
    pub noise_ratio: f64,
    pub seed: u64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
}

impl ProxyScanConfig {
    pub fn validate(&self) -> Result<()> {
        SyntheticSpec::new(self.link, self.ambient_dim, self.n, self.noise_ratio, 0)?;
        if self.level_grid.is_empty() || self.level_grid.contains(&0) || self.repetitions == 0 {
            return invalid("proxy scan needs a nonempty J grid with entries ≥ 1 and ≥ 1 repetition");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxyScanRow {
    pub levels: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub mean_proxy: f64,
    pub std_proxy: f64,
    pub mean_proxy_logfactor: f64,
    pub std_proxy_logfactor: f64,
    /// Proxy means times the constant matching the true error at the
    /// reference `J`.
    pub scaled_proxy: f64,
    pub scaled_proxy_logfactor: f64,
    pub mean_gamma_hat: f64,
    pub mean_included_levels: f64,
    /// Repetitions with a valid proxy.
    pub valid_repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxyScanReport {
    pub rows: Vec<ProxyScanRow>,
    /// `J` whose true error fixes the display rescaling: `d` if on the grid,
    /// else the first grid entry.
    pub reference_levels: usize,
    pub spearman_proxy: f64,
    pub spearman_proxy_logfactor: f64,
}

pub const PROXY_SCAN_COLUMNS: [&str; 12] = [
    "J",
    "mean_error",
    "std_error",
    "mean_proxy",
    "std_proxy",
    "mean_proxy_logfactor",
    "std_proxy_logfactor",
    "scaled_proxy",
    "scaled_proxy_logfactor",
    "mean_gamma_hat",
    "mean_included_levels",
    "valid_repetitions",
];
pub const SPEARMAN_COLUMNS: [&str; 2] = ["variant", "spearman"];

impl ProxyScanReport {
    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(&PROXY_SCAN_COLUMNS);
        for r in &self.rows {
            t.push(vec![
                r.levels.to_string(),
                cell(r.mean_error),
                cell(r.std_error),
                cell(r.mean_proxy),
                cell(r.std_proxy),
                cell(r.mean_proxy_logfactor),
                cell(r.std_proxy_logfactor),
                cell(r.scaled_proxy),
                cell(r.scaled_proxy_logfactor),
                cell(r.mean_gamma_hat),
                cell(r.mean_included_levels),
                r.valid_repetitions.to_string(),
            ]);
        }
        t
    }

    pub fn spearman_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&SPEARMAN_COLUMNS);
        t.push(vec!["proxy".into(), cell(self.spearman_proxy)]);
        t.push(vec!["proxy_logfactor".into(), cell(self.spearman_proxy_logfactor)]);
        t
    }
}

/// `(true error, report)` per grid entry for one repetition.
fn scan_once(cfg: &ProxyScanConfig, seed: u64) -> Result<Vec<(f64, Option<ProxyReport>)>> {
    let spec = SyntheticSpec::new(cfg.link, cfg.ambient_dim, cfg.n, cfg.noise_ratio, seed)?;
    let (ds, a) = synth_dataset(&spec)?;
    let p = projector_from_basis(&a)?;
    cfg.level_grid
        .iter()
        .map(|&j| {
            let stats = level_set_stats(&ds, j, cfg.rtol)?;
            let Ok(m) = outer_product_matrix(&stats, ds.dim()) else {
                return Ok((f64::NAN, None));
            };
            let eig = sym_eig(&m);
            let p_hat = projector_from_basis(&eig.leading(spec.d))?;
            let err = projection_error(&p_hat, &p)?.frobenius;
            let report = proxy_from_stats(j, &stats, &eig, spec.d, cfg.rtol)?;
            Ok((err, Some(report)))
        })
        .collect()
}

fn finite_mean_std(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN, 0);
    }
    let (m, s) = mean_std(&v);
    (m, s, v.len())
}

fn rank_correlation(a: &[f64], b: &[f64]) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) = a.iter().zip(b).filter(|(p, q)| p.is_finite() && q.is_finite()).map(|(p, q)| (*p, *q)).unzip();
    if x.len() < 2 {
        return f64::NAN;
    }
    spearman(&x, &y).unwrap_or(f64::NAN)
}

pub fn run_proxy_scan(cfg: &ProxyScanConfig) -> Result<ProxyScanReport> {
    cfg.validate()?;
    let d = cfg.link.intrinsic_dim().expect("validated");
    let per_rep: Vec<Vec<(f64, Option<ProxyReport>)>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| scan_once(cfg, child_seed(child_seed(cfg.seed, r as u64), name_tag(cfg.link.id()))))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cfg.level_grid.len());
    for (ji, &j) in cfg.level_grid.iter().enumerate() {
        let (mean_error, std_error, _) = finite_mean_std(per_rep.iter().map(|rep| rep[ji].0));
        let reports: Vec<&ProxyReport> = per_rep.iter().filter_map(|rep| rep[ji].1.as_ref()).filter(|r| r.valid).collect();
        let (mean_proxy, std_proxy, valid) = finite_mean_std(reports.iter().map(|r| r.proxy_value));
        let (mean_log, std_log, _) = finite_mean_std(reports.iter().map(|r| r.proxy_value_logfactor));
        let (mean_gamma, _, _) = finite_mean_std(reports.iter().map(|r| r.gamma_hat));
        let (mean_included, _, _) = finite_mean_std(reports.iter().map(|r| r.n_included() as f64));
        rows.push(ProxyScanRow {
            levels: j,
            mean_error,
            std_error,
            mean_proxy,
            std_proxy,
            mean_proxy_logfactor: mean_log,
            std_proxy_logfactor: std_log,
            scaled_proxy: f64::NAN,
            scaled_proxy_logfactor: f64::NAN,
            mean_gamma_hat: mean_gamma,
            mean_included_levels: mean_included,
            valid_repetitions: valid,
        });
    }

    let ref_idx = cfg.level_grid.iter().position(|&j| j == d).unwrap_or(0);
    let reference = &rows[ref_idx];
    let scale = reference.mean_error / reference.mean_proxy;
    let scale_log = reference.mean_error / reference.mean_proxy_logfactor;
    for r in &mut rows {
        r.scaled_proxy = r.mean_proxy * scale;
        r.scaled_proxy_logfactor = r.mean_proxy_logfactor * scale_log;
    }

    let errors: Vec<f64> = rows.iter().map(|r| r.mean_error).collect();
    let proxies: Vec<f64> = rows.iter().map(|r| r.mean_proxy).collect();
    let logs: Vec<f64> = rows.iter().map(|r| r.mean_proxy_logfactor).collect();
    Ok(ProxyScanReport {
        reference_levels: cfg.level_grid[ref_idx],
        spearman_proxy: rank_correlation(&proxies, &errors),
        spearman_proxy_logfactor: rank_correlation(&logs, &errors),
        rows,
    })
}
