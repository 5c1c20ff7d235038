//! Method-agnostic fitting: every estimator produces an ordered orthonormal
//! set of directions in predictor coordinates, from which the projector for
//! any `d̃` is the span of the first `d̃`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::{candidate_matrix, ranked_eigenpairs, whiten, SdrMethod, WhitenedData};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::metrics::SubspaceError;
use crate::numkit::{matrix_from_rows, matrix_to_rows, orthonormalize_columns, projector_from_basis, sym_eig, SymMatrix};
use crate::rcls::{level_set_stats, outer_product_matrix, rank_warning, LevelDiagnostics, LevelSetStats};

/// Index-space estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rcls,
    Sir,
    Sirii,
    Save,
    Dr,
    Phd,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Rcls, Method::Sir, Method::Sirii, Method::Save, Method::Dr, Method::Phd];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rcls => "rcls",
            Method::Sir => "sir",
            Method::Sirii => "sirii",
            Method::Save => "save",
            Method::Dr => "dr",
            Method::Phd => "phd",
        }
    }

    pub fn uses_levels(self) -> bool {
        self != Method::Phd
    }

    fn as_sdr(self) -> Option<SdrMethod> {
        match self {
            Method::Rcls => None,
            Method::Sir => Some(SdrMethod::Sir),
            Method::Sirii => Some(SdrMethod::Sirii),
            Method::Save => Some(SdrMethod::Save),
            Method::Dr => Some(SdrMethod::Dr),
            Method::Phd => Some(SdrMethod::Phd),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown method `{s}`")))
    }
}

/// Ranked orthonormal directions of a fitted estimator.
#[derive(Debug, Clone)]
pub struct Directions {
    pub method: Method,
    pub levels: Option<usize>,
    /// `D×D`; column `i` is the `i`-th ranked direction.
    pub vectors: DMatrix<f64>,
    /// Spectrum of the method's candidate matrix in rank order.
    pub eigenvalues: DVector<f64>,
    pub per_level: Option<Vec<LevelSetStats>>,
    pub warnings: Vec<String>,
}

impl Directions {
    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn basis(&self, d_tilde: usize) -> Result<DMatrix<f64>> {
        if d_tilde == 0 || d_tilde > self.dim() {
            return invalid(format!("d̃ must satisfy 1 ≤ d̃ ≤ D = {}, got {d_tilde}", self.dim()));
        }
        Ok(self.vectors.columns(0, d_tilde).into_owned())
    }

    pub fn estimate(&self, d_tilde: usize) -> Result<ProjectionEstimate> {
        let basis = self.basis(d_tilde)?;
        let projector = projector_from_basis(&basis)?;
        let mut warnings = self.warnings.clone();
        let magnitudes = self.eigenvalues.map(f64::abs);
        warnings.extend(rank_warning(&magnitudes, d_tilde));
        Ok(ProjectionEstimate {
            method: self.method,
            levels: self.levels,
            d_tilde,
            basis,
            projector,
            eigenvalues: self.eigenvalues.clone(),
            per_level: self.per_level.as_ref().map(|s| s.iter().map(LevelDiagnostics::from).collect()),
            warnings,
        })
    }
}

/// Orthonormal basis and projector of an estimated index space.
#[derive(Debug, Clone)]
pub struct ProjectionEstimate {
    pub method: Method,
    pub levels: Option<usize>,
    pub d_tilde: usize,
    pub basis: DMatrix<f64>,
    pub projector: SymMatrix,
    pub eigenvalues: DVector<f64>,
    pub per_level: Option<Vec<LevelDiagnostics>>,
    pub warnings: Vec<String>,
}

impl ProjectionEstimate {
    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            method: self.method,
            levels: self.levels,
            d_tilde: self.d_tilde,
            ambient_dim: self.basis.nrows(),
            basis: matrix_to_rows(&self.basis),
            eigenvalues: self.eigenvalues.iter().copied().collect(),
            per_level: self.per_level.clone(),
            warnings: self.warnings.clone(),
            error: None,
        }
    }
}

/// JSON model document shared by all estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub method: Method,
    #[serde(rename = "J")]
    pub levels: Option<usize>,
    pub d_tilde: usize,
    pub ambient_dim: usize,
    /// `D` rows of `d̃` entries.
    pub basis: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_level: Option<Vec<LevelDiagnostics>>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<SubspaceError>,
}

impl ModelDocument {
    pub fn basis_matrix(&self) -> Result<DMatrix<f64>> {
        matrix_from_rows(&self.basis)
    }
}

/// Fits one method once per dataset, caching the standardization shared by
/// the inverse-regression baselines so that sweeps over `J` do not repeat it.
pub struct Fitter<'a> {
    ds: &'a Dataset,
    rtol: f64,
    whitened: Option<WhitenedData>,
}

impl<'a> Fitter<'a> {
    pub fn new(ds: &'a Dataset, rtol: f64) -> Self {
        Fitter { ds, rtol, whitened: None }
    }

    pub fn dataset(&self) -> &Dataset {
        self.ds
    }

    fn whitened(&mut self) -> Result<&WhitenedData> {
        if self.whitened.is_none() {
            self.whitened = Some(whiten(self.ds, self.rtol)?);
        }
        Ok(self.whitened.as_ref().expect("initialized above"))
    }

    /// `levels` is ignored for pHd.
    pub fn directions(&mut self, method: Method, levels: usize) -> Result<Directions> {
        if method.uses_levels() && levels == 0 {
            return invalid("number of level sets J must be ≥ 1");
        }
        let rtol = self.rtol;
        match method.as_sdr() {
            None => {
                let stats = level_set_stats(self.ds, levels, rtol)?;
                let m = outer_product_matrix(&stats, self.ds.dim())?;
                let eig = sym_eig(&m);
                let n_degenerate = stats.iter().filter(|s| s.degenerate).count();
                let warnings = if n_degenerate > 0 {
                    vec![format!("{n_degenerate} of {} level sets have fewer than 2 samples", stats.len())]
                } else {
                    Vec::new()
                };
                Ok(Directions {
                    method,
                    levels: Some(levels),
                    vectors: eig.eigenvectors,
                    eigenvalues: eig.eigenvalues,
                    per_level: Some(stats),
                    warnings,
                })
            }
            Some(sdr) => {
                let y = self.ds.y().clone();
                let wd = self.whitened()?;
                let cand = candidate_matrix(wd, &y, sdr, levels)?;
                let (values, beta) = ranked_eigenpairs(&cand);
                let mapped = wd.whitener.as_matrix() * beta;
                let mut warnings = Vec::new();
                if wd.rank < wd.z.ncols() {
                    warnings.push(format!("predictor covariance has rank {} < D = {}", wd.rank, wd.z.ncols()));
                }
                Ok(Directions {
                    method,
                    levels: sdr.uses_slices().then_some(levels),
                    vectors: orthonormalize_columns(&mapped),
                    eigenvalues: values,
                    per_level: None,
                    warnings,
                })
            }
        }
    }
}

pub fn fit_directions(ds: &Dataset, method: Method, levels: usize, rtol: f64) -> Result<Directions> {
    Fitter::new(ds, rtol).directions(method, levels)
}

/// Fits `method` with `levels` level sets (ignored for pHd) and returns the
/// span of the top `d_tilde` directions.
pub fn fit_sdr(ds: &Dataset, method: Method, levels: usize, d_tilde: usize, rtol: f64) -> Result<ProjectionEstimate> {
    if d_tilde == 0 || d_tilde > ds.dim() {
        return invalid(format!("d̃ must satisfy 1 ≤ d̃ ≤ D = {}, got {d_tilde}", ds.dim()));
    }
    fit_directions(ds, method, levels, rtol)?.estimate(d_tilde)
}
