//! Dense symmetric linear algebra shared by every estimator.
//!
//! Everything here works on small `D×D` matrices (the ambient dimension of
//! the predictors), so a direct dense eigensolver is used throughout. The
//! eigensolver itself is nalgebra's symmetric tridiagonal QR; this module adds
//! the ordering and sign conventions that make downstream projectors
//! reproducible, plus the tolerance-based pseudoinverse.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Default relative cutoff below which eigenvalues are treated as zero.
pub const DEFAULT_RTOL: f64 = 1e-10;

const SYMMETRY_RTOL: f64 = 1e-12;
const ORTHONORMAL_TOL: f64 = 1e-8;

/// A finite, symmetric square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates symmetry (relative to the largest entry) and finiteness.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return invalid(format!("matrix is {}x{}, expected square", m.nrows(), m.ncols()));
        }
        if m.nrows() == 0 {
            return invalid("matrix has dimension 0");
        }
        if m.iter().any(|v| !v.is_finite()) {
            return invalid("matrix has non-finite entries");
        }
        let scale = m.amax();
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::InvariantViolation(format!(
                        "matrix not symmetric at ({i},{j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        Ok(SymMatrix(m))
    }

    /// Builds `(m + mᵀ)/2`. Used for matrices that are symmetric in exact
    /// arithmetic but were assembled with floating-point products.
    pub fn symmetrized(m: DMatrix<f64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        self.0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Rows as nested vectors, for JSON documents.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.0)
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues sorted in descending order.
///
/// Each eigenvector's first component with magnitude above `1e-8` is positive,
/// so repeated decompositions of the same matrix return identical vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// First `m` eigenvectors as a `D×m` matrix.
    pub fn leading(&self, m: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(0, m).into_owned()
    }
}

pub fn sym_eig(s: &SymMatrix) -> EigenDecomposition {
    let eig = s.0.clone().symmetric_eigen();
    let n = s.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-8) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        eigenvectors.set_column(dst, &col);
    }
    EigenDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// Applies `f` to every eigenvalue above `rtol·scale` and zeroes the rest,
/// where `scale` is the largest eigenvalue magnitude. Returns the rebuilt
/// matrix and the number of retained eigenvalues.
fn psd_spectral_map(s: &SymMatrix, rtol: f64, f: impl Fn(f64) -> f64) -> Result<(SymMatrix, usize)> {
    if !(rtol > 0.0 && rtol < 1.0) {
        return invalid(format!("rtol must lie in (0,1), got {rtol}"));
    }
    let eig = sym_eig(s);
    let n = s.dim();
    let scale = eig.eigenvalues.amax();
    let lambda_min = eig.eigenvalues[n - 1];
    if lambda_min < -rtol * scale {
        return invalid(format!(
            "matrix is not positive semidefinite: eigenvalue {lambda_min} below -{rtol}·{scale}"
        ));
    }
    let cutoff = rtol * scale;
    let mut scaled = eig.eigenvectors.clone();
    let mut rank = 0;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let w = if lambda > cutoff && lambda > 0.0 {
            rank += 1;
            f(lambda)
        } else {
            0.0
        };
        scaled.column_mut(j).scale_mut(w);
    }
    let out = &scaled * eig.eigenvectors.transpose();
    Ok((SymMatrix::symmetrized(out), rank))
}

/// Moore–Penrose pseudoinverse of a positive semidefinite matrix with
/// relative eigenvalue cutoff `rtol`.
pub fn pinv_psd(s: &SymMatrix, rtol: f64) -> Result<SymMatrix> {
    psd_spectral_map(s, rtol, |l| 1.0 / l).map(|(m, _)| m)
}

/// Pseudo inverse square root `S^(-1/2)` on the retained range, with its rank.
pub fn inv_sqrt_psd(s: &SymMatrix, rtol: f64) -> Result<(SymMatrix, usize)> {
    psd_spectral_map(s, rtol, |l| 1.0 / l.sqrt())
}

/// Orthoprojector onto the retained range of a PSD matrix.
pub fn range_projector_psd(s: &SymMatrix, rtol: f64) -> Result<(SymMatrix, usize)> {
    psd_spectral_map(s, rtol, |_| 1.0)
}

/// `B Bᵀ` for a `D×m` matrix with orthonormal columns.
pub fn projector_from_basis(basis: &DMatrix<f64>) -> Result<SymMatrix> {
    if basis.nrows() == 0 {
        return invalid("basis has zero rows");
    }
    let gram = basis.tr_mul(basis);
    let defect = (gram - DMatrix::<f64>::identity(basis.ncols(), basis.ncols())).norm();
    if defect > ORTHONORMAL_TOL || !defect.is_finite() {
        return invalid(format!("basis columns are not orthonormal (‖BᵀB − I‖_F = {defect:e})"));
    }
    Ok(SymMatrix::symmetrized(basis * basis.transpose()))
}

/// Orthonormal basis of the column span of `m`, column order preserved so
/// that every leading block of columns spans the matching leading block of `m`.
pub fn orthonormalize_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    let q = m.clone().qr().q();
    if cols <= rows {
        q.columns(0, cols).into_owned()
    } else {
        q
    }
}

/// Largest singular value of an arbitrary matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max(v))
}

/// Minimum-norm least-squares solution of `a·x ≈ b`, discarding singular
/// values below `1e−12·σ_max`.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return invalid(format!("design has {} rows but response has {}", a.nrows(), b.len()));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |acc, &v| acc.max(v));
    if smax == 0.0 {
        return Ok(DVector::zeros(a.ncols()));
    }
    svd.solve(b, 1e-12 * smax).map_err(|e| Error::InvariantViolation(e.to_string()))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return invalid("matrix has no rows");
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return invalid("ragged matrix rows");
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
