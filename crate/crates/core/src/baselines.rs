//! Inverse-regression baselines: SIR, SIRII, SAVE, DR, and pHd.
//!
//! All methods standardize `X` to `Z = Σ̂^(-1/2)(X − X̄)`, form a candidate
//! matrix `Λ̂` from sliced (response-quantized) moments of `Z`, and map the
//! leading eigenvectors `β` of `Λ̂` back to predictor coordinates as `W β`.
//! Slicing uses the same equal-width response partition as RCLS.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{level_sets_or_single, Dataset};
use crate::error::{invalid, Error, Result};
use crate::numkit::{inv_sqrt_psd, range_projector_psd, sym_eig, SymMatrix};

/// Standardized predictors.
#[derive(Debug, Clone)]
pub struct WhitenedData {
    /// `N×D`, row `i` is `W (Xᵢ − X̄)`.
    pub z: DMatrix<f64>,
    /// `W = Σ̂^(-1/2)` on the retained range of `Σ̂`.
    pub whitener: SymMatrix,
    pub mean_x: DVector<f64>,
    /// Orthoprojector onto the retained range; the identity at full rank.
    pub range: SymMatrix,
    pub rank: usize,
}

pub fn whiten(ds: &Dataset, rtol: f64) -> Result<WhitenedData> {
    let n = ds.n();
    if n < 2 {
        return invalid("whitening needs at least 2 samples");
    }
    let mean_x = ds.x().row_mean().transpose();
    let mut centered = ds.x().clone();
    for mut row in centered.row_iter_mut() {
        row -= mean_x.transpose();
    }
    let cov = SymMatrix::symmetrized(centered.tr_mul(&centered) / n as f64);
    if cov.as_matrix().amax() == 0.0 {
        return invalid("predictor covariance is zero");
    }
    let (whitener, rank) = inv_sqrt_psd(&cov, rtol)?;
    let (range, _) = range_projector_psd(&cov, rtol)?;
    let z = centered * whitener.as_matrix();
    Ok(WhitenedData {
        z,
        whitener,
        mean_x,
        range,
        rank,
    })
}

/// The inverse-regression methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdrMethod {
    Sir,
    Sirii,
    Save,
    Dr,
    Phd,
}

impl SdrMethod {
    pub const ALL: [SdrMethod; 5] = [SdrMethod::Sir, SdrMethod::Sirii, SdrMethod::Save, SdrMethod::Dr, SdrMethod::Phd];

    pub fn name(self) -> &'static str {
        match self {
            SdrMethod::Sir => "sir",
            SdrMethod::Sirii => "sirii",
            SdrMethod::Save => "save",
            SdrMethod::Dr => "dr",
            SdrMethod::Phd => "phd",
        }
    }

    /// pHd uses no response partition.
    pub fn uses_slices(self) -> bool {
        self != SdrMethod::Phd
    }
}

/// `Λ̂` in standardized coordinates.
#[derive(Debug, Clone)]
pub struct CandidateMatrix {
    pub method: SdrMethod,
    pub matrix: SymMatrix,
}

/// Moments of one slice in `Z` coordinates. `weight` is renormalized over
/// the slices that have at least two samples.
#[derive(Debug, Clone)]
pub struct SliceMoments {
    pub count: usize,
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

pub fn slice_moments(z: &DMatrix<f64>, y: &DVector<f64>, slices: usize) -> Result<Vec<SliceMoments>> {
    let assignment = level_sets_or_single(y, slices)?;
    let used: Vec<&Vec<usize>> = assignment.levels.iter().filter(|idx| idx.len() >= 2).collect();
    if used.is_empty() {
        return Err(Error::AllLevelSetsDegenerate);
    }
    let total: usize = used.iter().map(|idx| idx.len()).sum();
    Ok(used
        .into_iter()
        .map(|idx| {
            let n = idx.len();
            let zs = z.select_rows(idx);
            let mean = zs.row_mean().transpose();
            let mut centered = zs;
            for mut row in centered.row_iter_mut() {
                row -= mean.transpose();
            }
            let cov = centered.tr_mul(&centered) / n as f64;
            SliceMoments {
                count: n,
                weight: n as f64 / total as f64,
                mean,
                cov,
            }
        })
        .collect())
}

/// Second moment `E[(Z − Z')(Z − Z')ᵀ]` for independent draws from slices
/// `a` and `b`.
pub fn pair_difference_moment(a: &SliceMoments, b: &SliceMoments) -> DMatrix<f64> {
    let delta = &a.mean - &b.mean;
    &a.cov + &b.cov + &delta * delta.transpose()
}

pub fn candidate_matrix(wd: &WhitenedData, y: &DVector<f64>, method: SdrMethod, slices: usize) -> Result<CandidateMatrix> {
    let dim = wd.z.ncols();
    let id = wd.range.as_matrix();
    let matrix = match method {
        SdrMethod::Phd => {
            let n = wd.z.nrows();
            let yc = y.add_scalar(-y.mean());
            let mut weighted = wd.z.clone();
            for (mut row, w) in weighted.row_iter_mut().zip(yc.iter()) {
                row *= *w;
            }
            weighted.tr_mul(&wd.z) / n as f64
        }
        _ => {
            let moments = slice_moments(&wd.z, y, slices)?;
            let mut acc = DMatrix::zeros(dim, dim);
            match method {
                SdrMethod::Sir => {
                    for s in &moments {
                        acc.ger(s.weight, &s.mean, &s.mean, 1.0);
                    }
                }
                SdrMethod::Sirii => {
                    let mut avg = DMatrix::zeros(dim, dim);
                    for s in &moments {
                        avg += &s.cov * s.weight;
                    }
                    for s in &moments {
                        let dev = &s.cov - &avg;
                        acc += (&dev * &dev) * s.weight;
                    }
                }
                SdrMethod::Save => {
                    for s in &moments {
                        let dev = id - &s.cov;
                        acc += (&dev * &dev) * s.weight;
                    }
                }
                SdrMethod::Dr => {
                    let two_id = id * 2.0;
                    for a in &moments {
                        for b in &moments {
                            let dev = &two_id - pair_difference_moment(a, b);
                            acc += (&dev * &dev) * (a.weight * b.weight);
                        }
                    }
                }
                SdrMethod::Phd => unreachable!(),
            }
            acc
        }
    };
    Ok(CandidateMatrix {
        method,
        matrix: SymMatrix::symmetrized(matrix),
    })
}

/// Eigenpairs of `Λ̂` in rank order: descending eigenvalue, or descending
/// magnitude for pHd whose candidate matrix is indefinite.
pub fn ranked_eigenpairs(cand: &CandidateMatrix) -> (DVector<f64>, DMatrix<f64>) {
    let eig = sym_eig(&cand.matrix);
    if cand.method != SdrMethod::Phd {
        return (eig.eigenvalues, eig.eigenvectors);
    }
    let n = eig.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::DEFAULT_RTOL;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn whiten_rank_one_example() {
        // Σ̂ = diag(1, 0)
        let ds = Dataset::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])).unwrap();
        let wd = whiten(&ds, DEFAULT_RTOL).unwrap();
        assert_eq!(wd.rank, 1);
        assert_abs_diff_eq!(wd.z.clone(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn whiten_white_data_only_centers() {
        let x = DMatrix::from_row_slice(4, 2, &[2.0, 1.0, 0.0, 1.0, 1.0, 2.0, 1.0, 0.0]);
        let ds = Dataset::new(x.clone(), DVector::zeros(4)).unwrap();
        let wd = whiten(&ds, DEFAULT_RTOL).unwrap();
        let mut centered = x;
        for mut r in centered.row_iter_mut() {
            r.add_scalar_mut(-1.0);
        }
        // covariance of these points is diag(1/2, 1/2); rescale
        assert_abs_diff_eq!(wd.z.clone(), centered * std::f64::consts::SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn whitened_covariance_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 500;
        let mix = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0f64));
        let x = DMatrix::from_fn(n, 4, |_, _| rng.random_range(-1.0..1.0f64)) * mix;
        let ds = Dataset::new(x, DVector::zeros(n)).unwrap();
        let wd = whiten(&ds, DEFAULT_RTOL).unwrap();
        let cov = wd.z.tr_mul(&wd.z) / n as f64;
        assert!((cov - DMatrix::<f64>::identity(4, 4)).norm() <= 1e-6);
        assert!(whiten(&Dataset::new(DMatrix::from_element(3, 2, 1.0), DVector::zeros(3)).unwrap(), DEFAULT_RTOL).is_err());
    }

    fn wd_from_z(z: DMatrix<f64>) -> WhitenedData {
        let d = z.ncols();
        WhitenedData {
            z,
            whitener: SymMatrix::identity(d),
            mean_x: DVector::zeros(d),
            range: SymMatrix::identity(d),
            rank: d,
        }
    }

    #[test]
    fn sir_two_symmetric_slices() {
        // slice means ±m with equal weight: Λ = ½mmᵀ + ½mmᵀ
        let m = [0.6, -0.2];
        let z = DMatrix::from_row_slice(4, 2, &[m[0] + 0.1, m[1], m[0] - 0.1, m[1], -m[0] + 0.1, -m[1], -m[0] - 0.1, -m[1]]);
        let y = DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]);
        let c = candidate_matrix(&wd_from_z(z), &y, SdrMethod::Sir, 2).unwrap();
        let mv = DVector::from_column_slice(&m);
        assert_abs_diff_eq!(c.matrix.as_matrix().clone(), &mv * mv.transpose(), epsilon = 1e-14);
    }

    #[test]
    fn save_with_identity_slice_covariance_is_zero() {
        // each slice: four points (±1, 0), (0, ±1) scaled to have covariance I
        let s = std::f64::consts::SQRT_2;
        let block = [s, 0.0, -s, 0.0, 0.0, s, 0.0, -s];
        let mut rows = block.to_vec();
        rows.extend(block.iter());
        let z = DMatrix::from_row_slice(8, 2, &rows);
        let y = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let c = candidate_matrix(&wd_from_z(z), &y, SdrMethod::Save, 2).unwrap();
        assert!(c.matrix.as_matrix().norm() <= 1e-14);
    }

    #[test]
    fn degenerate_slices_are_skipped() {
        let z = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let y = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(candidate_matrix(&wd_from_z(z), &y, SdrMethod::Sir, 2), Err(Error::AllLevelSetsDegenerate)));
    }

    #[test]
    fn slice_weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let z = DMatrix::from_fn(200, 3, |_, _| rng.random_range(-1.0..1.0f64));
        let y = DVector::from_fn(200, |i, _| z[(i, 0)]);
        let m = slice_moments(&z, &y, 5).unwrap();
        assert_eq!(m.iter().map(|s| s.count).sum::<usize>(), 200);
        assert_abs_diff_eq!(m.iter().map(|s| s.weight).sum::<f64>(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn phd_ranks_by_magnitude() {
        let cand = CandidateMatrix {
            method: SdrMethod::Phd,
            matrix: SymMatrix::from_diagonal(&[0.5, -3.0, 1.0]),
        };
        let (values, vectors) = ranked_eigenpairs(&cand);
        assert_eq!(values.as_slice(), &[-3.0, 1.0, 0.5]);
        assert_abs_diff_eq!(vectors[(1, 0)].abs(), 1.0, epsilon = 1e-14);
    }
}
