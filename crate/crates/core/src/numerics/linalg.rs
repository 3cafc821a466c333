//! Correlation matrices and the small dense kernels built on them:
//! equicorrelated construction, covariance-to-correlation projection,
//! Schur-complement partial correlations, and a tolerance-aware symmetric
//! positive-definite Cholesky used by the regression fitters.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Smallest admissible eigenvalue for a valid correlation matrix.
pub const PD_TOL: f64 = 1e-12;

/// A symmetric positive definite matrix with unit diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    dim: usize,
    m: DMatrix<f64>,
}

impl CorrelationMatrix {
    /// Validate and wrap a square matrix: symmetric, unit diagonal, and
    /// positive definite (smallest eigenvalue above [`PD_TOL`]).
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        let dim = m.nrows();
        if dim == 0 || m.ncols() != dim {
            return Err(Error::InvalidConfig(format!(
                "correlation matrix must be square and nonempty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        for i in 0..dim {
            if (m[(i, i)] - 1.0).abs() > 1e-8 {
                return Err(Error::NotPositiveDefinite {
                    context: format!("diagonal entry ({i},{i}) = {} is not 1", m[(i, i)]),
                });
            }
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-8 {
                    return Err(Error::NotPositiveDefinite {
                        context: format!("asymmetry at ({i},{j})"),
                    });
                }
            }
        }
        let min_eig = min_eigenvalue(&m);
        if min_eig <= PD_TOL {
            return Err(Error::NotPositiveDefinite {
                context: format!("smallest eigenvalue {min_eig:e}"),
            });
        }
        Ok(CorrelationMatrix { dim, m })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn identity(dim: usize) -> Self {
        CorrelationMatrix {
            dim,
            m: DMatrix::identity(dim, dim),
        }
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Equicorrelated correlation matrix: unit diagonal, `rho` everywhere else.
/// Positive definite exactly when -1/(dim-1) < rho < 1.
pub fn equicorr_covariance(dim: usize, rho: f64) -> Result<CorrelationMatrix> {
    if dim == 0 {
        return Err(Error::InvalidConfig("dimension must be positive".into()));
    }
    let lower = if dim > 1 { -1.0 / (dim as f64 - 1.0) } else { -1.0 };
    if rho <= lower || rho >= 1.0 {
        return Err(Error::NotPositiveDefinite {
            context: format!("equicorrelation rho = {rho} outside ({lower}, 1)"),
        });
    }
    let m = DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { rho });
    CorrelationMatrix::from_matrix(m)
}

/// Rescale a covariance matrix to a correlation matrix: D^{-1/2} S D^{-1/2}.
pub fn to_correlation(cov: &DMatrix<f64>) -> Result<CorrelationMatrix> {
    let dim = cov.nrows();
    if dim == 0 || cov.ncols() != dim {
        return Err(Error::InvalidConfig("covariance must be square".into()));
    }
    let mut inv_sd = vec![0.0; dim];
    for (i, slot) in inv_sd.iter_mut().enumerate() {
        let v = cov[(i, i)];
        if v <= 0.0 || !v.is_finite() {
            return Err(Error::NotPositiveDefinite {
                context: format!("nonpositive diagonal entry {v} at {i}"),
            });
        }
        *slot = 1.0 / v.sqrt();
    }
    let m = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            1.0
        } else {
            // Symmetrize as we rescale; inverse-Wishart draws are symmetric
            // only up to roundoff.
            0.5 * (cov[(i, j)] + cov[(j, i)]) * inv_sd[i] * inv_sd[j]
        }
    });
    CorrelationMatrix::from_matrix(m)
}

/// Partial correlation of coordinates `a` and `b` given the coordinates in
/// `given`, computed from the Schur complement of the correlation matrix.
pub fn partial_correlation(
    c: &CorrelationMatrix,
    a: usize,
    b: usize,
    given: &[usize],
) -> Result<f64> {
    let dim = c.dim();
    if a >= dim || b >= dim || a == b {
        return Err(Error::InvalidConfig(format!(
            "invalid pair ({a},{b}) for dimension {dim}"
        )));
    }
    if given.contains(&a) || given.contains(&b) {
        return Err(Error::InvalidConfig(
            "conditioning set must not contain the tested pair".into(),
        ));
    }
    let k = given.len();
    if k == 0 {
        return Ok(c.entry(a, b));
    }
    let m = c.as_matrix();
    let ckk = DMatrix::from_fn(k, k, |i, j| m[(given[i], given[j])]);
    let cka = nalgebra::DVector::from_fn(k, |i, _| m[(given[i], a)]);
    let ckb = nalgebra::DVector::from_fn(k, |i, _| m[(given[i], b)]);
    let chol = ckk.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        context: "conditioning submatrix is singular".into(),
    })?;
    let sol_a = chol.solve(&cka);
    let sol_b = chol.solve(&ckb);
    let s_ab = c.entry(a, b) - cka.dot(&sol_b);
    let s_aa = 1.0 - cka.dot(&sol_a);
    let s_bb = 1.0 - ckb.dot(&sol_b);
    if s_aa <= 0.0 || s_bb <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            context: "conditional variance is nonpositive".into(),
        });
    }
    Ok(s_ab / (s_aa * s_bb).sqrt())
}

/// Cholesky factor of a symmetric positive definite matrix with an explicit
/// relative pivot tolerance, so rank deficiency is reported rather than
/// absorbed into roundoff.
pub struct SpdCholesky {
    dim: usize,
    /// Lower-triangular factor, row-major packed.
    l: Vec<f64>,
}

impl SpdCholesky {
    pub fn decompose(a: &DMatrix<f64>, rel_tol: f64) -> Result<Self> {
        let dim = a.nrows();
        debug_assert_eq!(dim, a.ncols());
        let max_diag = (0..dim).map(|i| a[(i, i)].abs()).fold(0.0f64, f64::max);
        let floor = rel_tol * max_diag.max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; dim * dim];
        for j in 0..dim {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[j * dim + k] * l[j * dim + k];
            }
            if d <= floor || !d.is_finite() {
                return Err(Error::SingularDesign);
            }
            let dj = d.sqrt();
            l[j * dim + j] = dj;
            for i in (j + 1)..dim {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[i * dim + k] * l[j * dim + k];
                }
                l[i * dim + j] = s / dj;
            }
        }
        Ok(SpdCholesky { dim, l })
    }

    /// Solve A x = rhs.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.dim;
        debug_assert_eq!(x.len(), n);
        // Forward: L y = rhs.
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[i * n + k] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        // Backward: L^T x = y.
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
    }

    /// Multiply L^T by a vector (used to draw coefficients from a Gaussian
    /// with covariance A^{-1}: solve L^T x = z).
    pub fn solve_transposed_factor(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut x = z.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }

    /// Lower-triangular factor entry.
    pub fn factor(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.dim + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn equicorr_identity_at_zero() {
        let c = equicorr_covariance(5, 0.0).unwrap();
        assert_eq!(c.as_matrix(), &DMatrix::<f64>::identity(5, 5));
    }

    #[test]
    fn equicorr_small_case() {
        let c = equicorr_covariance(2, 0.8).unwrap();
        assert_abs_diff_eq!(c.entry(0, 1), 0.8);
        assert_abs_diff_eq!(c.entry(0, 0), 1.0);
    }

    #[test]
    fn equicorr_rejects_non_pd_rho() {
        // For dim 3 the matrix has eigenvalue 1 + 2 rho, negative at -0.6.
        assert!(equicorr_covariance(3, -0.6).is_err());
        assert!(equicorr_covariance(3, 1.0).is_err());
    }

    #[test]
    fn to_correlation_rescales() {
        let cov = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 9.0]);
        let c = to_correlation(&cov).unwrap();
        assert_abs_diff_eq!(c.entry(0, 1), 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.entry(0, 0), 1.0);
        assert_abs_diff_eq!(c.entry(1, 1), 1.0);
    }

    #[test]
    fn to_correlation_identity_fixed_point() {
        let id = DMatrix::<f64>::identity(4, 4);
        let c = to_correlation(&id).unwrap();
        assert_eq!(c.as_matrix(), &id);
    }

    #[test]
    fn to_correlation_rejects_bad_diagonal() {
        let cov = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!(to_correlation(&cov).is_err());
    }

    #[test]
    fn partial_correlation_identity_is_zero() {
        let c = CorrelationMatrix::identity(5);
        let r = partial_correlation(&c, 0, 4, &[1, 2]).unwrap();
        assert_abs_diff_eq!(r, 0.0);
    }

    #[test]
    fn partial_correlation_empty_conditioning_is_entry() {
        let c = equicorr_covariance(4, 0.3).unwrap();
        assert_abs_diff_eq!(partial_correlation(&c, 1, 3, &[]).unwrap(), 0.3);
    }

    #[test]
    fn partial_correlation_equicorrelated_oracle() {
        // Schur complement of an equicorrelated matrix with one conditioning
        // variable gives rho/(1+rho); at rho = 0.5 that is exactly 1/3.
        let c = equicorr_covariance(3, 0.5).unwrap();
        let r = partial_correlation(&c, 0, 1, &[2]).unwrap();
        assert_abs_diff_eq!(r, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn partial_correlation_rejects_overlap() {
        let c = CorrelationMatrix::identity(4);
        assert!(partial_correlation(&c, 0, 1, &[1]).is_err());
        assert!(partial_correlation(&c, 2, 2, &[0]).is_err());
    }

    #[test]
    fn spd_cholesky_solves() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0]);
        let chol = SpdCholesky::decompose(&a, 1e-12).unwrap();
        let x = chol.solve(&[1.0, 2.0, 3.0]);
        let ax = &a * nalgebra::DVector::from_vec(x);
        assert_abs_diff_eq!(ax[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ax[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ax[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn spd_cholesky_flags_singular() {
        // Second column is an exact duplicate of the first.
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]);
        assert!(matches!(
            SpdCholesky::decompose(&a, 1e-12),
            Err(Error::SingularDesign)
        ));
    }
}
