//! Stochastic kernels: multivariate normal rows, inverse-Wishart draws via
//! the Bartlett decomposition, and a truncated normal sampler that switches
//! to a tail-safe rejection method far from the mean.

use nalgebra::{DMatrix, DVector};
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::linalg::SpdCholesky;
use crate::numerics::rng::RandomStream;
use crate::numerics::special::{normal_cdf, normal_quantile_approx};

/// How many standard deviations from the mean the whole truncation interval
/// must lie before the inverse-CDF method gives way to tail rejection.
const TAIL_SWITCH: f64 = 6.0;

pub fn standard_normal(stream: &mut RandomStream) -> f64 {
    StandardNormal.sample(stream)
}

/// Draw `n` i.i.d. rows from N(mean, cov). Returns an n x d matrix.
pub fn sample_mvn(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    n: usize,
    stream: &mut RandomStream,
) -> Result<DMatrix<f64>> {
    let d = mean.len();
    if cov.nrows() != d || cov.ncols() != d {
        return Err(Error::InvalidConfig(format!(
            "mean has length {d} but covariance is {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let chol = SpdCholesky::decompose(cov, 1e-14).map_err(|_| Error::NotPositiveDefinite {
        context: "covariance Cholesky failed".into(),
    })?;
    let mut out = DMatrix::zeros(n, d);
    let mut z = vec![0.0; d];
    for i in 0..n {
        for zj in z.iter_mut() {
            *zj = standard_normal(stream);
        }
        for j in 0..d {
            let mut v = mean[j];
            for k in 0..=j {
                v += chol.factor(j, k) * z[k];
            }
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Draw from the inverse-Wishart distribution with degrees of freedom `nu`
/// and scale matrix `scale`; the mean is scale/(nu - dim - 1) for
/// nu > dim + 1. Uses the Bartlett decomposition of the Wishart of the
/// inverted scale.
pub fn sample_inverse_wishart(
    nu: f64,
    scale: &DMatrix<f64>,
    stream: &mut RandomStream,
) -> Result<DMatrix<f64>> {
    let d = scale.nrows();
    if scale.ncols() != d || d == 0 {
        return Err(Error::InvalidConfig("scale must be square".into()));
    }
    if nu <= (d - 1) as f64 {
        return Err(Error::InvalidDegreesOfFreedom { nu, dim: d });
    }
    let chol = SpdCholesky::decompose(scale, 1e-14).map_err(|_| Error::NotPositiveDefinite {
        context: "inverse-Wishart scale is not positive definite".into(),
    })?;

    // Bartlett factor A: lower triangular, chi draws on the diagonal.
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new(nu - i as f64).expect("positive df");
        a[(i, i)] = chi.sample(stream).sqrt();
        for j in 0..i {
            a[(i, j)] = standard_normal(stream);
        }
    }

    // With X = T A A^T T^T ~ Wishart(nu, scale^{-1}) for any T T^T = scale^{-1},
    // the inverse is X^{-1} = M^T M where M = A^{-1} L^T and L = chol(scale).
    let mut m = DMatrix::<f64>::zeros(d, d);
    for col in 0..d {
        // Forward-substitute A m_col = (L^T)_col, where (L^T)[i, col] is
        // L[col, i] and vanishes for i > col.
        for i in 0..d {
            let mut s = if i <= col { chol.factor(col, i) } else { 0.0 };
            for k in 0..i {
                s -= a[(i, k)] * m[(k, col)];
            }
            m[(i, col)] = s / a[(i, i)];
        }
    }
    let v = m.transpose() * &m;
    // Exact symmetry for downstream consumers.
    Ok((&v + v.transpose()) * 0.5)
}

/// Draw from N(mu, sd^2) conditioned to [lo, hi]. Either bound may be
/// infinite. Moderate truncations use the inverse CDF; intervals lying more
/// than six standard deviations from the mean use rejection methods that
/// stay exact where the CDF saturates.
pub fn sample_truncated_normal(
    mu: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    stream: &mut RandomStream,
) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::EmptyInterval { lo, hi });
    }
    if sd <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "standard deviation must be positive, got {sd}"
        )));
    }
    let a = (lo - mu) / sd;
    let b = (hi - mu) / sd;
    let z = if a > TAIL_SWITCH {
        tail_sample(a, b, stream)
    } else if b < -TAIL_SWITCH {
        -tail_sample(-b, -a, stream)
    } else {
        let pa = if a == f64::NEG_INFINITY { 0.0 } else { normal_cdf(a) };
        let pb = if b == f64::INFINITY { 1.0 } else { normal_cdf(b) };
        if pb - pa <= f64::MIN_POSITIVE {
            // Interval narrower than CDF resolution; both endpoints finite.
            0.5 * (a + b)
        } else {
            let u = pa + (pb - pa) * stream.uniform();
            normal_quantile_approx(u)
        }
    };
    Ok((mu + sd * z).clamp(
        if lo.is_finite() { lo } else { f64::NEG_INFINITY },
        if hi.is_finite() { hi } else { f64::INFINITY },
    ))
}

/// Rejection sampling for the upper tail: standard normal conditioned to
/// [a, b] with a >= TAIL_SWITCH. Uses a shifted-exponential proposal
/// (Robert's method) unless the interval is so narrow that a uniform
/// proposal accepts faster.
fn tail_sample(a: f64, b: f64, stream: &mut RandomStream) -> f64 {
    debug_assert!(a > 0.0 && b > a);
    if b.is_finite() && (b - a) * a < 1.0 {
        // Narrow window: uniform proposal with exact density ratio.
        loop {
            let x = stream.uniform_in(a, b);
            let accept = ((a * a - x * x) / 2.0).exp();
            if stream.uniform() <= accept {
                return x;
            }
        }
    }
    let alpha = (a + (a * a + 4.0).sqrt()) / 2.0;
    loop {
        let e = -stream.uniform().max(f64::MIN_POSITIVE).ln();
        let x = a + e / alpha;
        if x > b {
            continue;
        }
        let diff = x - alpha;
        if stream.uniform() <= (-diff * diff / 2.0).exp() {
            return x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mvn_empty_draw() {
        let mean = DVector::zeros(3);
        let cov = DMatrix::identity(3, 3);
        let mut s = RandomStream::new(1);
        let out = sample_mvn(&mean, &cov, 0, &mut s).unwrap();
        assert_eq!(out.nrows(), 0);
        assert_eq!(out.ncols(), 3);
    }

    #[test]
    fn mvn_deterministic_given_seed() {
        let mean = DVector::from_vec(vec![1.0, -2.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let a = sample_mvn(&mean, &cov, 5, &mut RandomStream::new(9)).unwrap();
        let b = sample_mvn(&mean, &cov, 5, &mut RandomStream::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mvn_rejects_non_pd() {
        let mean = DVector::zeros(2);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(sample_mvn(&mean, &cov, 1, &mut RandomStream::new(0)).is_err());
    }

    #[test]
    fn inverse_wishart_rejects_small_nu() {
        let scale = DMatrix::identity(3, 3);
        assert!(matches!(
            sample_inverse_wishart(1.5, &scale, &mut RandomStream::new(0)),
            Err(Error::InvalidDegreesOfFreedom { .. })
        ));
    }

    #[test]
    fn inverse_wishart_rejects_non_pd_scale() {
        let scale = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
        assert!(sample_inverse_wishart(10.0, &scale, &mut RandomStream::new(0)).is_err());
    }

    #[test]
    fn inverse_wishart_reproducible() {
        let scale = DMatrix::identity(3, 3);
        let a = sample_inverse_wishart(10.0, &scale, &mut RandomStream::new(4)).unwrap();
        let b = sample_inverse_wishart(10.0, &scale, &mut RandomStream::new(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_normal_respects_bounds() {
        let mut s = RandomStream::new(11);
        for _ in 0..2000 {
            let x = sample_truncated_normal(0.3, 1.4, -0.5, 0.9, &mut s).unwrap();
            assert!((-0.5..=0.9).contains(&x));
        }
    }

    #[test]
    fn truncated_normal_deep_tail_terminates() {
        let mut s = RandomStream::new(12);
        for _ in 0..500 {
            let x = sample_truncated_normal(0.0, 1.0, 8.0, 9.0, &mut s).unwrap();
            assert!((8.0..=9.0).contains(&x) && x.is_finite());
        }
    }

    #[test]
    fn truncated_normal_rejects_empty_interval() {
        let mut s = RandomStream::new(1);
        assert!(matches!(
            sample_truncated_normal(0.0, 1.0, 2.0, 2.0, &mut s),
            Err(Error::EmptyInterval { .. })
        ));
    }

    #[test]
    fn truncated_half_normal_mean() {
        let mut s = RandomStream::new(13);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_truncated_normal(0.0, 1.0, 0.0, f64::INFINITY, &mut s).unwrap();
        }
        let mean = sum / n as f64;
        assert_abs_diff_eq!(mean, 0.797884560802865, epsilon = 0.01);
    }

    #[test]
    fn unbounded_interval_is_plain_normal_path() {
        let mut s = RandomStream::new(14);
        let x = sample_truncated_normal(0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY, &mut s);
        assert!(x.unwrap().is_finite());
    }
}
