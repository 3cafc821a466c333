//! Maximum likelihood regression fitters and the likelihood ratio test.
//!
//! The Gaussian fitter solves the normal equations and reports the MLE noise
//! variance RSS/n (not RSS/(n-p)) so that likelihood ratio statistics are
//! exact likelihood ratios. The logistic fitter is iteratively reweighted
//! least squares with step halving and explicit separation detection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::linalg::SpdCholesky;
use crate::numerics::special::{chisq_sf, inv_logit, ln1p_exp};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const IRLS_MAX_ITER: usize = 100;
const IRLS_TOL: f64 = 1e-8;
const SEPARATION_NORM: f64 = 1e3;
const RANK_TOL: f64 = 1e-12;

/// A fitted regression model with everything a likelihood ratio test needs.
#[derive(Clone, Debug)]
pub struct RegressionFit {
    pub coefficients: Vec<f64>,
    /// MLE residual variance; present only for Gaussian fits.
    pub noise_variance: Option<f64>,
    pub max_loglik: f64,
    pub n_params: usize,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct LrtResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Gaussian linear model by least squares. `x` must contain any intercept
/// column explicitly. Errors on rank deficiency and on an exact fit (zero
/// residual sum of squares, where the profile likelihood is unbounded).
pub fn fit_gaussian_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<RegressionFit> {
    let n = x.nrows();
    let p = x.ncols();
    if n != y.len() {
        return Err(Error::InvalidConfig(format!(
            "design has {n} rows but response has {}",
            y.len()
        )));
    }
    if n <= p {
        return Err(Error::InsufficientRows { rows: n, params: p });
    }
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let chol = SpdCholesky::decompose(&xtx, RANK_TOL)?;
    let beta = chol.solve(xty.as_slice());
    let beta_v = DVector::from_vec(beta.clone());
    let resid = y - x * &beta_v;
    let rss: f64 = resid.iter().map(|e| e * e).sum();
    let scale = y.iter().map(|v| v * v).sum::<f64>().max(1.0);
    if rss <= scale * 1e-20 {
        return Err(Error::DegenerateFit);
    }
    let sigma2 = rss / n as f64;
    let max_loglik = -0.5 * n as f64 * (LN_2PI + sigma2.ln() + 1.0);
    Ok(RegressionFit {
        coefficients: beta,
        noise_variance: Some(sigma2),
        max_loglik,
        n_params: p + 1,
    })
}

/// Logistic regression MLE by IRLS with step halving. `r` holds 0/1 responses.
/// Converged when the largest coefficient step falls below 1e-8; declared
/// separated when the coefficient sup-norm passes 1e3 before converging.
pub fn fit_logistic(x: &DMatrix<f64>, r: &[f64]) -> Result<RegressionFit> {
    let n = x.nrows();
    let p = x.ncols();
    if n != r.len() {
        return Err(Error::InvalidConfig(format!(
            "design has {n} rows but response has {}",
            r.len()
        )));
    }
    if n <= p {
        return Err(Error::InsufficientRows { rows: n, params: p });
    }
    let ones = r.iter().filter(|&&v| v > 0.5).count();
    if ones == 0 || ones == n {
        return Err(Error::ConstantResponse);
    }

    let mut beta = vec![0.0; p];
    let mut eta = vec![0.0; n];
    let mut loglik = logistic_loglik_eta(&eta, r);

    for _ in 0..IRLS_MAX_ITER {
        // Score and weighted information at the current beta.
        let mut xtwx = DMatrix::<f64>::zeros(p, p);
        let mut score = vec![0.0; p];
        for i in 0..n {
            let mu = inv_logit(eta[i]);
            let w = (mu * (1.0 - mu)).max(1e-10);
            let resid = r[i] - mu;
            for a in 0..p {
                let xa = x[(i, a)];
                score[a] += xa * resid;
                for b in a..p {
                    xtwx[(a, b)] += w * xa * x[(i, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        let chol = SpdCholesky::decompose(&xtwx, RANK_TOL)?;
        let delta = chol.solve(&score);

        // Step halving keeps the likelihood from decreasing.
        let mut step = 1.0;
        let mut accepted = false;
        let mut new_beta = beta.clone();
        let mut new_eta = eta.clone();
        let mut new_loglik = loglik;
        for _ in 0..30 {
            for a in 0..p {
                new_beta[a] = beta[a] + step * delta[a];
            }
            for i in 0..n {
                let mut e = 0.0;
                for a in 0..p {
                    e += x[(i, a)] * new_beta[a];
                }
                new_eta[i] = e;
            }
            new_loglik = logistic_loglik_eta(&new_eta, r);
            if new_loglik >= loglik - 1e-12 {
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations: IRLS_MAX_ITER,
            });
        }
        let max_change = delta.iter().map(|d| (d * step).abs()).fold(0.0, f64::max);
        beta = new_beta.clone();
        eta = new_eta.clone();
        loglik = new_loglik;

        let sup_norm = beta.iter().map(|b| b.abs()).fold(0.0, f64::max);
        if sup_norm > SEPARATION_NORM {
            return Err(Error::Separation);
        }
        // A binary likelihood at its supremum of zero means every response is
        // fitted perfectly: the MLE sits at infinity. The norm check alone
        // can miss this inside the iteration cap because IRLS climbs the
        // divergence ray only linearly.
        if loglik > -1e-8 {
            return Err(Error::Separation);
        }
        if max_change < IRLS_TOL {
            return Ok(RegressionFit {
                coefficients: beta,
                noise_variance: None,
                max_loglik: loglik,
                n_params: p,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: IRLS_MAX_ITER,
    })
}

/// Bernoulli log-likelihood of 0/1 responses under a fixed coefficient
/// vector; used when pooling fits across imputations.
pub fn logistic_loglik(x: &DMatrix<f64>, r: &[f64], beta: &[f64]) -> f64 {
    let n = x.nrows();
    let p = x.ncols();
    debug_assert_eq!(r.len(), n);
    debug_assert_eq!(beta.len(), p);
    let mut ll = 0.0;
    for i in 0..n {
        let mut eta = 0.0;
        for a in 0..p {
            eta += x[(i, a)] * beta[a];
        }
        ll += r[i] * eta - ln1p_exp(eta);
    }
    ll
}

fn logistic_loglik_eta(eta: &[f64], r: &[f64]) -> f64 {
    eta.iter()
        .zip(r)
        .map(|(&e, &ri)| ri * e - ln1p_exp(e))
        .sum()
}

/// Likelihood ratio test of a null fit against a nesting alternative.
pub fn lrt(null_fit: &RegressionFit, alt_fit: &RegressionFit) -> Result<LrtResult> {
    if alt_fit.n_params <= null_fit.n_params {
        return Err(Error::NotNested {
            null_params: null_fit.n_params,
            alt_params: alt_fit.n_params,
        });
    }
    if alt_fit.max_loglik < null_fit.max_loglik - 1e-8 {
        return Err(Error::NestingViolated {
            null: null_fit.max_loglik,
            alt: alt_fit.max_loglik,
        });
    }
    let df = alt_fit.n_params - null_fit.n_params;
    let statistic = (2.0 * (alt_fit.max_loglik - null_fit.max_loglik)).max(0.0);
    Ok(LrtResult {
        statistic,
        df,
        p_value: chisq_sf(statistic, df),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn design(cols: &[&[f64]]) -> DMatrix<f64> {
        let n = cols[0].len();
        DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
    }

    #[test]
    fn ols_intercept_only() {
        // y = (1,2,3): mean 2, MLE variance RSS/n = 2/3.
        let x = design(&[&[1.0, 1.0, 1.0]]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let fit = fit_gaussian_ols(&x, &y).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.noise_variance.unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.max_loglik, -3.64861793745177, epsilon = 1e-10);
        assert_eq!(fit.n_params, 2);
    }

    #[test]
    fn ols_exact_fit_is_degenerate() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let x = design(&[&[1.0; 4], &xs]);
        let y = DVector::from_vec(xs.iter().map(|v| 2.0 * v).collect());
        assert!(matches!(fit_gaussian_ols(&x, &y), Err(Error::DegenerateFit)));
    }

    #[test]
    fn ols_duplicate_column_is_singular() {
        let xs = [1.0, 2.0, 3.0, 5.0, 7.0];
        let x = design(&[&[1.0; 5], &xs, &xs]);
        let y = DVector::from_vec(vec![1.0, 0.0, 2.0, 1.5, 0.5]);
        assert!(matches!(
            fit_gaussian_ols(&x, &y),
            Err(Error::SingularDesign)
        ));
    }

    #[test]
    fn ols_residuals_orthogonal_to_design() {
        let x = design(&[
            &[1.0; 6],
            &[0.3, -1.2, 0.7, 2.2, -0.4, 1.1],
            &[1.5, 0.2, -0.8, 0.9, 2.0, -1.3],
        ]);
        let y = DVector::from_vec(vec![0.7, -0.2, 1.4, 3.1, 0.3, 1.9]);
        let fit = fit_gaussian_ols(&x, &y).unwrap();
        let beta = DVector::from_vec(fit.coefficients.clone());
        let resid = &y - &x * beta;
        let xt_e = x.transpose() * resid;
        for v in xt_e.iter() {
            assert!(v.abs() < 1e-10, "residual not orthogonal: {v}");
        }
    }

    #[test]
    fn logistic_balanced_intercept_is_zero() {
        let x = design(&[&[1.0; 12]]);
        let r: Vec<f64> = (0..12).map(|i| if i < 6 { 1.0 } else { 0.0 }).collect();
        let fit = fit_logistic(&x, &r).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 0.0, epsilon = 1e-10);
        assert_eq!(fit.n_params, 1);
    }

    #[test]
    fn logistic_constant_response_rejected() {
        let x = design(&[&[1.0; 5]]);
        assert!(matches!(
            fit_logistic(&x, &[1.0; 5]),
            Err(Error::ConstantResponse)
        ));
    }

    #[test]
    fn logistic_separation_detected() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let r: Vec<f64> = xs.iter().map(|&v| if v > 4.5 { 1.0 } else { 0.0 }).collect();
        let x = design(&[&[1.0; 10], &xs]);
        assert!(matches!(fit_logistic(&x, &r), Err(Error::Separation)));
    }

    #[test]
    fn logistic_score_vanishes_at_mle() {
        let xs = [0.5, -1.1, 0.3, 2.0, -0.7, 1.4, 0.1, -1.9, 0.9, -0.2];
        let r = [1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0];
        let x = design(&[&[1.0; 10], &xs]);
        let fit = fit_logistic(&x, &r).unwrap();
        let mut score = [0.0; 2];
        for i in 0..10 {
            let eta = fit.coefficients[0] + fit.coefficients[1] * xs[i];
            let mu = inv_logit(eta);
            score[0] += r[i] - mu;
            score[1] += xs[i] * (r[i] - mu);
        }
        assert!(score[0].abs() < 1e-6 && score[1].abs() < 1e-6);
    }

    #[test]
    fn lrt_identical_fits() {
        let fit = RegressionFit {
            coefficients: vec![0.0],
            noise_variance: None,
            max_loglik: -10.0,
            n_params: 1,
        };
        let mut alt = fit.clone();
        alt.n_params = 2;
        let res = lrt(&fit, &alt).unwrap();
        assert_eq!(res.statistic, 0.0);
        assert_eq!(res.df, 1);
        assert_eq!(res.p_value, 1.0);
    }

    #[test]
    fn lrt_frozen_p_value() {
        let null = RegressionFit {
            coefficients: vec![],
            noise_variance: None,
            max_loglik: -1.9205,
            n_params: 1,
        };
        let alt = RegressionFit {
            coefficients: vec![],
            noise_variance: None,
            max_loglik: 0.0,
            n_params: 2,
        };
        let res = lrt(&null, &alt).unwrap();
        assert_abs_diff_eq!(res.statistic, 3.841, epsilon = 1e-12);
        assert_abs_diff_eq!(res.p_value, 0.05, epsilon = 1e-3);
    }

    #[test]
    fn lrt_rejects_non_nested_and_violated() {
        let null = RegressionFit {
            coefficients: vec![],
            noise_variance: None,
            max_loglik: -5.0,
            n_params: 2,
        };
        let mut alt = null.clone();
        alt.n_params = 2;
        assert!(matches!(lrt(&null, &alt), Err(Error::NotNested { .. })));
        alt.n_params = 3;
        alt.max_loglik = -6.5;
        assert!(matches!(lrt(&null, &alt), Err(Error::NestingViolated { .. })));
    }
}
