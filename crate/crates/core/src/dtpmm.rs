//! Direct test of a postulated missingness mechanism.
//!
//! For each missing-prone column k, the null says the logistic regression of
//! its indicator depends only on the fully observed columns; the alternative
//! adds the other missing-prone columns. Missing values are multiply imputed
//! under the null by chained Gaussian regressions with proper posterior
//! parameter draws, the null/alternative pair is fit on every completed data
//! set, and the likelihood ratio statistics are combined across imputations
//! with the pooled-coefficient re-evaluation rule, referred to an F
//! distribution.

use nalgebra::{DMatrix, DVector};
use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::numerics::linalg::SpdCholesky;
use crate::numerics::regression::{fit_gaussian_ols, fit_logistic, logistic_loglik, lrt, LrtResult};
use crate::numerics::rng::RandomStream;
use crate::numerics::samplers::standard_normal;
use crate::numerics::special::{chisq_sf, f_sf};
use crate::report::{
    Decision, DiagnosticReport, IndicatorRecord, MiDetail, TestKind, TestSettings,
};

#[derive(Clone, Copy, Debug)]
pub struct DtpmmSettings {
    pub alpha_level: f64,
    /// Number of imputations M.
    pub imputations: usize,
    /// Chained-equation cycles per imputation.
    pub cycles: usize,
    /// Include the indicator's own column among the alternative predictors.
    /// Off by default: that column is imputed under the null wherever the
    /// indicator is 0, leaving its alternative coefficient unidentified.
    pub include_self: bool,
}

impl Default for DtpmmSettings {
    fn default() -> Self {
        DtpmmSettings {
            alpha_level: 0.05,
            imputations: 20,
            cycles: 10,
            include_self: false,
        }
    }
}

/// Null and alternative predictor sets for one indicator's logistic
/// mechanism. The null set is always a strict subset of the alternative.
#[derive(Clone, Debug)]
pub struct PostulatedMechanism {
    pub indicator_col: usize,
    pub null_predictors: Vec<usize>,
    pub alt_predictors: Vec<usize>,
}

impl PostulatedMechanism {
    /// Null: the fully observed columns. Alternative: additionally every
    /// other missing-prone column, plus the indicator's own column when
    /// `include_self` is set.
    pub fn for_indicator(dm: &DataMatrix, k: usize, include_self: bool) -> Result<Self> {
        if !dm.missing_prone_cols().contains(&k) {
            return Err(Error::NotMissingProne { col: k });
        }
        let null_predictors: Vec<usize> = dm.fully_observed_cols().to_vec();
        let mut alt_predictors = null_predictors.clone();
        for &c in dm.missing_prone_cols() {
            if c != k || include_self {
                alt_predictors.push(c);
            }
        }
        if alt_predictors.len() == null_predictors.len() {
            return Err(Error::NotNested {
                null_params: null_predictors.len() + 1,
                alt_params: alt_predictors.len() + 1,
            });
        }
        Ok(PostulatedMechanism {
            indicator_col: k,
            null_predictors,
            alt_predictors,
        })
    }

    pub fn df(&self) -> usize {
        self.alt_predictors.len() - self.null_predictors.len()
    }
}

/// Result of a combined multiple-imputation likelihood ratio test.
#[derive(Clone, Debug)]
pub struct MiResult {
    pub imputations: usize,
    pub usable_imputations: usize,
    pub per_imputation_stats: Vec<f64>,
    pub combined_statistic: f64,
    pub df_num: usize,
    pub df_den: f64,
    pub r_tilde: f64,
    pub clamped: bool,
    pub p_value: f64,
}

/// Generate M completed data sets by proper multiple imputation that ignores
/// the indicators: chained Gaussian regressions over all columns, with the
/// regression parameters drawn from their approximate posterior for each
/// imputation, starting from a random-donor fill. Observed cells are never
/// altered.
pub fn impute_under_null(
    dm: &DataMatrix,
    m: usize,
    cycles: usize,
    stream: &RandomStream,
) -> Result<Vec<DMatrix<f64>>> {
    if m < 2 {
        return Err(Error::TooFewImputations { m });
    }
    let n = dm.n_rows();
    let j = dm.n_cols();
    let needed = 10.max(2 * j);
    for &col in dm.missing_prone_cols() {
        let observed = n - dm.missing_count(col);
        if observed < needed {
            return Err(Error::InsufficientObserved {
                col,
                needed,
                found: observed,
            });
        }
    }

    // Columns that actually need imputation this run.
    let targets: Vec<usize> = dm
        .missing_prone_cols()
        .iter()
        .copied()
        .filter(|&c| dm.missing_count(c) > 0)
        .collect();

    (0..m)
        .into_par_iter()
        .map(|imp| {
            let mut rng = stream.child(imp as u64);
            let mut completed = DMatrix::from_fn(n, j, |r, c| {
                if dm.observed(r, c) {
                    dm.value(r, c)
                } else {
                    0.0
                }
            });
            // Random-donor initialization per missing cell.
            for &c in &targets {
                let donors: Vec<f64> = (0..n)
                    .filter(|&r| dm.observed(r, c))
                    .map(|r| dm.value(r, c))
                    .collect();
                for r in 0..n {
                    if !dm.observed(r, c) {
                        completed[(r, c)] = donors[rng.index(donors.len())];
                    }
                }
            }
            for _ in 0..cycles {
                for &c in &targets {
                    impute_column(dm, &mut completed, c, &mut rng)?;
                }
            }
            Ok(completed)
        })
        .collect()
}

/// One chained-equation step for column `c`: fit the Gaussian regression of
/// its observed values on all other columns (current completed values), draw
/// the residual variance and coefficients from their posterior, and redraw
/// the missing cells.
fn impute_column(
    dm: &DataMatrix,
    completed: &mut DMatrix<f64>,
    c: usize,
    rng: &mut RandomStream,
) -> Result<()> {
    let n = dm.n_rows();
    let j = dm.n_cols();
    let predictors: Vec<usize> = (0..j).filter(|&p| p != c).collect();
    let p = predictors.len() + 1;

    let obs_rows: Vec<usize> = (0..n).filter(|&r| dm.observed(r, c)).collect();
    let n_obs = obs_rows.len();
    let x = DMatrix::from_fn(n_obs, p, |r, col| {
        if col == 0 {
            1.0
        } else {
            completed[(obs_rows[r], predictors[col - 1])]
        }
    });
    let y = DVector::from_iterator(n_obs, obs_rows.iter().map(|&r| dm.value(r, c)));
    let fit = fit_gaussian_ols(&x, &y)?;

    // sigma^2* = RSS / chi^2_{n-p}; beta* ~ N(beta_hat, sigma^2* (X'X)^{-1}).
    let rss = fit.noise_variance.expect("gaussian fit") * n_obs as f64;
    let chi = ChiSquared::new((n_obs - p) as f64).expect("positive df");
    let sigma2 = rss / chi.sample(rng);
    let sigma = sigma2.sqrt();

    let xtx = x.transpose() * &x;
    let chol = SpdCholesky::decompose(&xtx, 1e-12)?;
    let z: Vec<f64> = (0..p).map(|_| standard_normal(rng)).collect();
    let spread = chol.solve_transposed_factor(&z);
    let beta: Vec<f64> = fit
        .coefficients
        .iter()
        .zip(&spread)
        .map(|(b, s)| b + sigma * s)
        .collect();

    for r in 0..n {
        if !dm.observed(r, c) {
            let mut mu = beta[0];
            for (idx, &pcol) in predictors.iter().enumerate() {
                mu += beta[idx + 1] * completed[(r, pcol)];
            }
            completed[(r, c)] = mu + sigma * standard_normal(rng);
        }
    }
    Ok(())
}

/// Fits of the null/alternative mechanism pair on one completed data set.
#[derive(Clone, Debug)]
pub struct MechanismLrt {
    pub lrt: LrtResult,
    pub null_coefficients: Vec<f64>,
    pub alt_coefficients: Vec<f64>,
}

/// Fit both logistic mechanisms for `mech` on a completed (no missing cells)
/// matrix; the response is the original indicator column of the data. The
/// test has one degree of freedom per alternative-only predictor.
pub fn lrt_mechanism(
    dm: &DataMatrix,
    completed: &DMatrix<f64>,
    mech: &PostulatedMechanism,
) -> Result<MechanismLrt> {
    let n = dm.n_rows();
    debug_assert_eq!(completed.nrows(), n);
    let response: Vec<f64> = (0..n)
        .map(|i| {
            if dm.observed(i, mech.indicator_col) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let x_null = design_from(completed, &mech.null_predictors);
    let x_alt = design_from(completed, &mech.alt_predictors);
    let null_fit = fit_logistic(&x_null, &response)?;
    let alt_fit = fit_logistic(&x_alt, &response)?;
    let res = lrt(&null_fit, &alt_fit)?;
    Ok(MechanismLrt {
        lrt: res,
        null_coefficients: null_fit.coefficients,
        alt_coefficients: alt_fit.coefficients,
    })
}

fn design_from(completed: &DMatrix<f64>, predictors: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(completed.nrows(), predictors.len() + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            completed[(r, predictors[c - 1])]
        }
    })
}

/// Combine per-imputation likelihood ratio statistics. `stats` holds the M
/// per-imputation statistics; `stats_at_pooled` holds the statistics
/// re-evaluated on each completed data set at the across-imputation averages
/// of the null and alternative coefficient vectors. The relative increase in
/// variance is floored at zero, as is the pooled statistic average.
pub fn combine_lrt_mi(stats: &[f64], stats_at_pooled: &[f64], df_num: usize) -> Result<MiResult> {
    let m = stats.len();
    if m < 2 || stats_at_pooled.len() != m {
        return Err(Error::CombiningFailed {
            usable: m,
            total: stats_at_pooled.len().max(m),
        });
    }
    if df_num == 0 {
        return Err(Error::NotNested {
            null_params: 0,
            alt_params: 0,
        });
    }
    let k = df_num as f64;
    let mf = m as f64;
    let d_bar = stats.iter().sum::<f64>() / mf;
    let d_tilde_raw = stats_at_pooled.iter().sum::<f64>() / mf;
    let mut clamped = false;
    let d_tilde = if d_tilde_raw < 0.0 {
        clamped = true;
        0.0
    } else {
        d_tilde_raw
    };
    let r_raw = (mf + 1.0) * (d_bar - d_tilde) / (k * (mf - 1.0));
    let r_tilde = if r_raw < 0.0 {
        clamped = true;
        0.0
    } else {
        r_raw
    };
    let combined_statistic = d_tilde / (k * (1.0 + r_tilde));

    let (df_den, p_value) = if r_tilde <= 1e-12 {
        // Zero between-imputation variance: the F reference degenerates to
        // chi-square(k)/k.
        (f64::INFINITY, chisq_sf(k * combined_statistic, df_num))
    } else {
        let t = k * (mf - 1.0);
        let w = if t > 4.0 {
            4.0 + (t - 4.0) * (1.0 + (1.0 - 2.0 / t) / r_tilde).powi(2)
        } else {
            t * (1.0 + 1.0 / k) * (1.0 + 1.0 / r_tilde).powi(2) / 2.0
        };
        (w, f_sf(combined_statistic, k, w))
    };

    Ok(MiResult {
        imputations: m,
        usable_imputations: m,
        per_imputation_stats: stats.to_vec(),
        combined_statistic,
        df_num,
        df_den,
        r_tilde,
        clamped,
        p_value,
    })
}

/// Combined test for one indicator across completed data sets. Imputations
/// where either logistic fit separates are dropped; at least two usable ones
/// are required.
pub fn dtpmm_indicator_test(
    dm: &DataMatrix,
    completed: &[DMatrix<f64>],
    mech: &PostulatedMechanism,
) -> Result<MiResult> {
    let total = completed.len();
    let fits: Vec<Option<MechanismLrt>> = completed
        .par_iter()
        .map(|cd| match lrt_mechanism(dm, cd, mech) {
            Ok(f) => Ok(Some(f)),
            Err(Error::Separation) | Err(Error::NoConvergence { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let usable: Vec<(usize, &MechanismLrt)> = fits
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.as_ref().map(|f| (i, f)))
        .collect();
    if usable.len() < 2 {
        return Err(Error::CombiningFailed {
            usable: usable.len(),
            total,
        });
    }

    let n_null = mech.null_predictors.len() + 1;
    let n_alt = mech.alt_predictors.len() + 1;
    let mut pooled_null = vec![0.0; n_null];
    let mut pooled_alt = vec![0.0; n_alt];
    for (_, f) in &usable {
        for (acc, v) in pooled_null.iter_mut().zip(&f.null_coefficients) {
            *acc += v;
        }
        for (acc, v) in pooled_alt.iter_mut().zip(&f.alt_coefficients) {
            *acc += v;
        }
    }
    let mu = usable.len() as f64;
    pooled_null.iter_mut().for_each(|v| *v /= mu);
    pooled_alt.iter_mut().for_each(|v| *v /= mu);

    let response: Vec<f64> = (0..dm.n_rows())
        .map(|i| {
            if dm.observed(i, mech.indicator_col) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let stats: Vec<f64> = usable.iter().map(|(_, f)| f.lrt.statistic).collect();
    let stats_at_pooled: Vec<f64> = usable
        .iter()
        .map(|(i, _)| {
            let cd = &completed[*i];
            let x_null = design_from(cd, &mech.null_predictors);
            let x_alt = design_from(cd, &mech.alt_predictors);
            2.0 * (logistic_loglik(&x_alt, &response, &pooled_alt)
                - logistic_loglik(&x_null, &response, &pooled_null))
        })
        .collect();

    let mut result = combine_lrt_mi(&stats, &stats_at_pooled, mech.df())?;
    result.imputations = total;
    result.usable_imputations = usable.len();
    Ok(result)
}

/// Run the postulated-mechanism diagnostic for every missing-prone column.
/// One combined test per indicator, no cross-indicator correction. The same
/// M completed data sets serve all indicators; the imputation model ignores
/// the indicators entirely, which is what imputing under the null requires.
pub fn dtpmm_run(
    dm: &DataMatrix,
    settings: &DtpmmSettings,
    stream: &RandomStream,
) -> Result<DiagnosticReport> {
    let missing_prone = dm.missing_prone_cols().to_vec();
    if missing_prone.is_empty() {
        return Err(Error::NothingToTest);
    }
    let completed = impute_under_null(dm, settings.imputations, settings.cycles, stream)?;

    let mut per_indicator = Vec::new();
    for &k in &missing_prone {
        let record = match PostulatedMechanism::for_indicator(dm, k, settings.include_self)
            .and_then(|mech| dtpmm_indicator_test(dm, &completed, &mech).map(|r| (mech, r)))
        {
            Ok((mech, r)) => {
                let decision = if r.p_value <= settings.alpha_level {
                    Decision::Reject
                } else {
                    Decision::FailToReject
                };
                IndicatorRecord {
                    col: k,
                    col_name: dm.col_name(k).to_string(),
                    decision: Some(decision),
                    evidence: Some(r.p_value),
                    mi: Some(MiDetail {
                        imputations: r.imputations,
                        usable_imputations: r.usable_imputations,
                        per_imputation_stats: r.per_imputation_stats.clone(),
                        combined_statistic: r.combined_statistic,
                        df_num: r.df_num,
                        df_den: r.df_den,
                        r_tilde: r.r_tilde,
                        clamped: r.clamped,
                        p_value: r.p_value,
                        includes_self: settings.include_self,
                        null_predictors: mech.null_predictors.clone(),
                        alt_predictors: mech.alt_predictors.clone(),
                    }),
                    error: None,
                }
            }
            Err(e) => IndicatorRecord {
                col: k,
                col_name: dm.col_name(k).to_string(),
                decision: None,
                evidence: None,
                mi: None,
                error: Some(e.to_string()),
            },
        };
        per_indicator.push(record);
    }

    Ok(DiagnosticReport {
        test: TestKind::Dtpmm,
        alpha_level: settings.alpha_level,
        settings: TestSettings::Dtpmm {
            alpha_level: settings.alpha_level,
            imputations: settings.imputations,
            cycles: settings.cycles,
            include_self: settings.include_self,
        },
        per_pair: Vec::new(),
        per_indicator,
        warnings: Vec::new(),
    })
}
