//! Comparison-of-conditional-means diagnostic.
//!
//! For every ordered pair (target j, indicator k) of missing-prone columns,
//! regress the observed values of column j on the fully observed columns and
//! test, by likelihood ratio, whether adding the indicator of column k (main
//! effect plus interactions with every fully observed column) improves the
//! fit. A shift in the conditional regression with the other column's
//! missingness contradicts the conditional independence the missingness
//! mechanism is supposed to satisfy.

use nalgebra::{DMatrix, DVector};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::numerics::regression::{fit_gaussian_ols, lrt};
use crate::report::{
    adjust_p_values, Correction, Decision, DiagnosticReport, IndicatorRecord, PairOutcome,
    PairTestRecord, SkipReason, TestKind, TestSettings,
};

#[derive(Clone, Copy, Debug)]
pub struct CcmSettings {
    pub alpha_level: f64,
    pub correction: Correction,
    /// Cross the indicator with every fully observed column in the
    /// alternative model. Off, the alternative adds the indicator main
    /// effect only (df = 1): a pure shift test stays calibrated when the
    /// target column's own selection bends or spreads the conditional
    /// distribution, where the crossed version over-rejects.
    pub interactions: bool,
}

impl Default for CcmSettings {
    fn default() -> Self {
        CcmSettings {
            alpha_level: 0.05,
            correction: Correction::Bonferroni,
            interactions: false,
        }
    }
}

/// Test one ordered pair with the default settings' model form.
pub fn ccm_pair_test(dm: &DataMatrix, j: usize, k: usize) -> Result<PairTestRecord> {
    ccm_pair_test_with(dm, j, k, CcmSettings::default().interactions)
}

/// Test one ordered pair: target column `j`, indicator column `k`. Both must
/// be missing-prone and distinct. Rows with the target missing are dropped.
/// The pair is skipped (not errored) when the two mask columns are identical,
/// when the indicator is constant on the retained rows, or when too few rows
/// remain to fit the alternative model with residual degrees of freedom.
pub fn ccm_pair_test_with(
    dm: &DataMatrix,
    j: usize,
    k: usize,
    interactions: bool,
) -> Result<PairTestRecord> {
    if !dm.missing_prone_cols().contains(&j) || !dm.missing_prone_cols().contains(&k) || j == k {
        return Err(Error::InvalidConfig(format!(
            "pair ({j},{k}) must be two distinct missing-prone columns"
        )));
    }
    let fully_observed = dm.fully_observed_cols();
    let rows: Vec<usize> = (0..dm.n_rows()).filter(|&i| dm.observed(i, j)).collect();
    let n_used = rows.len();

    let skip = |reason| {
        Ok(PairTestRecord {
            target_col: j,
            indicator_col: k,
            n_used,
            outcome: PairOutcome::Skipped { reason },
        })
    };

    if dm.same_mask_pattern(j, k) {
        return skip(SkipReason::SamePattern);
    }
    let indicator: Vec<f64> = rows
        .iter()
        .map(|&i| if dm.observed(i, k) { 1.0 } else { 0.0 })
        .collect();
    let n_ones = indicator.iter().filter(|&&v| v > 0.5).count();
    if n_ones == 0 || n_ones == n_used {
        return skip(SkipReason::ConstantIndicator);
    }
    // Null: intercept + fully observed columns. Alternative: null terms plus
    // the indicator main effect, and optionally its interaction with each
    // fully observed column. Require two residual degrees of freedom.
    let p_null = 1 + fully_observed.len();
    let p_alt = if interactions { 2 * p_null } else { p_null + 1 };
    if n_used < p_alt + 2 {
        return skip(SkipReason::TooFewRows);
    }

    let y = DVector::from_iterator(n_used, rows.iter().map(|&i| dm.value(i, j)));
    let x_null = DMatrix::from_fn(n_used, p_null, |r, c| {
        if c == 0 {
            1.0
        } else {
            dm.value(rows[r], fully_observed[c - 1])
        }
    });
    let x_alt = DMatrix::from_fn(n_used, p_alt, |r, c| {
        if c < p_null {
            x_null[(r, c)]
        } else {
            indicator[r] * x_null[(r, c - p_null)]
        }
    });

    let null_fit = fit_gaussian_ols(&x_null, &y)?;
    let alt_fit = fit_gaussian_ols(&x_alt, &y)?;
    let res = lrt(&null_fit, &alt_fit)?;
    Ok(PairTestRecord {
        target_col: j,
        indicator_col: k,
        n_used,
        outcome: PairOutcome::Tested {
            statistic: res.statistic,
            df: res.df,
            p_raw: res.p_value,
            p_corrected: None,
        },
    })
}

/// Run all ordered pairs of missing-prone columns, apply the family-wise
/// correction across every non-skipped test, and aggregate a decision per
/// indicator: reject when any non-skipped pair with that indicator has a
/// corrected p-value at or below the alpha level.
pub fn ccm_run(dm: &DataMatrix, settings: &CcmSettings) -> Result<DiagnosticReport> {
    let missing_prone = dm.missing_prone_cols();
    if missing_prone.len() < 2 {
        return Err(Error::NothingToTest);
    }
    if dm.fully_observed_cols().is_empty() {
        return Err(Error::UnsupportedDesign);
    }

    let mut per_pair = Vec::new();
    for &j in missing_prone {
        for &k in missing_prone {
            if j != k {
                per_pair.push(ccm_pair_test_with(dm, j, k, settings.interactions)?);
            }
        }
    }

    let mut warnings = Vec::new();
    let all_same_pattern = per_pair.iter().all(|p| {
        matches!(
            p.outcome,
            PairOutcome::Skipped {
                reason: SkipReason::SamePattern
            }
        )
    });

    let mut per_indicator = Vec::new();
    if all_same_pattern {
        warnings.push(
            "every pair shares an identical missingness pattern; no conditional-means test is \
             possible, and mutual conditional independence of the indicators is itself suspect"
                .to_string(),
        );
    } else {
        // Family-wise correction over the tested pairs only.
        let tested_idx: Vec<usize> = per_pair
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_skipped())
            .map(|(i, _)| i)
            .collect();
        let raw: Vec<f64> = tested_idx
            .iter()
            .map(|&i| match per_pair[i].outcome {
                PairOutcome::Tested { p_raw, .. } => p_raw,
                _ => unreachable!(),
            })
            .collect();
        let adjusted = adjust_p_values(settings.correction, &raw);
        for (&i, &adj) in tested_idx.iter().zip(&adjusted) {
            if let PairOutcome::Tested {
                ref mut p_corrected,
                ..
            } = per_pair[i].outcome
            {
                *p_corrected = Some(adj);
            }
        }

        for &k in missing_prone {
            let mut best: Option<f64> = None;
            for p in per_pair.iter().filter(|p| p.indicator_col == k) {
                if let PairOutcome::Tested {
                    p_corrected: Some(adj),
                    ..
                } = p.outcome
                {
                    best = Some(best.map_or(adj, |b: f64| b.min(adj)));
                }
            }
            let decision = match best {
                Some(adj) if adj <= settings.alpha_level => Decision::Reject,
                _ => Decision::FailToReject,
            };
            per_indicator.push(IndicatorRecord {
                col: k,
                col_name: dm.col_name(k).to_string(),
                decision: Some(decision),
                evidence: best,
                mi: None,
                error: None,
            });
        }
    }

    Ok(DiagnosticReport {
        test: TestKind::Ccm,
        alpha_level: settings.alpha_level,
        settings: TestSettings::Ccm {
            alpha_level: settings.alpha_level,
            correction: settings.correction,
        },
        per_pair,
        per_indicator,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataMatrix;
    use approx::assert_abs_diff_eq;

    /// Solve a small least squares problem by Gaussian elimination on the
    /// normal equations; independent of the library's fitting path.
    fn oracle_rss(cols: &[Vec<f64>], y: &[f64]) -> f64 {
        let p = cols.len();
        let n = y.len();
        let mut a = vec![vec![0.0; p + 1]; p];
        for r in 0..p {
            for c in 0..p {
                a[r][c] = (0..n).map(|i| cols[r][i] * cols[c][i]).sum();
            }
            a[r][p] = (0..n).map(|i| cols[r][i] * y[i]).sum();
        }
        for pivot in 0..p {
            let (best, _) = (pivot..p)
                .map(|r| (r, a[r][pivot].abs()))
                .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap();
            a.swap(pivot, best);
            let d = a[pivot][pivot];
            for c in pivot..=p {
                a[pivot][c] /= d;
            }
            for r in 0..p {
                if r != pivot {
                    let f = a[r][pivot];
                    for c in pivot..=p {
                        a[r][c] -= f * a[pivot][c];
                    }
                }
            }
        }
        let beta: Vec<f64> = (0..p).map(|r| a[r][p]).collect();
        (0..n)
            .map(|i| {
                let fit: f64 = (0..p).map(|c| cols[c][i] * beta[c]).sum();
                (y[i] - fit).powi(2)
            })
            .sum()
    }

    /// Three columns: y1 and y2 missing-prone, y3 fully observed. y2's mask
    /// is (0,0,0,1,1,1); y1 jumps by 10 where y2 is observed.
    fn shifted_fixture() -> DataMatrix {
        let y3 = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let r2 = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let noise = [0.1, -0.1, 0.1, -0.1, 0.1, -0.1];
        let mut values = Vec::new();
        let mut mask = Vec::new();
        for i in 0..6 {
            values.push(y3[i] + 10.0 * r2[i] + noise[i]);
            mask.push(true);
            values.push(if r2[i] > 0.5 { 1.0 } else { f64::NAN });
            mask.push(r2[i] > 0.5);
            values.push(y3[i]);
            mask.push(true);
        }
        DataMatrix::from_parts(
            values,
            mask,
            vec!["y1".into(), "y2".into(), "y3".into()],
            Some(vec![0, 1]),
        )
        .unwrap()
    }

    #[test]
    fn pair_test_matches_normal_equations_oracle() {
        let dm = shifted_fixture();
        let rec = ccm_pair_test_with(&dm, 0, 1, true).unwrap();
        let (stat, df, p) = match rec.outcome {
            PairOutcome::Tested {
                statistic, df, p_raw, ..
            } => (statistic, df, p_raw),
            ref other => panic!("expected a tested pair, got {other:?}"),
        };
        assert_eq!(rec.n_used, 6);
        assert_eq!(df, 2);

        let ones = vec![1.0; 6];
        let y3: Vec<f64> = (1..=6).map(|v| v as f64).collect();
        let r2 = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let r2y3: Vec<f64> = r2.iter().zip(&y3).map(|(a, b)| a * b).collect();
        let y1: Vec<f64> = (0..6).map(|i| dm.value(i, 0)).collect();
        let rss0 = oracle_rss(&[ones.clone(), y3.clone()], &y1);
        let rss1 = oracle_rss(&[ones, y3, r2, r2y3], &y1);
        let oracle_stat = 6.0 * (rss0 / rss1).ln();
        // Frozen from the oracle: rss0 = 33.8834..., rss1 = 0.05333...,
        // statistic = 38.7247...
        assert_abs_diff_eq!(oracle_stat, 38.7247188875037, epsilon = 1e-9);
        assert_abs_diff_eq!(stat, oracle_stat, epsilon = 1e-8);
        assert!(p < 0.001);
    }

    #[test]
    fn identical_patterns_are_skipped() {
        let mut values = Vec::new();
        let mut mask = Vec::new();
        let present = [true, false, true, true, false, true, true, true];
        for (i, &obs) in present.iter().enumerate() {
            for col in 0..2 {
                values.push(if obs { (i + col) as f64 } else { f64::NAN });
                mask.push(obs);
            }
            values.push(i as f64 * 0.5 - 1.0);
            mask.push(true);
        }
        let dm = DataMatrix::from_parts(
            values,
            mask,
            vec!["a".into(), "b".into(), "c".into()],
            None,
        )
        .unwrap();
        let rec = ccm_pair_test(&dm, 0, 1).unwrap();
        assert!(matches!(
            rec.outcome,
            PairOutcome::Skipped {
                reason: SkipReason::SamePattern
            }
        ));
    }

    #[test]
    fn run_counts_pairs_and_corrects() {
        let dm = shifted_fixture();
        let report = ccm_run(
            &dm,
            &CcmSettings {
                alpha_level: 0.05,
                correction: Correction::Bonferroni,
                interactions: true,
            },
        )
        .unwrap();
        // Two missing-prone columns: two ordered pairs.
        assert_eq!(report.per_pair.len(), 2);
        let tested: Vec<_> = report
            .per_pair
            .iter()
            .filter(|p| !p.is_skipped())
            .collect();
        for p in tested {
            if let PairOutcome::Tested {
                p_raw,
                p_corrected: Some(adj),
                ..
            } = p.outcome
            {
                let family = report.per_pair.iter().filter(|q| !q.is_skipped()).count();
                assert_abs_diff_eq!(adj, (p_raw * family as f64).min(1.0), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn run_requires_two_missing_prone() {
        let values = vec![1.0, 2.0, f64::NAN, 4.0, 3.0, 5.0];
        let mask = vec![true, true, false, true, true, true];
        let dm =
            DataMatrix::from_parts(values, mask, vec!["a".into(), "b".into()], None).unwrap();
        assert!(matches!(
            ccm_run(&dm, &CcmSettings::default()),
            Err(Error::NothingToTest)
        ));
    }

    #[test]
    fn run_requires_fully_observed_column() {
        let values = vec![1.0, f64::NAN, f64::NAN, 4.0, 3.0, 5.0, 6.0, 7.0];
        let mask = vec![true, false, false, true, true, true, true, true];
        let dm =
            DataMatrix::from_parts(values, mask, vec!["a".into(), "b".into()], None).unwrap();
        assert!(matches!(
            ccm_run(&dm, &CcmSettings::default()),
            Err(Error::UnsupportedDesign)
        ));
    }

    #[test]
    fn all_same_pattern_reports_warning_and_no_decisions() {
        let mut values = Vec::new();
        let mut mask = Vec::new();
        let present = [true, false, true, true, false, true, true, true];
        for (i, &obs) in present.iter().enumerate() {
            for col in 0..2 {
                values.push(if obs { (i * (col + 1)) as f64 } else { f64::NAN });
                mask.push(obs);
            }
            values.push(i as f64);
            mask.push(true);
        }
        let dm = DataMatrix::from_parts(
            values,
            mask,
            vec!["a".into(), "b".into(), "c".into()],
            None,
        )
        .unwrap();
        let report = ccm_run(&dm, &CcmSettings::default()).unwrap();
        assert!(report.per_indicator.is_empty());
        assert_eq!(report.warnings.len(), 1);
    }
}
