//! Report types shared by the three diagnostics, plus family-wise p-value
//! corrections and text/JSON rendering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    FailToReject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    SamePattern,
    ConstantIndicator,
    TooFewRows,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    Bonferroni,
    Holm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TestKind {
    Ccm,
    Dtpmm,
    Gc,
}

impl TestKind {
    pub fn label(&self) -> &'static str {
        match self {
            TestKind::Ccm => "CCM",
            TestKind::Dtpmm => "DTPMM",
            TestKind::Gc => "GC",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CCM" => Ok(TestKind::Ccm),
            "DTPMM" => Ok(TestKind::Dtpmm),
            "GC" => Ok(TestKind::Gc),
            other => Err(Error::InvalidConfig(format!("unknown test {other:?}"))),
        }
    }
}

/// Outcome of one ordered-pair test. Exactly one of the tested/skipped
/// states applies to a pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PairOutcome {
    /// Likelihood ratio test result (conditional-means diagnostic).
    Tested {
        statistic: f64,
        df: usize,
        p_raw: f64,
        /// Family-wise corrected p-value, filled in by the run-level driver.
        p_corrected: Option<f64>,
    },
    Skipped { reason: SkipReason },
    /// Posterior credible interval for a latent partial correlation
    /// (Gaussian copula diagnostic).
    Posterior {
        mean: f64,
        lower: f64,
        upper: f64,
        n_draws: usize,
        excludes_zero: bool,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairTestRecord {
    pub target_col: usize,
    pub indicator_col: usize,
    /// Rows with the target column observed.
    pub n_used: usize,
    pub outcome: PairOutcome,
}

impl PairTestRecord {
    pub fn is_skipped(&self) -> bool {
        matches!(self.outcome, PairOutcome::Skipped { .. })
    }
}

/// Detail of the multiple-imputation combined test for one indicator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MiDetail {
    pub imputations: usize,
    pub usable_imputations: usize,
    pub per_imputation_stats: Vec<f64>,
    pub combined_statistic: f64,
    pub df_num: usize,
    /// Denominator degrees of freedom; infinite when the between-imputation
    /// variance collapses to zero.
    pub df_den: f64,
    pub r_tilde: f64,
    /// True when the relative-increase or combined statistic was clamped at
    /// zero because the average exceeded the pooled evaluation numerically.
    pub clamped: bool,
    pub p_value: f64,
    pub includes_self: bool,
    pub null_predictors: Vec<usize>,
    pub alt_predictors: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndicatorRecord {
    pub col: usize,
    pub col_name: String,
    pub decision: Option<Decision>,
    /// Smallest relevant corrected p-value or posterior tail evidence.
    pub evidence: Option<f64>,
    pub mi: Option<MiDetail>,
    pub error: Option<String>,
}

/// Sampler / test settings echoed into reports so a run is reproducible
/// from its own output.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "test")]
pub enum TestSettings {
    Ccm {
        alpha_level: f64,
        correction: Correction,
    },
    Dtpmm {
        alpha_level: f64,
        imputations: usize,
        cycles: usize,
        include_self: bool,
    },
    Gc {
        credible_level: f64,
        n_iter: usize,
        burn_in: usize,
        thin: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub test: TestKind,
    pub alpha_level: f64,
    pub settings: TestSettings,
    pub per_pair: Vec<PairTestRecord>,
    pub per_indicator: Vec<IndicatorRecord>,
    pub warnings: Vec<String>,
}

impl DiagnosticReport {
    pub fn decision_for(&self, col: usize) -> Option<Decision> {
        self.per_indicator
            .iter()
            .find(|r| r.col == col)
            .and_then(|r| r.decision)
    }

    pub fn indicator_error(&self, col: usize) -> Option<&str> {
        self.per_indicator
            .iter()
            .find(|r| r.col == col)
            .and_then(|r| r.error.as_deref())
    }

    /// Columns whose indicator the test rejects.
    pub fn flagged_cols(&self) -> Vec<usize> {
        self.per_indicator
            .iter()
            .filter(|r| r.decision == Some(Decision::Reject))
            .map(|r| r.col)
            .collect()
    }

    /// Per-indicator decisions as a map, for report assembly.
    pub fn decision_map(&self) -> BTreeMap<usize, Decision> {
        self.per_indicator
            .iter()
            .filter_map(|r| r.decision.map(|d| (r.col, d)))
            .collect()
    }
}

/// Family-wise corrected p-values, returned in the input order.
pub fn adjust_p_values(correction: Correction, raw: &[f64]) -> Vec<f64> {
    let m = raw.len();
    if m == 0 {
        return Vec::new();
    }
    match correction {
        Correction::Bonferroni => raw.iter().map(|p| (p * m as f64).min(1.0)).collect(),
        Correction::Holm => {
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| raw[a].partial_cmp(&raw[b]).expect("finite p-values"));
            let mut adjusted = vec![0.0; m];
            let mut running_max = 0.0f64;
            for (rank, &idx) in order.iter().enumerate() {
                let scaled = ((m - rank) as f64 * raw[idx]).min(1.0);
                running_max = running_max.max(scaled);
                adjusted[idx] = running_max;
            }
            adjusted
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bonferroni_scales_by_family_size() {
        let adj = adjust_p_values(Correction::Bonferroni, &[0.01, 0.3, 0.6]);
        assert_abs_diff_eq!(adj[0], 0.03);
        assert_abs_diff_eq!(adj[1], 0.9);
        assert_abs_diff_eq!(adj[2], 1.0);
    }

    #[test]
    fn holm_is_stepdown_with_monotonicity() {
        let raw = [0.01, 0.04, 0.03, 0.005];
        let adj = adjust_p_values(Correction::Holm, &raw);
        // Sorted: 0.005*4=0.02, 0.01*3=0.03, 0.03*2=0.06, 0.04*1=0.04 -> 0.06 after
        // enforcing monotonicity.
        assert_abs_diff_eq!(adj[3], 0.02);
        assert_abs_diff_eq!(adj[0], 0.03);
        assert_abs_diff_eq!(adj[2], 0.06);
        assert_abs_diff_eq!(adj[1], 0.06);
    }

    #[test]
    fn holm_never_below_bonferroni_first_step() {
        let raw = [0.2, 0.2];
        let adj = adjust_p_values(Correction::Holm, &raw);
        assert_abs_diff_eq!(adj[0], 0.4);
        assert_abs_diff_eq!(adj[1], 0.4);
    }

    #[test]
    fn empty_family() {
        assert!(adjust_p_values(Correction::Holm, &[]).is_empty());
    }
}
