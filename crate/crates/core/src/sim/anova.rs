//! Balanced factorial analysis of variance on per-cell correct-decision
//! rates, with one observation per cell. Sums of squares come from the
//! classical inclusion-exclusion effect decomposition over the five factors
//! (diagnostic test, N, rho, m, mechanism); the five-way interaction is the
//! residual stratum. Sources are ordered by interaction size and, within a
//! size, colexicographically in the factor order of the table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::study::StudyResults;

pub const FACTOR_LABELS: [&str; 5] = ["Diagnostic Test", "N", "rho", "m", "Mechanism"];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnovaRow {
    pub source: String,
    pub df: usize,
    pub sum_sq: f64,
    pub mean_sq: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnovaTable {
    pub rows: Vec<AnovaRow>,
    pub total_df: usize,
    pub total_sum_sq: f64,
}

/// Decompose the overall correct-decision rate over the full factorial.
/// Requires every combination of the observed factor levels to appear
/// exactly once.
pub fn anova(results: &StudyResults) -> Result<AnovaTable> {
    // Level values per factor, in first-appearance order.
    let mut levels: [Vec<String>; 5] = Default::default();
    let mut response = std::collections::HashMap::new();
    for row in &results.rows {
        let key = [
            row.cell.test.label().to_string(),
            row.cell.n.to_string(),
            format!("{}", row.cell.rho),
            format!("{}", row.cell.m),
            row.cell.mechanism.label().to_string(),
        ];
        for (f, lab) in key.iter().enumerate() {
            if !levels[f].contains(lab) {
                levels[f].push(lab.clone());
            }
        }
        if response.insert(key.clone(), row.result.overall).is_some() {
            return Err(Error::IncompleteGrid {
                message: format!("duplicate cell {key:?}"),
            });
        }
    }
    let counts: Vec<usize> = levels.iter().map(|l| l.len()).collect();
    let n_cells: usize = counts.iter().product();
    if response.len() != n_cells {
        return Err(Error::IncompleteGrid {
            message: format!(
                "{} cells present, full factorial needs {n_cells}",
                response.len()
            ),
        });
    }
    if counts.iter().any(|&c| c < 2) {
        return Err(Error::IncompleteGrid {
            message: "every factor needs at least two levels".into(),
        });
    }

    // Flatten the response into an array indexed by level tuples.
    let mut y = vec![0.0; n_cells];
    let strides = strides_for(&counts);
    for (key, value) in &response {
        let mut idx = 0;
        for f in 0..5 {
            let l = levels[f].iter().position(|v| v == &key[f]).unwrap();
            idx += l * strides[f];
        }
        y[idx] = *value;
    }

    // Margin means for every subset of factors (bitmask over 5 factors).
    let grand = y.iter().sum::<f64>() / n_cells as f64;
    let mut margin_means: Vec<Vec<f64>> = vec![Vec::new(); 32];
    for subset in 1u32..32 {
        let combos = subset_combos(subset, &counts);
        let mut sums = vec![0.0; combos];
        let mut cnt = vec![0usize; combos];
        for (cell, &value) in y.iter().enumerate() {
            let c = subset_index(cell, subset, &counts, &strides);
            sums[c] += value;
            cnt[c] += 1;
        }
        margin_means[subset as usize] = sums
            .iter()
            .zip(&cnt)
            .map(|(s, &c)| s / c as f64)
            .collect();
    }

    // Effects by inclusion-exclusion, sums of squares per source.
    let mut rows = Vec::new();
    let mut total_model_ss = 0.0;
    for subset in source_order() {
        let combos = subset_combos(subset, &counts);
        let mut ss = 0.0;
        for combo in 0..combos {
            let mut effect = 0.0;
            for sub in subsets_of(subset) {
                let parity = (subset.count_ones() - sub.count_ones()) % 2;
                let sign = if parity == 0 { 1.0 } else { -1.0 };
                let value = if sub == 0 {
                    grand
                } else {
                    margin_means[sub as usize][project_combo(combo, subset, sub, &counts)]
                };
                effect += sign * value;
            }
            ss += effect * effect;
        }
        ss *= (n_cells / combos) as f64;
        let df: usize = (0..5)
            .filter(|f| subset & (1 << f) != 0)
            .map(|f| counts[f] - 1)
            .product();
        total_model_ss += ss;
        rows.push(AnovaRow {
            source: source_label(subset),
            df,
            sum_sq: ss,
            mean_sq: ss / df as f64,
        });
    }

    let total_sum_sq: f64 = y.iter().map(|v| (v - grand) * (v - grand)).sum();
    debug_assert!(
        (total_model_ss - total_sum_sq).abs() <= 1e-8 * total_sum_sq.max(1e-300),
        "balanced decomposition must add to the total"
    );
    Ok(AnovaTable {
        rows,
        total_df: n_cells - 1,
        total_sum_sq,
    })
}

fn strides_for(counts: &[usize]) -> Vec<usize> {
    // Last factor varies fastest.
    let mut strides = vec![1; counts.len()];
    for f in (0..counts.len() - 1).rev() {
        strides[f] = strides[f + 1] * counts[f + 1];
    }
    strides
}

fn subset_combos(subset: u32, counts: &[usize]) -> usize {
    (0..5)
        .filter(|f| subset & (1 << f) != 0)
        .map(|f| counts[f])
        .product()
}

/// Index of a full cell's projection onto the subset's combination space.
fn subset_index(cell: usize, subset: u32, counts: &[usize], strides: &[usize]) -> usize {
    let mut idx = 0;
    for f in 0..5 {
        if subset & (1 << f) != 0 {
            let level = (cell / strides[f]) % counts[f];
            idx = idx * counts[f] + level;
        }
    }
    idx
}

/// Project a combination index of `superset` onto `subset` (subset's bits are
/// a subset of superset's).
fn project_combo(combo: usize, superset: u32, subset: u32, counts: &[usize]) -> usize {
    // Decode superset combo into per-factor levels (factors in ascending
    // order, last included factor varies fastest).
    let included: Vec<usize> = (0..5).filter(|f| superset & (1 << f) != 0).collect();
    let mut levels = vec![0usize; included.len()];
    let mut rest = combo;
    for (pos, &f) in included.iter().enumerate().rev() {
        levels[pos] = rest % counts[f];
        rest /= counts[f];
    }
    let mut idx = 0;
    for (pos, &f) in included.iter().enumerate() {
        if subset & (1 << f) != 0 {
            idx = idx * counts[f] + levels[pos];
        }
    }
    idx
}

fn subsets_of(mask: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut sub = mask;
    loop {
        out.push(sub);
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & mask;
    }
    out
}

/// All 31 nonempty factor subsets, ordered by interaction size then
/// colexicographically; with the factor bit order used here the latter is
/// plain numeric order of the bitmask.
fn source_order() -> Vec<u32> {
    let mut subsets: Vec<u32> = (1u32..32).collect();
    subsets.sort_by_key(|s| (s.count_ones(), *s));
    subsets
}

fn source_label(subset: u32) -> String {
    (0..5)
        .filter(|f| subset & (1 << f) != 0)
        .map(|f| FACTOR_LABELS[f])
        .collect::<Vec<_>>()
        .join(" x ")
}

/// The degrees-of-freedom column for the default 3x3x4x3x3 grid, in source
/// order; used by reports and checked by the acceptance suite.
pub fn default_grid_df() -> Vec<(String, usize)> {
    let counts = [3usize, 3, 4, 3, 3];
    source_order()
        .into_iter()
        .map(|s| {
            let df: usize = (0..5)
                .filter(|f| s & (1 << f) != 0)
                .map(|f| counts[f] - 1)
                .product();
            (source_label(s), df)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::TestKind;
    use crate::sim::mechanism::Mechanism;
    use crate::sim::study::{CellResult, SimCell, StudyConfig, StudyRow};

    fn grid_results(f: impl Fn(&SimCell) -> f64) -> StudyResults {
        let config = StudyConfig::default();
        let rows = config
            .cells()
            .iter()
            .map(|cell| StudyRow {
                cell: *cell,
                result: CellResult {
                    per_indicator: [0.0; 3],
                    overall: f(cell),
                    reps_completed: 1,
                    reps_failed: 0,
                },
            })
            .collect();
        StudyResults {
            config,
            rows,
        }
    }

    #[test]
    fn constant_response_gives_zero_mean_squares() {
        let table = anova(&grid_results(|_| 0.75)).unwrap();
        for row in &table.rows {
            assert!(row.mean_sq.abs() < 1e-18, "{} {}", row.source, row.mean_sq);
        }
        assert_eq!(table.total_df, 323);
    }

    #[test]
    fn df_column_matches_published_decomposition() {
        let table = anova(&grid_results(|c| c.rho + c.m)).unwrap();
        let expected = default_grid_df();
        assert_eq!(table.rows.len(), 31);
        for (row, (label, df)) in table.rows.iter().zip(&expected) {
            assert_eq!(&row.source, label);
            assert_eq!(row.df, *df, "df mismatch for {}", row.source);
        }
        let head: Vec<usize> = table.rows.iter().take(5).map(|r| r.df).collect();
        assert_eq!(head, vec![2, 2, 3, 2, 2]);
        assert_eq!(table.rows.last().unwrap().df, 48);
        let sum: usize = table.rows.iter().map(|r| r.df).sum();
        assert_eq!(sum, table.total_df);
    }

    #[test]
    fn pure_main_effect_concentrates_in_one_row() {
        let table = anova(&grid_results(|c| c.n as f64 / 1000.0)).unwrap();
        for row in &table.rows {
            if row.source == "N" {
                assert!(row.mean_sq > 1e-6);
            } else {
                assert!(
                    row.mean_sq.abs() < 1e-18,
                    "unexpected mass in {}: {}",
                    row.source,
                    row.mean_sq
                );
            }
        }
    }

    #[test]
    fn sums_of_squares_add_to_total() {
        let table = anova(&grid_results(|c| {
            0.3 * c.rho + 0.1 * c.m * c.n as f64 / 1000.0
                + if c.mechanism == Mechanism::Maar { 0.2 } else { 0.0 }
                + if c.test == TestKind::Gc { 0.05 * c.rho } else { 0.0 }
        }))
        .unwrap();
        let model: f64 = table.rows.iter().map(|r| r.sum_sq).sum();
        assert!((model - table.total_sum_sq).abs() <= 1e-8 * table.total_sum_sq);
    }

    #[test]
    fn incomplete_grid_rejected() {
        let mut results = grid_results(|_| 0.5);
        results.rows.pop();
        assert!(matches!(
            anova(&results),
            Err(Error::IncompleteGrid { .. })
        ));
    }
}
