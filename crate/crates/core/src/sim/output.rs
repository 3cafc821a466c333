//! Study output files and margin reports. Every file embeds the originating
//! config (single-line JSON in a comment header) plus the seed and crate
//! version, and contains nothing time- or path-dependent, so rerunning with
//! the same seed reproduces each file byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::report::TestKind;
use crate::sim::anova::AnovaTable;
use crate::sim::mechanism::Mechanism;
use crate::sim::study::{CellResult, SimCell, StudyConfig, StudyResults, StudyRow};

fn comment_header(config: &StudyConfig) -> String {
    let config_json = serde_json::to_string(config).expect("config serializes");
    format!(
        "# maar-core {} results\n# seed: {}\n# config: {}\n",
        crate::VERSION,
        config.seed,
        config_json
    )
}

/// Long-format results CSV: one row per cell.
pub fn results_to_csv(results: &StudyResults) -> String {
    let mut out = comment_header(&results.config);
    out.push_str(
        "mechanism,n,m,rho,test,reps,completed,failed,correct_r1,correct_r2,correct_r3,correct_overall\n",
    );
    for row in &results.rows {
        let c = &row.cell;
        let r = &row.result;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            c.mechanism.label(),
            c.n,
            c.m,
            c.rho,
            c.test.label(),
            r.reps_completed + r.reps_failed,
            r.reps_completed,
            r.reps_failed,
            r.per_indicator[0],
            r.per_indicator[1],
            r.per_indicator[2],
            r.overall
        );
    }
    out
}

pub fn write_results_csv(results: &StudyResults, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, results_to_csv(results)).map_err(|e| Error::io(path, e))
}

/// Parse a results CSV produced by [`results_to_csv`]. The embedded config
/// is recovered from the comment header when present.
pub fn read_results_csv(path: impl AsRef<Path>) -> Result<StudyResults> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config = None;
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(json) = rest.trim().strip_prefix("config:") {
                config = Some(serde_json::from_str::<StudyConfig>(json.trim()).map_err(|e| {
                    Error::InvalidConfig(format!("embedded config unreadable: {e}"))
                })?);
            }
            continue;
        }
        if !header_seen {
            header_seen = true; // column header line
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(Error::Parse {
                row: line_no + 1,
                col: 0,
                message: format!("expected 12 fields, found {}", fields.len()),
            });
        }
        let parse_f = |idx: usize| -> Result<f64> {
            fields[idx].parse().map_err(|_| Error::Parse {
                row: line_no + 1,
                col: idx + 1,
                message: format!("bad number {:?}", fields[idx]),
            })
        };
        let parse_u = |idx: usize| -> Result<usize> {
            fields[idx].parse().map_err(|_| Error::Parse {
                row: line_no + 1,
                col: idx + 1,
                message: format!("bad count {:?}", fields[idx]),
            })
        };
        rows.push(StudyRow {
            cell: SimCell {
                mechanism: Mechanism::parse(fields[0])?,
                n: parse_u(1)?,
                m: parse_f(2)?,
                rho: parse_f(3)?,
                test: TestKind::parse(fields[4])?,
            },
            result: CellResult {
                reps_completed: parse_u(6)?,
                reps_failed: parse_u(7)?,
                per_indicator: [parse_f(8)?, parse_f(9)?, parse_f(10)?],
                overall: parse_f(11)?,
            },
        });
    }
    if rows.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{} contains no result rows",
            path.display()
        )));
    }
    Ok(StudyResults {
        config: config.unwrap_or_default(),
        rows,
    })
}

/// ANOVA table as CSV, mean squares both raw and scaled by 1e4 as the
/// summary tables display them.
pub fn anova_to_csv(table: &AnovaTable, config: &StudyConfig) -> String {
    let mut out = comment_header(config);
    out.push_str("source,df,sum_sq,mean_sq,mean_sq_x1e4\n");
    for row in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.source,
            row.df,
            row.sum_sq,
            row.mean_sq,
            row.mean_sq * 1e4
        );
    }
    let _ = writeln!(out, "Total,{},{},,", table.total_df, table.total_sum_sq);
    out
}

pub fn write_anova_csv(
    table: &AnovaTable,
    config: &StudyConfig,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, anova_to_csv(table, config)).map_err(|e| Error::io(path, e))
}

/// Plain-text ANOVA table with mean squares scaled by 1e4.
pub fn render_anova(table: &AnovaTable) -> String {
    let mut out = String::new();
    let width = table
        .rows
        .iter()
        .map(|r| r.source.len())
        .max()
        .unwrap_or(6)
        .max(6);
    let _ = writeln!(out, "{:<width$}  {:>4}  {:>14}", "Source", "df", "MS x 1e4");
    for row in &table.rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>4}  {:>14.1}",
            row.source,
            row.df,
            row.mean_sq * 1e4
        );
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarginSpec {
    /// Overall rate by test and N, split by rho and m, averaged over
    /// mechanism.
    ByRhoAndM,
    /// Per-indicator rates by test and N, averaged over mechanism, rho, m.
    ByIndicator,
    /// Per-indicator and overall rates by mechanism, test, and N, averaged
    /// over rho and m.
    ByMechanism,
}

impl MarginSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rho-m" | "table2" => Ok(MarginSpec::ByRhoAndM),
            "indicator" | "table3" => Ok(MarginSpec::ByIndicator),
            "mechanism" | "table5" => Ok(MarginSpec::ByMechanism),
            other => Err(Error::InvalidConfig(format!(
                "unknown margin {other:?}; use rho-m, indicator, or mechanism"
            ))),
        }
    }
}

fn unique_sorted_f64(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

fn unique_sorted_usize(values: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut v: Vec<usize> = values.collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn tests_present(results: &StudyResults) -> Vec<TestKind> {
    let mut out = Vec::new();
    for row in &results.rows {
        if !out.contains(&row.cell.test) {
            out.push(row.cell.test);
        }
    }
    out
}

fn mechanisms_present(results: &StudyResults) -> Vec<Mechanism> {
    let mut out = Vec::new();
    for row in &results.rows {
        if !out.contains(&row.cell.mechanism) {
            out.push(row.cell.mechanism);
        }
    }
    out
}

fn mean<'a>(rows: impl Iterator<Item = &'a StudyRow>, f: impl Fn(&CellResult) -> f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in rows {
        sum += f(&r.result);
        count += 1;
    }
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Render a margin table.
pub fn render_margin(results: &StudyResults, spec: MarginSpec) -> Result<String> {
    if results.rows.is_empty() {
        return Err(Error::InvalidConfig("empty results".into()));
    }
    let tests = tests_present(results);
    let ns = unique_sorted_usize(results.rows.iter().map(|r| r.cell.n));
    let mut out = String::new();
    match spec {
        MarginSpec::ByRhoAndM => {
            let rhos = unique_sorted_f64(results.rows.iter().map(|r| r.cell.rho));
            let ms = unique_sorted_f64(results.rows.iter().map(|r| r.cell.m));
            let _ = writeln!(
                out,
                "Overall correct decision rate by test and N; columns rho x m; averaged over mechanism."
            );
            let _ = write!(out, "{:<7}{:>6}", "test", "N");
            for &rho in &rhos {
                for &m in &ms {
                    let _ = write!(out, "  r{rho:.1}/m{m:.1}");
                }
            }
            let _ = writeln!(out, "  {:>7}", "avg");
            for &test in &tests {
                for &n in &ns {
                    let _ = write!(out, "{:<7}{:>6}", test.label(), n);
                    for &rho in &rhos {
                        for &m in &ms {
                            let v = mean(
                                results.rows.iter().filter(|r| {
                                    r.cell.test == test
                                        && r.cell.n == n
                                        && r.cell.rho == rho
                                        && r.cell.m == m
                                }),
                                |c| c.overall,
                            );
                            let _ = write!(out, "  {v:>8.2}");
                        }
                    }
                    let avg = mean(
                        results
                            .rows
                            .iter()
                            .filter(|r| r.cell.test == test && r.cell.n == n),
                        |c| c.overall,
                    );
                    let _ = writeln!(out, "  {avg:>7.2}");
                }
                out.push('\n');
            }
        }
        MarginSpec::ByIndicator => {
            let _ = writeln!(
                out,
                "Per-indicator correct decision rates by test and N; averaged over mechanism, rho, m."
            );
            let _ = writeln!(
                out,
                "{:<7}{:>6}  {:>6}  {:>6}  {:>6}",
                "test", "N", "R1", "R2", "R3"
            );
            for &test in &tests {
                for &n in &ns {
                    let sel = |r: &&StudyRow| r.cell.test == test && r.cell.n == n;
                    let r1 = mean(results.rows.iter().filter(sel), |c| c.per_indicator[0]);
                    let r2 = mean(results.rows.iter().filter(sel), |c| c.per_indicator[1]);
                    let r3 = mean(results.rows.iter().filter(sel), |c| c.per_indicator[2]);
                    let _ = writeln!(
                        out,
                        "{:<7}{:>6}  {:>6.2}  {:>6.2}  {:>6.2}",
                        test.label(),
                        n,
                        r1,
                        r2,
                        r3
                    );
                }
                out.push('\n');
            }
        }
        MarginSpec::ByMechanism => {
            let mechanisms = mechanisms_present(results);
            let _ = writeln!(
                out,
                "Correct decision rates by mechanism and test; columns indicator x N plus overall x N; averaged over rho and m."
            );
            let _ = write!(out, "{:<7}{:<7}", "mech", "test");
            for label in ["R1", "R2", "R3", "all"] {
                for &n in &ns {
                    let _ = write!(out, "  {label:>3}@{n:<4}");
                }
            }
            out.push('\n');
            for &mech in &mechanisms {
                for &test in &tests {
                    let _ = write!(out, "{:<7}{:<7}", mech.label(), test.label());
                    for idx in 0..4 {
                        for &n in &ns {
                            let sel = |r: &&StudyRow| {
                                r.cell.mechanism == mech && r.cell.test == test && r.cell.n == n
                            };
                            let v = mean(results.rows.iter().filter(sel), |c| {
                                if idx < 3 {
                                    c.per_indicator[idx]
                                } else {
                                    c.overall
                                }
                            });
                            let _ = write!(out, "  {v:>8.2}");
                        }
                    }
                    out.push('\n');
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::study::StudyConfig;
    use tempfile::tempdir;

    fn tiny_results() -> StudyResults {
        let config = StudyConfig {
            mechanisms: vec![Mechanism::Maar, Mechanism::Mnaar],
            sample_sizes: vec![100],
            missing_props: vec![0.2],
            correlations: vec![0.4],
            tests: vec![TestKind::Ccm],
            reps: 5,
            ..StudyConfig::default()
        };
        let rows = config
            .cells()
            .iter()
            .enumerate()
            .map(|(i, cell)| StudyRow {
                cell: *cell,
                result: CellResult {
                    per_indicator: [0.9, 0.8, 0.7],
                    overall: 0.6 + 0.1 * i as f64,
                    reps_completed: 5,
                    reps_failed: 0,
                },
            })
            .collect();
        StudyResults { config, rows }
    }

    #[test]
    fn results_csv_round_trip() {
        let results = tiny_results();
        let dir = tempdir().unwrap();
        let path = dir.path().join("results.csv");
        write_results_csv(&results, &path).unwrap();
        let back = read_results_csv(&path).unwrap();
        assert_eq!(back.rows.len(), results.rows.len());
        assert_eq!(back.config, results.config);
        for (a, b) in back.rows.iter().zip(&results.rows) {
            assert_eq!(a.cell, b.cell);
            assert_eq!(a.result.overall, b.result.overall);
            assert_eq!(a.result.per_indicator, b.result.per_indicator);
        }
    }

    #[test]
    fn results_csv_is_stable_bytes() {
        let results = tiny_results();
        assert_eq!(results_to_csv(&results), results_to_csv(&results));
    }

    #[test]
    fn margins_render() {
        let results = tiny_results();
        for spec in [
            MarginSpec::ByRhoAndM,
            MarginSpec::ByIndicator,
            MarginSpec::ByMechanism,
        ] {
            let text = render_margin(&results, spec).unwrap();
            assert!(text.contains("CCM"));
        }
    }

    #[test]
    fn margin_spec_parses() {
        assert_eq!(MarginSpec::parse("table2").unwrap(), MarginSpec::ByRhoAndM);
        assert_eq!(
            MarginSpec::parse("indicator").unwrap(),
            MarginSpec::ByIndicator
        );
        assert!(MarginSpec::parse("bogus").is_err());
    }

    #[test]
    fn empty_results_rejected() {
        let results = StudyResults {
            config: StudyConfig::default(),
            rows: Vec::new(),
        };
        assert!(render_margin(&results, MarginSpec::ByIndicator).is_err());
    }
}
