//! Multivariate data with missing entries: the value matrix, its response
//! indicator mask, the missing-prone/fully-observed column split, and the
//! indicator-induced partitions of a column.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// An N x J real matrix with a missingness mask. Values at unobserved cells
/// are stored as NaN and never consulted. Immutable after construction, so
/// it is safe to share across parallel workers.
#[derive(Clone, Debug)]
pub struct DataMatrix {
    n_rows: usize,
    n_cols: usize,
    /// Row-major; NaN exactly where `mask` is false.
    values: Vec<f64>,
    /// Row-major; true = observed.
    mask: Vec<bool>,
    col_names: Vec<String>,
    missing_prone: Vec<usize>,
    fully_observed: Vec<usize>,
}

/// The two pieces of a target column split by another column's response
/// indicator, keeping only rows where the target itself is observed.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnPartition {
    pub indicator_col: usize,
    pub target_col: usize,
    /// Rows with the indicator observed (R = 1): (row, target value).
    pub observed_part: Vec<(usize, f64)>,
    /// Rows with the indicator missing (R = 0): (row, target value).
    pub complement_part: Vec<(usize, f64)>,
}

/// Per-column missing counts plus pairs of columns sharing an identical
/// missingness pattern (both with at least one missing cell).
#[derive(Clone, Debug)]
pub struct PatternSummary {
    pub missing_per_col: Vec<usize>,
    pub identical_pairs: Vec<(usize, usize)>,
}

impl DataMatrix {
    /// Build from parts. `values` is row-major; cells where `mask` is false
    /// are normalized to NaN. When `missing_prone` is given explicitly it
    /// must cover every column that actually has a missing cell; otherwise
    /// the missing-prone set is derived from the mask. Columns with zero
    /// observed values are rejected.
    pub fn from_parts(
        values: Vec<f64>,
        mask: Vec<bool>,
        col_names: Vec<String>,
        missing_prone: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n_cols = col_names.len();
        if n_cols == 0 {
            return Err(Error::InvalidConfig("need at least one column".into()));
        }
        if values.len() != mask.len() || values.len() % n_cols != 0 {
            return Err(Error::InvalidConfig(
                "values/mask size does not match column count".into(),
            ));
        }
        let n_rows = values.len() / n_cols;
        let mut values = values;
        for (v, &obs) in values.iter_mut().zip(&mask) {
            if !obs {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(Error::InvalidConfig(
                    "observed cells must hold finite values".into(),
                ));
            }
        }
        let mut observed_counts = vec![0usize; n_cols];
        for i in 0..n_rows {
            for j in 0..n_cols {
                if mask[i * n_cols + j] {
                    observed_counts[j] += 1;
                }
            }
        }
        for (j, &cnt) in observed_counts.iter().enumerate() {
            if cnt == 0 {
                return Err(Error::EmptyColumn {
                    name: col_names[j].clone(),
                });
            }
        }
        let with_missing: Vec<usize> = (0..n_cols)
            .filter(|&j| observed_counts[j] < n_rows)
            .collect();
        let missing_prone = match missing_prone {
            Some(mut cols) => {
                cols.sort_unstable();
                cols.dedup();
                if cols.iter().any(|&j| j >= n_cols) {
                    return Err(Error::InvalidConfig(
                        "missing-prone column index out of range".into(),
                    ));
                }
                for &j in &with_missing {
                    if !cols.contains(&j) {
                        return Err(Error::InvalidConfig(format!(
                            "column {j} has missing cells but is not declared missing-prone"
                        )));
                    }
                }
                cols
            }
            None => with_missing,
        };
        let fully_observed = (0..n_cols)
            .filter(|j| !missing_prone.contains(j))
            .collect();
        Ok(DataMatrix {
            n_rows,
            n_cols,
            values,
            mask,
            col_names,
            missing_prone,
            fully_observed,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of missing-prone columns (J*).
    pub fn n_missing_prone(&self) -> usize {
        self.missing_prone.len()
    }

    pub fn missing_prone_cols(&self) -> &[usize] {
        &self.missing_prone
    }

    pub fn fully_observed_cols(&self) -> &[usize] {
        &self.fully_observed
    }

    pub fn col_name(&self, j: usize) -> &str {
        &self.col_names[j]
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    pub fn observed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n_cols + j]
    }

    /// Value at (i, j); NaN when unobserved.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    /// The response indicator column R_j as bools.
    pub fn indicator(&self, j: usize) -> Vec<bool> {
        (0..self.n_rows).map(|i| self.observed(i, j)).collect()
    }

    pub fn missing_count(&self, j: usize) -> usize {
        (0..self.n_rows).filter(|&i| !self.observed(i, j)).count()
    }

    pub fn same_mask_pattern(&self, j: usize, k: usize) -> bool {
        (0..self.n_rows).all(|i| self.observed(i, j) == self.observed(i, k))
    }
}

/// Split target column `j` by the response indicator of column `k`,
/// keeping only rows where the target is observed. `k` must be
/// missing-prone, else its indicator is the constant 1 and the partition
/// is trivial.
pub fn partition(dm: &DataMatrix, k: usize, j: usize) -> Result<ColumnPartition> {
    if !dm.missing_prone.contains(&k) {
        return Err(Error::NotMissingProne { col: k });
    }
    if j == k || j >= dm.n_cols {
        return Err(Error::InvalidConfig(format!(
            "target column {j} must differ from indicator column {k} and be in range"
        )));
    }
    let mut observed_part = Vec::new();
    let mut complement_part = Vec::new();
    for i in 0..dm.n_rows {
        if !dm.observed(i, j) {
            continue;
        }
        let pair = (i, dm.value(i, j));
        if dm.observed(i, k) {
            observed_part.push(pair);
        } else {
            complement_part.push(pair);
        }
    }
    Ok(ColumnPartition {
        indicator_col: k,
        target_col: j,
        observed_part,
        complement_part,
    })
}

/// Per-column missing counts and identical-pattern pair flags. Columns are
/// flagged pairwise only when both actually contain missing cells; the
/// conditional-means diagnostic must skip such pairs.
pub fn pattern_summary(dm: &DataMatrix) -> PatternSummary {
    let missing_per_col: Vec<usize> = (0..dm.n_cols).map(|j| dm.missing_count(j)).collect();
    let mut identical_pairs = Vec::new();
    for j in 0..dm.n_cols {
        if missing_per_col[j] == 0 {
            continue;
        }
        for k in (j + 1)..dm.n_cols {
            if missing_per_col[k] == 0 {
                continue;
            }
            if dm.same_mask_pattern(j, k) {
                identical_pairs.push((j, k));
            }
        }
    }
    PatternSummary {
        missing_per_col,
        identical_pairs,
    }
}

/// Load a CSV file: header row required, comma separated, numeric fields,
/// `na_token` (or an empty field) marks a missing cell. Column order defines
/// the column indices. Columns containing at least one missing cell form the
/// missing-prone set.
pub fn load_csv(path: impl AsRef<Path>, na_token: &str) -> Result<DataMatrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| map_csv_open_error(path, e))?;
    let col_names: Vec<String> = reader
        .headers()
        .map_err(|e| map_csv_open_error(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let n_cols = col_names.len();
    if n_cols == 0 {
        return Err(Error::InvalidConfig("empty header row".into()));
    }
    let mut values = Vec::new();
    let mut mask = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1; // 1-based data row for messages
        let record = record.map_err(|e| Error::Parse {
            row,
            col: 0,
            message: e.to_string(),
        })?;
        if record.len() != n_cols {
            return Err(Error::RaggedRow {
                row,
                expected: n_cols,
                found: record.len(),
            });
        }
        for (col_idx, field) in record.iter().enumerate() {
            let field = field.trim();
            if field == na_token || field.is_empty() {
                values.push(f64::NAN);
                mask.push(false);
            } else {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    row,
                    col: col_idx + 1,
                    message: format!("expected a number or {na_token:?}, found {field:?}"),
                })?;
                values.push(v);
                mask.push(true);
            }
        }
    }
    if values.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{} has a header but no data rows",
            path.display()
        )));
    }
    DataMatrix::from_parts(values, mask, col_names, None)
}

fn map_csv_open_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidConfig(format!("csv error on {}: {other:?}", path.display())),
    }
}

/// Write a data matrix as CSV with full-precision decimal text, so a
/// write/load round trip reproduces values and mask exactly.
pub fn write_csv(dm: &DataMatrix, path: impl AsRef<Path>, na_token: &str) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&dm.col_names.join(","));
    out.push('\n');
    for i in 0..dm.n_rows {
        for j in 0..dm.n_cols {
            if j > 0 {
                out.push(',');
            }
            if dm.observed(i, j) {
                let _ = write!(out, "{}", dm.value(i, j));
            } else {
                out.push_str(na_token);
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use tempfile::NamedTempFile;

    fn csv_file(content: &str) -> NamedTempFile {
        let mut f = NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn load_complete_data() {
        let f = csv_file("a,b\n1,2\n3,4\n5,6\n");
        let dm = load_csv(f.path(), "NA").unwrap();
        assert_eq!(dm.n_rows(), 3);
        assert_eq!(dm.n_cols(), 2);
        assert_eq!(dm.n_missing_prone(), 0);
        assert!(dm.mask.iter().all(|&m| m));
    }

    #[test]
    fn load_flags_missing_cells() {
        let f = csv_file("a,b,c\n1,2,3\nNA,5,6\n7,8,9\n10,11,12\n");
        let dm = load_csv(f.path(), "NA").unwrap();
        assert!(!dm.observed(1, 0));
        assert_eq!(dm.missing_prone_cols(), &[0]);
        assert_eq!(dm.fully_observed_cols(), &[1, 2]);
        assert!(dm.value(1, 0).is_nan());
    }

    #[test]
    fn load_rejects_all_missing_column() {
        let f = csv_file("a,b\n1,NA\n2,NA\n");
        assert!(matches!(
            load_csv(f.path(), "NA"),
            Err(Error::EmptyColumn { .. })
        ));
    }

    #[test]
    fn load_rejects_junk_field_with_position() {
        let f = csv_file("a,b\n1,2\n3,oops\n");
        match load_csv(f.path(), "NA") {
            Err(Error::Parse { row, col, .. }) => {
                assert_eq!((row, col), (2, 2));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_ragged_rows() {
        let f = csv_file("a,b\n1,2\n3\n");
        assert!(matches!(
            load_csv(f.path(), "NA"),
            Err(Error::RaggedRow {
                row: 2,
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn empty_field_counts_as_missing() {
        let f = csv_file("a,b\n1,\n2,3\n");
        let dm = load_csv(f.path(), "NA").unwrap();
        assert!(!dm.observed(0, 1));
        assert_eq!(dm.missing_prone_cols(), &[1]);
    }

    #[test]
    fn round_trip_is_exact() {
        let f = csv_file("x,y\n0.1,2\nNA,-3.25e-7\n1e300,0.30000000000000004\n");
        let dm = load_csv(f.path(), "NA").unwrap();
        let out = NamedTempFile::new().unwrap();
        write_csv(&dm, out.path(), "NA").unwrap();
        let dm2 = load_csv(out.path(), "NA").unwrap();
        assert_eq!(dm.mask, dm2.mask);
        for (a, b) in dm.values.iter().zip(&dm2.values) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }

    #[test]
    fn partition_basic() {
        // Y_1 = (1,2,3) all observed, indicator column 1 has R = (1,0,1).
        let values = vec![1.0, 10.0, 2.0, 0.0, 3.0, 30.0];
        let mask = vec![true, true, true, false, true, true];
        let dm = DataMatrix::from_parts(
            values,
            mask,
            vec!["y1".into(), "y2".into()],
            None,
        )
        .unwrap();
        let p = partition(&dm, 1, 0).unwrap();
        assert_eq!(p.observed_part, vec![(0, 1.0), (2, 3.0)]);
        assert_eq!(p.complement_part, vec![(1, 2.0)]);
        let n_obs_j = 3;
        assert_eq!(p.observed_part.len() + p.complement_part.len(), n_obs_j);
    }

    #[test]
    fn partition_excludes_rows_with_missing_target() {
        // Y_0 = (1, NA, 3); indicator column 1 has R = (0,0,1).
        let values = vec![1.0, 0.0, 0.0, 0.0, 3.0, 5.0];
        let mask = vec![true, false, false, false, true, true];
        let dm = DataMatrix::from_parts(
            values,
            mask,
            vec!["y1".into(), "y2".into()],
            None,
        )
        .unwrap();
        let p = partition(&dm, 1, 0).unwrap();
        assert_eq!(p.observed_part, vec![(2, 3.0)]);
        assert_eq!(p.complement_part, vec![(0, 1.0)]);
    }

    #[test]
    fn partition_rejects_constant_indicator() {
        let values = vec![1.0, 2.0, 3.0, 4.0];
        let mask = vec![true; 4];
        let dm = DataMatrix::from_parts(values, mask, vec!["a".into(), "b".into()], None).unwrap();
        assert!(matches!(
            partition(&dm, 1, 0),
            Err(Error::NotMissingProne { col: 1 })
        ));
    }

    #[test]
    fn pattern_summary_flags_identical_patterns() {
        let values = vec![
            1.0, 2.0, 9.0, //
            0.0, 0.0, 8.0, //
            3.0, 4.0, 7.0, //
        ];
        let mask = vec![true, true, true, false, false, true, true, true, true];
        let dm = DataMatrix::from_parts(
            values,
            mask,
            vec!["a".into(), "b".into(), "c".into()],
            None,
        )
        .unwrap();
        let s = pattern_summary(&dm);
        assert_eq!(s.missing_per_col, vec![1, 1, 0]);
        assert_eq!(s.identical_pairs, vec![(0, 1)]);
    }

    #[test]
    fn pattern_summary_complete_data() {
        let dm = DataMatrix::from_parts(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![true; 4],
            vec!["a".into(), "b".into()],
            None,
        )
        .unwrap();
        let s = pattern_summary(&dm);
        assert_eq!(s.missing_per_col, vec![0, 0]);
        assert!(s.identical_pairs.is_empty());
    }

    #[test]
    fn explicit_missing_prone_must_cover_missing() {
        let values = vec![1.0, 2.0, 0.0, 4.0];
        let mask = vec![true, true, false, true];
        let err = DataMatrix::from_parts(
            values,
            mask,
            vec!["a".into(), "b".into()],
            Some(vec![1]),
        );
        assert!(err.is_err());
    }

    #[test]
    fn ten_row_missing_count() {
        let mut values = Vec::new();
        let mut mask = Vec::new();
        for i in 0..10 {
            values.push(i as f64);
            mask.push(i % 3 != 0); // rows 0,3,6,9 missing -> 4 missing
            values.push(1.0);
            mask.push(true);
        }
        let dm =
            DataMatrix::from_parts(values, mask, vec!["a".into(), "b".into()], None).unwrap();
        assert_eq!(pattern_summary(&dm).missing_per_col, vec![4, 0]);
    }
}
