//! Factorial study driver: enumerate cells over mechanism, sample size,
//! missing proportion, correlation, and diagnostic test; run seeded
//! replications in parallel; and score decisions against the mechanism's
//! ground truth.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ccm::{ccm_run, CcmSettings};
use crate::data::DataMatrix;
use crate::dtpmm::{dtpmm_run, DtpmmSettings};
use crate::error::{Error, Result};
use crate::gcopula::{gc_run, GcSettings};
use crate::numerics::rng::RandomStream;
use crate::report::{Correction, Decision, DiagnosticReport, TestKind};
use crate::sim::mechanism::{
    apply_mechanism, build_data_matrix, calibrate_alphas, gen_complete, ground_truth, Mechanism,
    SIM_MISSING_PRONE,
};

/// One cell of the factorial design.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub mechanism: Mechanism,
    pub n: usize,
    pub m: f64,
    pub rho: f64,
    pub test: TestKind,
}

/// Correct-decision rates for one cell. Replications whose diagnostic
/// errored are excluded from the rates and counted separately.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CellResult {
    pub per_indicator: [f64; SIM_MISSING_PRONE],
    pub overall: f64,
    pub reps_completed: usize,
    pub reps_failed: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyRow {
    pub cell: SimCell,
    pub result: CellResult,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyResults {
    pub config: StudyConfig,
    pub rows: Vec<StudyRow>,
}

/// Full study configuration. The default grid is the published factorial:
/// three mechanisms, N in {100, 500, 1000}, m in {0.2, 0.4, 0.6}, rho in
/// {0.2, 0.4, 0.6, 0.8}, and all three tests; 200 replications per cell by
/// default, 1000 for the full-scale run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub seed: u64,
    pub reps: usize,
    pub mechanisms: Vec<Mechanism>,
    pub sample_sizes: Vec<usize>,
    pub missing_props: Vec<f64>,
    pub correlations: Vec<f64>,
    pub tests: Vec<TestKind>,
    pub alpha_level: f64,
    pub correction: Correction,
    pub imputations: usize,
    pub imputation_cycles: usize,
    pub include_self: bool,
    pub ccm_interactions: bool,
    pub gc: GcSettings,
    pub calibration_draws: usize,
    /// Truncate the enumerated grid to this many cells (smoke runs).
    pub max_cells: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            seed: 20260809,
            reps: 200,
            mechanisms: Mechanism::ALL.to_vec(),
            sample_sizes: vec![100, 500, 1000],
            missing_props: vec![0.2, 0.4, 0.6],
            correlations: vec![0.2, 0.4, 0.6, 0.8],
            tests: vec![TestKind::Ccm, TestKind::Dtpmm, TestKind::Gc],
            alpha_level: 0.05,
            correction: Correction::Bonferroni,
            imputations: 20,
            imputation_cycles: 10,
            include_self: false,
            ccm_interactions: false,
            gc: GcSettings::default(),
            calibration_draws: 100_000,
            max_cells: None,
        }
    }
}

impl StudyConfig {
    /// Cells in canonical order: mechanism, then N, m, rho, test.
    pub fn cells(&self) -> Vec<SimCell> {
        let mut out = Vec::new();
        for &mechanism in &self.mechanisms {
            for &n in &self.sample_sizes {
                for &m in &self.missing_props {
                    for &rho in &self.correlations {
                        for &test in &self.tests {
                            out.push(SimCell {
                                mechanism,
                                n,
                                m,
                                rho,
                                test,
                            });
                        }
                    }
                }
            }
        }
        if let Some(limit) = self.max_cells {
            out.truncate(limit);
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.mechanisms.is_empty()
            || self.sample_sizes.is_empty()
            || self.missing_props.is_empty()
            || self.correlations.is_empty()
            || self.tests.is_empty()
        {
            return Err(Error::InvalidConfig("every factor needs a level".into()));
        }
        for &m in &self.missing_props {
            if !(m > 0.0 && m < 1.0) {
                return Err(Error::InvalidConfig(format!("missing proportion {m}")));
            }
        }
        Ok(())
    }
}

fn per_mille(x: f64) -> u64 {
    (x * 1000.0).round() as u64
}

fn mechanism_code(m: Mechanism) -> u64 {
    match m {
        Mechanism::Maar => 0,
        Mechanism::Maar2 => 1,
        Mechanism::Mnaar => 2,
    }
}

fn test_code(t: TestKind) -> u64 {
    match t {
        TestKind::Ccm => 0,
        TestKind::Dtpmm => 1,
        TestKind::Gc => 2,
    }
}

/// Stream for the data of one replication: independent of the test factor,
/// so all three diagnostics see the same data in a given replication.
fn data_stream(seed: u64, cell: &SimCell, rep: usize) -> RandomStream {
    RandomStream::new(seed)
        .child(1)
        .child(mechanism_code(cell.mechanism))
        .child(cell.n as u64)
        .child(per_mille(cell.m))
        .child(per_mille(cell.rho))
        .child(rep as u64)
}

/// Stream for a diagnostic's own randomness in one replication.
fn test_stream(seed: u64, cell: &SimCell, rep: usize) -> RandomStream {
    data_stream(seed, cell, rep)
        .child(2)
        .child(test_code(cell.test))
}

fn calibration_stream(seed: u64, mechanism: Mechanism, m: f64, rho: f64) -> RandomStream {
    RandomStream::new(seed)
        .child(3)
        .child(mechanism_code(mechanism))
        .child(per_mille(m))
        .child(per_mille(rho))
}

/// Calibration cache key.
type CalKey = (u64, u64, u64);

fn cal_key(mechanism: Mechanism, m: f64, rho: f64) -> CalKey {
    (mechanism_code(mechanism), per_mille(m), per_mille(rho))
}

/// Calibrated intercepts for every (mechanism, m, rho) the cells need.
pub fn calibrate_grid(
    config: &StudyConfig,
    cells: &[SimCell],
) -> Result<HashMap<CalKey, [f64; SIM_MISSING_PRONE]>> {
    let mut keys: Vec<(CalKey, Mechanism, f64, f64)> = Vec::new();
    for c in cells {
        let key = cal_key(c.mechanism, c.m, c.rho);
        if !keys.iter().any(|(k, ..)| *k == key) {
            keys.push((key, c.mechanism, c.m, c.rho));
        }
    }
    let entries: Vec<(CalKey, [f64; SIM_MISSING_PRONE])> = keys
        .into_par_iter()
        .map(|(key, mech, m, rho)| {
            let stream = calibration_stream(config.seed, mech, m, rho);
            calibrate_alphas(mech, m, rho, &stream, config.calibration_draws)
                .map(|alphas| (key, alphas))
        })
        .collect::<Result<_>>()?;
    Ok(entries.into_iter().collect())
}

/// One replication: generate data, mask it, run the cell's diagnostic, and
/// score its per-indicator decisions against the mechanism's ground truth.
/// `Ok(None)` marks a replication whose diagnostic errored.
fn run_replication(
    cell: &SimCell,
    alphas: &[f64; SIM_MISSING_PRONE],
    config: &StudyConfig,
    rep: usize,
) -> Result<Option<[bool; SIM_MISSING_PRONE]>> {
    let mut data_rng = data_stream(config.seed, cell, rep);
    let y = gen_complete(cell.n, cell.rho, &mut data_rng)?;
    let flags = apply_mechanism(&y, cell.mechanism, alphas, &mut data_rng);
    let dm = build_data_matrix(&y, &flags)?;

    let report = match run_diagnostic(cell, config, &dm, rep) {
        Ok(r) => r,
        Err(_) => return Ok(None),
    };

    let truth = ground_truth(cell.mechanism);
    let mut correct = [false; SIM_MISSING_PRONE];
    for idx in 0..SIM_MISSING_PRONE {
        if report.indicator_error(idx).is_some() {
            return Ok(None);
        }
        // Indicators with no decision had every pair skipped; a skipped test
        // fails to reject.
        let decision = report
            .decision_for(idx)
            .unwrap_or(Decision::FailToReject);
        correct[idx] = (decision == Decision::Reject) == truth[idx];
    }
    Ok(Some(correct))
}

fn run_diagnostic(
    cell: &SimCell,
    config: &StudyConfig,
    dm: &DataMatrix,
    rep: usize,
) -> Result<DiagnosticReport> {
    match cell.test {
        TestKind::Ccm => ccm_run(
            dm,
            &CcmSettings {
                alpha_level: config.alpha_level,
                correction: config.correction,
                interactions: config.ccm_interactions,
            },
        ),
        TestKind::Dtpmm => dtpmm_run(
            dm,
            &DtpmmSettings {
                alpha_level: config.alpha_level,
                imputations: config.imputations,
                cycles: config.imputation_cycles,
                include_self: config.include_self,
            },
            &test_stream(config.seed, cell, rep),
        ),
        TestKind::Gc => gc_run(
            dm,
            &config.gc,
            test_stream(config.seed, cell, rep).child(0).seed(),
        ),
    }
}

/// Run every replication of one cell (in parallel) and aggregate rates.
pub fn run_cell(
    cell: &SimCell,
    alphas: &[f64; SIM_MISSING_PRONE],
    config: &StudyConfig,
) -> Result<CellResult> {
    if config.reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    let outcomes: Vec<Option<[bool; SIM_MISSING_PRONE]>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_replication(cell, alphas, config, rep))
        .collect::<Result<_>>()?;

    let mut counts = [0usize; SIM_MISSING_PRONE];
    let mut overall = 0usize;
    let mut completed = 0usize;
    for outcome in outcomes.iter().flatten() {
        completed += 1;
        for (count, &ok) in counts.iter_mut().zip(outcome) {
            if ok {
                *count += 1;
            }
        }
        if outcome.iter().all(|&ok| ok) {
            overall += 1;
        }
    }
    let denom = completed.max(1) as f64;
    Ok(CellResult {
        per_indicator: [
            counts[0] as f64 / denom,
            counts[1] as f64 / denom,
            counts[2] as f64 / denom,
        ],
        overall: overall as f64 / denom,
        reps_completed: completed,
        reps_failed: config.reps - completed,
    })
}

/// Run the whole configured grid. Deterministic given the seed: each
/// replication derives its own stream from (seed, cell levels, rep), so
/// neither the parallel schedule nor grid subsetting changes any result.
pub fn run_study(config: &StudyConfig) -> Result<StudyResults> {
    config.validate()?;
    let cells = config.cells();
    if cells.is_empty() {
        return Err(Error::InvalidConfig("grid has no cells".into()));
    }
    let alphas = calibrate_grid(config, &cells)?;
    let mut rows = Vec::with_capacity(cells.len());
    for cell in &cells {
        let key = cal_key(cell.mechanism, cell.m, cell.rho);
        let result = run_cell(cell, &alphas[&key], config)?;
        rows.push(StudyRow {
            cell: *cell,
            result,
        });
    }
    Ok(StudyResults {
        config: config.clone(),
        rows,
    })
}
