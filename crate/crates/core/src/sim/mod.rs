//! Factorial Monte Carlo harness: mechanism specifications with calibrated
//! intercepts, the study driver, the balanced ANOVA decomposition, and the
//! output/report writers.

pub mod anova;
pub mod mechanism;
pub mod output;
pub mod study;

pub use anova::{anova, AnovaTable};
pub use mechanism::{
    apply_mechanism, build_data_matrix, calibrate_alpha, calibrate_alphas, gen_complete,
    ground_truth, Mechanism, SIM_COLS, SIM_MISSING_PRONE,
};
pub use output::{
    read_results_csv, render_anova, render_margin, write_anova_csv, write_results_csv, MarginSpec,
};
pub use study::{run_cell, run_study, CellResult, SimCell, StudyConfig, StudyResults, StudyRow};
