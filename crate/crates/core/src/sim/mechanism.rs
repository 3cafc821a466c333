//! Data generation and the three missingness mechanisms of the factorial
//! study: equicorrelated Gaussian data on five columns, of which the first
//! three are missing-prone, with indicators drawn sequentially from logistic
//! models whose intercepts are calibrated by Monte Carlo bisection to hit a
//! target average missing proportion.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::numerics::rng::RandomStream;
use crate::numerics::samplers::sample_mvn;
use crate::numerics::special::inv_logit;
use crate::numerics::{equicorr_covariance, CorrelationMatrix};

/// Number of data columns in the study design.
pub const SIM_COLS: usize = 5;
/// Number of missing-prone columns (the first three).
pub const SIM_MISSING_PRONE: usize = 3;

/// The three missingness mechanisms of the study. MAAR depends only on the
/// fully observed columns; MAAR2 additionally routes earlier indicators into
/// later ones (breaking mutual conditional independence); MNAAR depends
/// directly on missing-prone values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    Maar,
    Maar2,
    Mnaar,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::Maar, Mechanism::Maar2, Mechanism::Mnaar];

    pub fn label(&self) -> &'static str {
        match self {
            Mechanism::Maar => "MAAR",
            Mechanism::Maar2 => "MAAR2",
            Mechanism::Mnaar => "MNAAR",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MAAR" => Ok(Mechanism::Maar),
            "MAAR2" => Ok(Mechanism::Maar2),
            "MNAAR" => Ok(Mechanism::Mnaar),
            other => Err(Error::InvalidConfig(format!("unknown mechanism {other:?}"))),
        }
    }

    /// Which indicators violate the only-fully-observed-dependence null:
    /// the first indicator never does; under MAAR2 and MNAAR the second and
    /// third do.
    pub fn violates(&self) -> [bool; SIM_MISSING_PRONE] {
        match self {
            Mechanism::Maar => [false, false, false],
            Mechanism::Maar2 | Mechanism::Mnaar => [false, true, true],
        }
    }

    /// Linear predictor (without intercept) for indicator `idx` at a data
    /// row, given the already generated earlier indicators of that row.
    /// Indicator terms enter as the product value * indicator, so a missing
    /// earlier value contributes zero.
    pub fn linear_predictor(&self, idx: usize, y: &[f64], r_prev: &[bool]) -> f64 {
        debug_assert!(idx < SIM_MISSING_PRONE);
        debug_assert!(y.len() >= SIM_COLS);
        debug_assert!(r_prev.len() >= idx);
        let base = y[3] - y[4];
        match (self, idx) {
            (_, 0) => base,
            (Mechanism::Maar, _) => base,
            (Mechanism::Maar2, 1) => r_term(y[0], r_prev[0]) + base,
            (Mechanism::Maar2, 2) => r_term(y[0], r_prev[0]) + r_term(y[1], r_prev[1]) + base,
            (Mechanism::Mnaar, 1) => 0.5 * y[0] + 0.5 * y[2] + base,
            (Mechanism::Mnaar, 2) => y[0] + y[1] + base,
            _ => unreachable!("indicator index out of range"),
        }
    }
}

fn r_term(y: f64, r: bool) -> f64 {
    if r {
        y
    } else {
        0.0
    }
}

/// Ground truth for scoring: true where the indicator violates the null.
pub fn ground_truth(mech: Mechanism) -> [bool; SIM_MISSING_PRONE] {
    mech.violates()
}

/// Draw an N x 5 complete data matrix: mean zero, equicorrelated with the
/// given correlation.
pub fn gen_complete(n: usize, rho: f64, stream: &mut RandomStream) -> Result<DMatrix<f64>> {
    let cov: CorrelationMatrix = equicorr_covariance(SIM_COLS, rho)?;
    sample_mvn(&DVector::zeros(SIM_COLS), cov.as_matrix(), n, stream)
}

/// Calibrated intercepts for all three indicators of a mechanism at a target
/// average missing proportion `m` and data correlation `rho`. Bisection on a
/// fixed Monte Carlo sample; the indicators are calibrated in order because
/// later linear predictors can involve earlier indicators.
pub fn calibrate_alphas(
    mech: Mechanism,
    m: f64,
    rho: f64,
    stream: &RandomStream,
    draws: usize,
) -> Result<[f64; SIM_MISSING_PRONE]> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "target missing proportion {m} must lie strictly inside (0, 1)"
        )));
    }
    let mut rng = stream.clone();
    let y = gen_complete(draws, rho, &mut rng)?;
    let u: Vec<f64> = (0..draws * SIM_MISSING_PRONE)
        .map(|_| rng.uniform())
        .collect();

    let mut alphas = [0.0; SIM_MISSING_PRONE];
    let mut r = vec![false; draws * SIM_MISSING_PRONE];
    let mut row = vec![0.0; SIM_COLS];
    for idx in 0..SIM_MISSING_PRONE {
        // Linear predictor is fixed given earlier indicators.
        let mut lin = vec![0.0; draws];
        for i in 0..draws {
            for c in 0..SIM_COLS {
                row[c] = y[(i, c)];
            }
            let r_prev = &r[i * SIM_MISSING_PRONE..i * SIM_MISSING_PRONE + idx];
            lin[i] = mech.linear_predictor(idx, &row, r_prev);
        }
        let missing_rate = |alpha: f64| -> f64 {
            let mut acc = 0.0;
            for &l in &lin {
                acc += 1.0 - inv_logit(alpha + l);
            }
            acc / draws as f64
        };
        // missing_rate is strictly decreasing in alpha; bracket and bisect.
        let (mut lo, mut hi) = (-40.0, 40.0);
        if !(missing_rate(lo) > m && missing_rate(hi) < m) {
            return Err(Error::CalibrationFailed {
                indicator: idx,
                message: format!("no bracket for target {m}"),
            });
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if missing_rate(mid) > m {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-9 {
                break;
            }
        }
        let alpha = 0.5 * (lo + hi);
        let achieved = missing_rate(alpha);
        if (achieved - m).abs() > 0.002 {
            return Err(Error::CalibrationFailed {
                indicator: idx,
                message: format!("achieved {achieved}, target {m}"),
            });
        }
        alphas[idx] = alpha;
        // Freeze this indicator's draws for the next predictors.
        for i in 0..draws {
            let p_obs = inv_logit(alpha + lin[i]);
            r[i * SIM_MISSING_PRONE + idx] = u[i * SIM_MISSING_PRONE + idx] < p_obs;
        }
    }
    Ok(alphas)
}

/// Calibrated intercept for a single indicator (earlier ones are calibrated
/// internally because the predictor chain needs them).
pub fn calibrate_alpha(
    mech: Mechanism,
    indicator: usize,
    m: f64,
    rho: f64,
    stream: &RandomStream,
    draws: usize,
) -> Result<f64> {
    if indicator >= SIM_MISSING_PRONE {
        return Err(Error::InvalidConfig(format!(
            "indicator {indicator} out of range"
        )));
    }
    Ok(calibrate_alphas(mech, m, rho, stream, draws)?[indicator])
}

/// Generate the indicator mask for the first three columns, row by row and
/// indicator by indicator, as Bernoulli draws with probability
/// inv_logit(alpha + linear predictor). Returns `n x 3` flags, true =
/// observed. The fully observed columns are never masked.
pub fn apply_mechanism(
    y: &DMatrix<f64>,
    mech: Mechanism,
    alphas: &[f64; SIM_MISSING_PRONE],
    stream: &mut RandomStream,
) -> Vec<[bool; SIM_MISSING_PRONE]> {
    let n = y.nrows();
    let mut out = Vec::with_capacity(n);
    let mut row = [0.0; SIM_COLS];
    for i in 0..n {
        for c in 0..SIM_COLS {
            row[c] = y[(i, c)];
        }
        let mut flags = [true; SIM_MISSING_PRONE];
        for idx in 0..SIM_MISSING_PRONE {
            let lin = mech.linear_predictor(idx, &row, &flags[..idx]);
            let p_obs = inv_logit(alphas[idx] + lin);
            flags[idx] = stream.uniform() < p_obs;
        }
        out.push(flags);
    }
    out
}

/// Assemble a `DataMatrix` from complete data and indicator flags, masking
/// the first three columns and declaring them missing-prone regardless of
/// the realized pattern.
pub fn build_data_matrix(y: &DMatrix<f64>, flags: &[[bool; SIM_MISSING_PRONE]]) -> Result<DataMatrix> {
    let n = y.nrows();
    debug_assert_eq!(flags.len(), n);
    let mut values = Vec::with_capacity(n * SIM_COLS);
    let mut mask = Vec::with_capacity(n * SIM_COLS);
    for i in 0..n {
        for c in 0..SIM_COLS {
            let observed = c >= SIM_MISSING_PRONE || flags[i][c];
            values.push(if observed { y[(i, c)] } else { f64::NAN });
            mask.push(observed);
        }
    }
    DataMatrix::from_parts(
        values,
        mask,
        (1..=SIM_COLS).map(|c| format!("y{c}")).collect(),
        Some((0..SIM_MISSING_PRONE).collect()),
    )
}
