//! Gaussian-copula diagnostic via the extended rank likelihood.
//!
//! Data columns and response indicators are modeled jointly through a latent
//! Gaussian vector with correlation matrix C. Continuous columns constrain
//! the latent scores only through the ordering of their observed values, so
//! the marginals drop out entirely; binary indicator columns constrain the
//! scores through their sign against a fixed threshold at zero; latent cells
//! behind missing values float free, which integrates them out. A Gibbs
//! sweep redraws every latent cell from its truncated conditional normal and
//! then redraws C by projecting an inverse-Wishart covariance draw to a
//! correlation matrix. The diagnostic examines posterior partial
//! correlations between data columns and indicators given the fully
//! observed columns.

use nalgebra::DMatrix;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::numerics::linalg::{partial_correlation, to_correlation, CorrelationMatrix};
use crate::numerics::rng::RandomStream;
use crate::numerics::samplers::{sample_inverse_wishart, sample_truncated_normal, standard_normal};
use crate::numerics::special::normal_quantile;
use crate::report::{
    Decision, DiagnosticReport, IndicatorRecord, PairOutcome, PairTestRecord, TestKind,
    TestSettings,
};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GcSettings {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub credible_level: f64,
}

impl Default for GcSettings {
    fn default() -> Self {
        GcSettings {
            n_iter: 5000,
            burn_in: 1000,
            thin: 4,
            credible_level: 0.95,
        }
    }
}

/// What a latent column represents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    /// A fully observed data column.
    ContinuousObserved { source: usize },
    /// A missing-prone data column; unobserved cells are unconstrained.
    ContinuousMissing { source: usize },
    /// A response indicator; the latent score is sign-constrained at zero.
    BinaryIndicator { source: usize },
}

/// Rank constraint layout for one latent column, fixed at initialization.
/// Continuous columns get tie groups in ascending value order over their
/// observed cells (ties share a group and are mutually unconstrained) plus
/// the list of free cells. Binary columns are two-level ordinal: one group
/// per level with a floating threshold between them; pinning the threshold
/// instead (say at zero) shifts the latent means away from the model's zero
/// mean and leaks spurious correlation between indicator columns.
#[derive(Clone, Debug, Default)]
struct ColumnLayout {
    groups: Vec<Vec<usize>>,
    free: Vec<usize>,
}

/// Latent state of the sampler: scores Z (row-major N x dim), the current
/// correlation matrix, and the immutable constraint layout.
#[derive(Clone, Debug)]
pub struct CopulaState {
    pub n: usize,
    pub dim: usize,
    z: Vec<f64>,
    c: CorrelationMatrix,
    kinds: Vec<ColumnKind>,
    layouts: Vec<ColumnLayout>,
}

impl CopulaState {
    pub fn correlation(&self) -> &CorrelationMatrix {
        &self.c
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn z(&self, row: usize, col: usize) -> f64 {
        self.z[row * self.dim + col]
    }

    /// Check every rank constraint against the current scores.
    pub fn constraints_hold(&self) -> bool {
        for (j, layout) in self.layouts.iter().enumerate() {
            let mut prev_max = f64::NEG_INFINITY;
            for group in &layout.groups {
                let lo = group.iter().map(|&r| self.z(r, j)).fold(f64::INFINITY, f64::min);
                let hi = group
                    .iter()
                    .map(|&r| self.z(r, j))
                    .fold(f64::NEG_INFINITY, f64::max);
                if lo <= prev_max {
                    return false;
                }
                prev_max = hi;
            }
        }
        true
    }
}

/// Thinned post-burn-in draws of the latent correlation matrix.
#[derive(Clone, Debug)]
pub struct PosteriorSummary {
    pub draws: Vec<CorrelationMatrix>,
    pub n_kept: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub settings: GcSettings,
    pub seed: u64,
    /// Latent column index of each data column, then of each indicator.
    pub indicator_sources: Vec<usize>,
}

/// Build the initial state: latent dimension J + J*, scores at normal scores
/// of mid-ranks for observed continuous cells, +/-0.5 by level for binary
/// cells, zero for free cells; C starts at the identity.
pub fn init_state(dm: &DataMatrix) -> Result<CopulaState> {
    let n = dm.n_rows();
    let j = dm.n_cols();
    let j_star = dm.n_missing_prone();
    let dim = j + j_star;

    let mut kinds = Vec::with_capacity(dim);
    for col in 0..j {
        if dm.missing_prone_cols().contains(&col) {
            kinds.push(ColumnKind::ContinuousMissing { source: col });
        } else {
            kinds.push(ColumnKind::ContinuousObserved { source: col });
        }
    }
    for &col in dm.missing_prone_cols() {
        kinds.push(ColumnKind::BinaryIndicator { source: col });
    }

    let mut z = vec![0.0; n * dim];
    let mut layouts = Vec::with_capacity(dim);
    for (latent, kind) in kinds.iter().enumerate() {
        let mut layout = ColumnLayout::default();
        match *kind {
            ColumnKind::ContinuousObserved { source } | ColumnKind::ContinuousMissing { source } => {
                let mut observed: Vec<(f64, usize)> = (0..n)
                    .filter(|&r| dm.observed(r, source))
                    .map(|r| (dm.value(r, source), r))
                    .collect();
                observed.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("observed values are finite"));
                let mut distinct = 0usize;
                let mut idx = 0;
                while idx < observed.len() {
                    let v = observed[idx].0;
                    let mut group = Vec::new();
                    while idx < observed.len() && observed[idx].0 == v {
                        group.push(observed[idx].1);
                        idx += 1;
                    }
                    layout.groups.push(group);
                    distinct += 1;
                }
                if distinct < 2 {
                    return Err(Error::DegenerateColumn {
                        col: source,
                        message: "needs at least two distinct observed values".into(),
                    });
                }
                layout.free = (0..n).filter(|&r| !dm.observed(r, source)).collect();
                // Normal scores of mid-ranks; tied cells share a score.
                let n_obs: usize = layout.groups.iter().map(|g| g.len()).sum();
                let mut position = 0usize;
                for group in &layout.groups {
                    let len = group.len();
                    let mid_rank = position as f64 + (len as f64 + 1.0) / 2.0;
                    let score = normal_quantile(mid_rank / (n_obs as f64 + 1.0));
                    for &r in group {
                        z[r * dim + latent] = score;
                    }
                    position += len;
                }
            }
            ColumnKind::BinaryIndicator { source } => {
                let zeros: Vec<usize> = (0..n).filter(|&r| !dm.observed(r, source)).collect();
                let ones: Vec<usize> = (0..n).filter(|&r| dm.observed(r, source)).collect();
                if ones.is_empty() || zeros.is_empty() {
                    return Err(Error::DegenerateColumn {
                        col: source,
                        message: "indicator needs both levels present".into(),
                    });
                }
                for &r in &ones {
                    z[r * dim + latent] = 0.5;
                }
                for &r in &zeros {
                    z[r * dim + latent] = -0.5;
                }
                layout.groups = vec![zeros, ones];
            }
        }
        layouts.push(layout);
    }

    Ok(CopulaState {
        n,
        dim,
        z,
        c: CorrelationMatrix::identity(dim),
        kinds,
        layouts,
    })
}

/// One systematic Gibbs sweep: redraw every latent cell from its univariate
/// conditional normal truncated to its current rank/sign interval, then
/// redraw C from the projected inverse-Wishart update. All constraints hold
/// on exit.
pub fn gibbs_sweep(
    state: &mut CopulaState,
    prior_nu: f64,
    prior_scale: &DMatrix<f64>,
    stream: &mut RandomStream,
) -> Result<()> {
    let dim = state.dim;
    let n = state.n;

    // Per-column conditional regressions from the precision matrix; retry
    // once with a jittered diagonal when roundoff spoils definiteness.
    let (betas, sds) = match conditional_coefficients(state.c.as_matrix()) {
        Ok(v) => v,
        Err(_) => {
            let mut jittered = state.c.as_matrix().clone();
            for i in 0..dim {
                jittered[(i, i)] += 1e-10;
            }
            conditional_coefficients(&jittered)?
        }
    };

    for j in 0..dim {
        let beta = &betas[j * dim..(j + 1) * dim];
        let sd = sds[j];
        let layout = &state.layouts[j];

        let n_groups = layout.groups.len();
        for g in 0..n_groups {
            let lo = if g == 0 {
                f64::NEG_INFINITY
            } else {
                layout.groups[g - 1]
                    .iter()
                    .map(|&r| state.z[r * dim + j])
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            let hi = if g + 1 == n_groups {
                f64::INFINITY
            } else {
                layout.groups[g + 1]
                    .iter()
                    .map(|&r| state.z[r * dim + j])
                    .fold(f64::INFINITY, f64::min)
            };
            for &r in &layout.groups[g] {
                let mu = conditional_mean(&state.z, r, j, dim, beta);
                state.z[r * dim + j] = sample_truncated_normal(mu, sd, lo, hi, stream)?;
            }
        }
        for &r in &layout.free {
            let mu = conditional_mean(&state.z, r, j, dim, beta);
            state.z[r * dim + j] = mu + sd * standard_normal(stream);
        }
    }

    // C | Z: inverse-Wishart on the covariance scale, projected back to a
    // correlation matrix.
    let mut scale = prior_scale.clone();
    for a in 0..dim {
        for b in a..dim {
            let mut acc = 0.0;
            for r in 0..n {
                acc += state.z[r * dim + a] * state.z[r * dim + b];
            }
            scale[(a, b)] += acc;
            if a != b {
                scale[(b, a)] = scale[(a, b)];
            }
        }
    }
    let v = sample_inverse_wishart(prior_nu + n as f64, &scale, stream)?;
    state.c = to_correlation(&v)?;
    Ok(())
}

/// Conditional regression of each coordinate on the rest: slopes packed
/// row-major (dim x dim, diagonal unused) plus conditional standard
/// deviations, both read off the precision matrix.
fn conditional_coefficients(c: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = c.nrows();
    let chol = c
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite {
            context: "latent correlation matrix".into(),
        })?;
    let precision = chol.inverse();
    let mut betas = vec![0.0; dim * dim];
    let mut sds = vec![0.0; dim];
    for j in 0..dim {
        let pjj = precision[(j, j)];
        if pjj <= 0.0 || !pjj.is_finite() {
            return Err(Error::NotPositiveDefinite {
                context: "conditional variance nonpositive".into(),
            });
        }
        for l in 0..dim {
            if l != j {
                betas[j * dim + l] = -precision[(j, l)] / pjj;
            }
        }
        sds[j] = (1.0 / pjj).sqrt();
    }
    Ok((betas, sds))
}

#[inline]
fn conditional_mean(z: &[f64], row: usize, j: usize, dim: usize, beta: &[f64]) -> f64 {
    let base = row * dim;
    let mut mu = 0.0;
    for l in 0..dim {
        if l != j {
            mu += beta[l] * z[base + l];
        }
    }
    mu
}

/// Run the sampler: `n_iter` sweeps, discard `burn_in`, keep every
/// `thin`-th draw of C. Deterministic given the seed.
pub fn run_sampler(dm: &DataMatrix, settings: &GcSettings, seed: u64) -> Result<PosteriorSummary> {
    if settings.n_iter <= settings.burn_in {
        return Err(Error::InvalidSamplerConfig {
            message: format!(
                "n_iter {} must exceed burn_in {}",
                settings.n_iter, settings.burn_in
            ),
        });
    }
    if settings.thin == 0 {
        return Err(Error::InvalidSamplerConfig {
            message: "thin must be at least 1".into(),
        });
    }
    let mut state = init_state(dm)?;
    let dim = state.dim;
    let prior_nu = (dim + 2) as f64;
    let prior_scale = DMatrix::<f64>::identity(dim, dim) * prior_nu;
    let mut stream = RandomStream::new(seed);

    let mut draws = Vec::new();
    for sweep in 1..=settings.n_iter {
        gibbs_sweep(&mut state, prior_nu, &prior_scale, &mut stream)?;
        if sweep > settings.burn_in && (sweep - settings.burn_in) % settings.thin == 0 {
            draws.push(state.c.clone());
        }
    }
    let n_kept = draws.len();
    debug_assert_eq!(n_kept, (settings.n_iter - settings.burn_in) / settings.thin);
    Ok(PosteriorSummary {
        draws,
        n_kept,
        burn_in: settings.burn_in,
        thin: settings.thin,
        settings: *settings,
        seed,
        indicator_sources: dm.missing_prone_cols().to_vec(),
    })
}

/// Posterior test: for every (data column j, indicator j') pair over the
/// missing-prone columns, the partial correlation of their latent scores
/// given the fully observed columns, per draw; reject when the central
/// credible interval excludes zero. An indicator is rejected when any data
/// column's pair rejects.
///
/// The credible level is family-wise over the J* x J* pairs: each pair's
/// interval uses tail mass (1 - level) / (2 * n_pairs). Without this the
/// any-pair aggregation rejects a true null far too often (roughly one
/// minus the per-pair level to the J*^2 power).
pub fn gc_test(
    post: &PosteriorSummary,
    dm: &DataMatrix,
    credible_level: f64,
) -> Result<DiagnosticReport> {
    if post.draws.is_empty() {
        return Err(Error::InvalidSamplerConfig {
            message: "posterior has no draws".into(),
        });
    }
    if !(0.0..1.0).contains(&credible_level) || credible_level <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "credible level {credible_level} must lie in (0, 1)"
        )));
    }
    let j_cols = dm.n_cols();
    let missing_prone = dm.missing_prone_cols();
    let given: Vec<usize> = dm.fully_observed_cols().to_vec();
    let n_pairs = missing_prone.len() * missing_prone.len();

    let mut per_pair = Vec::new();
    let mut rejected: std::collections::BTreeMap<usize, (bool, f64)> = missing_prone
        .iter()
        .map(|&k| (k, (false, f64::INFINITY)))
        .collect();

    for (ind_idx, &k) in missing_prone.iter().enumerate() {
        let latent_r = j_cols + ind_idx;
        for &target in missing_prone {
            let mut vals = Vec::with_capacity(post.draws.len());
            for c in &post.draws {
                vals.push(partial_correlation(c, target, latent_r, &given)?);
            }
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite partial correlations"));
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let tail = (1.0 - credible_level) / (2.0 * n_pairs as f64);
            let lower = quantile_sorted(&vals, tail);
            let upper = quantile_sorted(&vals, 1.0 - tail);
            let excludes_zero = lower > 0.0 || upper < 0.0;
            // Family-corrected posterior tail evidence at zero, comparable
            // to the report's alpha level.
            let below = vals.iter().filter(|&&v| v < 0.0).count() as f64 / vals.len() as f64;
            let evidence = (2.0 * n_pairs as f64 * below.min(1.0 - below)).min(1.0);
            let entry = rejected.get_mut(&k).expect("indicator present");
            entry.0 |= excludes_zero;
            entry.1 = entry.1.min(evidence);
            per_pair.push(PairTestRecord {
                target_col: target,
                indicator_col: k,
                n_used: dm.n_rows(),
                outcome: PairOutcome::Posterior {
                    mean,
                    lower,
                    upper,
                    n_draws: vals.len(),
                    excludes_zero,
                },
            });
        }
    }

    let per_indicator = missing_prone
        .iter()
        .map(|&k| {
            let (reject, evidence) = rejected[&k];
            IndicatorRecord {
                col: k,
                col_name: dm.col_name(k).to_string(),
                decision: Some(if reject {
                    Decision::Reject
                } else {
                    Decision::FailToReject
                }),
                evidence: Some(evidence),
                mi: None,
                error: None,
            }
        })
        .collect();

    Ok(DiagnosticReport {
        test: TestKind::Gc,
        alpha_level: 1.0 - credible_level,
        settings: TestSettings::Gc {
            credible_level,
            n_iter: post.settings.n_iter,
            burn_in: post.settings.burn_in,
            thin: post.settings.thin,
            seed: post.seed,
        },
        per_pair,
        per_indicator,
        warnings: Vec::new(),
    })
}

/// Type-7 quantile of a sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Convenience driver: sample, then test at the settings' credible level.
pub fn gc_run(dm: &DataMatrix, settings: &GcSettings, seed: u64) -> Result<DiagnosticReport> {
    let post = run_sampler(dm, settings, seed)?;
    gc_test(&post, dm, settings.credible_level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_matrix() -> DataMatrix {
        // Column 0 missing-prone with values (3, 1, 2, NA, 0.5); column 1
        // fully observed.
        let values = vec![
            3.0, 0.2, //
            1.0, -0.4, //
            2.0, 1.3, //
            f64::NAN, 0.9, //
            0.5, -1.8, //
        ];
        let mask = vec![true, true, true, true, true, true, false, true, true, true];
        DataMatrix::from_parts(values, mask, vec!["y1".into(), "y2".into()], None).unwrap()
    }

    #[test]
    fn init_orders_scores_by_value() {
        let dm = small_matrix();
        let st = init_state(&dm).unwrap();
        assert_eq!(st.dim, 3); // two data columns + one indicator
        // Values 0.5 < 1 < 2 < 3 at rows 4, 1, 2, 0.
        assert!(st.z(4, 0) < st.z(1, 0));
        assert!(st.z(1, 0) < st.z(2, 0));
        assert!(st.z(2, 0) < st.z(0, 0));
        // Free cell starts at zero.
        assert_eq!(st.z(3, 0), 0.0);
        // Indicator column: observed rows +0.5, missing row -0.5.
        assert_eq!(st.z(0, 2), 0.5);
        assert_eq!(st.z(3, 2), -0.5);
        assert!(st.constraints_hold());
    }

    #[test]
    fn init_gives_ties_equal_scores() {
        let values = vec![1.0, 0.0, 1.0, 1.0, 2.0, 2.0, f64::NAN, 3.0];
        let mask = vec![true, true, true, true, true, true, false, true];
        let dm =
            DataMatrix::from_parts(values, mask, vec!["a".into(), "b".into()], None).unwrap();
        let st = init_state(&dm).unwrap();
        assert_eq!(st.z(0, 0), st.z(1, 0));
        assert!(st.z(0, 0) < st.z(2, 0));
    }

    #[test]
    fn init_rejects_constant_column() {
        let values = vec![1.0, 5.0, 1.0, 6.0, 1.0, f64::NAN, 1.0, 7.0];
        let mask = vec![true, true, true, true, true, false, true, true];
        let dm =
            DataMatrix::from_parts(values, mask, vec!["a".into(), "b".into()], None).unwrap();
        assert!(matches!(
            init_state(&dm),
            Err(Error::DegenerateColumn { col: 0, .. })
        ));
    }

    #[test]
    fn sweep_preserves_constraints() {
        let dm = small_matrix();
        let mut st = init_state(&dm).unwrap();
        let dim = st.dim;
        let prior_nu = (dim + 2) as f64;
        let prior_scale = DMatrix::<f64>::identity(dim, dim) * prior_nu;
        let mut stream = RandomStream::new(21);
        for _ in 0..50 {
            gibbs_sweep(&mut st, prior_nu, &prior_scale, &mut stream).unwrap();
            assert!(st.constraints_hold());
            for i in 0..dim {
                assert_abs_diff_eq!(st.c.entry(i, i), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sampler_requires_iterations_beyond_burn_in() {
        let dm = small_matrix();
        let s = GcSettings {
            n_iter: 100,
            burn_in: 100,
            thin: 1,
            credible_level: 0.95,
        };
        assert!(matches!(
            run_sampler(&dm, &s, 1),
            Err(Error::InvalidSamplerConfig { .. })
        ));
    }

    #[test]
    fn sampler_is_deterministic_given_seed() {
        let dm = small_matrix();
        let s = GcSettings {
            n_iter: 60,
            burn_in: 20,
            thin: 2,
            credible_level: 0.95,
        };
        let a = run_sampler(&dm, &s, 33).unwrap();
        let b = run_sampler(&dm, &s, 33).unwrap();
        assert_eq!(a.n_kept, 20);
        for (x, y) in a.draws.iter().zip(&b.draws) {
            assert_eq!(x.as_matrix(), y.as_matrix());
        }
    }

    #[test]
    fn gc_test_identity_draws_never_reject() {
        let dm = small_matrix();
        let post = PosteriorSummary {
            draws: vec![CorrelationMatrix::identity(3); 50],
            n_kept: 50,
            burn_in: 0,
            thin: 1,
            settings: GcSettings::default(),
            seed: 0,
            indicator_sources: dm.missing_prone_cols().to_vec(),
        };
        let report = gc_test(&post, &dm, 0.95).unwrap();
        for rec in &report.per_indicator {
            assert_eq!(rec.decision, Some(Decision::FailToReject));
        }
        for pair in &report.per_pair {
            if let PairOutcome::Posterior { mean, lower, upper, .. } = pair.outcome {
                assert_eq!((mean, lower, upper), (0.0, 0.0, 0.0));
            }
        }
    }

    #[test]
    fn gc_test_concentrated_equicorrelated_rejects_at_schur_value() {
        // Draws pinned at equicorrelation 0.5 with one conditioning column:
        // the latent partial correlation is 0.5/(1+0.5) = 1/3 for every
        // pair, so every interval collapses to 1/3 and excludes zero.
        let dm = small_matrix();
        let c = crate::numerics::linalg::equicorr_covariance(3, 0.5).unwrap();
        let post = PosteriorSummary {
            draws: vec![c; 40],
            n_kept: 40,
            burn_in: 0,
            thin: 1,
            settings: GcSettings::default(),
            seed: 0,
            indicator_sources: dm.missing_prone_cols().to_vec(),
        };
        let report = gc_test(&post, &dm, 0.95).unwrap();
        for pair in &report.per_pair {
            if let PairOutcome::Posterior { mean, lower, upper, excludes_zero, .. } = pair.outcome
            {
                assert_abs_diff_eq!(mean, 1.0 / 3.0, epsilon = 1e-12);
                assert_abs_diff_eq!(lower, 1.0 / 3.0, epsilon = 1e-12);
                assert_abs_diff_eq!(upper, 1.0 / 3.0, epsilon = 1e-12);
                assert!(excludes_zero);
            }
        }
        for rec in &report.per_indicator {
            assert_eq!(rec.decision, Some(Decision::Reject));
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_abs_diff_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_abs_diff_eq!(quantile_sorted(&v, 0.5), 2.5);
    }
}
