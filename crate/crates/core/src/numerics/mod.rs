//! Shared numerical kernels: seeded random streams, special functions,
//! correlation-matrix operations, regression MLEs, and samplers.

pub mod linalg;
pub mod regression;
pub mod rng;
pub mod samplers;
pub mod special;

pub use linalg::{equicorr_covariance, partial_correlation, to_correlation, CorrelationMatrix};
pub use regression::{fit_gaussian_ols, fit_logistic, lrt, LrtResult, RegressionFit};
pub use rng::RandomStream;
pub use samplers::{sample_inverse_wishart, sample_mvn, sample_truncated_normal};
pub use special::{chisq_sf, f_sf, inv_logit};
