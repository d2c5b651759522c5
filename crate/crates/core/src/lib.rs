//! Quantitative central limit theory for partial sums `F_n = n^{-1/2} Σ g(X_k)`
//! of a stationary Gaussian sequence.
//!
//! The crate computes Hermite expansions of `g`, contraction sums of the
//! covariance, explicit distance bounds between the normalized statistic and
//! the standard Gaussian, predicted convergence rates, and Monte Carlo
//! estimates of the same distances.

pub mod contractions;
pub mod covariance;
pub mod error;
pub mod hermite;
pub mod numeric;
pub mod rates;
pub mod simulation;
pub mod stein;

pub use contractions::{
    contraction_sum_fast, contraction_sum_naive, kernel_norm_sq, log_weight, young_upper_bound,
    ContractionConfig, ContractionEntry, ContractionTable,
};
pub use covariance::{fit_decay_exponent, CovarianceModel, CovarianceParams};
pub use error::{Error, Result};
pub use hermite::{
    hermite_expand, hermite_poly, mu_p, FunctionKind, FunctionSpec, Gap, HermiteExpansion,
    QuadratureConfig, SummabilityVerdict,
};
pub use rates::{
    cauchy_power_variation_rate, continuous_time_rate, fbm_power_variation_rate, predict_rate,
    RateCase, RatePrediction,
};
pub use simulation::{
    build_sampler, empirical_distances, evaluate_fn, rate_fit, simulate, write_simulation_csv,
    RateFit, Sampler, SimulationConfig, SimulationResult,
};
pub use stein::{
    bound_sweep, c_phi, multivariate_bound, required_triples, sigma_limit_sq, sigma_n_sq,
    univariate_bound, univariate_bound_from_table, write_bound_csv, BoundConfig, BoundReport,
    Metric, MultiBoundReport, SigmaLimit, TailEstimate,
};
