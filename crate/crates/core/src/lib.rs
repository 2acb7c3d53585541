//! Uncertainty-aware evaluation of recommender systems.
//!
//! Ratings are treated as normal densities rather than point values. The
//! crate propagates that uncertainty into the distribution of accuracy
//! metrics, turns competing metric distributions into ranking-error
//! probabilities, and re-audits published leaderboards under several models of
//! per-rating uncertainty. A seeded Monte Carlo path backs every closed form.
//!
//! ```
//! use uncertain_eval::{error_probability, rmse_distribution, Gaussian, UncertainRating};
//!
//! let ratings: Vec<_> = (0..100)
//!     .map(|i| {
//!         UncertainRating::new(format!("u{i}"), "item", Gaussian::from_std(3.0, 0.8).unwrap())
//!             .with_predictor(3.5)
//!     })
//!     .collect();
//! let a = rmse_distribution(&ratings).unwrap().gaussian;
//! let b = Gaussian::new(a.mean() + 0.01, a.variance()).unwrap();
//! let p = error_probability(&a, &b);
//! assert!(p > 0.0 && p < 0.5);
//! ```

pub mod error;
pub mod ingestion;
pub mod leaderboard;
pub mod propagation;
pub mod ranking;
pub mod simulator;
pub mod stats;
pub mod uncertainty;

pub use error::{Error, Result};
pub use leaderboard::{
    attach_variance, audit, Approach, AuditConfig, AuditReport, DeltaAllocation, DeviationReading, FixedDeviation,
    LeaderboardEntry, NETFLIX_TEST_RATINGS,
};
pub use propagation::{
    mc_metric_distribution, mse_distribution, point_rmse, rmse_distribution, Method, Metric, MetricDistribution,
    PropagationSums,
};
pub use ranking::{error_matrix, error_probability, order_probabilities, ErrorMatrix, OrderDistribution};
pub use simulator::{simulate, trial_metric_series, SimConfig, Simulation};
pub use stats::{
    derive_rng, derive_seed, fit_gaussian_ml, histogram, histogram_with_range, std_normal_cdf, Gaussian, Histogram,
};
pub use uncertainty::{
    bound_sigma, draw_sigma, estimate_from_trials, fit_population_sigma, fit_population_sigma_with, ml_sigma_bias,
    BoundEnd, FitFamily, Scale, SigmaBias, TrialTable, UncertainRating, UncertaintyModel,
};
