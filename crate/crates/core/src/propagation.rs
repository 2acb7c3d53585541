//! Propagation of per-rating densities into accuracy metrics.
//!
//! With ratings `X_ν ~ N(μ_ν, σ_ν²)`, predictions `π_ν` and residuals
//! `Δ_ν = μ_ν − π_ν`, each squared error `Y_ν = (X_ν − π_ν)²` is a scaled
//! non-central χ²₁ variable with
//!
//! ```text
//! E[Y_ν]   = σ_ν² + Δ_ν²
//! Var[Y_ν] = 2σ_ν⁴ + 4σ_ν²Δ_ν²
//! ```
//!
//! so `MSE = (1/n) Σ Y_ν` has mean `(1/n) Σ (σ_ν² + Δ_ν²)` and variance
//! `(1/n²) Σ (2σ_ν⁴ + 4σ_ν²Δ_ν²)`, exactly (ratings independent).
//!
//! `RMSE = √MSE`. First-order error propagation (the delta method) through
//! `g(m) = √m`, with `g′(m) = 1 / (2√m)`, gives
//!
//! ```text
//! E[RMSE]   ≈ √E[MSE]            = √((1/n) Σ (σ_ν² + Δ_ν²))
//! Var[RMSE] ≈ Var[MSE] / (4 E[MSE])
//!           = (1/n²) Σ (2σ_ν⁴ + 4σ_ν²Δ_ν²) / (4 (1/n) Σ (σ_ν² + Δ_ν²))
//!           = Σ (σ_ν⁴ + 2σ_ν²Δ_ν²) / (2n · Σ (σ_ν² + Δ_ν²))
//! ```
//!
//! The whole denominator sum `Σ (σ_ν² + Δ_ν²)` multiplies `2n`. The Jensen
//! bias of `E[√MSE]` is ignored; the Monte Carlo path quantifies it.
//!
//! Everything the closed forms need is four running sums, kept in
//! [`PropagationSums`], so arbitrarily many ratings can be streamed.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{derive_rng, Gaussian, Moments};
use crate::uncertainty::UncertainRating;

/// Accuracy metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Rmse,
    Mse,
    Mae,
}

impl Metric {
    /// Point value of the metric over residuals.
    pub fn evaluate(&self, residuals: &[f64]) -> Result<f64> {
        if residuals.is_empty() {
            return Err(Error::InsufficientData("metric over zero residuals".into()));
        }
        let n = residuals.len() as f64;
        Ok(match self {
            Metric::Rmse => (residuals.iter().map(|d| d * d).sum::<f64>() / n).sqrt(),
            Metric::Mse => residuals.iter().map(|d| d * d).sum::<f64>() / n,
            Metric::Mae => residuals.iter().map(|d| d.abs()).sum::<f64>() / n,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Mse => "mse",
            Metric::Mae => "mae",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rmse" => Ok(Metric::Rmse),
            "mse" => Ok(Metric::Mse),
            "mae" => Ok(Metric::Mae),
            other => Err(Error::invalid(format!(
                "unknown metric {other:?} (expected rmse, mse or mae)"
            ))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Analytic,
    MonteCarlo,
}

/// A metric's distribution as a Gaussian, with provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDistribution {
    pub metric: Metric,
    pub gaussian: Gaussian,
    pub n: u64,
    pub method: Method,
    pub mc_samples: u64,
    /// All σ and Δ were zero; the result is the guarded point mass at 0.
    pub degenerate: bool,
    /// Fewer than 30 ratings: the Gaussian shape rests on a weak CLT argument.
    pub clt_approx: bool,
}

const CLT_MIN_N: u64 = 30;

/// Root mean squared residual.
pub fn point_rmse(deltas: &[f64]) -> Result<f64> {
    Metric::Rmse.evaluate(deltas)
}

/// Streaming accumulator of the sums behind the closed-form moments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PropagationSums {
    pub n: u64,
    /// Σ σ²
    pub var: f64,
    /// Σ σ⁴
    pub var_sq: f64,
    /// Σ σ²Δ²
    pub var_delta_sq: f64,
    /// Σ Δ²
    pub delta_sq: f64,
}

impl PropagationSums {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one rating with variance `variance` and residual `delta`.
    pub fn push(&mut self, variance: f64, delta: f64) {
        self.push_repeated(variance, delta, 1);
    }

    /// Adds `count` identical ratings.
    pub fn push_repeated(&mut self, variance: f64, delta: f64, count: u64) {
        let c = count as f64;
        let d2 = delta * delta;
        self.n += count;
        self.var += c * variance;
        self.var_sq += c * variance * variance;
        self.var_delta_sq += c * variance * d2;
        self.delta_sq += c * d2;
    }

    pub fn merge(&mut self, other: &PropagationSums) {
        self.n += other.n;
        self.var += other.var;
        self.var_sq += other.var_sq;
        self.var_delta_sq += other.var_delta_sq;
        self.delta_sq += other.delta_sq;
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.n == 0 {
            Err(Error::InsufficientData("no ratings to propagate".into()))
        } else {
            Ok(())
        }
    }

    /// RMSE mean and variance by first-order propagation.
    pub fn rmse(&self) -> Result<MetricDistribution> {
        self.check_nonempty()?;
        let n = self.n as f64;
        let total = self.var + self.delta_sq;
        let (gaussian, degenerate) = if total > 0.0 {
            let mean = (total / n).sqrt();
            let variance = (self.var_sq + 2.0 * self.var_delta_sq) / (2.0 * n * total);
            (Gaussian::new(mean, variance)?, false)
        } else {
            (Gaussian::point(0.0)?, true)
        };
        Ok(self.analytic(Metric::Rmse, gaussian, degenerate))
    }

    /// Exact MSE mean and variance.
    pub fn mse(&self) -> Result<MetricDistribution> {
        self.check_nonempty()?;
        let n = self.n as f64;
        let total = self.var + self.delta_sq;
        let mean = total / n;
        let variance = (2.0 * self.var_sq + 4.0 * self.var_delta_sq) / (n * n);
        Ok(self.analytic(Metric::Mse, Gaussian::new(mean, variance)?, total == 0.0))
    }

    fn analytic(&self, metric: Metric, gaussian: Gaussian, degenerate: bool) -> MetricDistribution {
        MetricDistribution {
            metric,
            gaussian,
            n: self.n,
            method: Method::Analytic,
            mc_samples: 0,
            degenerate,
            clt_approx: self.n < CLT_MIN_N,
        }
    }
}

fn residual_of(r: &UncertainRating) -> Result<f64> {
    r.residual()
        .ok_or_else(|| Error::invalid(format!("rating ({}, {}) has no prediction attached", r.user, r.item)))
}

fn sums_of(ratings: &[UncertainRating]) -> Result<PropagationSums> {
    if ratings.is_empty() {
        return Err(Error::InsufficientData("no ratings to propagate".into()));
    }
    let mut sums = PropagationSums::new();
    for r in ratings {
        sums.push(r.density.variance(), residual_of(r)?);
    }
    Ok(sums)
}

/// Analytic RMSE distribution.
pub fn rmse_distribution(ratings: &[UncertainRating]) -> Result<MetricDistribution> {
    sums_of(ratings)?.rmse()
}

/// Exact MSE moments, Gaussian by the central limit theorem.
pub fn mse_distribution(ratings: &[UncertainRating]) -> Result<MetricDistribution> {
    sums_of(ratings)?.mse()
}

/// Samples per independently seeded work item of the Monte Carlo paths.
pub const MC_CHUNK: usize = 1024;
/// Smallest Monte Carlo budget accepted.
pub const MC_MIN_SAMPLES: usize = 1000;

/// Raw Monte Carlo outcomes of `metric`: each sample redraws every `X_ν`
/// independently (untruncated) and evaluates the metric.
///
/// Sample `k` comes from chunk `k / MC_CHUNK`, whose generator is
/// `derive_rng(seed, chunk)`; output order and values are independent of the
/// thread count.
pub fn mc_metric_samples(ratings: &[UncertainRating], metric: Metric, seed: u64, samples: usize) -> Result<Vec<f64>> {
    if ratings.is_empty() {
        return Err(Error::InsufficientData("no ratings to simulate".into()));
    }
    if samples < MC_MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "Monte Carlo needs at least {MC_MIN_SAMPLES} samples, got {samples}"
        )));
    }
    let params: Vec<(f64, f64)> = ratings
        .iter()
        .map(|r| Ok((residual_of(r)?, r.density.std_dev())))
        .collect::<Result<_>>()?;
    let chunks = samples.div_ceil(MC_CHUNK);
    let out: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = derive_rng(seed, c as u64);
            let len = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut buf = Vec::with_capacity(params.len());
            (0..len)
                .map(|_| {
                    buf.clear();
                    buf.extend(params.iter().map(|&(delta, sd)| delta + sd * standard_normal(&mut rng)));
                    metric.evaluate(&buf).expect("non-empty residuals")
                })
                .collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

/// Monte Carlo estimate of a metric's distribution (Gaussian fit to outcomes).
pub fn mc_metric_distribution(
    ratings: &[UncertainRating],
    metric: Metric,
    seed: u64,
    samples: usize,
) -> Result<MetricDistribution> {
    let outcomes = mc_metric_samples(ratings, metric, seed, samples)?;
    let mut m = Moments::new();
    m.extend(outcomes.iter().copied());
    Ok(MetricDistribution {
        metric,
        gaussian: m.to_gaussian()?,
        n: ratings.len() as u64,
        method: Method::MonteCarlo,
        mc_samples: samples as u64,
        degenerate: false,
        clt_approx: (ratings.len() as u64) < CLT_MIN_N,
    })
}
