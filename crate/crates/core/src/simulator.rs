//! Synthetic repeated-rating studies with known ground truth.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{PredictionRow, PredictionTable};
use crate::propagation::Metric;
use crate::stats::{derive_rng, Gaussian};
use crate::uncertainty::{Scale, TrialRow, TrialTable, UncertainRating, UncertaintyModel};

/// Density of the latent per-rating means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanDistribution {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
}

impl MeanDistribution {
    fn validate(&self, scale: Scale) -> Result<()> {
        let ok = match *self {
            MeanDistribution::Constant { value } => scale.contains(value),
            MeanDistribution::Uniform { low, high } => low < high && scale.contains(low) && scale.contains(high),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "mean distribution {self:?} must lie within [{}, {}]",
                scale.min(),
                scale.max()
            )))
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MeanDistribution::Constant { value } => value,
            MeanDistribution::Uniform { low, high } => Uniform::new(low, high).expect("validated bounds").sample(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub users: usize,
    pub items: usize,
    pub trials: u32,
    pub scale: Scale,
    pub mean_distribution: MeanDistribution,
    pub sigma_model: UncertaintyModel,
    /// Clamp to the scale and round half away from zero to whole stars.
    pub discretize: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let scale = Scale::five_star();
        SimConfig {
            users: 50,
            items: 20,
            trials: 5,
            scale,
            mean_distribution: MeanDistribution::Uniform { low: 1.0, high: 5.0 },
            sigma_model: UncertaintyModel::uniform(scale, 1.0).expect("valid default"),
            discretize: true,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.items == 0 {
            return Err(Error::invalid("simulation needs at least one user and one item"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("simulation needs at least one trial"));
        }
        self.mean_distribution.validate(self.scale)?;
        self.sigma_model.validate()
    }
}

/// Observable trials and the hidden densities that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub trials: TrialTable,
    /// One rating per (user, item), in generation order.
    pub truth: Vec<UncertainRating>,
}

pub fn user_id(u: usize) -> String {
    format!("u{}", u + 1)
}

pub fn item_id(i: usize) -> String {
    format!("i{}", i + 1)
}

/// Generates a study. Pair `(u, i)` draws from `derive_rng(seed, u·items + i)`.
pub fn simulate(cfg: &SimConfig) -> Result<Simulation> {
    cfg.validate()?;
    let sampler = cfg.sigma_model.sampler()?;
    let pairs = cfg.users * cfg.items;
    let generated: Vec<(UncertainRating, Vec<TrialRow>)> = (0..pairs)
        .into_par_iter()
        .map(|p| {
            let mut rng = derive_rng(cfg.seed, p as u64);
            let (user, item) = (user_id(p / cfg.items), item_id(p % cfg.items));
            let mean = cfg.mean_distribution.draw(&mut rng);
            let sigma = sampler.draw(&mut rng);
            let density = Gaussian::from_std(mean, sigma)?;
            let rows = (1..=cfg.trials)
                .map(|trial| {
                    let mut rating = density.draw(&mut rng);
                    if cfg.discretize {
                        rating = rating.clamp(cfg.scale.min(), cfg.scale.max()).round();
                    }
                    TrialRow {
                        user: user.clone(),
                        item: item.clone(),
                        trial,
                        rating,
                    }
                })
                .collect();
            Ok((UncertainRating::new(user, item, density), rows))
        })
        .collect::<Result<_>>()?;
    let mut truth = Vec::with_capacity(pairs);
    let mut rows = Vec::with_capacity(pairs * cfg.trials as usize);
    for (t, r) in generated {
        truth.push(t);
        rows.extend(r);
    }
    let scale = cfg.discretize.then_some(cfg.scale);
    Ok(Simulation {
        trials: TrialTable::new(rows, scale)?,
        truth,
    })
}

/// Synthetic recommender predictions `π = μ + ε`, `ε ~ N(0, noise²)`, for
/// each `(system, noise)` pair. System `s` draws from
/// `derive_rng(seed, u64::MAX - s)`.
pub fn simulate_predictions(
    truth: &[UncertainRating],
    systems: &[(String, f64)],
    seed: u64,
) -> Result<PredictionTable> {
    let mut rows = Vec::with_capacity(truth.len() * systems.len());
    for (s, (name, noise)) in systems.iter().enumerate() {
        let g = Gaussian::from_std(0.0, *noise)?;
        let mut rng = derive_rng(seed, u64::MAX - s as u64);
        for r in truth {
            rows.push(PredictionRow {
                system: name.clone(),
                user: r.user.clone(),
                item: r.item.clone(),
                prediction: r.density.mean() + g.draw(&mut rng),
            });
        }
    }
    PredictionTable::new(rows)
}

/// Metric values of one system, one per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSeries {
    pub system: String,
    pub trials: Vec<u32>,
    pub values: Vec<f64>,
}

impl SystemSeries {
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// For every system and trial, the metric over that trial's ratings.
/// Systems are sorted by name, trials ascending.
pub fn trial_metric_series(
    trials: &TrialTable,
    predictions: &PredictionTable,
    metric: Metric,
) -> Result<Vec<SystemSeries>> {
    if trials.is_empty() {
        return Err(Error::InsufficientData("trial table is empty".into()));
    }
    let numbers = trials.trial_numbers();
    predictions
        .systems()
        .into_iter()
        .map(|system| {
            let mut by_trial: Vec<Vec<f64>> = vec![Vec::new(); numbers.len()];
            for row in trials.rows() {
                let pi = predictions
                    .get(&system, &row.user, &row.item)
                    .ok_or_else(|| Error::MissingPrediction {
                        system: system.clone(),
                        user: row.user.clone(),
                        item: row.item.clone(),
                    })?;
                let t = numbers.binary_search(&row.trial).expect("trial number listed");
                by_trial[t].push(row.rating - pi);
            }
            let values = by_trial.iter().map(|res| metric.evaluate(res)).collect::<Result<_>>()?;
            Ok(SystemSeries {
                system,
                trials: numbers.clone(),
                values,
            })
        })
        .collect()
}
