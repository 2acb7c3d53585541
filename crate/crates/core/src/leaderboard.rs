//! Re-auditing a published, scores-only leaderboard.
//!
//! Each published RMSE becomes `Z ~ N(score, σ_score²)`. σ_score² comes from
//! the closed-form RMSE variance evaluated over `n` test ratings, each given a
//! σ from an uncertainty model and the residual `Δ² = score²` (the only
//! allocation determined by the published aggregate alone). The four sums the
//! closed form needs are accumulated on the fly, so `n` costs time but no
//! memory.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::PropagationSums;
use crate::ranking::{error_matrix, ErrorMatrix};
use crate::stats::{derive_rng, Gaussian};
use crate::uncertainty::{ModelKind, UncertaintyModel};

/// Size of the Netflix Prize test record.
pub const NETFLIX_TEST_RATINGS: u64 = 2_800_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub rank: u32,
    pub name: String,
    /// Published point RMSE.
    pub score: f64,
    pub score_variance: Option<f64>,
    /// `(variance at σ_min, variance at σ_max)`; bound analyses only.
    pub variance_interval: Option<(f64, f64)>,
}

impl LeaderboardEntry {
    pub fn new(rank: u32, name: impl Into<String>, score: f64) -> Self {
        LeaderboardEntry {
            rank,
            name: name.into(),
            score,
            score_variance: None,
            variance_interval: None,
        }
    }

    pub fn label(&self) -> String {
        format!("R{}", self.rank)
    }

    pub fn score_std(&self) -> Option<f64> {
        self.score_variance.map(f64::sqrt)
    }
}

/// Warnings for entries whose score is lower (better) than a worse-ranked
/// predecessor's.
pub fn rank_order_warnings(entries: &[LeaderboardEntry]) -> Vec<String> {
    let mut sorted: Vec<&LeaderboardEntry> = entries.iter().collect();
    sorted.sort_by_key(|e| e.rank);
    sorted
        .windows(2)
        .filter(|w| w[1].score < w[0].score)
        .map(|w| {
            format!(
                "rank {} ({}) scores {} below rank {} ({}) at {}",
                w[1].rank, w[1].name, w[1].score, w[0].rank, w[0].name, w[0].score
            )
        })
        .collect()
}

/// How σ is attached to the single-shot test ratings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Approach {
    /// Draw from a density fitted to repeated-trial data.
    A,
    /// Draw from an assumed parametric density.
    B,
    /// Pin σ to the smallest and largest values the scale allows.
    C,
}

impl std::str::FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Approach::A),
            "B" => Ok(Approach::B),
            "C" => Ok(Approach::C),
            other => Err(Error::invalid(format!("unknown approach {other:?}"))),
        }
    }
}

/// How to read an externally reported score deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviationReading {
    /// The number is σ_score; the variance is its square.
    StdDev,
    /// The number is σ_score² itself.
    Variance,
}

/// A score deviation imposed on every entry instead of computing one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedDeviation {
    pub value: f64,
    pub reading: DeviationReading,
}

impl FixedDeviation {
    pub fn variance(&self) -> f64 {
        match self.reading {
            DeviationReading::StdDev => self.value * self.value,
            DeviationReading::Variance => self.value,
        }
    }
}

/// Residuals assumed for the unseen test ratings.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum DeltaAllocation {
    /// `Δ_ν = score` for every rating.
    #[default]
    Constant,
    /// One residual per test rating; length must equal `n`.
    PerRating(Arc<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    pub n: u64,
    pub approach: Approach,
    pub seed: u64,
    pub deltas: DeltaAllocation,
    pub fixed_deviation: Option<FixedDeviation>,
}

impl AuditConfig {
    pub fn new(n: u64, approach: Approach, seed: u64) -> Self {
        AuditConfig {
            n,
            approach,
            seed,
            deltas: DeltaAllocation::Constant,
            fixed_deviation: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("audit needs n ≥ 1 test ratings"));
        }
        if let DeltaAllocation::PerRating(d) = &self.deltas {
            if d.len() as u64 != self.n {
                return Err(Error::invalid(format!(
                    "{} residuals supplied for n = {}",
                    d.len(),
                    self.n
                )));
            }
        }
        if let Some(f) = self.fixed_deviation {
            if !f.value.is_finite() || f.value < 0.0 {
                return Err(Error::invalid("fixed score deviation must be ≥ 0"));
            }
        }
        Ok(())
    }
}

fn sums_with<F>(n: u64, deltas: &DeltaAllocation, score: f64, mut sigma: F) -> PropagationSums
where
    F: FnMut() -> f64,
{
    let mut sums = PropagationSums::new();
    match deltas {
        DeltaAllocation::Constant => {
            for _ in 0..n {
                let s = sigma();
                sums.push(s * s, score);
            }
        }
        DeltaAllocation::PerRating(d) => {
            for &delta in d.iter() {
                let s = sigma();
                sums.push(s * s, delta);
            }
        }
    }
    sums
}

fn homogeneous_variance(n: u64, deltas: &DeltaAllocation, score: f64, sigma: f64) -> Result<f64> {
    let sums = match deltas {
        DeltaAllocation::Constant => {
            let mut s = PropagationSums::new();
            s.push_repeated(sigma * sigma, score, n);
            s
        }
        _ => sums_with(n, deltas, score, || sigma),
    };
    Ok(sums.rmse()?.gaussian.variance())
}

/// Attaches a score variance to one entry.
///
/// Approaches A and B draw σ_ν for every one of the `cfg.n` test ratings from
/// `model`; approach C evaluates both scale bounds of `model.scale()` and
/// stores the interval, with the midpoint as the point variance.
pub fn attach_variance<R: Rng + ?Sized>(
    entry: &LeaderboardEntry,
    cfg: &AuditConfig,
    model: &UncertaintyModel,
    rng: &mut R,
) -> Result<LeaderboardEntry> {
    cfg.validate()?;
    if !(entry.score.is_finite() && entry.score > 0.0) {
        return Err(Error::invalid(format!(
            "rank {}: score must be positive, got {}",
            entry.rank, entry.score
        )));
    }
    let mut out = entry.clone();
    out.variance_interval = None;
    if let Some(fixed) = cfg.fixed_deviation {
        out.score_variance = Some(fixed.variance());
        return Ok(out);
    }
    match cfg.approach {
        Approach::A | Approach::B => {
            let wanted = if cfg.approach == Approach::A {
                matches!(model.kind(), ModelKind::EmpiricalMl)
            } else {
                matches!(model.kind(), ModelKind::Parametric)
            };
            if !wanted {
                return Err(Error::invalid(format!(
                    "approach {:?} cannot use a {:?} uncertainty model",
                    cfg.approach,
                    model.kind()
                )));
            }
            let sampler = model.sampler()?;
            let sums = sums_with(cfg.n, &cfg.deltas, entry.score, || sampler.draw(rng));
            out.score_variance = Some(sums.rmse()?.gaussian.variance());
        }
        Approach::C => {
            let scale = model.scale();
            let low = homogeneous_variance(cfg.n, &cfg.deltas, entry.score, 0.0)?;
            let high = homogeneous_variance(cfg.n, &cfg.deltas, entry.score, scale.max_sigma())?;
            out.score_variance = Some(0.5 * (low + high));
            out.variance_interval = Some((low, high));
        }
    }
    Ok(out)
}

/// An error matrix and which variance it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditMatrix {
    /// `"point"` for approaches A and B, `"sigma-min"` / `"sigma-max"` for C.
    pub variant: String,
    pub matrix: ErrorMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub entries: Vec<LeaderboardEntry>,
    pub matrices: Vec<AuditMatrix>,
}

fn matrix_from(entries: &[LeaderboardEntry], variance: impl Fn(&LeaderboardEntry) -> f64) -> Result<ErrorMatrix> {
    let systems = entries
        .iter()
        .map(|e| Ok((e.label(), Gaussian::new(e.score, variance(e))?)))
        .collect::<Result<Vec<_>>>()?;
    error_matrix(&systems)
}

/// Attaches variances to every entry and builds the pairwise error matrix.
///
/// Entry `rank` draws from `derive_rng(cfg.seed, rank)`, so results do not
/// depend on scheduling.
pub fn audit(entries: &[LeaderboardEntry], cfg: &AuditConfig, model: &UncertaintyModel) -> Result<AuditReport> {
    if entries.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "audit needs at least two leaderboard entries, got {}",
            entries.len()
        )));
    }
    cfg.validate()?;
    let attached: Vec<LeaderboardEntry> = entries
        .par_iter()
        .map(|e| {
            let mut rng = derive_rng(cfg.seed, e.rank as u64);
            attach_variance(e, cfg, model, &mut rng)
        })
        .collect::<Result<_>>()?;

    let matrices = match (cfg.approach, cfg.fixed_deviation) {
        (Approach::C, None) => vec![
            AuditMatrix {
                variant: "sigma-min".into(),
                matrix: matrix_from(&attached, |e| e.variance_interval.expect("interval").0)?,
            },
            AuditMatrix {
                variant: "sigma-max".into(),
                matrix: matrix_from(&attached, |e| e.variance_interval.expect("interval").1)?,
            },
        ],
        _ => vec![AuditMatrix {
            variant: "point".into(),
            matrix: matrix_from(&attached, |e| e.score_variance.expect("variance"))?,
        }],
    };
    Ok(AuditReport {
        entries: attached,
        matrices,
    })
}
