//! Per-rating human uncertainty.
//!
//! A rating observed several times is summarised by a normal density fitted to
//! its trials. Ratings observed only once get their σ from a population-level
//! [`UncertaintyModel`]: fitted from repeated-trial data, assumed from a
//! parametric family, or pinned to either end of the range allowed by the
//! rating scale.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rand_distr::{Beta, Distribution, Triangular, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{fit_gaussian_ml, Gaussian};

/// Closed rating scale `[min, max]` in stars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    min: f64,
    max: f64,
}

impl Scale {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() || max <= min {
            return Err(Error::invalid(format!(
                "rating scale needs finite min < max (got [{min}, {max}])"
            )));
        }
        Ok(Scale { min, max })
    }

    /// The 1..5 star scale used by the Netflix record.
    pub fn five_star() -> Self {
        Scale { min: 1.0, max: 5.0 }
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn contains(&self, rating: f64) -> bool {
        rating >= self.min && rating <= self.max
    }

    /// Largest standard deviation any density on the scale can have.
    pub fn max_sigma(&self) -> f64 {
        (self.max - self.min) / 2.0
    }
}

/// Smallest and largest possible rating standard deviation on `[min, max]`.
///
/// The maximum is attained by the two-point distribution with half its mass at
/// each end of the scale.
pub fn bound_sigma(min: f64, max: f64) -> Result<(f64, f64)> {
    let scale = Scale::new(min, max)?;
    Ok((0.0, scale.max_sigma()))
}

/// One observation of a repeated-rating study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub user: String,
    pub item: String,
    /// 1-based trial number.
    pub trial: u32,
    pub rating: f64,
}

/// Validated repeated-trial ratings.
///
/// Trial numbers are unique per (user, item). When a scale is attached every
/// rating lies inside it; simulated continuous studies carry no scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTable {
    rows: Vec<TrialRow>,
    scale: Option<Scale>,
}

impl TrialTable {
    pub fn new(rows: Vec<TrialRow>, scale: Option<Scale>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.trial == 0 {
                return Err(Error::invalid(format!("row {}: trial numbers start at 1", i + 1)));
            }
            if !row.rating.is_finite() {
                return Err(Error::invalid(format!("row {}: rating is not finite", i + 1)));
            }
            if let Some(s) = scale {
                if !s.contains(row.rating) {
                    return Err(Error::invalid(format!(
                        "row {}: rating {} outside scale [{}, {}]",
                        i + 1,
                        row.rating,
                        s.min(),
                        s.max()
                    )));
                }
            }
            if !seen.insert((row.user.as_str(), row.item.as_str(), row.trial)) {
                return Err(Error::invalid(format!(
                    "row {}: trial {} repeated for ({}, {})",
                    i + 1,
                    row.trial,
                    row.user,
                    row.item
                )));
            }
        }
        Ok(TrialTable { rows, scale })
    }

    pub fn rows(&self) -> &[TrialRow] {
        &self.rows
    }

    pub fn scale(&self) -> Option<Scale> {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Ratings grouped by (user, item), keys in sorted order.
    pub fn groups(&self) -> BTreeMap<(&str, &str), Vec<&TrialRow>> {
        let mut groups: BTreeMap<(&str, &str), Vec<&TrialRow>> = BTreeMap::new();
        for row in &self.rows {
            groups
                .entry((row.user.as_str(), row.item.as_str()))
                .or_default()
                .push(row);
        }
        groups
    }

    /// Distinct trial numbers, ascending.
    pub fn trial_numbers(&self) -> Vec<u32> {
        let mut t: Vec<u32> = self.rows.iter().map(|r| r.trial).collect();
        t.sort_unstable();
        t.dedup();
        t
    }
}

/// A rating modelled as `X ~ N(μ, σ²)`, optionally paired with a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertainRating {
    pub user: String,
    pub item: String,
    pub density: Gaussian,
    pub predictor: Option<f64>,
    /// Number of trials the density was estimated from (0 if supplied directly).
    pub trials: usize,
}

impl UncertainRating {
    pub fn new(user: impl Into<String>, item: impl Into<String>, density: Gaussian) -> Self {
        UncertainRating {
            user: user.into(),
            item: item.into(),
            density,
            predictor: None,
            trials: 0,
        }
    }

    pub fn with_predictor(mut self, predictor: f64) -> Self {
        self.predictor = Some(predictor);
        self
    }

    /// True when the variance came from a single observation and is therefore 0
    /// by construction rather than by measurement.
    pub fn single_trial(&self) -> bool {
        self.trials == 1
    }

    /// Residual `μ − π`, if a prediction is attached.
    pub fn residual(&self) -> Option<f64> {
        self.predictor.map(|p| self.density.mean() - p)
    }
}

/// Fits one density per (user, item) group of a trial table.
///
/// Output is sorted by (user, item). Single-trial groups get σ = 0 and are
/// recognisable through [`UncertainRating::single_trial`].
pub fn estimate_from_trials(trials: &TrialTable) -> Result<Vec<UncertainRating>> {
    if trials.is_empty() {
        return Err(Error::InsufficientData("trial table is empty".into()));
    }
    trials
        .groups()
        .into_iter()
        .map(|((user, item), rows)| {
            // sort so the floating-point sums do not depend on row order
            let mut ratings: Vec<f64> = rows.iter().map(|r| r.rating).collect();
            ratings.sort_by(f64::total_cmp);
            Ok(UncertainRating {
                user: user.to_owned(),
                item: item.to_owned(),
                density: fit_gaussian_ml(&ratings)?,
                predictor: None,
                trials: rows.len(),
            })
        })
        .collect()
}

/// A density over σ ∈ [0, σ_max].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SigmaDensity {
    /// Always the same σ.
    Point { sigma: f64 },
    /// Uniform on `[0, upper]`.
    Uniform { upper: f64 },
    /// Triangular with support `[0, σ_max]` and the given mode.
    Triangular { mode: f64 },
    /// `σ_max · Beta(alpha, beta)`.
    Beta { alpha: f64, beta: f64 },
}

/// Family fitted by [`fit_population_sigma`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFamily {
    #[default]
    Beta,
    Uniform,
    Triangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundEnd {
    Min,
    Max,
}

/// How a model came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// ML fit to σ values observed in repeated trials.
    EmpiricalMl,
    /// An assumed parametric family.
    Parametric,
    /// σ pinned to one end of the scale's admissible range.
    Bound(BoundEnd),
}

/// Population-level model for the σ attached to single-shot ratings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UncertaintyModel {
    kind: ModelKind,
    density: SigmaDensity,
    scale: Scale,
    degenerate: bool,
}

impl UncertaintyModel {
    fn build(kind: ModelKind, density: SigmaDensity, scale: Scale) -> Result<Self> {
        let model = UncertaintyModel {
            kind,
            density,
            scale,
            degenerate: false,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn uniform(scale: Scale, upper: f64) -> Result<Self> {
        Self::build(ModelKind::Parametric, SigmaDensity::Uniform { upper }, scale)
    }

    pub fn triangular(scale: Scale, mode: f64) -> Result<Self> {
        Self::build(ModelKind::Parametric, SigmaDensity::Triangular { mode }, scale)
    }

    pub fn beta(scale: Scale, alpha: f64, beta: f64) -> Result<Self> {
        Self::build(ModelKind::Parametric, SigmaDensity::Beta { alpha, beta }, scale)
    }

    pub fn constant(scale: Scale, sigma: f64) -> Result<Self> {
        Self::build(ModelKind::Parametric, SigmaDensity::Point { sigma }, scale)
    }

    pub fn bound(scale: Scale, end: BoundEnd) -> Self {
        let sigma = match end {
            BoundEnd::Min => 0.0,
            BoundEnd::Max => scale.max_sigma(),
        };
        UncertaintyModel {
            kind: ModelKind::Bound(end),
            density: SigmaDensity::Point { sigma },
            scale,
            degenerate: false,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn density(&self) -> SigmaDensity {
        self.density
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    /// Set when a fit saw no variability at all and fell back to σ ≡ 0.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn validate(&self) -> Result<()> {
        let smax = self.scale.max_sigma();
        let ok = match self.density {
            SigmaDensity::Point { sigma } => sigma.is_finite() && (0.0..=smax).contains(&sigma),
            SigmaDensity::Uniform { upper } => upper.is_finite() && upper > 0.0 && upper <= smax,
            SigmaDensity::Triangular { mode } => mode.is_finite() && (0.0..=smax).contains(&mode),
            SigmaDensity::Beta { alpha, beta } => alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{:?} is not a valid σ density on [0, {smax}]",
                self.density
            )))
        }
    }

    /// `E[σ^k]` under the model.
    pub fn raw_moment(&self, k: u32) -> f64 {
        let b = self.scale.max_sigma();
        let kf = k as f64;
        match self.density {
            SigmaDensity::Point { sigma } => sigma.powi(k as i32),
            SigmaDensity::Uniform { upper } => upper.powi(k as i32) / (kf + 1.0),
            SigmaDensity::Triangular { mode: c } => {
                let mut m = 0.0;
                if c > 0.0 {
                    m += 2.0 * c.powi(k as i32 + 1) / (b * (kf + 2.0));
                }
                if c < b {
                    let tail = b * (b.powi(k as i32 + 1) - c.powi(k as i32 + 1)) / (kf + 1.0)
                        - (b.powi(k as i32 + 2) - c.powi(k as i32 + 2)) / (kf + 2.0);
                    m += 2.0 * tail / (b * (b - c));
                }
                m
            }
            SigmaDensity::Beta { alpha, beta } => (0..k).fold(b.powi(k as i32), |acc, r| {
                acc * (alpha + r as f64) / (alpha + beta + r as f64)
            }),
        }
    }

    /// A reusable sampler; validates the parameters once.
    pub fn sampler(&self) -> Result<SigmaSampler> {
        self.validate()?;
        let smax = self.scale.max_sigma();
        let bad = |e: &dyn std::fmt::Display| Error::invalid(e.to_string());
        let inner = match self.density {
            SigmaDensity::Point { sigma } => SamplerInner::Point(sigma),
            SigmaDensity::Uniform { upper } => {
                SamplerInner::Uniform(Uniform::new_inclusive(0.0, upper).map_err(|e| bad(&e))?)
            }
            SigmaDensity::Triangular { mode } => {
                SamplerInner::Triangular(Triangular::new(0.0, smax, mode).map_err(|e| bad(&e))?)
            }
            SigmaDensity::Beta { alpha, beta } => SamplerInner::Beta(Beta::new(alpha, beta).map_err(|e| bad(&e))?),
        };
        Ok(SigmaSampler { inner, smax })
    }
}

/// Draws σ values from an [`UncertaintyModel`].
#[derive(Debug, Clone, Copy)]
pub struct SigmaSampler {
    inner: SamplerInner,
    smax: f64,
}

#[derive(Debug, Clone, Copy)]
enum SamplerInner {
    Point(f64),
    Uniform(Uniform<f64>),
    Triangular(Triangular<f64>),
    Beta(Beta<f64>),
}

impl SigmaSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let s = match &self.inner {
            SamplerInner::Point(s) => *s,
            SamplerInner::Uniform(d) => d.sample(rng),
            SamplerInner::Triangular(d) => d.sample(rng),
            SamplerInner::Beta(d) => self.smax * d.sample(rng),
        };
        s.clamp(0.0, self.smax)
    }
}

/// Draws `n` i.i.d. σ values from `model`.
pub fn draw_sigma<R: Rng + ?Sized>(model: &UncertaintyModel, rng: &mut R, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("draw count must be at least 1"));
    }
    let sampler = model.sampler()?;
    Ok((0..n).map(|_| sampler.draw(rng)).collect())
}

/// Fits a σ model to the per-rating uncertainty observed in repeated trials.
///
/// Only ratings estimated from two or more trials take part. If every observed
/// σ is zero the result is a degenerate σ ≡ 0 model with
/// [`UncertaintyModel::is_degenerate`] set.
pub fn fit_population_sigma(ratings: &[UncertainRating], scale: Scale, family: FitFamily) -> Result<UncertaintyModel> {
    fit_population_sigma_with(ratings, scale, family, SigmaBias::Raw)
}

/// Whether per-rating σ estimates are used as is or de-biased first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaBias {
    /// Use the ML standard deviation of each rating's trials.
    #[default]
    Raw,
    /// Divide each estimate from `T` trials by `E[s_ML]/σ` for `T` normal
    /// draws, which removes the downward bias of few-trial estimates.
    SmallSampleCorrected,
}

/// [`fit_population_sigma`] with a choice of σ de-biasing.
pub fn fit_population_sigma_with(
    ratings: &[UncertainRating],
    scale: Scale,
    family: FitFamily,
    bias: SigmaBias,
) -> Result<UncertaintyModel> {
    let sigmas: Vec<f64> = ratings
        .iter()
        .filter(|r| r.trials != 1)
        .map(|r| match bias {
            SigmaBias::Raw => r.density.std_dev(),
            SigmaBias::SmallSampleCorrected if r.trials >= 2 => r.density.std_dev() / ml_sigma_bias(r.trials),
            SigmaBias::SmallSampleCorrected => r.density.std_dev(),
        })
        .collect();
    fit_sigma_values(&sigmas, scale, family)
}

/// `E[s_ML] / σ` for the ML standard deviation of `t ≥ 2` normal draws:
/// `√(2/t) · Γ(t/2) / Γ((t−1)/2)`.
pub fn ml_sigma_bias(t: usize) -> f64 {
    assert!(t >= 2, "bias factor needs at least two trials");
    // ratio(t) = Γ(t/2)/Γ((t−1)/2), stepped up from t = 2 or 3 via
    // ratio(t + 2) = t/(t − 1) · ratio(t).
    let (mut k, mut ratio) = if t % 2 == 0 {
        (2, 1.0 / std::f64::consts::PI.sqrt())
    } else {
        (3, std::f64::consts::PI.sqrt() / 2.0)
    };
    while k < t {
        ratio *= k as f64 / (k as f64 - 1.0);
        k += 2;
    }
    (2.0 / t as f64).sqrt() * ratio
}

/// Fits a σ model directly to a set of σ values.
pub fn fit_sigma_values(sigmas: &[f64], scale: Scale, family: FitFamily) -> Result<UncertaintyModel> {
    if sigmas.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least two estimated σ values to fit a population model, got {}",
            sigmas.len()
        )));
    }
    if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::invalid("σ values must be finite and non-negative"));
    }
    let smax = scale.max_sigma();
    let xs: Vec<f64> = sigmas.iter().map(|s| s.min(smax)).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let hi = xs.iter().copied().fold(0.0, f64::max);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);

    if hi == 0.0 {
        let mut model = UncertaintyModel::build(ModelKind::EmpiricalMl, SigmaDensity::Point { sigma: 0.0 }, scale)?;
        model.degenerate = true;
        return Ok(model);
    }
    if hi - lo <= 1e-12 * hi.max(1.0) {
        return UncertaintyModel::build(ModelKind::EmpiricalMl, SigmaDensity::Point { sigma: mean }, scale);
    }

    let density = match family {
        FitFamily::Uniform => SigmaDensity::Uniform { upper: hi },
        FitFamily::Triangular => SigmaDensity::Triangular {
            mode: triangular_ml_mode(&xs, smax),
        },
        FitFamily::Beta => {
            let (alpha, beta) = beta_ml(&xs, smax)?;
            SigmaDensity::Beta { alpha, beta }
        }
    };
    UncertaintyModel::build(ModelKind::EmpiricalMl, density, scale)
}

// Observations exactly at 0 or σ_max have zero likelihood under most beta and
// triangular shapes; nudge them inside the support.
const EDGE_EPS: f64 = 1e-6;

fn beta_ml(sigmas: &[f64], smax: f64) -> Result<(f64, f64)> {
    let n = sigmas.len() as f64;
    let xs: Vec<f64> = sigmas
        .iter()
        .map(|s| (s / smax).clamp(EDGE_EPS, 1.0 - EDGE_EPS))
        .collect();
    let g1 = xs.iter().map(|x| x.ln()).sum::<f64>() / n;
    let g2 = xs.iter().map(|x| (1.0 - x).ln()).sum::<f64>() / n;

    // method-of-moments start
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    let common = m * (1.0 - m) / v - 1.0;
    let (mut a, mut b) = if v > 0.0 && common > 0.0 {
        (m * common, (1.0 - m) * common)
    } else {
        (1.0, 1.0)
    };

    for _ in 0..200 {
        let dab = special::digamma(a + b);
        let f1 = special::digamma(a) - dab - g1;
        let f2 = special::digamma(b) - dab - g2;
        let tab = special::trigamma(a + b);
        let j11 = special::trigamma(a) - tab;
        let j22 = special::trigamma(b) - tab;
        let j12 = -tab;
        let det = j11 * j22 - j12 * j12;
        if !det.is_finite() || det == 0.0 {
            break;
        }
        let da = (j22 * f1 - j12 * f2) / det;
        let db = (j11 * f2 - j12 * f1) / det;
        let mut step = 1.0;
        while a - step * da <= 0.0 || b - step * db <= 0.0 {
            step *= 0.5;
        }
        a -= step * da;
        b -= step * db;
        if (step * da).abs() <= 1e-12 * a && (step * db).abs() <= 1e-12 * b {
            break;
        }
    }
    if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
        return Err(Error::invalid("beta maximum-likelihood fit did not converge"));
    }
    Ok((a, b))
}

/// ML mode of a triangular density on `[0, b]`; the optimum sits at one of the
/// order statistics (or an endpoint).
fn triangular_ml_mode(sigmas: &[f64], b: f64) -> f64 {
    let mut xs: Vec<f64> = sigmas
        .iter()
        .map(|s| s.clamp(EDGE_EPS * b, (1.0 - EDGE_EPS) * b))
        .collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    // prefix[r] = Σ_{i<r} ln x_i, suffix[r] = Σ_{i≥r} ln(b − x_i)
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + xs[i].ln();
    }
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + (b - xs[i]).ln();
    }
    // mode at 0: everything on the falling side; mode at b: everything rising
    let mut best = (suffix[0] - n as f64 * b.ln(), 0.0);
    let at_b = prefix[n] - n as f64 * b.ln();
    if at_b > best.0 {
        best = (at_b, b);
    }
    for r in 0..n {
        let c = xs[r];
        let ll = prefix[r] - r as f64 * c.ln() + suffix[r] - (n - r) as f64 * (b - c).ln();
        if ll > best.0 {
            best = (ll, c);
        }
    }
    best.1
}

mod special {
    /// ψ(x) for x > 0.
    pub fn digamma(mut x: f64) -> f64 {
        let mut acc = 0.0;
        while x < 20.0 {
            acc -= 1.0 / x;
            x += 1.0;
        }
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        acc + x.ln()
            - 0.5 * inv
            - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))))
    }

    /// ψ′(x) for x > 0.
    pub fn trigamma(mut x: f64) -> f64 {
        let mut acc = 0.0;
        while x < 20.0 {
            acc += 1.0 / (x * x);
            x += 1.0;
        }
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        acc + inv
            + 0.5 * inv2
            + inv
                * inv2
                * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))))
    }

    #[cfg(test)]
    mod tests {
        use super::*;

        #[test]
        fn known_values() {
            let euler = 0.577_215_664_901_532_9;
            assert!((digamma(1.0) + euler).abs() < 1e-13);
            assert!((digamma(0.5) + euler + 2.0 * 2f64.ln()).abs() < 1e-13);
            let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
            assert!((trigamma(1.0) - pi2_6).abs() < 1e-13);
            assert!((trigamma(0.5) - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-12);
            // recurrence
            assert!((digamma(7.3) - digamma(6.3) - 1.0 / 6.3).abs() < 1e-14);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::derive_rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn row(user: &str, item: &str, trial: u32, rating: f64) -> TrialRow {
        TrialRow {
            user: user.into(),
            item: item.into(),
            trial,
            rating,
        }
    }

    fn table(groups: &[(&str, &str, &[f64])]) -> TrialTable {
        let rows = groups
            .iter()
            .flat_map(|(u, i, rs)| rs.iter().enumerate().map(move |(t, r)| row(u, i, t as u32 + 1, *r)))
            .collect();
        TrialTable::new(rows, Some(Scale::five_star())).unwrap()
    }

    #[test]
    fn bound_sigma_examples() {
        assert_eq!(bound_sigma(1.0, 5.0).unwrap(), (0.0, 2.0));
        assert_eq!(bound_sigma(0.0, 1.0).unwrap(), (0.0, 0.5));
        assert!(bound_sigma(1.0, 1.0).is_err());
    }

    #[test]
    fn trial_table_validation() {
        let dup = vec![row("u", "i", 1, 3.0), row("u", "i", 1, 4.0)];
        assert!(TrialTable::new(dup, None).is_err());
        let out = vec![row("u", "i", 1, 6.0)];
        assert!(TrialTable::new(out.clone(), Some(Scale::five_star())).is_err());
        assert!(TrialTable::new(out, None).is_ok());
        assert!(TrialTable::new(vec![row("u", "i", 0, 3.0)], None).is_err());
    }

    #[test]
    fn estimate_examples() {
        let est = estimate_from_trials(&table(&[("u", "i", &[4.0; 5])])).unwrap();
        assert_eq!(est.len(), 1);
        assert_eq!(est[0].density, Gaussian::new(4.0, 0.0).unwrap());

        let est = estimate_from_trials(&table(&[("u", "i", &[3.0, 4.0, 3.0, 5.0, 3.0])])).unwrap();
        assert_abs_diff_eq!(est[0].density.mean(), 3.6, epsilon = 1e-12);
        assert_abs_diff_eq!(est[0].density.variance(), 0.64, epsilon = 1e-12);

        let est = estimate_from_trials(&table(&[("u1", "i1", &[3.0, 4.0]), ("u2", "i1", &[5.0])])).unwrap();
        assert_eq!(est.len(), 2);
        assert!(!est[0].single_trial());
        assert!(est[1].single_trial());
        assert_eq!(est[1].density.variance(), 0.0);

        let empty = TrialTable::new(vec![], None).unwrap();
        assert!(estimate_from_trials(&empty).is_err());
    }

    proptest! {
        #[test]
        fn estimate_is_permutation_invariant(
            ratings in prop::collection::vec(1u8..=5, 1..12),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let rows: Vec<TrialRow> = ratings
                .iter()
                .enumerate()
                .map(|(t, r)| row(if t % 2 == 0 { "a" } else { "b" }, "x", t as u32 + 1, *r as f64))
                .collect();
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut derive_rng(seed, 0));
            let a = estimate_from_trials(&TrialTable::new(rows, None).unwrap()).unwrap();
            let b = estimate_from_trials(&TrialTable::new(shuffled, None).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn bound_models_draw_the_bounds() {
        let scale = Scale::five_star();
        let mut rng = derive_rng(5, 0);
        let lo = draw_sigma(&UncertaintyModel::bound(scale, BoundEnd::Min), &mut rng, 100).unwrap();
        assert!(lo.iter().all(|&s| s == 0.0));
        let hi = draw_sigma(&UncertaintyModel::bound(scale, BoundEnd::Max), &mut rng, 100).unwrap();
        assert!(hi.iter().all(|&s| s == 2.0));
    }

    #[test]
    fn uniform_draw_mean() {
        let model = UncertaintyModel::uniform(Scale::five_star(), 1.0).unwrap();
        let xs = draw_sigma(&model, &mut derive_rng(11, 0), 100_000).unwrap();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((m - 0.5).abs() < 0.01, "{m}");
    }

    #[test]
    fn invalid_models_rejected() {
        let s = Scale::five_star();
        assert!(UncertaintyModel::uniform(s, 2.5).is_err());
        assert!(UncertaintyModel::uniform(s, 0.0).is_err());
        assert!(UncertaintyModel::triangular(s, -0.1).is_err());
        assert!(UncertaintyModel::beta(s, 0.0, 1.0).is_err());
        assert!(UncertaintyModel::constant(s, 2.1).is_err());
        assert!(draw_sigma(&UncertaintyModel::uniform(s, 1.0).unwrap(), &mut derive_rng(0, 0), 0).is_err());
    }

    #[test]
    fn draws_respect_bounds_and_seed() {
        let s = Scale::new(0.0, 1.0).unwrap();
        for model in [
            UncertaintyModel::uniform(s, 0.5).unwrap(),
            UncertaintyModel::triangular(s, 0.1).unwrap(),
            UncertaintyModel::beta(s, 0.3, 0.3).unwrap(),
        ] {
            let a = draw_sigma(&model, &mut derive_rng(3, 1), 10_000).unwrap();
            assert!(a.iter().all(|&x| (0.0..=0.5).contains(&x)));
            let b = draw_sigma(&model, &mut derive_rng(3, 1), 10_000).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn analytic_moments_match_draws() {
        let s = Scale::five_star();
        for model in [
            UncertaintyModel::uniform(s, 1.7).unwrap(),
            UncertaintyModel::triangular(s, 0.6).unwrap(),
            UncertaintyModel::triangular(s, 0.0).unwrap(),
            UncertaintyModel::triangular(s, 2.0).unwrap(),
            UncertaintyModel::beta(s, 2.0, 5.0).unwrap(),
        ] {
            let xs = draw_sigma(&model, &mut derive_rng(17, 0), 200_000).unwrap();
            for k in [1, 2, 4] {
                let emp = xs.iter().map(|x| x.powi(k as i32)).sum::<f64>() / xs.len() as f64;
                let exact = model.raw_moment(k);
                assert!((emp - exact).abs() < 0.02 * exact, "{model:?} k={k}: {emp} vs {exact}");
            }
        }
    }

    #[test]
    fn degenerate_fits() {
        let s = Scale::five_star();
        let m = fit_sigma_values(&[0.5; 10], s, FitFamily::Beta).unwrap();
        assert_eq!(m.density(), SigmaDensity::Point { sigma: 0.5 });
        assert!(!m.is_degenerate());
        let draws = draw_sigma(&m, &mut derive_rng(1, 1), 50).unwrap();
        assert!(draws.iter().all(|&x| (x - 0.5).abs() < 1e-12));

        let m = fit_sigma_values(&[0.0; 4], s, FitFamily::Uniform).unwrap();
        assert!(m.is_degenerate());
        assert_eq!(m.density(), SigmaDensity::Point { sigma: 0.0 });

        assert!(fit_sigma_values(&[], s, FitFamily::Beta).is_err());
        assert!(fit_sigma_values(&[0.3], s, FitFamily::Beta).is_err());
    }

    #[test]
    fn beta_refit_round_trip() {
        let s = Scale::five_star();
        let truth = UncertaintyModel::beta(s, 2.0, 5.0).unwrap();
        let sigmas = draw_sigma(&truth, &mut derive_rng(2, 0), 10_000).unwrap();
        let fit = fit_sigma_values(&sigmas, s, FitFamily::Beta).unwrap();
        assert_eq!(fit.kind(), ModelKind::EmpiricalMl);
        match fit.density() {
            SigmaDensity::Beta { alpha, beta } => {
                assert!((alpha - 2.0).abs() < 0.2, "alpha {alpha}");
                assert!((beta - 5.0).abs() < 0.5, "beta {beta}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn uniform_and_triangular_refits() {
        let s = Scale::five_star();
        let truth = UncertaintyModel::uniform(s, 1.5).unwrap();
        let sigmas = draw_sigma(&truth, &mut derive_rng(4, 0), 5_000).unwrap();
        match fit_sigma_values(&sigmas, s, FitFamily::Uniform).unwrap().density() {
            SigmaDensity::Uniform { upper } => assert!((upper - 1.5).abs() < 0.01),
            other => panic!("unexpected {other:?}"),
        }
        let truth = UncertaintyModel::triangular(s, 0.8).unwrap();
        let sigmas = draw_sigma(&truth, &mut derive_rng(4, 1), 5_000).unwrap();
        match fit_sigma_values(&sigmas, s, FitFamily::Triangular).unwrap().density() {
            SigmaDensity::Triangular { mode } => assert!((mode - 0.8).abs() < 0.1, "mode {mode}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sigma_bias_factor() {
        // c4(5) = 0.939985603 for the n−1 estimator; the ML estimator carries √(4/5) more.
        assert_abs_diff_eq!(ml_sigma_bias(5), 0.939_985_603 * (0.8f64).sqrt(), epsilon = 1e-8);
        assert_abs_diff_eq!(ml_sigma_bias(2), 1.0 / std::f64::consts::PI.sqrt(), epsilon = 1e-12);
        assert!(ml_sigma_bias(1000) > 0.999 && ml_sigma_bias(1000) < 1.0);
        // Monte Carlo check at T = 4
        let g = Gaussian::new(0.0, 1.0).unwrap();
        let mut rng = derive_rng(8, 0);
        let reps = 200_000;
        let mean_s = (0..reps)
            .map(|_| {
                fit_gaussian_ml(&crate::stats::sample(&g, &mut rng, 4).unwrap())
                    .unwrap()
                    .std_dev()
            })
            .sum::<f64>()
            / reps as f64;
        assert!(
            (mean_s - ml_sigma_bias(4)).abs() < 0.003,
            "{mean_s} vs {}",
            ml_sigma_bias(4)
        );
    }

    #[test]
    fn population_fit_skips_single_trial_ratings() {
        let est = estimate_from_trials(&table(&[
            ("u1", "i1", &[3.0, 4.0]),
            ("u2", "i1", &[5.0]),
            ("u3", "i1", &[2.0, 2.0, 3.0]),
        ]))
        .unwrap();
        let m = fit_population_sigma(&est, Scale::five_star(), FitFamily::Uniform).unwrap();
        match m.density() {
            SigmaDensity::Uniform { upper } => assert_abs_diff_eq!(upper, 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }
}
