//! Ranking reliability of competing systems whose scores are Gaussian.
//!
//! Lower scores rank better. For independent `Z₁ ~ N(μ₁, σ₁²)` and
//! `Z₂ ~ N(μ₂, σ₂²)` with `μ₁ ≤ μ₂`, the ranking "1 before 2" is wrong with
//! probability `P(Z₁ ≥ Z₂) = Φ((μ₁ − μ₂) / √(σ₁² + σ₂²))`.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{derive_rng, std_normal_cdf, Gaussian};

/// `P(Z₁ ≥ Z₂)` for independent Gaussians.
///
/// With both variances zero the answer is 0, ½ or 1 according to how the
/// means compare.
pub fn error_probability(z1: &Gaussian, z2: &Gaussian) -> f64 {
    let var = z1.variance() + z2.variance();
    let gap = z1.mean() - z2.mean();
    if var == 0.0 {
        return if gap < 0.0 {
            0.0
        } else if gap == 0.0 {
            0.5
        } else {
            1.0
        };
    }
    std_normal_cdf(gap / var.sqrt())
}

/// Pairwise ranking-error probabilities, systems sorted best (lowest mean)
/// first. Only the upper triangle, diagonal included, is stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMatrix {
    pub labels: Vec<String>,
    pub scores: Vec<Gaussian>,
    /// `p[i][k]` holds the entry for column `j = i + k`.
    p: Vec<Vec<f64>>,
}

impl ErrorMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `P(Z_i ≥ Z_j)` for `i ≤ j` (positions in sorted order); ½ on the diagonal.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i > j {
            return None;
        }
        self.p.get(i).and_then(|row| row.get(j - i)).copied()
    }

    /// Entry by label pair, in either order; the result is for the better-ranked
    /// system of the two.
    pub fn get_by_label(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        self.get(i.min(j), i.max(j))
    }

    /// Rows of the upper triangle; row `i` starts at the diagonal.
    pub fn upper_rows(&self) -> &[Vec<f64>] {
        &self.p
    }

    /// Collapses runs of systems with identical score densities into one
    /// entry labelled `a/b`, the way published leaderboards show shared places.
    pub fn merge_ties(&self) -> ErrorMatrix {
        let mut keep: Vec<usize> = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        for i in 0..self.len() {
            match keep.last() {
                Some(&k) if self.scores[k] == self.scores[i] => {
                    let last = labels.last_mut().expect("label for kept row");
                    last.push('/');
                    last.push_str(&self.labels[i]);
                }
                _ => {
                    keep.push(i);
                    labels.push(self.labels[i].clone());
                }
            }
        }
        let p = keep
            .iter()
            .enumerate()
            .map(|(a, &i)| keep[a..].iter().map(|&j| self.get(i, j).unwrap()).collect())
            .collect();
        ErrorMatrix {
            labels,
            scores: keep.iter().map(|&i| self.scores[i]).collect(),
            p,
        }
    }
}

/// Builds the error matrix for `systems` after sorting them by mean (stable, so
/// ties keep input order).
pub fn error_matrix(systems: &[(String, Gaussian)]) -> Result<ErrorMatrix> {
    if systems.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "an error matrix needs at least two systems, got {}",
            systems.len()
        )));
    }
    let mut sorted: Vec<&(String, Gaussian)> = systems.iter().collect();
    sorted.sort_by(|a, b| a.1.mean().total_cmp(&b.1.mean()));
    let p = (0..sorted.len())
        .map(|i| {
            (i..sorted.len())
                .map(|j| {
                    if i == j {
                        0.5
                    } else {
                        error_probability(&sorted[i].1, &sorted[j].1)
                    }
                })
                .collect()
        })
        .collect();
    Ok(ErrorMatrix {
        labels: sorted.iter().map(|s| s.0.clone()).collect(),
        scores: sorted.iter().map(|s| s.1).collect(),
        p,
    })
}

/// One complete ordering (best first) and how often it occurred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderFrequency {
    pub order: Vec<String>,
    pub count: u64,
    pub probability: f64,
}

/// Empirical distribution over complete orderings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderDistribution {
    /// Most frequent first.
    pub orders: Vec<OrderFrequency>,
    pub samples: u64,
}

impl OrderDistribution {
    /// Fraction of samples in which `worse` ranked ahead of `better`, i.e. the
    /// empirical frequency of `Z_better ≥ Z_worse`.
    pub fn pairwise(&self, better: &str, worse: &str) -> Option<f64> {
        let mut hits = 0u64;
        for o in &self.orders {
            let i = o.order.iter().position(|l| l == better)?;
            let j = o.order.iter().position(|l| l == worse)?;
            if i > j {
                hits += o.count;
            }
        }
        Some(hits as f64 / self.samples as f64)
    }
}

pub const MAX_ORDER_SYSTEMS: usize = 10;
pub const MIN_ORDER_SAMPLES: usize = 10_000;
const ORDER_CHUNK: usize = 4096;

/// Monte Carlo frequencies of complete orderings. Chunk `c` of `ORDER_CHUNK`
/// samples draws from `derive_rng(seed, c)`.
pub fn order_probabilities(systems: &[(String, Gaussian)], seed: u64, samples: usize) -> Result<OrderDistribution> {
    if systems.len() < 2 {
        return Err(Error::InsufficientData("ordering needs at least two systems".into()));
    }
    if systems.len() > MAX_ORDER_SYSTEMS {
        return Err(Error::TooManySystems {
            count: systems.len(),
            max: MAX_ORDER_SYSTEMS,
        });
    }
    if samples < MIN_ORDER_SAMPLES {
        return Err(Error::invalid(format!(
            "order probabilities need at least {MIN_ORDER_SAMPLES} samples, got {samples}"
        )));
    }
    let chunks = samples.div_ceil(ORDER_CHUNK);
    let partial: Vec<HashMap<Vec<u8>, u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = derive_rng(seed, c as u64);
            let len = ORDER_CHUNK.min(samples - c * ORDER_CHUNK);
            let mut counts: HashMap<Vec<u8>, u64> = HashMap::new();
            let mut draws = vec![0.0; systems.len()];
            let mut idx: Vec<u8> = Vec::with_capacity(systems.len());
            for _ in 0..len {
                for (d, (_, g)) in draws.iter_mut().zip(systems) {
                    *d = g.draw(&mut rng);
                }
                idx.clear();
                idx.extend(0..systems.len() as u8);
                idx.sort_by(|&a, &b| draws[a as usize].total_cmp(&draws[b as usize]));
                *counts.entry(idx.clone()).or_default() += 1;
            }
            counts
        })
        .collect();
    let mut total: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
    for counts in partial {
        for (k, v) in counts {
            *total.entry(k).or_default() += v;
        }
    }
    let mut orders: Vec<(Vec<u8>, u64)> = total.into_iter().collect();
    orders.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(OrderDistribution {
        orders: orders
            .into_iter()
            .map(|(idx, count)| OrderFrequency {
                order: idx.iter().map(|&i| systems[i as usize].0.clone()).collect(),
                count,
                probability: count as f64 / samples as f64,
            })
            .collect(),
        samples: samples as u64,
    })
}
