//! Two-group permutation engine shared by the cosine tests and LPBS.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest rank space sampled without replacement.
const MAX_RANKED: u128 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupStatistic {
    /// Σ first − Σ second.
    SumDifference,
    /// mean first − mean second.
    MeanDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    Greater,
    TwoSided,
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) after the multiplication.
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Relabelings of a pooled sample into a first group of fixed size and the
/// rest. The identity labeling puts the first `first` values in group one.
#[derive(Debug, Clone)]
pub struct Permutation<'a> {
    values: &'a [f64],
    first: usize,
    statistic: GroupStatistic,
    alternative: Alternative,
    tol: f64,
}

impl<'a> Permutation<'a> {
    pub fn new(
        values: &'a [f64],
        first: usize,
        statistic: GroupStatistic,
        alternative: Alternative,
    ) -> Result<Self> {
        if first == 0 || first >= values.len() {
            return Err(Error::InvalidInput(format!(
                "permutation groups must be non-empty (first={first}, total={})",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite score".into()));
        }
        // Bound on the rounding error of a group sum; ties within it count.
        let tol = 16.0 * f64::EPSILON * values.iter().map(|v| v.abs()).sum::<f64>();
        Ok(Permutation {
            values,
            first,
            statistic,
            alternative,
            tol,
        })
    }

    pub fn partitions(&self) -> u128 {
        binomial(self.values.len(), self.first)
    }

    fn stat_of(&self, member: &[bool]) -> f64 {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (&v, &m) in self.values.iter().zip(member) {
            if m {
                s1 += v;
            } else {
                s2 += v;
            }
        }
        match self.statistic {
            GroupStatistic::SumDifference => s1 - s2,
            GroupStatistic::MeanDifference => {
                s1 / self.first as f64 - s2 / (self.values.len() - self.first) as f64
            }
        }
    }

    fn identity(&self) -> Vec<bool> {
        (0..self.values.len()).map(|i| i < self.first).collect()
    }

    pub fn observed(&self) -> f64 {
        self.stat_of(&self.identity())
    }

    fn is_extreme(&self, stat: f64, observed: f64) -> bool {
        match self.alternative {
            Alternative::Greater => stat >= observed - self.tol,
            Alternative::TwoSided => stat.abs() >= observed.abs() - self.tol,
        }
    }

    /// Exact p over every relabeling (identity included). Returns the
    /// p-value and the number of relabelings visited.
    pub fn exact(&self, budget: u128) -> Result<(f64, u128)> {
        let total = self.partitions();
        if total > budget {
            return Err(Error::BudgetExceeded {
                partitions: total,
                budget,
            });
        }
        let observed = self.observed();
        let n = self.values.len();
        let k = self.first;
        let mut idx: Vec<usize> = (0..k).collect();
        let mut member = vec![false; n];
        let mut hits: u128 = 0;
        let mut visited: u128 = 0;
        loop {
            member.iter_mut().for_each(|m| *m = false);
            for &i in &idx {
                member[i] = true;
            }
            visited += 1;
            if self.is_extreme(self.stat_of(&member), observed) {
                hits += 1;
            }
            // Advance to the next k-combination in lexicographic order.
            let mut i = k;
            while i > 0 && idx[i - 1] == n - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
        debug_assert_eq!(visited, total);
        Ok((hits as f64 / visited as f64, visited))
    }

    /// Statistics of `n` randomly drawn relabelings, deterministic per seed.
    pub fn sample_statistics(&self, n: usize, seed: u64) -> Vec<f64> {
        let total = self.partitions();
        let len = self.values.len();
        if total <= MAX_RANKED && (n as u128) < total {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ranks = index::sample(&mut rng, total as usize, n).into_vec();
            ranks
                .par_iter()
                .map(|&r| self.stat_of(&unrank(r as u128, len, self.first)))
                .collect()
        } else {
            (0..n as u64)
                .into_par_iter()
                .map(|j| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(j);
                    let mut member = vec![false; len];
                    for i in index::sample(&mut rng, len, self.first) {
                        member[i] = true;
                    }
                    self.stat_of(&member)
                })
                .collect()
        }
    }

    /// Conservative Monte-Carlo p-value (k + 1) / (n + 1).
    pub fn sampled(&self, n: usize, seed: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        let observed = self.observed();
        let k = self
            .sample_statistics(n, seed)
            .into_iter()
            .filter(|&s| self.is_extreme(s, observed))
            .count();
        Ok((k + 1) as f64 / (n + 1) as f64)
    }

    /// Normal approximation fitted to `n` sampled relabeling statistics.
    pub fn parametric(&self, n: usize, seed: u64) -> Result<f64> {
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n });
        }
        let samples = self.sample_statistics(n, seed);
        let observed = self.observed();
        match self.alternative {
            Alternative::Greater => normal_upper_tail(observed, &samples),
            Alternative::TwoSided => {
                let upper = normal_upper_tail(observed.abs(), &samples)?;
                let lower = 1.0 - normal_upper_tail(-observed.abs(), &samples)?;
                Ok((upper + lower).min(1.0))
            }
        }
    }
}

/// P[N > observed] for a normal with the samples' mean and sample standard
/// deviation.
pub fn normal_upper_tail(observed: f64, samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::DegenerateVariance);
    }
    let z = (observed - mean) / sd;
    Ok(Normal::standard().sf(z))
}

/// The `rank`-th k-subset of 0..n in lexicographic order, as a membership mask.
fn unrank(mut rank: u128, n: usize, k: usize) -> Vec<bool> {
    let mut member = vec![false; n];
    let mut remaining = k;
    for (i, slot) in member.iter_mut().enumerate() {
        if remaining == 0 {
            break;
        }
        // Subsets that start with i at this position.
        let with_i = binomial(n - i - 1, remaining - 1);
        if rank < with_i {
            *slot = true;
            remaining -= 1;
        } else {
            rank -= with_i;
        }
    }
    member
}
