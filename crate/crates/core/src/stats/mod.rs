//! Association statistics: cosine, association score, test statistic,
//! Cohen's d, permutation p-values and Holm–Bonferroni correction.

mod permutation;
pub mod selftest;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use permutation::{binomial, normal_upper_tail, Alternative, GroupStatistic, Permutation};

/// Exact enumeration budget used when the caller does not give one.
pub const DEFAULT_EXACT_BUDGET: u128 = 5_000_000;

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// s(w, A, B): mean cosine to A minus mean cosine to B.
pub fn association(w: &[f64], a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("attribute sets must be non-empty".into()));
    }
    let mut sa = 0.0;
    for v in a {
        sa += cosine(w, v)?;
    }
    let mut sb = 0.0;
    for v in b {
        sb += cosine(w, v)?;
    }
    Ok(sa / a.len() as f64 - sb / b.len() as f64)
}

/// Target and attribute vectors for one test.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationInputs {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl AssociationInputs {
    /// Checks set sizes, dimensions and zero vectors.
    pub fn new(
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::InvalidInput(format!(
                "target sets need equal non-zero sizes, got {} and {}",
                x.len(),
                y.len()
            )));
        }
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidInput("attribute sets must be non-empty".into()));
        }
        let dim = x[0].len();
        for v in x.iter().chain(&y).chain(&a).chain(&b) {
            if v.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput("non-finite vector component".into()));
            }
            if v.iter().all(|&c| c == 0.0) {
                return Err(Error::ZeroVector);
            }
        }
        Ok(AssociationInputs { x, y, a, b })
    }

    pub fn swap_targets(&self) -> Self {
        AssociationInputs {
            x: self.y.clone(),
            y: self.x.clone(),
            a: self.a.clone(),
            b: self.b.clone(),
        }
    }

    pub fn swap_attributes(&self) -> Self {
        AssociationInputs {
            x: self.x.clone(),
            y: self.y.clone(),
            a: self.b.clone(),
            b: self.a.clone(),
        }
    }

    /// s(w, A, B) for every target, X first then Y.
    pub fn scores(&self) -> Result<Vec<f64>> {
        let ua: Vec<Vec<f64>> = self.a.iter().map(|v| unit(v)).collect();
        let ub: Vec<Vec<f64>> = self.b.iter().map(|v| unit(v)).collect();
        let ut: Vec<Vec<f64>> = self.x.iter().chain(&self.y).map(|v| unit(v)).collect();
        Ok(unit_scores(&slices(&ut), &slices(&ua), &slices(&ub)))
    }
}

pub fn slices(vs: &[Vec<f64>]) -> Vec<&[f64]> {
    vs.iter().map(Vec::as_slice).collect()
}

/// `v / ‖v‖`. The caller guarantees `v` is non-zero.
pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|c| c / n).collect()
}

/// Association scores for unit-length targets against unit-length
/// attributes. This is the single scoring path behind every cosine method.
pub fn unit_scores(targets: &[&[f64]], a: &[&[f64]], b: &[&[f64]]) -> Vec<f64> {
    let mean_cos = |w: &[f64], us: &[&[f64]]| {
        us.iter().map(|u| dot(w, u).clamp(-1.0, 1.0)).sum::<f64>() / us.len() as f64
    };
    targets
        .iter()
        .map(|w| mean_cos(w, a) - mean_cos(w, b))
        .collect()
}

/// Σ_x s(x) − Σ_y s(y) given pooled scores with X first.
pub fn statistic_from_scores(scores: &[f64], nx: usize) -> f64 {
    let (sx, sy) = scores.split_at(nx);
    sx.iter().sum::<f64>() - sy.iter().sum::<f64>()
}

/// Standardized mean difference between two groups of scores, using the
/// population standard deviation of the pooled scores.
pub fn effect_size_from_scores(first: &[f64], second: &[f64]) -> Result<f64> {
    if first.is_empty() || second.is_empty() {
        return Err(Error::InvalidInput("effect size needs two non-empty groups".into()));
    }
    let s1: f64 = first.iter().sum();
    let s2: f64 = second.iter().sum();
    let n = (first.len() + second.len()) as f64;
    let mean = (s1 + s2) / n;
    let dev = |g: &[f64]| g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    let sd = ((dev(first) + dev(second)) / n).sqrt();
    let scale = first
        .iter()
        .chain(second)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if !(sd > 1e-12 * scale) || !sd.is_finite() {
        return Err(Error::DegenerateVariance);
    }
    Ok((s1 / first.len() as f64 - s2 / second.len() as f64) / sd)
}

pub fn test_statistic(inp: &AssociationInputs) -> Result<f64> {
    Ok(statistic_from_scores(&inp.scores()?, inp.x.len()))
}

pub fn effect_size(inp: &AssociationInputs) -> Result<f64> {
    let s = inp.scores()?;
    let (sx, sy) = s.split_at(inp.x.len());
    effect_size_from_scores(sx, sy)
}

fn engine(scores: &[f64], nx: usize) -> Result<Permutation<'_>> {
    Permutation::new(scores, nx, GroupStatistic::SumDifference, Alternative::Greater)
}

/// Exact one-sided p over all C(2n, n) ordered partitions.
pub fn p_exact(inp: &AssociationInputs) -> Result<f64> {
    let s = inp.scores()?;
    Ok(engine(&s, inp.x.len())?.exact(DEFAULT_EXACT_BUDGET)?.0)
}

pub fn p_sampled(inp: &AssociationInputs, n: usize, seed: u64) -> Result<f64> {
    let s = inp.scores()?;
    engine(&s, inp.x.len())?.sampled(n, seed)
}

pub fn p_parametric(inp: &AssociationInputs, n: usize, seed: u64) -> Result<f64> {
    let s = inp.scores()?;
    engine(&s, inp.x.len())?.parametric(n, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PKind {
    Exact,
    SampledConservative,
    ParametricNormal,
    /// Two-sided normal p of a combined effect size.
    CombinedNormal,
    /// Significance transcribed from a published table.
    Reported,
}

impl PKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PKind::Exact => "exact",
            PKind::SampledConservative => "sampled_conservative",
            PKind::ParametricNormal => "parametric_normal",
            PKind::CombinedNormal => "combined_normal",
            PKind::Reported => "reported",
        }
    }
}

/// How permutation p-values are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PermutationMode {
    Exact { budget: u64 },
    Sampled { n: usize },
    Parametric { n: usize },
    /// Exact when within budget, otherwise sampled.
    Auto { budget: u64, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub mode: PermutationMode,
    pub seed: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig {
            mode: PermutationMode::Auto {
                budget: DEFAULT_EXACT_BUDGET as u64,
                n: 100_000,
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub effect_size: f64,
    pub p_value: f64,
    pub p_kind: PKind,
    pub n_permutations: u128,
}

/// Runs the configured p-value computation over a permutation engine.
pub fn permutation_p(engine: &Permutation<'_>, cfg: &PermutationConfig) -> Result<(f64, PKind, u128)> {
    match cfg.mode {
        PermutationMode::Exact { budget } => {
            let (p, n) = engine.exact(budget.into())?;
            Ok((p, PKind::Exact, n))
        }
        PermutationMode::Sampled { n } => {
            Ok((engine.sampled(n, cfg.seed)?, PKind::SampledConservative, n as u128))
        }
        PermutationMode::Parametric { n } => {
            Ok((engine.parametric(n, cfg.seed)?, PKind::ParametricNormal, n as u128))
        }
        PermutationMode::Auto { budget, n } => {
            if engine.partitions() <= budget.into() {
                let (p, visited) = engine.exact(budget.into())?;
                Ok((p, PKind::Exact, visited))
            } else {
                Ok((engine.sampled(n, cfg.seed)?, PKind::SampledConservative, n as u128))
            }
        }
    }
}

/// Statistic, effect size and one-sided p for a cosine test.
pub fn evaluate(inp: &AssociationInputs, cfg: &PermutationConfig) -> Result<TestOutcome> {
    let s = inp.scores()?;
    let nx = inp.x.len();
    let (sx, sy) = s.split_at(nx);
    let effect_size = effect_size_from_scores(sx, sy)?;
    let engine = engine(&s, nx)?;
    let (p_value, p_kind, n_permutations) = permutation_p(&engine, cfg)?;
    Ok(TestOutcome {
        statistic: engine.observed(),
        effect_size,
        p_value,
        p_kind,
        n_permutations,
    })
}

/// Holm's step-down procedure; flags are returned in input order.
pub fn holm_bonferroni(pvals: &[f64], alpha: f64) -> Vec<bool> {
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| pvals[i].total_cmp(&pvals[j]).then(i.cmp(&j)));
    let mut reject = vec![false; m];
    for (rank, &i) in order.iter().enumerate() {
        if pvals[i] <= alpha / (m - rank) as f64 {
            reject[i] = true;
        } else {
            break;
        }
    }
    reject
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vec<f64> {
        xs.to_vec()
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let u = [0.3, -1.2, 2.5];
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = u.iter().map(|c| -c).collect();
        assert!((cosine(&u, &neg).unwrap() + 1.0).abs() < 1e-15);
        let c = cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((c - 32.0 / (14f64.sqrt() * 77f64.sqrt())).abs() < 1e-15);
        assert!((c - 0.974631846).abs() < 1e-9);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn association_cases() {
        let a = vec![v(&[1.0, 0.0])];
        let b = vec![v(&[0.0, 1.0])];
        assert_eq!(association(&[1.0, 0.0], &a, &b).unwrap(), 1.0);
        assert_eq!(association(&[0.6, 0.8], &a, &a).unwrap(), 0.0);
        assert_eq!(
            association(&[0.0, 0.0, 1.0], &[v(&[1.0, 0.0, 0.0])], &[v(&[0.0, 1.0, 0.0])]).unwrap(),
            0.0
        );
    }

    #[test]
    fn d_of_two_on_separated_scores() {
        assert_eq!(effect_size_from_scores(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 2.0);
        assert!(matches!(
            effect_size_from_scores(&[0.3, 0.3], &[0.3, 0.3]),
            Err(Error::DegenerateVariance)
        ));
    }

    #[test]
    fn singleton_exact_p_is_half() {
        let inp = AssociationInputs::new(
            vec![v(&[1.0, 0.1])],
            vec![v(&[0.1, 1.0])],
            vec![v(&[1.0, 0.0])],
            vec![v(&[0.0, 1.0])],
        )
        .unwrap();
        assert!(test_statistic(&inp).unwrap() > 0.0);
        assert_eq!(p_exact(&inp).unwrap(), 0.5);
    }

    #[test]
    fn identical_vectors_tie_everywhere() {
        let w = v(&[0.2, 0.7, -0.1]);
        let inp = AssociationInputs::new(
            vec![w.clone(); 3],
            vec![w.clone(); 3],
            vec![v(&[1.0, 0.0, 0.0])],
            vec![v(&[0.0, 1.0, 0.0])],
        )
        .unwrap();
        assert_eq!(test_statistic(&inp).unwrap(), 0.0);
        assert_eq!(p_exact(&inp).unwrap(), 1.0);
        assert!(matches!(effect_size(&inp), Err(Error::DegenerateVariance)));
    }

    #[test]
    fn input_validation() {
        let e = v(&[1.0, 0.0]);
        assert!(AssociationInputs::new(vec![e.clone()], vec![], vec![e.clone()], vec![e.clone()])
            .is_err());
        assert!(matches!(
            AssociationInputs::new(
                vec![v(&[0.0, 0.0])],
                vec![e.clone()],
                vec![e.clone()],
                vec![e.clone()]
            ),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            AssociationInputs::new(vec![v(&[1.0])], vec![e.clone()], vec![e.clone()], vec![e]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn holm_cases() {
        assert_eq!(holm_bonferroni(&[0.01, 0.04], 0.05), [true, true]);
        assert_eq!(holm_bonferroni(&[0.04, 0.01], 0.05), [true, true]);
        assert!(holm_bonferroni(&[], 0.05).is_empty());
        assert_eq!(holm_bonferroni(&[0.5], 0.05), [false]);
        // Step-down stops at the first failure even if later p would pass alone.
        assert_eq!(
            holm_bonferroni(&[0.03, 0.01, 0.04], 0.05),
            [false, true, false]
        );
    }
}
