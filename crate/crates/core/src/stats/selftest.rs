//! Hand-computed reference cases, runnable from the CLI.

use super::*;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfCheck {
    pub name: &'static str,
    pub expected: f64,
    pub actual: f64,
    pub passed: bool,
}

fn check(name: &'static str, expected: f64, actual: Result<f64>, tol: f64) -> SelfCheck {
    let actual = actual.unwrap_or(f64::NAN);
    SelfCheck {
        name,
        expected,
        actual,
        passed: (expected - actual).abs() <= tol,
    }
}

pub fn run() -> Vec<SelfCheck> {
    let unit = |a: f64, b: f64| vec![a, b];
    let singleton = AssociationInputs::new(
        vec![unit(1.0, 0.1)],
        vec![unit(0.1, 1.0)],
        vec![unit(1.0, 0.0)],
        vec![unit(0.0, 1.0)],
    );
    let c6_shaped: Vec<f64> = (0..16).rev().map(f64::from).collect();
    let exact_c6 = Permutation::new(&c6_shaped, 8, GroupStatistic::SumDifference, Alternative::Greater)
        .and_then(|p| p.exact(DEFAULT_EXACT_BUDGET))
        .map(|(_, n)| n as f64);
    let holm = holm_bonferroni(&[0.01, 0.04], 0.05);

    vec![
        check(
            "cosine (1,2,3)·(4,5,6)",
            0.974631846,
            cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]),
            1e-9,
        ),
        check("cosine orthogonal", 0.0, cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0),
        check(
            "association aligned",
            1.0,
            association(&[1.0, 0.0], &[unit(1.0, 0.0)], &[unit(0.0, 1.0)]),
            1e-15,
        ),
        check(
            "effect size of separated scores",
            2.0,
            effect_size_from_scores(&[1.0, 1.0], &[0.0, 0.0]),
            1e-15,
        ),
        check(
            "exact p for singletons",
            0.5,
            singleton.and_then(|inp| p_exact(&inp)),
            0.0,
        ),
        check("partitions of 8+8", 12870.0, exact_c6, 0.0),
        check(
            "normal tail at the sample mean",
            0.5,
            normal_upper_tail(2.5, &[1.0, 2.0, 3.0, 4.0]),
            1e-12,
        ),
        check(
            "holm [0.01, 0.04] rejections",
            2.0,
            Ok(holm.iter().filter(|&&r| r).count() as f64),
            0.0,
        ),
    ]
}
