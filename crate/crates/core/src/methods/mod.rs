//! The bias detection methods: sentence/word SEAT, CEAT, LPBS and the
//! merged LPBS×CEAT procedure.

mod lpbs;
mod seat;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::encodings::{CompositionMode, Level};
use crate::error::{Error, Result};
use crate::stats::PKind;
use crate::testsets::{DescriptorKind, TestId, Variant};

pub use lpbs::{
    ingest_probabilities, ingest_probabilities_path, lpbs_bias_score, run_lpbs, run_lpbs_ceat,
    LpbsCeatConfig, LpbsConfig, ProbabilityRecord, ProbabilityStore,
};
pub use seat::{run_ceat, run_seat, CeatConfig, ContextBalance, Pooling, SeatConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[serde(alias = "sseat")]
    SSeat,
    #[serde(alias = "wseat")]
    WSeat,
    Ceat,
    Lpbs,
    #[serde(alias = "lpbs-ceat")]
    LpbsCeat,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::SSeat,
        Method::WSeat,
        Method::Ceat,
        Method::Lpbs,
        Method::LpbsCeat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::SSeat => "s_seat",
            Method::WSeat => "w_seat",
            Method::Ceat => "ceat",
            Method::Lpbs => "lpbs",
            Method::LpbsCeat => "lpbs_ceat",
        }
    }

    /// Whether the method reads probabilities rather than vectors.
    pub fn uses_probabilities(self) -> bool {
        matches!(self, Method::Lpbs | Method::LpbsCeat)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "s_seat" | "sseat" => Ok(Method::SSeat),
            "w_seat" | "wseat" => Ok(Method::WSeat),
            "ceat" => Ok(Method::Ceat),
            "lpbs" => Ok(Method::Lpbs),
            "lpbs_ceat" | "lpbsceat" => Ok(Method::LpbsCeat),
            _ => Err(Error::InvalidInput(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextSource {
    #[default]
    Templates,
    Corpus,
}

impl ContextSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ContextSource::Templates => "templates",
            ContextSource::Corpus => "corpus",
        }
    }
}

impl fmt::Display for ContextSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContextSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "templates" | "template" => Ok(ContextSource::Templates),
            "corpus" => Ok(ContextSource::Corpus),
            _ => Err(Error::InvalidInput(format!("unknown context source '{s}'"))),
        }
    }
}

/// One bias score with the parameters that produced it.
///
/// `n` counts the observations behind the effect size: pooled target
/// vectors for SEAT, attributes for LPBS, combined samples for CEAT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub test: TestId,
    pub descriptor: DescriptorKind,
    pub context: ContextSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composition: Option<CompositionMode>,
    pub variant: Variant,
    pub effect_size: f64,
    /// NaN when only a significance flag is known; serialized as null.
    #[serde(with = "nan_as_null")]
    pub p_value: f64,
    pub p_kind: PKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_sq: Option<f64>,
    /// Significance flag taken from a published table without a p-value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_significant: Option<bool>,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// A combined effect size with its per-sample detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CesResult {
    /// Summary row; `se` and `tau_sq` are set.
    pub result: MethodResult,
    pub samples_d: Vec<f64>,
    pub weights_v: Vec<f64>,
    pub tau_sq: f64,
    pub se: f64,
    /// Samples dropped for degenerate variance.
    pub skipped: usize,
}

impl CesResult {
    /// Writes `index,d,v` rows for external inspection.
    pub fn write_samples(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "index,d,v")?;
        for (i, (d, v)) in self.samples_d.iter().zip(&self.weights_v).enumerate() {
            writeln!(out, "{i},{d},{v}")?;
        }
        Ok(())
    }
}

/// Random-effects combination of per-sample effect sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Combined {
    pub ces: f64,
    pub se: f64,
    pub p_two_sided: f64,
    pub tau_sq: f64,
    pub weights: Vec<f64>,
}

/// Large-sample variance of Cohen's d for groups of `n1` and `n2`.
pub fn within_sample_variance(d: f64, n1: usize, n2: usize) -> f64 {
    let (a, b) = (n1 as f64, n2 as f64);
    (a + b) / (a * b) + d * d / (2.0 * (a + b))
}

/// Inverse-variance weighted mean under a random-effects model with the
/// DerSimonian–Laird between-sample variance.
pub fn combine_effects(samples_d: &[f64], within_var: &[f64]) -> Result<Combined> {
    let n = samples_d.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if within_var.len() != n {
        return Err(Error::InvalidInput(format!(
            "{n} effect sizes but {} variances",
            within_var.len()
        )));
    }
    if samples_d.iter().any(|d| !d.is_finite())
        || within_var.iter().any(|v| !(*v > 0.0) || !v.is_finite())
    {
        return Err(Error::InvalidInput(
            "effect sizes must be finite and variances positive".into(),
        ));
    }
    let w: Vec<f64> = within_var.iter().map(|v| 1.0 / v).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|x| x * x).sum();
    let mean_fixed = w.iter().zip(samples_d).map(|(w, d)| w * d).sum::<f64>() / sw;
    let q: f64 = w
        .iter()
        .zip(samples_d)
        .map(|(w, d)| w * (d - mean_fixed).powi(2))
        .sum();
    let c = sw - sw2 / sw;
    let tau_sq = if c > 0.0 {
        ((q - (n as f64 - 1.0)) / c).max(0.0)
    } else {
        0.0
    };
    let v: Vec<f64> = within_var.iter().map(|s| 1.0 / (s + tau_sq)).collect();
    let sv: f64 = v.iter().sum();
    let lo = samples_d.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples_d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Rounding can push the mean just outside the hull or off a constant input.
    let ces = if lo == hi {
        lo
    } else {
        (v.iter().zip(samples_d).map(|(v, d)| v * d).sum::<f64>() / sv).clamp(lo, hi)
    };
    let se = (1.0 / sv).sqrt();
    let p_two_sided = (2.0 * Normal::standard().sf((ces / se).abs())).min(1.0);
    Ok(Combined {
        ces,
        se,
        p_two_sided,
        tau_sq,
        weights: v,
    })
}

/// Fails when more than 1% of samples were skipped.
fn check_skipped(skipped: usize, total: usize) -> Result<()> {
    if skipped * 100 > total {
        log::error!("{skipped} of {total} samples had degenerate variance");
        return Err(Error::TooManySkipped { skipped, total });
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} of {total} samples with degenerate variance");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_sample_hand_case() {
        let c = combine_effects(&[0.2, 0.8], &[0.1, 0.1]).unwrap();
        // w = 10, Q = 1.8, C = 10, tau² = 0.08, v = 1/0.18.
        assert!((c.tau_sq - 0.08).abs() < 1e-12);
        assert!((c.ces - 0.5).abs() < 1e-12);
        assert!((c.se - 0.3).abs() < 1e-12);
        let z: f64 = 0.5 / 0.3;
        let p = 2.0 * Normal::standard().sf(z);
        assert!((c.p_two_sided - p).abs() < 1e-12);
        assert!((c.p_two_sided - 0.0955807).abs() < 1e-6);
    }

    #[test]
    fn homogeneous_is_exact() {
        let d = [0.5; 7];
        let c = combine_effects(&d, &[0.2; 7]).unwrap();
        assert_eq!(c.tau_sq, 0.0);
        assert_eq!(c.ces, 0.5);
        let odd = [0.1 + 0.2; 3];
        assert_eq!(combine_effects(&odd, &[0.3, 0.1, 0.7]).unwrap().ces, 0.1 + 0.2);
    }

    #[test]
    fn zero_ces_has_p_one() {
        let c = combine_effects(&[-0.4, 0.4], &[0.1, 0.1]).unwrap();
        assert_eq!(c.ces, 0.0);
        assert_eq!(c.p_two_sided, 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(combine_effects(&[0.1], &[0.1]), Err(Error::TooFewSamples { .. })));
        assert!(combine_effects(&[0.1, 0.2], &[0.1, 0.0]).is_err());
        assert!(combine_effects(&[0.1, 0.2], &[0.1]).is_err());
    }

    #[test]
    fn variance_formula() {
        assert!((within_sample_variance(0.0, 8, 8) - 0.25).abs() < 1e-15);
        assert!((within_sample_variance(2.0, 8, 8) - (0.25 + 4.0 / 32.0)).abs() < 1e-15);
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("lpbs-ceat".parse::<Method>().unwrap(), Method::LpbsCeat);
        assert_eq!("sseat".parse::<Method>().unwrap(), Method::SSeat);
    }
}
