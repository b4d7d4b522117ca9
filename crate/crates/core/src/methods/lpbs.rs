use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_skipped, combine_effects, within_sample_variance, CesResult, ContextSource, Method,
    MethodResult,
};
use crate::error::{Error, Result};
use crate::stats::{
    effect_size_from_scores, permutation_p, Alternative, GroupStatistic, PKind, Permutation,
    PermutationConfig,
};
use crate::testsets::{BiasTest, Stimulus, TestId};

/// Masked-LM probabilities for one target in one doubles context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbabilityRecord {
    pub test: TestId,
    pub target: String,
    pub attribute: String,
    pub context_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Probability of the target with only the target masked.
    pub p_target: f64,
    /// Probability of the target with target and attribute masked.
    pub p_prior: f64,
}

impl ProbabilityRecord {
    fn underflow(&self, value: f64) -> Error {
        Error::Underflow {
            target: self.target.clone(),
            attribute: self.attribute.clone(),
            context_id: self.context_id,
            value,
        }
    }

    /// Both probabilities must be normal floats in (0, 1].
    pub fn check(&self) -> Result<()> {
        for p in [self.p_target, self.p_prior] {
            if p.is_nan() || p > 1.0 || p < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "probability {p} outside [0, 1] for (target={}, attribute={}, context={})",
                    self.target, self.attribute, self.context_id
                )));
            }
            if p < f64::MIN_POSITIVE {
                return Err(self.underflow(p));
            }
        }
        Ok(())
    }

    fn logs(&self) -> (f64, f64) {
        (self.p_target.ln(), self.p_prior.ln())
    }
}

type PairKey = (TestId, String, String);

/// Probability records keyed by (test, target, attribute, context id).
#[derive(Debug, Clone, Default)]
pub struct ProbabilityStore {
    model: Option<String>,
    entries: BTreeMap<PairKey, BTreeMap<u64, (f64, f64)>>,
    len: usize,
}

impl ProbabilityStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn model(&self) -> Option<&str> {
        self.model.as_deref()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `line` is only used in diagnostics.
    pub fn insert(&mut self, record: ProbabilityRecord, line: usize) -> Result<()> {
        record.check().map_err(|e| match e {
            Error::InvalidInput(m) => Error::InvalidInput(format!("line {line}: {m}")),
            e => {
                log::error!("line {line}: {e}");
                e
            }
        })?;
        match (&self.model, &record.model) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::InvalidInput(format!(
                    "line {line}: model '{b}' differs from '{a}'"
                )))
            }
            (None, Some(b)) if self.len == 0 => self.model = Some(b.clone()),
            (None, Some(b)) => {
                return Err(Error::InvalidInput(format!(
                    "line {line}: model '{b}' set on some records only"
                )))
            }
            (Some(a), None) => {
                return Err(Error::InvalidInput(format!(
                    "line {line}: model missing, expected '{a}'"
                )))
            }
            _ => {}
        }
        let slot = self
            .entries
            .entry((record.test, record.target.clone(), record.attribute.clone()))
            .or_default();
        if slot.contains_key(&record.context_id) {
            return Err(Error::DuplicateKey {
                line,
                key: format!(
                    "{} {:?}/{:?} #{}",
                    record.test, record.target, record.attribute, record.context_id
                ),
            });
        }
        slot.insert(record.context_id, (record.p_target, record.p_prior));
        self.len += 1;
        Ok(())
    }

    pub fn from_records(records: impl IntoIterator<Item = ProbabilityRecord>) -> Result<Self> {
        let mut store = Self::new();
        for (i, r) in records.into_iter().enumerate() {
            store.insert(r, i + 1)?;
        }
        Ok(store)
    }

    /// Records in key order.
    pub fn records(&self) -> impl Iterator<Item = ProbabilityRecord> + '_ {
        self.entries.iter().flat_map(move |((test, target, attribute), ctx)| {
            ctx.iter().map(move |(&context_id, &(p_target, p_prior))| ProbabilityRecord {
                test: *test,
                target: target.clone(),
                attribute: attribute.clone(),
                context_id,
                model: self.model.clone(),
                p_target,
                p_prior,
            })
        })
    }

    /// Context ids recorded for one pairing, ascending.
    pub fn contexts(&self, test: TestId, target: &str, attribute: &str) -> Vec<u64> {
        self.pairing(test, target, attribute)
            .map(|m| m.keys().copied().collect())
            .unwrap_or_default()
    }

    fn pairing(&self, test: TestId, target: &str, attribute: &str) -> Option<&BTreeMap<u64, (f64, f64)>> {
        self.entries
            .get(&(test, target.to_string(), attribute.to_string()))
    }

    /// Log probabilities per context for one pairing.
    fn logs(&self, test: TestId, target: &str, attribute: &str) -> Vec<(f64, f64)> {
        self.pairing(test, target, attribute)
            .map(|m| m.values().map(|&(t, p)| (t.ln(), p.ln())).collect())
            .unwrap_or_default()
    }

    /// Write as JSONL in key order.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut out, &r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn ingest_probabilities(reader: impl BufRead) -> Result<ProbabilityStore> {
    let mut store = ProbabilityStore::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ProbabilityRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        store.insert(record, line_no)?;
    }
    log::info!("ingested {} probability records", store.len());
    Ok(store)
}

pub fn ingest_probabilities_path(path: impl AsRef<Path>) -> Result<ProbabilityStore> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    ingest_probabilities(BufReader::new(file))
}

fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    m + vals.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `log(Σ p_t / Σ p_p)` over X minus the same over Y, from log probabilities.
fn bias_from_logs(x: &[(f64, f64)], y: &[(f64, f64)]) -> f64 {
    let side = |s: &[(f64, f64)]| {
        log_sum_exp(s.iter().map(|v| v.0)) - log_sum_exp(s.iter().map(|v| v.1))
    };
    side(x) - side(y)
}

/// Bias score of one attribute from the X-side and Y-side records that
/// pair it with each target.
pub fn lpbs_bias_score(records_x: &[ProbabilityRecord], records_y: &[ProbabilityRecord]) -> Result<f64> {
    if records_x.is_empty() || records_y.is_empty() {
        return Err(Error::InvalidInput(
            "bias score needs records on both target sides".into(),
        ));
    }
    for r in records_x.iter().chain(records_y) {
        r.check()?;
    }
    let x: Vec<_> = records_x.iter().map(ProbabilityRecord::logs).collect();
    let y: Vec<_> = records_y.iter().map(ProbabilityRecord::logs).collect();
    Ok(bias_from_logs(&x, &y))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LpbsConfig {
    pub permutation: PermutationConfig,
    pub context: ContextSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpbsCeatConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub context: ContextSource,
}

impl Default for LpbsCeatConfig {
    fn default() -> Self {
        LpbsCeatConfig {
            n_samples: 10_000,
            seed: 0,
            context: ContextSource::Corpus,
        }
    }
}

/// Log probabilities per (attribute, target) pairing, attributes in A then
/// B order and targets in X then Y order.
struct Pairings {
    logs: Vec<Vec<Vec<(f64, f64)>>>,
    nx: usize,
    na: usize,
}

fn pairings(store: &ProbabilityStore, test: &BiasTest) -> Result<Pairings> {
    let targets: Vec<&Stimulus> = test.target_x.iter().chain(&test.target_y).collect();
    let mut missing = Vec::new();
    let mut logs = Vec::new();
    for attr in test.attr_a.iter().chain(&test.attr_b) {
        let mut row = Vec::with_capacity(targets.len());
        for t in &targets {
            let l = store.logs(test.id, t.text(), attr.text());
            if l.is_empty() {
                missing.push(format!("{} target {:?} attribute {:?}", test.id, t.text(), attr.text()));
            }
            row.push(l);
        }
        logs.push(row);
    }
    if !missing.is_empty() {
        return Err(Error::Coverage(missing));
    }
    Ok(Pairings {
        logs,
        nx: test.target_x.len(),
        na: test.attr_a.len(),
    })
}

fn lpbs_result(store: &ProbabilityStore, test: &BiasTest, context: ContextSource) -> MethodResult {
    MethodResult {
        method: Method::Lpbs,
        model: store.model().map(str::to_string),
        test: test.id,
        descriptor: test.descriptor_kind,
        context,
        level: None,
        composition: None,
        variant: test.variant,
        effect_size: f64::NAN,
        p_value: f64::NAN,
        p_kind: PKind::Exact,
        n: test.attr_a.len() + test.attr_b.len(),
        se: None,
        tau_sq: None,
        reported_significant: None,
    }
}

/// Bias score per attribute pooled over every recorded context, then an
/// effect size and two-sided permutation p over relabelings of A ∪ B.
pub fn run_lpbs(store: &ProbabilityStore, test: &BiasTest, cfg: &LpbsConfig) -> Result<MethodResult> {
    let pairs = pairings(store, test)?;
    let scores: Vec<f64> = pairs
        .logs
        .iter()
        .map(|row| {
            let (x, y) = row.split_at(pairs.nx);
            let x: Vec<(f64, f64)> = x.iter().flatten().copied().collect();
            let y: Vec<(f64, f64)> = y.iter().flatten().copied().collect();
            bias_from_logs(&x, &y)
        })
        .collect();
    let (sa, sb) = scores.split_at(pairs.na);
    let d = effect_size_from_scores(sa, sb)?;
    let engine = Permutation::new(
        &scores,
        pairs.na,
        GroupStatistic::MeanDifference,
        Alternative::TwoSided,
    )?;
    let (p, kind, _) = permutation_p(&engine, &cfg.permutation)?;
    Ok(MethodResult {
        effect_size: d,
        p_value: p,
        p_kind: kind,
        ..lpbs_result(store, test, cfg.context)
    })
}

/// LPBS effect sizes from one sampled context per pairing, combined as in
/// CEAT.
pub fn run_lpbs_ceat(store: &ProbabilityStore, test: &BiasTest, cfg: &LpbsCeatConfig) -> Result<CesResult> {
    if cfg.n_samples < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: cfg.n_samples,
        });
    }
    let pairs = pairings(store, test)?;
    let samples: Vec<Option<f64>> = (0..cfg.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i);
            let scores: Vec<f64> = pairs
                .logs
                .iter()
                .map(|row| {
                    let picked: Vec<(f64, f64)> = row
                        .iter()
                        .map(|ctx| ctx[rng.random_range(0..ctx.len())])
                        .collect();
                    let (x, y) = picked.split_at(pairs.nx);
                    bias_from_logs(x, y)
                })
                .collect();
            let (sa, sb) = scores.split_at(pairs.na);
            match effect_size_from_scores(sa, sb) {
                Ok(d) => Ok(Some(d)),
                Err(Error::DegenerateVariance) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let samples_d: Vec<f64> = samples.iter().flatten().copied().collect();
    let skipped = samples.len() - samples_d.len();
    check_skipped(skipped, samples.len())?;
    let nb = test.attr_b.len();
    let var: Vec<f64> = samples_d
        .iter()
        .map(|&d| within_sample_variance(d, pairs.na, nb))
        .collect();
    let c = combine_effects(&samples_d, &var)?;
    Ok(CesResult {
        result: MethodResult {
            method: Method::LpbsCeat,
            effect_size: c.ces,
            p_value: c.p_two_sided,
            p_kind: PKind::CombinedNormal,
            n: samples_d.len(),
            se: Some(c.se),
            tau_sq: Some(c.tau_sq),
            ..lpbs_result(store, test, cfg.context)
        },
        samples_d,
        weights_v: c.weights,
        tau_sq: c.tau_sq,
        se: c.se,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testsets::{DescriptorKind, Variant};

    fn rec(target: &str, attribute: &str, ctx: u64, pt: f64, pp: f64) -> ProbabilityRecord {
        ProbabilityRecord {
            test: TestId::C6,
            target: target.into(),
            attribute: attribute.into(),
            context_id: ctx,
            model: None,
            p_target: pt,
            p_prior: pp,
        }
    }

    fn stims(v: &[&str]) -> Vec<Stimulus> {
        v.iter().map(|s| Stimulus::new(*s).unwrap()).collect()
    }

    fn tiny_test() -> BiasTest {
        BiasTest {
            id: TestId::C6,
            descriptor_kind: DescriptorKind::Terms,
            variant: Variant::Full,
            bias_kind: "gender".into(),
            concepts: "test".into(),
            target_x: stims(&["he", "man"]),
            target_y: stims(&["she", "woman"]),
            attr_a: stims(&["career", "office"]),
            attr_b: stims(&["home", "family"]),
            elided: vec![],
            expected_attributes: None,
        }
    }

    /// X favoured on A by `gain[a]`, probabilities per context scaled by `ctx`.
    fn fixture(gain: [f64; 4], contexts: &[f64]) -> ProbabilityStore {
        let t = tiny_test();
        let mut recs = Vec::new();
        for (ai, a) in t.attr_a.iter().chain(&t.attr_b).enumerate() {
            for (ci, &c) in contexts.iter().enumerate() {
                for x in &t.target_x {
                    recs.push(rec(x.text(), a.text(), ci as u64, 0.01 * gain[ai] * c, 0.01 * c));
                }
                for y in &t.target_y {
                    recs.push(rec(y.text(), a.text(), ci as u64, 0.01 * c, 0.01 * c));
                }
            }
        }
        ProbabilityStore::from_records(recs).unwrap()
    }

    #[test]
    fn equal_probabilities_score_zero() {
        let x = [rec("he", "a", 0, 0.3, 0.3), rec("man", "a", 0, 0.1, 0.1)];
        let y = [rec("she", "a", 0, 0.2, 0.2)];
        assert_eq!(lpbs_bias_score(&x, &y).unwrap(), 0.0);
    }

    #[test]
    fn doubling_target_adds_log_two() {
        let x = [rec("he", "a", 0, 0.3, 0.2), rec("man", "a", 0, 0.1, 0.4)];
        let y = [rec("she", "a", 0, 0.2, 0.5)];
        let base = lpbs_bias_score(&x, &y).unwrap();
        let x2: Vec<_> = x.iter().map(|r| ProbabilityRecord { p_target: r.p_target * 2.0, ..r.clone() }).collect();
        let up = lpbs_bias_score(&x2, &y).unwrap();
        assert!((up - base - 2f64.ln()).abs() < 1e-12);
        assert!((lpbs_bias_score(&y, &x).unwrap() + base).abs() < 1e-15);
    }

    #[test]
    fn tiny_probabilities_stay_finite() {
        let x = [rec("he", "a", 0, 1e-300, 1e-305)];
        let y = [rec("she", "a", 0, 1e-302, 1e-301)];
        let s = lpbs_bias_score(&x, &y).unwrap();
        assert!((s - (5.0 + 1.0) * 10f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn underflow_is_typed() {
        let x = [rec("he", "a", 3, 0.0, 0.1)];
        let y = [rec("she", "a", 0, 0.2, 0.2)];
        match lpbs_bias_score(&x, &y) {
            Err(Error::Underflow { target, attribute, context_id, .. }) => {
                assert_eq!((target.as_str(), attribute.as_str(), context_id), ("he", "a", 3));
            }
            other => panic!("{other:?}"),
        }
        let sub = [rec("he", "a", 0, 1e-310, 0.1)];
        assert!(matches!(lpbs_bias_score(&sub, &y), Err(Error::Underflow { .. })));
        assert!(rec("he", "a", 0, 1.5, 0.1).check().is_err());
    }

    #[test]
    fn ingest_format_and_errors() {
        let text = "{\"test\":\"C6\",\"target\":\"he\",\"attribute\":\"career\",\"context_id\":0,\"p_target\":0.25,\"p_prior\":0.125}\n\n";
        let store = ingest_probabilities(text.as_bytes()).unwrap();
        assert_eq!(store.len(), 1);
        let mut out = Vec::new();
        store.write_jsonl(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text.trim_end().to_string() + "\n");

        let dup = format!("{}\n{}", text.trim(), text.trim());
        assert!(matches!(
            ingest_probabilities(dup.as_bytes()),
            Err(Error::DuplicateKey { line: 2, .. })
        ));
        let zero = text.replace("0.125", "0.0");
        assert!(matches!(ingest_probabilities(zero.as_bytes()), Err(Error::Underflow { .. })));
        let extra = text.replace("}\n", ",\"x\":1}\n");
        assert!(matches!(ingest_probabilities(extra.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn run_lpbs_matches_hand_computation() {
        let gains = [4.0, 2.0, 1.0, 0.5];
        let store = fixture(gains, &[1.0]);
        let t = tiny_test();
        let r = run_lpbs(&store, &t, &LpbsConfig::default()).unwrap();
        // Y probabilities equal their priors, so bs(a) = log(gain).
        let bs: Vec<f64> = gains.iter().map(|g: &f64| g.ln()).collect();
        let mean = bs.iter().sum::<f64>() / 4.0;
        let sd = (bs.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        let d = ((bs[0] + bs[1]) / 2.0 - (bs[2] + bs[3]) / 2.0) / sd;
        assert!((r.effect_size - d).abs() < 1e-12);
        // Two of six relabelings reach |observed|.
        assert!((r.p_value - 2.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.p_kind, PKind::Exact);
        assert_eq!(r.n, 4);

        let mut swapped = t.clone();
        std::mem::swap(&mut swapped.attr_a, &mut swapped.attr_b);
        let s = run_lpbs(&store, &swapped, &LpbsConfig::default()).unwrap();
        assert!((s.effect_size + r.effect_size).abs() < 1e-12);
        assert_eq!(s.p_value, r.p_value);
    }

    #[test]
    fn degenerate_and_coverage() {
        let store = fixture([1.0; 4], &[1.0]);
        assert!(matches!(
            run_lpbs(&store, &tiny_test(), &LpbsConfig::default()),
            Err(Error::DegenerateVariance)
        ));
        let mut t = tiny_test();
        t.attr_b.push(Stimulus::new("kitchen").unwrap());
        match run_lpbs(&store, &t, &LpbsConfig::default()) {
            Err(Error::Coverage(m)) => assert_eq!(m.len(), 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_context_ceat_equals_lpbs() {
        let store = fixture([3.0, 2.5, 1.0, 0.7], &[1.0]);
        let t = tiny_test();
        let d = run_lpbs(&store, &t, &LpbsConfig::default()).unwrap().effect_size;
        let c = run_lpbs_ceat(&store, &t, &LpbsCeatConfig { n_samples: 50, ..Default::default() }).unwrap();
        assert!(c.samples_d.iter().all(|&s| s == d));
        assert_eq!(c.result.effect_size, d);
        assert_eq!(c.result.method, Method::LpbsCeat);
        assert_eq!(c.tau_sq, 0.0);
    }

    #[test]
    fn sampled_contexts_are_seeded() {
        let store = fixture([3.0, 2.5, 1.0, 0.7], &[1.0, 0.5, 0.02]);
        let t = tiny_test();
        let cfg = LpbsCeatConfig { n_samples: 200, seed: 9, ..Default::default() };
        let a = run_lpbs_ceat(&store, &t, &cfg).unwrap();
        let b = run_lpbs_ceat(&store, &t, &cfg).unwrap();
        assert_eq!(a, b);
        let lo = a.samples_d.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = a.samples_d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(a.result.effect_size >= lo && a.result.effect_size <= hi);
    }
}
