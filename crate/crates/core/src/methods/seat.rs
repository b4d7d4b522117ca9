use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    check_skipped, combine_effects, within_sample_variance, CesResult, ContextSource, Method,
    MethodResult,
};
use crate::encodings::{vector_for, CompositionMode, EncodingStore, Level, RecordKey};
use crate::error::{Error, Result};
use crate::stats::{
    effect_size_from_scores, evaluate, unit, unit_scores, AssociationInputs, PKind,
    PermutationConfig,
};
use crate::testsets::{BiasTest, Role};

/// What to do when target stimuli have different numbers of contexts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextBalance {
    /// Keep a seeded uniform subset of each target stimulus's contexts,
    /// sized to the smallest count.
    #[default]
    Truncate,
    /// Fail, naming the stimuli whose counts differ.
    Strict,
}

/// How per-context vectors enter the association sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Every context vector is its own sample.
    #[default]
    Pooled,
    /// One vector per stimulus: the mean over its contexts.
    StimulusMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeatConfig {
    pub level: Level,
    pub composition: CompositionMode,
    pub permutation: PermutationConfig,
    pub balance: ContextBalance,
    pub pooling: Pooling,
    pub context: ContextSource,
}

impl Default for SeatConfig {
    fn default() -> Self {
        SeatConfig {
            level: Level::Sentence,
            composition: CompositionMode::Average,
            permutation: PermutationConfig::default(),
            balance: ContextBalance::Truncate,
            pooling: Pooling::Pooled,
            context: ContextSource::Templates,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeatConfig {
    pub level: Level,
    pub composition: CompositionMode,
    pub n_samples: usize,
    pub seed: u64,
    pub context: ContextSource,
}

impl Default for CeatConfig {
    fn default() -> Self {
        CeatConfig {
            level: Level::Word,
            composition: CompositionMode::Average,
            n_samples: 10_000,
            seed: 0,
            context: ContextSource::Templates,
        }
    }
}

pub(super) fn stream_id(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("digest is 32 bytes"))
}

/// Context ids per stimulus in X, Y, A, B order; fails listing every
/// stimulus without contexts.
fn gather(store: &EncodingStore, test: &BiasTest, level: Level) -> Result<Vec<(Role, String, Vec<u64>)>> {
    let mut out = Vec::new();
    let mut missing = Vec::new();
    for (role, s) in test.stimuli() {
        let ids = store.contexts(test.id, role, s.text(), level);
        if ids.is_empty() {
            missing.push(format!("{} {role} {:?} ({level})", test.id, s.text()));
        }
        out.push((role, s.text().to_string(), ids));
    }
    if !missing.is_empty() {
        return Err(Error::Coverage(missing));
    }
    Ok(out)
}

fn level_params(level: Level, composition: CompositionMode) -> (Option<Level>, Option<CompositionMode>) {
    match level {
        Level::Sentence => (Some(Level::Sentence), None),
        Level::Word => (Some(Level::Word), Some(composition)),
    }
}

fn mean_vector(vs: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; vs[0].len()];
    for v in vs {
        for (a, c) in acc.iter_mut().zip(v) {
            *a += c;
        }
    }
    let n = vs.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Sentence- or word-level SEAT over every context in the store.
pub fn run_seat(store: &EncodingStore, test: &BiasTest, cfg: &SeatConfig) -> Result<MethodResult> {
    let mut groups = gather(store, test, cfg.level)?;

    let counts: Vec<usize> = groups
        .iter()
        .filter(|g| g.0.is_target())
        .map(|g| g.2.len())
        .collect();
    let min = counts.iter().copied().min().unwrap_or(0);
    if counts.iter().any(|&c| c != min) {
        match cfg.balance {
            ContextBalance::Strict => {
                return Err(Error::UnequalContexts(
                    groups
                        .iter()
                        .filter(|g| g.0.is_target())
                        .map(|g| format!("{} {:?}: {}", g.0, g.1, g.2.len()))
                        .collect(),
                ))
            }
            ContextBalance::Truncate => {
                for (role, stimulus, ids) in groups.iter_mut().filter(|g| g.0.is_target()) {
                    if ids.len() > min {
                        let mut rng = ChaCha8Rng::seed_from_u64(cfg.permutation.seed);
                        rng.set_stream(stream_id(&[role.as_str(), stimulus]));
                        let mut keep = index::sample(&mut rng, ids.len(), min).into_vec();
                        keep.sort_unstable();
                        *ids = keep.into_iter().map(|i| ids[i]).collect();
                    }
                }
                log::info!("truncated target contexts to {min} per stimulus");
            }
        }
    }

    let mut sets: [Vec<Vec<f64>>; 4] = Default::default();
    for (role, stimulus, ids) in &groups {
        let mut vs = Vec::with_capacity(ids.len());
        for &context_id in ids {
            let key = RecordKey {
                test: test.id,
                role: *role,
                stimulus: stimulus.clone(),
                context_id,
            };
            vs.push(vector_for(store, &key, cfg.level, cfg.composition)?);
        }
        match cfg.pooling {
            Pooling::Pooled => sets[*role as usize].extend(vs),
            Pooling::StimulusMean => sets[*role as usize].push(mean_vector(&vs)),
        }
    }
    let [x, y, a, b] = sets;
    let n = x.len() + y.len();
    let inp = AssociationInputs::new(x, y, a, b)?;
    let outcome = evaluate(&inp, &cfg.permutation)?;
    let (level, composition) = level_params(cfg.level, cfg.composition);
    Ok(MethodResult {
        method: match cfg.level {
            Level::Sentence => Method::SSeat,
            Level::Word => Method::WSeat,
        },
        model: store.model().map(str::to_string),
        test: test.id,
        descriptor: test.descriptor_kind,
        context: cfg.context,
        level,
        composition,
        variant: test.variant,
        effect_size: outcome.effect_size,
        p_value: outcome.p_value,
        p_kind: outcome.p_kind,
        n,
        se: None,
        tau_sq: None,
        reported_significant: None,
    })
}

/// CEAT: `n_samples` effect sizes, each from one uniformly drawn context
/// per stimulus, combined under a random-effects model.
///
/// Sample `i` draws from its own random stream, so the result does not
/// depend on how samples are spread across threads.
pub fn run_ceat(store: &EncodingStore, test: &BiasTest, cfg: &CeatConfig) -> Result<CesResult> {
    if cfg.n_samples < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: cfg.n_samples,
        });
    }
    let groups = gather(store, test, cfg.level)?;
    let mut pools: Vec<Vec<Vec<f64>>> = Vec::with_capacity(groups.len());
    for (role, stimulus, ids) in &groups {
        let mut vs = Vec::with_capacity(ids.len());
        for &context_id in ids {
            let key = RecordKey {
                test: test.id,
                role: *role,
                stimulus: stimulus.clone(),
                context_id,
            };
            let v = vector_for(store, &key, cfg.level, cfg.composition)?;
            if v.iter().all(|&c| c == 0.0) {
                return Err(Error::ZeroVector);
            }
            vs.push(unit(&v));
        }
        pools.push(vs);
    }
    let nx = test.target_x.len();
    let ny = test.target_y.len();
    let n_targets = nx + ny;
    let na = test.attr_a.len();

    let samples: Vec<Option<f64>> = (0..cfg.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i);
            let picked: Vec<&[f64]> = pools
                .iter()
                .map(|p| p[rng.random_range(0..p.len())].as_slice())
                .collect();
            let (targets, attrs) = picked.split_at(n_targets);
            let (a, b) = attrs.split_at(na);
            let scores = unit_scores(targets, a, b);
            let (sx, sy) = scores.split_at(nx);
            match effect_size_from_scores(sx, sy) {
                Ok(d) => Ok(Some(d)),
                Err(Error::DegenerateVariance) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let samples_d: Vec<f64> = samples.iter().flatten().copied().collect();
    let skipped = samples.len() - samples_d.len();
    check_skipped(skipped, samples.len())?;
    let var: Vec<f64> = samples_d
        .iter()
        .map(|&d| within_sample_variance(d, nx, ny))
        .collect();
    let c = combine_effects(&samples_d, &var)?;
    let (level, composition) = level_params(cfg.level, cfg.composition);
    Ok(CesResult {
        result: MethodResult {
            method: Method::Ceat,
            model: store.model().map(str::to_string),
            test: test.id,
            descriptor: test.descriptor_kind,
            context: cfg.context,
            level,
            composition,
            variant: test.variant,
            effect_size: c.ces,
            p_value: c.p_two_sided,
            p_kind: PKind::CombinedNormal,
            n: samples_d.len(),
            se: Some(c.se),
            tau_sq: Some(c.tau_sq),
            reported_significant: None,
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
    use crate::encodings::EncodingRecord;
    use crate::stats::PermutationMode;
    use crate::synthetic::{isotropic_null, planted_bias, SyntheticConfig};
    use crate::testsets::{load_test, DescriptorKind, TestId};

    fn c6() -> BiasTest {
        load_test(TestId::C6, DescriptorKind::Terms).unwrap()
    }

    fn sampled(n: usize) -> PermutationConfig {
        PermutationConfig {
            mode: PermutationMode::Sampled { n },
            seed: 3,
        }
    }

    #[test]
    fn planted_bias_is_detected() {
        let t = c6();
        let store = planted_bias(&t, &SyntheticConfig::default()).unwrap();
        let r = run_seat(&store, &t, &SeatConfig { permutation: sampled(2000), ..Default::default() }).unwrap();
        assert_eq!(r.method, Method::SSeat);
        assert_eq!(r.composition, None);
        assert!(r.effect_size >= 1.5, "{}", r.effect_size);
        assert!(r.p_value < 0.01);
        assert_eq!(r.n, (t.target_x.len() + t.target_y.len()) * 4);
        assert_eq!(r.model.as_deref(), Some("synthetic"));
    }

    #[test]
    fn level_switch_and_single_token_compositions_agree() {
        let t = c6();
        let store = planted_bias(&t, &SyntheticConfig { contexts: 2, ..Default::default() }).unwrap();
        let base = SeatConfig { permutation: sampled(500), ..Default::default() };
        let s = run_seat(&store, &t, &base).unwrap();
        for composition in CompositionMode::ALL {
            let w = run_seat(&store, &t, &SeatConfig { level: Level::Word, composition, ..base }).unwrap();
            assert_eq!(w.method, Method::WSeat);
            assert_eq!((w.effect_size, w.p_value), (s.effect_size, s.p_value));
        }
    }

    #[test]
    fn coverage_gaps_are_listed() {
        let t = c6();
        let store = isotropic_null(&t, &SyntheticConfig { contexts: 1, ..Default::default() }).unwrap();
        let gone = t.attr_b[0].text().to_string();
        let kept: Vec<EncodingRecord> = store
            .records()
            .filter(|r| !(r.stimulus == gone && r.level == Level::Sentence))
            .collect();
        let partial = EncodingStore::from_records(kept).unwrap();
        match run_seat(&partial, &t, &SeatConfig::default()) {
            Err(Error::Coverage(m)) => {
                assert_eq!(m.len(), 1);
                assert!(m[0].contains(&gone));
            }
            other => panic!("{other:?}"),
        }
        assert!(run_seat(&partial, &t, &SeatConfig { level: Level::Word, permutation: sampled(100), ..Default::default() }).is_ok());
    }

    #[test]
    fn unequal_contexts_truncate_or_fail() {
        let t = c6();
        let store = planted_bias(&t, &SyntheticConfig { contexts: 3, ..Default::default() }).unwrap();
        let short = t.target_x[1].text().to_string();
        let kept: Vec<EncodingRecord> = store
            .records()
            .filter(|r| !(r.stimulus == short && r.context_id == 2))
            .collect();
        let uneven = EncodingStore::from_records(kept).unwrap();
        let strict = SeatConfig { balance: ContextBalance::Strict, ..Default::default() };
        match run_seat(&uneven, &t, &strict) {
            Err(Error::UnequalContexts(m)) => assert!(m.iter().any(|s| s.contains(&short) && s.ends_with(": 2"))),
            other => panic!("{other:?}"),
        }
        let cfg = SeatConfig { permutation: sampled(200), ..Default::default() };
        let a = run_seat(&uneven, &t, &cfg).unwrap();
        let b = run_seat(&uneven, &t, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n, (t.target_x.len() + t.target_y.len()) * 2);
    }

    #[test]
    fn stimulus_mean_pooling_uses_one_vector_per_stimulus() {
        let t = c6();
        let store = planted_bias(&t, &SyntheticConfig::default()).unwrap();
        let cfg = SeatConfig { pooling: Pooling::StimulusMean, permutation: sampled(200), ..Default::default() };
        let r = run_seat(&store, &t, &cfg).unwrap();
        assert_eq!(r.n, t.target_x.len() + t.target_y.len());
    }

    #[test]
    fn ceat_with_one_context_has_no_spread() {
        let t = c6();
        let store = planted_bias(&t, &SyntheticConfig { contexts: 1, ..Default::default() }).unwrap();
        let c = run_ceat(&store, &t, &CeatConfig { n_samples: 20, ..Default::default() }).unwrap();
        let first = c.samples_d[0];
        assert!(c.samples_d.iter().all(|&d| d == first));
        assert_eq!(c.result.effect_size, first);
        assert_eq!(c.tau_sq, 0.0);
        assert_eq!(c.skipped, 0);
        let seat = run_seat(&store, &t, &SeatConfig { level: Level::Word, permutation: sampled(10), ..Default::default() }).unwrap();
        assert!((seat.effect_size - first).abs() < 1e-12);
    }

    #[test]
    fn ceat_is_deterministic_across_thread_counts() {
        let t = c6();
        let store = planted_bias(&t, &SyntheticConfig::default()).unwrap();
        let cfg = CeatConfig { n_samples: 300, seed: 11, ..Default::default() };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_ceat(&store, &t, &cfg).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert!(one.result.effect_size >= 1.5);
        assert!(one.result.p_value < 0.01);
        assert_eq!(one.samples_d.len(), 300);
        let lo = one.samples_d.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = one.samples_d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= one.result.effect_size && one.result.effect_size <= hi);
    }
}
