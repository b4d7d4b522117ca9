//! Seeded encoding and probability fixtures with known geometry.
//!
//! `planted_bias` puts the X and A clusters on one axis and the Y and B
//! clusters on another, so every method should report a large positive
//! effect. `isotropic_null` draws every vector from the same isotropic
//! normal, so p-values should be uniform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encodings::{compose_subwords, CompositionMode, EncodingRecord, EncodingStore, Level};
use crate::error::{Error, Result};
use crate::methods::{ProbabilityRecord, ProbabilityStore};
use crate::testsets::{BiasTest, Role};

pub const SYNTHETIC_MODEL: &str = "synthetic";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub dim: usize,
    /// Contexts per stimulus.
    pub contexts: usize,
    /// Subword tokens per stimulus occurrence.
    pub tokens: usize,
    /// Length of the cluster centre; zero gives the null.
    pub signal: f64,
    /// Spread of a stimulus around its cluster centre.
    pub stimulus_noise: f64,
    /// Spread of a context around its stimulus.
    pub context_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            dim: 32,
            contexts: 4,
            tokens: 1,
            signal: 1.0,
            stimulus_noise: 0.3,
            context_noise: 0.3,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.dim < 2 || self.contexts == 0 || self.tokens == 0 {
            return Err(Error::InvalidConfig(
                "synthetic fixtures need dim >= 2, contexts >= 1 and tokens >= 1".into(),
            ));
        }
        let finite = [self.signal, self.stimulus_noise, self.context_noise]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !finite {
            return Err(Error::InvalidConfig("signal and noise must be finite and >= 0".into()));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut *rng);
            scale * z
        })
        .collect::<Vec<f64>>()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Word and sentence records for every stimulus of `test`. Sentence
/// vectors are the average of the token vectors, so both levels agree
/// under average composition.
fn generate(test: &BiasTest, cfg: &SyntheticConfig, centre: impl Fn(Role) -> Vec<f64>) -> Result<EncodingStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    for (role, s) in test.stimuli() {
        let stim = add(&centre(role), &gaussian(&mut rng, cfg.dim, cfg.stimulus_noise));
        for context_id in 0..cfg.contexts as u64 {
            let ctx = add(&stim, &gaussian(&mut rng, cfg.dim, cfg.context_noise));
            let token_vectors: Vec<Vec<f64>> = if cfg.tokens == 1 {
                vec![ctx]
            } else {
                (0..cfg.tokens)
                    .map(|_| add(&ctx, &gaussian(&mut rng, cfg.dim, cfg.context_noise)))
                    .collect()
            };
            let tokens: Vec<String> = (0..cfg.tokens)
                .map(|i| if i == 0 { s.text().to_string() } else { format!("##{i}") })
                .collect();
            let sentence = compose_subwords(&token_vectors, CompositionMode::Average)?;
            let base = EncodingRecord {
                test: test.id,
                role,
                stimulus: s.text().to_string(),
                context_id,
                level: Level::Word,
                model: Some(SYNTHETIC_MODEL.to_string()),
                tokens,
                token_vectors,
                sentence_vector: None,
            };
            records.push(EncodingRecord {
                level: Level::Sentence,
                tokens: Vec::new(),
                token_vectors: Vec::new(),
                sentence_vector: Some(sentence),
                ..base.clone()
            });
            records.push(base);
        }
    }
    EncodingStore::from_records(records)
}

/// X and A centred on the first axis, Y and B on the second.
pub fn planted_bias(test: &BiasTest, cfg: &SyntheticConfig) -> Result<EncodingStore> {
    let dim = cfg.dim;
    let signal = cfg.signal;
    generate(test, cfg, move |role| {
        let mut c = vec![0.0; dim];
        match role {
            Role::X | Role::A => c[0] = signal,
            Role::Y | Role::B => c[1] = signal,
        }
        c
    })
}

/// Every vector drawn independently from the same isotropic normal.
pub fn isotropic_null(test: &BiasTest, cfg: &SyntheticConfig) -> Result<EncodingStore> {
    let cfg = SyntheticConfig {
        signal: 0.0,
        stimulus_noise: 0.0,
        context_noise: 1.0,
        ..*cfg
    };
    let dim = cfg.dim;
    generate(test, &cfg, move |_| vec![0.0; dim])
}

/// Probability records where X targets are `gain` nats more likely than
/// their prior next to A attributes and less likely next to B; Y targets
/// mirror that. `gain = 0` gives a null.
pub fn planted_probabilities(test: &BiasTest, contexts: usize, gain: f64, noise: f64, seed: u64) -> Result<ProbabilityStore> {
    if contexts == 0 || !gain.is_finite() || !(noise >= 0.0) {
        return Err(Error::InvalidConfig(
            "need contexts >= 1, finite gain and noise >= 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for (arole, a) in test.stimuli().filter(|(r, _)| !r.is_target()) {
        for (trole, t) in test.stimuli().filter(|(r, _)| r.is_target()) {
            let sign = if (arole == Role::A) == (trole == Role::X) { 1.0 } else { -1.0 };
            for context_id in 0..contexts as u64 {
                let ln_prior = rng.random_range(-12.0..-4.0);
                let e: f64 = StandardNormal.sample(&mut rng);
                let ln_target = (ln_prior + 0.5 * sign * gain + noise * e).min(0.0);
                records.push(ProbabilityRecord {
                    test: test.id,
                    target: t.text().to_string(),
                    attribute: a.text().to_string(),
                    context_id,
                    model: Some(SYNTHETIC_MODEL.to_string()),
                    p_target: f64::exp(ln_target),
                    p_prior: f64::exp(ln_prior),
                });
            }
        }
    }
    ProbabilityStore::from_records(records)
}
