//! Corpus sampling: one pass over user-supplied text, keeping a seeded
//! uniform sample of matching sentences per stimulus (or per
//! target/attribute pairing for doubles).
//!
//! Every candidate sentence gets a pseudo-random priority derived from
//! (seed, stimulus, position); the sample is the `max_per_stimulus`
//! smallest priorities. Priorities do not depend on scan order, so files
//! can be scanned in parallel and merged with the same result.

use std::collections::{BinaryHeap, HashMap};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{filter_double, tokenize, window_single, ContextInstance, Provenance, Span};
use crate::error::{Error, Result};
use crate::testsets::{BiasTest, CasePolicy, Role, Stimulus, TestId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub max_per_stimulus: usize,
    /// Words kept on each side of a single.
    pub window_k: usize,
    /// Trim singles to `window_k` words each side.
    pub window: bool,
    /// Most words allowed between the two stimuli of a double.
    pub max_gap: usize,
    pub seed: u64,
    pub case: CasePolicy,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            max_per_stimulus: 1000,
            window_k: 4,
            window: true,
            max_gap: 18,
            seed: 0,
            case: CasePolicy::Preserve,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_per_stimulus == 0 {
            return Err(Error::InvalidConfig("max_per_stimulus must be at least 1".into()));
        }
        if self.window_k == 0 {
            return Err(Error::InvalidConfig("window_k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    Singles,
    Doubles,
}

/// One sentence of the corpus with its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSentence {
    pub file: Arc<str>,
    /// Position of the file in the scanned list; orders output.
    pub file_index: usize,
    /// Byte offset of the line the sentence came from.
    pub offset: u64,
    /// Index of the sentence within its line.
    pub sentence: u32,
    pub text: String,
}

/// Splits at `.`, `!` or `?` runs followed by whitespace, and at newlines.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        let cut = match c {
            '\n' | '\r' => Some(i),
            '.' | '!' | '?' => {
                while let Some(&(_, n)) = iter.peek() {
                    if matches!(n, '.' | '!' | '?') {
                        iter.next();
                    } else {
                        break;
                    }
                }
                match iter.peek() {
                    None => Some(text.len()),
                    Some(&(j, n)) if n.is_whitespace() => Some(j),
                    _ => None,
                }
            }
            _ => None,
        };
        if let Some(end) = cut {
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let s = text[start..].trim();
    if !s.is_empty() {
        out.push(s);
    }
    out
}

fn is_jsonl(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("ndjson") | Some("json")
    )
}

/// Streams the sentences of one corpus file. Plain text is one document
/// per line; `.jsonl` files carry documents in a `body` field.
fn for_each_sentence(
    path: &Path,
    file_index: usize,
    mut f: impl FnMut(CorpusSentence),
) -> Result<()> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let mut reader = BufReader::new(file);
    let name: Arc<str> = Arc::from(path.display().to_string());
    let jsonl = is_jsonl(path);
    let mut offset = 0u64;
    let mut line = String::new();
    let mut line_no = 0usize;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::file(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let body_owned;
        let body: &str = if jsonl {
            if line.trim().is_empty() {
                offset += n as u64;
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                message: format!("{}: {e}", path.display()),
            })?;
            match v.get("body").and_then(|b| b.as_str()) {
                Some(b) => {
                    body_owned = b.to_string();
                    &body_owned
                }
                None => {
                    log::debug!("{}:{line_no}: no body field", path.display());
                    offset += n as u64;
                    continue;
                }
            }
        } else {
            &line
        };
        for (k, s) in split_sentences(body).into_iter().enumerate() {
            f(CorpusSentence {
                file: name.clone(),
                file_index,
                offset,
                sentence: k as u32,
                text: s.to_string(),
            });
        }
        offset += n as u64;
    }
    Ok(())
}

pub fn read_corpus_file(path: impl AsRef<Path>, file_index: usize) -> Result<Vec<CorpusSentence>> {
    let mut out = Vec::new();
    for_each_sentence(path.as_ref(), file_index, |s| out.push(s))?;
    Ok(out)
}

struct Matcher {
    stimuli: Vec<(Role, String, Vec<String>)>,
    by_first: HashMap<String, Vec<usize>>,
    case: CasePolicy,
}

impl Matcher {
    fn new(stimuli: &[(Role, &Stimulus)], case: CasePolicy) -> Self {
        let mut by_first: HashMap<String, Vec<usize>> = HashMap::new();
        let stimuli: Vec<(Role, String, Vec<String>)> = stimuli
            .iter()
            .map(|(r, s)| {
                let words: Vec<String> = tokenize(s.text())
                    .into_iter()
                    .map(|t| case.apply(t.text).into_owned())
                    .collect();
                (*r, s.text().to_string(), words)
            })
            .collect();
        for (i, (_, _, words)) in stimuli.iter().enumerate() {
            if let Some(w) = words.first() {
                by_first.entry(w.clone()).or_default().push(i);
            }
        }
        Matcher {
            stimuli,
            by_first,
            case,
        }
    }

    /// First whole-token occurrence of each stimulus: (stimulus, start, end).
    fn find(&self, toks: &[String]) -> Vec<(usize, usize, usize)> {
        let cased: Vec<std::borrow::Cow<'_, str>> =
            toks.iter().map(|t| self.case.apply(t)).collect();
        let mut found: Vec<(usize, usize, usize)> = Vec::new();
        for (pos, t) in cased.iter().enumerate() {
            let Some(cands) = self.by_first.get(t.as_ref()) else {
                continue;
            };
            for &i in cands {
                if found.iter().any(|f| f.0 == i) {
                    continue;
                }
                let words = &self.stimuli[i].2;
                let end = pos + words.len();
                if end <= cased.len() && cased[pos..end].iter().zip(words).all(|(a, b)| a == b) {
                    found.push((i, pos, end));
                }
            }
        }
        found.sort_unstable();
        found
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    key: u64,
    file_index: usize,
    offset: u64,
    sentence: u32,
    file: Arc<str>,
    text: String,
    tokens: Vec<String>,
    spans: Vec<Span>,
}

impl Candidate {
    fn order(&self) -> (u64, usize, u64, u32) {
        (self.key, self.file_index, self.offset, self.sentence)
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.order() == other.order()
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.order().cmp(&other.order())
    }
}

fn priority(seed: u64, unit: &str, s: &CorpusSentence) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((unit.len() as u64).to_le_bytes());
    h.update(unit.as_bytes());
    h.update((s.file_index as u64).to_le_bytes());
    h.update(s.offset.to_le_bytes());
    h.update(s.sentence.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

type Reservoirs = HashMap<usize, BinaryHeap<Candidate>>;

struct Sampler<'a> {
    matcher: Matcher,
    n_targets: usize,
    n_attrs: usize,
    kind: SampleKind,
    cfg: &'a CorpusConfig,
}

impl Sampler<'_> {
    fn unit_label(&self, unit: usize) -> String {
        match self.kind {
            SampleKind::Singles => self.matcher.stimuli[unit].1.clone(),
            SampleKind::Doubles => {
                let t = unit / self.n_attrs;
                let a = self.n_targets + unit % self.n_attrs;
                format!("{}\u{0}{}", self.matcher.stimuli[t].1, self.matcher.stimuli[a].1)
            }
        }
    }

    fn span(&self, (i, start, end): (usize, usize, usize)) -> Span {
        let (role, text, _) = &self.matcher.stimuli[i];
        Span {
            role: *role,
            stimulus: text.clone(),
            start,
            end,
        }
    }

    fn offer(&self, res: &mut Reservoirs, unit: usize, s: &CorpusSentence, toks: &[String], spans: Vec<Span>) {
        let key = priority(self.cfg.seed, &self.unit_label(unit), s);
        let heap = res.entry(unit).or_default();
        if heap.len() == self.cfg.max_per_stimulus {
            let worst = heap.peek().expect("full heap");
            if worst.order() <= (key, s.file_index, s.offset, s.sentence) {
                return;
            }
            heap.pop();
        }
        heap.push(Candidate {
            key,
            file_index: s.file_index,
            offset: s.offset,
            sentence: s.sentence,
            file: s.file.clone(),
            text: s.text.clone(),
            tokens: toks.to_vec(),
            spans,
        });
    }

    fn visit(&self, res: &mut Reservoirs, s: &CorpusSentence) {
        let toks = super::tokens(&s.text);
        let found = self.matcher.find(&toks);
        if found.is_empty() {
            return;
        }
        match self.kind {
            SampleKind::Singles => {
                for f in found {
                    self.offer(res, f.0, s, &toks, vec![self.span(f)]);
                }
            }
            SampleKind::Doubles => {
                let (ts, attrs): (Vec<_>, Vec<_>) =
                    found.into_iter().partition(|f| f.0 < self.n_targets);
                for &t in &ts {
                    for &a in &attrs {
                        let inst = ContextInstance {
                            test: TestId::C1,
                            context_id: 0,
                            text: String::new(),
                            sentence: toks.clone(),
                            spans: vec![self.span(t), self.span(a)],
                            provenance: Provenance::Template { template_id: 0 },
                        };
                        if filter_double(&inst, self.cfg.max_gap).unwrap_or(false) {
                            let unit = t.0 * self.n_attrs + (a.0 - self.n_targets);
                            self.offer(res, unit, s, &toks, inst.spans);
                        }
                    }
                }
            }
        }
    }

    fn units(&self) -> usize {
        match self.kind {
            SampleKind::Singles => self.matcher.stimuli.len(),
            SampleKind::Doubles => self.n_targets * self.n_attrs,
        }
    }

    fn merge(&self, parts: Vec<Reservoirs>) -> Reservoirs {
        let mut out: Reservoirs = HashMap::new();
        for part in parts {
            for (unit, heap) in part {
                let dst = out.entry(unit).or_default();
                for c in heap {
                    dst.push(c);
                    if dst.len() > self.cfg.max_per_stimulus {
                        dst.pop();
                    }
                }
            }
        }
        out
    }

    fn finish(&self, test: TestId, mut res: Reservoirs) -> Result<Vec<ContextInstance>> {
        let mut out = Vec::new();
        for unit in 0..self.units() {
            let mut picked = res.remove(&unit).map(BinaryHeap::into_vec).unwrap_or_default();
            if picked.is_empty() {
                log::warn!(
                    "no corpus sentence contains {:?}",
                    self.unit_label(unit).replace('\u{0}', " + ")
                );
            }
            picked.sort_by_key(|c| (c.file_index, c.offset, c.sentence));
            for c in picked {
                let inst = ContextInstance {
                    test,
                    context_id: out.len() as u64,
                    text: c.text,
                    sentence: c.tokens,
                    spans: c.spans,
                    provenance: Provenance::Corpus {
                        file: c.file.to_string(),
                        offset: c.offset,
                        sentence: c.sentence,
                    },
                };
                out.push(match self.kind {
                    SampleKind::Singles if self.cfg.window => window_single(&inst, self.cfg.window_k)?,
                    _ => inst,
                });
            }
        }
        Ok(out)
    }
}

/// Samples up to `cfg.max_per_stimulus` sentences containing `stimulus`
/// as a whole-token match. Output is in corpus order.
pub fn sample_corpus(
    sentences: impl IntoIterator<Item = CorpusSentence>,
    test: TestId,
    role: Role,
    stimulus: &Stimulus,
    cfg: &CorpusConfig,
) -> Result<Vec<ContextInstance>> {
    cfg.validate()?;
    let sampler = Sampler {
        matcher: Matcher::new(&[(role, stimulus)], cfg.case),
        n_targets: 1,
        n_attrs: 0,
        kind: SampleKind::Singles,
        cfg,
    };
    let mut res = HashMap::new();
    for s in sentences {
        sampler.visit(&mut res, &s);
    }
    sampler.finish(test, res)
}

/// Samples contexts for every stimulus of `test` (singles) or every
/// target/attribute pairing (doubles) in one pass over `files`.
///
/// Files are scanned in parallel; the result equals a sequential scan.
/// Singles are ordered by stimulus (X, Y, A, B), doubles by target then
/// attribute, each group in corpus order; context ids count from 0.
pub fn sample_corpus_files(
    files: &[PathBuf],
    test: &BiasTest,
    kind: SampleKind,
    cfg: &CorpusConfig,
) -> Result<Vec<ContextInstance>> {
    cfg.validate()?;
    let stimuli: Vec<(Role, &Stimulus)> = test.stimuli().collect();
    let n_targets = test.target_x.len() + test.target_y.len();
    let sampler = Sampler {
        matcher: Matcher::new(&stimuli, cfg.case),
        n_targets,
        n_attrs: stimuli.len() - n_targets,
        kind,
        cfg,
    };
    let parts = files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let mut res = HashMap::new();
            for_each_sentence(path, i, |s| sampler.visit(&mut res, &s))?;
            Ok(res)
        })
        .collect::<Result<Vec<_>>>()?;
    sampler.finish(test.id, sampler.merge(parts))
}
