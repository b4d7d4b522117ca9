//! Encoding interchange: JSONL records of contextual vectors, the in-memory
//! store, and subword composition.

mod packed;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::testsets::{Role, TestId};

pub use packed::{read_packed, write_packed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Word,
    Sentence,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Word => "word",
            Level::Sentence => "sentence",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(Level::Word),
            "sentence" => Ok(Level::Sentence),
            _ => Err(Error::InvalidInput(format!("unknown level '{s}'"))),
        }
    }
}

/// How the vectors of a word's subword tokens are reduced to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionMode {
    #[serde(alias = "avg")]
    Average,
    #[serde(alias = "first")]
    FirstToken,
    #[serde(alias = "last")]
    LastToken,
}

impl CompositionMode {
    pub const ALL: [CompositionMode; 3] = [
        CompositionMode::Average,
        CompositionMode::FirstToken,
        CompositionMode::LastToken,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CompositionMode::Average => "average",
            CompositionMode::FirstToken => "first_token",
            CompositionMode::LastToken => "last_token",
        }
    }
}

impl fmt::Display for CompositionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CompositionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" | "avg" => Ok(CompositionMode::Average),
            "first_token" | "first" => Ok(CompositionMode::FirstToken),
            "last_token" | "last" => Ok(CompositionMode::LastToken),
            _ => Err(Error::InvalidInput(format!("unknown composition '{s}'"))),
        }
    }
}

/// One line of the encoding interchange format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingRecord {
    pub test: TestId,
    pub role: Role,
    pub stimulus: String,
    pub context_id: u64,
    pub level: Level,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub token_vectors: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_vector: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordKey {
    pub test: TestId,
    pub role: Role,
    pub stimulus: String,
    pub context_id: u64,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {:?}, context {})",
            self.test, self.role, self.stimulus, self.context_id
        )
    }
}

impl EncodingRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            test: self.test,
            role: self.role,
            stimulus: self.stimulus.clone(),
            context_id: self.context_id,
        }
    }

    /// The vectors this record contributes at its level.
    fn rows(&self) -> std::result::Result<&[Vec<f64>], &'static str> {
        match self.level {
            Level::Word => {
                if self.sentence_vector.is_some() {
                    return Err("word-level record carries a sentence_vector");
                }
                if self.token_vectors.is_empty() {
                    return Err("word-level record without token_vectors");
                }
                Ok(&self.token_vectors)
            }
            Level::Sentence => {
                if !self.token_vectors.is_empty() {
                    return Err("sentence-level record carries token_vectors");
                }
                self.sentence_vector
                    .as_ref()
                    .map(std::slice::from_ref)
                    .ok_or("sentence-level record without sentence_vector")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    tokens: Vec<String>,
    rows: Vec<Vec<f64>>,
}

/// Read-only collection of encodings, keyed by (record key, level).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncodingStore {
    model: Option<String>,
    dim: Option<usize>,
    entries: BTreeMap<(RecordKey, Level), Entry>,
}

impl EncodingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn model(&self) -> Option<&str> {
        self.model.as_deref()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds one record; `line` is used in diagnostics.
    pub fn insert(&mut self, record: EncodingRecord, line: usize) -> Result<()> {
        let rows = record.rows().map_err(|m| Error::Parse {
            line,
            message: m.into(),
        })?;
        for row in rows {
            if row.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite { line });
            }
            let dim = *self.dim.get_or_insert(row.len());
            if row.len() != dim || dim == 0 {
                log::error!("line {line}: vector of length {} in a store of dim {dim}", row.len());
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
        }
        if !record.tokens.is_empty()
            && record.level == Level::Word
            && record.tokens.len() != record.token_vectors.len()
        {
            return Err(Error::Parse {
                line,
                message: format!(
                    "{} tokens but {} token vectors",
                    record.tokens.len(),
                    record.token_vectors.len()
                ),
            });
        }
        if let Some(m) = &record.model {
            match &self.model {
                None => self.model = Some(m.clone()),
                Some(existing) if existing != m => {
                    return Err(Error::Parse {
                        line,
                        message: format!("model '{m}' differs from store model '{existing}'"),
                    })
                }
                _ => {}
            }
        }
        let key = (record.key(), record.level);
        if self.entries.contains_key(&key) {
            return Err(Error::DuplicateKey {
                line,
                key: format!("{} at {} level", key.0, key.1),
            });
        }
        let EncodingRecord {
            tokens,
            token_vectors,
            sentence_vector,
            ..
        } = record;
        let rows = match sentence_vector {
            Some(v) => vec![v],
            None => token_vectors,
        };
        self.entries.insert(key, Entry { tokens, rows });
        Ok(())
    }

    pub fn from_records(records: impl IntoIterator<Item = EncodingRecord>) -> Result<Self> {
        let mut store = Self::new();
        for (i, r) in records.into_iter().enumerate() {
            store.insert(r, i + 1)?;
        }
        Ok(store)
    }

    /// Records in key order.
    pub fn records(&self) -> impl Iterator<Item = EncodingRecord> + '_ {
        self.entries.iter().map(|((key, level), e)| EncodingRecord {
            test: key.test,
            role: key.role,
            stimulus: key.stimulus.clone(),
            context_id: key.context_id,
            level: *level,
            model: self.model.clone(),
            tokens: e.tokens.clone(),
            token_vectors: if *level == Level::Word {
                e.rows.clone()
            } else {
                Vec::new()
            },
            sentence_vector: if *level == Level::Sentence {
                e.rows.first().cloned()
            } else {
                None
            },
        })
    }

    /// Context ids available for one stimulus at a level, ascending.
    pub fn contexts(&self, test: TestId, role: Role, stimulus: &str, level: Level) -> Vec<u64> {
        let lo = RecordKey {
            test,
            role,
            stimulus: stimulus.to_string(),
            context_id: 0,
        };
        let hi = RecordKey {
            context_id: u64::MAX,
            ..lo.clone()
        };
        self.entries
            .range((lo, Level::Word)..=(hi, Level::Sentence))
            .filter(|((_, l), _)| *l == level)
            .map(|((k, _), _)| k.context_id)
            .collect()
    }

    /// Number of records per (test, role, stimulus, level).
    pub fn counts(&self) -> BTreeMap<(TestId, Role, String, Level), usize> {
        let mut out = BTreeMap::new();
        for (k, l) in self.entries.keys() {
            *out.entry((k.test, k.role, k.stimulus.clone(), *l)).or_insert(0) += 1;
        }
        out
    }

    pub fn tokens(&self, key: &RecordKey, level: Level) -> Option<&[String]> {
        self.entries
            .get(&(key.clone(), level))
            .map(|e| e.tokens.as_slice())
    }

    fn rows(&self, key: &RecordKey, level: Level) -> Result<&[Vec<f64>]> {
        if let Some(e) = self.entries.get(&(key.clone(), level)) {
            return Ok(&e.rows);
        }
        let other = match level {
            Level::Word => Level::Sentence,
            Level::Sentence => Level::Word,
        };
        if self.entries.contains_key(&(key.clone(), other)) {
            Err(Error::LevelUnavailable {
                key: key.to_string(),
                level: level.to_string(),
            })
        } else {
            Err(Error::MissingKey(key.to_string()))
        }
    }
}

/// Reduces per-token vectors to a single vector.
pub fn compose_subwords(token_vectors: &[Vec<f64>], mode: CompositionMode) -> Result<Vec<f64>> {
    let (first, last) = match (token_vectors.first(), token_vectors.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::InvalidInput("no token vectors to compose".into())),
    };
    Ok(match mode {
        CompositionMode::FirstToken => first.clone(),
        CompositionMode::LastToken => last.clone(),
        CompositionMode::Average => {
            if token_vectors.len() == 1 {
                return Ok(first.clone());
            }
            let mut acc = vec![0.0; first.len()];
            for v in token_vectors {
                if v.len() != acc.len() {
                    return Err(Error::DimMismatch {
                        expected: acc.len(),
                        found: v.len(),
                    });
                }
                for (a, c) in acc.iter_mut().zip(v) {
                    *a += c;
                }
            }
            let n = token_vectors.len() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            acc
        }
    })
}

/// The vector for one key: the sentence vector, or the composed word vector.
pub fn vector_for(
    store: &EncodingStore,
    key: &RecordKey,
    level: Level,
    mode: CompositionMode,
) -> Result<Vec<f64>> {
    let rows = store.rows(key, level)?;
    match level {
        Level::Sentence => Ok(rows[0].clone()),
        Level::Word => compose_subwords(rows, mode),
    }
}

/// Parses a JSONL stream; blank lines are skipped.
pub fn ingest(reader: impl BufRead) -> Result<EncodingStore> {
    let mut store = EncodingStore::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EncodingRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        store.insert(record, line_no)?;
    }
    let counts = store.counts();
    log::info!(
        "ingested {} encoding records over {} (stimulus, level) groups",
        store.len(),
        counts.len()
    );
    for ((test, role, stimulus, level), n) in &counts {
        log::debug!("{test} {role} {stimulus:?} {level}: {n}");
    }
    Ok(store)
}

pub fn ingest_path(path: impl AsRef<Path>) -> Result<EncodingStore> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    ingest(BufReader::new(file))
}

/// Writes the store as JSONL in key order.
pub fn write_jsonl(store: &EncodingStore, mut out: impl Write) -> Result<()> {
    for r in store.records() {
        serde_json::to_writer(&mut out, &r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word(stimulus: &str, ctx: u64, vectors: Vec<Vec<f64>>) -> EncodingRecord {
        EncodingRecord {
            test: TestId::C6,
            role: Role::X,
            stimulus: stimulus.into(),
            context_id: ctx,
            level: Level::Word,
            model: None,
            tokens: Vec::new(),
            token_vectors: vectors,
            sentence_vector: None,
        }
    }

    #[test]
    fn empty_stream() {
        let s = ingest("".as_bytes()).unwrap();
        assert!(s.is_empty());
        assert!(s.counts().is_empty());
    }

    #[test]
    fn duplicate_key_names_the_key() {
        let line = serde_json::to_string(&word("he", 3, vec![vec![1.0, 2.0]])).unwrap();
        let text = format!("{line}\n{line}\n");
        match ingest(text.as_bytes()) {
            Err(Error::DuplicateKey { line: 2, key }) => assert!(key.contains("\"he\"")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_and_dim_errors() {
        let good = serde_json::to_string(&word("he", 0, vec![vec![1.0, 2.0]])).unwrap();
        let text = format!("{good}\n{{\"test\":\"C6\"\n");
        assert!(matches!(ingest(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let bad = serde_json::to_string(&word("him", 0, vec![vec![1.0]])).unwrap();
        let text = format!("{good}\n{bad}\n");
        assert!(matches!(ingest(text.as_bytes()), Err(Error::DimMismatch { .. })));
        let nan = good.replace("1.0", "NaN");
        assert!(ingest(nan.as_bytes()).is_err());
        let mut s = EncodingStore::new();
        assert!(matches!(
            s.insert(word("he", 0, vec![vec![f64::INFINITY]]), 9),
            Err(Error::NonFinite { line: 9 })
        ));
    }

    #[test]
    fn absent_fields_are_omitted() {
        let line = serde_json::to_string(&word("he", 0, vec![vec![0.5]])).unwrap();
        assert_eq!(
            line,
            r#"{"test":"C6","role":"X","stimulus":"he","context_id":0,"level":"word","token_vectors":[[0.5]]}"#
        );
    }

    #[test]
    fn composition() {
        let tv = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(compose_subwords(&tv, CompositionMode::Average).unwrap(), [0.5, 0.5]);
        assert_eq!(compose_subwords(&tv, CompositionMode::FirstToken).unwrap(), [1.0, 0.0]);
        assert_eq!(compose_subwords(&tv, CompositionMode::LastToken).unwrap(), [0.0, 1.0]);
        let single = vec![vec![0.1, 0.2, 0.3]];
        for mode in CompositionMode::ALL {
            assert_eq!(compose_subwords(&single, mode).unwrap(), single[0]);
        }
        assert!(compose_subwords(&[], CompositionMode::Average).is_err());
    }

    #[test]
    fn lookups_by_level() {
        let store = EncodingStore::from_records([
            word("he", 5, vec![vec![1.0, 3.0], vec![3.0, 1.0]]),
            word("he", 2, vec![vec![1.0, 1.0]]),
        ])
        .unwrap();
        assert_eq!(store.contexts(TestId::C6, Role::X, "he", Level::Word), [2, 5]);
        let key = RecordKey {
            test: TestId::C6,
            role: Role::X,
            stimulus: "he".into(),
            context_id: 5,
        };
        assert_eq!(
            vector_for(&store, &key, Level::Word, CompositionMode::Average).unwrap(),
            [2.0, 2.0]
        );
        assert!(matches!(
            vector_for(&store, &key, Level::Sentence, CompositionMode::Average),
            Err(Error::LevelUnavailable { .. })
        ));
        let missing = RecordKey {
            context_id: 9,
            ..key
        };
        assert!(matches!(
            vector_for(&store, &missing, Level::Word, CompositionMode::Average),
            Err(Error::MissingKey(_))
        ));
    }

    #[test]
    fn jsonl_round_trip_is_bit_exact() {
        let v = vec![0.1 + 0.2, 1.0 / 3.0, -2.5e-300, 6.02214076e23];
        let mut rec = word("he", 1, Vec::new());
        rec.level = Level::Sentence;
        rec.sentence_vector = Some(v.clone());
        rec.model = Some("m".into());
        let store = EncodingStore::from_records([rec.clone()]).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&store, &mut buf).unwrap();
        let back = ingest(buf.as_slice()).unwrap();
        assert_eq!(back, store);
        let got = back.records().next().unwrap();
        assert_eq!(got, rec);
        for (a, b) in got.sentence_vector.unwrap().iter().zip(&v) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
