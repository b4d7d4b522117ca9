//! Packed sidecar: vectors as little-endian f32 in a `.vecs` file, described
//! by a JSONL index with one line per record.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncodingRecord, EncodingStore, Level};
use crate::error::{Error, Result};
use crate::testsets::{Role, TestId};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexLine {
    test: TestId,
    role: Role,
    stimulus: String,
    context_id: u64,
    level: Level,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    tokens: Vec<String>,
    /// Offset into the sidecar, in f32 values.
    offset: u64,
    rows: usize,
    dim: usize,
}

/// Writes the store as index + sidecar. Components are narrowed to f32.
pub fn write_packed(store: &EncodingStore, index: &Path, vecs: &Path) -> Result<()> {
    let mut idx = BufWriter::new(std::fs::File::create(index).map_err(|e| Error::file(index, e))?);
    let mut bin = BufWriter::new(std::fs::File::create(vecs).map_err(|e| Error::file(vecs, e))?);
    let mut offset = 0u64;
    for r in store.records() {
        let rows: Vec<Vec<f64>> = match r.level {
            Level::Word => r.token_vectors,
            Level::Sentence => r.sentence_vector.into_iter().collect(),
        };
        let dim = rows[0].len();
        for row in &rows {
            for &c in row {
                bin.write_all(&(c as f32).to_le_bytes())?;
            }
        }
        let line = IndexLine {
            test: r.test,
            role: r.role,
            stimulus: r.stimulus,
            context_id: r.context_id,
            level: r.level,
            model: r.model,
            tokens: r.tokens,
            offset,
            rows: rows.len(),
            dim,
        };
        offset += (rows.len() * dim) as u64;
        serde_json::to_writer(&mut idx, &line)?;
        idx.write_all(b"\n")?;
    }
    idx.flush()?;
    bin.flush()?;
    Ok(())
}

pub fn read_packed(index: &Path, vecs: &Path) -> Result<EncodingStore> {
    let mut raw = Vec::new();
    std::fs::File::open(vecs)
        .map_err(|e| Error::file(vecs, e))?
        .read_to_end(&mut raw)?;
    if raw.len() % 4 != 0 {
        return Err(Error::InvalidInput(format!(
            "{}: length {} is not a multiple of 4",
            vecs.display(),
            raw.len()
        )));
    }
    let floats: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let reader = BufReader::new(std::fs::File::open(index).map_err(|e| Error::file(index, e))?);
    let mut store = EncodingStore::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: IndexLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let start = entry.offset as usize;
        let end = start + entry.rows * entry.dim;
        let slice = floats.get(start..end).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("vector range {start}..{end} outside the sidecar"),
        })?;
        let rows: Vec<Vec<f64>> = slice
            .chunks(entry.dim.max(1))
            .map(|c| c.iter().map(|&v| f64::from(v)).collect())
            .collect();
        let (token_vectors, sentence_vector) = match entry.level {
            Level::Word => (rows, None),
            Level::Sentence => (Vec::new(), rows.into_iter().next()),
        };
        store.insert(
            EncodingRecord {
                test: entry.test,
                role: entry.role,
                stimulus: entry.stimulus,
                context_id: entry.context_id,
                level: entry.level,
                model: entry.model,
                tokens: entry.tokens,
                token_vectors,
                sentence_vector,
            },
            line_no,
        )?;
    }
    Ok(store)
}
