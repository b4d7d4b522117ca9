//! Contextualization: placing stimuli into template sentences or sampling
//! corpus sentences that contain them.

mod corpus;
mod templates;
mod tokenize;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::testsets::{CasePolicy, Role, TestId};

pub use corpus::{
    read_corpus_file, sample_corpus, sample_corpus_files, split_sentences, CorpusConfig,
    CorpusSentence, SampleKind,
};
pub use templates::{
    default_templates, expand_templates, expansion_count, parse_templates, read_templates,
    ExpansionMode, Template, TemplateMode, ATTRIBUTE_PLACEHOLDER, TARGET_PLACEHOLDER,
};
pub use tokenize::{is_word_token, tokenize, tokens, Token};

/// Half-open token range of one stimulus inside a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub role: Role,
    pub stimulus: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Template {
        template_id: u64,
    },
    /// `offset` is the byte offset of the source line; `sentence` indexes
    /// the sentences split from that line.
    Corpus {
        file: String,
        offset: u64,
        sentence: u32,
    },
}

/// One sentence carrying one (single) or two (double) stimuli.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextInstance {
    pub test: TestId,
    pub context_id: u64,
    pub text: String,
    pub sentence: Vec<String>,
    pub spans: Vec<Span>,
    pub provenance: Provenance,
}

impl ContextInstance {
    /// Checks that the tokens match the text and that every span covers its
    /// stimulus.
    pub fn check(&self, case: CasePolicy) -> Result<()> {
        let bad = |m: String| Error::InvalidInput(format!("context {}: {m}", self.context_id));
        if tokens(&self.text) != self.sentence {
            return Err(bad("tokens do not match the text".into()));
        }
        if self.spans.is_empty() || self.spans.len() > 2 {
            return Err(bad(format!("{} spans", self.spans.len())));
        }
        for s in &self.spans {
            if s.start >= s.end || s.end > self.sentence.len() {
                return Err(bad(format!("span {}..{} out of range", s.start, s.end)));
            }
            let joined = self.sentence[s.start..s.end].join(" ");
            if case.apply(&joined) != case.apply(&s.stimulus) {
                return Err(bad(format!("span reads {joined:?}, expected {:?}", s.stimulus)));
            }
        }
        if self.spans.len() == 2 {
            let targets = self.spans.iter().filter(|s| s.role.is_target()).count();
            if targets != 1 {
                return Err(bad("a double needs one target and one attribute span".into()));
            }
        }
        Ok(())
    }

    pub fn target_span(&self) -> Option<&Span> {
        self.spans.iter().find(|s| s.role.is_target())
    }

    pub fn attribute_span(&self) -> Option<&Span> {
        self.spans.iter().find(|s| !s.role.is_target())
    }
}

/// Keeps at most `k` words on each side of the single span.
///
/// Punctuation between kept words stays; the window is measured from the
/// outer edges of a multiword span.
pub fn window_single(instance: &ContextInstance, k: usize) -> Result<ContextInstance> {
    let [span] = instance.spans.as_slice() else {
        return Err(Error::InvalidInput(format!(
            "windowing needs exactly one span, context {} has {}",
            instance.context_id,
            instance.spans.len()
        )));
    };
    let toks = tokenize(&instance.text);
    if toks.len() != instance.sentence.len() {
        return Err(Error::InvalidInput(format!(
            "context {}: tokens do not match the text",
            instance.context_id
        )));
    }
    let mut start = 0;
    let mut seen = 0;
    for i in (0..span.start).rev() {
        if toks[i].is_word() {
            seen += 1;
            if seen == k {
                start = i;
                break;
            }
        }
    }
    let mut end = toks.len();
    let mut seen = 0;
    for (i, t) in toks.iter().enumerate().skip(span.end) {
        if t.is_word() {
            seen += 1;
            if seen == k {
                end = i + 1;
                break;
            }
        }
    }
    if k == 0 {
        start = span.start;
        end = span.end;
    }
    let text = instance.text[toks[start].start..toks[end - 1].end].to_string();
    Ok(ContextInstance {
        test: instance.test,
        context_id: instance.context_id,
        sentence: instance.sentence[start..end].to_vec(),
        text,
        spans: vec![Span {
            start: span.start - start,
            end: span.end - start,
            ..span.clone()
        }],
        provenance: instance.provenance.clone(),
    })
}

/// Whether at most `max_gap` words separate the two spans.
pub fn filter_double(instance: &ContextInstance, max_gap: usize) -> Result<bool> {
    let [a, b] = instance.spans.as_slice() else {
        return Err(Error::InvalidInput(format!(
            "gap filter needs exactly two spans, context {} has {}",
            instance.context_id,
            instance.spans.len()
        )));
    };
    let (first, second) = if a.start <= b.start { (a, b) } else { (b, a) };
    if second.start < first.end {
        return Err(Error::OverlappingSpans);
    }
    let gap = instance.sentence[first.end..second.start]
        .iter()
        .filter(|t| is_word_token(t))
        .count();
    Ok(gap <= max_gap)
}

pub fn read_instances(reader: impl BufRead) -> Result<Vec<ContextInstance>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_instances<'a>(
    instances: impl IntoIterator<Item = &'a ContextInstance>,
    mut out: impl Write,
) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut out, inst)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn single(text: &str, stimulus: &str) -> ContextInstance {
        let sentence = tokens(text);
        let words = tokens(stimulus);
        let start = sentence
            .windows(words.len())
            .position(|w| w == words.as_slice())
            .unwrap();
        ContextInstance {
            test: TestId::C6,
            context_id: 0,
            text: text.into(),
            spans: vec![Span {
                role: Role::X,
                stimulus: stimulus.into(),
                start,
                end: start + words.len(),
            }],
            sentence,
            provenance: Provenance::Template { template_id: 0 },
        }
    }

    fn numbered(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn window_of_eight_around_the_stimulus() {
        let inst = single(&numbered(20), "w10");
        let w = window_single(&inst, 4).unwrap();
        assert_eq!(w.sentence.len(), 9);
        assert_eq!(w.spans[0].start, 4);
        assert_eq!(w.text, "w6 w7 w8 w9 w10 w11 w12 w13 w14");
        w.check(CasePolicy::Preserve).unwrap();
    }

    #[test]
    fn window_boundaries() {
        let short = single("a b c", "b");
        assert_eq!(window_single(&short, 4).unwrap(), short);
        let first = single(&numbered(12), "w0");
        let w = window_single(&first, 4).unwrap();
        assert_eq!(w.sentence, ["w0", "w1", "w2", "w3", "w4"]);
        assert_eq!(w.spans[0].start, 0);
    }

    #[test]
    fn window_keeps_inner_punctuation_and_multiword_edges() {
        let inst = single("one, two three a deaf person four; five six seven.", "a deaf person");
        let w = window_single(&inst, 2).unwrap();
        assert_eq!(w.text, "two three a deaf person four; five");
        assert_eq!(w.spans[0].start, 2);
        assert_eq!(w.spans[0].end, 5);
        w.check(CasePolicy::Preserve).unwrap();
    }

    #[test]
    fn window_is_idempotent_here() {
        let inst = single("x, y. z a b STIM c d! e f g", "STIM");
        let once = window_single(&inst, 2).unwrap();
        assert_eq!(window_single(&once, 2).unwrap(), once);
    }

    fn double(gap: usize) -> ContextInstance {
        let mut words = vec!["he".to_string()];
        words.extend((0..gap).map(|i| format!("g{i}")));
        words.push("math".into());
        let text = words.join(" ") + ".";
        ContextInstance {
            test: TestId::C6,
            context_id: 1,
            sentence: tokens(&text),
            text,
            spans: vec![
                Span {
                    role: Role::X,
                    stimulus: "he".into(),
                    start: 0,
                    end: 1,
                },
                Span {
                    role: Role::A,
                    stimulus: "math".into(),
                    start: gap + 1,
                    end: gap + 2,
                },
            ],
            provenance: Provenance::Template { template_id: 0 },
        }
    }

    #[test]
    fn gap_rule() {
        assert!(filter_double(&double(0), 18).unwrap());
        assert!(filter_double(&double(18), 18).unwrap());
        assert!(!filter_double(&double(19), 18).unwrap());
        let mut overlap = double(2);
        overlap.spans[1].start = 0;
        assert!(matches!(filter_double(&overlap, 18), Err(Error::OverlappingSpans)));
        assert!(filter_double(&single("a b", "a"), 3).is_err());
    }

    #[test]
    fn jsonl_shape() {
        let inst = single("This is orchid.", "orchid");
        let line = serde_json::to_string(&inst).unwrap();
        assert_eq!(
            line,
            r#"{"test":"C6","context_id":0,"text":"This is orchid.","sentence":["This","is","orchid","."],"spans":[{"role":"X","stimulus":"orchid","start":2,"end":3}],"provenance":{"source":"template","template_id":0}}"#
        );
        let mut buf = Vec::new();
        write_instances([&inst], &mut buf).unwrap();
        assert_eq!(read_instances(buf.as_slice()).unwrap(), [inst]);
    }
}
