//! Word-set resource format.
//!
//! ```text
//! # free comment
//! @id C9
//! @descriptor terms
//! @bias health
//! @concepts mental/physical diseases vs. temporary/permanent
//! @variant full              (optional, defaults to full)
//! @elided A B                (optional)
//! @expected-attributes 230   (optional)
//! X:
//! sad
//! ...
//! A:
//! impermanent
//! *transitory                (curated modification)
//! ```
//!
//! Sections appear in the order X, Y, A, B with one stimulus per line.

use std::fmt::Write as _;

use super::{BiasTest, DescriptorKind, Role, Stimulus, TestId, Variant};
use crate::error::{Error, Result};

pub fn parse_test(text: &str) -> Result<BiasTest> {
    let mut id = None;
    let mut descriptor = None;
    let mut variant = Variant::Full;
    let mut bias_kind = String::new();
    let mut concepts = String::new();
    let mut elided = Vec::new();
    let mut expected_attributes = None;
    let mut sets: [Vec<Stimulus>; 4] = Default::default();
    let mut seen = [false; 4];
    let mut current: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end();
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(meta) = line.strip_prefix('@') {
            if current.is_some() {
                return Err(err("metadata after the first section".into()));
            }
            let (key, value) = meta.split_once(' ').unwrap_or((meta, ""));
            let value = value.trim();
            match key {
                "id" => id = Some(value.parse::<TestId>()?),
                "descriptor" => descriptor = Some(value.parse::<DescriptorKind>()?),
                "variant" => variant = value.parse()?,
                "bias" => bias_kind = value.to_string(),
                "concepts" => concepts = value.to_string(),
                "elided" => {
                    elided = value
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<Result<Vec<Role>>>()?
                }
                "expected-attributes" => {
                    expected_attributes = Some(
                        value
                            .parse()
                            .map_err(|_| err(format!("bad count '{value}'")))?,
                    )
                }
                other => return Err(err(format!("unknown metadata key '@{other}'"))),
            }
            continue;
        }
        if let Some(role) = line.strip_suffix(':').and_then(|r| r.parse::<Role>().ok()) {
            let slot = role as usize;
            if seen[slot] {
                return Err(err(format!("section {role} repeated")));
            }
            if current.map_or(slot != 0, |c| slot != c + 1) {
                return Err(err(format!("section {role} out of order")));
            }
            seen[slot] = true;
            current = Some(slot);
            continue;
        }
        let slot = current.ok_or_else(|| err("stimulus before first section".into()))?;
        let (text, modified) = match line.strip_prefix('*') {
            Some(rest) => (rest, true),
            None => (line, false),
        };
        let stimulus = Stimulus::new(text)
            .map_err(|e| err(e.to_string()))?
            .modified(modified);
        sets[slot].push(stimulus);
    }

    let [target_x, target_y, attr_a, attr_b] = sets;
    let test = BiasTest {
        id: id.ok_or_else(|| Error::Parse {
            line: 0,
            message: "missing @id".into(),
        })?,
        descriptor_kind: descriptor.ok_or_else(|| Error::Parse {
            line: 0,
            message: "missing @descriptor".into(),
        })?,
        variant,
        bias_kind,
        concepts,
        target_x,
        target_y,
        attr_a,
        attr_b,
        elided,
        expected_attributes,
    };
    test.check()?;
    Ok(test)
}

pub fn serialize_test(test: &BiasTest) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "@id {}", test.id);
    let _ = writeln!(out, "@descriptor {}", test.descriptor_kind);
    if test.variant != Variant::Full {
        let _ = writeln!(out, "@variant {}", test.variant);
    }
    if !test.bias_kind.is_empty() {
        let _ = writeln!(out, "@bias {}", test.bias_kind);
    }
    if !test.concepts.is_empty() {
        let _ = writeln!(out, "@concepts {}", test.concepts);
    }
    if !test.elided.is_empty() {
        let roles: Vec<&str> = test.elided.iter().map(|r| r.as_str()).collect();
        let _ = writeln!(out, "@elided {}", roles.join(" "));
    }
    if let Some(n) = test.expected_attributes {
        let _ = writeln!(out, "@expected-attributes {n}");
    }
    for role in Role::ALL {
        let _ = writeln!(out, "{role}:");
        for s in test.set(role) {
            if s.is_modified() {
                out.push('*');
            }
            out.push_str(s.text());
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "# demo\n@id C6\n@descriptor terms\n@bias gender\nX:\nhe\nY:\nshe\nA:\n*career\nB:\nhome\n";

    #[test]
    fn parses_sections_and_markers() {
        let t = parse_test(SMALL).unwrap();
        assert_eq!(t.id, TestId::C6);
        assert_eq!(t.target_x[0].text(), "he");
        assert!(t.attr_a[0].is_modified());
        assert!(!t.attr_b[0].is_modified());
    }

    #[test]
    fn round_trip() {
        let t = parse_test(SMALL).unwrap();
        assert_eq!(parse_test(&serialize_test(&t)).unwrap(), t);
    }

    #[test]
    fn rejects_out_of_order_sections() {
        let bad = "@id C6\n@descriptor terms\nY:\nshe\nX:\nhe\n";
        assert!(matches!(parse_test(bad), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn rejects_duplicates_and_empty_sets() {
        let dup = "@id C6\n@descriptor terms\nX:\nhe\nhe\nY:\nshe\nA:\na\nB:\nb\n";
        assert!(matches!(parse_test(dup), Err(Error::DuplicateStimulus { .. })));
        let empty = "@id C6\n@descriptor terms\nX:\nY:\nshe\nA:\na\nB:\nb\n";
        assert!(matches!(parse_test(empty), Err(Error::EmptySet { .. })));
    }

    #[test]
    fn rejects_double_spaces() {
        let bad = "@id C6\n@descriptor terms\nX:\na  b\n";
        assert!(matches!(parse_test(bad), Err(Error::Parse { line: 4, .. })));
    }
}
