use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::registry::SIMPLIFIED;
use super::{BiasTest, Role, Stimulus, TestId, Variant};
use crate::error::{Error, Result};

/// How stimuli are compared against a vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CasePolicy {
    #[default]
    Preserve,
    /// Compare lowercased text (uncased model vocabularies).
    Lowercase,
}

impl CasePolicy {
    pub fn apply<'a>(self, text: &'a str) -> std::borrow::Cow<'a, str> {
        match self {
            CasePolicy::Preserve => std::borrow::Cow::Borrowed(text),
            CasePolicy::Lowercase => std::borrow::Cow::Owned(text.to_lowercase()),
        }
    }
}

/// Reads a vocabulary file: one token per line.
pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim_end_matches(['\r', '\n']))
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Keeps only stimuli that are a single vocabulary token, then truncates
/// the larger target set (from the end) so |X| == |Y|.
///
/// Surviving stimuli keep their original spelling and order.
pub fn reduce_to_vocabulary(
    test: &BiasTest,
    vocab: &HashSet<String>,
    case: CasePolicy,
) -> Result<BiasTest> {
    if test.variant == Variant::Simplified {
        return Err(Error::WrongVariant {
            expected: "full".into(),
            found: test.variant.to_string(),
        });
    }
    let mut out = test.clone();
    out.variant = Variant::Reduced;
    for role in Role::ALL {
        out.set_mut(role)
            .retain(|s| !s.is_multiword() && vocab.contains(case.apply(s.text()).as_ref()));
    }
    let n = out.target_x.len().min(out.target_y.len());
    out.target_x.truncate(n);
    out.target_y.truncate(n);
    out.check()?;
    Ok(out)
}

fn simplified_targets(id: TestId) -> Option<(Vec<Stimulus>, Vec<Stimulus>)> {
    let mut current: Option<TestId> = None;
    let mut x = None;
    let mut y = None;
    for line in SIMPLIFIED.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, rest) = line.split_once(':')?;
        let rest = rest.trim();
        if rest.is_empty() {
            current = key.parse().ok();
            continue;
        }
        if current != Some(id) {
            continue;
        }
        let words: Vec<Stimulus> = rest
            .split(',')
            .map(|w| Stimulus::new(w.trim()))
            .collect::<Result<_>>()
            .ok()?;
        match key {
            "X" => x = Some(words),
            "Y" => y = Some(words),
            _ => return None,
        }
    }
    Some((x?, y?))
}

/// Replaces the target sets with the registered short proxy lists.
pub fn simplify(test: &BiasTest) -> Result<BiasTest> {
    let (x, y) =
        simplified_targets(test.id).ok_or_else(|| Error::NoSimplifiedVariant(test.id.to_string()))?;
    let mut out = test.clone();
    out.variant = Variant::Simplified;
    out.target_x = x;
    out.target_y = y;
    out.elided.retain(|r| !r.is_target());
    out.check()?;
    Ok(out)
}

/// Parses `noun<TAB>adjective` lines; a noun with no adjective is dropped.
pub fn parse_adjective_mapping(text: &str) -> Result<HashMap<String, Option<String>>> {
    let mut map = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (noun, adj) = match line.split_once('\t') {
            Some((n, a)) => (n.trim(), Some(a.trim()).filter(|a| !a.is_empty())),
            None => (line.trim(), None),
        };
        if map
            .insert(noun.to_string(), adj.map(str::to_string))
            .is_some()
        {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("duplicate mapping for '{noun}'"),
            });
        }
    }
    Ok(map)
}

pub fn load_adjective_mapping(path: impl AsRef<Path>) -> Result<HashMap<String, Option<String>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_adjective_mapping(&text)
}

/// Converts attribute stimuli to adjective form; unmapped attributes are
/// removed. Targets are untouched.
pub fn attributes_to_adjectives(
    test: &BiasTest,
    mapping: &HashMap<String, Option<String>>,
) -> Result<BiasTest> {
    let mut out = test.clone();
    for role in [Role::A, Role::B] {
        let mut seen = HashSet::new();
        let mut converted = Vec::new();
        for s in test.set(role) {
            if let Some(Some(adj)) = mapping.get(s.text()) {
                if seen.insert(adj.clone()) {
                    let keep = adj == s.text() && s.is_modified();
                    converted.push(Stimulus::new(adj.clone())?.modified(keep));
                }
            }
        }
        *out.set_mut(role) = converted;
    }
    out.check()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub warnings: Vec<(Role, String)>,
    pub is_significant_capable: bool,
}

/// Minimum stimuli per set for a meaningful significance test.
pub const MIN_STIMULI: usize = 8;

pub fn validate(test: &BiasTest) -> ValidationReport {
    let mut warnings = Vec::new();
    let mut capable = true;
    for role in Role::ALL {
        let n = test.set(role).len();
        if n < MIN_STIMULI {
            capable = false;
            warnings.push((
                role,
                format!("{n} stimuli; at least {MIN_STIMULI} are needed for significance"),
            ));
        }
        if test.elided.contains(&role) {
            warnings.push((role, "source listing is elided; set may be incomplete".into()));
        }
    }
    if test.target_x.len() != test.target_y.len() {
        warnings.push((
            Role::Y,
            format!(
                "|X| = {} differs from |Y| = {}; permutation tests need equal sizes",
                test.target_x.len(),
                test.target_y.len()
            ),
        ));
    }
    ValidationReport {
        warnings,
        is_significant_capable: capable,
    }
}

/// Inputs needed to derive the non-full variants.
#[derive(Debug, Clone, Default)]
pub struct VariantInputs {
    pub vocabulary: Option<HashSet<String>>,
    pub case: CasePolicy,
    /// Applied to attributes of simplified sets when present.
    pub adjectives: Option<HashMap<String, Option<String>>>,
}

/// Derives `variant` from a full test.
pub fn build_variant(full: &BiasTest, variant: Variant, inputs: &VariantInputs) -> Result<BiasTest> {
    match variant {
        Variant::Full => Ok(full.clone()),
        Variant::Reduced => {
            let vocab = inputs.vocabulary.as_ref().ok_or_else(|| {
                Error::InvalidConfig("the reduced variant needs a vocabulary".into())
            })?;
            reduce_to_vocabulary(full, vocab, inputs.case)
        }
        Variant::Simplified => {
            let t = simplify(full)?;
            match &inputs.adjectives {
                Some(map) => attributes_to_adjectives(&t, map),
                None => Ok(t),
            }
        }
    }
}
