use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, ContextInstance, Provenance, Span};
use crate::error::{Error, Result};
use crate::testsets::{BiasTest, Role, Stimulus, TestId};

pub const TARGET_PLACEHOLDER: &str = "TTT";
pub const ATTRIBUTE_PLACEHOLDER: &str = "AAA";

const DEFAULT_TEMPLATES: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/data/templates/default_templates.jsonl"
));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateMode {
    SingleTarget,
    SingleAttribute,
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpansionMode {
    Singles,
    Doubles,
}

impl std::str::FromStr for ExpansionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "singles" => Ok(ExpansionMode::Singles),
            "doubles" => Ok(ExpansionMode::Doubles),
            _ => Err(Error::InvalidInput(format!("unknown expansion mode '{s}'"))),
        }
    }
}

/// A carrier sentence with `TTT`/`AAA` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub id: u64,
    pub text: String,
    pub mode: TemplateMode,
    /// Rejects multiword stimuli in this template.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub single_token: bool,
}

impl Template {
    pub fn new(id: u64, text: impl Into<String>, mode: TemplateMode) -> Result<Self> {
        let t = Template {
            id,
            text: text.into(),
            mode,
            single_token: false,
        };
        t.check()?;
        Ok(t)
    }

    /// Placeholders must be whole tokens, with the arity the mode demands.
    pub fn check(&self) -> Result<()> {
        let err = |message: String| Error::Template {
            id: self.id,
            message,
        };
        let toks = tokenize(&self.text);
        for ph in [TARGET_PLACEHOLDER, ATTRIBUTE_PLACEHOLDER] {
            let raw = self.text.matches(ph).count();
            let whole = toks.iter().filter(|t| t.text == ph).count();
            if raw != whole {
                return Err(err(format!("placeholder {ph} is not a whole word")));
            }
        }
        let n_t = toks.iter().filter(|t| t.text == TARGET_PLACEHOLDER).count();
        let n_a = toks.iter().filter(|t| t.text == ATTRIBUTE_PLACEHOLDER).count();
        let want = match self.mode {
            TemplateMode::SingleTarget => (1, 0),
            TemplateMode::SingleAttribute => (0, 1),
            TemplateMode::Double => (1, 1),
        };
        if (n_t, n_a) != want {
            return Err(err(format!(
                "{:?} template needs {} TTT and {} AAA, found {n_t} and {n_a}",
                self.mode, want.0, want.1
            )));
        }
        Ok(())
    }

    fn fits(&self, mode: ExpansionMode) -> bool {
        match mode {
            ExpansionMode::Singles => self.mode != TemplateMode::Double,
            ExpansionMode::Doubles => self.mode == TemplateMode::Double,
        }
    }

    /// Substitutes stimuli and locates their spans.
    fn fill(&self, target: Option<(Role, &Stimulus)>, attr: Option<(Role, &Stimulus)>) -> (String, Vec<Span>) {
        let mut text = String::with_capacity(self.text.len() + 32);
        let mut marks: Vec<(usize, usize, Role, &str)> = Vec::new();
        let mut last = 0;
        for t in tokenize(&self.text) {
            let sub = match t.text {
                TARGET_PLACEHOLDER => target,
                ATTRIBUTE_PLACEHOLDER => attr,
                _ => None,
            };
            if let Some((role, s)) = sub {
                text.push_str(&self.text[last..t.start]);
                let begin = text.len();
                text.push_str(s.text());
                marks.push((begin, text.len(), role, s.text()));
                last = t.end;
            }
        }
        text.push_str(&self.text[last..]);
        let toks = tokenize(&text);
        let spans = marks
            .into_iter()
            .map(|(b, e, role, stimulus)| {
                let start = toks.iter().position(|t| t.start >= b).unwrap_or(toks.len());
                let end = toks.iter().position(|t| t.start >= e).unwrap_or(toks.len());
                Span {
                    role,
                    stimulus: stimulus.to_string(),
                    start,
                    end,
                }
            })
            .collect();
        (text, spans)
    }
}

pub fn parse_templates(reader: impl BufRead) -> Result<Vec<Template>> {
    let mut out: Vec<Template> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Template = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        t.check()?;
        if out.iter().any(|o| o.id == t.id) {
            return Err(Error::Template {
                id: t.id,
                message: "duplicate template id".into(),
            });
        }
        out.push(t);
    }
    Ok(out)
}

pub fn read_templates(path: impl AsRef<Path>) -> Result<Vec<Template>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    parse_templates(std::io::BufReader::new(file))
}

/// The bundled semantically bleached templates.
pub fn default_templates() -> Vec<Template> {
    parse_templates(DEFAULT_TEMPLATES.as_bytes()).expect("bundled templates are valid")
}

fn compatible(templates: &[Template], mode: ExpansionMode) -> Vec<&Template> {
    templates.iter().filter(|t| t.fits(mode)).collect()
}

/// Number of instances `expand_templates` yields.
pub fn expansion_count(templates: &[Template], test: &BiasTest, mode: ExpansionMode) -> usize {
    let targets = test.target_x.len() + test.target_y.len();
    let attrs = test.attr_a.len() + test.attr_b.len();
    compatible(templates, mode)
        .iter()
        .map(|t| match t.mode {
            TemplateMode::SingleTarget => targets,
            TemplateMode::SingleAttribute => attrs,
            TemplateMode::Double => targets * attrs,
        })
        .sum()
}

/// Substitutes every stimulus into every compatible template.
///
/// Order: templates in the given order; within a template X, Y (targets) or
/// A, B (attributes), and for doubles each target against every attribute.
/// Context ids count up from 0 in emission order.
pub fn expand_templates<'a>(
    templates: &'a [Template],
    test: &'a BiasTest,
    mode: ExpansionMode,
) -> Result<impl Iterator<Item = ContextInstance> + 'a> {
    let chosen = compatible(templates, mode);
    if chosen.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no {mode:?} templates among {} supplied",
            templates.len()
        )));
    }
    for t in &chosen {
        t.check()?;
        if t.single_token {
            let roles: &[Role] = match t.mode {
                TemplateMode::SingleTarget => &[Role::X, Role::Y],
                TemplateMode::SingleAttribute => &[Role::A, Role::B],
                TemplateMode::Double => &Role::ALL,
            };
            for &r in roles {
                if let Some(s) = test.set(r).iter().find(|s| s.is_multiword()) {
                    return Err(Error::Template {
                        id: t.id,
                        message: format!("multiword stimulus {:?} in a single-token template", s.text()),
                    });
                }
            }
        }
    }
    let targets: Vec<(Role, &Stimulus)> = [Role::X, Role::Y]
        .into_iter()
        .flat_map(|r| test.set(r).iter().map(move |s| (r, s)))
        .collect();
    let attrs: Vec<(Role, &Stimulus)> = [Role::A, Role::B]
        .into_iter()
        .flat_map(|r| test.set(r).iter().map(move |s| (r, s)))
        .collect();
    let id: TestId = test.id;
    let mut next_id = 0u64;
    Ok(chosen
        .into_iter()
        .flat_map(move |t| {
            let fills: Vec<(Option<(Role, &Stimulus)>, Option<(Role, &Stimulus)>)> = match t.mode {
                TemplateMode::SingleTarget => targets.iter().map(|&s| (Some(s), None)).collect(),
                TemplateMode::SingleAttribute => attrs.iter().map(|&s| (None, Some(s))).collect(),
                TemplateMode::Double => targets
                    .iter()
                    .flat_map(|&x| attrs.iter().map(move |&a| (Some(x), Some(a))))
                    .collect(),
            };
            fills.into_iter().map(move |(tg, at)| (t, tg, at))
        })
        .map(move |(t, tg, at)| {
            let (text, spans) = t.fill(tg, at);
            let inst = ContextInstance {
                test: id,
                context_id: next_id,
                sentence: super::tokens(&text),
                text,
                spans,
                provenance: Provenance::Template { template_id: t.id },
            };
            next_id += 1;
            inst
        }))
}
