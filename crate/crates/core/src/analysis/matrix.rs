use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ResultTable, DEFAULT_ALPHA};
use crate::encodings::{ingest_path, CompositionMode, EncodingStore, Level};
use crate::error::{Error, Result};
use crate::methods::{
    ingest_probabilities_path, run_ceat, run_lpbs, run_lpbs_ceat, run_seat, CeatConfig,
    ContextSource, LpbsCeatConfig, LpbsConfig, Method, MethodResult, ProbabilityStore, SeatConfig,
};
use crate::stats::{PermutationConfig, PermutationMode};
use crate::testsets::{
    available_descriptors, build_variant, load_adjective_mapping, load_test, load_vocabulary,
    BiasTest, CasePolicy, DescriptorKind, TestId, Variant, VariantInputs,
};

/// An input file and the kind of contexts it was produced from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreSpec {
    pub path: PathBuf,
    pub context: ContextSource,
}

fn default_descriptors() -> Vec<DescriptorKind> {
    vec![DescriptorKind::Names, DescriptorKind::Terms]
}
fn default_contexts() -> Vec<ContextSource> {
    vec![ContextSource::Templates]
}
fn default_levels() -> Vec<Level> {
    vec![Level::Sentence, Level::Word]
}
fn default_compositions() -> Vec<CompositionMode> {
    vec![CompositionMode::Average]
}
fn default_variants() -> Vec<Variant> {
    vec![Variant::Full]
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_ceat_samples() -> usize {
    10_000
}

/// The parameter grid to evaluate, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMatrix {
    pub methods: Vec<Method>,
    pub tests: Vec<TestId>,
    #[serde(default = "default_descriptors")]
    pub descriptors: Vec<DescriptorKind>,
    #[serde(default = "default_contexts")]
    pub contexts: Vec<ContextSource>,
    #[serde(default = "default_levels")]
    pub levels: Vec<Level>,
    #[serde(default = "default_compositions")]
    pub compositions: Vec<CompositionMode>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub holm: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ceat_samples")]
    pub ceat_samples: usize,
    /// Permutation p-value mode; exact within budget, else sampled.
    #[serde(default)]
    pub permutation: Option<PermutationMode>,
    /// Token list used for the reduced variant.
    #[serde(default)]
    pub vocabulary: Option<PathBuf>,
    #[serde(default)]
    pub vocabulary_case: CasePolicy,
    /// Noun-to-adjective list applied to simplified attribute sets.
    #[serde(default)]
    pub adjectives: Option<PathBuf>,
    #[serde(default)]
    pub encodings: Vec<StoreSpec>,
    #[serde(default)]
    pub probabilities: Vec<StoreSpec>,
}

impl RunMatrix {
    pub fn from_toml(text: &str) -> Result<Self> {
        let m: RunMatrix = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    /// Reads a config file; relative paths inside it resolve against its
    /// directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut m = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        m.vocabulary.iter_mut().for_each(fix);
        m.adjectives.iter_mut().for_each(fix);
        m.encodings.iter_mut().for_each(|s| fix(&mut s.path));
        m.probabilities.iter_mut().for_each(|s| fix(&mut s.path));
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        fn check<T: PartialEq + fmt::Debug>(name: &str, v: &[T]) -> Result<()> {
            if v.is_empty() {
                return Err(Error::InvalidConfig(format!("'{name}' must not be empty")));
            }
            for (i, x) in v.iter().enumerate() {
                if v[..i].contains(x) {
                    return Err(Error::InvalidConfig(format!("'{name}' lists {x:?} twice")));
                }
            }
            Ok(())
        }
        check("methods", &self.methods)?;
        check("tests", &self.tests)?;
        check("descriptors", &self.descriptors)?;
        check("contexts", &self.contexts)?;
        check("variants", &self.variants)?;
        if self.methods.iter().any(|m| !m.uses_probabilities()) {
            check("levels", &self.levels)?;
            if self.levels.contains(&Level::Word) {
                check("compositions", &self.compositions)?;
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if self.ceat_samples < 2 {
            return Err(Error::InvalidConfig("ceat_samples must be at least 2".into()));
        }
        if self.variants.contains(&Variant::Reduced) && self.vocabulary.is_none() {
            return Err(Error::InvalidConfig("the reduced variant needs 'vocabulary'".into()));
        }
        Ok(())
    }

    fn permutation_config(&self) -> PermutationConfig {
        PermutationConfig {
            mode: self.permutation.unwrap_or(PermutationConfig::default().mode),
            seed: self.seed,
        }
    }
}

/// One point of the parameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Cell {
    pub method: Method,
    pub test: TestId,
    pub descriptor: DescriptorKind,
    pub context: ContextSource,
    pub level: Option<Level>,
    pub composition: Option<CompositionMode>,
    pub variant: Variant,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dash = |o: Option<String>| o.unwrap_or_else(|| "-".into());
        write!(
            f,
            "{} {} {} {} {} {} {}",
            self.method,
            self.test,
            self.descriptor,
            self.context,
            dash(self.level.map(|l| l.to_string())),
            dash(self.composition.map(|c| c.to_string())),
            self.variant
        )
    }
}

/// (level, composition) choices a method supports within the requested ones.
fn level_options(method: Method, m: &RunMatrix) -> Vec<(Option<Level>, Option<CompositionMode>)> {
    let word = m.levels.contains(&Level::Word);
    let sentence = m.levels.contains(&Level::Sentence);
    let words = || m.compositions.iter().map(|&c| (Some(Level::Word), Some(c)));
    match method {
        Method::SSeat if sentence => vec![(Some(Level::Sentence), None)],
        Method::WSeat if word => words().collect(),
        Method::Ceat => {
            let mut v: Vec<_> = if word { words().collect() } else { Vec::new() };
            if sentence {
                v.push((Some(Level::Sentence), None));
            }
            v
        }
        Method::Lpbs | Method::LpbsCeat => vec![(None, None)],
        _ => Vec::new(),
    }
}

/// Feasible cells in grid order, and a note for everything pruned.
pub fn feasible_cells(m: &RunMatrix) -> (Vec<Cell>, Vec<String>) {
    let mut cells = Vec::new();
    let mut pruned = Vec::new();
    for &method in &m.methods {
        let options = level_options(method, m);
        if options.is_empty() {
            pruned.push(format!("{method}: no requested level applies"));
            continue;
        }
        if method.uses_probabilities() && !m.levels.is_empty() {
            pruned.push(format!(
                "{method}: uses probabilities, levels and compositions do not apply"
            ));
        }
        if method == Method::SSeat && m.levels.contains(&Level::Word) {
            pruned.push(format!("{method}: word level belongs to {}", Method::WSeat));
        }
        if method == Method::WSeat && m.levels.contains(&Level::Sentence) {
            pruned.push(format!("{method}: sentence level belongs to {}", Method::SSeat));
        }
        for &test in &m.tests {
            let available = available_descriptors(test);
            for &descriptor in &m.descriptors {
                if !available.contains(&descriptor) {
                    pruned.push(format!("{method} {test} {descriptor}: no such word sets"));
                    continue;
                }
                for &context in &m.contexts {
                    for &(level, composition) in &options {
                        for &variant in &m.variants {
                            cells.push(Cell {
                                method,
                                test,
                                descriptor,
                                context,
                                level,
                                composition,
                                variant,
                            });
                        }
                    }
                }
            }
        }
    }
    for p in &pruned {
        log::info!("pruned {p}");
    }
    (cells, pruned)
}

/// Feasible cells with their word sets.
#[derive(Debug, Clone)]
pub struct Plan {
    pub cells: Vec<(Cell, BiasTest)>,
    pub pruned: Vec<String>,
}

/// Resolves each cell's word-set variant; variants that cannot be built
/// (no simplified sets, nothing left after reduction) are pruned.
pub fn plan(m: &RunMatrix) -> Result<Plan> {
    m.validate()?;
    let (cells, mut pruned) = feasible_cells(m);
    let inputs = VariantInputs {
        vocabulary: match &m.vocabulary {
            Some(p) if m.variants.contains(&Variant::Reduced) => Some(load_vocabulary(p)?),
            _ => None,
        },
        case: m.vocabulary_case,
        adjectives: m.adjectives.as_ref().map(load_adjective_mapping).transpose()?,
    };
    let mut built: BTreeMap<(TestId, DescriptorKind, Variant), Option<BiasTest>> = BTreeMap::new();
    let mut out = Vec::new();
    for cell in cells {
        let key = (cell.test, cell.descriptor, cell.variant);
        if !built.contains_key(&key) {
            let full = load_test(cell.test, cell.descriptor)?;
            let made = build_variant(&full, cell.variant, &inputs);
            let entry = match made {
                Ok(t) => Some(t),
                Err(e @ (Error::EmptySet { .. } | Error::NoSimplifiedVariant(_))) => {
                    let note = format!("{} {} {}: {e}", cell.test, cell.descriptor, cell.variant);
                    log::info!("pruned {note}");
                    pruned.push(note);
                    None
                }
                Err(e) => return Err(e),
            };
            built.insert(key, entry);
        }
        if let Some(t) = &built[&key] {
            out.push((cell, t.clone()));
        }
    }
    Ok(Plan { cells: out, pruned })
}

/// Loaded inputs, each tagged with its context source.
#[derive(Debug, Default)]
pub struct Stores {
    pub encodings: Vec<(ContextSource, EncodingStore)>,
    pub probabilities: Vec<(ContextSource, ProbabilityStore)>,
}

impl Stores {
    pub fn load(m: &RunMatrix) -> Result<Self> {
        let mut s = Stores::default();
        for spec in &m.encodings {
            s.encodings.push((spec.context, ingest_path(&spec.path)?));
        }
        for spec in &m.probabilities {
            s.probabilities.push((spec.context, ingest_probabilities_path(&spec.path)?));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellTiming {
    pub cell: String,
    pub model: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct MatrixRun {
    pub table: ResultTable,
    /// Wall-clock per cell, in table row order.
    pub timings: Vec<CellTiming>,
    pub pruned: Vec<String>,
}

enum Source<'a> {
    Vectors(&'a EncodingStore),
    Probabilities(&'a ProbabilityStore),
}

fn missing_for(cell: &Cell, test: &BiasTest, source: &Source<'_>) -> Vec<String> {
    let mut out = Vec::new();
    match source {
        Source::Vectors(store) => {
            let level = cell.level.expect("vector cells have a level");
            for (role, s) in test.stimuli() {
                if store.contexts(test.id, role, s.text(), level).is_empty() {
                    out.push(format!("{cell}: no {level} encodings for {role} {:?}", s.text()));
                }
            }
        }
        Source::Probabilities(store) => {
            for a in test.attr_a.iter().chain(&test.attr_b) {
                for t in test.target_x.iter().chain(&test.target_y) {
                    if store.contexts(test.id, t.text(), a.text()).is_empty() {
                        out.push(format!(
                            "{cell}: no probabilities for target {:?} with attribute {:?}",
                            t.text(),
                            a.text()
                        ));
                    }
                }
            }
        }
    }
    out
}

fn run_cell(m: &RunMatrix, cell: &Cell, test: &BiasTest, source: &Source<'_>) -> Result<MethodResult> {
    match (cell.method, source) {
        (Method::SSeat | Method::WSeat, Source::Vectors(store)) => {
            let level = cell.level.expect("vector cells have a level");
            let cfg = SeatConfig {
                level,
                composition: cell.composition.unwrap_or(CompositionMode::Average),
                permutation: m.permutation_config(),
                context: cell.context,
                ..Default::default()
            };
            run_seat(store, test, &cfg)
        }
        (Method::Ceat, Source::Vectors(store)) => {
            let cfg = CeatConfig {
                level: cell.level.expect("vector cells have a level"),
                composition: cell.composition.unwrap_or(CompositionMode::Average),
                n_samples: m.ceat_samples,
                seed: m.seed,
                context: cell.context,
            };
            Ok(run_ceat(store, test, &cfg)?.result)
        }
        (Method::Lpbs, Source::Probabilities(store)) => {
            let cfg = LpbsConfig {
                permutation: m.permutation_config(),
                context: cell.context,
            };
            run_lpbs(store, test, &cfg)
        }
        (Method::LpbsCeat, Source::Probabilities(store)) => {
            let cfg = LpbsCeatConfig {
                n_samples: m.ceat_samples,
                seed: m.seed,
                context: cell.context,
            };
            Ok(run_lpbs_ceat(store, test, &cfg)?.result)
        }
        _ => unreachable!("sources are matched to methods when jobs are built"),
    }
}

/// Runs every feasible cell against every store of its context source.
///
/// Coverage is checked for all cells before anything is computed; cells
/// then run in parallel and rows come back in grid order.
pub fn run_matrix(m: &RunMatrix, stores: &Stores) -> Result<MatrixRun> {
    let plan = plan(m)?;
    let mut jobs = Vec::new();
    let mut missing = Vec::new();
    for (cell, test) in &plan.cells {
        let sources: Vec<Source<'_>> = if cell.method.uses_probabilities() {
            stores
                .probabilities
                .iter()
                .filter(|(c, _)| *c == cell.context)
                .map(|(_, s)| Source::Probabilities(s))
                .collect()
        } else {
            stores
                .encodings
                .iter()
                .filter(|(c, _)| *c == cell.context)
                .map(|(_, s)| Source::Vectors(s))
                .collect()
        };
        if sources.is_empty() {
            let kind = if cell.method.uses_probabilities() { "probability" } else { "encoding" };
            missing.push(format!("{cell}: no {kind} input for {} contexts", cell.context));
        }
        for source in sources {
            missing.extend(missing_for(cell, test, &source));
            jobs.push((cell, test, source));
        }
    }
    if !missing.is_empty() {
        log::error!("{} coverage gaps; nothing was computed", missing.len());
        return Err(Error::Coverage(missing));
    }
    log::info!("running {} cells", jobs.len());
    let done: Vec<(MethodResult, CellTiming)> = jobs
        .par_iter()
        .map(|(cell, test, source)| {
            let start = Instant::now();
            let r = run_cell(m, cell, test, source).map_err(|e| {
                log::error!("{cell}: {e}");
                e
            })?;
            let timing = CellTiming {
                cell: cell.to_string(),
                model: r.model.clone(),
                seconds: start.elapsed().as_secs_f64(),
            };
            Ok((r, timing))
        })
        .collect::<Result<_>>()?;
    let (rows, timings) = done.into_iter().unzip();
    Ok(MatrixRun {
        table: ResultTable::new(rows, m.alpha, m.holm)?,
        timings,
        pruned: plan.pruned,
    })
}

pub fn write_timings(timings: &[CellTiming], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in timings {
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}
