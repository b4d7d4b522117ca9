//! Parameter matrices, inter-method correlation and report output.

mod matrix;
mod report;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encodings::{CompositionMode, Level};
use crate::error::{Error, Result};
use crate::methods::{ContextSource, Method, MethodResult};
use crate::stats::{holm_bonferroni, PKind};
use crate::testsets::{DescriptorKind, TestId, Variant};

pub use matrix::{
    feasible_cells, plan, run_matrix, write_timings, Cell, CellTiming, MatrixRun, Plan, RunMatrix,
    StoreSpec, Stores,
};
pub use report::{emit_report, read_results_csv, ReportFormat, ReportRow, PLOT_PARAMETERS};

pub const DEFAULT_ALPHA: f64 = 0.01;

/// Fewest matched pairs a correlation is reported for; two points always
/// correlate perfectly.
pub const MIN_PAIRS: usize = 3;

/// Method results with significance computed on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<MethodResult>,
    pub alpha: f64,
    /// Judge significance with Holm's step-down over all rows with a p-value.
    pub holm: bool,
}

impl ResultTable {
    pub fn new(rows: Vec<MethodResult>, alpha: f64, holm: bool) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must be in (0, 1), got {alpha}")));
        }
        Ok(ResultTable { rows, alpha, holm })
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `p < alpha` per row; rows without a p-value use their reported flag.
    pub fn raw_flags(&self) -> Vec<bool> {
        self.rows
            .iter()
            .map(|r| {
                if r.p_value.is_nan() {
                    r.reported_significant.unwrap_or(false)
                } else {
                    r.p_value < self.alpha
                }
            })
            .collect()
    }

    /// Holm-adjusted flags; rows without a p-value keep their reported flag.
    pub fn holm_flags(&self) -> Vec<bool> {
        let idx: Vec<usize> = (0..self.rows.len())
            .filter(|&i| !self.rows[i].p_value.is_nan())
            .collect();
        let p: Vec<f64> = idx.iter().map(|&i| self.rows[i].p_value).collect();
        let adjusted = holm_bonferroni(&p, self.alpha);
        let mut flags = self.raw_flags();
        for (k, &i) in idx.iter().enumerate() {
            flags[i] = adjusted[k];
        }
        flags
    }

    /// The flags used for filtering and reports.
    pub fn flags(&self) -> Vec<bool> {
        if self.holm {
            self.holm_flags()
        } else {
            self.raw_flags()
        }
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = self.rows.iter().map(|r| r.method).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn models(&self) -> Vec<Option<String>> {
        let mut m: Vec<Option<String>> = self.rows.iter().map(|r| r.model.clone()).collect();
        m.sort();
        m.dedup();
        m
    }
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput(format!(
            "pearson needs equal lengths, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: xs.len() });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("pearson inputs must be finite".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationFilter {
    #[default]
    All,
    /// Keep pairs where both scores are significant.
    SignificantOnly,
}

impl FromStr for CorrelationFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(CorrelationFilter::All),
            "sig" | "significant" | "significant_only" => Ok(CorrelationFilter::SignificantOnly),
            _ => Err(Error::InvalidInput(format!("unknown correlation filter '{s}'"))),
        }
    }
}

/// Which parameters besides (model, test, descriptor, variant) must agree
/// for two scores to pair up. Methods differ in level and usually in
/// context source, so those are off by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchKey {
    pub context: bool,
    pub level: bool,
    pub composition: bool,
}

type Key = (
    Option<String>,
    TestId,
    DescriptorKind,
    Variant,
    Option<ContextSource>,
    Option<Option<Level>>,
    Option<Option<CompositionMode>>,
);

impl MatchKey {
    fn key(&self, r: &MethodResult) -> Key {
        (
            r.model.clone(),
            r.test,
            r.descriptor,
            r.variant,
            self.context.then_some(r.context),
            self.level.then_some(r.level),
            self.composition.then_some(r.composition),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correlation {
    pub m1: Method,
    pub m2: Method,
    pub filter: CorrelationFilter,
    /// None when too few pairs survive or a side has no variance.
    pub r: Option<f64>,
    pub pairs: usize,
}

impl Correlation {
    /// The coefficient to two decimals, or `n/a`.
    pub fn display_value(&self) -> String {
        match self.r {
            Some(r) => format!("{r:.2}"),
            None => "n/a".to_string(),
        }
    }
}

/// Matched (m1, m2) effect-size pairs, in key order, after filtering.
pub fn matched_pairs(
    table: &ResultTable,
    m1: Method,
    m2: Method,
    filter: CorrelationFilter,
    key: MatchKey,
) -> Result<Vec<(f64, f64)>> {
    pairs_for(table, &table.flags(), None, m1, m2, filter, key)
}

fn pairs_for(
    table: &ResultTable,
    flags: &[bool],
    model: Option<&Option<String>>,
    m1: Method,
    m2: Method,
    filter: CorrelationFilter,
    key: MatchKey,
) -> Result<Vec<(f64, f64)>> {
    let mut sides: [BTreeMap<Key, (f64, bool)>; 2] = Default::default();
    for (side, m) in [m1, m2].into_iter().enumerate() {
        let rows = table
            .rows
            .iter()
            .zip(flags)
            .filter(|(r, _)| r.method == m && model.is_none_or(|mo| &r.model == mo));
        let mut any = false;
        for (r, &sig) in rows {
            any = true;
            if sides[side].insert(key.key(r), (r.effect_size, sig)).is_some() {
                return Err(Error::InvalidInput(format!(
                    "several {m} rows for {} {} {} {}; add fields to the match key",
                    r.model.as_deref().unwrap_or("-"),
                    r.test,
                    r.descriptor,
                    r.variant
                )));
            }
        }
        if !any {
            return Err(Error::InvalidInput(format!("no rows for method {m}")));
        }
    }
    let [a, b] = sides;
    Ok(a.iter()
        .filter_map(|(k, &(x, sx))| b.get(k).map(|&(y, sy)| (x, sx, y, sy)))
        .filter(|&(_, sx, _, sy)| filter == CorrelationFilter::All || (sx && sy))
        .map(|(x, _, y, _)| (x, y))
        .collect())
}

fn correlation_from(pairs: &[(f64, f64)], m1: Method, m2: Method, filter: CorrelationFilter) -> Result<Correlation> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let r = if pairs.len() < MIN_PAIRS {
        None
    } else {
        match pearson(&xs, &ys) {
            Ok(r) => Some(r),
            Err(Error::DegenerateVariance) => None,
            Err(e) => return Err(e),
        }
    };
    Ok(Correlation {
        m1,
        m2,
        filter,
        r,
        pairs: pairs.len(),
    })
}

/// Pearson correlation of two methods' effect sizes over matched rows.
pub fn correlate_methods(
    table: &ResultTable,
    m1: Method,
    m2: Method,
    filter: CorrelationFilter,
    key: MatchKey,
) -> Result<Correlation> {
    correlation_from(&matched_pairs(table, m1, m2, filter, key)?, m1, m2, filter)
}

/// Every unordered pair of methods present for each model.
pub fn correlation_matrix(
    table: &ResultTable,
    filter: CorrelationFilter,
    key: MatchKey,
) -> Result<Vec<(Option<String>, Correlation)>> {
    let flags = table.flags();
    let mut out = Vec::new();
    for model in table.models() {
        let mut methods: Vec<Method> = table
            .rows
            .iter()
            .filter(|r| r.model == model)
            .map(|r| r.method)
            .collect();
        methods.sort();
        methods.dedup();
        for (i, &m1) in methods.iter().enumerate() {
            for &m2 in &methods[i + 1..] {
                let pairs = pairs_for(table, &flags, Some(&model), m1, m2, filter, key)?;
                out.push((model.clone(), correlation_from(&pairs, m1, m2, filter)?));
            }
        }
    }
    Ok(out)
}

/// Reads result JSONL or JSONL reports.
pub fn read_results_jsonl(reader: impl BufRead) -> Result<Vec<MethodResult>> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |e: serde_json::Error| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        };
        // Report rows carry significance columns; plain results do not.
        let value: serde_json::Value = serde_json::from_str(&line).map_err(parse)?;
        if value.get("significant").is_some() {
            let row: ReportRow = serde_json::from_value(value).map_err(parse)?;
            rows.push(row.into_result());
        } else {
            rows.push(serde_json::from_value(value).map_err(parse)?);
        }
    }
    Ok(rows)
}

/// Reads `.csv` report files or JSONL result files by extension.
pub fn read_results_path(path: impl AsRef<Path>) -> Result<Vec<MethodResult>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    if path.extension().is_some_and(|e| e == "csv") {
        read_results_csv(file)
    } else {
        read_results_jsonl(BufReader::new(file))
    }
}

pub fn write_results_jsonl(rows: &[MethodResult], mut out: impl Write) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// A result row for a score copied from a published table.
pub fn reported_result(
    model: &str,
    method: Method,
    test: TestId,
    descriptor: DescriptorKind,
    effect_size: f64,
    significant: bool,
) -> MethodResult {
    let (context, level) = match method {
        Method::SSeat => (ContextSource::Templates, Some(Level::Sentence)),
        Method::WSeat => (ContextSource::Templates, Some(Level::Word)),
        Method::Ceat => (ContextSource::Corpus, Some(Level::Word)),
        Method::Lpbs => (ContextSource::Templates, None),
        Method::LpbsCeat => (ContextSource::Corpus, None),
    };
    MethodResult {
        method,
        model: Some(model.to_string()),
        test,
        descriptor,
        context,
        level,
        composition: None,
        variant: Variant::Full,
        effect_size,
        p_value: f64::NAN,
        p_kind: PKind::Reported,
        n: 0,
        se: None,
        tau_sq: None,
        reported_significant: Some(significant),
    }
}
