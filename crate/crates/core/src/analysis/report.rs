use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ResultTable;
use crate::encodings::{CompositionMode, Level};
use crate::error::{Error, Result};
use crate::methods::{ContextSource, Method, MethodResult};
use crate::stats::PKind;
use crate::testsets::{DescriptorKind, TestId, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Jsonl,
    #[serde(alias = "md")]
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" => Ok(ReportFormat::Jsonl),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(Error::InvalidInput(format!("unknown report format '{s}'"))),
        }
    }
}

/// One report line; field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: Option<String>,
    pub method: Method,
    pub test: TestId,
    pub descriptor: DescriptorKind,
    pub context: ContextSource,
    pub level: Option<Level>,
    pub composition: Option<CompositionMode>,
    pub variant: Variant,
    pub effect_size: f64,
    pub p_value: Option<f64>,
    pub p_kind: PKind,
    pub n: usize,
    pub se: Option<f64>,
    pub tau_sq: Option<f64>,
    /// p below alpha, or the reported flag when there is no p-value.
    pub significant: bool,
    /// Holm-adjusted flag; empty unless the table asks for Holm.
    pub significant_holm: Option<bool>,
}

impl ReportRow {
    fn new(r: &MethodResult, significant: bool, holm: Option<bool>) -> Self {
        ReportRow {
            model: r.model.clone(),
            method: r.method,
            test: r.test,
            descriptor: r.descriptor,
            context: r.context,
            level: r.level,
            composition: r.composition,
            variant: r.variant,
            effect_size: r.effect_size,
            p_value: (!r.p_value.is_nan()).then_some(r.p_value),
            p_kind: r.p_kind,
            n: r.n,
            se: r.se,
            tau_sq: r.tau_sq,
            significant,
            significant_holm: holm,
        }
    }

    pub fn into_result(self) -> MethodResult {
        MethodResult {
            method: self.method,
            model: self.model,
            test: self.test,
            descriptor: self.descriptor,
            context: self.context,
            level: self.level,
            composition: self.composition,
            variant: self.variant,
            effect_size: self.effect_size,
            p_value: self.p_value.unwrap_or(f64::NAN),
            p_kind: self.p_kind,
            n: self.n,
            se: self.se,
            tau_sq: self.tau_sq,
            reported_significant: self.p_value.is_none().then_some(self.significant),
        }
    }
}

/// Parameters that get a plot-data file each.
pub const PLOT_PARAMETERS: [&str; 5] = ["descriptor", "context", "level", "composition", "variant"];

fn rows(table: &ResultTable) -> Vec<ReportRow> {
    let raw = table.raw_flags();
    let holm = table.holm.then(|| table.holm_flags());
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| ReportRow::new(r, raw[i], holm.as_ref().map(|h| h[i])))
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::file(path, e))?))
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_else(|| "-".into())
}

fn write_markdown(rows: &[ReportRow], mut out: impl Write) -> Result<()> {
    writeln!(
        out,
        "| model | method | test | descriptor | context | level | composition | variant | effect size | p | p kind | n | significant |"
    )?;
    writeln!(out, "|---|---|---|---|---|---|---|---|---:|---:|---|---:|---|")?;
    for r in rows {
        let sig = r.significant_holm.unwrap_or(r.significant);
        let d = if sig {
            format!("**{:.2}**", r.effect_size)
        } else {
            format!("{:.2}", r.effect_size)
        };
        let p = r.p_value.map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            opt(&r.model),
            r.method,
            r.test,
            r.descriptor,
            r.context,
            opt(&r.level),
            opt(&r.composition),
            r.variant,
            d,
            p,
            r.p_kind.as_str(),
            r.n,
            sig
        )?;
    }
    Ok(())
}

fn plot_value(r: &ReportRow, param: &str) -> String {
    match param {
        "descriptor" => r.descriptor.to_string(),
        "context" => r.context.to_string(),
        "level" => opt(&r.level),
        "composition" => opt(&r.composition),
        "variant" => r.variant.to_string(),
        _ => unreachable!("fixed parameter list"),
    }
}

#[derive(Serialize)]
struct PlotRow<'a> {
    parameter: &'a str,
    value: String,
    model: Option<&'a str>,
    method: Method,
    test: TestId,
    effect_size: f64,
    significant: bool,
}

fn write_plot(rows: &[ReportRow], param: &str, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(PlotRow {
            parameter: param,
            value: plot_value(r, param),
            model: r.model.as_deref(),
            method: r.method,
            test: r.test,
            effect_size: r.effect_size,
            significant: r.significant_holm.unwrap_or(r.significant),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the table to `out` and one `<stem>.plot.<parameter>.csv` per
/// plotted parameter next to it. Returns every path written.
pub fn emit_report(table: &ResultTable, format: ReportFormat, out: &Path) -> Result<Vec<PathBuf>> {
    if table.is_empty() {
        return Err(Error::InvalidInput("cannot report an empty table".into()));
    }
    let rows = rows(table);
    let mut w = create(out)?;
    match format {
        ReportFormat::Csv => {
            let mut c = csv::Writer::from_writer(&mut w);
            for r in &rows {
                c.serialize(r)?;
            }
            c.flush()?;
        }
        ReportFormat::Jsonl => {
            for r in &rows {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
        }
        ReportFormat::Markdown => write_markdown(&rows, &mut w)?,
    }
    w.flush().map_err(|e| Error::file(out, e))?;
    let mut written = vec![out.to_path_buf()];
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    for param in PLOT_PARAMETERS {
        let path = out.with_file_name(format!("{stem}.plot.{param}.csv"));
        let mut pw = create(&path)?;
        write_plot(&rows, param, &mut pw)?;
        pw.flush().map_err(|e| Error::file(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a CSV report back into results; rows without a p-value keep
/// their significance as a reported flag.
pub fn read_results_csv(input: impl Read) -> Result<Vec<MethodResult>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<ReportRow>()
        .map(|row| Ok(row?.into_result()))
        .collect()
}
