use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use biasbench::analysis::{
    correlate_methods, correlation_matrix, emit_report, read_results_path, run_matrix,
    write_results_jsonl, write_timings, CorrelationFilter, MatchKey, ReportFormat, ResultTable,
    RunMatrix, Stores, DEFAULT_ALPHA,
};
use biasbench::contextgen::{
    default_templates, expand_templates, read_templates, sample_corpus_files, write_instances,
    CorpusConfig, ExpansionMode, SampleKind,
};
use biasbench::encodings::{ingest_path, CompositionMode, Level};
use biasbench::methods::{
    ingest_probabilities_path, run_ceat, run_lpbs, run_lpbs_ceat, run_seat, CeatConfig,
    ContextSource, LpbsCeatConfig, LpbsConfig, Method, SeatConfig,
};
use biasbench::stats::{selftest, PermutationConfig, PermutationMode, DEFAULT_EXACT_BUDGET};
use biasbench::testsets::{
    build_variant, load_adjective_mapping, load_test, load_vocabulary, serialize_test, validate,
    BiasTest, CasePolicy, DescriptorKind, TestId, Variant, VariantInputs,
};
use biasbench::{Error, Result};

#[derive(Parser)]
#[command(name = "biasbench", version, about = "WEAT-family bias tests over exported encodings and probabilities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect and transform word sets.
    #[command(subcommand)]
    Wordset(WordsetCmd),
    /// Build contexts from templates or a corpus.
    #[command(subcommand)]
    Context(ContextCmd),
    /// Statistics checks.
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Run one method on one test.
    Run(RunArgs),
    /// Run a parameter matrix from a TOML config.
    Matrix(MatrixArgs),
    /// Pearson correlations between methods.
    Correlate(CorrelateArgs),
    /// Render results as a report.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct TestSel {
    #[arg(long)]
    test: TestId,
    #[arg(long, default_value = "names")]
    descriptor: DescriptorKind,
}

#[derive(Args, Clone)]
struct VariantSel {
    #[arg(long, default_value = "full")]
    variant: VariantArg,
    /// Vocabulary file, one token per line (reduced variant).
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Compare against the vocabulary in lowercase.
    #[arg(long)]
    lowercase: bool,
    /// Noun-to-adjective list for simplified attribute sets.
    #[arg(long)]
    adjectives: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum VariantArg {
    Full,
    Reduced,
    Simplified,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::Reduced => Variant::Reduced,
            VariantArg::Simplified => Variant::Simplified,
        }
    }
}

impl VariantSel {
    fn build(&self, sel: &TestSel) -> Result<BiasTest> {
        let inputs = VariantInputs {
            vocabulary: self.vocab.as_ref().map(load_vocabulary).transpose()?,
            case: if self.lowercase { CasePolicy::Lowercase } else { CasePolicy::Preserve },
            adjectives: self.adjectives.as_ref().map(load_adjective_mapping).transpose()?,
        };
        build_variant(&load_test(sel.test, sel.descriptor)?, self.variant.into(), &inputs)
    }
}

#[derive(Subcommand)]
enum WordsetCmd {
    /// Print a registered test.
    Show {
        #[command(flatten)]
        sel: TestSel,
        #[command(flatten)]
        variant: VariantSel,
    },
    /// Reduce to single vocabulary tokens.
    Reduce {
        #[command(flatten)]
        sel: TestSel,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        lowercase: bool,
    },
    /// Swap in the short target proxies.
    Simplify {
        #[command(flatten)]
        sel: TestSel,
        #[arg(long)]
        adjectives: Option<PathBuf>,
    },
    /// Report warnings about set sizes and elided listings.
    Validate {
        #[command(flatten)]
        sel: TestSel,
        #[command(flatten)]
        variant: VariantSel,
    },
}

#[derive(Subcommand)]
enum ContextCmd {
    /// Substitute stimuli into templates.
    Expand {
        #[command(flatten)]
        sel: TestSel,
        #[command(flatten)]
        variant: VariantSel,
        #[arg(long, default_value = "singles")]
        mode: ExpansionMode,
        /// Template JSONL; the bundled set when omitted.
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample sentences containing stimuli from corpus files.
    Sample {
        #[command(flatten)]
        sel: TestSel,
        #[command(flatten)]
        variant: VariantSel,
        #[arg(long, default_value = "singles")]
        mode: ExpansionMode,
        #[arg(long, required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        max_per_stimulus: usize,
        /// Words kept on each side of a single.
        #[arg(long, default_value_t = 4)]
        window: usize,
        /// Keep whole sentences for singles.
        #[arg(long)]
        no_window: bool,
        #[arg(long, default_value_t = 18)]
        max_gap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Check the statistics core against hand-computed cases.
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    method: Method,
    #[command(flatten)]
    sel: TestSel,
    #[command(flatten)]
    variant: VariantSel,
    #[arg(long, default_value = "templates")]
    context: ContextSource,
    #[arg(long, default_value = "sentence")]
    level: Level,
    #[arg(long, default_value = "avg")]
    composition: CompositionMode,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Encoding JSONL (cosine methods).
    #[arg(long)]
    encodings: Option<PathBuf>,
    /// Probability JSONL (LPBS methods).
    #[arg(long)]
    probs: Option<PathBuf>,
    /// Samples for CEAT and LPBS x CEAT.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Permutations when the exact test is over budget.
    #[arg(long, default_value_t = 100_000)]
    permutations: usize,
    /// Result JSONL; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-sample effect sizes and weights (CEAT methods), as CSV.
    #[arg(long)]
    samples_out: Option<PathBuf>,
}

#[derive(Args)]
struct MatrixArgs {
    #[arg(long)]
    config: PathBuf,
    /// Result JSONL; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-cell wall-clock CSV.
    #[arg(long)]
    timings: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    /// Results as JSONL or a CSV report.
    #[arg(long)]
    results: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Holm-Bonferroni significance over all rows with a p-value.
    #[arg(long)]
    holm: bool,
}

impl TableArgs {
    fn load(&self) -> Result<ResultTable> {
        ResultTable::new(read_results_path(&self.results)?, self.alpha, self.holm)
    }
}

#[derive(Args)]
struct CorrelateArgs {
    #[command(flatten)]
    table: TableArgs,
    #[arg(long, default_value = "all")]
    filter: CorrelationFilter,
    /// Restrict to one method pair (needs --m2).
    #[arg(long, requires = "m2")]
    m1: Option<Method>,
    #[arg(long, requires = "m1")]
    m2: Option<Method>,
    /// Also require equal context sources when pairing.
    #[arg(long)]
    match_context: bool,
    /// Also require equal levels when pairing.
    #[arg(long)]
    match_level: bool,
    /// Also require equal compositions when pairing.
    #[arg(long)]
    match_composition: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    table: TableArgs,
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
    #[arg(long)]
    out: PathBuf,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", p.display()))))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn wordset(cmd: WordsetCmd) -> Result<()> {
    let mut out = io::stdout().lock();
    match cmd {
        WordsetCmd::Show { sel, variant } => {
            write!(out, "{}", serialize_test(&variant.build(&sel)?))?;
        }
        WordsetCmd::Reduce { sel, vocab, lowercase } => {
            let v = VariantSel {
                variant: VariantArg::Reduced,
                vocab: Some(vocab),
                lowercase,
                adjectives: None,
            };
            write!(out, "{}", serialize_test(&v.build(&sel)?))?;
        }
        WordsetCmd::Simplify { sel, adjectives } => {
            let v = VariantSel {
                variant: VariantArg::Simplified,
                vocab: None,
                lowercase: false,
                adjectives,
            };
            write!(out, "{}", serialize_test(&v.build(&sel)?))?;
        }
        WordsetCmd::Validate { sel, variant } => {
            let report = validate(&variant.build(&sel)?);
            for (role, w) in &report.warnings {
                writeln!(out, "warning {role}: {w}")?;
            }
            writeln!(out, "significance-capable: {}", report.is_significant_capable)?;
        }
    }
    Ok(())
}

fn context(cmd: ContextCmd) -> Result<()> {
    match cmd {
        ContextCmd::Expand { sel, variant, mode, templates, out } => {
            let test = variant.build(&sel)?;
            let templates = match templates {
                Some(p) => read_templates(p)?,
                None => default_templates(),
            };
            let instances: Vec<_> = expand_templates(&templates, &test, mode)?.collect();
            log::info!("expanded {} contexts", instances.len());
            let mut w = output(out.as_deref())?;
            write_instances(&instances, &mut w)?;
            w.flush()?;
        }
        ContextCmd::Sample {
            sel,
            variant,
            mode,
            corpus,
            max_per_stimulus,
            window,
            no_window,
            max_gap,
            seed,
            out,
        } => {
            let test = variant.build(&sel)?;
            let cfg = CorpusConfig {
                max_per_stimulus,
                window_k: window,
                window: !no_window,
                max_gap,
                seed,
                case: if variant.lowercase { CasePolicy::Lowercase } else { CasePolicy::Preserve },
            };
            let kind = match mode {
                ExpansionMode::Singles => SampleKind::Singles,
                ExpansionMode::Doubles => SampleKind::Doubles,
            };
            let instances = sample_corpus_files(&corpus, &test, kind, &cfg)?;
            let mut w = output(out.as_deref())?;
            write_instances(&instances, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn stats(cmd: StatsCmd) -> Result<bool> {
    match cmd {
        StatsCmd::Selftest => {
            let checks = selftest::run();
            let mut out = io::stdout().lock();
            for c in &checks {
                writeln!(
                    out,
                    "{} {}: expected {} got {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.expected,
                    c.actual
                )?;
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn run(a: RunArgs) -> Result<()> {
    let test = a.variant.build(&a.sel)?;
    let permutation = PermutationConfig {
        mode: PermutationMode::Auto {
            budget: DEFAULT_EXACT_BUDGET as u64,
            n: a.permutations,
        },
        seed: a.seed,
    };
    let need = |p: &Option<PathBuf>, flag: &str| {
        p.clone()
            .ok_or_else(|| Error::InvalidInput(format!("--method {} needs {flag}", a.method)))
    };
    let mut ces = None;
    let result = match a.method {
        Method::SSeat | Method::WSeat => {
            let level = if a.method == Method::SSeat { Level::Sentence } else { Level::Word };
            if a.level != level {
                log::info!("{} runs at {level} level", a.method);
            }
            let store = ingest_path(need(&a.encodings, "--encodings")?)?;
            let cfg = SeatConfig {
                level,
                composition: a.composition,
                permutation,
                context: a.context,
                ..Default::default()
            };
            run_seat(&store, &test, &cfg)?
        }
        Method::Ceat => {
            let store = ingest_path(need(&a.encodings, "--encodings")?)?;
            let cfg = CeatConfig {
                level: a.level,
                composition: a.composition,
                n_samples: a.samples,
                seed: a.seed,
                context: a.context,
            };
            let c = run_ceat(&store, &test, &cfg)?;
            let r = c.result.clone();
            ces = Some(c);
            r
        }
        Method::Lpbs => {
            let store = ingest_probabilities_path(need(&a.probs, "--probs")?)?;
            run_lpbs(&store, &test, &LpbsConfig { permutation, context: a.context })?
        }
        Method::LpbsCeat => {
            let store = ingest_probabilities_path(need(&a.probs, "--probs")?)?;
            let cfg = LpbsCeatConfig {
                n_samples: a.samples,
                seed: a.seed,
                context: a.context,
            };
            let c = run_lpbs_ceat(&store, &test, &cfg)?;
            let r = c.result.clone();
            ces = Some(c);
            r
        }
    };
    if let (Some(path), Some(c)) = (&a.samples_out, &ces) {
        let mut w = output(Some(path))?;
        c.write_samples(&mut w)?;
        w.flush()?;
    }
    let table = ResultTable::new(vec![result], a.alpha, false)?;
    log::info!(
        "effect size {:.4}, p {:.4}, significant at {}: {}",
        table.rows[0].effect_size,
        table.rows[0].p_value,
        a.alpha,
        table.flags()[0]
    );
    let mut w = output(a.out.as_deref())?;
    write_results_jsonl(&table.rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn matrix(a: MatrixArgs) -> Result<()> {
    let m = RunMatrix::from_path(&a.config)?;
    let stores = Stores::load(&m)?;
    let run = run_matrix(&m, &stores)?;
    let mut w = output(a.out.as_deref())?;
    write_results_jsonl(&run.table.rows, &mut w)?;
    w.flush()?;
    if let Some(p) = &a.timings {
        write_timings(&run.timings, output(Some(p))?)?;
    }
    Ok(())
}

fn correlate(a: CorrelateArgs) -> Result<()> {
    let table = a.table.load()?;
    let key = MatchKey {
        context: a.match_context,
        level: a.match_level,
        composition: a.match_composition,
    };
    let mut out = io::stdout().lock();
    writeln!(out, "model,m1,m2,filter,pairs,r")?;
    let rows = match (a.m1, a.m2) {
        (Some(m1), Some(m2)) => vec![(None, correlate_methods(&table, m1, m2, a.filter, key)?)],
        _ => correlation_matrix(&table, a.filter, key)?,
    };
    for (model, c) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            model.as_deref().unwrap_or(""),
            c.m1,
            c.m2,
            match c.filter {
                CorrelationFilter::All => "all",
                CorrelationFilter::SignificantOnly => "sig",
            },
            c.pairs,
            c.display_value()
        )?;
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let table = a.table.load()?;
    for p in emit_report(&table, a.format, &a.out)? {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Wordset(c) => wordset(c),
        Command::Context(c) => context(c),
        Command::Stats(c) => match stats(c) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(4),
            Err(e) => Err(e),
        },
        Command::Run(a) => run(a),
        Command::Matrix(a) => matrix(a),
        Command::Correlate(a) => correlate(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            if let Error::Coverage(items) | Error::UnequalContexts(items) = &e {
                for i in items {
                    eprintln!("  {i}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
