//! A small parameter matrix over synthetic encodings, then a report.

use biasbench::analysis::{emit_report, run_matrix, ReportFormat, RunMatrix, StoreSpec, Stores};
use biasbench::encodings::{write_jsonl, EncodingStore};
use biasbench::methods::ContextSource;
use biasbench::synthetic::{planted_bias, planted_probabilities, SyntheticConfig};
use biasbench::testsets::{load_test, DescriptorKind, TestId};

fn main() -> biasbench::Result<()> {
    let dir = tempfile::tempdir()?;
    let enc = dir.path().join("enc.jsonl");
    let probs = dir.path().join("probs.jsonl");
    let mut enc_out = std::fs::File::create(&enc)?;
    let mut probs_out = std::fs::File::create(&probs)?;
    for d in [DescriptorKind::Names, DescriptorKind::Terms] {
        let test = load_test(TestId::C6, d)?;
        let store = planted_bias(&test, &SyntheticConfig::default())?;
        // Both descriptors share the attribute sets; write those once.
        let keep = store
            .records()
            .filter(|r| d == DescriptorKind::Names || r.role.is_target());
        write_jsonl(&EncodingStore::from_records(keep)?, &mut enc_out)?;
        planted_probabilities(&test, 4, 2.0, 0.2, 3)?.write_jsonl(&mut probs_out)?;
    }
    drop((enc_out, probs_out));

    let toml = format!(
        r#"
methods = ["s_seat", "w_seat", "ceat", "lpbs"]
tests = ["C6"]
descriptors = ["names", "terms"]
levels = ["sentence", "word"]
compositions = ["average", "last"]
ceat_samples = 500
holm = true

[[encodings]]
path = "{}"
context = "templates"

[[probabilities]]
path = "{}"
context = "templates"
"#,
        enc.display(),
        probs.display()
    );
    let mut m = RunMatrix::from_toml(&toml)?;
    // The corpus cells read the same synthetic data here.
    m.encodings.push(StoreSpec {
        path: enc.clone(),
        context: ContextSource::Corpus,
    });
    m.probabilities.push(StoreSpec {
        path: probs.clone(),
        context: ContextSource::Corpus,
    });
    m.contexts = vec![ContextSource::Templates, ContextSource::Corpus];
    let run = run_matrix(&m, &Stores::load(&m)?)?;
    for note in &run.pruned {
        println!("pruned: {note}");
    }
    for t in &run.timings {
        println!("{:<60} {:.3}s", t.cell.to_string(), t.seconds);
    }
    let out = dir.path().join("report.md");
    emit_report(&run.table, ReportFormat::Markdown, &out)?;
    print!("{}", std::fs::read_to_string(&out)?);
    Ok(())
}
