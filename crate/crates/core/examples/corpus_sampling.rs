//! Sampling windowed corpus sentences for singles and doubles.

use std::io::Write;

use biasbench::contextgen::{sample_corpus_files, CorpusConfig, SampleKind};
use biasbench::testsets::{load_test, DescriptorKind, TestId};

fn main() -> biasbench::Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("corpus.txt");
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "The aster bloomed by the road. Somebody said the cockroach was filthy and ugly.")?;
    writeln!(f, "A lovely clover grew where the old wall had once stood in the field.")?;
    writeln!(f, "Nobody expected the spider to be so pleasant after all those long years of waiting and watching.")?;
    drop(f);

    let test = load_test(TestId::C1, DescriptorKind::Names)?;
    let cfg = CorpusConfig {
        window_k: 3,
        ..Default::default()
    };
    let files = vec![path];
    let singles = sample_corpus_files(&files, &test, SampleKind::Singles, &cfg)?;
    println!("{} singles", singles.len());
    for s in &singles {
        println!("  {:?}", s.sentence.join(" "));
    }
    let doubles = sample_corpus_files(&files, &test, SampleKind::Doubles, &cfg)?;
    println!("{} doubles", doubles.len());
    for d in &doubles {
        println!("  {}", d.text);
    }
    Ok(())
}
