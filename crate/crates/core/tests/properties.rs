use std::collections::HashSet;
use std::io::Write;
use std::sync::Arc;

use proptest::prelude::*;

use biasbench::contextgen::{
    default_templates, expand_templates, expansion_count, sample_corpus, sample_corpus_files, window_single,
    ContextInstance, CorpusConfig, CorpusSentence, ExpansionMode, Provenance, SampleKind, Span, Template,
    TemplateMode,
};
use biasbench::methods::{combine_effects, within_sample_variance};
use biasbench::stats::{effect_size, holm_bonferroni, p_exact, test_statistic, AssociationInputs};
use biasbench::testsets::{
    load_test, reduce_to_vocabulary, registered, CasePolicy, DescriptorKind, Role, Stimulus, TestId,
};
use biasbench::Error;

fn vecs(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec(-1.0f64..1.0, dim).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3)),
        n,
    )
}

fn inputs() -> impl Strategy<Value = AssociationInputs> {
    (1usize..=5, 1usize..=4, 1usize..=4, 2usize..=6).prop_flat_map(|(n, na, nb, dim)| {
        (vecs(n, dim), vecs(n, dim), vecs(na, dim), vecs(nb, dim))
            .prop_map(|(x, y, a, b)| AssociationInputs::new(x, y, a, b).unwrap())
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn swaps_negate_statistic_and_d(inp in inputs()) {
        let s = test_statistic(&inp).unwrap();
        let Ok(d) = effect_size(&inp) else { return Ok(()) };
        for sw in [inp.swap_targets(), inp.swap_attributes()] {
            prop_assert!(close(test_statistic(&sw).unwrap(), -s));
            prop_assert!(close(effect_size(&sw).unwrap(), -d));
        }
        prop_assert!(close(test_statistic(&inp.swap_targets().swap_attributes()).unwrap(), s));
    }

    #[test]
    fn effect_size_is_bounded_by_two(inp in inputs()) {
        if let Ok(d) = effect_size(&inp) {
            prop_assert!(d.abs() <= 2.0 + 1e-12, "d = {d}");
        }
    }

    #[test]
    fn positive_rescaling_changes_nothing(inp in inputs(), c in 1e-3f64..1e3) {
        let scale = |vs: &[Vec<f64>]| vs.iter().map(|v| v.iter().map(|x| x * c).collect()).collect();
        let scaled = AssociationInputs::new(scale(&inp.x), scale(&inp.y), scale(&inp.a), scale(&inp.b)).unwrap();
        prop_assert!(close(test_statistic(&scaled).unwrap(), test_statistic(&inp).unwrap()));
        if let Ok(d) = effect_size(&inp) {
            prop_assert!(close(effect_size(&scaled).unwrap(), d));
            prop_assert_eq!(p_exact(&scaled).unwrap(), p_exact(&inp).unwrap());
        }
    }

    #[test]
    fn exact_p_is_a_probability(inp in inputs()) {
        if effect_size(&inp).is_ok() {
            let p = p_exact(&inp).unwrap();
            prop_assert!(p > 0.0 && p <= 1.0);
        }
    }

    #[test]
    fn holm_rejects_a_subset_of_raw(ps in prop::collection::vec(0.0f64..0.05, 1..20), alpha in 0.001f64..0.05) {
        let flags = holm_bonferroni(&ps, alpha);
        for (p, f) in ps.iter().zip(&flags) {
            prop_assert!(!f || *p <= alpha);
        }
        // Step-down: a rejected p implies every smaller p is rejected.
        for (i, &fi) in flags.iter().enumerate() {
            for (j, &fj) in flags.iter().enumerate() {
                if fi && ps[j] < ps[i] {
                    prop_assert!(fj, "p[{j}]={} kept while p[{i}]={} rejected", ps[j], ps[i]);
                }
            }
        }
    }

    #[test]
    fn combined_effect_stays_in_the_hull(
        ds in prop::collection::vec(-2.0f64..2.0, 2..40),
        n in 2usize..30,
    ) {
        let vs: Vec<f64> = ds.iter().map(|&d| within_sample_variance(d, n, n)).collect();
        let c = combine_effects(&ds, &vs).unwrap();
        let lo = ds.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= c.ces && c.ces <= hi);
        prop_assert!(c.tau_sq >= 0.0 && c.se > 0.0);
        prop_assert!((0.0..=1.0).contains(&c.p_two_sided));
    }

    #[test]
    fn reduction_is_idempotent_and_keeps_order(keep in prop::collection::vec(any::<bool>(), 64), id in 0usize..4) {
        let (tid, d) = [
            (TestId::C1, DescriptorKind::Names),
            (TestId::C6, DescriptorKind::Names),
            (TestId::C9, DescriptorKind::Terms),
            (TestId::Occ, DescriptorKind::Names),
        ][id];
        let full = load_test(tid, d).unwrap();
        let vocab: HashSet<String> = full
            .stimuli()
            .enumerate()
            .filter(|(i, _)| keep[i % keep.len()])
            .map(|(_, (_, s))| s.text().to_lowercase())
            .collect();
        match reduce_to_vocabulary(&full, &vocab, CasePolicy::Lowercase) {
            Ok(once) => {
                let twice = reduce_to_vocabulary(&once, &vocab, CasePolicy::Lowercase).unwrap();
                prop_assert_eq!(&twice, &once);
                prop_assert_eq!(once.target_x.len(), once.target_y.len());
                for role in Role::ALL {
                    let mut it = full.set(role).iter();
                    for s in once.set(role) {
                        prop_assert!(it.any(|f| f == s), "{} reordered", s.text());
                    }
                }
            }
            Err(e) => prop_assert!(matches!(e, Error::EmptySet { .. }), "{e}"),
        }
    }

    #[test]
    fn expansion_counts_follow_closed_forms(tt in 0usize..4, ta in 0usize..4, td in 0usize..3) {
        let mut ts = Vec::new();
        for i in 0..tt {
            ts.push(Template::new(ts.len() as u64, format!("Target {i} is TTT."), TemplateMode::SingleTarget).unwrap());
        }
        for i in 0..ta {
            ts.push(Template::new(ts.len() as u64, format!("Attribute {i} is AAA."), TemplateMode::SingleAttribute).unwrap());
        }
        for i in 0..td {
            ts.push(Template::new(ts.len() as u64, format!("TTT is {i} AAA."), TemplateMode::Double).unwrap());
        }
        for (id, d) in registered() {
            let t = load_test(id, d).unwrap();
            let nt = t.target_x.len() + t.target_y.len();
            let na = t.attr_a.len() + t.attr_b.len();
            let singles = tt * nt + ta * na;
            let doubles = td * nt * na;
            prop_assert_eq!(expansion_count(&ts, &t, ExpansionMode::Singles), singles);
            prop_assert_eq!(expansion_count(&ts, &t, ExpansionMode::Doubles), doubles);
            let produced = expand_templates(&ts, &t, ExpansionMode::Singles).map(Iterator::count);
            match produced {
                Ok(n) => prop_assert_eq!(n, singles),
                Err(_) => prop_assert_eq!(singles, 0),
            }
        }
    }

    #[test]
    fn windowing_is_idempotent(words in prop::collection::vec("[a-z]{1,6}", 1..30), pos in any::<prop::sample::Index>(), k in 1usize..8) {
        let at = pos.index(words.len());
        let inst = ContextInstance {
            test: TestId::C1,
            context_id: 0,
            text: words.join(" "),
            sentence: words.clone(),
            spans: vec![Span { role: Role::X, stimulus: words[at].clone(), start: at, end: at + 1 }],
            provenance: Provenance::Template { template_id: 0 },
        };
        let once = window_single(&inst, k).unwrap();
        prop_assert_eq!(window_single(&once, k).unwrap(), once.clone());
        prop_assert_eq!(&once.sentence[once.spans[0].start], &words[at]);
        prop_assert!(once.sentence.len() <= 2 * k + 1);
        once.check(CasePolicy::Preserve).unwrap();
    }
}

#[test]
fn template_expansion_is_span_valid_for_every_test() {
    let templates = default_templates();
    for (id, d) in registered() {
        let t = load_test(id, d).unwrap();
        for mode in [ExpansionMode::Singles, ExpansionMode::Doubles] {
            for inst in expand_templates(&templates, &t, mode).unwrap() {
                inst.check(CasePolicy::Preserve).unwrap();
            }
        }
    }
}

fn sentences(n: usize, hit: impl Fn(usize) -> bool) -> Vec<CorpusSentence> {
    let file: Arc<str> = Arc::from("synthetic");
    (0..n)
        .map(|i| CorpusSentence {
            file: file.clone(),
            file_index: 0,
            offset: i as u64,
            sentence: 0,
            text: if hit(i) {
                format!("line {i} mentions an aster today.")
            } else {
                format!("line {i} mentions nothing at all.")
            },
        })
        .collect()
}

#[test]
fn reservoir_sampling_is_uniform() {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    const OCCURRENCES: usize = 5000;
    const CAP: usize = 1000;
    const SEEDS: u64 = 200;
    const BINS: usize = 10;
    let corpus = sentences(OCCURRENCES, |_| true);
    let aster = Stimulus::new("aster").unwrap();
    let mut counts = vec![0f64; BINS];
    for seed in 0..SEEDS {
        let cfg = CorpusConfig {
            max_per_stimulus: CAP,
            seed,
            window: false,
            ..Default::default()
        };
        let got = sample_corpus(corpus.iter().cloned(), TestId::C1, Role::X, &aster, &cfg).unwrap();
        assert_eq!(got.len(), CAP);
        for inst in got {
            let Provenance::Corpus { offset, .. } = inst.provenance else { panic!() };
            counts[offset as usize * BINS / OCCURRENCES] += 1.0;
        }
    }
    let expected = (SEEDS as usize * CAP / BINS) as f64;
    let chi: f64 = counts.iter().map(|o| (o - expected).powi(2) / expected).sum();
    let crit = ChiSquared::new((BINS - 1) as f64).unwrap().inverse_cdf(0.99);
    assert!(chi < crit, "chi-square {chi} >= {crit}, counts {counts:?}");
}

#[test]
fn undersupplied_stimulus_returns_every_match() {
    let corpus = sentences(50, |i| i % 17 == 0);
    let aster = Stimulus::new("aster").unwrap();
    let got = sample_corpus(corpus, TestId::C1, Role::X, &aster, &CorpusConfig::default()).unwrap();
    assert_eq!(got.len(), 3);
}

#[test]
fn sharded_scan_equals_single_thread() {
    let dir = tempfile::tempdir().unwrap();
    let test = load_test(TestId::C1, DescriptorKind::Names).unwrap();
    let words: Vec<String> = test.stimuli().map(|(_, s)| s.text().to_string()).collect();
    let mut files = Vec::new();
    for f in 0..6 {
        let path = dir.path().join(format!("part{f}.txt"));
        let mut out = std::fs::File::create(&path).unwrap();
        for i in 0..400 {
            let a = &words[(i * 7 + f * 3) % words.len()];
            let b = &words[(i * 13 + f) % words.len()];
            writeln!(out, "Sentence {i} of part {f} puts {a} close to the word {b} here. Another one without stimuli.").unwrap();
        }
        files.push(path);
    }
    let cfg = CorpusConfig {
        max_per_stimulus: 20,
        seed: 9,
        ..Default::default()
    };
    for kind in [SampleKind::Singles, SampleKind::Doubles] {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(6).build().unwrap();
        let a = one.install(|| sample_corpus_files(&files, &test, kind, &cfg)).unwrap();
        let b = many.install(|| sample_corpus_files(&files, &test, kind, &cfg)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
        for inst in &a {
            inst.check(CasePolicy::Preserve).unwrap();
        }
    }
}

#[test]
fn corpus_singles_are_windowed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    std::fs::write(&path, "one two three four five six aster seven eight nine ten eleven twelve.\n").unwrap();
    let test = load_test(TestId::C1, DescriptorKind::Names).unwrap();
    let files = [path];
    let got = sample_corpus_files(&files, &test, SampleKind::Singles, &CorpusConfig::default()).unwrap();
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].text, "three four five six aster seven eight nine ten");
    let whole = CorpusConfig {
        window: false,
        ..Default::default()
    };
    let got = sample_corpus_files(&files, &test, SampleKind::Singles, &whole).unwrap();
    assert_eq!(got[0].sentence.len(), 14);
}
