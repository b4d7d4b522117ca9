//! Registered word sets and their reduced / simplified variants.

use std::collections::HashSet;

use biasbench::testsets::{
    available_descriptors, build_variant, load_test, registered, validate, CasePolicy,
    DescriptorKind, Role, TestId, Variant, VariantInputs,
};

fn main() -> biasbench::Result<()> {
    for (id, d) in registered() {
        let t = load_test(id, d)?;
        println!(
            "{id:>4} {d:<6} |X|={:<3} |Y|={:<3} |A|={:<3} |B|={:<3} {}",
            t.target_x.len(),
            t.target_y.len(),
            t.attr_a.len(),
            t.attr_b.len(),
            t.concepts
        );
    }
    println!("C6 descriptors: {:?}", available_descriptors(TestId::C6));

    let full = load_test(TestId::C6, DescriptorKind::Names)?;
    // Toy vocabulary: everything except two names.
    let vocab: HashSet<String> = full
        .stimuli()
        .map(|(_, s)| s.text().to_lowercase())
        .filter(|w| w != "john" && w != "amy")
        .collect();
    let reduced = build_variant(
        &full,
        Variant::Reduced,
        &VariantInputs {
            vocabulary: Some(vocab),
            case: CasePolicy::Lowercase,
            ..Default::default()
        },
    )?;
    println!(
        "reduced C6: |X|={} |Y|={} (equal sizes kept)",
        reduced.set(Role::X).len(),
        reduced.set(Role::Y).len()
    );

    let report = validate(&load_test(TestId::I1, DescriptorKind::Terms)?);
    for (role, w) in &report.warnings {
        println!("I1 terms {role}: {w}");
    }
    Ok(())
}
