//! Semantically bleached template contexts, singles and doubles.

use biasbench::contextgen::{default_templates, expand_templates, expansion_count, ExpansionMode};
use biasbench::testsets::{load_test, DescriptorKind, TestId};

fn main() -> biasbench::Result<()> {
    let test = load_test(TestId::C3, DescriptorKind::Names)?;
    let templates = default_templates();
    for mode in [ExpansionMode::Singles, ExpansionMode::Doubles] {
        let n = expansion_count(&templates, &test, mode);
        println!("{mode:?}: {n} contexts");
        for inst in expand_templates(&templates, &test, mode)?.take(3) {
            println!("  #{:<3} {}", inst.context_id, inst.text);
        }
    }
    Ok(())
}
