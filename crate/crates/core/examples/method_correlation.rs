//! Pearson correlation of effect sizes between methods across tests.

use biasbench::analysis::{
    correlate_methods, reported_result, CorrelationFilter, MatchKey, ResultTable,
};
use biasbench::methods::Method;
use biasbench::testsets::{DescriptorKind, TestId};

fn main() -> biasbench::Result<()> {
    let rows = [
        (TestId::C1, 0.90, 0.85, true),
        (TestId::C3, 0.40, 0.31, false),
        (TestId::C6, 1.20, 1.05, true),
        (TestId::C9, -0.20, -0.05, false),
        (TestId::Occ, 0.75, 0.60, true),
    ];
    let mut results = Vec::new();
    for (t, s, w, sig) in rows {
        results.push(reported_result("toy", Method::SSeat, t, DescriptorKind::Names, s, sig));
        results.push(reported_result("toy", Method::WSeat, t, DescriptorKind::Names, w, sig));
    }
    let table = ResultTable::new(results, 0.01, false)?;
    for filter in [CorrelationFilter::All, CorrelationFilter::SignificantOnly] {
        let c = correlate_methods(&table, Method::SSeat, Method::WSeat, filter, MatchKey::default())?;
        println!("{filter:?}: r={} over {} pairs", c.display_value(), c.pairs);
    }
    Ok(())
}
