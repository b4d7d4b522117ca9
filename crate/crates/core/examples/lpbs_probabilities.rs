//! LPBS and LPBS x CEAT from masked-token probabilities.

use biasbench::methods::{
    ingest_probabilities, lpbs_bias_score, run_lpbs, run_lpbs_ceat, LpbsCeatConfig, LpbsConfig,
    ProbabilityRecord,
};
use biasbench::synthetic::planted_probabilities;
use biasbench::testsets::{load_test, DescriptorKind, TestId};

fn main() -> biasbench::Result<()> {
    let line = r#"{"test":"C6","target":"he","attribute":"career","context_id":0,"model":"toy","p_target":0.2,"p_prior":0.1}
{"test":"C6","target":"she","attribute":"career","context_id":0,"model":"toy","p_target":0.05,"p_prior":0.1}"#;
    let store = ingest_probabilities(line.as_bytes())?;
    let recs: Vec<ProbabilityRecord> = store.records().collect();
    // bs = ln(0.2/0.1) - ln(0.05/0.1) = ln 4
    println!("bs(career) = {:.4} (ln 4 = {:.4})", lpbs_bias_score(&recs[..1], &recs[1..])?, 4f64.ln());

    let test = load_test(TestId::C6, DescriptorKind::Terms)?;
    let probs = planted_probabilities(&test, 6, 3.0, 0.2, 11)?;
    let r = run_lpbs(&probs, &test, &LpbsConfig::default())?;
    println!("LPBS: d={:+.3} p={:.5} ({})", r.effect_size, r.p_value, r.p_kind.as_str());
    let c = run_lpbs_ceat(
        &probs,
        &test,
        &LpbsCeatConfig {
            n_samples: 1000,
            ..Default::default()
        },
    )?;
    println!("LPBS x CEAT: CES={:+.3} p={:.2e}", c.result.effect_size, c.result.p_value);
    Ok(())
}
