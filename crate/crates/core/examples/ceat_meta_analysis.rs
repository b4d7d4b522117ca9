//! CEAT: per-sample effect sizes combined under a random-effects model.

use biasbench::methods::{combine_effects, run_ceat, within_sample_variance, CeatConfig};
use biasbench::synthetic::{planted_bias, SyntheticConfig};
use biasbench::testsets::{load_test, DescriptorKind, TestId};

fn main() -> biasbench::Result<()> {
    let ds = [0.5, 1.0, 1.5];
    let vs: Vec<f64> = ds.iter().map(|&d| within_sample_variance(d, 8, 8)).collect();
    let c = combine_effects(&ds, &vs)?;
    println!(
        "toy: CES={:.4} SE={:.4} tau^2={:.4} p={:.4}",
        c.ces, c.se, c.tau_sq, c.p_two_sided
    );

    let test = load_test(TestId::C1, DescriptorKind::Names)?;
    let store = planted_bias(
        &test,
        &SyntheticConfig {
            contexts: 20,
            ..Default::default()
        },
    )?;
    let r = run_ceat(
        &store,
        &test,
        &CeatConfig {
            n_samples: 2000,
            seed: 1,
            ..Default::default()
        },
    )?;
    let (lo, hi) = r
        .samples_d
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &d| (l.min(d), h.max(d)));
    println!(
        "C1 planted: CES={:.3} in [{lo:.3}, {hi:.3}], SE={:.4}, tau^2={:.4}, p={:.2e}, skipped {}",
        r.result.effect_size, r.se, r.tau_sq, r.result.p_value, r.skipped
    );
    Ok(())
}
