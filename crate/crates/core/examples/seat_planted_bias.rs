//! s-SEAT and w-SEAT on synthetic encodings with and without a planted bias.

use biasbench::encodings::{CompositionMode, Level};
use biasbench::methods::{run_seat, SeatConfig};
use biasbench::synthetic::{isotropic_null, planted_bias, SyntheticConfig};
use biasbench::testsets::{load_test, DescriptorKind, TestId};

fn main() -> biasbench::Result<()> {
    let test = load_test(TestId::C6, DescriptorKind::Names)?;
    let cfg = SyntheticConfig {
        tokens: 2,
        ..Default::default()
    };
    for (name, store) in [
        ("planted", planted_bias(&test, &cfg)?),
        ("null", isotropic_null(&test, &cfg)?),
    ] {
        for level in [Level::Sentence, Level::Word] {
            let r = run_seat(
                &store,
                &test,
                &SeatConfig {
                    level,
                    composition: CompositionMode::LastToken,
                    ..Default::default()
                },
            )?;
            println!(
                "{name:<8} {:<7} d={:+.3} p={:.5} ({})",
                r.method,
                r.effect_size,
                r.p_value,
                r.p_kind.as_str()
            );
        }
    }
    Ok(())
}
