use super::{parse_test, BiasTest, DescriptorKind, TestId};
use crate::error::{Error, Result};

macro_rules! wordset {
    ($file:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/data/wordsets/", $file))
    };
}

const RESOURCES: &[(TestId, DescriptorKind, &str)] = &[
    (TestId::C1, DescriptorKind::Names, wordset!("c1_names.txt")),
    (TestId::C3, DescriptorKind::Names, wordset!("c3_names.txt")),
    (TestId::C3, DescriptorKind::Terms, wordset!("c3_terms.txt")),
    (TestId::C6, DescriptorKind::Names, wordset!("c6_names.txt")),
    (TestId::C6, DescriptorKind::Terms, wordset!("c6_terms.txt")),
    (TestId::C9, DescriptorKind::Names, wordset!("c9_names.txt")),
    (TestId::C9, DescriptorKind::Terms, wordset!("c9_terms.txt")),
    (TestId::Occ, DescriptorKind::Names, wordset!("occ_names.txt")),
    (TestId::Occ, DescriptorKind::Terms, wordset!("occ_terms.txt")),
    (TestId::Dis, DescriptorKind::Terms, wordset!("dis_terms.txt")),
    (TestId::I1, DescriptorKind::Names, wordset!("i1_names.txt")),
    (TestId::I1, DescriptorKind::Terms, wordset!("i1_terms.txt")),
    (TestId::I2, DescriptorKind::Names, wordset!("i2_names.txt")),
    (TestId::I2, DescriptorKind::Terms, wordset!("i2_terms.txt")),
];

pub(super) const SIMPLIFIED: &str = wordset!("simplified.txt");

/// Every registered (test, descriptor) pair in canonical order.
pub fn registered() -> impl Iterator<Item = (TestId, DescriptorKind)> {
    RESOURCES.iter().map(|&(id, kind, _)| (id, kind))
}

pub fn available_descriptors(id: TestId) -> Vec<DescriptorKind> {
    RESOURCES
        .iter()
        .filter(|(t, _, _)| *t == id)
        .map(|&(_, kind, _)| kind)
        .collect()
}

/// Loads the full variant of a registered test.
pub fn load_test(id: TestId, descriptor: DescriptorKind) -> Result<BiasTest> {
    let (_, _, text) = RESOURCES
        .iter()
        .find(|(t, k, _)| *t == id && *k == descriptor)
        .ok_or_else(|| Error::DescriptorUnavailable {
            test: id.to_string(),
            descriptor: descriptor.to_string(),
        })?;
    let test = parse_test(text)?;
    debug_assert_eq!((test.id, test.descriptor_kind), (id, descriptor));
    Ok(test)
}
