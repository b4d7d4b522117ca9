//! Bias test registry: the eight word-set tests, their resource format and
//! the transformations that derive reduced, simplified and adjective
//! variants from the full listings.

mod format;
mod registry;
mod transform;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use format::{parse_test, serialize_test};
pub use registry::{available_descriptors, load_test, registered};
pub use transform::{
    attributes_to_adjectives, build_variant, load_adjective_mapping, load_vocabulary,
    parse_adjective_mapping, reduce_to_vocabulary, simplify, validate, CasePolicy,
    ValidationReport, VariantInputs,
};

/// Identifier of a registered bias test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestId {
    C1,
    C3,
    C6,
    C9,
    Occ,
    Dis,
    I1,
    I2,
}

impl TestId {
    pub const ALL: [TestId; 8] = [
        TestId::C1,
        TestId::C3,
        TestId::C6,
        TestId::C9,
        TestId::Occ,
        TestId::Dis,
        TestId::I1,
        TestId::I2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestId::C1 => "C1",
            TestId::C3 => "C3",
            TestId::C6 => "C6",
            TestId::C9 => "C9",
            TestId::Occ => "Occ",
            TestId::Dis => "Dis",
            TestId::I1 => "I1",
            TestId::I2 => "I2",
        }
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownTest(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Names,
    Terms,
}

impl DescriptorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DescriptorKind::Names => "names",
            DescriptorKind::Terms => "terms",
        }
    }
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DescriptorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "names" | "name" => Ok(DescriptorKind::Names),
            "terms" | "term" => Ok(DescriptorKind::Terms),
            _ => Err(Error::InvalidInput(format!("unknown descriptor kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full,
    Reduced,
    Simplified,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Reduced => "reduced",
            Variant::Simplified => "simplified",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Variant::Full),
            "reduced" => Ok(Variant::Reduced),
            "simplified" => Ok(Variant::Simplified),
            _ => Err(Error::InvalidInput(format!("unknown variant '{s}'"))),
        }
    }
}

/// Role of a stimulus set within a test: two targets, two attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    X,
    Y,
    A,
    B,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::X, Role::Y, Role::A, Role::B];

    pub fn is_target(self) -> bool {
        matches!(self, Role::X | Role::Y)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::X => "X",
            Role::Y => "Y",
            Role::A => "A",
            Role::B => "B",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X" | "x" => Ok(Role::X),
            "Y" | "y" => Ok(Role::Y),
            "A" | "a" => Ok(Role::A),
            "B" | "b" => Ok(Role::B),
            _ => Err(Error::InvalidInput(format!("unknown role '{s}'"))),
        }
    }
}

/// One word or phrase standing for a concept.
///
/// `modified` marks a curated change relative to the cited source list
/// (written with a leading `*` in the resource files).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stimulus {
    text: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    modified: bool,
}

impl Stimulus {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.is_empty() {
            return Err(Error::InvalidStimulus {
                text,
                reason: "empty",
            });
        }
        if text.trim() != text {
            return Err(Error::InvalidStimulus {
                text,
                reason: "leading or trailing whitespace",
            });
        }
        if text.contains("  ") || text.contains(['\t', '\n', '\r']) {
            return Err(Error::InvalidStimulus {
                text,
                reason: "internal whitespace must be single spaces",
            });
        }
        Ok(Stimulus {
            text,
            modified: false,
        })
    }

    pub fn modified(mut self, modified: bool) -> Self {
        self.modified = modified;
        self
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn is_multiword(&self) -> bool {
        self.text.contains(' ')
    }

    pub fn is_modified(&self) -> bool {
        self.modified
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.text.split(' ')
    }
}

impl fmt::Display for Stimulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Two target and two attribute stimulus sets plus descriptive metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasTest {
    pub id: TestId,
    pub descriptor_kind: DescriptorKind,
    pub variant: Variant,
    pub bias_kind: String,
    /// Short description of the compared concepts.
    pub concepts: String,
    pub target_x: Vec<Stimulus>,
    pub target_y: Vec<Stimulus>,
    pub attr_a: Vec<Stimulus>,
    pub attr_b: Vec<Stimulus>,
    /// Sets whose source listing is known to be incomplete.
    pub elided: Vec<Role>,
    /// Documented full attribute-set size when the listing is elided.
    pub expected_attributes: Option<usize>,
}

impl BiasTest {
    pub fn set(&self, role: Role) -> &[Stimulus] {
        match role {
            Role::X => &self.target_x,
            Role::Y => &self.target_y,
            Role::A => &self.attr_a,
            Role::B => &self.attr_b,
        }
    }

    pub fn set_mut(&mut self, role: Role) -> &mut Vec<Stimulus> {
        match role {
            Role::X => &mut self.target_x,
            Role::Y => &mut self.target_y,
            Role::A => &mut self.attr_a,
            Role::B => &mut self.attr_b,
        }
    }

    /// All (role, stimulus) pairs in canonical X, Y, A, B order.
    pub fn stimuli(&self) -> impl Iterator<Item = (Role, &Stimulus)> {
        Role::ALL
            .into_iter()
            .flat_map(move |role| self.set(role).iter().map(move |s| (role, s)))
    }

    /// Checks the structural invariants: non-empty sets without duplicates.
    pub fn check(&self) -> Result<()> {
        for role in Role::ALL {
            let set = self.set(role);
            if set.is_empty() {
                return Err(Error::EmptySet {
                    test: self.id.to_string(),
                    role: role.to_string(),
                });
            }
            let mut seen = std::collections::HashSet::new();
            for s in set {
                if !seen.insert(s.text()) {
                    return Err(Error::DuplicateStimulus {
                        role: role.to_string(),
                        stimulus: s.text().to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Copy with every stimulus lowercased, for uncased vocabularies.
    pub fn lowercased(&self) -> Result<BiasTest> {
        let mut out = self.clone();
        for role in Role::ALL {
            for s in out.set_mut(role) {
                s.text = s.text.to_lowercase();
            }
        }
        out.check()?;
        Ok(out)
    }
}
