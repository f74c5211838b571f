//! Variant planning, prompt construction and edit dispatch.

pub mod backend;
pub mod perturb;
pub mod prompt;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::curation::BaseImageRecord;
use crate::error::EditorError;

pub use backend::{
    edit, normalize_geometry, BackendError, EditBackend, EditRequest, EditResult, MockBackend,
    MockMode, MockOverride, MockStep, RemoteBackend, RemoteConfig, RetryPolicy,
};
pub use perturb::{mock_perturb, PerturbKind, Rect};
pub use prompt::{build_prompt, format_bbox, PromptTemplates};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Alopecia {
    M0,
    M2,
    M3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BodyCondition {
    B0,
    B2,
    B3,
}

/// One of the four generated (alopecia, body condition) combinations.
/// Other combinations cannot be constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Severity {
    alopecia: Alopecia,
    body: BodyCondition,
}

impl Severity {
    pub const SHAM: Severity = Severity {
        alopecia: Alopecia::M0,
        body: BodyCondition::B0,
    };
    pub const ALOPECIA_ONLY: Severity = Severity {
        alopecia: Alopecia::M2,
        body: BodyCondition::B0,
    };
    pub const EMACIATED_ONLY: Severity = Severity {
        alopecia: Alopecia::M0,
        body: BodyCondition::B2,
    };
    pub const SEVERE_BOTH: Severity = Severity {
        alopecia: Alopecia::M3,
        body: BodyCondition::B3,
    };

    pub fn new(alopecia: Alopecia, body: BodyCondition) -> Option<Severity> {
        let s = Severity { alopecia, body };
        Variant::ALL.iter().any(|v| v.severity() == s).then_some(s)
    }

    pub fn alopecia(self) -> Alopecia {
        self.alopecia
    }

    pub fn body(self) -> BodyCondition {
        self.body
    }

    pub fn variant(self) -> Variant {
        *Variant::ALL
            .iter()
            .find(|v| v.severity() == self)
            .expect("only planned combinations exist")
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{:?}", self.alopecia, self.body)
    }
}

impl From<Severity> for String {
    fn from(s: Severity) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Severity {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Variant::ALL
            .iter()
            .map(|v| v.severity())
            .find(|sev| sev.to_string() == s)
            .ok_or_else(|| format!("unknown severity {s:?}"))
    }
}

/// The four variants in generation order. The sham comes first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Sham,
    AlopeciaOnly,
    EmaciatedOnly,
    SevereBoth,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Sham,
        Variant::AlopeciaOnly,
        Variant::EmaciatedOnly,
        Variant::SevereBoth,
    ];

    pub fn severity(self) -> Severity {
        match self {
            Self::Sham => Severity::SHAM,
            Self::AlopeciaOnly => Severity::ALOPECIA_ONLY,
            Self::EmaciatedOnly => Severity::EMACIATED_ONLY,
            Self::SevereBoth => Severity::SEVERE_BOTH,
        }
    }

    pub fn order_index(self) -> u8 {
        self as u8
    }

    pub fn from_order_index(i: u8) -> Option<Variant> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sham => "sham",
            Self::AlopeciaOnly => "alopecia_only",
            Self::EmaciatedOnly => "emaciated_only",
            Self::SevereBoth => "severe_both",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub base_image_id: String,
    pub severity: Severity,
    pub prompt: String,
    pub order_index: u8,
}

impl VariantSpec {
    pub fn variant(&self) -> Variant {
        self.severity.variant()
    }

    pub fn is_sham(&self) -> bool {
        self.order_index == 0
    }
}

/// Plans the four variants of a base image with the builtin templates.
pub fn variant_plan(base: &BaseImageRecord) -> Result<Vec<VariantSpec>, EditorError> {
    variant_plan_with(base, PromptTemplates::builtin())
}

pub fn variant_plan_with(
    base: &BaseImageRecord,
    templates: &PromptTemplates,
) -> Result<Vec<VariantSpec>, EditorError> {
    Variant::ALL
        .iter()
        .map(|&v| {
            Ok(VariantSpec {
                base_image_id: base.image_id.clone(),
                severity: v.severity(),
                prompt: templates.build_prompt(
                    &base.species,
                    v.severity(),
                    base.bbox(),
                    base.day_night,
                )?,
                order_index: v.order_index(),
            })
        })
        .collect()
}
