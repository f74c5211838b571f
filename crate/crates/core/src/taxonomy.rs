//! Target species and their body-plan classes.

use serde::{Deserialize, Serialize};

/// Body-plan class, which selects the lesion-distribution wording in edit
/// prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyPlan {
    Canid,
    Hoofstock,
    /// Raccoons reuse the canid progression with face/tail emphasis. This is
    /// an extrapolation, not a documented lesion pattern.
    Procyonid,
}

impl BodyPlan {
    pub fn name(self) -> &'static str {
        match self {
            Self::Canid => "canid",
            Self::Hoofstock => "hoofstock",
            Self::Procyonid => "procyonid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpeciesInfo {
    pub common: &'static str,
    pub scientific: &'static str,
    pub body_plan: BodyPlan,
}

pub const TARGET_SPECIES: [SpeciesInfo; 8] = [
    SpeciesInfo {
        common: "white-tailed deer",
        scientific: "odocoileus virginianus",
        body_plan: BodyPlan::Hoofstock,
    },
    SpeciesInfo {
        common: "mule deer",
        scientific: "odocoileus hemionus",
        body_plan: BodyPlan::Hoofstock,
    },
    SpeciesInfo {
        common: "elk",
        scientific: "cervus canadensis",
        body_plan: BodyPlan::Hoofstock,
    },
    SpeciesInfo {
        common: "gray wolf",
        scientific: "canis lupus",
        body_plan: BodyPlan::Canid,
    },
    SpeciesInfo {
        common: "red fox",
        scientific: "vulpes vulpes",
        body_plan: BodyPlan::Canid,
    },
    SpeciesInfo {
        common: "gray fox",
        scientific: "urocyon cinereoargenteus",
        body_plan: BodyPlan::Canid,
    },
    SpeciesInfo {
        common: "raccoon",
        scientific: "procyon lotor",
        body_plan: BodyPlan::Procyonid,
    },
    SpeciesInfo {
        common: "cervid",
        scientific: "cervidae",
        body_plan: BodyPlan::Hoofstock,
    },
];

fn normalize(name: &str) -> String {
    name.trim()
        .to_ascii_lowercase()
        .replace(['_', '-'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Looks a species up by common or scientific name, ignoring case and
/// `_`/`-`/space differences.
pub fn lookup(name: &str) -> Option<&'static SpeciesInfo> {
    let key = normalize(name);
    TARGET_SPECIES
        .iter()
        .find(|s| normalize(s.common) == key || s.scientific == key)
}

pub fn body_plan(name: &str) -> Option<BodyPlan> {
    lookup(name).map(|s| s.body_plan)
}

/// Canonical common name for a recognized species.
pub fn canonical(name: &str) -> Option<&'static str> {
    lookup(name).map(|s| s.common)
}
