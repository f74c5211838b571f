//! Edit prompts from per-body-plan template files.
//!
//! A template file is a list of `[section]` blocks. `[prompt]` holds the
//! outer text with the `{species}`, `{bbox}`, `{alopecia_clause}`,
//! `{body_clause}` and `{preserve_clause}` placeholders; the other sections
//! supply clause text and may use `{species}` and `{bbox}` themselves.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use super::{Alopecia, BodyCondition, Severity};
use crate::error::EditorError;
use crate::ingest::{BBox, DayNight};
use crate::taxonomy::{self, BodyPlan};

const BUILTIN: [(BodyPlan, &str); 3] = [
    (BodyPlan::Canid, include_str!("../../templates/canid.txt")),
    (
        BodyPlan::Hoofstock,
        include_str!("../../templates/hoofstock.txt"),
    ),
    (
        BodyPlan::Procyonid,
        include_str!("../../templates/procyonid.txt"),
    ),
];

const REQUIRED: [&str; 11] = [
    "prompt",
    "coat.healthy",
    "coat.moderate",
    "coat.severe",
    "distribution.moderate",
    "distribution.severe",
    "body.normal",
    "body.thin",
    "body.emaciated",
    "preserve.day",
    "preserve.night",
];

#[derive(Debug, Clone)]
struct Template {
    sections: BTreeMap<String, String>,
}

impl Template {
    fn parse(text: &str, origin: &str) -> Result<Self, EditorError> {
        let mut sections: BTreeMap<String, String> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (n, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.starts_with('#') {
                continue;
            }
            if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                if sections.contains_key(name) {
                    return Err(EditorError::Template(format!(
                        "{origin}:{}: duplicate section [{name}]",
                        n + 1
                    )));
                }
                sections.insert(name.to_string(), String::new());
                current = Some(name.to_string());
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            let Some(name) = &current else {
                return Err(EditorError::Template(format!(
                    "{origin}:{}: text before the first section",
                    n + 1
                )));
            };
            let body = sections.get_mut(name).expect("section exists");
            if !body.is_empty() {
                body.push(' ');
            }
            body.push_str(trimmed);
        }
        for name in REQUIRED {
            match sections.get(name) {
                None => {
                    return Err(EditorError::Template(format!(
                        "{origin}: missing section [{name}]"
                    )))
                }
                Some(body) if body.is_empty() => {
                    return Err(EditorError::Template(format!(
                        "{origin}: empty section [{name}]"
                    )))
                }
                _ => {}
            }
        }
        Ok(Self { sections })
    }

    fn section(&self, name: &str) -> &str {
        &self.sections[name]
    }
}

/// The three body-plan templates plus a content hash recorded in manifests.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    templates: BTreeMap<&'static str, Template>,
    version: String,
}

impl PromptTemplates {
    /// Templates compiled into the binary.
    pub fn builtin() -> &'static PromptTemplates {
        static BUILTIN_SET: OnceLock<PromptTemplates> = OnceLock::new();
        BUILTIN_SET.get_or_init(|| {
            Self::from_texts(BUILTIN.iter().map(|(plan, text)| (*plan, text.to_string())))
                .expect("builtin templates are valid")
        })
    }

    /// Loads `canid.txt`, `hoofstock.txt` and `procyonid.txt` from a
    /// directory.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, EditorError> {
        let dir = dir.as_ref();
        let mut texts = Vec::new();
        for (plan, _) in BUILTIN {
            let path = dir.join(format!("{}.txt", plan.name()));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| EditorError::Template(format!("{}: {e}", path.display())))?;
            texts.push((plan, text));
        }
        Self::from_texts(texts)
    }

    fn from_texts(
        texts: impl IntoIterator<Item = (BodyPlan, String)>,
    ) -> Result<Self, EditorError> {
        let mut hasher = Sha256::new();
        let mut templates = BTreeMap::new();
        for (plan, text) in texts {
            hasher.update(plan.name().as_bytes());
            hasher.update([0]);
            hasher.update(text.as_bytes());
            hasher.update([0]);
            templates.insert(plan.name(), Template::parse(&text, plan.name())?);
        }
        let version = hasher.finalize()[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(Self { templates, version })
    }

    /// Content hash of the template set.
    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn build_prompt(
        &self,
        species: &str,
        severity: Severity,
        bbox: &BBox,
        day_night: DayNight,
    ) -> Result<String, EditorError> {
        let info = taxonomy::lookup(species)
            .ok_or_else(|| EditorError::UnknownSpecies(species.to_string()))?;
        let t = &self.templates[info.body_plan.name()];

        let alopecia = match severity.alopecia() {
            Alopecia::M0 => t.section("coat.healthy").to_string(),
            Alopecia::M2 => format!(
                "{} {}",
                t.section("coat.moderate"),
                t.section("distribution.moderate")
            ),
            Alopecia::M3 => format!(
                "{} {}",
                t.section("coat.severe"),
                t.section("distribution.severe")
            ),
        };
        let body = match severity.body() {
            BodyCondition::B0 => t.section("body.normal"),
            BodyCondition::B2 => t.section("body.thin"),
            BodyCondition::B3 => t.section("body.emaciated"),
        };
        let preserve = match day_night {
            DayNight::Day => t.section("preserve.day"),
            DayNight::Night => t.section("preserve.night"),
        };

        let bbox_text = format_bbox(bbox);
        let fill = |s: &str| {
            s.replace("{species}", info.common)
                .replace("{bbox}", &bbox_text)
        };
        let prompt = t
            .section("prompt")
            .replace("{alopecia_clause}", &fill(&alopecia))
            .replace("{body_clause}", &fill(body))
            .replace("{preserve_clause}", &fill(preserve));
        Ok(fill(&prompt))
    }
}

/// Normalized box as it appears in prompts.
pub fn format_bbox(bbox: &BBox) -> String {
    format!(
        "({:.3}, {:.3}, {:.3}, {:.3})",
        bbox.x, bbox.y, bbox.w, bbox.h
    )
}

/// [`PromptTemplates::build_prompt`] with the builtin templates.
pub fn build_prompt(
    species: &str,
    severity: Severity,
    bbox: &BBox,
    day_night: DayNight,
) -> Result<String, EditorError> {
    PromptTemplates::builtin().build_prompt(species, severity, bbox, day_night)
}
