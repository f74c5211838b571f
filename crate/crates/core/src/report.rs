//! Summary tables computed from manifest entries.
//!
//! All tables come from a single pass over the entries and are plain data;
//! the text and JSON renderings are both derived from them.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};

use crate::editor::Variant;
use crate::ingest::DayNight;
use crate::orchestrator::{ManifestEntry, StepStatus};
use crate::qc::GatePath;

/// A count over a denominator, shown as a whole percentage rounded half up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub num: usize,
    pub den: usize,
}

impl Rate {
    pub fn new(num: usize, den: usize) -> Self {
        Self { num, den }
    }

    /// Whole percent, half up. Zero when the denominator is zero.
    pub fn percent(&self) -> usize {
        if self.den == 0 {
            0
        } else {
            (200 * self.num + self.den) / (2 * self.den)
        }
    }

    /// `"553 (83%)"`.
    pub fn count_text(&self) -> String {
        format!("{} ({}%)", self.num, self.percent())
    }

    /// `"31/191 (16%)"`.
    pub fn ratio_text(&self) -> String {
        format!("{}/{} ({}%)", self.num, self.den, self.percent())
    }

    pub fn percent_text(&self) -> String {
        format!("{}%", self.percent())
    }
}

/// Mean rounded to 3 decimals, as text. `None` for an empty set.
pub fn mean3(values: &[f64]) -> Option<String> {
    (!values.is_empty()).then(|| format!("{:.3}", values.iter().sum::<f64>() / values.len() as f64))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub species: usize,
    /// Distinct bases with at least one entry.
    pub bases_seen: usize,
    /// Bases whose sham was generated.
    pub bases_processed: usize,
    pub bases_errored: usize,
    pub variants_generated: usize,
    /// QC passes over generated variants.
    pub passes: Rate,
    /// Sham failures over generated shams.
    pub sham_rejections: Rate,
    pub variants_skipped: usize,
    pub calls_saved: usize,
    pub errored_steps: usize,
    pub day: Rate,
    pub night: Rate,
}

impl SummaryTable {
    pub fn render(&self) -> String {
        let den_note = |r: &Rate| if r.den == 0 { "  (denominator 0)" } else { "" };
        let rows = [
            ("Species represented", self.species.to_string()),
            ("Base images processed", self.bases_seen.to_string()),
            (
                "Bases with a generated sham",
                self.bases_processed.to_string(),
            ),
            ("Bases errored", self.bases_errored.to_string()),
            (
                "Total variants generated",
                self.variants_generated.to_string(),
            ),
            (
                "QC-passing variants",
                format!("{}{}", self.passes.count_text(), den_note(&self.passes)),
            ),
            (
                "Sham pre-filter rejections",
                format!(
                    "{}{}",
                    self.sham_rejections.ratio_text(),
                    den_note(&self.sham_rejections)
                ),
            ),
            (
                "Variants skipped via sham",
                self.variants_skipped.to_string(),
            ),
            ("Calls saved", self.calls_saved.to_string()),
            ("Errored steps", self.errored_steps.to_string()),
            (
                "Daytime pass rate",
                format!(
                    "{} ({}/{})",
                    self.day.percent_text(),
                    self.day.num,
                    self.day.den
                ),
            ),
            (
                "Nighttime pass rate",
                format!(
                    "{} ({}/{})",
                    self.night.percent_text(),
                    self.night.num,
                    self.night.den
                ),
            ),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            writeln!(out, "{k:<width$}  {v}").unwrap();
        }
        out
    }
}

fn generated(entries: &[ManifestEntry]) -> impl Iterator<Item = &ManifestEntry> {
    entries.iter().filter(|e| e.status == StepStatus::Generated)
}

pub fn summarize(entries: &[ManifestEntry]) -> SummaryTable {
    let mut t = SummaryTable::default();
    let mut species = BTreeSet::new();
    let mut bases = HashSet::new();
    let mut processed = HashSet::new();
    let mut errored_bases = HashSet::new();
    let (mut passes, mut shams, mut sham_fails) = (0, 0, 0);
    for e in entries {
        bases.insert(e.base_image_id.as_str());
        match e.status {
            StepStatus::Generated => {
                species.insert(e.species.as_str());
                t.variants_generated += 1;
                passes += e.passed() as usize;
                let rate = match e.day_night {
                    DayNight::Day => &mut t.day,
                    DayNight::Night => &mut t.night,
                };
                rate.den += 1;
                rate.num += e.passed() as usize;
                if e.order_index == 0 {
                    processed.insert(e.base_image_id.as_str());
                    shams += 1;
                    sham_fails += !e.passed() as usize;
                }
            }
            StepStatus::Skipped => t.variants_skipped += 1,
            StepStatus::Errored => {
                t.errored_steps += 1;
                if e.order_index == 0 {
                    errored_bases.insert(e.base_image_id.as_str());
                }
            }
        }
    }
    t.species = species.len();
    t.bases_seen = bases.len();
    t.bases_processed = processed.len();
    t.bases_errored = errored_bases.len();
    t.passes = Rate::new(passes, t.variants_generated);
    t.sham_rejections = Rate::new(sham_fails, shams);
    t.calls_saved = 3 * sham_fails;
    t
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant: Variant,
    pub pass: Rate,
    pub norm_mae_only: usize,
    pub ssim_only: usize,
    pub both: usize,
    pub night_mae: usize,
    /// Mean SSIM over scored entries, 3 decimals.
    pub mean_ssim: Option<String>,
}

/// Pass rate and gate-path counts per variant. Variants without generated
/// entries are omitted.
pub fn variant_breakdown(entries: &[ManifestEntry], day_only: bool) -> Vec<VariantRow> {
    let mut groups: BTreeMap<Variant, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in generated(entries).filter(|e| !day_only || e.day_night == DayNight::Day) {
        groups.entry(e.variant).or_default().push(e);
    }
    groups
        .into_iter()
        .map(|(variant, group)| {
            let path = |p: GatePath| {
                group
                    .iter()
                    .filter(|e| e.passed() && e.gate_path == Some(p))
                    .count()
            };
            let ssims: Vec<f64> = group.iter().filter_map(|e| e.ssim).collect();
            VariantRow {
                variant,
                pass: Rate::new(group.iter().filter(|e| e.passed()).count(), group.len()),
                norm_mae_only: path(GatePath::NormMaeOnly),
                ssim_only: path(GatePath::SsimOnly),
                both: path(GatePath::Both),
                night_mae: path(GatePath::NightMae),
                mean_ssim: mean3(&ssims),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeciesRow {
    pub species: String,
    pub bases: usize,
    /// Pass rate per variant, in variant order; variants with no
    /// generated entries are absent.
    pub variants: Vec<(Variant, Rate)>,
    pub overall: Rate,
}

/// Per-species pass rates. Species without generated entries are omitted.
pub fn species_breakdown(entries: &[ManifestEntry]) -> Vec<SpeciesRow> {
    let mut groups: BTreeMap<&str, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in generated(entries) {
        groups.entry(e.species.as_str()).or_default().push(e);
    }
    groups
        .into_iter()
        .map(|(species, group)| {
            let bases: HashSet<&str> = group.iter().map(|e| e.base_image_id.as_str()).collect();
            let mut per: BTreeMap<Variant, Rate> = BTreeMap::new();
            for e in &group {
                let r = per.entry(e.variant).or_default();
                r.den += 1;
                r.num += e.passed() as usize;
            }
            SpeciesRow {
                species: species.to_string(),
                bases: bases.len(),
                overall: Rate::new(group.iter().filter(|e| e.passed()).count(), group.len()),
                variants: per.into_iter().collect(),
            }
        })
        .collect()
}

/// Fixed-width text table.
struct TextTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl fmt::Display for TextTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols = self.header.len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].len())
                    .chain([self.header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, cell)| {
                    if c == 0 {
                        format!("{cell:<w$}", w = widths[c])
                    } else {
                        format!("{cell:>w$}", w = widths[c])
                    }
                })
                .collect();
            writeln!(f, "{}", line.join("  ").trim_end())?;
        }
        Ok(())
    }
}

pub fn render_variants(rows: &[VariantRow]) -> String {
    TextTable {
        header: [
            "Variant",
            "Pass%",
            "Passed",
            "N",
            "Norm",
            "SSIM",
            "Both",
            "Night",
            "Mean SSIM",
        ]
        .map(String::from)
        .to_vec(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    format!("{} ({})", r.variant, r.variant.severity()),
                    r.pass.percent_text(),
                    r.pass.num.to_string(),
                    r.pass.den.to_string(),
                    r.norm_mae_only.to_string(),
                    r.ssim_only.to_string(),
                    r.both.to_string(),
                    r.night_mae.to_string(),
                    r.mean_ssim.clone().unwrap_or_else(|| "-".into()),
                ]
            })
            .collect(),
    }
    .to_string()
}

pub fn render_species(rows: &[SpeciesRow]) -> String {
    let mut header = vec!["Species".to_string(), "Bases".to_string()];
    header.extend(Variant::ALL.iter().map(|v| v.name().to_string()));
    header.push("Overall".into());
    TextTable {
        header,
        rows: rows
            .iter()
            .map(|r| {
                let mut row = vec![r.species.clone(), r.bases.to_string()];
                for v in Variant::ALL {
                    row.push(match r.variants.iter().find(|(x, _)| *x == v) {
                        Some((_, rate)) => rate.ratio_text(),
                        None => "-".into(),
                    });
                }
                row.push(r.overall.ratio_text());
                row
            })
            .collect(),
    }
    .to_string()
}
