//! Base image curation: placement weighting, the balanced base set and
//! stratified per-run subsamples.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::ImageBuffer;
use crate::error::CurationError;
use crate::ingest::{
    resolve_day_night, select_primary_detection, BBox, CaptureContext, Category, DayNight,
    DayNightSource, DetectionRecord, Season,
};
use crate::rng::{seeded, RNG_ALGORITHM};
use crate::taxonomy;

/// Frame position tier of an animal, from its box centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Center,
    MidFrame,
    Edge,
}

impl Placement {
    pub fn weight(self) -> f64 {
        match self {
            Self::Center => 0.6,
            Self::MidFrame => 0.3,
            Self::Edge => 0.1,
        }
    }

    /// Integer ratio of the weights, used for exact weighted draws.
    fn tickets(self) -> u64 {
        match self {
            Self::Center => 6,
            Self::MidFrame => 3,
            Self::Edge => 1,
        }
    }

    pub fn from_weight(w: f64) -> Option<Self> {
        [Self::Center, Self::MidFrame, Self::Edge]
            .into_iter()
            .find(|p| p.weight() == w)
    }
}

/// Tiers are equal-width Chebyshev annuli around the frame center:
/// `d = 2 * max(|cx - 0.5|, |cy - 0.5|)`, center for `d <= 1/3`, mid-frame
/// for `d <= 2/3`, edge beyond.
pub fn placement(bbox: &BBox) -> Placement {
    let (cx, cy) = bbox.centroid();
    let d = 2.0 * (cx - 0.5).abs().max((cy - 0.5).abs());
    if d <= 1.0 / 3.0 {
        Placement::Center
    } else if d <= 2.0 / 3.0 {
        Placement::MidFrame
    } else {
        Placement::Edge
    }
}

pub fn placement_weight(bbox: &BBox) -> f64 {
    placement(bbox).weight()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseImageRecord {
    pub image_id: String,
    pub species: String,
    pub detection: DetectionRecord,
    pub context: CaptureContext,
    pub day_night: DayNight,
    pub day_night_source: DayNightSource,
    pub placement: Placement,
}

impl BaseImageRecord {
    pub fn placement_weight(&self) -> f64 {
        self.placement.weight()
    }

    pub fn bbox(&self) -> &BBox {
        &self.detection.bbox
    }

    pub fn stratum(&self) -> StratumKey {
        StratumKey {
            species: self.species.clone(),
            day_night: self.day_night,
            season: self.context.season(),
        }
    }
}

/// Grouping key for stratified sampling. A missing season is its own
/// stratum.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StratumKey {
    pub species: String,
    pub day_night: DayNight,
    pub season: Option<Season>,
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.season {
            Some(s) => write!(f, "{}/{}/{:?}", self.species, self.day_night, s),
            None => write!(f, "{}/{}/unknown", self.species, self.day_night),
        }
    }
}

/// How the base set splits its target size across species.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeciesAllocation {
    /// Quotas proportional to species frequency in the candidate pool.
    #[default]
    Proportional,
    /// Equal quotas, capped by availability, surplus redistributed.
    Balanced,
}

/// Hamilton apportionment of `n` seats over groups of the given sizes.
/// Leftover seats go to the largest remainders; ties to the earlier group.
pub fn largest_remainder(sizes: &[usize], n: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| s * n / total).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse((sizes[i] * n) % total));
    let assigned: usize = quotas.iter().sum();
    for &i in order.iter().take(n - assigned) {
        quotas[i] += 1;
    }
    quotas
}

fn balanced_quotas(sizes: &[usize], n: usize) -> Vec<usize> {
    let mut quotas = vec![0; sizes.len()];
    let mut left = n;
    while left > 0 {
        let mut progressed = false;
        for (q, &cap) in quotas.iter_mut().zip(sizes) {
            if left > 0 && *q < cap {
                *q += 1;
                left -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    quotas
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), CurationError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(CurationError::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

/// One weighted draw without replacement; probability proportional to the
/// placement weight among what is left.
fn weighted_take(
    pool: &mut Vec<&BaseImageRecord>,
    rng: &mut ChaCha8Rng,
) -> Option<BaseImageRecord> {
    let total: u64 = pool.iter().map(|r| r.placement.tickets()).sum();
    if total == 0 {
        return None;
    }
    let mut ticket = rng.random_range(0..total);
    let idx = pool
        .iter()
        .position(|r| {
            let t = r.placement.tickets();
            if ticket < t {
                true
            } else {
                ticket -= t;
                false
            }
        })
        .expect("ticket lies within the total");
    Some(pool.remove(idx).clone())
}

pub fn build_base_set(
    candidates: &[BaseImageRecord],
    target_size: usize,
    seed: u64,
) -> Result<Vec<BaseImageRecord>, CurationError> {
    build_base_set_with(
        candidates,
        target_size,
        seed,
        SpeciesAllocation::Proportional,
    )
}

/// Placement-weighted sampling without replacement. Species quotas follow
/// `allocation`; inside a species the draw cycles over (day/night, season)
/// cells in a seeded order so that no single capture condition dominates.
pub fn build_base_set_with(
    candidates: &[BaseImageRecord],
    target_size: usize,
    seed: u64,
    allocation: SpeciesAllocation,
) -> Result<Vec<BaseImageRecord>, CurationError> {
    if target_size > candidates.len() {
        return Err(CurationError::InsufficientPool {
            requested: target_size,
            available: candidates.len(),
        });
    }
    check_unique(candidates.iter().map(|c| c.image_id.as_str()))?;

    let mut by_species: BTreeMap<&str, Vec<&BaseImageRecord>> = BTreeMap::new();
    for c in candidates {
        by_species.entry(&c.species).or_default().push(c);
    }
    let sizes: Vec<usize> = by_species.values().map(Vec::len).collect();
    let quotas = match allocation {
        SpeciesAllocation::Proportional => largest_remainder(&sizes, target_size),
        SpeciesAllocation::Balanced => balanced_quotas(&sizes, target_size),
    };

    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(target_size);
    for (members, quota) in by_species.into_values().zip(quotas) {
        let mut cells: BTreeMap<(DayNight, Option<Season>), Vec<&BaseImageRecord>> =
            BTreeMap::new();
        for m in members {
            cells
                .entry((m.day_night, m.context.season()))
                .or_default()
                .push(m);
        }
        let mut cells: Vec<_> = cells.into_values().collect();
        cells.shuffle(&mut rng);

        let mut taken = 0;
        while taken < quota {
            for cell in cells.iter_mut() {
                if taken == quota {
                    break;
                }
                if let Some(pick) = weighted_take(cell, &mut rng) {
                    out.push(pick);
                    taken += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Draws `n` records preserving the species x day/night x season mix.
/// Quotas are largest-remainder apportioned; draws inside a stratum are
/// uniform without replacement.
pub fn stratified_subsample(
    base_set: &[BaseImageRecord],
    n: usize,
    seed: u64,
) -> Result<Vec<BaseImageRecord>, CurationError> {
    if n > base_set.len() {
        return Err(CurationError::InsufficientPool {
            requested: n,
            available: base_set.len(),
        });
    }
    check_unique(base_set.iter().map(|c| c.image_id.as_str()))?;

    let mut strata: BTreeMap<StratumKey, Vec<&BaseImageRecord>> = BTreeMap::new();
    for r in base_set {
        strata.entry(r.stratum()).or_default().push(r);
    }
    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let quotas = largest_remainder(&sizes, n);

    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(n);
    for (members, quota) in strata.into_values().zip(quotas) {
        for i in rand::seq::index::sample(&mut rng, members.len(), quota) {
            out.push(members[i].clone());
        }
    }
    Ok(out)
}

/// Per-stratum counts, for checking that a subsample kept its proportions.
pub fn stratum_counts(records: &[BaseImageRecord]) -> HashMap<StratumKey, usize> {
    let mut counts = HashMap::new();
    for r in records {
        *counts.entry(r.stratum()).or_insert(0) += 1;
    }
    counts
}

/// Joins detections with capture metadata into base-image candidates.
///
/// Images outside the species list or without a qualifying primary
/// detection are skipped. `load_image` is consulted only when the metadata
/// carries no day/night flag; returning `None` skips the image.
pub fn assemble_candidates(
    detections: &[DetectionRecord],
    metadata: &[(String, CaptureContext)],
    min_conf: f64,
    mut load_image: impl FnMut(&str) -> Option<ImageBuffer>,
) -> Vec<BaseImageRecord> {
    let mut by_image: HashMap<&str, Vec<DetectionRecord>> = HashMap::new();
    for d in detections.iter().filter(|d| d.category == Category::Animal) {
        by_image.entry(&d.image_id).or_default().push(d.clone());
    }
    let mut out = Vec::new();
    for (file, ctx) in metadata {
        let Some(species) = taxonomy::canonical(&ctx.species) else {
            continue;
        };
        let Some(dets) = by_image.get(file.as_str()) else {
            continue;
        };
        let Some(primary) = select_primary_detection(dets, file, min_conf) else {
            continue;
        };
        let (day_night, source) = match ctx.day_night {
            Some(flag) => (flag, DayNightSource::Metadata),
            None => match load_image(file) {
                Some(img) => resolve_day_night(&img, ctx),
                None => {
                    log::warn!("skipping {file}: no day/night flag and image unavailable");
                    continue;
                }
            },
        };
        let mut context = ctx.clone();
        context.species = species.to_string();
        out.push(BaseImageRecord {
            image_id: file.clone(),
            species: species.to_string(),
            placement: placement(&primary.bbox),
            detection: primary.clone(),
            context,
            day_night,
            day_night_source: source,
        });
    }
    out
}

/// One line of the base-set file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct BaseSetLine {
    image_id: String,
    species: String,
    bbox: [f64; 4],
    confidence: f64,
    weight: f64,
    day_night: DayNight,
    day_night_source: DayNightSource,
    season: Option<Season>,
    #[serde(default)]
    timestamp: Option<chrono::DateTime<chrono::Utc>>,
    #[serde(default)]
    location_id: Option<String>,
    seed: u64,
    generator: String,
}

/// Serializes a base set, one JSON record per line.
pub fn write_base_set(records: &[BaseImageRecord], seed: u64) -> String {
    let mut out = String::new();
    for r in records {
        let b = r.bbox();
        let line = BaseSetLine {
            image_id: r.image_id.clone(),
            species: r.species.clone(),
            bbox: [b.x, b.y, b.w, b.h],
            confidence: r.detection.confidence,
            weight: r.placement_weight(),
            day_night: r.day_night,
            day_night_source: r.day_night_source,
            season: r.context.season(),
            timestamp: r.context.timestamp,
            location_id: r.context.location_id.clone(),
            seed,
            generator: RNG_ALGORITHM.to_string(),
        };
        out.push_str(&serde_json::to_string(&line).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

pub fn read_base_set(text: &str) -> Result<Vec<BaseImageRecord>, CurationError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let err = |message: String| CurationError::Parse {
            line: i + 1,
            message,
        };
        let line: BaseSetLine = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        let [x, y, w, h] = line.bbox;
        let bbox = BBox::new(x, y, w, h).map_err(err)?;
        let placement = Placement::from_weight(line.weight)
            .ok_or_else(|| err(format!("weight {} is not one of 0.6/0.3/0.1", line.weight)))?;
        let species = taxonomy::canonical(&line.species)
            .ok_or_else(|| CurationError::UnknownSpecies(line.species.clone()))?;
        let context = CaptureContext::new(
            species,
            line.timestamp,
            (line.day_night_source == DayNightSource::Metadata).then_some(line.day_night),
            line.location_id,
        );
        if line.timestamp.is_none() && line.season.is_some() {
            return Err(err("season given without a timestamp".into()));
        }
        out.push(BaseImageRecord {
            detection: DetectionRecord {
                image_id: line.image_id.clone(),
                bbox,
                confidence: line.confidence,
                category: Category::Animal,
            },
            image_id: line.image_id,
            species: species.to_string(),
            context,
            day_night: line.day_night,
            day_night_source: line.day_night_source,
            placement,
        });
    }
    Ok(out)
}
