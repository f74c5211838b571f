//! Detector output and capture metadata ingestion.
//!
//! The detector document is the common batch-output layout: a top-level
//! `images` array whose entries carry a `file` name and a `detections` list
//! with `category` ("1" animal, "2" person, "3" vehicle), `conf` and a
//! normalized `[x, y, w, h]` box with top-left origin.

use std::fmt;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::buffer::ImageBuffer;
use crate::error::IngestError;

/// Slack allowed on the right/bottom edge of a box, absorbing detector
/// round-off.
pub const BBOX_EPSILON: f64 = 1e-6;

/// Default confidence floor for the primary detection.
pub const DEFAULT_MIN_CONF: f64 = 0.8;

/// Mean cross-channel standard deviation (8-bit units) below which a frame
/// is treated as infrared grayscale.
pub const NIGHT_CHROMA_THRESHOLD: f64 = 2.0;

/// Normalized box, top-left origin, width/height as fractions of the frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, String> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), String> {
        let Self { x, y, w, h } = *self;
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(format!("non-finite bbox {self}"));
        }
        if x < 0.0 || y < 0.0 {
            return Err(format!("negative bbox origin {self}"));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(format!("bbox has non-positive extent {self}"));
        }
        if x + w > 1.0 + BBOX_EPSILON || y + h > 1.0 + BBOX_EPSILON {
            return Err(format!("bbox extends past the frame {self}"));
        }
        Ok(())
    }

    pub fn centroid(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Pixel rectangle `(x0, y0, x1, y1)`, half-open, covering every pixel
    /// the box touches. Always at least one pixel.
    pub fn to_pixels(&self, width: u32, height: u32) -> (u32, u32, u32, u32) {
        let px = |v: f64, n: u32| (v * n as f64).clamp(0.0, n as f64);
        let x0 = px(self.x, width).floor() as u32;
        let y0 = px(self.y, height).floor() as u32;
        let x1 = (px(self.x + self.w, width).ceil() as u32)
            .max(x0 + 1)
            .min(width);
        let y1 = (px(self.y + self.h, height).ceil() as u32)
            .max(y0 + 1)
            .min(height);
        (x0.min(width - 1), y0.min(height - 1), x1, y1)
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x, self.y, self.w, self.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Animal,
    Person,
    Vehicle,
}

impl Category {
    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "1" => Some(Self::Animal),
            "2" => Some(Self::Person),
            "3" => Some(Self::Vehicle),
            _ => None,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Self::Animal => "1",
            Self::Person => "2",
            Self::Vehicle => "3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub bbox: BBox,
    pub confidence: f64,
    pub category: Category,
}

/// A detection entry that was dropped during parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseWarning {
    pub image_index: usize,
    pub detection_index: Option<usize>,
    pub message: String,
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.detection_index {
            Some(d) => write!(
                f,
                "image {} detection {}: {}",
                self.image_index, d, self.message
            ),
            None => write!(f, "image {}: {}", self.image_index, self.message),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedDetections {
    pub records: Vec<DetectionRecord>,
    pub warnings: Vec<ParseWarning>,
}

/// Parses a detector batch document. Malformed detections are dropped with a
/// warning; only an unreadable document or an empty image list is fatal.
pub fn parse_detections(detector_file: &[u8]) -> Result<ParsedDetections, IngestError> {
    let doc: Value =
        serde_json::from_slice(detector_file).map_err(|e| IngestError::Malformed(e.to_string()))?;
    let images = doc
        .get("images")
        .and_then(Value::as_array)
        .ok_or_else(|| IngestError::Malformed("missing top-level `images` array".into()))?;
    if images.is_empty() {
        return Err(IngestError::Empty);
    }

    let mut out = ParsedDetections::default();
    for (i, entry) in images.iter().enumerate() {
        let warn = |d: Option<usize>, message: String| ParseWarning {
            image_index: i,
            detection_index: d,
            message,
        };
        let Some(file) = entry
            .get("file")
            .and_then(Value::as_str)
            .filter(|f| !f.is_empty())
        else {
            out.warnings
                .push(warn(None, "missing or empty `file`".into()));
            continue;
        };
        let detections = match entry.get("detections") {
            None | Some(Value::Null) => continue,
            Some(Value::Array(d)) => d,
            Some(_) => {
                out.warnings
                    .push(warn(None, "`detections` is not an array".into()));
                continue;
            }
        };
        for (j, det) in detections.iter().enumerate() {
            match parse_one(file, det) {
                Ok(rec) => out.records.push(rec),
                Err(msg) => out.warnings.push(warn(Some(j), msg)),
            }
        }
    }
    for w in &out.warnings {
        log::warn!("detector file: {w}");
    }
    Ok(out)
}

fn parse_one(file: &str, det: &Value) -> Result<DetectionRecord, String> {
    let category = match det.get("category") {
        Some(Value::String(s)) => Category::from_code(s),
        Some(Value::Number(n)) => Category::from_code(&n.to_string()),
        _ => None,
    }
    .ok_or_else(|| format!("unknown category {:?}", det.get("category")))?;
    let confidence = det
        .get("conf")
        .and_then(Value::as_f64)
        .ok_or("missing `conf`")?;
    if !(0.0..=1.0).contains(&confidence) {
        return Err(format!("confidence {confidence} outside [0, 1]"));
    }
    let coords: Vec<f64> = det
        .get("bbox")
        .and_then(Value::as_array)
        .ok_or("missing `bbox`")?
        .iter()
        .map(|v| v.as_f64().ok_or("non-numeric bbox coordinate"))
        .collect::<Result<_, _>>()?;
    let [x, y, w, h] = coords[..] else {
        return Err(format!("bbox has {} coordinates, expected 4", coords.len()));
    };
    Ok(DetectionRecord {
        image_id: file.to_string(),
        bbox: BBox::new(x, y, w, h)?,
        confidence,
        category,
    })
}

/// Writes records back out in the batch document layout, grouping by image
/// in order of first appearance.
pub fn write_detections(records: &[DetectionRecord]) -> Vec<u8> {
    let mut order: Vec<&str> = Vec::new();
    let mut grouped: std::collections::HashMap<&str, Vec<Value>> = Default::default();
    for r in records {
        let slot = grouped.entry(&r.image_id).or_insert_with(|| {
            order.push(&r.image_id);
            Vec::new()
        });
        slot.push(json!({
            "category": r.category.code(),
            "conf": r.confidence,
            "bbox": [r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h],
        }));
    }
    let images: Vec<Value> = order
        .iter()
        .map(|f| json!({ "file": f, "detections": grouped[f] }))
        .collect();
    let doc = json!({
        "images": images,
        "detection_categories": { "1": "animal", "2": "person", "3": "vehicle" },
    });
    serde_json::to_vec_pretty(&doc).expect("json values always serialize")
}

/// Highest-confidence animal detection for `image_id` at or above
/// `min_conf`. Ties go to the box with the smallest `(x, y)`.
pub fn select_primary_detection<'a>(
    records: &'a [DetectionRecord],
    image_id: &str,
    min_conf: f64,
) -> Option<&'a DetectionRecord> {
    records
        .iter()
        .filter(|r| r.image_id == image_id && r.category == Category::Animal)
        .filter(|r| r.confidence >= min_conf)
        .min_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then(a.bbox.x.total_cmp(&b.bbox.x))
                .then(a.bbox.y.total_cmp(&b.bbox.y))
                .then(a.bbox.w.total_cmp(&b.bbox.w))
                .then(a.bbox.h.total_cmp(&b.bbox.h))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DayNight {
    Day,
    Night,
}

impl fmt::Display for DayNight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Day => "day",
            Self::Night => "night",
        })
    }
}

impl std::str::FromStr for DayNight {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "day" | "d" => Ok(Self::Day),
            "night" | "n" | "ir" => Ok(Self::Night),
            other => Err(format!("unknown day/night flag {other:?}")),
        }
    }
}

/// Where a day/night label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayNightSource {
    Metadata,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Fall,
}

/// Meteorological seasons, Northern Hemisphere.
pub fn derive_season(timestamp: &DateTime<Utc>) -> Season {
    season_for_month(timestamp.month())
}

pub fn season_for_month(month: u32) -> Season {
    match month {
        12 | 1 | 2 => Season::Winter,
        3..=5 => Season::Spring,
        6..=8 => Season::Summer,
        9..=11 => Season::Fall,
        _ => panic!("month {month} out of range"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureContext {
    pub timestamp: Option<DateTime<Utc>>,
    /// Explicit flag from metadata, if any.
    pub day_night: Option<DayNight>,
    season: Option<Season>,
    pub species: String,
    pub location_id: Option<String>,
}

impl CaptureContext {
    pub fn new(
        species: impl Into<String>,
        timestamp: Option<DateTime<Utc>>,
        day_night: Option<DayNight>,
        location_id: Option<String>,
    ) -> Self {
        Self {
            season: timestamp.as_ref().map(derive_season),
            timestamp,
            day_night,
            species: species.into(),
            location_id,
        }
    }

    pub fn season(&self) -> Option<Season> {
        self.season
    }
}

/// Mean over pixels of the population standard deviation across R, G, B.
pub fn chroma_spread(image: &ImageBuffer) -> f64 {
    let total: f64 = image
        .pixels()
        .map(|p| {
            let (r, g, b) = (p[0] as f64, p[1] as f64, p[2] as f64);
            let m = (r + g + b) / 3.0;
            (((r - m).powi(2) + (g - m).powi(2) + (b - m).powi(2)) / 3.0).sqrt()
        })
        .sum();
    total / image.pixel_count() as f64
}

/// Day/night label plus where it came from: the explicit metadata flag wins,
/// otherwise near-grayscale frames are classed as night (infrared).
pub fn resolve_day_night(
    image: &ImageBuffer,
    context: &CaptureContext,
) -> (DayNight, DayNightSource) {
    if let Some(flag) = context.day_night {
        return (flag, DayNightSource::Metadata);
    }
    let label = if chroma_spread(image) < NIGHT_CHROMA_THRESHOLD {
        DayNight::Night
    } else {
        DayNight::Day
    };
    (label, DayNightSource::Heuristic)
}

pub fn classify_day_night(image: &ImageBuffer, context: &CaptureContext) -> DayNight {
    resolve_day_night(image, context).0
}

/// One row of the capture metadata table.
#[derive(Debug, Clone, Deserialize)]
struct MetadataRow {
    file: String,
    species: String,
    #[serde(default)]
    timestamp: Option<String>,
    #[serde(default)]
    location: Option<String>,
    #[serde(default)]
    day_night: Option<String>,
}

/// Parses a comma-separated metadata table with header
/// `file,species,timestamp,location,day_night` (the last three may be
/// empty).
pub fn parse_metadata(bytes: &[u8]) -> Result<Vec<(String, CaptureContext)>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<MetadataRow>().enumerate() {
        let row_no = i + 2;
        let err = |message: String| IngestError::Metadata {
            row: row_no,
            message,
        };
        let row = row.map_err(|e| err(e.to_string()))?;
        let timestamp = row
            .timestamp
            .as_deref()
            .filter(|s| !s.is_empty())
            .map(parse_timestamp)
            .transpose()
            .map_err(err)?;
        let day_night = row
            .day_night
            .as_deref()
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .transpose()
            .map_err(err)?;
        let location = row.location.filter(|s| !s.is_empty());
        out.push((
            row.file,
            CaptureContext::new(row.species, timestamp, day_night, location),
        ));
    }
    Ok(out)
}

/// Accepts RFC 3339, `YYYY-MM-DD HH:MM:SS[.fff]` (taken as UTC) or a bare
/// date.
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in [
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y:%m:%d %H:%M:%S",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc())
        .map_err(|_| format!("unrecognized timestamp {s:?}"))
}
