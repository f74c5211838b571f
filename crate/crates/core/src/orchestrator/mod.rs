//! Per-base state machine (sham first, then the three phenotype variants if
//! the sham passes QC) and the resumable run driver.

pub mod manifest;

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::buffer::ImageBuffer;
use crate::curation::BaseImageRecord;
use crate::editor::{self, EditBackend, PromptTemplates, RetryPolicy, Variant, VariantSpec};
use crate::error::{ManifestError, OrchestratorError};
use crate::fixtures;
use crate::qc::{self, QcParams, QcVerdict};

pub use manifest::{read_manifest, round4, Manifest, ManifestEntry, StepStatus};

/// Where base image pixels come from.
pub trait ImageSource: Sync {
    fn load(&self, base: &BaseImageRecord) -> Result<ImageBuffer, String>;
}

/// Reads `root/<image_id>`.
pub struct DirectorySource {
    pub root: PathBuf,
}

impl ImageSource for DirectorySource {
    fn load(&self, base: &BaseImageRecord) -> Result<ImageBuffer, String> {
        ImageBuffer::load(self.root.join(&base.image_id)).map_err(|e| e.to_string())
    }
}

/// Generates a deterministic scene per base id. For dry runs and tests.
pub struct SyntheticSource {
    pub width: u32,
    pub height: u32,
}

impl ImageSource for SyntheticSource {
    fn load(&self, base: &BaseImageRecord) -> Result<ImageBuffer, String> {
        Ok(fixtures::scene_for(base, self.width, self.height))
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub run_id: String,
    pub seed: u64,
    /// Bases processed concurrently.
    pub in_flight: usize,
    pub qc: QcParams,
    pub retry: RetryPolicy,
    pub templates: PromptTemplates,
}

impl PipelineConfig {
    pub fn new(run_id: impl Into<String>, seed: u64) -> Self {
        Self {
            run_id: run_id.into(),
            seed,
            in_flight: 4,
            qc: QcParams::default(),
            retry: RetryPolicy::default(),
            templates: PromptTemplates::builtin().clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseOutcome {
    ShamPassed,
    ShamFailed,
    Errored,
}

#[derive(Debug, Clone)]
pub struct BaseResult {
    pub base_image_id: String,
    pub outcome: BaseOutcome,
    /// Sham verdict if the sham was generated in this invocation.
    pub sham_verdict: Option<QcVerdict>,
    pub skipped_variants: u8,
    /// Variants generated and checked in this invocation, sham included.
    pub variant_results: Vec<(VariantSpec, QcVerdict)>,
    /// Backend edits that returned an image in this invocation.
    pub api_calls_spent: u32,
    /// Steps taken from the manifest instead of the backend.
    pub resumed_steps: u32,
}

/// Shared state for one run.
pub struct RunContext<'a> {
    pub config: &'a PipelineConfig,
    pub manifest: &'a Mutex<Manifest>,
    /// Entries of this run already in the manifest, by (base, order).
    pub done: &'a HashMap<(String, u8), ManifestEntry>,
}

impl RunContext<'_> {
    fn append(&self, entry: &ManifestEntry) -> Result<(), ManifestError> {
        self.manifest.lock().expect("manifest lock").append(entry)
    }
}

fn base_entry(
    base: &BaseImageRecord,
    variant: Variant,
    status: StepStatus,
    backend: &dyn EditBackend,
    ctx: &RunContext<'_>,
) -> ManifestEntry {
    ManifestEntry {
        run_id: ctx.config.run_id.clone(),
        timestamp: chrono::Utc::now(),
        base_image_id: base.image_id.clone(),
        species: base.species.clone(),
        day_night: base.day_night,
        order_index: variant.order_index(),
        variant,
        severity: variant.severity(),
        status,
        pass: None,
        reason: None,
        gate_path: None,
        raw_mae: None,
        norm_mae: None,
        ssim: None,
        mask_area_fraction: None,
        error: None,
        params_fingerprint: ctx.config.qc.fingerprint(),
        template_version: ctx.config.templates.version().to_string(),
        seed: ctx.config.seed,
        backend_id: backend.id().to_string(),
        latency_ms: 0,
        attempts: 0,
    }
}

fn errored(mut entry: ManifestEntry, message: String) -> ManifestEntry {
    log::warn!("{}#{}: {message}", entry.base_image_id, entry.order_index);
    entry.error = Some(message);
    entry
}

/// Runs the sham and, if it passes, the remaining variants of one base.
/// Every step is appended to the manifest before the next one starts.
pub fn process_base(
    base: &BaseImageRecord,
    source: &dyn ImageSource,
    backend: &dyn EditBackend,
    ctx: &RunContext<'_>,
) -> Result<BaseResult, ManifestError> {
    let mut result = BaseResult {
        base_image_id: base.image_id.clone(),
        outcome: BaseOutcome::Errored,
        sham_verdict: None,
        skipped_variants: 0,
        variant_results: Vec::new(),
        api_calls_spent: 0,
        resumed_steps: 0,
    };

    let plan = match editor::variant_plan_with(base, &ctx.config.templates) {
        Ok(plan) => plan,
        Err(e) => {
            if !ctx.done.contains_key(&(base.image_id.clone(), 0)) {
                let entry = base_entry(base, Variant::Sham, StepStatus::Errored, backend, ctx);
                ctx.append(&errored(entry, e.to_string()))?;
            }
            return Ok(result);
        }
    };

    let mut image: Option<Result<ImageBuffer, String>> = None;
    let mut step =
        |spec: &VariantSpec, result: &mut BaseResult| -> Result<ManifestEntry, ManifestError> {
            if let Some(previous) = ctx.done.get(&(base.image_id.clone(), spec.order_index)) {
                result.resumed_steps += 1;
                return Ok(previous.clone());
            }
            let variant = spec.variant();
            let mut entry = base_entry(base, variant, StepStatus::Generated, backend, ctx);
            let original = match image.get_or_insert_with(|| source.load(base)) {
                Ok(img) => img,
                Err(e) => {
                    entry.status = StepStatus::Errored;
                    let entry = errored(entry, format!("loading base image: {e}"));
                    ctx.append(&entry)?;
                    return Ok(entry);
                }
            };
            match editor::edit(original, spec, base.bbox(), backend, &ctx.config.retry) {
                Err(e) => {
                    entry.status = StepStatus::Errored;
                    entry = errored(entry, e.to_string());
                }
                Ok(edited) => {
                    result.api_calls_spent += 1;
                    entry.latency_ms = edited.latency_ms;
                    entry.attempts = edited.attempts;
                    entry.backend_id = edited.backend_id.clone();
                    match qc::evaluate_pair(
                        original,
                        &edited.image,
                        base.bbox(),
                        base.day_night,
                        &ctx.config.qc,
                    ) {
                        Ok(verdict) => {
                            entry.set_verdict(&verdict);
                            if spec.is_sham() {
                                result.sham_verdict = Some(verdict.clone());
                            }
                            result.variant_results.push((spec.clone(), verdict));
                        }
                        Err(e) => {
                            entry.status = StepStatus::Errored;
                            entry = errored(entry, format!("qc: {e}"));
                        }
                    }
                }
            }
            ctx.append(&entry)?;
            Ok(entry)
        };

    let sham = step(&plan[0], &mut result)?;
    match (sham.status, sham.pass) {
        (StepStatus::Generated, Some(true)) => {
            result.outcome = BaseOutcome::ShamPassed;
            for spec in &plan[1..] {
                step(spec, &mut result)?;
            }
        }
        (StepStatus::Generated, _) => {
            result.outcome = BaseOutcome::ShamFailed;
            result.skipped_variants = 3;
            for spec in &plan[1..] {
                if ctx
                    .done
                    .contains_key(&(base.image_id.clone(), spec.order_index))
                {
                    result.resumed_steps += 1;
                    continue;
                }
                let entry = base_entry(base, spec.variant(), StepStatus::Skipped, backend, ctx);
                ctx.append(&entry)?;
            }
        }
        _ => result.outcome = BaseOutcome::Errored,
    }
    Ok(result)
}

/// Run-level totals, derived from the manifest entries of one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub bases_total: usize,
    /// Bases whose sham was generated and checked.
    pub bases_processed: usize,
    /// Bases whose sham step errored.
    pub bases_errored: usize,
    /// Bases in the subsample without a generated sham (errored or not
    /// reached).
    pub bases_unaccounted: usize,
    pub variants_generated: usize,
    pub qc_passes: usize,
    pub sham_rejections: usize,
    pub variants_skipped: usize,
    pub calls_saved: usize,
    pub errored_steps: usize,
    /// Successful backend edits made by this invocation.
    pub backend_calls: usize,
    pub resumed_steps: usize,
}

impl RunSummary {
    pub fn from_entries<'a>(
        run_id: &str,
        bases: &HashSet<&str>,
        entries: impl IntoIterator<Item = &'a ManifestEntry>,
    ) -> RunSummary {
        let mut s = RunSummary {
            run_id: run_id.to_string(),
            bases_total: bases.len(),
            ..RunSummary::default()
        };
        let mut sham_generated = HashSet::new();
        for e in entries {
            if e.run_id != run_id || !bases.contains(e.base_image_id.as_str()) {
                continue;
            }
            match e.status {
                StepStatus::Generated => {
                    s.variants_generated += 1;
                    s.qc_passes += e.passed() as usize;
                    if e.order_index == 0 {
                        sham_generated.insert(e.base_image_id.as_str());
                        s.sham_rejections += !e.passed() as usize;
                    }
                }
                StepStatus::Skipped => s.variants_skipped += 1,
                StepStatus::Errored => {
                    s.errored_steps += 1;
                    s.bases_errored += (e.order_index == 0) as usize;
                }
            }
        }
        s.bases_processed = sham_generated.len();
        s.bases_unaccounted = s.bases_total - s.bases_processed;
        s.calls_saved = 3 * s.sham_rejections;
        s
    }
}

/// Processes every base, skipping steps already recorded for this run.
pub fn run_pipeline(
    bases: &[BaseImageRecord],
    source: &dyn ImageSource,
    backend: &dyn EditBackend,
    config: &PipelineConfig,
    manifest_path: &Path,
) -> Result<RunSummary, OrchestratorError> {
    config
        .qc
        .validate()
        .map_err(|e| OrchestratorError::Aborted(e.to_string()))?;
    let mut ids = HashSet::new();
    for b in bases {
        if !ids.insert(b.image_id.as_str()) {
            return Err(OrchestratorError::Aborted(format!(
                "duplicate base image {}",
                b.image_id
            )));
        }
    }

    let (manifest, existing) = Manifest::open(manifest_path)?;
    let done: HashMap<(String, u8), ManifestEntry> = existing
        .iter()
        .filter(|e| e.run_id == config.run_id)
        .map(|e| ((e.base_image_id.clone(), e.order_index), e.clone()))
        .collect();
    if !done.is_empty() {
        log::info!(
            "resuming run {}: {} steps already recorded",
            config.run_id,
            done.len()
        );
    }
    let manifest = Mutex::new(manifest);
    let ctx = RunContext {
        config,
        manifest: &manifest,
        done: &done,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.in_flight.max(1))
        .build()
        .map_err(|e| OrchestratorError::Aborted(e.to_string()))?;
    let results: Vec<BaseResult> = pool.install(|| {
        bases
            .par_iter()
            .map(|b| process_base(b, source, backend, &ctx))
            .collect::<Result<_, _>>()
    })?;
    drop(manifest);

    let entries = read_manifest(manifest_path)?;
    let mut summary = RunSummary::from_entries(&config.run_id, &ids, &entries);
    summary.backend_calls = results.iter().map(|r| r.api_calls_spent as usize).sum();
    summary.resumed_steps = results.iter().map(|r| r.resumed_steps as usize).sum();
    log::info!(
        "run {}: {} bases, {} generated, {} passes, {} sham rejections",
        summary.run_id,
        summary.bases_total,
        summary.variants_generated,
        summary.qc_passes,
        summary.sham_rejections
    );
    Ok(summary)
}
