//! Edit backends and the retrying `edit` call.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::perturb::{mock_perturb, PerturbKind};
use super::VariantSpec;
use crate::buffer::ImageBuffer;
use crate::error::EditorError;
use crate::ingest::BBox;

/// Largest relative aspect-ratio difference that is fixed by resampling.
pub const ASPECT_TOLERANCE: f64 = 0.02;

pub struct EditRequest<'a> {
    pub base_image_id: &'a str,
    pub order_index: u8,
    pub image: &'a ImageBuffer,
    pub prompt: &'a str,
    pub bbox: &'a BBox,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Transport failure, rate limit or server error; worth retrying.
    #[error("transient: {0}")]
    Transient(String),
    #[error("permanent: {0}")]
    Permanent(String),
}

pub trait EditBackend: Send + Sync {
    fn id(&self) -> &str;
    fn edit(&self, request: &EditRequest<'_>) -> Result<ImageBuffer, BackendError>;
}

/// Waits between attempts. One entry per retry.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub delays: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            delays: [1, 4, 16].map(Duration::from_secs).to_vec(),
        }
    }
}

impl RetryPolicy {
    /// Same retry count as the default, without sleeping.
    pub fn immediate() -> Self {
        Self {
            delays: vec![Duration::ZERO; 3],
        }
    }

    pub fn none() -> Self {
        Self { delays: Vec::new() }
    }

    pub fn max_attempts(&self) -> u32 {
        self.delays.len() as u32 + 1
    }
}

#[derive(Debug, Clone)]
pub struct EditResult {
    pub variant: VariantSpec,
    /// Same dimensions as the base image.
    pub image: ImageBuffer,
    pub backend_id: String,
    pub latency_ms: u64,
    pub attempts: u32,
}

/// Brings a backend response to the base image's size. Small aspect
/// differences are resampled; anything else is rejected.
pub fn normalize_geometry(
    base: &ImageBuffer,
    edited: ImageBuffer,
) -> Result<ImageBuffer, EditorError> {
    if base.same_dimensions(&edited) {
        return Ok(edited);
    }
    let aspect = |i: &ImageBuffer| i.width() as f64 / i.height() as f64;
    let drift = (aspect(&edited) / aspect(base) - 1.0).abs();
    if drift > ASPECT_TOLERANCE {
        return Err(EditorError::Geometry(format!(
            "backend returned {}x{} for a {}x{} base (aspect off by {:.1}%)",
            edited.width(),
            edited.height(),
            base.width(),
            base.height(),
            drift * 100.0
        )));
    }
    edited
        .resize_bilinear(base.width(), base.height())
        .map_err(|e| EditorError::Geometry(e.to_string()))
}

/// Sends one variant to the backend, retrying transient failures.
pub fn edit(
    base: &ImageBuffer,
    spec: &VariantSpec,
    bbox: &BBox,
    backend: &dyn EditBackend,
    retry: &RetryPolicy,
) -> Result<EditResult, EditorError> {
    let request = EditRequest {
        base_image_id: &spec.base_image_id,
        order_index: spec.order_index,
        image: base,
        prompt: &spec.prompt,
        bbox,
    };
    let start = Instant::now();
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        let call_start = Instant::now();
        let outcome = backend.edit(&request);
        let call_ms = call_start.elapsed().as_millis();
        match outcome {
            Ok(image) => {
                log::info!(
                    "edit {}#{} via {} ok in {call_ms} ms (attempt {attempt})",
                    spec.base_image_id,
                    spec.order_index,
                    backend.id()
                );
                let image = normalize_geometry(base, image)?;
                return Ok(EditResult {
                    variant: spec.clone(),
                    image,
                    backend_id: backend.id().to_string(),
                    latency_ms: start.elapsed().as_millis() as u64,
                    attempts: attempt,
                });
            }
            Err(e) => {
                log::warn!(
                    "edit {}#{} via {} failed in {call_ms} ms (attempt {attempt}): {e}",
                    spec.base_image_id,
                    spec.order_index,
                    backend.id()
                );
                match e {
                    BackendError::Transient(_) if attempt < retry.max_attempts() => {
                        std::thread::sleep(retry.delays[attempt as usize - 1]);
                    }
                    _ => {
                        return Err(EditorError::Backend(format!(
                            "{} after {attempt} attempt(s): {e}",
                            backend.id()
                        )))
                    }
                }
            }
        }
    }
}

/// What the mock does for one call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockStep {
    Identity,
    /// In-box texture edit on the request's bounding box.
    InBox {
        texture_amp: u8,
    },
    Perturb(PerturbKind),
    Fail {
        transient: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockOverride {
    pub base_image_id: String,
    pub order_index: u8,
    pub step: MockStep,
}

/// Serializable mock configuration: a default step for shams, one for the
/// other variants, and per-call overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockMode {
    pub sham: MockStep,
    pub variant: MockStep,
    pub overrides: Vec<MockOverride>,
}

impl Default for MockMode {
    fn default() -> Self {
        Self {
            sham: MockStep::Identity,
            variant: MockStep::InBox { texture_amp: 48 },
            overrides: Vec::new(),
        }
    }
}

/// Deterministic in-process backend with a call counter.
pub struct MockBackend {
    id: String,
    sham: MockStep,
    variant: MockStep,
    script: HashMap<(String, u8), MockStep>,
    calls: AtomicU64,
    requests: AtomicU64,
    call_log: Option<Mutex<File>>,
    delay: Duration,
}

impl MockBackend {
    pub fn new(mode: MockMode) -> Self {
        Self {
            id: "mock".into(),
            sham: mode.sham,
            variant: mode.variant,
            script: mode
                .overrides
                .into_iter()
                .map(|o| ((o.base_image_id, o.order_index), o.step))
                .collect(),
            calls: AtomicU64::new(0),
            requests: AtomicU64::new(0),
            call_log: None,
            delay: Duration::ZERO,
        }
    }

    /// Returns every input unchanged.
    pub fn identity() -> Self {
        Self::new(MockMode {
            sham: MockStep::Identity,
            variant: MockStep::Identity,
            overrides: Vec::new(),
        })
    }

    pub fn fixed(step: MockStep) -> Self {
        Self::new(MockMode {
            sham: step,
            variant: step,
            overrides: Vec::new(),
        })
    }

    pub fn with_step(mut self, base_image_id: &str, order_index: u8, step: MockStep) -> Self {
        self.script
            .insert((base_image_id.to_string(), order_index), step);
        self
    }

    /// Appends `base_image_id<TAB>order_index` to a file on every call, so
    /// calls can be counted across processes.
    pub fn with_call_log(mut self, path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.call_log = Some(Mutex::new(file));
        Ok(self)
    }

    /// Sleeps this long inside every call.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    /// Requests that returned an image (billable edits).
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Every request received, including failed ones.
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn step_for(&self, base_image_id: &str, order_index: u8) -> MockStep {
        self.script
            .get(&(base_image_id.to_string(), order_index))
            .copied()
            .unwrap_or(if order_index == 0 {
                self.sham
            } else {
                self.variant
            })
    }
}

impl EditBackend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn edit(&self, request: &EditRequest<'_>) -> Result<ImageBuffer, BackendError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        if let Some(log) = &self.call_log {
            let mut f = log.lock().expect("call log lock");
            writeln!(f, "{}\t{}", request.base_image_id, request.order_index)
                .and_then(|_| f.flush())
                .map_err(|e| BackendError::Permanent(format!("call log: {e}")))?;
        }
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let kind = match self.step_for(request.base_image_id, request.order_index) {
            MockStep::Identity => PerturbKind::Identity,
            MockStep::InBox { texture_amp } => PerturbKind::InBoxEdit {
                bbox: *request.bbox,
                texture_amp,
            },
            MockStep::Perturb(kind) => kind,
            MockStep::Fail { transient: true } => {
                return Err(BackendError::Transient("scripted transient failure".into()))
            }
            MockStep::Fail { transient: false } => {
                return Err(BackendError::Permanent("scripted permanent failure".into()))
            }
        };
        let out = mock_perturb(request.image, &kind)
            .map_err(|e| BackendError::Permanent(e.to_string()))?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_secs: u64,
    pub max_response_bytes: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            token_env: "WILDSYNTH_API_TOKEN".into(),
            timeout_secs: 120,
            max_response_bytes: 64 << 20,
        }
    }
}

#[derive(Serialize)]
struct RemoteRequestBody<'a> {
    base_image_id: &'a str,
    order_index: u8,
    prompt: &'a str,
    image_png_base64: String,
}

/// HTTP backend. POSTs a JSON body with the prompt and a base64 PNG and
/// expects encoded image bytes back.
pub struct RemoteBackend {
    id: String,
    config: RemoteConfig,
    token: Option<String>,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, EditorError> {
        if config.endpoint.is_empty() {
            return Err(EditorError::Backend(
                "remote endpoint is not configured".into(),
            ));
        }
        let token = std::env::var(&config.token_env).ok();
        if token.is_none() {
            log::warn!(
                "{} is not set; sending requests without a token",
                config.token_env
            );
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            id: format!("remote:{}", config.endpoint),
            config,
            token,
            agent,
        })
    }
}

impl EditBackend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn edit(&self, request: &EditRequest<'_>) -> Result<ImageBuffer, BackendError> {
        let body = RemoteRequestBody {
            base_image_id: request.base_image_id,
            order_index: request.order_index,
            prompt: request.prompt,
            image_png_base64: base64::engine::general_purpose::STANDARD
                .encode(request.image.encode_png()),
        };
        let payload =
            serde_json::to_vec(&body).map_err(|e| BackendError::Permanent(e.to_string()))?;
        log::debug!(
            "POST {} for {}#{} ({} bytes)",
            self.config.endpoint,
            request.base_image_id,
            request.order_index,
            payload.len()
        );
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = req
            .send(&payload[..])
            .map_err(|e| BackendError::Transient(format!("transport: {e}")))?;
        let status = response.status().as_u16();
        let bytes = response
            .body_mut()
            .with_config()
            .limit(self.config.max_response_bytes)
            .read_to_vec()
            .map_err(|e| BackendError::Transient(format!("reading response: {e}")))?;
        log::debug!(
            "{} answered {status} with {} bytes",
            self.config.endpoint,
            bytes.len()
        );
        match status {
            200..=299 => {
                ImageBuffer::decode(&bytes).map_err(|e| BackendError::Permanent(e.to_string()))
            }
            429 | 500..=599 => Err(BackendError::Transient(format!("HTTP {status}"))),
            _ => Err(BackendError::Permanent(format!(
                "HTTP {status}: {}",
                String::from_utf8_lossy(&bytes[..bytes.len().min(200)])
            ))),
        }
    }
}
