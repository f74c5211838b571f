pub mod buffer;
pub mod curation;
pub mod editor;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod ingest;
pub mod orchestrator;
pub mod qc;
pub mod report;
pub mod rng;
pub mod taxonomy;

pub use buffer::ImageBuffer;
pub use curation::{BaseImageRecord, StratumKey};
pub use editor::{EditBackend, Severity, Variant, VariantSpec};
pub use error::{
    CurationError, EditorError, EvalError, ImageError, IngestError, ManifestError,
    OrchestratorError, QcError,
};
pub use eval::{EvalReport, FeatureRecord, HeadConfig, HeadKind, Split};
pub use ingest::{BBox, DayNight, DetectionRecord};
pub use orchestrator::{ManifestEntry, PipelineConfig, RunSummary, StepStatus};
pub use qc::{FailReason, GatePath, QcParams, QcVerdict};
