//! Surgical co-management triage.
//!
//! Scheduled surgical cases pass through a structural pre-filter, then a
//! two-stage LLM workflow (classify, then parse into a structured result).
//! Clinician Yes/No adjudications are captured in an append-only log and
//! evaluated against the model's three-tier output.
//!
//! Data-parallel paths (batch triage, bootstrap replicates) run on rayon
//! when the `parallel` feature is enabled and fall back to plain iteration
//! otherwise. Both paths produce identical output.

pub mod case;
pub mod exec;
pub mod feedback;
pub mod fixture;
pub mod generator;
pub mod ingest;
pub mod labels;
pub mod metrics;
pub mod pipeline;
pub mod rubric;
pub mod rules;
pub mod store;
mod text;

pub use case::{DocumentationBundle, PatientClass, Site, Specialty, SurgicalCase};
pub use feedback::{ClinicianFeedback, Decision, FeedbackCategory, KeywordMap};
pub use generator::{Archetype, ArchetypeMix, GeneratedCase, GeneratorConfig};
pub use metrics::{CollapsePolicy, ConfusionCounts, LabeledRecord, Metric, MetricsReport};
pub use pipeline::{
    LlmBackend, Pipeline, PipelineConfig, ResultSource, ScreeningResult, StubBackend, TriageError,
};
pub use rubric::{Classification, ComorbidityProfile, CriterionHit, CriterionId, Vocabulary};
pub use rules::{ExclusionReason, RuleOutcome};
pub use store::{TriageStore, Window};
