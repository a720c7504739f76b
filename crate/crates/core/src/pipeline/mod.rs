//! Two-stage screening: a free-text classification call, then a parsing
//! call that turns the answer into a structured result.
//!
//! Structural exclusions short-circuit before any backend call. Any failure
//! in the parsing stage degrades to a `Maybe` result that asks for manual
//! review. Exhausting retries on the classification call is a case-level
//! error, since no tier can be honestly reported.

mod backend;
mod http;
pub mod parse;
mod prompts;
mod stub;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::case::{CaseRecord, DocumentationBundle, SurgicalCase};
use crate::exec::Execution;
use crate::rubric::{Classification, CriterionId};
use crate::rules::apply_structural_rules;

pub use backend::{BackendError, BackendErrorKind, LlmBackend};
pub use http::{completion_text, HttpBackend, HttpBackendConfig};
pub use parse::{ParseFailure, FALLBACK_EXPLANATION, REVIEW_NOTICE};
pub use prompts::{
    build_documentation, parse_documentation, PromptBundle, PromptError, PromptTemplates,
    DOCUMENTATION_PLACEHOLDER, MEDICATIONS_HEADING, NOTE_HEADING, NOT_AVAILABLE,
    RAW_RESPONSE_PLACEHOLDER,
};
pub use stub::{render_classification, render_parse, Fault, StubBackend, StubFaults};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResultSource {
    StructuralRule,
    LlmPipeline,
    ParseFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningResult {
    pub classification: Classification,
    pub explanation: String,
    pub criteria_cited: Vec<CriterionId>,
    pub source: ResultSource,
    /// Free-text answer of the classification stage. Empty for structural
    /// exclusions.
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("case {case_id}: classification call to {backend_id} failed after {attempts} attempts: {source}")]
pub struct TriageError {
    pub case_id: String,
    pub backend_id: String,
    pub attempts: u32,
    #[source]
    pub source: BackendError,
}

impl TriageError {
    /// Failed cases can be resubmitted in a later batch.
    pub fn is_retriable(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Extra attempts per call after the first.
    pub retries: u32,
    /// Delay before the first retry. Doubles on each further retry.
    #[serde(with = "millis")]
    pub backoff: Duration,
    /// Thread bound for batch triage. `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            retries: 2,
            backoff: Duration::from_millis(500),
            workers: None,
        }
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

pub struct Pipeline<B> {
    backend: B,
    templates: PromptTemplates,
    config: PipelineConfig,
}

impl<B: LlmBackend> Pipeline<B> {
    pub fn new(backend: B) -> Self {
        Self::with_config(
            backend,
            PromptTemplates::builtin(),
            PipelineConfig::default(),
        )
    }

    pub fn with_config(backend: B, templates: PromptTemplates, config: PipelineConfig) -> Self {
        Self {
            backend,
            templates,
            config,
        }
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn templates(&self) -> &PromptTemplates {
        &self.templates
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Stage one: the free-text answer for this documentation.
    pub fn classify(&self, bundle: &DocumentationBundle) -> Result<String, (u32, BackendError)> {
        let prompt = self
            .templates
            .classification_prompt(&build_documentation(bundle));
        self.call_with_retry(&prompt)
    }

    /// Stage two. Total: always yields a result.
    pub fn parse_result(&self, raw_response: &str) -> ScreeningResult {
        let prompt = self.templates.parsing_prompt(raw_response);
        let reply = match self.call_with_retry(&prompt) {
            Ok(reply) => reply,
            Err((_, err)) => {
                tracing::warn!(
                    backend = self.backend.backend_id(),
                    "parse call failed: {err}"
                );
                return fallback_result(raw_response);
            }
        };
        match parse::validate_structured(&reply) {
            Ok((classification, explanation)) => {
                let explanation = if parse::mentions_insufficiency(raw_response)
                    && !parse::urges_review(&explanation)
                {
                    format!("{REVIEW_NOTICE} {explanation}")
                } else {
                    explanation
                };
                ScreeningResult {
                    classification,
                    criteria_cited: parse::cited_criteria(&explanation),
                    explanation,
                    source: ResultSource::LlmPipeline,
                    raw_response: raw_response.to_string(),
                }
            }
            Err(failure) => {
                tracing::warn!(
                    backend = self.backend.backend_id(),
                    "unusable parse reply: {failure}"
                );
                fallback_result(raw_response)
            }
        }
    }

    pub fn triage_case(
        &self,
        case: &SurgicalCase,
        bundle: &DocumentationBundle,
    ) -> Result<ScreeningResult, TriageError> {
        if let Some(reason) = apply_structural_rules(case).reason {
            return Ok(ScreeningResult {
                classification: Classification::Negative,
                explanation: reason.explanation().to_string(),
                criteria_cited: Vec::new(),
                source: ResultSource::StructuralRule,
                raw_response: String::new(),
            });
        }
        let raw = self
            .classify(bundle)
            .map_err(|(attempts, source)| TriageError {
                case_id: case.case_id.clone(),
                backend_id: self.backend.backend_id().to_string(),
                attempts,
                source,
            })?;
        Ok(self.parse_result(&raw))
    }

    /// One outcome per record, in input order.
    pub fn triage_batch(
        &self,
        records: &[CaseRecord],
        exec: Execution,
    ) -> Vec<Result<ScreeningResult, TriageError>> {
        exec.map_with_workers(records, self.config.workers, |r| {
            self.triage_case(&r.case, &r.documentation)
        })
    }

    fn call_with_retry(&self, user: &str) -> Result<String, (u32, BackendError)> {
        let system = self.templates.system();
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match self.backend.complete(system, user) {
                Ok(reply) => return Ok(reply),
                Err(err) if err.is_retriable() && attempt <= self.config.retries => {
                    let delay = self.config.backoff * 2u32.saturating_pow(attempt - 1);
                    tracing::debug!(attempt, ?delay, "retrying backend call: {err}");
                    std::thread::sleep(delay);
                }
                Err(err) => return Err((attempt, err)),
            }
        }
    }
}

pub fn fallback_result(raw_response: &str) -> ScreeningResult {
    ScreeningResult {
        classification: Classification::Maybe,
        explanation: FALLBACK_EXPLANATION.to_string(),
        criteria_cited: Vec::new(),
        source: ResultSource::ParseFallback,
        raw_response: raw_response.to_string(),
    }
}
