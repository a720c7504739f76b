//! Deterministic in-process backend.
//!
//! Classification requests are answered by reading the documentation back
//! out of the prompt and running rubric extraction over it. Parse requests
//! are answered by pulling the tier word and explanation out of the passage.
//! Faults can be injected per stage for testing the fallback paths.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde_json::json;

use super::backend::{BackendError, BackendErrorKind, LlmBackend};
use super::parse::{mentions_insufficiency, REVIEW_NOTICE};
use super::prompts::{parse_documentation, PromptTemplates};
use crate::rubric::{Classification, CriterionId, Extraction, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Reply with text that carries no usable structure.
    Garble,
    Timeout,
    /// Report this tier regardless of the documentation.
    WrongTier(Classification),
}

/// Fault configuration. `transient_*` counts fail that many calls of the
/// stage with a retriable error before answering normally.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StubFaults {
    pub classification: Fault,
    pub parse: Fault,
    pub transient_classification_failures: usize,
    pub transient_parse_failures: usize,
}

pub struct StubBackend {
    id: String,
    templates: PromptTemplates,
    vocabulary: Vocabulary,
    faults: StubFaults,
    classification_calls: AtomicUsize,
    parse_calls: AtomicUsize,
}

impl StubBackend {
    pub fn new() -> Self {
        Self::with_faults(StubFaults::default())
    }

    pub fn with_faults(faults: StubFaults) -> Self {
        Self {
            id: "stub".to_string(),
            templates: PromptTemplates::builtin(),
            vocabulary: Vocabulary::builtin().clone(),
            faults,
            classification_calls: AtomicUsize::new(0),
            parse_calls: AtomicUsize::new(0),
        }
    }

    /// Use custom templates. They must match the ones the pipeline sends.
    pub fn with_templates(mut self, templates: PromptTemplates) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_vocabulary(mut self, vocabulary: Vocabulary) -> Self {
        self.vocabulary = vocabulary;
        self
    }

    pub fn classification_calls(&self) -> usize {
        self.classification_calls.load(Ordering::SeqCst)
    }

    pub fn parse_calls(&self) -> usize {
        self.parse_calls.load(Ordering::SeqCst)
    }

    pub fn total_calls(&self) -> usize {
        self.classification_calls() + self.parse_calls()
    }

    fn answer_classification(
        &self,
        documentation: &str,
        call: usize,
    ) -> Result<String, BackendError> {
        if call < self.faults.transient_classification_failures {
            return Err(BackendError::transport("injected transient failure"));
        }
        let bundle = parse_documentation(documentation).unwrap_or_default();
        let extraction = self.vocabulary.extract(&bundle);
        match self.faults.classification {
            Fault::None => Ok(render_classification(&extraction, None)),
            Fault::Garble => Ok("<<< ~~ >>>".to_string()),
            Fault::Timeout => Err(BackendError::timeout("injected timeout")),
            Fault::WrongTier(tier) => Ok(render_classification(&extraction, Some(tier))),
        }
    }

    fn answer_parse(&self, passage: &str, call: usize) -> Result<String, BackendError> {
        if call < self.faults.transient_parse_failures {
            return Err(BackendError::transport("injected transient failure"));
        }
        match self.faults.parse {
            Fault::None => Ok(render_parse(passage, None)),
            Fault::Garble => Ok("{\"classification\": Affirm".to_string()),
            Fault::Timeout => Err(BackendError::timeout("injected timeout")),
            Fault::WrongTier(tier) => Ok(render_parse(passage, Some(tier))),
        }
    }
}

impl Default for StubBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl LlmBackend for StubBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn complete(&self, _system: &str, user: &str) -> Result<String, BackendError> {
        if let Some(passage) = self.templates.raw_response_in(user) {
            let call = self.parse_calls.fetch_add(1, Ordering::SeqCst);
            return self.answer_parse(passage, call);
        }
        if let Some(documentation) = self.templates.documentation_in(user) {
            let call = self.classification_calls.fetch_add(1, Ordering::SeqCst);
            return self.answer_classification(documentation, call);
        }
        Err(BackendError::new(
            BackendErrorKind::Rejected,
            "prompt matches neither the classification nor the parsing template",
        ))
    }
}

/// Free-text answer in the shape the classification prompt asks for.
pub fn render_classification(
    extraction: &Extraction,
    tier_override: Option<Classification>,
) -> String {
    let tier = tier_override.unwrap_or(extraction.classification);
    let mut explanation = String::new();
    if extraction.insufficient {
        explanation.push_str(
            "The documentation was insufficient: the pre-operative evaluation note is not available. ",
        );
    }
    if extraction.hits.is_empty() {
        explanation.push_str("None of the listed eligibility criteria are explicitly documented.");
    } else {
        let mut ids: Vec<CriterionId> = extraction.hits.iter().map(|h| h.criterion_id).collect();
        ids.dedup();
        let list: Vec<String> = ids.iter().map(|id| id.to_string()).collect();
        explanation.push_str(&format!(
            "Criteria met: {}. Direct quotes: ",
            list.join(", ")
        ));
        let quotes: Vec<String> = extraction
            .hits
            .iter()
            .map(|h| format!("\"{}\" (criterion {})", h.evidence_span, h.criterion_id))
            .collect();
        explanation.push_str(&quotes.join("; "));
        explanation.push('.');
    }
    format!("{tier}\n\nExplanation: {explanation}")
}

/// JSON answer in the shape the parsing prompt asks for.
pub fn render_parse(passage: &str, tier_override: Option<Classification>) -> String {
    let tier = tier_override.or_else(|| find_tier(passage));
    let body = match passage.find("Explanation:") {
        Some(at) => passage[at + "Explanation:".len()..].trim(),
        None => passage.trim(),
    };
    let explanation = if mentions_insufficiency(passage) {
        format!("{REVIEW_NOTICE} {body}")
    } else {
        body.to_string()
    };
    json!({
        "classification": tier.map(Classification::as_str),
        "explanation": explanation,
    })
    .to_string()
}

// A "Classification:" line wins, otherwise the first tier word anywhere.
fn find_tier(passage: &str) -> Option<Classification> {
    for line in passage.lines() {
        let line = line.trim();
        if let Some(rest) = strip_prefix_ci(line, "classification:") {
            if let Some(t) = first_tier_word(rest) {
                return Some(t);
            }
        }
    }
    first_tier_word(passage)
}

fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    let head = s.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix)
        .then(|| &s[prefix.len()..])
}

fn first_tier_word(text: &str) -> Option<Classification> {
    text.split(|c: char| !c.is_ascii_alphabetic())
        .find_map(|w| w.parse::<Classification>().ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::DocumentationBundle;
    use crate::pipeline::prompts::build_documentation;

    fn classify(stub: &StubBackend, bundle: &DocumentationBundle) -> String {
        let t = PromptTemplates::builtin();
        stub.complete(
            t.system(),
            &t.classification_prompt(&build_documentation(bundle)),
        )
        .unwrap()
    }

    #[test]
    fn classification_reads_documentation_back() {
        let stub = StubBackend::new();
        let bundle = DocumentationBundle::new(
            "Past medical history:\n- History of atrial fibrillation on anticoagulation.",
            vec![],
        );
        let reply = classify(&stub, &bundle);
        assert!(reply.starts_with("Affirmative\n"), "{reply}");
        assert!(reply.contains("(criterion 8)"), "{reply}");
        assert_eq!(stub.classification_calls(), 1);
        assert_eq!(stub.parse_calls(), 0);
    }

    #[test]
    fn parse_extracts_tier_and_explanation() {
        let out = render_parse("Maybe\n\nExplanation: Criteria met: 12.", None);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["classification"], "Maybe");
        assert_eq!(v["explanation"], "Criteria met: 12.");
    }

    #[test]
    fn parse_prefers_labeled_line() {
        let out = render_parse("Not Negative at all.\nClassification: Affirmative", None);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["classification"], "Affirmative");
    }

    #[test]
    fn parse_without_tier_gives_null() {
        let v: serde_json::Value = serde_json::from_str(&render_parse("<<< ~~ >>>", None)).unwrap();
        assert!(v["classification"].is_null());
    }

    #[test]
    fn insufficient_passage_urges_review() {
        let reply = render_classification(
            &Vocabulary::builtin().extract(&DocumentationBundle::default()),
            None,
        );
        let v: serde_json::Value = serde_json::from_str(&render_parse(&reply, None)).unwrap();
        assert_eq!(v["classification"], "Negative");
        assert!(v["explanation"]
            .as_str()
            .unwrap()
            .starts_with(REVIEW_NOTICE));
    }

    #[test]
    fn wrong_tier_overrides_first_line() {
        let stub = StubBackend::with_faults(StubFaults {
            classification: Fault::WrongTier(Classification::Affirmative),
            ..Default::default()
        });
        let reply = classify(&stub, &DocumentationBundle::new("Healthy.", vec![]));
        assert!(reply.starts_with("Affirmative"));
    }

    #[test]
    fn transient_failures_then_success() {
        let stub = StubBackend::with_faults(StubFaults {
            transient_classification_failures: 2,
            ..Default::default()
        });
        let t = PromptTemplates::builtin();
        let prompt = t.classification_prompt(&build_documentation(&DocumentationBundle::default()));
        assert!(stub.complete("", &prompt).unwrap_err().is_retriable());
        assert!(stub.complete("", &prompt).is_err());
        assert!(stub.complete("", &prompt).is_ok());
        assert_eq!(stub.classification_calls(), 3);
    }

    #[test]
    fn unknown_prompt_is_rejected() {
        let err = StubBackend::new().complete("", "hello").unwrap_err();
        assert_eq!(err.kind, BackendErrorKind::Rejected);
    }
}
