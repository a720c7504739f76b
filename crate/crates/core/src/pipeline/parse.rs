//! Validation of the structured reply and post-checks on its content.

use std::sync::OnceLock;

use regex::Regex;
use serde_json::Value;

use crate::rubric::{Classification, CriterionId};
use crate::text;

/// Opening sentence added whenever documentation problems are reported.
pub const REVIEW_NOTICE: &str = "Please review this patient manually.";

pub const FALLBACK_EXPLANATION: &str = "Please review this patient manually: the model output could not be parsed into a structured result, so the case defaults to Maybe.";

const INSUFFICIENCY_TERMS: &[&str] = &[
    "insufficient",
    "missing",
    "ambiguous",
    "not available",
    "unavailable",
    "no documentation",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseFailure {
    #[error("no JSON object in reply")]
    NoJson,
    #[error("field `{0}` missing or not a string")]
    MissingField(&'static str),
    #[error("unknown classification `{0}`")]
    UnknownTier(String),
    #[error("explanation is blank")]
    BlankExplanation,
}

/// Accept a JSON object with a known `classification` and a non-blank
/// `explanation`. Tolerates code fences and prose around the object.
pub fn validate_structured(reply: &str) -> Result<(Classification, String), ParseFailure> {
    let value = locate_json(reply).ok_or(ParseFailure::NoJson)?;
    let obj = value.as_object().ok_or(ParseFailure::NoJson)?;
    let field = |name: &'static str| {
        obj.iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .and_then(|(_, v)| v.as_str())
            .ok_or(ParseFailure::MissingField(name))
    };
    let tier_text = field("classification")?;
    let tier = tier_text
        .trim()
        .parse::<Classification>()
        .map_err(|_| ParseFailure::UnknownTier(tier_text.to_string()))?;
    let explanation = field("explanation")?.trim();
    if explanation.is_empty() {
        return Err(ParseFailure::BlankExplanation);
    }
    Ok((tier, explanation.to_string()))
}

fn locate_json(reply: &str) -> Option<Value> {
    let trimmed = reply.trim();
    if let Ok(v) = serde_json::from_str::<Value>(trimmed) {
        return Some(v);
    }
    let start = trimmed.find('{')?;
    let end = trimmed.rfind('}')?;
    if end <= start {
        return None;
    }
    serde_json::from_str(&trimmed[start..=end]).ok()
}

pub fn mentions_insufficiency(text: &str) -> bool {
    INSUFFICIENCY_TERMS
        .iter()
        .any(|term| text::contains_phrase(text, term))
}

/// Whether the first sentence already asks for manual review.
pub fn urges_review(explanation: &str) -> bool {
    let first = text::first_sentence(explanation);
    text::contains_phrase(first, "review") && text::contains_phrase(first, "manually")
}

fn citation_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)\bcriteri(?:on|a)(?:\s+met)?\s*[:#]?\s*(\d{1,2}(?:\s*(?:,|;|/|&|\band\b|\bor\b)\s*\d{1,2})*)",
        )
        .expect("valid regex")
    })
}

/// Criterion numbers referenced in prose, sorted and deduplicated.
pub fn cited_criteria(explanation: &str) -> Vec<CriterionId> {
    static DIGITS: OnceLock<Regex> = OnceLock::new();
    let digits = DIGITS.get_or_init(|| Regex::new(r"\d{1,2}").expect("valid regex"));
    let mut out: Vec<CriterionId> = citation_pattern()
        .captures_iter(explanation)
        .flat_map(|c| {
            let list = c.get(1).map_or("", |m| m.as_str());
            digits
                .find_iter(list)
                .filter_map(|m| m.as_str().parse::<u8>().ok())
                .filter_map(CriterionId::new)
                .collect::<Vec<_>>()
        })
        .collect();
    out.sort();
    out.dedup();
    out
}
