//! Clinician adjudications and coding of free-text No reasons.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Decision {
    Yes,
    No,
}

impl FromStr for Decision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "y" => Ok(Decision::Yes),
            "no" | "n" => Ok(Decision::No),
            other => Err(format!("unknown decision `{other}`")),
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Yes => "Yes",
            Decision::No => "No",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeedbackCategory {
    InsufficientComplexity,
    IncompatibleLevelOfCare,
    WrongPrimaryService,
    OutpatientDayOfSurgeryChange,
    UndocumentedOutsideProvider,
    Other,
}

impl FeedbackCategory {
    pub const ALL: [FeedbackCategory; 6] = [
        FeedbackCategory::InsufficientComplexity,
        FeedbackCategory::IncompatibleLevelOfCare,
        FeedbackCategory::WrongPrimaryService,
        FeedbackCategory::OutpatientDayOfSurgeryChange,
        FeedbackCategory::UndocumentedOutsideProvider,
        FeedbackCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackCategory::InsufficientComplexity => "InsufficientComplexity",
            FeedbackCategory::IncompatibleLevelOfCare => "IncompatibleLevelOfCare",
            FeedbackCategory::WrongPrimaryService => "WrongPrimaryService",
            FeedbackCategory::OutpatientDayOfSurgeryChange => "OutpatientDayOfSurgeryChange",
            FeedbackCategory::UndocumentedOutsideProvider => "UndocumentedOutsideProvider",
            FeedbackCategory::Other => "Other",
        }
    }
}

impl fmt::Display for FeedbackCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeedbackCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeedbackCategory::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown feedback category `{s}`"))
    }
}

/// One Yes/No adjudication as submitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicianFeedback {
    pub case_id: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub reviewer_id: String,
    pub recorded_at: DateTime<Utc>,
    /// Reviewer-chosen category. Takes precedence over keyword coding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_override: Option<FeedbackCategory>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeedbackError {
    #[error("case_id is empty")]
    EmptyCaseId,
    #[error("reviewer_id is empty")]
    EmptyReviewer,
}

impl ClinicianFeedback {
    pub fn new(
        case_id: impl Into<String>,
        decision: Decision,
        reviewer_id: impl Into<String>,
        recorded_at: DateTime<Utc>,
    ) -> Self {
        Self {
            case_id: case_id.into(),
            decision,
            reason: None,
            reviewer_id: reviewer_id.into(),
            recorded_at,
            category_override: None,
        }
    }

    pub fn with_reason(mut self, reason: impl Into<String>) -> Self {
        self.reason = Some(reason.into());
        self
    }

    pub fn with_category(mut self, category: FeedbackCategory) -> Self {
        self.category_override = Some(category);
        self
    }

    /// Check required fields and drop blank reasons.
    pub fn normalized(mut self) -> Result<Self, FeedbackError> {
        if self.case_id.trim().is_empty() {
            return Err(FeedbackError::EmptyCaseId);
        }
        if self.reviewer_id.trim().is_empty() {
            return Err(FeedbackError::EmptyReviewer);
        }
        if self.reason.as_deref().is_some_and(|r| r.trim().is_empty()) {
            self.reason = None;
        }
        Ok(self)
    }
}

/// Stored form of a feedback submission: a sequence number in the log and
/// the category assigned at write time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub feedback: ClinicianFeedback,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<FeedbackCategory>,
}

impl FeedbackRecord {
    /// Only No decisions are categorized. An override wins, otherwise the
    /// reason is coded through `keywords`.
    pub fn new(seq: u64, feedback: ClinicianFeedback, keywords: &KeywordMap) -> Self {
        let category = match feedback.decision {
            Decision::Yes => None,
            Decision::No => feedback
                .category_override
                .or_else(|| feedback.reason.as_deref().map(|r| keywords.code(r))),
        };
        Self {
            seq,
            feedback,
            category,
        }
    }

    fn precedence(&self) -> (DateTime<Utc>, &str, u64) {
        (
            self.feedback.recorded_at,
            self.feedback.reviewer_id.as_str(),
            self.seq,
        )
    }
}

/// The decision that counts for each case: greatest `recorded_at`, ties
/// broken by the lexicographically greater `reviewer_id`, then by log order.
pub fn latest_per_case<'a, I>(records: I) -> BTreeMap<&'a str, &'a FeedbackRecord>
where
    I: IntoIterator<Item = &'a FeedbackRecord>,
{
    let mut latest: BTreeMap<&str, &FeedbackRecord> = BTreeMap::new();
    for r in records {
        latest
            .entry(r.feedback.case_id.as_str())
            .and_modify(|cur| {
                if r.precedence() > cur.precedence() {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    latest
}

/// Counts of categorized No decisions. Every category is present.
pub fn category_histogram<'a, I>(records: I) -> BTreeMap<FeedbackCategory, usize>
where
    I: IntoIterator<Item = &'a FeedbackRecord>,
{
    let mut hist: BTreeMap<FeedbackCategory, usize> =
        FeedbackCategory::ALL.into_iter().map(|c| (c, 0)).collect();
    for r in records {
        if r.feedback.decision == Decision::No {
            if let Some(c) = r.category {
                *hist.entry(c).or_default() += 1;
            }
        }
    }
    hist
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordRule {
    pub category: FeedbackCategory,
    pub keywords: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum KeywordMapError {
    #[error("cannot read keyword map {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid keyword map: {0}")]
    Json(#[from] serde_json::Error),
    #[error("keyword map rule for {0} has no keywords")]
    EmptyRule(FeedbackCategory),
}

/// Ordered keyword rules. The first rule with a matching keyword decides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordMap {
    pub rules: Vec<KeywordRule>,
}

impl KeywordMap {
    pub fn builtin() -> &'static KeywordMap {
        static MAP: OnceLock<KeywordMap> = OnceLock::new();
        MAP.get_or_init(|| {
            KeywordMap::from_json(include_str!("../data/feedback_keywords.json"))
                .expect("bundled keyword map is valid")
        })
    }

    pub fn load(path: &Path) -> Result<Self, KeywordMapError> {
        let text = std::fs::read_to_string(path).map_err(|source| KeywordMapError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(json: &str) -> Result<Self, KeywordMapError> {
        let map: KeywordMap = serde_json::from_str(json)?;
        if let Some(rule) = map
            .rules
            .iter()
            .find(|r| r.keywords.iter().all(|k| k.trim().is_empty()))
        {
            return Err(KeywordMapError::EmptyRule(rule.category));
        }
        Ok(map)
    }

    /// Total: anything unmatched, including blank text, is `Other`.
    pub fn code(&self, reason: &str) -> FeedbackCategory {
        let reason = reason.replace(['\u{2019}', '\u{2018}'], "'");
        self.rules
            .iter()
            .find(|rule| {
                rule.keywords
                    .iter()
                    .filter(|k| !k.trim().is_empty())
                    .any(|k| text::contains_phrase(&reason, k.trim()))
            })
            .map_or(FeedbackCategory::Other, |rule| rule.category)
    }
}

/// [`KeywordMap::code`] over the built-in map.
pub fn code_reason(reason: &str) -> FeedbackCategory {
    KeywordMap::builtin().code(reason)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn at(secs: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_760_000_000 + secs, 0).unwrap()
    }

    #[test]
    fn coding_examples() {
        assert_eq!(
            code_reason("patient going to ICU postop"),
            FeedbackCategory::IncompatibleLevelOfCare
        );
        assert_eq!(
            code_reason("PAMF patient"),
            FeedbackCategory::UndocumentedOutsideProvider
        );
        assert_eq!(code_reason("asdf"), FeedbackCategory::Other);
        assert_eq!(
            code_reason("outpatient surgery"),
            FeedbackCategory::OutpatientDayOfSurgeryChange
        );
        assert_eq!(
            code_reason("Not complex"),
            FeedbackCategory::InsufficientComplexity
        );
        assert_eq!(
            code_reason("doesn\u{2019}t need us"),
            FeedbackCategory::InsufficientComplexity
        );
        assert_eq!(
            code_reason("wrong service"),
            FeedbackCategory::WrongPrimaryService
        );
    }

    #[test]
    fn keywords_need_word_boundaries() {
        // "icu" inside another word is not a match
        assert_eq!(code_reason("meticulous plan"), FeedbackCategory::Other);
    }

    #[test]
    fn rule_order_decides_ties() {
        assert_eq!(
            code_reason("PAMF patient going outpatient"),
            FeedbackCategory::UndocumentedOutsideProvider
        );
    }

    #[test]
    fn override_beats_keywords_and_yes_is_uncategorized() {
        let map = KeywordMap::builtin();
        let fb = ClinicianFeedback::new("C1", Decision::No, "r", at(0))
            .with_reason("ICU")
            .with_category(FeedbackCategory::Other);
        assert_eq!(
            FeedbackRecord::new(0, fb, map).category,
            Some(FeedbackCategory::Other)
        );
        let fb = ClinicianFeedback::new("C1", Decision::Yes, "r", at(0)).with_reason("ICU");
        assert_eq!(FeedbackRecord::new(0, fb, map).category, None);
        let fb = ClinicianFeedback::new("C1", Decision::No, "r", at(0));
        assert_eq!(FeedbackRecord::new(0, fb, map).category, None);
    }

    #[test]
    fn latest_wins_with_deterministic_ties() {
        let map = KeywordMap::builtin();
        let rec = |seq, case: &str, d, reviewer: &str, t| {
            FeedbackRecord::new(seq, ClinicianFeedback::new(case, d, reviewer, at(t)), map)
        };
        let log = vec![
            rec(0, "C1", Decision::No, "a", 10),
            rec(1, "C1", Decision::Yes, "a", 20),
            rec(2, "C2", Decision::Yes, "b", 5),
            rec(3, "C2", Decision::No, "a", 5),
            rec(4, "C3", Decision::No, "a", 50),
            rec(5, "C3", Decision::Yes, "a", 40),
        ];
        let latest = latest_per_case(&log);
        assert_eq!(latest["C1"].seq, 1);
        assert_eq!(latest["C2"].seq, 2);
        assert_eq!(latest["C3"].seq, 4);
        // order of the log does not matter
        let reversed: Vec<_> = log.iter().rev().collect();
        let again = latest_per_case(reversed);
        assert_eq!(
            latest.values().map(|r| r.seq).collect::<Vec<_>>(),
            again.values().map(|r| r.seq).collect::<Vec<_>>()
        );
    }

    #[test]
    fn histogram_counts_categorized_no() {
        let map = KeywordMap::builtin();
        let log = vec![
            FeedbackRecord::new(
                0,
                ClinicianFeedback::new("A", Decision::No, "r", at(0)).with_reason("ICU"),
                map,
            ),
            FeedbackRecord::new(
                1,
                ClinicianFeedback::new("B", Decision::No, "r", at(0)),
                map,
            ),
            FeedbackRecord::new(
                2,
                ClinicianFeedback::new("C", Decision::Yes, "r", at(0)).with_reason("ok"),
                map,
            ),
            FeedbackRecord::new(
                3,
                ClinicianFeedback::new("D", Decision::No, "r", at(0)).with_reason("zzz"),
                map,
            ),
        ];
        let h = category_histogram(&log);
        assert_eq!(h[&FeedbackCategory::IncompatibleLevelOfCare], 1);
        assert_eq!(h[&FeedbackCategory::Other], 1);
        assert_eq!(h.values().sum::<usize>(), 2);
        assert_eq!(h.len(), 6);
    }

    #[test]
    fn normalization() {
        let fb = ClinicianFeedback::new("C", Decision::No, "r", at(0)).with_reason("  ");
        assert_eq!(fb.normalized().unwrap().reason, None);
        assert_eq!(
            ClinicianFeedback::new("", Decision::No, "r", at(0)).normalized(),
            Err(FeedbackError::EmptyCaseId)
        );
        assert_eq!(
            ClinicianFeedback::new("C", Decision::No, " ", at(0)).normalized(),
            Err(FeedbackError::EmptyReviewer)
        );
    }

    #[test]
    fn record_serializes_flat() {
        let fb = ClinicianFeedback::new("C1", Decision::No, "r1", at(0)).with_reason("ICU");
        let rec = FeedbackRecord::new(7, fb, KeywordMap::builtin());
        let line = serde_json::to_string(&rec).unwrap();
        assert!(line.contains("\"case_id\":\"C1\""));
        assert!(line.contains("\"category\":\"IncompatibleLevelOfCare\""));
        let back: FeedbackRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);
    }
}
