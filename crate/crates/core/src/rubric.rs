//! Deterministic eligibility rubric.
//!
//! Criteria 1–10 are "Affirmative" criteria, 11–14 are "Maybe" criteria.
//! A case is Affirmative if any affirmative criterion is met, otherwise
//! Maybe if any maybe criterion is met, otherwise Negative.
//!
//! [`rubric_extract`] detects criteria in text using the controlled
//! vocabulary shipped in `data/vocabulary.json`. It is a keyword matcher
//! for generated notes, not clinical NLP: it does no negation handling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::case::DocumentationBundle;
use crate::text;

/// Three-tier triage output, ordered `Negative < Maybe < Affirmative`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Classification {
    Negative,
    Maybe,
    Affirmative,
}

impl Classification {
    pub const ALL: [Classification; 3] = [
        Classification::Affirmative,
        Classification::Maybe,
        Classification::Negative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Affirmative => "Affirmative",
            Classification::Maybe => "Maybe",
            Classification::Negative => "Negative",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Classification {
    type Err = String;

    /// Case-insensitive match on the exact tier name, surrounding
    /// whitespace and quotes ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().trim_matches(|c| c == '"' || c == '\'').trim();
        Classification::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("not a classification: {s:?}"))
    }
}

/// A rubric criterion number, 1 through 14.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct CriterionId(u8);

impl CriterionId {
    pub const COUNT: u8 = 14;

    pub fn new(id: u8) -> Option<Self> {
        (1..=Self::COUNT).contains(&id).then_some(Self(id))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn is_affirmative(self) -> bool {
        self.0 <= 10
    }

    pub fn all() -> impl Iterator<Item = CriterionId> {
        (1..=Self::COUNT).map(CriterionId)
    }

    pub fn affirmative() -> impl Iterator<Item = CriterionId> {
        Self::all().filter(|c| c.is_affirmative())
    }

    pub fn maybe() -> impl Iterator<Item = CriterionId> {
        Self::all().filter(|c| !c.is_affirmative())
    }
}

impl TryFrom<u8> for CriterionId {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        CriterionId::new(value).ok_or_else(|| format!("criterion {value} is outside 1..=14"))
    }
}

impl From<CriterionId> for u8 {
    fn from(value: CriterionId) -> Self {
        value.0
    }
}

impl fmt::Display for CriterionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Ground truth for a generated case.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComorbidityProfile {
    pub affirmative_criteria: BTreeSet<CriterionId>,
    pub maybe_criteria: BTreeSet<CriterionId>,
    pub distractors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("criterion {0} is in the wrong set")]
pub struct ProfileError(pub CriterionId);

impl ComorbidityProfile {
    pub fn new(
        affirmative: impl IntoIterator<Item = CriterionId>,
        maybe: impl IntoIterator<Item = CriterionId>,
    ) -> Result<Self, ProfileError> {
        let profile = Self {
            affirmative_criteria: affirmative.into_iter().collect(),
            maybe_criteria: maybe.into_iter().collect(),
            distractors: Vec::new(),
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if let Some(c) = self
            .affirmative_criteria
            .iter()
            .find(|c| !c.is_affirmative())
        {
            return Err(ProfileError(*c));
        }
        if let Some(c) = self.maybe_criteria.iter().find(|c| c.is_affirmative()) {
            return Err(ProfileError(*c));
        }
        Ok(())
    }

    pub fn criteria(&self) -> BTreeSet<CriterionId> {
        self.affirmative_criteria
            .union(&self.maybe_criteria)
            .copied()
            .collect()
    }
}

/// Tier implied by a set of met criteria.
pub fn tier_of(criteria: impl IntoIterator<Item = CriterionId>) -> Classification {
    let mut tier = Classification::Negative;
    for c in criteria {
        if c.is_affirmative() {
            return Classification::Affirmative;
        }
        tier = Classification::Maybe;
    }
    tier
}

pub fn rubric_oracle(profile: &ComorbidityProfile) -> Classification {
    if !profile.affirmative_criteria.is_empty() {
        Classification::Affirmative
    } else if !profile.maybe_criteria.is_empty() {
        Classification::Maybe
    } else {
        Classification::Negative
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionHit {
    pub criterion_id: CriterionId,
    /// Verbatim excerpt of the note or medication entry.
    pub evidence_span: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub classification: Classification,
    /// Ordered by criterion id. Criterion 13 contributes one hit per
    /// distinct qualifying comorbidity.
    pub hits: Vec<CriterionHit>,
    /// The pre-operative note is absent or blank.
    pub insufficient: bool,
}

impl Extraction {
    pub fn criteria(&self) -> BTreeSet<CriterionId> {
        self.hits.iter().map(|h| h.criterion_id).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Note,
    Medications,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionVocabulary {
    pub id: CriterionId,
    /// Criterion text exactly as it appears in the classification prompt.
    pub heading: String,
    pub channel: Channel,
    pub triggers: Vec<String>,
    /// Note sentences (or medication entries) realizing the criterion.
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComorbidityVocabulary {
    pub tag: String,
    pub triggers: Vec<String>,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistractorVocabulary {
    pub tag: String,
    pub sentences: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum VocabularyError {
    #[error("cannot read vocabulary: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed vocabulary: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid vocabulary: {0}")]
    Invalid(String),
}

const COMORBIDITY_CRITERION: u8 = 13;

/// Trigger phrases and sentence templates shared by the generator and the
/// extractor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    pub criteria: Vec<CriterionVocabulary>,
    pub comorbidity_threshold: usize,
    pub comorbidities: Vec<ComorbidityVocabulary>,
    pub distractors: Vec<DistractorVocabulary>,
    pub benign_medications: Vec<String>,
    #[serde(skip)]
    matchers: Vec<Matcher>,
}

#[derive(Debug, Clone)]
struct Matcher {
    phrase: String,
    target: Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Criterion(CriterionId),
    Comorbidity(usize),
}

static BUILTIN: OnceLock<Vocabulary> = OnceLock::new();

impl Vocabulary {
    /// The vocabulary compiled into the crate.
    pub fn builtin() -> &'static Vocabulary {
        BUILTIN.get_or_init(|| {
            Vocabulary::from_json(include_str!("../data/vocabulary.json"))
                .expect("bundled vocabulary is valid")
        })
    }

    pub fn load(path: &Path) -> Result<Self, VocabularyError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(json: &str) -> Result<Self, VocabularyError> {
        let mut vocab: Vocabulary = serde_json::from_str(json)?;
        vocab.compile()?;
        Ok(vocab)
    }

    fn compile(&mut self) -> Result<(), VocabularyError> {
        let ids: Vec<u8> = self.criteria.iter().map(|c| c.id.get()).collect();
        let expected: Vec<u8> = (1..=CriterionId::COUNT).collect();
        if ids != expected {
            return Err(VocabularyError::Invalid(format!(
                "criteria must be listed once each in order 1..=14, got {ids:?}"
            )));
        }
        if self.comorbidity_threshold == 0 {
            return Err(VocabularyError::Invalid(
                "comorbidity_threshold must be ≥ 1".into(),
            ));
        }
        let mut matchers = Vec::new();
        for c in &self.criteria {
            if c.id.get() == COMORBIDITY_CRITERION {
                continue;
            }
            if c.triggers.is_empty() || c.sentences.is_empty() {
                return Err(VocabularyError::Invalid(format!(
                    "criterion {} needs triggers and sentences",
                    c.id
                )));
            }
            for t in &c.triggers {
                matchers.push(Matcher {
                    phrase: t.clone(),
                    target: Target::Criterion(c.id),
                });
            }
        }
        if self.comorbidities.len() < self.comorbidity_threshold {
            return Err(VocabularyError::Invalid(
                "fewer comorbidities than the threshold".into(),
            ));
        }
        for (i, c) in self.comorbidities.iter().enumerate() {
            for t in &c.triggers {
                matchers.push(Matcher {
                    phrase: t.clone(),
                    target: Target::Comorbidity(i),
                });
            }
        }
        // Longest phrases claim their span first, so "hypertension,
        // well-controlled" is not also read as plain "hypertension".
        matchers.sort_by_key(|m| std::cmp::Reverse(m.phrase.len()));
        self.matchers = matchers;
        Ok(())
    }

    pub fn criterion(&self, id: CriterionId) -> &CriterionVocabulary {
        &self.criteria[usize::from(id.get() - 1)]
    }

    /// Detect criteria in the bundle and assign a tier.
    pub fn extract(&self, bundle: &DocumentationBundle) -> Extraction {
        let mut sources: Vec<&str> = Vec::with_capacity(1 + bundle.medications.len());
        if let Some(note) = bundle.preop_note.as_deref() {
            sources.push(note);
        }
        sources.extend(bundle.medications.iter().map(String::as_str));

        // earliest evidence per target, keyed by (source index, offset)
        let mut criteria: BTreeMap<CriterionId, ((usize, usize), String)> = BTreeMap::new();
        let mut comorbidities: BTreeMap<usize, ((usize, usize), String)> = BTreeMap::new();
        for (si, source) in sources.iter().enumerate() {
            let mut claimed: Vec<std::ops::Range<usize>> = Vec::new();
            for m in &self.matchers {
                for span in text::find_all(source, &m.phrase) {
                    if claimed.iter().any(|c| text::overlaps(c, &span)) {
                        continue;
                    }
                    let key = (si, span.start);
                    let evidence = text::sentence_around(source, &span).to_string();
                    let slot = match m.target {
                        Target::Criterion(id) => {
                            criteria.entry(id).or_insert((key, evidence.clone()))
                        }
                        Target::Comorbidity(i) => {
                            comorbidities.entry(i).or_insert((key, evidence.clone()))
                        }
                    };
                    if key < slot.0 {
                        *slot = (key, evidence);
                    }
                    claimed.push(span);
                }
            }
        }

        let mut hits: Vec<CriterionHit> = criteria
            .into_iter()
            .map(|(id, (_, evidence_span))| CriterionHit {
                criterion_id: id,
                evidence_span,
            })
            .collect();
        if comorbidities.len() >= self.comorbidity_threshold {
            let id = CriterionId(COMORBIDITY_CRITERION);
            let mut found: Vec<_> = comorbidities.into_values().collect();
            found.sort();
            let at = hits.partition_point(|h| h.criterion_id < id);
            hits.splice(
                at..at,
                found.into_iter().map(|(_, evidence_span)| CriterionHit {
                    criterion_id: id,
                    evidence_span,
                }),
            );
        }

        Extraction {
            classification: tier_of(hits.iter().map(|h| h.criterion_id)),
            hits,
            insufficient: bundle.note_missing(),
        }
    }
}

/// [`Vocabulary::extract`] over the built-in vocabulary.
pub fn rubric_extract(bundle: &DocumentationBundle) -> Extraction {
    Vocabulary::builtin().extract(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u8]) -> Vec<CriterionId> {
        v.iter().map(|&i| CriterionId::new(i).unwrap()).collect()
    }

    fn note(text: &str) -> DocumentationBundle {
        DocumentationBundle::new(text, vec![])
    }

    #[test]
    fn tier_order() {
        assert!(Classification::Negative < Classification::Maybe);
        assert!(Classification::Maybe < Classification::Affirmative);
    }

    #[test]
    fn classification_parsing() {
        assert_eq!("affirmative".parse(), Ok(Classification::Affirmative));
        assert_eq!(" \"Maybe\" ".parse(), Ok(Classification::Maybe));
        assert!("Affirmative.".parse::<Classification>().is_err());
    }

    #[test]
    fn criterion_ids_are_bounded() {
        assert!(CriterionId::new(0).is_none());
        assert!(CriterionId::new(15).is_none());
        assert_eq!(CriterionId::affirmative().count(), 10);
        assert_eq!(CriterionId::maybe().count(), 4);
        assert!(serde_json::from_str::<CriterionId>("15").is_err());
    }

    #[test]
    fn oracle_examples() {
        let p = ComorbidityProfile::new(ids(&[8]), []).unwrap();
        assert_eq!(rubric_oracle(&p), Classification::Affirmative);
        let p = ComorbidityProfile::new([], ids(&[12])).unwrap();
        assert_eq!(rubric_oracle(&p), Classification::Maybe);
        assert_eq!(
            rubric_oracle(&ComorbidityProfile::default()),
            Classification::Negative
        );
        assert!(ComorbidityProfile::new(ids(&[12]), []).is_err());
    }

    #[test]
    fn atrial_fibrillation_is_affirmative() {
        let bundle = note("Pleasant patient.\n- history of atrial fibrillation on apixaban.\n");
        let got = rubric_extract(&bundle);
        assert_eq!(got.classification, Classification::Affirmative);
        assert_eq!(got.hits.len(), 1);
        assert_eq!(got.hits[0].criterion_id.get(), 8);
        assert_eq!(
            got.hits[0].evidence_span,
            "history of atrial fibrillation on apixaban."
        );
        assert!(bundle
            .preop_note
            .unwrap()
            .contains(&got.hits[0].evidence_span));
    }

    #[test]
    fn pvcs_alone_are_negative() {
        let got = rubric_extract(&note("Occasional premature ventricular contractions."));
        assert_eq!(got.classification, Classification::Negative);
        assert!(got.hits.is_empty());
    }

    #[test]
    fn monoclonal_antibody_in_medications() {
        let bundle = DocumentationBundle::new(
            "No significant history.",
            vec!["Secukinumab 150 mg monthly (monoclonal antibody)".into()],
        );
        let got = rubric_extract(&bundle);
        assert_eq!(got.classification, Classification::Affirmative);
        assert_eq!(got.criteria(), ids(&[9]).into_iter().collect());
        assert_eq!(got.hits[0].evidence_span, bundle.medications[0]);
    }

    #[test]
    fn well_controlled_hypertension_is_maybe_not_affirmative() {
        let got = rubric_extract(&note("Hypertension, well-controlled on amlodipine."));
        assert_eq!(got.classification, Classification::Maybe);
        assert_eq!(got.criteria(), ids(&[12]).into_iter().collect());
        let got = rubric_extract(&note(
            "History of hypertension requiring three medications.",
        ));
        assert_eq!(got.criteria(), ids(&[5]).into_iter().collect());
    }

    #[test]
    fn comorbidities_need_three_distinct_conditions() {
        let two = "Obstructive sleep apnea, uses CPAP nightly.\nSevere OSA, CPAP adherent.\nCOPD, uses home oxygen at night.";
        let got = rubric_extract(&note(two));
        assert_eq!(got.classification, Classification::Negative);
        let three = format!("{two}\nAdrenal insufficiency on hydrocortisone replacement.");
        let got = rubric_extract(&note(&three));
        assert_eq!(got.classification, Classification::Maybe);
        assert_eq!(got.hits.len(), 3);
        assert!(got.hits.iter().all(|h| h.criterion_id.get() == 13));
    }

    #[test]
    fn empty_bundle_is_negative_and_insufficient() {
        let got = rubric_extract(&DocumentationBundle::default());
        assert_eq!(got.classification, Classification::Negative);
        assert!(got.hits.is_empty());
        assert!(got.insufficient);
    }

    #[test]
    fn vocabulary_rejects_gaps() {
        let mut v: serde_json::Value =
            serde_json::from_str(include_str!("../data/vocabulary.json")).unwrap();
        v["criteria"].as_array_mut().unwrap().remove(3);
        assert!(Vocabulary::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn every_template_sentence_realizes_exactly_its_criterion() {
        let vocab = Vocabulary::builtin();
        for c in &vocab.criteria {
            for s in &c.sentences {
                let bundle = match c.channel {
                    Channel::Note => note(s),
                    Channel::Medications => DocumentationBundle::new("", vec![s.clone()]),
                };
                let got = vocab.extract(&bundle);
                assert_eq!(got.criteria(), [c.id].into_iter().collect(), "{s}");
            }
        }
        for d in &vocab.distractors {
            for s in &d.sentences {
                assert!(vocab.extract(&note(s)).hits.is_empty(), "{s}");
            }
        }
        for m in &vocab.benign_medications {
            let bundle = DocumentationBundle::new("", vec![m.clone()]);
            assert!(vocab.extract(&bundle).hits.is_empty(), "{m}");
        }
        for c in &vocab.comorbidities {
            for s in &c.sentences {
                assert!(vocab.extract(&note(s)).hits.is_empty(), "{s}");
            }
        }
    }
}
