//! Seeded synthetic case generator with ground-truth profiles.
//!
//! Notes are assembled from the shared vocabulary so every generated
//! bundle realizes exactly its profile's criteria. The note layout below is
//! our own template; it imitates a pre-procedure evaluation but follows no
//! real documentation standard.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::case::{CaseRecord, DocumentationBundle, PatientClass, Site, Specialty, SurgicalCase};
use crate::rubric::{
    rubric_oracle, Channel, Classification, ComorbidityProfile, CriterionId, Vocabulary,
};
use crate::rules::apply_structural_rules;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Archetype {
    Affirmative,
    Maybe,
    Negative,
    /// No note (or a blank one) and at most benign medications.
    Undocumented,
}

/// Relative archetype weights plus the probability that a case carries a
/// structural exclusion (outpatient, off-site or external group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeMix {
    pub affirmative: f64,
    pub maybe: f64,
    pub negative: f64,
    pub undocumented: f64,
    pub structural_exclusion: f64,
}

impl Default for ArchetypeMix {
    fn default() -> Self {
        Self {
            affirmative: 0.35,
            maybe: 0.15,
            negative: 0.4,
            undocumented: 0.1,
            structural_exclusion: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeneratorError {
    #[error("case count must be at least 1")]
    NoCases,
    #[error("invalid mix: {0}")]
    Mix(String),
}

impl ArchetypeMix {
    fn weights(&self) -> [(Archetype, f64); 4] {
        [
            (Archetype::Affirmative, self.affirmative),
            (Archetype::Maybe, self.maybe),
            (Archetype::Negative, self.negative),
            (Archetype::Undocumented, self.undocumented),
        ]
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        let weights = self.weights();
        if weights.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(GeneratorError::Mix(
                "weights must be finite and non-negative".into(),
            ));
        }
        if weights.iter().map(|(_, w)| w).sum::<f64>() <= 0.0 {
            return Err(GeneratorError::Mix("weights must not all be zero".into()));
        }
        if !(0.0..=1.0).contains(&self.structural_exclusion) {
            return Err(GeneratorError::Mix(
                "structural_exclusion must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng) -> Archetype {
        let weights = self.weights();
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        let mut x = rng.random::<f64>() * total;
        for (archetype, w) in weights {
            if x < w {
                return archetype;
            }
            x -= w;
        }
        weights
            .iter()
            .rev()
            .find(|(_, w)| *w > 0.0)
            .map(|(a, _)| *a)
            .unwrap_or(Archetype::Negative)
    }
}

impl FromStr for ArchetypeMix {
    type Err = GeneratorError;

    /// `affirmative=0.3,maybe=0.2,negative=0.4,undocumented=0.1,excluded=0.2`.
    /// Omitted keys keep their defaults.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut mix = ArchetypeMix::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| GeneratorError::Mix(format!("expected key=value, got {part:?}")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| GeneratorError::Mix(format!("bad number in {part:?}")))?;
            match key.trim() {
                "affirmative" => mix.affirmative = value,
                "maybe" => mix.maybe = value,
                "negative" => mix.negative = value,
                "undocumented" => mix.undocumented = value,
                "excluded" | "structural_exclusion" => mix.structural_exclusion = value,
                other => return Err(GeneratorError::Mix(format!("unknown key {other:?}"))),
            }
        }
        mix.validate()?;
        Ok(mix)
    }
}

impl fmt::Display for ArchetypeMix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "affirmative={},maybe={},negative={},undocumented={},excluded={}",
            self.affirmative,
            self.maybe,
            self.negative,
            self.undocumented,
            self.structural_exclusion
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub seed: u64,
    pub mix: ArchetypeMix,
    pub surgery_date: NaiveDate,
}

impl GeneratorConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            mix: ArchetypeMix::default(),
            surgery_date: NaiveDate::from_ymd_opt(2025, 10, 1).expect("valid date"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCase {
    pub record: CaseRecord,
    pub profile: ComorbidityProfile,
    pub archetype: Archetype,
}

impl GeneratedCase {
    /// Tier the full pipeline should produce: Negative when a structural
    /// rule fires, the rubric tier of the profile otherwise.
    pub fn expected_tier(&self) -> Classification {
        if apply_structural_rules(&self.record.case).excluded {
            Classification::Negative
        } else {
            rubric_oracle(&self.profile)
        }
    }
}

const PROCEDURES: [(Specialty, &[&str]); 4] = [
    (
        Specialty::Neurosurgery,
        &[
            "lumbar laminectomy",
            "anterior cervical discectomy and fusion",
            "craniotomy for tumor resection",
        ],
    ),
    (
        Specialty::Orthopedics,
        &[
            "total knee arthroplasty",
            "total hip arthroplasty",
            "reverse shoulder arthroplasty",
        ],
    ),
    (
        Specialty::Otolaryngology,
        &[
            "total thyroidectomy",
            "functional endoscopic sinus surgery",
            "parotidectomy",
        ],
    ),
    (Specialty::Other, &["laparoscopic cholecystectomy"]),
];

const MAYBE_CRITERIA: [u8; 4] = [11, 12, 13, 14];

pub fn generate_cases(config: &GeneratorConfig) -> Result<Vec<GeneratedCase>, GeneratorError> {
    generate_cases_with(config, Vocabulary::builtin())
}

pub fn generate_cases_with(
    config: &GeneratorConfig,
    vocab: &Vocabulary,
) -> Result<Vec<GeneratedCase>, GeneratorError> {
    if config.n == 0 {
        return Err(GeneratorError::NoCases);
    }
    config.mix.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok((0..config.n)
        .map(|i| generate_one(config, vocab, i, &mut rng))
        .collect())
}

fn criterion(id: u8) -> CriterionId {
    CriterionId::new(id).expect("criterion in range")
}

fn sample_profile(archetype: Archetype, rng: &mut ChaCha8Rng) -> ComorbidityProfile {
    let mut profile = ComorbidityProfile::default();
    match archetype {
        Archetype::Affirmative => {
            let k = rng.random_range(1..=3);
            let picked = rand::seq::index::sample(rng, 10, k);
            profile.affirmative_criteria = picked.iter().map(|i| criterion(i as u8 + 1)).collect();
            if rng.random_bool(0.3) {
                let extra = *MAYBE_CRITERIA.choose(rng).expect("non-empty");
                if !(extra == 12 && profile.affirmative_criteria.contains(&criterion(5))) {
                    profile.maybe_criteria.insert(criterion(extra));
                }
            }
        }
        Archetype::Maybe => {
            let k = rng.random_range(1..=2);
            let picked: Vec<_> = MAYBE_CRITERIA.choose_multiple(rng, k).copied().collect();
            profile.maybe_criteria = picked.into_iter().map(criterion).collect();
        }
        Archetype::Negative | Archetype::Undocumented => {}
    }
    profile
}

fn generate_one(
    config: &GeneratorConfig,
    vocab: &Vocabulary,
    index: usize,
    rng: &mut ChaCha8Rng,
) -> GeneratedCase {
    let archetype = config.mix.sample(rng);
    let mut profile = sample_profile(archetype, rng);

    let specialty = match rng.random_range(0..20) {
        0..=6 => Specialty::Orthopedics,
        7..=12 => Specialty::Neurosurgery,
        13..=18 => Specialty::Otolaryngology,
        _ => Specialty::Other,
    };
    let procedure = PROCEDURES
        .iter()
        .find(|(s, _)| *s == specialty)
        .and_then(|(_, list)| list.choose(rng))
        .copied()
        .unwrap_or("elective procedure");

    let floor_classes = [
        PatientClass::Inpatient,
        PatientClass::ToBeAdmitted,
        PatientClass::OvernightRecoveryOutpatient,
    ];
    let mut patient_class = *floor_classes.choose(rng).expect("non-empty");
    let mut site = Site::MainHospital;
    let mut external_provider_group = false;
    if rng.random_bool(config.mix.structural_exclusion) {
        match rng.random_range(0..3) {
            0 => patient_class = PatientClass::OutpatientProcedure,
            1 => site = Site::OtherSite,
            _ => external_provider_group = true,
        }
    }

    let documentation = if archetype == Archetype::Undocumented {
        let note = if rng.random_bool(0.5) {
            None
        } else {
            Some(String::new())
        };
        let k = rng.random_range(0..=2);
        let meds = vocab
            .benign_medications
            .choose_multiple(rng, k)
            .cloned()
            .collect();
        DocumentationBundle {
            preop_note: note,
            medications: meds,
        }
    } else {
        render_documentation(vocab, &mut profile, procedure, rng)
    };

    let case = SurgicalCase {
        case_id: format!("G{}-{:05}", config.seed, index + 1),
        patient_ref: format!("MRN{:08}", rng.random_range(0..100_000_000u32)),
        surgery_date: config.surgery_date,
        specialty,
        patient_class,
        site,
        external_provider_group,
        scm_team_assigned: None,
    };
    GeneratedCase {
        record: CaseRecord {
            case,
            documentation,
        },
        profile,
        archetype,
    }
}

fn render_documentation(
    vocab: &Vocabulary,
    profile: &mut ComorbidityProfile,
    procedure: &str,
    rng: &mut ChaCha8Rng,
) -> DocumentationBundle {
    let mut history: Vec<String> = Vec::new();
    let mut medications: Vec<String> = Vec::new();

    for id in profile.criteria() {
        if id.get() == 13 {
            continue;
        }
        let entry = vocab.criterion(id);
        let sentence = entry
            .sentences
            .choose(rng)
            .expect("vocabulary has sentences")
            .clone();
        match entry.channel {
            Channel::Note => history.push(sentence),
            Channel::Medications => medications.push(sentence),
        }
    }

    let threshold = vocab.comorbidity_threshold;
    let comorbidity_count = if profile.maybe_criteria.contains(&criterion(13)) {
        rng.random_range(threshold..=(threshold + 1).min(vocab.comorbidities.len()))
    } else if threshold > 1 && rng.random_bool(0.3) {
        rng.random_range(1..threshold)
    } else {
        0
    };
    let below_threshold = comorbidity_count < threshold;
    for c in vocab.comorbidities.choose_multiple(rng, comorbidity_count) {
        history.push(c.sentences.choose(rng).expect("non-empty").clone());
        if below_threshold {
            profile.distractors.push(format!("comorbidity:{}", c.tag));
        }
    }

    let distractor_count = rng.random_range(0..=3);
    for d in vocab.distractors.choose_multiple(rng, distractor_count) {
        history.push(d.sentences.choose(rng).expect("non-empty").clone());
        profile.distractors.push(d.tag.clone());
    }
    profile.distractors.sort();

    history.shuffle(rng);
    let benign = rng.random_range(0..=3);
    medications.extend(
        vocab
            .benign_medications
            .choose_multiple(rng, benign)
            .cloned(),
    );
    medications.shuffle(rng);

    let mut note = String::from("ANESTHESIA PRE-PROCEDURE EVALUATION\n");
    note.push_str(&format!("Planned procedure: {procedure}.\n"));
    note.push_str("Past medical history:\n");
    if history.is_empty() {
        note.push_str("- No significant past medical history.\n");
    }
    for line in &history {
        note.push_str("- ");
        note.push_str(line);
        note.push('\n');
    }
    note.push_str("Airway: Mallampati class II.\n");
    note.push_str("Plan: general anesthesia.\n");

    DocumentationBundle {
        preop_note: Some(note),
        medications,
    }
}
