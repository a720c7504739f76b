//! A deterministic deployment-shaped dataset.
//!
//! 6,193 triaged cases (1,429 Affirmative, 153 Maybe, 4,611 Negative), of
//! which 1,077 carry one clinician decision: Affirmative 272 Yes / 163 No,
//! Maybe 12 / 40, Negative 19 / 571. The 203 declined flags carry reasons
//! in the proportions of the error analysis (76 insufficient complexity,
//! 30 level of care, 22 primary service, 10 day-of-surgery outpatient
//! change, 11 undocumented outside provider) and 54 carry none.

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Utc, Weekday};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::case::{PatientClass, Site, Specialty, SurgicalCase};
use crate::feedback::{ClinicianFeedback, Decision, FeedbackCategory};
use crate::pipeline::{ResultSource, ScreeningResult};
use crate::rubric::Classification;
use crate::store::{StoreError, TriageStore};

pub const TOTAL_CASES: usize = 6193;
pub const TIER_TOTALS: [(Classification, usize); 3] = [
    (Classification::Affirmative, 1429),
    (Classification::Maybe, 153),
    (Classification::Negative, 4611),
];
/// (tier, Yes, No) among cases with feedback.
pub const FEEDBACK_COUNTS: [(Classification, usize, usize); 3] = [
    (Classification::Affirmative, 272, 163),
    (Classification::Maybe, 12, 40),
    (Classification::Negative, 19, 571),
];
/// Reasons given on declined flags; the rest of the 203 have none.
pub const FALSE_POSITIVE_REASONS: [(FeedbackCategory, usize); 5] = [
    (FeedbackCategory::InsufficientComplexity, 76),
    (FeedbackCategory::IncompatibleLevelOfCare, 30),
    (FeedbackCategory::WrongPrimaryService, 22),
    (FeedbackCategory::OutpatientDayOfSurgeryChange, 10),
    (FeedbackCategory::UndocumentedOutsideProvider, 11),
];

pub const FIRST_DAY: (i32, u32, u32) = (2025, 9, 22);
const SEED: u64 = 0x5C4D_2025;
const REVIEWERS: [&str; 5] = ["hosp-01", "hosp-02", "hosp-03", "hosp-04", "hosp-05"];

fn reason_texts(category: FeedbackCategory) -> &'static [&'static str] {
    match category {
        FeedbackCategory::InsufficientComplexity => &[
            "Not complex enough for co-management.",
            "Comorbidities stable, doesn't need SCM.",
            "Low risk, healthy otherwise.",
        ],
        FeedbackCategory::IncompatibleLevelOfCare => &[
            "Going to ICU postop.",
            "Planned ICU admission after surgery.",
            "Level of care not compatible with SCM.",
        ],
        FeedbackCategory::WrongPrimaryService => {
            &["Medicine primary service.", "Wrong service for SCM."]
        }
        FeedbackCategory::OutpatientDayOfSurgeryChange => &[
            "Changed to outpatient on day of surgery.",
            "Now outpatient, same-day discharge.",
        ],
        FeedbackCategory::UndocumentedOutsideProvider => {
            &["PAMF patient.", "Followed by outside hospitalist group."]
        }
        FeedbackCategory::Other => &["Other."],
    }
}

#[derive(Debug, Clone)]
pub struct FixtureCase {
    pub case: SurgicalCase,
    pub result: ScreeningResult,
    pub triaged_at: DateTime<Utc>,
}

#[derive(Debug, Clone)]
pub struct DeploymentFixture {
    pub cases: Vec<FixtureCase>,
    pub feedback: Vec<ClinicianFeedback>,
}

/// Weekday surgery dates starting on the first deployment day.
fn surgery_dates(n: usize, per_day: usize) -> Vec<NaiveDate> {
    let (y, m, d) = FIRST_DAY;
    let mut day = NaiveDate::from_ymd_opt(y, m, d).expect("valid start date");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            for _ in 0..per_day.min(n - out.len()) {
                out.push(day);
            }
        }
        day = day.succ_opt().expect("date in range");
    }
    out
}

fn explanation(tier: Classification, structural: bool) -> String {
    if structural {
        return crate::rules::ExclusionReason::ExternalProviderGroup
            .explanation()
            .to_string();
    }
    match tier {
        Classification::Affirmative => {
            "Criteria met: 5. Direct quotes: \"Hypertension.\" (criterion 5)."
        }
        Classification::Maybe => {
            "Criteria met: 12. Direct quotes: \"Hypertension, well-controlled.\" (criterion 12)."
        }
        Classification::Negative => {
            "None of the listed eligibility criteria are explicitly documented."
        }
    }
    .to_string()
}

pub fn paper_fixture() -> DeploymentFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    // One slot per case: (tier, decision). Shuffled so tiers and
    // feedback spread over the calendar.
    let mut slots: Vec<(Classification, Option<Decision>)> = Vec::with_capacity(TOTAL_CASES);
    for ((tier, total), (_, yes, no)) in TIER_TOTALS.iter().zip(FEEDBACK_COUNTS.iter()) {
        slots.extend(std::iter::repeat_n((*tier, Some(Decision::Yes)), *yes));
        slots.extend(std::iter::repeat_n((*tier, Some(Decision::No)), *no));
        slots.extend(std::iter::repeat_n((*tier, None), total - yes - no));
    }
    slots.shuffle(&mut rng);

    // Reasons for declined flags, shuffled over the 203 positions.
    let false_positive_count: usize = FEEDBACK_COUNTS
        .iter()
        .filter(|(t, _, _)| *t != Classification::Negative)
        .map(|(_, _, no)| no)
        .sum();
    let mut reasons: Vec<Option<FeedbackCategory>> = FALSE_POSITIVE_REASONS
        .iter()
        .flat_map(|(c, n)| std::iter::repeat_n(Some(*c), *n))
        .collect();
    reasons.resize(false_positive_count, None);
    reasons.shuffle(&mut rng);
    let mut reasons = reasons.into_iter();

    let dates = surgery_dates(TOTAL_CASES, 55);
    let specialties = [
        Specialty::Neurosurgery,
        Specialty::Orthopedics,
        Specialty::Otolaryngology,
    ];
    let mut cases = Vec::with_capacity(TOTAL_CASES);
    let mut feedback = Vec::new();
    let mut reason_use = [0usize; 6];
    for (i, ((tier, decision), date)) in slots.into_iter().zip(dates).enumerate() {
        let case_id = format!("F{:05}", i + 1);
        // untouched Negatives occasionally come from the external-group rule
        let structural = tier == Classification::Negative && decision.is_none() && i % 10 == 3;
        let triaged_at = Utc.from_utc_datetime(
            &(date - Duration::days(1))
                .and_hms_opt(18, 0, 0)
                .expect("valid time"),
        );
        let case = SurgicalCase {
            case_id: case_id.clone(),
            patient_ref: format!("MRN{:07}", 1_000_000 + i * 7),
            surgery_date: date,
            specialty: specialties[i % 3],
            patient_class: if i % 4 == 0 {
                PatientClass::OvernightRecoveryOutpatient
            } else {
                PatientClass::Inpatient
            },
            site: Site::MainHospital,
            external_provider_group: structural,
            scm_team_assigned: None,
        };
        let explanation = explanation(tier, structural);
        let result = ScreeningResult {
            classification: tier,
            criteria_cited: crate::pipeline::parse::cited_criteria(&explanation),
            explanation,
            source: if structural {
                ResultSource::StructuralRule
            } else {
                ResultSource::LlmPipeline
            },
            raw_response: String::new(),
        };
        if let Some(d) = decision {
            let recorded_at =
                triaged_at + Duration::hours(14) + Duration::minutes((i % 240) as i64);
            let mut fb =
                ClinicianFeedback::new(case_id, d, REVIEWERS[i % REVIEWERS.len()], recorded_at);
            if d == Decision::No && tier != Classification::Negative {
                if let Some(cat) = reasons.next().flatten() {
                    let texts = reason_texts(cat);
                    let k = &mut reason_use[cat as usize];
                    fb = fb.with_reason(texts[*k % texts.len()]);
                    *k += 1;
                }
            }
            feedback.push(fb);
        }
        cases.push(FixtureCase {
            case,
            result,
            triaged_at,
        });
    }
    DeploymentFixture { cases, feedback }
}

impl DeploymentFixture {
    /// Write this fixture into an empty store.
    pub fn load_into(&self, store: &TriageStore) -> Result<(), StoreError> {
        // one append per triage day keeps triaged_at faithful
        let mut start = 0;
        while start < self.cases.len() {
            let at = self.cases[start].triaged_at;
            let end = self.cases[start..]
                .iter()
                .position(|c| c.triaged_at != at)
                .map_or(self.cases.len(), |p| start + p);
            let batch = self.cases[start..end]
                .iter()
                .map(|c| (c.case.clone(), c.result.clone()))
                .collect();
            store.append_triage(batch, at)?;
            start = end;
        }
        store.record_feedback_batch(self.feedback.clone())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::code_reason;

    #[test]
    fn counts_match_targets() {
        let fx = paper_fixture();
        assert_eq!(fx.cases.len(), TOTAL_CASES);
        for (tier, total) in TIER_TOTALS {
            assert_eq!(
                fx.cases
                    .iter()
                    .filter(|c| c.result.classification == tier)
                    .count(),
                total
            );
        }
        assert_eq!(fx.feedback.len(), 1077);
        let with_reason = fx.feedback.iter().filter(|f| f.reason.is_some()).count();
        assert_eq!(with_reason, 149);
    }

    #[test]
    fn reason_texts_code_to_their_category() {
        for (cat, _) in FALSE_POSITIVE_REASONS {
            for text in reason_texts(cat) {
                assert_eq!(code_reason(text), cat, "{text}");
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = paper_fixture();
        let b = paper_fixture();
        assert_eq!(a.feedback, b.feedback);
        assert_eq!(
            a.cases.iter().map(|c| &c.case).collect::<Vec<_>>(),
            b.cases.iter().map(|c| &c.case).collect::<Vec<_>>()
        );
    }
}
