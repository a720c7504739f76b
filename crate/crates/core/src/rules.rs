//! Structural exclusions applied from scheduling fields before any model
//! call.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::case::{PatientClass, Site, SurgicalCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExclusionReason {
    OutpatientNoAdmission,
    OffSiteLocation,
    ExternalProviderGroup,
}

impl ExclusionReason {
    pub fn explanation(self) -> &'static str {
        match self {
            ExclusionReason::OutpatientNoAdmission => {
                "Structural exclusion: scheduled as an outpatient procedure without planned admission or overnight observation."
            }
            ExclusionReason::OffSiteLocation => {
                "Structural exclusion: scheduled at a location outside the main hospital."
            }
            ExclusionReason::ExternalProviderGroup => {
                "Structural exclusion: patient is managed by an external provider group."
            }
        }
    }
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExclusionReason::OutpatientNoAdmission => "OutpatientNoAdmission",
            ExclusionReason::OffSiteLocation => "OffSiteLocation",
            ExclusionReason::ExternalProviderGroup => "ExternalProviderGroup",
        };
        f.write_str(s)
    }
}

/// `reason.is_some()` exactly when the case is excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub excluded: bool,
    pub reason: Option<ExclusionReason>,
}

impl RuleOutcome {
    pub const NOT_EXCLUDED: RuleOutcome = RuleOutcome {
        excluded: false,
        reason: None,
    };

    fn excluded(reason: ExclusionReason) -> Self {
        Self {
            excluded: true,
            reason: Some(reason),
        }
    }
}

/// First matching exclusion, checked in a fixed order: outpatient class,
/// off-site location, external provider group.
///
/// Overnight-recovery outpatients count as planned overnight observation
/// and are not excluded by the outpatient rule.
pub fn apply_structural_rules(case: &SurgicalCase) -> RuleOutcome {
    if case.patient_class == PatientClass::OutpatientProcedure {
        RuleOutcome::excluded(ExclusionReason::OutpatientNoAdmission)
    } else if case.site == Site::OtherSite {
        RuleOutcome::excluded(ExclusionReason::OffSiteLocation)
    } else if case.external_provider_group {
        RuleOutcome::excluded(ExclusionReason::ExternalProviderGroup)
    } else {
        RuleOutcome::NOT_EXCLUDED
    }
}
