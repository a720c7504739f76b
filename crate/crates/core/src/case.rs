//! Scheduled surgical cases and the documentation fed to the classifier.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Specialty {
    Neurosurgery,
    Orthopedics,
    Otolaryngology,
    Other,
}

impl Specialty {
    pub const ALL: [Specialty; 4] = [
        Specialty::Neurosurgery,
        Specialty::Orthopedics,
        Specialty::Otolaryngology,
        Specialty::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Specialty::Neurosurgery => "Neurosurgery",
            Specialty::Orthopedics => "Orthopedics",
            Specialty::Otolaryngology => "Otolaryngology",
            Specialty::Other => "Other",
        }
    }
}

impl FromStr for Specialty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Specialty::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| format!("unknown specialty {s:?}"))
    }
}

/// Scheduled patient class.
///
/// Serialized with the scheduling-system display strings; the variant
/// names are accepted on input as well.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PatientClass {
    #[serde(rename = "Inpatient")]
    Inpatient,
    #[serde(rename = "To Be Admitted", alias = "ToBeAdmitted")]
    ToBeAdmitted,
    #[serde(rename = "OP Surgery/Procedure", alias = "OutpatientProcedure")]
    OutpatientProcedure,
    #[serde(
        rename = "Overnight Recovery OP Surgery",
        alias = "OvernightRecoveryOutpatient"
    )]
    OvernightRecoveryOutpatient,
}

impl PatientClass {
    pub const ALL: [PatientClass; 4] = [
        PatientClass::Inpatient,
        PatientClass::ToBeAdmitted,
        PatientClass::OutpatientProcedure,
        PatientClass::OvernightRecoveryOutpatient,
    ];

    pub fn display_name(self) -> &'static str {
        match self {
            PatientClass::Inpatient => "Inpatient",
            PatientClass::ToBeAdmitted => "To Be Admitted",
            PatientClass::OutpatientProcedure => "OP Surgery/Procedure",
            PatientClass::OvernightRecoveryOutpatient => "Overnight Recovery OP Surgery",
        }
    }

    fn variant_name(self) -> &'static str {
        match self {
            PatientClass::Inpatient => "Inpatient",
            PatientClass::ToBeAdmitted => "ToBeAdmitted",
            PatientClass::OutpatientProcedure => "OutpatientProcedure",
            PatientClass::OvernightRecoveryOutpatient => "OvernightRecoveryOutpatient",
        }
    }
}

impl FromStr for PatientClass {
    type Err = String;

    /// Exact match on either the display string or the variant name.
    /// Anything else is rejected rather than coerced.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        PatientClass::ALL
            .into_iter()
            .find(|v| v.display_name() == s || v.variant_name() == s)
            .ok_or_else(|| format!("unknown patient class {s:?}"))
    }
}

impl fmt::Display for PatientClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Site {
    MainHospital,
    OtherSite,
}

impl FromStr for Site {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "MainHospital" => Ok(Site::MainHospital),
            "OtherSite" => Ok(Site::OtherSite),
            other => Err(format!("unknown site {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurgicalCase {
    pub case_id: String,
    pub patient_ref: String,
    pub surgery_date: NaiveDate,
    pub specialty: Specialty,
    pub patient_class: PatientClass,
    pub site: Site,
    /// Managed by an outside hospitalist group (the "PAMF" flag).
    pub external_provider_group: bool,
    pub scm_team_assigned: Option<String>,
}

/// Pre-operative note and active medication list.
///
/// `preop_note: None` means no note exists yet; `Some("")` is an empty one.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentationBundle {
    pub preop_note: Option<String>,
    #[serde(default)]
    pub medications: Vec<String>,
}

impl DocumentationBundle {
    pub fn new(note: impl Into<String>, medications: Vec<String>) -> Self {
        Self {
            preop_note: Some(note.into()),
            medications,
        }
    }

    /// True when the note is absent or blank.
    pub fn note_missing(&self) -> bool {
        self.preop_note
            .as_deref()
            .is_none_or(|n| n.trim().is_empty())
    }

    pub fn is_empty(&self) -> bool {
        self.note_missing() && self.medications.iter().all(|m| m.trim().is_empty())
    }
}

/// One case as it appears on disk: scheduling fields plus documentation,
/// flattened into a single JSON object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    #[serde(flatten)]
    pub case: SurgicalCase,
    #[serde(flatten)]
    pub documentation: DocumentationBundle,
}
