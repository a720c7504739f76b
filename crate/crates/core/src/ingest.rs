//! Case ingestion from `.json` (one object per file) and `.jsonl` (one
//! object per line) sources.
//!
//! Records are validated field by field so a schema violation names the
//! offending field. Bad records are returned alongside the good ones.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::case::{CaseRecord, DocumentationBundle, SurgicalCase};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordError {
    /// `file` or `file:line`.
    pub location: String,
    pub case_id: Option<String>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.location)?;
        if let Some(id) = &self.case_id {
            write!(f, " [{id}]")?;
        }
        if let Some(field) = &self.field {
            write!(f, " field `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub records: Vec<CaseRecord>,
    pub errors: Vec<RecordError>,
}

/// Read every case under `source` (a file or a directory of files).
pub fn ingest_cases(source: &Path) -> Result<Ingested, IngestError> {
    ingest_cases_with(source, None)
}

/// Like [`ingest_cases`], additionally rejecting cases scheduled before
/// `reference_date` (the day triage runs).
pub fn ingest_cases_with(
    source: &Path,
    reference_date: Option<NaiveDate>,
) -> Result<Ingested, IngestError> {
    let meta = fs::metadata(source).map_err(|e| IngestError::Io {
        path: source.to_path_buf(),
        source: e,
    })?;
    let files = if meta.is_dir() {
        let mut files = Vec::new();
        let entries = fs::read_dir(source).map_err(|e| IngestError::Io {
            path: source.to_path_buf(),
            source: e,
        })?;
        for entry in entries {
            let entry = entry.map_err(|e| IngestError::Io {
                path: source.to_path_buf(),
                source: e,
            })?;
            let path = entry.path();
            if path.is_file() && matches!(extension(&path).as_deref(), Some("json" | "jsonl")) {
                files.push(path);
            }
        }
        files.sort();
        files
    } else {
        vec![source.to_path_buf()]
    };

    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    for file in files {
        let text = fs::read_to_string(&file).map_err(|e| IngestError::Io {
            path: file.clone(),
            source: e,
        })?;
        let name = file.display().to_string();
        if extension(&file).as_deref() == Some("jsonl") {
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let location = format!("{name}:{}", i + 1);
                push_record(&mut out, &mut seen, location, line, reference_date);
            }
        } else {
            push_record(&mut out, &mut seen, name, &text, reference_date);
        }
    }
    Ok(out)
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

fn push_record(
    out: &mut Ingested,
    seen: &mut HashSet<String>,
    location: String,
    text: &str,
    reference_date: Option<NaiveDate>,
) {
    match parse_record(text) {
        Ok(record) => {
            let case = &record.case;
            if let Some(reference) = reference_date {
                if case.surgery_date < reference {
                    out.errors.push(RecordError {
                        location,
                        case_id: Some(case.case_id.clone()),
                        field: Some("surgery_date".into()),
                        message: format!(
                            "surgery date {} precedes the triage date {reference}",
                            case.surgery_date
                        ),
                    });
                    return;
                }
            }
            if !seen.insert(case.case_id.clone()) {
                out.errors.push(RecordError {
                    location,
                    case_id: Some(case.case_id.clone()),
                    field: Some("case_id".into()),
                    message: "duplicate case_id in batch".into(),
                });
                return;
            }
            out.records.push(record);
        }
        Err(mut err) => {
            err.location = location;
            out.errors.push(err);
        }
    }
}

/// Parse and validate a single JSON case record.
pub fn parse_record(text: &str) -> Result<CaseRecord, RecordError> {
    let value: Value = serde_json::from_str(text).map_err(|e| RecordError {
        location: String::new(),
        case_id: None,
        field: None,
        message: format!("invalid JSON: {e}"),
    })?;
    let Value::Object(obj) = value else {
        return Err(RecordError {
            location: String::new(),
            case_id: None,
            field: None,
            message: "record is not a JSON object".into(),
        });
    };
    let case_id = obj
        .get("case_id")
        .and_then(Value::as_str)
        .map(str::to_string);
    let fail = |field: &str, message: String| RecordError {
        location: String::new(),
        case_id: case_id.clone(),
        field: Some(field.to_string()),
        message,
    };
    let fields = Fields {
        obj: &obj,
        fail: &fail,
    };

    let id = fields.required_str("case_id")?;
    if id.trim().is_empty() {
        return Err(fail("case_id", "must not be empty".into()));
    }
    let patient_ref = fields.required_str("patient_ref")?;
    let date_text = fields.required_str("surgery_date")?;
    let surgery_date = NaiveDate::parse_from_str(&date_text, "%Y-%m-%d")
        .map_err(|e| fail("surgery_date", format!("expected YYYY-MM-DD: {e}")))?;
    let specialty = fields
        .required_str("specialty")?
        .parse()
        .map_err(|e| fail("specialty", e))?;
    let patient_class = fields
        .required_str("patient_class")?
        .parse()
        .map_err(|e| fail("patient_class", e))?;
    let site = fields
        .required_str("site")?
        .parse()
        .map_err(|e| fail("site", e))?;
    let external_provider_group = match obj.get("external_provider_group") {
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err(fail("external_provider_group", "expected a boolean".into())),
        None => {
            return Err(fail(
                "external_provider_group",
                "missing required field".into(),
            ))
        }
    };
    let scm_team_assigned = fields.optional_str("scm_team_assigned")?;
    let preop_note = fields.optional_str("preop_note")?;
    let medications = match obj.get("medications") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| fail("medications", "expected an array of strings".into()))
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(fail("medications", "expected an array of strings".into())),
    };

    Ok(CaseRecord {
        case: SurgicalCase {
            case_id: id,
            patient_ref,
            surgery_date,
            specialty,
            patient_class,
            site,
            external_provider_group,
            scm_team_assigned,
        },
        documentation: DocumentationBundle {
            preop_note,
            medications,
        },
    })
}

struct Fields<'a, F: Fn(&str, String) -> RecordError> {
    obj: &'a Map<String, Value>,
    fail: &'a F,
}

impl<F: Fn(&str, String) -> RecordError> Fields<'_, F> {
    fn required_str(&self, field: &str) -> Result<String, RecordError> {
        match self.obj.get(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Null) | None => Err((self.fail)(field, "missing required field".into())),
            Some(_) => Err((self.fail)(field, "expected a string".into())),
        }
    }

    fn optional_str(&self, field: &str) -> Result<Option<String>, RecordError> {
        match self.obj.get(field) {
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(Value::Null) | None => Ok(None),
            Some(_) => Err((self.fail)(field, "expected a string or null".into())),
        }
    }
}

/// Serialize records in the ingestion schema, one JSON object per line.
pub fn write_jsonl<W: Write>(mut out: W, records: &[CaseRecord]) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, &to_value(record))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// The canonical JSON object for a record. `preop_note` and
/// `scm_team_assigned` are always present (possibly `null`).
pub fn to_value(record: &CaseRecord) -> Value {
    serde_json::to_value(record).expect("case records always serialize")
}
