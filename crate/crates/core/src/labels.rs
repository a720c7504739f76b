//! Labeled CSV datasets for retrospective evaluation.
//!
//! Columns: `case_id,predicted,reference`. `predicted` is a tier.
//! `reference` is Yes/No, or a tier for three-valued gold labels, which is
//! collapsed with the same policy as predictions. Rows with a blank
//! reference are excluded and counted.

use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::feedback::Decision;
use crate::metrics::{collapse, CollapsePolicy, LabeledRecord};
use crate::rubric::Classification;

#[derive(Debug, thiserror::Error)]
pub enum LabelsError {
    #[error("cannot read labels {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("labels row {row}: {message}")]
    Row { row: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    pub records: Vec<LabeledRecord>,
    /// Rows without a reference label.
    pub excluded: usize,
}

#[derive(Deserialize)]
struct Row {
    case_id: String,
    predicted: String,
    #[serde(default)]
    reference: String,
}

pub fn load_labels(path: &Path, policy: CollapsePolicy) -> Result<LabeledDataset, LabelsError> {
    let file = std::fs::File::open(path).map_err(|source| LabelsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_labels(file, policy)
}

pub fn read_labels<R: Read>(
    reader: R,
    policy: CollapsePolicy,
) -> Result<LabeledDataset, LabelsError> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = LabeledDataset {
        records: Vec::new(),
        excluded: 0,
    };
    for (i, row) in csv.deserialize::<Row>().enumerate() {
        // header is line 1
        let line = i + 2;
        let fail = |message: String| LabelsError::Row { row: line, message };
        let row = row.map_err(|e| fail(e.to_string()))?;
        if row.case_id.is_empty() {
            return Err(fail("case_id is empty".into()));
        }
        let predicted: Classification = row
            .predicted
            .parse()
            .map_err(|_| fail(format!("predicted `{}` is not a tier", row.predicted)))?;
        if row.reference.is_empty() {
            out.excluded += 1;
            continue;
        }
        let reference = parse_reference(&row.reference, policy).ok_or_else(|| {
            fail(format!(
                "reference `{}` is neither Yes/No nor a tier",
                row.reference
            ))
        })?;
        out.records
            .push(LabeledRecord::new(row.case_id, predicted, reference));
    }
    Ok(out)
}

fn parse_reference(s: &str, policy: CollapsePolicy) -> Option<Decision> {
    if let Ok(d) = s.parse::<Decision>() {
        return Some(d);
    }
    let tier = s.parse::<Classification>().ok()?;
    Some(if collapse(tier, policy) {
        Decision::Yes
    } else {
        Decision::No
    })
}
