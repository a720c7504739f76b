//! Durable triage and feedback logs.
//!
//! Both logs are append-only JSONL files. On open they are replayed into an
//! in-memory index. All writes go through one mutex-guarded writer. Readers
//! take an `Arc` snapshot, which is replaced only after a whole batch has
//! been written, so a batch is never partially visible.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, NaiveDate, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::case::{CaseRecord, PatientClass, Site, Specialty, SurgicalCase};
use crate::exec::Execution;
use crate::feedback::{
    category_histogram, latest_per_case, ClinicianFeedback, Decision, FeedbackCategory,
    FeedbackError, FeedbackRecord, KeywordMap,
};
use crate::ingest::{ingest_cases_with, IngestError};
use crate::metrics::{BootstrapConfig, LabeledRecord, MetricsReport};
use crate::pipeline::{LlmBackend, Pipeline, ResultSource, ScreeningResult};
use crate::rubric::Classification;
use crate::rules::{apply_structural_rules, RuleOutcome};
use crate::text;

pub const TRIAGE_LOG: &str = "triage.jsonl";
pub const FEEDBACK_LOG: &str = "feedback.jsonl";

const EXCERPT_CHARS: usize = 400;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unknown case_id `{0}`")]
    UnknownCase(String),
    #[error("invalid feedback: {0}")]
    InvalidFeedback(#[from] FeedbackError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// One line of the triage log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageEntry {
    pub seq: u64,
    pub triaged_at: DateTime<Utc>,
    pub case: SurgicalCase,
    pub rule: RuleOutcome,
    pub result: ScreeningResult,
}

/// A case's current triage together with every feedback submission for it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriageRecord {
    pub case: SurgicalCase,
    pub rule: RuleOutcome,
    pub result: ScreeningResult,
    pub triaged_at: DateTime<Utc>,
    /// Earlier triages of the same case, oldest first.
    pub superseded: Vec<TriageEntry>,
    /// In log order.
    pub feedback: Vec<FeedbackRecord>,
    pub latest_decision: Option<Decision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    All,
    /// Inclusive bounds on surgery date; either side may be open.
    Range {
        from: Option<NaiveDate>,
        to: Option<NaiveDate>,
    },
}

impl Window {
    pub fn contains(&self, date: NaiveDate) -> bool {
        match *self {
            Window::All => true,
            Window::Range { from, to } => {
                from.is_none_or(|f| date >= f) && to.is_none_or(|t| date <= t)
            }
        }
    }
}

impl FromStr for Window {
    type Err = String;

    /// `all`, `YYYY-MM-DD`, or `FROM..TO` with either side omitted.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("all") {
            return Ok(Window::All);
        }
        let date = |d: &str| -> Result<Option<NaiveDate>, String> {
            let d = d.trim();
            if d.is_empty() {
                return Ok(None);
            }
            NaiveDate::parse_from_str(d, "%Y-%m-%d")
                .map(Some)
                .map_err(|_| format!("invalid date `{d}` in window"))
        };
        let (from, to) = match s.split_once("..") {
            Some((a, b)) => (date(a)?, date(b)?),
            None => {
                let d = date(s)?;
                (d, d)
            }
        };
        if let (Some(f), Some(t)) = (from, to) {
            if f > t {
                return Err(format!("window starts after it ends: {s}"));
            }
        }
        if from.is_none() && to.is_none() {
            return Ok(Window::All);
        }
        Ok(Window::Range { from, to })
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::All => f.write_str("all"),
            Window::Range { from, to } if from == to => {
                write!(f, "{}", from.expect("non-empty range"))
            }
            Window::Range { from, to } => {
                if let Some(d) = from {
                    write!(f, "{d}")?;
                }
                f.write_str("..")?;
                if let Some(d) = to {
                    write!(f, "{d}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorklistRow {
    pub case_id: String,
    pub patient_ref: String,
    pub surgery_date: NaiveDate,
    pub specialty: Specialty,
    pub patient_class: PatientClass,
    pub site: Site,
    pub external_provider_group: bool,
    pub scm_team_assigned: Option<String>,
    pub tier: Classification,
    pub source: ResultSource,
    pub explanation_excerpt: String,
    pub feedback_status: FeedbackStatus,
    pub latest_decision: Option<Decision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackStatus {
    Pending,
    Reviewed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Worklist {
    pub date: NaiveDate,
    pub rows: Vec<WorklistRow>,
    pub tier_counts: BTreeMap<Classification, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BatchError {
    pub case_id: Option<String>,
    pub message: String,
    /// Whether resubmitting may succeed (backend failures) as opposed to a
    /// defect in the input record.
    pub retriable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BatchSummary {
    pub date: NaiveDate,
    pub triaged: usize,
    pub tier_counts: BTreeMap<Classification, usize>,
    /// Valid records scheduled for a different date.
    pub skipped_other_dates: usize,
    pub errors: Vec<BatchError>,
}

impl fmt::Display for BatchSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let count = |t| self.tier_counts.get(&t).copied().unwrap_or(0);
        write!(
            f,
            "{}: triaged {} (Affirmative {}, Maybe {}, Negative {}), {} errors, {} skipped for other dates",
            self.date,
            self.triaged,
            count(Classification::Affirmative),
            count(Classification::Maybe),
            count(Classification::Negative),
            self.errors.len(),
            self.skipped_other_dates
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackAck {
    pub seq: u64,
    pub case_id: String,
    pub category: Option<FeedbackCategory>,
}

/// Immutable view of both logs at one position.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    current: BTreeMap<String, TriageEntry>,
    superseded: BTreeMap<String, Vec<TriageEntry>>,
    feedback: Vec<FeedbackRecord>,
    triage_len: u64,
}

impl Snapshot {
    fn apply_triage(&mut self, entry: TriageEntry) {
        self.triage_len = self.triage_len.max(entry.seq + 1);
        if let Some(old) = self.current.insert(entry.case.case_id.clone(), entry) {
            self.superseded
                .entry(old.case.case_id.clone())
                .or_default()
                .push(old);
        }
    }

    pub fn case_count(&self) -> usize {
        self.current.len()
    }

    pub fn feedback_count(&self) -> usize {
        self.feedback.len()
    }

    pub fn triage_log_len(&self) -> u64 {
        self.triage_len
    }

    pub fn contains(&self, case_id: &str) -> bool {
        self.current.contains_key(case_id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &TriageEntry> {
        self.current.values()
    }

    pub fn feedback_log(&self) -> &[FeedbackRecord] {
        &self.feedback
    }

    fn latest_feedback(&self) -> BTreeMap<&str, &FeedbackRecord> {
        latest_per_case(&self.feedback)
    }

    pub fn case(&self, case_id: &str) -> Option<TriageRecord> {
        let entry = self.current.get(case_id)?;
        let feedback: Vec<FeedbackRecord> = self
            .feedback
            .iter()
            .filter(|f| f.feedback.case_id == case_id)
            .cloned()
            .collect();
        let latest_decision = latest_per_case(&feedback)
            .get(case_id)
            .map(|r| r.feedback.decision);
        Some(TriageRecord {
            case: entry.case.clone(),
            rule: entry.rule,
            result: entry.result.clone(),
            triaged_at: entry.triaged_at,
            superseded: self.superseded.get(case_id).cloned().unwrap_or_default(),
            feedback,
            latest_decision,
        })
    }

    /// Cases scheduled for `date`, Affirmative first, then Maybe, then
    /// Negative, by case_id within a tier.
    pub fn worklist(&self, date: NaiveDate) -> Worklist {
        let latest = self.latest_feedback();
        let mut rows: Vec<WorklistRow> = self
            .current
            .values()
            .filter(|e| e.case.surgery_date == date)
            .map(|e| {
                let decision = latest
                    .get(e.case.case_id.as_str())
                    .map(|r| r.feedback.decision);
                WorklistRow {
                    case_id: e.case.case_id.clone(),
                    patient_ref: e.case.patient_ref.clone(),
                    surgery_date: e.case.surgery_date,
                    specialty: e.case.specialty,
                    patient_class: e.case.patient_class,
                    site: e.case.site,
                    external_provider_group: e.case.external_provider_group,
                    scm_team_assigned: e.case.scm_team_assigned.clone(),
                    tier: e.result.classification,
                    source: e.result.source,
                    explanation_excerpt: text::excerpt(&e.result.explanation, EXCERPT_CHARS),
                    feedback_status: if decision.is_some() {
                        FeedbackStatus::Reviewed
                    } else {
                        FeedbackStatus::Pending
                    },
                    latest_decision: decision,
                }
            })
            .collect();
        rows.sort_by(|a, b| b.tier.cmp(&a.tier).then_with(|| a.case_id.cmp(&b.case_id)));
        let mut tier_counts: BTreeMap<Classification, usize> =
            Classification::ALL.into_iter().map(|t| (t, 0)).collect();
        for r in &rows {
            *tier_counts.entry(r.tier).or_default() += 1;
        }
        let notice = rows
            .is_empty()
            .then(|| format!("no triage batch has produced cases for {date}"));
        Worklist {
            date,
            rows,
            tier_counts,
            notice,
        }
    }

    /// Current tier joined with the latest decision, for cases in `window`
    /// that have any feedback.
    pub fn labeled_records(&self, window: Window) -> Vec<LabeledRecord> {
        let latest = self.latest_feedback();
        self.current
            .values()
            .filter(|e| window.contains(e.case.surgery_date))
            .filter_map(|e| {
                latest.get(e.case.case_id.as_str()).map(|r| {
                    LabeledRecord::new(
                        e.case.case_id.clone(),
                        e.result.classification,
                        r.feedback.decision,
                    )
                })
            })
            .collect()
    }

    pub fn tiers_in(&self, window: Window) -> Vec<Classification> {
        self.current
            .values()
            .filter(|e| window.contains(e.case.surgery_date))
            .map(|e| e.result.classification)
            .collect()
    }

    /// Histogram over the latest decision per case in `window`.
    pub fn category_histogram(&self, window: Window) -> BTreeMap<FeedbackCategory, usize> {
        let latest = self.latest_feedback();
        category_histogram(latest.into_iter().filter_map(|(id, r)| {
            let entry = self.current.get(id)?;
            window.contains(entry.case.surgery_date).then_some(r)
        }))
    }

    pub fn metrics_report(&self, window: Window, cfg: &BootstrapConfig) -> MetricsReport {
        MetricsReport::build(
            window.to_string(),
            &self.tiers_in(window),
            &self.labeled_records(window),
            self.category_histogram(window),
            cfg,
        )
    }
}

struct Writer {
    triage: File,
    feedback: File,
    next_triage: u64,
    next_feedback: u64,
}

pub struct TriageStore {
    dir: PathBuf,
    keywords: KeywordMap,
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl TriageStore {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        Self::open_with(dir, KeywordMap::builtin().clone())
    }

    pub fn open_with(dir: &Path, keywords: KeywordMap) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir).map_err(|source| StoreError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let (triage, triage_entries) = open_log::<TriageEntry>(&dir.join(TRIAGE_LOG))?;
        let (feedback, feedback_records) = open_log::<FeedbackRecord>(&dir.join(FEEDBACK_LOG))?;

        let mut snapshot = Snapshot::default();
        for entry in triage_entries {
            snapshot.apply_triage(entry);
        }
        let next_feedback = feedback_records
            .iter()
            .map(|r| r.seq + 1)
            .max()
            .unwrap_or(0);
        snapshot.feedback = feedback_records;
        let writer = Writer {
            triage,
            feedback,
            next_triage: snapshot.triage_len,
            next_feedback,
        };
        tracing::info!(
            cases = snapshot.current.len(),
            feedback = snapshot.feedback.len(),
            "opened store at {}",
            dir.display()
        );
        Ok(Self {
            dir: dir.to_path_buf(),
            keywords,
            writer: Mutex::new(writer),
            snapshot: RwLock::new(Arc::new(snapshot)),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn keywords(&self) -> &KeywordMap {
        &self.keywords
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot
            .read()
            .expect("snapshot lock poisoned")
            .clone()
    }

    fn publish(&self, snapshot: Snapshot) {
        *self.snapshot.write().expect("snapshot lock poisoned") = Arc::new(snapshot);
    }

    /// Append triage results in one write and publish them together.
    pub fn append_triage(
        &self,
        items: Vec<(SurgicalCase, ScreeningResult)>,
        triaged_at: DateTime<Utc>,
    ) -> Result<Vec<TriageEntry>, StoreError> {
        let mut w = self.writer.lock().expect("writer lock poisoned");
        let entries: Vec<TriageEntry> = items
            .into_iter()
            .enumerate()
            .map(|(i, (case, result))| TriageEntry {
                seq: w.next_triage + i as u64,
                triaged_at,
                rule: apply_structural_rules(&case),
                case,
                result,
            })
            .collect();
        write_lines(&mut w.triage, &self.dir.join(TRIAGE_LOG), &entries)?;
        w.next_triage += entries.len() as u64;
        let mut next = (*self.snapshot()).clone();
        for e in &entries {
            next.apply_triage(e.clone());
        }
        self.publish(next);
        Ok(entries)
    }

    pub fn record_feedback(&self, feedback: ClinicianFeedback) -> Result<FeedbackAck, StoreError> {
        let mut acks = self.record_feedback_batch(vec![feedback])?;
        Ok(acks.remove(0))
    }

    /// All-or-nothing: any unknown case or invalid record rejects the batch.
    pub fn record_feedback_batch(
        &self,
        feedback: Vec<ClinicianFeedback>,
    ) -> Result<Vec<FeedbackAck>, StoreError> {
        let mut w = self.writer.lock().expect("writer lock poisoned");
        let current = self.snapshot();
        let mut records = Vec::with_capacity(feedback.len());
        for (i, fb) in feedback.into_iter().enumerate() {
            let fb = fb.normalized()?;
            if !current.contains(&fb.case_id) {
                return Err(StoreError::UnknownCase(fb.case_id));
            }
            records.push(FeedbackRecord::new(
                w.next_feedback + i as u64,
                fb,
                &self.keywords,
            ));
        }
        write_lines(&mut w.feedback, &self.dir.join(FEEDBACK_LOG), &records)?;
        w.next_feedback += records.len() as u64;
        let acks = records
            .iter()
            .map(|r| FeedbackAck {
                seq: r.seq,
                case_id: r.feedback.case_id.clone(),
                category: r.category,
            })
            .collect();
        let mut next = (*current).clone();
        next.feedback.extend(records);
        self.publish(next);
        Ok(acks)
    }

    /// Triage every case scheduled for `date` from `input`. The batch runs
    /// the day before surgery, so earlier surgery dates are rejected at
    /// ingestion. Per-case failures are reported and the batch continues.
    pub fn run_batch<B: LlmBackend>(
        &self,
        pipeline: &Pipeline<B>,
        date: NaiveDate,
        input: &Path,
        exec: Execution,
    ) -> Result<BatchSummary, StoreError> {
        let triage_day = date.pred_opt().unwrap_or(date);
        let ingested = ingest_cases_with(input, Some(triage_day))?;
        let mut errors: Vec<BatchError> = ingested
            .errors
            .iter()
            .map(|e| BatchError {
                case_id: e.case_id.clone(),
                message: e.to_string(),
                retriable: false,
            })
            .collect();
        let (todo, other): (Vec<CaseRecord>, Vec<CaseRecord>) = ingested
            .records
            .into_iter()
            .partition(|r| r.case.surgery_date == date);
        let outcomes = pipeline.triage_batch(&todo, exec);

        let mut items = Vec::with_capacity(todo.len());
        for (record, outcome) in todo.into_iter().zip(outcomes) {
            match outcome {
                Ok(result) => items.push((record.case, result)),
                Err(err) => {
                    tracing::warn!("{err}");
                    errors.push(BatchError {
                        case_id: Some(err.case_id.clone()),
                        message: err.to_string(),
                        retriable: err.is_retriable(),
                    });
                }
            }
        }
        let mut tier_counts: BTreeMap<Classification, usize> =
            Classification::ALL.into_iter().map(|t| (t, 0)).collect();
        for (_, r) in &items {
            *tier_counts.entry(r.classification).or_default() += 1;
        }
        let triaged = items.len();
        self.append_triage(items, Utc::now())?;
        Ok(BatchSummary {
            date,
            triaged,
            tier_counts,
            skipped_other_dates: other.len(),
            errors,
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// Replays a log. A final line without its newline is the trace of an
// interrupted write; it is cut off so later appends start clean.
fn open_log<T: DeserializeOwned>(path: &Path) -> Result<(File, Vec<T>), StoreError> {
    let mut file = OpenOptions::new()
        .read(true)
        .append(true)
        .create(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut text = String::new();
    file.read_to_string(&mut text).map_err(io_err(path))?;
    if !text.is_empty() && !text.ends_with('\n') {
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        tracing::warn!("{}: dropping incomplete trailing record", path.display());
        file.set_len(keep as u64).map_err(io_err(path))?;
        text.truncate(keep);
    }
    file.seek(SeekFrom::End(0)).map_err(io_err(path))?;
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok((file, items))
}

fn write_lines<T: Serialize>(file: &mut File, path: &Path, items: &[T]) -> Result<(), StoreError> {
    if items.is_empty() {
        return Ok(());
    }
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("log records serialize");
        buf.push(b'\n');
    }
    file.write_all(&buf).map_err(io_err(path))?;
    file.sync_data().map_err(io_err(path))?;
    Ok(())
}
