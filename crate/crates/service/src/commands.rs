//! Implementations behind the `triage` subcommands. Kept out of `main` so
//! tests can drive them directly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context};
use chrono::NaiveDate;
use serde::Serialize;
use triage_core::exec::Execution;
use triage_core::fixture::paper_fixture;
use triage_core::generator::generate_cases;
use triage_core::ingest::write_jsonl;
use triage_core::labels::load_labels;
use triage_core::metrics::BootstrapConfig;
use triage_core::store::BatchSummary;
use triage_core::{
    Archetype, ArchetypeMix, Classification, ComorbidityProfile, GeneratorConfig, MetricsReport,
    TriageStore, Window,
};

use crate::config::{BackendKind, ServiceConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Table,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(Self::Table),
            "json" => Ok(Self::Json),
            _ => Err(format!("unknown format `{s}` (expected table or json)")),
        }
    }
}

pub fn run_batch(
    cfg: &ServiceConfig,
    store: &TriageStore,
    date: NaiveDate,
    input: &Path,
    backend: BackendKind,
    exec: Execution,
) -> anyhow::Result<BatchSummary> {
    let pipeline = cfg.pipeline(backend)?;
    Ok(store.run_batch(&pipeline, date, input, exec)?)
}

/// The report over stored triage and feedback in `window`.
pub fn store_report(store: &TriageStore, window: Window, cfg: &BootstrapConfig) -> MetricsReport {
    store.snapshot().metrics_report(window, cfg)
}

/// The report over an external labeled file. No reason categories are
/// available, so that part of the report is empty.
pub fn labels_report(path: &Path, cfg: &BootstrapConfig) -> anyhow::Result<MetricsReport> {
    let ds = load_labels(path, cfg.policy)?;
    let tiers: Vec<Classification> = ds.records.iter().map(|r| r.predicted).collect();
    let mut report = MetricsReport::build(
        path.display().to_string(),
        &tiers,
        &ds.records,
        Default::default(),
        cfg,
    );
    if ds.excluded > 0 {
        let note = format!("{} rows without a reference label excluded", ds.excluded);
        report.notice = Some(match report.notice.take() {
            Some(n) => format!("{n}; {note}"),
            None => note,
        });
    }
    Ok(report)
}

pub fn render_report(report: &MetricsReport, format: ReportFormat) -> anyhow::Result<String> {
    Ok(match format {
        ReportFormat::Table => report.render_table(),
        ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
    })
}

/// One line of a `--truth` file.
#[derive(Debug, Serialize)]
struct TruthLine<'a> {
    case_id: &'a str,
    archetype: Archetype,
    expected_tier: Classification,
    profile: &'a ComorbidityProfile,
}

pub fn generate(
    n: usize,
    seed: u64,
    date: Option<NaiveDate>,
    mix: Option<ArchetypeMix>,
    out: &Path,
    truth: Option<&Path>,
) -> anyhow::Result<usize> {
    let mut cfg = GeneratorConfig::new(n, seed);
    if let Some(d) = date {
        cfg.surgery_date = d;
    }
    if let Some(m) = mix {
        cfg.mix = m;
    }
    let cases = generate_cases(&cfg)?;
    let records: Vec<_> = cases.iter().map(|g| g.record.clone()).collect();
    let file = File::create(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut w = BufWriter::new(file);
    write_jsonl(&mut w, &records)?;
    w.flush()?;

    if let Some(path) = truth {
        let file =
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        for g in &cases {
            let line = TruthLine {
                case_id: &g.record.case.case_id,
                archetype: g.archetype,
                expected_tier: g.expected_tier(),
                profile: &g.profile,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    Ok(cases.len())
}

/// Load the deployment-shaped fixture. Refuses a store that already holds
/// cases so the fixture's counts stay exact.
pub fn load_fixture(store: &TriageStore) -> anyhow::Result<(usize, usize)> {
    let snap = store.snapshot();
    if snap.case_count() > 0 || snap.feedback_count() > 0 {
        bail!(
            "store {} is not empty ({} cases); use a fresh directory",
            store.dir().display(),
            snap.case_count()
        );
    }
    let fx = paper_fixture();
    fx.load_into(store)?;
    Ok((fx.cases.len(), fx.feedback.len()))
}
