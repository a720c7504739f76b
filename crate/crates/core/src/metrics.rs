//! Evaluation of tier predictions against Yes/No reference decisions.
//!
//! Every metric here is a function of six numbers: the count of Yes and No
//! references within each predicted tier. Bootstrap replicates reduce to
//! those counts too, so a single resampling pass serves every metric.
//!
//! Percentiles use linear interpolation between order statistics (the
//! "type 7" definition). Replicates where a metric is undefined are dropped
//! before taking percentiles and their number is reported.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::feedback::{Decision, FeedbackCategory};
use crate::rubric::Classification;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub case_id: String,
    pub predicted: Classification,
    pub reference: Decision,
}

impl LabeledRecord {
    pub fn new(case_id: impl Into<String>, predicted: Classification, reference: Decision) -> Self {
        Self {
            case_id: case_id.into(),
            predicted,
            reference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollapsePolicy {
    /// Whether a Maybe prediction counts as positive.
    pub maybe_positive: bool,
}

impl Default for CollapsePolicy {
    fn default() -> Self {
        Self {
            maybe_positive: true,
        }
    }
}

/// The tier to binary mapping. Nothing else in the crate makes this call.
pub fn collapse(predicted: Classification, policy: CollapsePolicy) -> bool {
    match predicted {
        Classification::Affirmative => true,
        Classification::Maybe => policy.maybe_positive,
        Classification::Negative => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no evaluable cases")]
    NoEvaluableCases,
}

/// Yes/No reference counts within each predicted tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TierCounts {
    yes: [u64; 3],
    no: [u64; 3],
}

fn tier_index(t: Classification) -> usize {
    match t {
        Classification::Affirmative => 0,
        Classification::Maybe => 1,
        Classification::Negative => 2,
    }
}

const TIERS: [Classification; 3] = [
    Classification::Affirmative,
    Classification::Maybe,
    Classification::Negative,
];

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl TierCounts {
    pub fn from_records(records: &[LabeledRecord]) -> Self {
        let mut c = TierCounts::default();
        for r in records {
            c.add(r.predicted, r.reference);
        }
        c
    }

    fn add(&mut self, tier: Classification, reference: Decision) {
        let i = tier_index(tier);
        match reference {
            Decision::Yes => self.yes[i] += 1,
            Decision::No => self.no[i] += 1,
        }
    }

    pub fn yes(&self, tier: Classification) -> u64 {
        self.yes[tier_index(tier)]
    }

    pub fn no(&self, tier: Classification) -> u64 {
        self.no[tier_index(tier)]
    }

    pub fn in_tier(&self, tier: Classification) -> u64 {
        self.yes(tier) + self.no(tier)
    }

    pub fn total(&self) -> u64 {
        self.yes.iter().sum::<u64>() + self.no.iter().sum::<u64>()
    }

    pub fn confusion(&self, policy: CollapsePolicy) -> ConfusionCounts {
        let mut c = ConfusionCounts::default();
        for t in TIERS {
            if collapse(t, policy) {
                c.tp += self.yes(t);
                c.fp += self.no(t);
            } else {
                c.fn_ += self.yes(t);
                c.tn += self.no(t);
            }
        }
        c
    }

    /// Fraction of Yes references among cases predicted as `tier`.
    pub fn tier_ppv(&self, tier: Classification) -> Option<f64> {
        ratio(self.yes(tier), self.in_tier(tier))
    }
}

pub fn confusion(
    records: &[LabeledRecord],
    policy: CollapsePolicy,
) -> Result<ConfusionCounts, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::NoEvaluableCases);
    }
    Ok(TierCounts::from_records(records).confusion(policy))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Sensitivity,
    Specificity,
    Ppv,
    Npv,
    Accuracy,
    BalancedAccuracy,
    TierPpv(Classification),
}

impl Metric {
    pub const BINARY: [Metric; 6] = [
        Metric::Sensitivity,
        Metric::Specificity,
        Metric::Ppv,
        Metric::Npv,
        Metric::Accuracy,
        Metric::BalancedAccuracy,
    ];

    pub fn name(self) -> String {
        match self {
            Metric::Sensitivity => "sensitivity".into(),
            Metric::Specificity => "specificity".into(),
            Metric::Ppv => "ppv".into(),
            Metric::Npv => "npv".into(),
            Metric::Accuracy => "accuracy".into(),
            Metric::BalancedAccuracy => "balanced_accuracy".into(),
            Metric::TierPpv(t) => format!("ppv_{}", t.as_str().to_ascii_lowercase()),
        }
    }

    pub fn of_confusion(self, c: &ConfusionCounts) -> Option<f64> {
        match self {
            Metric::Sensitivity => ratio(c.tp, c.tp + c.fn_),
            Metric::Specificity => ratio(c.tn, c.tn + c.fp),
            Metric::Ppv => ratio(c.tp, c.tp + c.fp),
            Metric::Npv => ratio(c.tn, c.tn + c.fn_),
            Metric::Accuracy => ratio(c.tp + c.tn, c.total()),
            Metric::BalancedAccuracy => {
                let sens = Metric::Sensitivity.of_confusion(c)?;
                let spec = Metric::Specificity.of_confusion(c)?;
                Some((sens + spec) / 2.0)
            }
            Metric::TierPpv(_) => None,
        }
    }

    pub fn evaluate(self, counts: &TierCounts, policy: CollapsePolicy) -> Option<f64> {
        match self {
            Metric::TierPpv(t) => counts.tier_ppv(t),
            m => m.of_confusion(&counts.confusion(policy)),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Metric::BINARY
            .into_iter()
            .chain(TIERS.map(Metric::TierPpv))
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// The six binary metrics; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub accuracy: Option<f64>,
    pub balanced_accuracy: Option<f64>,
}

pub fn point_metrics(c: &ConfusionCounts) -> PointMetrics {
    PointMetrics {
        sensitivity: Metric::Sensitivity.of_confusion(c),
        specificity: Metric::Specificity.of_confusion(c),
        ppv: Metric::Ppv.of_confusion(c),
        npv: Metric::Npv.of_confusion(c),
        accuracy: Metric::Accuracy.of_confusion(c),
        balanced_accuracy: Metric::BalancedAccuracy.of_confusion(c),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub policy: CollapsePolicy,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 10_000,
            seed: 1,
            policy: CollapsePolicy::default(),
            exec: Execution::default(),
        }
    }
}

/// Percentile interval. `lo`/`hi` are `None` when every replicate was
/// undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub replicates: usize,
    pub dropped: usize,
}

/// Per-replicate tier counts. Replicate `i` draws from its own ChaCha8
/// stream `(seed, i)`, so the result does not depend on scheduling.
pub fn bootstrap_counts(records: &[LabeledRecord], cfg: &BootstrapConfig) -> Vec<TierCounts> {
    let cells: Vec<(Classification, Decision)> =
        records.iter().map(|r| (r.predicted, r.reference)).collect();
    let n = cells.len();
    cfg.exec.map_range(cfg.replicates, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        let mut counts = TierCounts::default();
        for _ in 0..n {
            let (t, d) = cells[rng.random_range(0..n)];
            counts.add(t, d);
        }
        counts
    })
}

/// Linear interpolation between closest ranks. `sorted` must be ascending
/// and non-empty.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn interval(replicates: &[TierCounts], metric: Metric, policy: CollapsePolicy) -> BootstrapCi {
    let mut values: Vec<f64> = replicates
        .iter()
        .filter_map(|c| metric.evaluate(c, policy))
        .collect();
    let dropped = replicates.len() - values.len();
    values.sort_by(f64::total_cmp);
    let (lo, hi) = if values.is_empty() {
        (None, None)
    } else {
        (
            Some(percentile(&values, 0.025)),
            Some(percentile(&values, 0.975)),
        )
    };
    BootstrapCi {
        lo,
        hi,
        replicates: replicates.len(),
        dropped,
    }
}

pub fn bootstrap_ci(
    records: &[LabeledRecord],
    metric: Metric,
    cfg: &BootstrapConfig,
) -> Result<BootstrapCi, MetricsError> {
    Ok(bootstrap_all(records, &[metric], cfg)?.remove(0))
}

/// Intervals for several metrics from one set of replicates.
pub fn bootstrap_all(
    records: &[LabeledRecord],
    metrics: &[Metric],
    cfg: &BootstrapConfig,
) -> Result<Vec<BootstrapCi>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::NoEvaluableCases);
    }
    let replicates = bootstrap_counts(records, cfg);
    Ok(metrics
        .iter()
        .map(|&m| interval(&replicates, m, cfg.policy))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub dropped_replicates: usize,
}

impl Estimate {
    fn new(point: Option<f64>, ci: Option<&BootstrapCi>) -> Self {
        Self {
            point,
            ci_lo: ci.and_then(|c| c.lo),
            ci_hi: ci.and_then(|c| c.hi),
            dropped_replicates: ci.map_or(0, |c| c.dropped),
        }
    }

    /// `0.94 (0.91–0.96)`, or `undefined`.
    pub fn display(&self) -> String {
        match (self.point, self.ci_lo, self.ci_hi) {
            (Some(p), Some(lo), Some(hi)) => format!("{p:.2} ({lo:.2}\u{2013}{hi:.2})"),
            (Some(p), _, _) => format!("{p:.2}"),
            _ => "undefined".to_string(),
        }
    }
}

/// Positive-tier PPVs with point estimates. Empty tiers are omitted and
/// named in the returned notes.
pub fn tier_ppv(
    records: &[LabeledRecord],
    policy: CollapsePolicy,
) -> (BTreeMap<Classification, f64>, Vec<String>) {
    let counts = TierCounts::from_records(records);
    let mut out = BTreeMap::new();
    let mut notes = Vec::new();
    for t in TIERS.into_iter().filter(|&t| collapse(t, policy)) {
        match counts.tier_ppv(t) {
            Some(v) => {
                out.insert(t, v);
            }
            None => notes.push(format!("{t} tier has no adjudicated cases; PPV omitted")),
        }
    }
    (out, notes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub tier: Option<Classification>,
    pub total_cases: u64,
    pub with_feedback: u64,
    pub feedback_rate: Option<f64>,
    pub agreements: u64,
    pub agreement_fraction: Option<f64>,
}

/// Per-tier rows in Affirmative, Maybe, Negative order plus an overall row
/// (`tier: None`). Agreement is a positive tier with Yes or a negative tier
/// with No.
pub fn agreement_table(
    all_cases: &[Classification],
    records: &[LabeledRecord],
    policy: CollapsePolicy,
) -> Vec<AgreementRow> {
    let mut totals = [0u64; 3];
    for &t in all_cases {
        totals[tier_index(t)] += 1;
    }
    let counts = TierCounts::from_records(records);
    let row = |tier: Option<Classification>, total: u64, with: u64, agree: u64| AgreementRow {
        tier,
        total_cases: total,
        with_feedback: with,
        feedback_rate: ratio(with, total),
        agreements: agree,
        agreement_fraction: ratio(agree, with),
    };
    let mut rows: Vec<AgreementRow> = TIERS
        .into_iter()
        .map(|t| {
            let agree = if collapse(t, policy) {
                counts.yes(t)
            } else {
                counts.no(t)
            };
            row(Some(t), totals[tier_index(t)], counts.in_tier(t), agree)
        })
        .collect();
    let overall = row(
        None,
        totals.iter().sum(),
        rows.iter().map(|r| r.with_feedback).sum(),
        rows.iter().map(|r| r.agreements).sum(),
    );
    rows.push(overall);
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub window: String,
    pub evaluable_cases: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
    pub confusion: ConfusionCounts,
    pub sensitivity: Estimate,
    pub specificity: Estimate,
    pub ppv: Estimate,
    pub npv: Estimate,
    pub accuracy: Estimate,
    pub balanced_accuracy: Estimate,
    pub tier_ppv: BTreeMap<Classification, Estimate>,
    pub tier_notes: Vec<String>,
    pub agreement_table: Vec<AgreementRow>,
    pub feedback_categories: BTreeMap<FeedbackCategory, usize>,
    pub bootstrap: BootstrapSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    pub replicates: usize,
    pub seed: u64,
    pub maybe_positive: bool,
    pub percentile_method: String,
    pub undefined_replicates: String,
}

impl MetricsReport {
    /// Never fails: with no evaluable cases every metric is undefined and
    /// `notice` says so.
    pub fn build(
        window: impl Into<String>,
        all_cases: &[Classification],
        records: &[LabeledRecord],
        feedback_categories: BTreeMap<FeedbackCategory, usize>,
        cfg: &BootstrapConfig,
    ) -> Self {
        let counts = TierCounts::from_records(records);
        let confusion = counts.confusion(cfg.policy);
        let positive_tiers: Vec<Classification> = TIERS
            .into_iter()
            .filter(|&t| collapse(t, cfg.policy))
            .collect();
        let mut metrics: Vec<Metric> = Metric::BINARY.to_vec();
        metrics.extend(positive_tiers.iter().map(|&t| Metric::TierPpv(t)));
        let cis = bootstrap_all(records, &metrics, cfg).ok();
        let estimate = |i: usize| {
            Estimate::new(
                metrics[i].evaluate(&counts, cfg.policy),
                cis.as_ref().map(|v| &v[i]),
            )
        };

        let mut tier_ppv = BTreeMap::new();
        let mut tier_notes = Vec::new();
        for (k, &t) in positive_tiers.iter().enumerate() {
            let e = estimate(Metric::BINARY.len() + k);
            if e.point.is_some() {
                tier_ppv.insert(t, e);
            } else {
                tier_notes.push(format!("{t} tier has no adjudicated cases; PPV omitted"));
            }
        }

        Self {
            window: window.into(),
            evaluable_cases: counts.total(),
            notice: records
                .is_empty()
                .then(|| MetricsError::NoEvaluableCases.to_string()),
            confusion,
            sensitivity: estimate(0),
            specificity: estimate(1),
            ppv: estimate(2),
            npv: estimate(3),
            accuracy: estimate(4),
            balanced_accuracy: estimate(5),
            tier_ppv,
            tier_notes,
            agreement_table: agreement_table(all_cases, records, cfg.policy),
            feedback_categories,
            bootstrap: BootstrapSettings {
                replicates: cfg.replicates,
                seed: cfg.seed,
                maybe_positive: cfg.policy.maybe_positive,
                percentile_method:
                    "linear interpolation between order statistics (type 7), 2.5th and 97.5th"
                        .into(),
                undefined_replicates: "dropped before percentiles; count reported per metric"
                    .into(),
            },
        }
    }

    pub fn estimate(&self, metric: Metric) -> Option<&Estimate> {
        match metric {
            Metric::Sensitivity => Some(&self.sensitivity),
            Metric::Specificity => Some(&self.specificity),
            Metric::Ppv => Some(&self.ppv),
            Metric::Npv => Some(&self.npv),
            Metric::Accuracy => Some(&self.accuracy),
            Metric::BalancedAccuracy => Some(&self.balanced_accuracy),
            Metric::TierPpv(t) => self.tier_ppv.get(&t),
        }
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let c = &self.confusion;
        let _ = writeln!(
            out,
            "window: {}  evaluable cases: {}  (tp={} fp={} fn={} tn={})",
            self.window, self.evaluable_cases, c.tp, c.fp, c.fn_, c.tn
        );
        if let Some(notice) = &self.notice {
            let _ = writeln!(out, "notice: {notice}");
        }
        let _ = writeln!(out, "\n{:<20}estimate (95% CI)", "metric");
        for m in Metric::BINARY {
            let e = self.estimate(m).expect("binary metrics always present");
            let _ = writeln!(out, "{:<20}{}", m.name(), e.display());
        }
        let _ = writeln!(out, "\n{:<20}estimate (95% CI)", "tier PPV");
        for (t, e) in self.tier_ppv.iter().rev() {
            let _ = writeln!(out, "{:<20}{}", t.as_str(), e.display());
        }
        for note in &self.tier_notes {
            let _ = writeln!(out, "  note: {note}");
        }
        let _ = writeln!(
            out,
            "\n{:<14}{:>8}{:>10}{:>8}{:>11}{:>8}",
            "tier", "cases", "feedback", "rate", "agreement", "frac"
        );
        for r in &self.agreement_table {
            let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.0}%", v * 100.0));
            let _ = writeln!(
                out,
                "{:<14}{:>8}{:>10}{:>8}{:>11}{:>8}",
                r.tier.map_or("all", |t| t.as_str()),
                r.total_cases,
                r.with_feedback,
                pct(r.feedback_rate),
                r.agreements,
                pct(r.agreement_fraction)
            );
        }
        let _ = writeln!(out, "\nNo-decision reason categories");
        for (cat, n) in &self.feedback_categories {
            let _ = writeln!(out, "{:<30}{:>6}", cat.as_str(), n);
        }
        let _ = writeln!(
            out,
            "\nbootstrap: {} replicates, seed {}, {}; undefined replicates {}",
            self.bootstrap.replicates,
            self.bootstrap.seed,
            self.bootstrap.percentile_method,
            self.bootstrap.undefined_replicates
        );
        out
    }
}
