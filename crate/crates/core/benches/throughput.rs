//! Sequential vs rayon execution for the two data-parallel paths.
//!
//! Without the `parallel` feature both variants run the same sequential
//! code, which makes the fallback's overhead visible too.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use triage_core::exec::Execution;
use triage_core::fixture::paper_fixture;
use triage_core::generator::generate_cases;
use triage_core::metrics::{bootstrap_all, BootstrapConfig};
use triage_core::pipeline::PromptTemplates;
use triage_core::{GeneratorConfig, LabeledRecord, Metric, Pipeline, PipelineConfig, StubBackend};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn fixture_records() -> Vec<LabeledRecord> {
    let fx = paper_fixture();
    let tiers: std::collections::HashMap<_, _> = fx
        .cases
        .iter()
        .map(|c| (c.case.case_id.clone(), c.result.classification))
        .collect();
    fx.feedback
        .iter()
        .map(|f| LabeledRecord::new(f.case_id.clone(), tiers[&f.case_id], f.decision))
        .collect()
}

fn bootstrap(c: &mut Criterion) {
    let records = fixture_records();
    let mut group = c.benchmark_group("bootstrap");
    group.sample_size(10);
    for replicates in [1_000usize, 10_000] {
        group.throughput(Throughput::Elements(replicates as u64));
        for (name, exec) in MODES {
            let cfg = BootstrapConfig {
                replicates,
                exec,
                ..Default::default()
            };
            group.bench_with_input(BenchmarkId::new(name, replicates), &cfg, |b, cfg| {
                b.iter(|| bootstrap_all(black_box(&records), &Metric::BINARY, cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn triage_batch(c: &mut Criterion) {
    let pipeline = Pipeline::with_config(
        StubBackend::new(),
        PromptTemplates::builtin(),
        PipelineConfig {
            backoff: Duration::ZERO,
            ..Default::default()
        },
    );
    let mut group = c.benchmark_group("triage_batch");
    group.sample_size(10);
    for n in [250usize, 1_000] {
        let records: Vec<_> = generate_cases(&GeneratorConfig::new(n, 9))
            .unwrap()
            .into_iter()
            .map(|g| g.record)
            .collect();
        group.throughput(Throughput::Elements(n as u64));
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &records, |b, records| {
                b.iter(|| pipeline.triage_batch(black_box(records), exec))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bootstrap, triage_batch);
criterion_main!(benches);
