//! Sequential vs rayon-parallel throughput for the three batch workloads:
//! grounding evaluation, interactive suite runs and desktop-script scoring.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use duostep_core::backends::{NoisyLocator, OracleLocator, ScriptedInterpreter};
use duostep_core::exec::Execution;
use duostep_core::fixtures;
use duostep_core::metrics::{grounding_accuracy, load_grounding_records, score_omni_records};
use duostep_core::suite::{run_suite, SuiteOptions};

fn modes() -> [(&'static str, Execution); 2] {
    [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel { threads: 0 }),
    ]
}

fn grounding(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let path = fixtures::write_grounding_fixture(dir.path()).unwrap();
    let records = load_grounding_records(&path).unwrap();
    let locator = NoisyLocator::new(0.05, 1).unwrap();
    let mut g = c.benchmark_group("grounding");
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, exec| {
            b.iter(|| black_box(grounding_accuracy(&records, &locator, *exec)))
        });
    }
    g.finish();
}

fn suite_run(c: &mut Criterion) {
    let suite = fixtures::task_suite();
    let interp = ScriptedInterpreter::new(suite.gold_scripts());
    let mut g = c.benchmark_group("suite_run");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, exec| {
            b.iter(|| {
                black_box(run_suite(&suite, &interp, &OracleLocator, *exec, SuiteOptions::default(), |_, _, _| {}))
            })
        });
    }
    g.finish();
}

fn omni_scoring(c: &mut Criterion) {
    let records = fixtures::omni_records(20_000, 3);
    let mut g = c.benchmark_group("omni_scoring");
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, exec| {
            b.iter(|| black_box(score_omni_records(&records, *exec)))
        });
    }
    g.finish();
}

criterion_group!(benches, grounding, suite_run, omni_scoring);
criterion_main!(benches);
