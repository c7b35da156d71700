use std::sync::Arc;

use bandlab::chains::eigendecompose;
use bandlab::ensemble::{sample_matrix, trial_seed, EntryDistribution, ProfileSpec, SymmetryClass};
use bandlab::exec::{map_indexed, Execution};
use bandlab::harness::{run_spacing, ExperimentConfig};
use bandlab::{c64, Result};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn batch_traces(c: &mut Criterion) {
    let p = Arc::new(ProfileSpec::polynomial(128, 16, 4.0).build().unwrap());
    let z = c64::new(0.1, 0.05);
    let mut group = c.benchmark_group("resolvent_batch");
    group.sample_size(10);
    for mode in [Execution::Auto, Execution::Sequential] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, mode| {
            b.iter(|| {
                map_indexed(16, *mode, |i| -> Result<c64> {
                    let s = sample_matrix(&p, SymmetryClass::ComplexHermitian, EntryDistribution::Gaussian, trial_seed(1, i as u64));
                    let g = eigendecompose(&s)?.resolvent_diag(z)?;
                    Ok(g.iter().sum())
                })
            })
        });
    }
    group.finish();
}

fn spacing_experiment(c: &mut Criterion) {
    let mut cfg = ExperimentConfig::new(ProfileSpec::polynomial(128, 16, 4.0));
    cfg.samples = 20;
    cfg.margins.min_gaps = 1000;
    let mut group = c.benchmark_group("spacing");
    group.sample_size(10);
    for mode in [Execution::Auto, Execution::Sequential] {
        cfg.execution = mode;
        let cfg = cfg.clone();
        group.bench_function(format!("{mode:?}"), |b| b.iter(|| run_spacing(&cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, batch_traces, spacing_experiment);
criterion_main!(benches);
