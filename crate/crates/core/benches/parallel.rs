//! Rayon's default pool against a single-thread pool on the hot paths.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPool;

use prunecrit::criteria::fermat_score;
use prunecrit::cwda_tests::correlation_matrix;
use prunecrit::geometric_median::GmOptions;
use prunecrit::global_sim::{log_space, simulate_two_layer_grid, GridConfig};
use prunecrit::rng::stream_rng;
use prunecrit::synth::{l1_l2_ratio_variance, sample_cwda_layer, SynthLayerSpec};
use prunecrit::tensor_store::LayerRecord;

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let default = rayon::ThreadPoolBuilder::new().build().unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    vec![("default", default), ("single", single)]
}

fn layer(n_out: usize, n_in: usize) -> LayerRecord {
    let spec = SynthLayerSpec::new(n_out, n_in, 3, 0.02).with_epsilon(0.05);
    sample_cwda_layer("bench", &spec, 0.0, &mut stream_rng(1, 0)).unwrap()
}

fn bench(c: &mut Criterion) {
    let pools = pools();
    let gm_layer = layer(2048, 64);
    let corr_layer = layer(1024, 32);
    let grid = GridConfig {
        sigma_a_values: log_space(1e-3, 1e-1, 8),
        sigma_b_values: log_space(1e-3, 1e-1, 8),
        n_filters: 128,
        ..GridConfig::standard(576, 144, 1)
    };

    let mut g = c.benchmark_group("parallel");
    g.sample_size(10);
    for (name, pool) in &pools {
        g.bench_with_input(BenchmarkId::new("fermat_score", name), pool, |b, p| {
            b.iter(|| p.install(|| fermat_score(&gm_layer, GmOptions::default()).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("ratio_variance_trials", name), pool, |b, p| {
            b.iter(|| p.install(|| l1_l2_ratio_variance(1024, 8192, 1.0, 3).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("two_layer_grid", name), pool, |b, p| {
            b.iter(|| p.install(|| simulate_two_layer_grid(&grid).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("correlation_matrix", name), pool, |b, p| {
            b.iter(|| p.install(|| correlation_matrix(&corr_layer).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
