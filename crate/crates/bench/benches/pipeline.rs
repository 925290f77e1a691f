use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clockflow_core::association::binomial_cdf;
use clockflow_core::segment::{dp_partition, HourDistribution};

fn random_distributions(n: usize, seed: u64) -> Vec<HourDistribution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut w = [0.0f64; 24];
            for x in &mut w {
                *x = rng.gen::<f64>();
            }
            HourDistribution::normalized(w)
        })
        .collect()
}

fn bench_dp(c: &mut Criterion) {
    let mut group = c.benchmark_group("dp_partition");
    for &n in &[64usize, 256, 1024] {
        let dists = random_distributions(n, 7);
        let refs: Vec<&HourDistribution> = dists.iter().collect();
        let k = (n / 8).max(1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| dp_partition(&refs, k).unwrap())
        });
    }
    group.finish();
}

fn bench_binomial_cdf(c: &mut Criterion) {
    c.bench_function("binomial_cdf_n1000", |b| {
        b.iter(|| binomial_cdf(std::hint::black_box(120), 1000, 0.1))
    });
}

criterion_group!(benches, bench_dp, bench_binomial_cdf);
criterion_main!(benches);
