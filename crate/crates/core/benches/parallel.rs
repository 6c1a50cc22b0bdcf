//! Rayon pool against a single-thread pool on the same kernels. On a
//! one-core machine the two should match; the gap is the fan-out overhead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;
use sphere_lab::budget::Budget;
use sphere_lab::density::gcd_sum;
use sphere_lab::energy::additive_energy;
use sphere_lab::lattice::enumerate_shell;

fn pools(c: &mut Criterion) {
    let budget = Budget::default();
    let shell = enumerate_shell(4, 101, &budget).unwrap();
    let single = ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let wide = ThreadPoolBuilder::new().build().unwrap();

    let mut group = c.benchmark_group("energy_4d_101");
    group.sample_size(10);
    for (name, pool) in [("sequential", &single), ("rayon", &wide)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &shell, |b, s| {
            b.iter(|| pool.install(|| additive_energy(s.points(), &budget).unwrap().energy))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("gcd_sum_1000");
    group.sample_size(10);
    for (name, pool) in [("sequential", &single), ("rayon", &wide)] {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| gcd_sum(1000, &budget).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, pools);
criterion_main!(benches);
