//! Matrix-Tree marginal computation across document sizes.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strsum_core::numkit::Mat;
use strsum_core::structattn::{enumerate_arborescences, tree_marginals};

fn random_f(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let mut f = Mat::zeros((n + 1, n + 1));
    for j in 1..=n {
        f[[0, j]] = rng.gen_range(0.1..2.0);
        for i in 1..=n {
            if i != j {
                f[[i, j]] = rng.gen_range(0.1..2.0);
            }
        }
    }
    f
}

fn bench_marginals(c: &mut Criterion) {
    let mut group = c.benchmark_group("tree_marginals");
    for n in [5usize, 10, 20, 40] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let f = random_f(&mut rng, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| tree_marginals(black_box(f)).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("enumeration_oracle");
    for n in [4usize, 6, 8] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let f = random_f(&mut rng, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| enumerate_arborescences(black_box(f)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_marginals);
criterion_main!(benches);
