use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use std::hint::black_box;

use rerand::balance::BalanceContext;
use rerand::criteria::{calibrate_threshold_asymptotic, BalanceCriterion};
use rerand::harness::model::gaussian_matrix;
use rerand::sampler::{draw_assignment, rerandomize, RngSpec};
use rerand::theory;

fn balance_distance(c: &mut Criterion) {
    let mut group = c.benchmark_group("mahalanobis");
    for &(n, k) in &[(50usize, 2usize), (100, 5), (500, 10)] {
        let x = gaussian_matrix(n, k, &mut RngSpec::new(42).rng());
        let ctx = BalanceContext::new(&x, n / 2).unwrap();
        let w = draw_assignment(n, n / 2, &mut RngSpec::new(43).rng()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("n{n}_k{k}")), &(), |b, ()| {
            b.iter(|| ctx.mahalanobis(black_box(&w)).unwrap())
        });
    }
    group.finish();
}

fn assignment_sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("sampling");
    let n = 100;
    let x = gaussian_matrix(n, 5, &mut RngSpec::new(42).rng());
    let ctx = BalanceContext::new(&x, n / 2).unwrap();

    group.bench_function("draw_assignment_n100", |b| {
        let mut rng = RngSpec::new(7).rng();
        b.iter(|| draw_assignment(black_box(n), n / 2, &mut rng).unwrap())
    });

    for &p_a in &[0.5, 0.1, 0.01] {
        let threshold = calibrate_threshold_asymptotic(ctx.rank(), p_a)
            .unwrap()
            .threshold;
        let criterion = BalanceCriterion::mahalanobis_threshold(threshold).unwrap();
        let mut stream = 0u64;
        group.bench_with_input(
            BenchmarkId::new("rerandomize_n100_k5", format!("pa{p_a}")),
            &criterion,
            |b, criterion| {
                b.iter_batched(
                    || {
                        stream += 1;
                        RngSpec::with_stream(7, stream)
                    },
                    |rng| rerandomize(&ctx, black_box(criterion), rng, 10_000_000).unwrap(),
                    BatchSize::SmallInput,
                )
            },
        );
    }
    group.finish();
}

fn theory_quantities(c: &mut Criterion) {
    let mut group = c.benchmark_group("theory");
    group.bench_function("chi2_quantile_k5", |b| {
        b.iter(|| theory::chi2_quantile(black_box(5), black_box(0.1)))
    });
    group.bench_function("v_a_k5", |b| {
        let a = theory::chi2_quantile(5, 0.1);
        b.iter(|| theory::v_a(black_box(5), black_box(a)))
    });
    group.bench_function("ln_gamma", |b| {
        b.iter(|| theory::ln_gamma(black_box(12.34)))
    });
    group.finish();
}

criterion_group!(benches, balance_distance, assignment_sampling, theory_quantities);
criterion_main!(benches);
