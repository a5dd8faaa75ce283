//! Micro-benchmarks for the hot kernels: the Riccati solve, a discounted
//! rollout, and one two-point gradient estimate.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use fedlqr::analytic::{exact_gradient, solve_optimal};
use fedlqr::harness::paper3x3_problem;
use fedlqr::lqr::{default_horizon, rollout_cost};
use fedlqr::rng::substream;
use fedlqr::zeroth_order::two_point_estimate;
use fedlqr::{Policy, Vector};

fn bench_kernels(c: &mut Criterion) {
    let prob = paper3x3_problem(1, 0.1, 0);
    let (opt, _) = solve_optimal(&prob, 0).unwrap();
    let policy = Policy::new(opt.k.scale(0.9), Vector::zeros(3));
    let x0 = Vector::new(vec![1.0, -0.5, 0.25]);
    let horizon = default_horizon(prob.gamma);

    c.bench_function("riccati_solve_3x3", |b| {
        b.iter(|| solve_optimal(black_box(&prob), 0).unwrap())
    });

    c.bench_function("rollout_cost_3x3", |b| {
        b.iter(|| rollout_cost(black_box(&prob), 0, &policy, &x0, horizon).unwrap())
    });

    c.bench_function("exact_gradient_3x3", |b| {
        b.iter(|| exact_gradient(black_box(&prob), 0, &policy).unwrap())
    });

    c.bench_function("two_point_estimate_3x3", |b| {
        let mut rng = substream(0, &[0]);
        b.iter(|| {
            two_point_estimate(
                black_box(&policy),
                0.05,
                &x0,
                |p, x| fedlqr::analytic::sample_cost(&prob, 0, p, x),
                &mut rng,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, bench_kernels);
criterion_main!(benches);
