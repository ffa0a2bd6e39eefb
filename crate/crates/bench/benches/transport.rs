use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;
use trj_core::linalg::Matrix;
use trj_core::transport::{RQSpline, SplineFlow, TransportMap};

fn random_flow(n: usize) -> SplineFlow {
    let mut flow = SplineFlow::new(n, 10, 3, 32 * n, vec![0.0; n], vec![1.0; n], 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in flow.params.iter_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    flow
}

fn bench_sas(c: &mut Criterion) {
    let chol = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.99, (1.0_f64 - 0.99 * 0.99).sqrt()]]);
    let map = TransportMap::exact_sas(vec![1.5, -2.0], vec![1.0, 1.5], chol).unwrap();
    c.bench_function("sas_forward_n2", |b| {
        b.iter(|| map.forward(black_box(&[0.4, -1.1])).unwrap())
    });
}

fn bench_spline(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let raw: Vec<f64> = (0..31).map(|_| rng.random_range(-2.0..2.0)).collect();
    let spline = RQSpline::from_unconstrained(&raw, 10);
    c.bench_function("rq_spline_forward", |b| {
        b.iter(|| spline.forward(black_box(0.37)).unwrap())
    });
    c.bench_function("rq_spline_inverse", |b| {
        b.iter(|| spline.inverse(black_box(0.37)).unwrap())
    });
}

fn bench_flow(c: &mut Criterion) {
    let flow = random_flow(2);
    c.bench_function("flow_forward_n2", |b| {
        b.iter(|| flow.forward(black_box(&[0.4, -1.1])).unwrap())
    });
    c.bench_function("flow_inverse_n2", |b| {
        b.iter(|| flow.inverse(black_box(&[0.4, -1.1])).unwrap())
    });
    c.bench_function("flow_log_density_n2", |b| {
        b.iter(|| flow.log_density(black_box(&[0.4, -1.1])))
    });
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rows: Vec<Vec<f64>> =
        (0..256).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
    let batch = Matrix::from_rows(&rows);
    c.bench_function("flow_loss_and_grad_batch256", |b| {
        b.iter_batched(
            || flow.params.clone(),
            |params| trj_core::training::loss_and_grad(&flow, &params, &batch).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_sas, bench_spline, bench_flow);
criterion_main!(benches);
