use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fnn_core::fourier::{abs_tail_error, lattice_points_in_ball, BallSpectrum};
use fnn_core::models::{Architecture, Parameterized, RegressionNet};
use fnn_core::scrn::{window_loss, ScrnParams};
use fnn_core::Rng;

fn forward_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("regression_forward_backward");
    let mut rng = Rng::new(1);
    let x: Vec<f64> = (0..10).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    for arch in Architecture::ALL {
        let net = RegressionNet::new(arch, 10, 100, &mut rng);
        group.bench_with_input(BenchmarkId::new("forward", arch), &net, |b, net| {
            b.iter(|| net.forward(black_box(&x)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("backward", arch), &net, |b, net| {
            b.iter(|| net.backward(black_box(&x), 1.0).unwrap())
        });
    }
    group.finish();
}

fn fourier(c: &mut Criterion) {
    c.bench_function("abs_tail_error_1000", |b| {
        b.iter(|| abs_tail_error(black_box(1000)))
    });
    let mut group = c.benchmark_group("lattice");
    for (d, r) in [(2, 32.0), (3, 12.0)] {
        group.bench_with_input(BenchmarkId::new("enumerate", d), &r, |b, &r| {
            b.iter(|| lattice_points_in_ball(black_box(r), d).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("spectrum", d), &r, |b, &r| {
            b.iter(|| BallSpectrum::new(d, black_box(r)).unwrap())
        });
    }
    group.finish();
}

fn scrn(c: &mut Criterion) {
    let mut group = c.benchmark_group("scrn_window");
    let mut rng = Rng::new(2);
    let ids: Vec<usize> = (0..11).map(|_| rng.below(40) as usize).collect();
    for arch in Architecture::ALL {
        let p = ScrnParams::init(arch, 40, 10, 40, 0.95, 0.1, &mut rng).unwrap();
        let start = p.initial_state();
        group.bench_with_input(BenchmarkId::from_parameter(arch), &p, |b, p| {
            let mut g = p.zero_gradients();
            b.iter(|| window_loss(p, &ids[..10], &ids[1..], &start, Some(&mut g)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward_backward, fourier, scrn);
criterion_main!(benches);
