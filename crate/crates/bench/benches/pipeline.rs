use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use demon_core::noisefit::{self, linspace, FitBounds};
use demon_core::protocol::{self, prepare_resource};
use demon_core::qlin::eig_hermitian;
use demon_core::tomography::{self, bootstrap};
use demon_core::{NoiseParams, ProtocolConfig};

fn linear_algebra(c: &mut Criterion) {
    let rho = prepare_resource(&ProtocolConfig::ideal(0.4).with_noise(NoiseParams::reported())).unwrap();
    c.bench_function("eig_hermitian_4x4", |b| b.iter(|| eig_hermitian(black_box(rho.mat())).unwrap()));
    c.bench_function("concurrence", |b| b.iter(|| tomography::concurrence(black_box(rho.mat())).unwrap()));
}

fn protocol(c: &mut Criterion) {
    let cfg = ProtocolConfig::ideal(0.4).with_noise(NoiseParams::reported());
    c.bench_function("prepare_resource", |b| b.iter(|| prepare_resource(black_box(&cfg)).unwrap()));
    c.bench_function("outcome_table_exact", |b| b.iter(|| protocol::outcome_table_exact(black_box(&cfg)).unwrap()));
    let sampled = cfg.with_shots(ProtocolConfig::DEFAULT_SHOTS, 7);
    c.bench_function("run_shots_3500", |b| b.iter(|| protocol::run_shots(black_box(&sampled)).unwrap()));
}

fn tomography_bench(c: &mut Criterion) {
    let rho = prepare_resource(&ProtocolConfig::ideal(0.0)).unwrap();
    let mut g = c.benchmark_group("tomography");
    g.sample_size(10);
    g.bench_function("bootstrap_100x100", |b| b.iter(|| bootstrap(black_box(rho.mat()), 100, 100, 1).unwrap()));
    g.finish();
}

fn fitting(c: &mut Criterion) {
    let thetas = linspace(0.0, std::f64::consts::FRAC_PI_2, 17);
    let truth = NoiseParams::reported();
    c.bench_function("model_curves_17", |b| b.iter(|| noisefit::model_curves(black_box(&truth), &thetas).unwrap()));
    let data = noisefit::model_curves(&truth, &thetas).unwrap();
    let mut g = c.benchmark_group("noisefit");
    g.sample_size(10);
    g.bench_function("fit_17_points", |b| {
        b.iter(|| noisefit::fit(black_box(&data), &NoiseParams::zeros(), &FitBounds::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, linear_algebra, protocol, tomography_bench, fitting);
criterion_main!(benches);
