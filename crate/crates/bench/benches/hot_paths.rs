//! Per-step costs of the inner loops: integrator, entropy estimator, coupled
//! step, transport distance, constants ladder, and discriminator evaluation.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use ulmf_core::coupling::{coupled_step, CoupleGeometry, CoupledPair};
use ulmf_core::diagnostics::entropy_knn;
use ulmf_core::ensemble::{init_ensemble, wasserstein1_1d, InitSpec};
use ulmf_core::gan::DiscriminatorProfile;
use ulmf_core::integrator::{bbk_step, DynamicsParams};
use ulmf_core::potentials::Potential;
use ulmf_core::rates::{assemble_constants, RateInputs};

fn bench_bbk_step(c: &mut Criterion) {
    let potential = Potential::mean_attraction(1.0, 0.4).unwrap();
    let params = DynamicsParams::new(1.0, 1.0, 0.01, 0).unwrap();
    let init = InitSpec::gaussian(0.0, 1.0, 0.0, 1.0, 1);
    let base = init_ensemble(&init, 1000, 2).unwrap();
    c.bench_function("bbk_step_1000x2", |b| {
        let mut e = base.clone();
        let mut step = 0u64;
        b.iter(|| {
            bbk_step(&mut e, &potential, &params, 7, step).unwrap();
            step += 1;
        });
    });
}

fn bench_entropy_knn(c: &mut Criterion) {
    let init = InitSpec::gaussian(0.0, 1.0, 0.0, 1.0, 2);
    let e = init_ensemble(&init, 1000, 2).unwrap();
    c.bench_function("entropy_knn_1000x2_k4", |b| {
        b.iter(|| entropy_knn(black_box(e.positions.view()), 4).unwrap());
    });
}

fn bench_coupled_step(c: &mut Criterion) {
    let potential = Potential::quadratic(2.0).unwrap();
    let params = DynamicsParams::new(3.0, 1.0, 1e-3, 0).unwrap();
    let geom = CoupleGeometry {
        eta: 1e-4,
        m_radius: 1.0,
        xi: 1e-3,
    };
    let a = init_ensemble(&InitSpec::gaussian(1.0, 1.0, 0.0, 1.0, 3), 500, 2).unwrap();
    let b_leg = init_ensemble(&InitSpec::gaussian(-1.0, 1.0, 0.0, 1.0, 4), 500, 2).unwrap();
    c.bench_function("coupled_step_500x2", |bch| {
        let mut pair = CoupledPair::new(a.clone(), b_leg.clone()).unwrap();
        let mut step = 0u64;
        bch.iter(|| {
            coupled_step(&mut pair, &potential, &params, &geom, 9, step).unwrap();
            step += 1;
        });
    });
}

fn bench_wasserstein(c: &mut Criterion) {
    let a = init_ensemble(&InitSpec::gaussian(0.0, 1.0, 0.0, 1.0, 5), 4096, 1).unwrap();
    let b_s = init_ensemble(&InitSpec::gaussian(0.5, 2.0, 0.0, 1.0, 6), 4096, 1).unwrap();
    let xs: Vec<f64> = a.positions.iter().copied().collect();
    let ys: Vec<f64> = b_s.positions.iter().copied().collect();
    c.bench_function("wasserstein1_1d_4096", |b| {
        b.iter(|| wasserstein1_1d(black_box(&xs), black_box(&ys)).unwrap());
    });
}

fn bench_assemble_constants(c: &mut Criterion) {
    let inputs = RateInputs {
        gamma: 3.0,
        lambda: 2.0,
        sigma: 1.0,
        lip_x: 0.0,
        iota: 0.0,
        m_radius: 1.0,
        safety: 0.9,
    };
    c.bench_function("assemble_constants_reference", |b| {
        b.iter(|| assemble_constants(black_box(&inputs)).unwrap());
    });
}

fn bench_discriminator_profile(c: &mut Criterion) {
    let e = init_ensemble(&InitSpec::gaussian(0.0, 1.0, 0.0, 1.0, 8), 2000, 3).unwrap();
    c.bench_function("discriminator_profile_build_2000", |b| {
        b.iter(|| DiscriminatorProfile::build(black_box(e.positions.view()), 10.0));
    });
    let profile = DiscriminatorProfile::build(e.positions.view(), 10.0);
    c.bench_function("discriminator_profile_eval_1000", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for k in 0..1000 {
                acc += profile.phi(-5.0 + 0.01 * k as f64);
            }
            black_box(acc)
        });
    });
}

criterion_group!(
    benches,
    bench_bbk_step,
    bench_entropy_knn,
    bench_coupled_step,
    bench_wasserstein,
    bench_assemble_constants,
    bench_discriminator_profile
);
criterion_main!(benches);
