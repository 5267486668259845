//! Hot-path benchmarks: spectral kernel evaluation, the principal-value
//! light-shift quadrature, Liouvillian exponentiation, and the Bell-bound
//! arithmetic.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use rydctl_core::dynamics::{
    bell_bound, build_single_atom, build_two_atom, evolve, DensityMatrix, PulseConfig, DIM1, G,
};
use rydctl_core::spectrum::{
    complex_light_shift, ionization_kernel, omega_from_delta_ghz, photoionization_rate,
    FieldConfig, SpectrumModel, D_CORE,
};
use rydctl_core::ChannelModel;

fn bench_ionization_kernel(c: &mut Criterion) {
    let channel = ChannelModel::reference();
    let model = SpectrumModel::build(&channel).unwrap();
    let e_cm = model.thresholds().e_75_cm + omega_from_delta_ghz(-5.0, &channel);
    c.bench_function("ionization_kernel", |b| {
        b.iter(|| ionization_kernel(black_box(e_cm), &model).unwrap())
    });
}

fn bench_rate_point(c: &mut Criterion) {
    let channel = ChannelModel::reference();
    let model = SpectrumModel::build(&channel).unwrap();
    let field = FieldConfig::Intensity { i_c_w_cm2: 600.0, dipole: D_CORE };
    let omega = omega_from_delta_ghz(-5.0, &channel);
    c.bench_function("photoionization_rate", |b| {
        b.iter(|| photoionization_rate(black_box(omega), &model, &field).unwrap())
    });
}

fn bench_light_shift(c: &mut Criterion) {
    let channel = ChannelModel::reference();
    let model = SpectrumModel::build(&channel).unwrap();
    let field = FieldConfig::Intensity { i_c_w_cm2: 600.0, dipole: D_CORE };
    let omega = omega_from_delta_ghz(-5.0, &channel);
    c.bench_function("complex_light_shift", |b| {
        b.iter(|| complex_light_shift(black_box(omega), &model, &field).unwrap())
    });
}

fn bench_single_atom_evolve(c: &mut Criterion) {
    let mut cfg = PulseConfig::reference();
    cfg.gamma_r = 1.0e5;
    let sys = build_single_atom(&cfg).unwrap();
    let rho0 = DensityMatrix::pure(DIM1, G);
    let t_pi = std::f64::consts::PI / cfg.omega_r;
    c.bench_function("single_atom_pi_pulse", |b| {
        b.iter(|| evolve(&sys, &rho0, black_box(&[t_pi])).unwrap())
    });
}

fn bench_two_atom_evolve(c: &mut Criterion) {
    let mut cfg = PulseConfig::reference();
    cfg.gamma_r = 1.0e5;
    let sys = build_two_atom(&cfg).unwrap();
    let rho0 = DensityMatrix::pure(DIM1 * DIM1, G * DIM1 + G);
    let t_g = std::f64::consts::PI / (2.0f64.sqrt() * cfg.omega_r);
    let mut group = c.benchmark_group("two_atom");
    group.sample_size(10);
    group.bench_function("gate_pulse_propagator", |b| {
        b.iter(|| evolve(&sys, &rho0, black_box(&[t_g])).unwrap())
    });
    group.finish();
}

fn bench_bell_bound(c: &mut Criterion) {
    let pops_tg = [0.014, 0.487, 0.494, 0.005];
    let pops_2tg = [0.968, 0.013, 0.013, 0.006];
    c.bench_function("bell_bound", |b| {
        b.iter(|| bell_bound(black_box(&pops_tg), black_box(&pops_2tg)))
    });
}

criterion_group!(
    benches,
    bench_ionization_kernel,
    bench_rate_point,
    bench_light_shift,
    bench_single_atom_evolve,
    bench_two_atom_evolve,
    bench_bell_bound
);
criterion_main!(benches);
