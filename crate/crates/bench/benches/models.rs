use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ramanmem::dephasing::{efficiency_curve, Precession};
use ramanmem::fit::{fit_fluorescence_tail, DataSet};
use ramanmem::mbsolver::kernel_quadratures;
use ramanmem::{FitOptions, MagneticField, PolarizationConfig, PumpState, SpinSystem};
use ramanmem_bench::reference_setup;

fn quadratures(c: &mut Criterion) {
    let (params, pulse, grid) = reference_setup(40, 200);
    let pump = PumpState::from_p3(0.05).unwrap();
    let mut g = c.benchmark_group("solver");
    g.sample_size(10);
    g.bench_function("kernel_quadratures_40x200", |b| {
        b.iter(|| kernel_quadratures(&params, &pulse, black_box(&pump), &grid).unwrap())
    });
    g.finish();
}

fn dephasing(c: &mut Criterion) {
    let system = SpinSystem::new(PolarizationConfig::default()).unwrap();
    let pops = system.uniform_populations();
    let field = MagneticField::from_degrees(0.13, 30.0, 25.0).unwrap();
    let pr = Precession::new(&system, &field);
    c.bench_function("eta_single_time", |b| b.iter(|| pr.eta(black_box(1000.0), &pops)));
    let t: Vec<f64> = (0..401).map(|k| 10.0 * k as f64).collect();
    c.bench_function("efficiency_curve_401", |b| {
        b.iter(|| efficiency_curve(black_box(&t), &field, &system, &pops, 0.3).unwrap())
    });
}

fn fitting(c: &mut Criterion) {
    let t: Vec<f64> = (0..200).map(|k| 0.5 * k as f64).collect();
    let y: Vec<f64> = t.iter().map(|x| 800.0 * (-x / 30.5).exp()).collect();
    let data = DataSet::new(t, y).unwrap();
    c.bench_function("fluorescence_fit_200", |b| {
        b.iter(|| fit_fluorescence_tail(black_box(&data), (0.0, 99.5), None, &FitOptions::default()).unwrap())
    });
}

criterion_group!(benches, quadratures, dephasing, fitting);
criterion_main!(benches);
