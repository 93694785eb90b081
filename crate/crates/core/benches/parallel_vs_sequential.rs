//! Hot paths timed under the active execution mode.
//!
//! Run once with the default features and once with `--no-default-features`;
//! benchmark ids carry the mode (`rayon` or `sequential`) so both runs land
//! side by side in the criterion report.

use std::f64::consts::TAU;
use std::hint::black_box;

use criterion::{Criterion, criterion_group, criterion_main};
use num_complex::Complex64 as C64;
use transducer_core::finite::{
    EmitterArray, FiniteOptions, GridSpec, Plane, Range1, SolverKind, solve_sites,
};
use transducer_core::lattice::Incidence;
use transducer_core::par::MODE;
use transducer_core::selfenergy::{SumControls, bloch_sum, counter_rotating_sum};
use transducer_core::smatrix::{ScatterScenario, SweepParameter, efficiency_sweep};

fn fig6a() -> ScatterScenario {
    ScatterScenario {
        omega: 0.2,
        delta_omega: 2.8,
        ..ScatterScenario::default()
    }
}

fn lattice_sums(c: &mut Criterion) {
    let mut g = c.benchmark_group("lattice_sum");
    g.sample_size(10);
    let ctl = SumControls::default();
    let q = [0.13 * TAU, 0.05 * TAU];
    g.bench_function(format!("spectral/{MODE}"), |b| {
        b.iter(|| bloch_sum(black_box(q), C64::new(0.45 * TAU, 0.0), 1.0, 1e-9, &ctl).unwrap())
    });
    g.bench_function(format!("counter_rotating/{MODE}"), |b| {
        b.iter(|| counter_rotating_sum(black_box(q), 3.0 * TAU, 1.0, &ctl).unwrap())
    });
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let mut g = c.benchmark_group("efficiency_sweep");
    g.sample_size(10);
    let base = ScatterScenario {
        delta_omega: 3.0,
        incidence: Incidence::from_degrees(30.0, 0.0),
        ..ScatterScenario::default()
    };
    let grid: Vec<f64> = (0..64).map(|i| 0.05 + 0.9 * i as f64 / 63.0).collect();
    g.bench_function(format!("omega_64_optimized/{MODE}"), |b| {
        b.iter(|| {
            efficiency_sweep(&base, SweepParameter::Omega, black_box(&grid), true, &[]).unwrap()
        })
    });
    g.finish();
}

fn finite(c: &mut Criterion) {
    let mut g = c.benchmark_group("finite");
    g.sample_size(10);
    let scn = fig6a();
    for (n, solver) in [(10, SolverKind::Dense), (20, SolverKind::Iterative)] {
        let arr = EmitterArray::square(n).unwrap();
        let opts = FiniteOptions {
            solver,
            ..FiniteOptions::default()
        };
        g.bench_function(format!("solve_{n}x{n}_{solver:?}/{MODE}"), |b| {
            b.iter(|| solve_sites(&scn, black_box(&arr), &opts).unwrap())
        });
    }
    let sol = solve_sites(
        &scn,
        &EmitterArray::square(10).unwrap(),
        &FiniteOptions::default(),
    )
    .unwrap();
    let grid = GridSpec::new(
        Plane::Xy,
        0.0,
        Range1::new(-20.25, 20.25, 64).unwrap(),
        Range1::new(-20.25, 20.25, 64).unwrap(),
    )
    .unwrap();
    g.bench_function(format!("field_map_64x64/{MODE}"), |b| {
        b.iter(|| sol.evaluate(black_box(&grid)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, lattice_sums, sweep, finite);
criterion_main!(benches);
