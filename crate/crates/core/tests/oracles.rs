//! Library results checked against the independent references in `common`.

mod common;

use std::f64::consts::PI;

use common::{
    decay_rate_checks, green, im_green_equals_im_rwa, im_rho_p_vs_quadrature, naive,
    oracle_scenarios, rel_diff,
};
use num_complex::Complex64 as C64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transducer_core::finite::{EmitterArray, FiniteOptions, SolverKind, solve_sites};
use transducer_core::greens::{dyadic_green, exp_integrals, exp_integrals_fast};

#[test]
fn sites_match_naive_dense_inversion() {
    for scn in oracle_scenarios() {
        for n in [2usize, 3] {
            let arr = EmitterArray::square(n).unwrap();
            for solver in [SolverKind::Dense, SolverKind::Iterative] {
                let opts = FiniteOptions {
                    solver,
                    ..FiniteOptions::default()
                };
                let sol = solve_sites(&scn, &arr, &opts).unwrap();
                let o = naive(&scn, arr.positions());
                for (name, lib, orc) in [
                    ("E_a", &sol.e_a, &o.e_a),
                    ("E_b", &sol.e_b, &o.e_b),
                    ("P_a", &sol.p_a, &o.p_a),
                    ("P_b", &sol.p_b, &o.p_b),
                ] {
                    let r = rel_diff(lib, orc);
                    assert!(r < 1e-10, "{n}x{n} {solver:?} {name}: {r:e}");
                }
                assert!(sol.residual < 1e-10 && sol.residual_full < 1e-10);
            }
        }
    }
}

#[test]
fn scattered_sites_match_naive_dense_inversion() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scn = &oracle_scenarios()[1];
    for _ in 0..3 {
        let pos: Vec<[f64; 3]> = (0..5)
            .map(|_| {
                [
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-0.5..0.5),
                ]
            })
            .collect();
        let arr = EmitterArray::from_positions(pos.clone()).unwrap();
        let sol = solve_sites(scn, &arr, &FiniteOptions::default()).unwrap();
        let o = naive(scn, &pos);
        assert!(rel_diff(&sol.e_a, &o.e_a) < 1e-10);
        assert!(rel_diff(&sol.e_b, &o.e_b) < 1e-10);
    }
}

#[test]
fn green_matches_reference_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let r = [
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        ];
        let k = rng.random_range(0.1..20.0);
        let lib = dyadic_green(r, C64::new(k, 0.0)).unwrap().to_mat();
        let g = green(r, k);
        let scale = g.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max);
        for m in 0..3 {
            for n in 0..3 {
                assert!((lib[(m, n)] - g[m][n]).norm() <= 1e-12 * scale);
            }
        }
    }
}

#[test]
fn im_green_equals_im_rotating_wave_kernel() {
    let w = im_green_equals_im_rwa(1000, 2);
    assert!(w < 1e-8, "{w:e}");
}

#[test]
fn im_rho_p_matches_quadrature() {
    let w = im_rho_p_vs_quadrature(20, 3);
    assert!(w < 1e-6, "{w:e}");
}

#[test]
fn decay_rate_matches_closed_form_and_green_limit() {
    let (a, b) = decay_rate_checks();
    assert!(a < 1e-12, "{a:e}");
    assert!(b < 1e-4, "{b:e}");
}

#[test]
fn exp_integrals_asymptotics() {
    // Large x: I_j(x) ~ Σ_n (−1)^n (j + 2n)! / x^{2n+2}.
    for x in [40.0, 80.0, 200.0] {
        let v = exp_integrals(x).unwrap();
        let f = exp_integrals_fast(x);
        for j in 0..3usize {
            let fact = |m: usize| (1..=m).map(|i| i as f64).product::<f64>();
            let series: f64 = (0..10)
                .map(|n| (-1f64).powi(n as i32) * fact(j + 2 * n) / x.powi(2 * n as i32 + 2))
                .sum();
            assert!((v[j] - series).abs() < 1e-9 * series, "I{j}({x})");
            assert!((f[j] - v[j]).abs() < 1e-10 * v[j], "fast I{j}({x})");
        }
    }
    // Small x: I_0 ~ π/(2x) + ln x + γ_E − 1, I_1 ~ −ln x − γ_E, I_2 → 1.
    let eg = 0.577_215_664_901_532_9;
    let x: f64 = 1e-4;
    let v = exp_integrals(x).unwrap();
    assert!((v[0] - (PI / (2.0 * x) + x.ln() + eg - 1.0)).abs() < 1e-3);
    assert!((v[1] - (-x.ln() - eg)).abs() < 1e-3);
    assert!((v[2] - 1.0).abs() < 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let x = 10f64.powf(rng.random_range(-3.0..2.5));
        let v = exp_integrals(x).unwrap();
        let f = exp_integrals_fast(x);
        for j in 0..3 {
            assert!(
                (f[j] - v[j]).abs() <= 1e-9 * v[j].abs().max(1e-300),
                "I{j}({x}): {} vs {}",
                f[j],
                v[j]
            );
        }
    }
}
