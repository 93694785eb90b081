//! Independent reference implementations shared by the oracle and acceptance tests.
#![allow(dead_code)]

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transducer_core::finite::polarizabilities;
use transducer_core::greens::{decay_rate, dyadic_green_rwa};
use transducer_core::lattice::{Incidence, Polarization};
use transducer_core::smatrix::{Mixing, Prepared, ScatterScenario};

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Free-space dyadic kernel −e^{ikr}/(4πr)[(1 + i/kr − 1/(kr)²)δ + (3/(kr)² − 3i/kr − 1) r̂r̂], row-major.
pub fn green(r: [f64; 3], k: f64) -> [[C64; 3]; 3] {
    let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let x = k * rn;
    let e = -(I * x).exp() / (4.0 * PI * rn);
    let a = e * (1.0 + I / x - 1.0 / (x * x));
    let b = e * (3.0 / (x * x) - 3.0 * I / x - 1.0);
    let mut g = [[C64::new(0.0, 0.0); 3]; 3];
    for m in 0..3 {
        for n in 0..3 {
            g[m][n] = b * (r[m] * r[n] / (rn * rn));
            if m == n {
                g[m][n] += a;
            }
        }
    }
    g
}

pub struct Naive {
    pub e_a: Vec<[C64; 3]>,
    pub e_b: Vec<[C64; 3]>,
    pub p_a: Vec<[C64; 3]>,
    pub p_b: Vec<[C64; 3]>,
}

/// Direct solve of the 6N site equations for s-polarized incidence:
/// E_a = E⁰ − k_a² Σ G_a P_a, E_b = −k_b² Σ G_b P_b,
/// P_a = α_aa E_a + α_ab e^{−ik_L·r} E_b, P_b = α_ba e^{ik_L·r} E_a + α_bb E_b.
pub fn naive(scn: &ScatterScenario, sites_d: &[[f64; 3]]) -> Naive {
    let d = scn.lattice.spacing;
    let u = TAU / d;
    let ka = scn.omega * u;
    let kb = (scn.omega + scn.delta_omega) * u;
    let delta = scn.detuning * u;
    let (pa, pb) = (scn.dipole_a, scn.dipole_b);
    let (sa, sb) = (scn.mixing.a, scn.mixing.b);
    let ga = sa.norm_sqr() * pa * pa * ka.powi(3) / (3.0 * PI);
    let gb = sb.norm_sqr() * pb * pb * kb.powi(3) / (3.0 * PI);
    let den = C64::new(0.5 * (ga + gb), -delta);
    let amp = [sa * pa, sb * pb];
    let alpha = |s: usize, t: usize| I * amp[s] * amp[t].conj() / den;

    let (th, ph) = (scn.incidence.theta, scn.incidence.phi);
    let kin = [
        ka * th.sin() * ph.cos(),
        ka * th.sin() * ph.sin(),
        ka * th.cos(),
    ];
    let pol = [-ph.sin(), ph.cos(), 0.0];
    let kl = [scn.grating[0] * u, scn.grating[1] * u];

    let r: Vec<[f64; 3]> = sites_d.iter().map(|p| p.map(|x| x * d)).collect();
    let n = r.len();
    let dim = 6 * n;
    let mut m = DMatrix::<C64>::identity(dim, dim);
    let mut rhs = DVector::<C64>::zeros(dim);
    // Unknown layout: [E_a(site 0..n), E_b(site 0..n)], three components each.
    for j in 0..n {
        let ph_in = (I * (kin[0] * r[j][0] + kin[1] * r[j][1] + kin[2] * r[j][2])).exp();
        for c in 0..3 {
            rhs[3 * j + c] = pol[c] * ph_in;
        }
        for i in 0..n {
            if i == j {
                continue;
            }
            let dr = [r[j][0] - r[i][0], r[j][1] - r[i][1], r[j][2] - r[i][2]];
            let g_a = green(dr, ka);
            let g_b = green(dr, kb);
            let phase = (I * (kl[0] * r[i][0] + kl[1] * r[i][1])).exp();
            for mm in 0..3 {
                for nn in 0..3 {
                    let ra = 3 * j + mm;
                    let rb = 3 * n + 3 * j + mm;
                    let ca = 3 * i + nn;
                    let cb = 3 * n + 3 * i + nn;
                    // E_a row: + k_a² G_a (α_aa E_a + α_ab e^{−ik_L·r_i} E_b)
                    m[(ra, ca)] += ka * ka * g_a[mm][nn] * alpha(0, 0);
                    m[(ra, cb)] += ka * ka * g_a[mm][nn] * alpha(0, 1) / phase;
                    // E_b row: + k_b² G_b (α_ba e^{ik_L·r_i} E_a + α_bb E_b)
                    m[(rb, ca)] += kb * kb * g_b[mm][nn] * alpha(1, 0) * phase;
                    m[(rb, cb)] += kb * kb * g_b[mm][nn] * alpha(1, 1);
                }
            }
        }
    }
    let x = m.lu().solve(&rhs).expect("oracle system is regular");
    let mut out = Naive {
        e_a: vec![],
        e_b: vec![],
        p_a: vec![],
        p_b: vec![],
    };
    for j in 0..n {
        let ea: [C64; 3] = std::array::from_fn(|c| x[3 * j + c]);
        let eb: [C64; 3] = std::array::from_fn(|c| x[3 * n + 3 * j + c]);
        let phase = (I * (kl[0] * r[j][0] + kl[1] * r[j][1])).exp();
        out.p_a.push(std::array::from_fn(|c| {
            alpha(0, 0) * ea[c] + alpha(0, 1) / phase * eb[c]
        }));
        out.p_b.push(std::array::from_fn(|c| {
            alpha(1, 0) * phase * ea[c] + alpha(1, 1) * eb[c]
        }));
        out.e_a.push(ea);
        out.e_b.push(eb);
    }
    out
}

pub fn rel_diff(a: &[[C64; 3]], b: &[[C64; 3]]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .flat_map(|(x, y)| (0..3).map(move |c| (x[c] - y[c]).norm_sqr()))
        .sum();
    let den: f64 = b.iter().flat_map(|y| y.iter().map(|c| c.norm_sqr())).sum();
    (num / den.max(1e-300)).sqrt()
}

pub fn oracle_scenarios() -> Vec<ScatterScenario> {
    vec![
        ScatterScenario {
            omega: 0.2,
            delta_omega: 2.8,
            ..ScatterScenario::default()
        },
        ScatterScenario {
            omega: 0.35,
            delta_omega: 1.1,
            incidence: Incidence::from_degrees(30.0, 20.0),
            mixing: Mixing::from_magnitude(0.6).unwrap(),
            detuning: 0.02,
            grating: [0.13, -0.07],
            dipole_b: 0.7,
            ..ScatterScenario::default()
        },
        ScatterScenario {
            omega: 0.6,
            delta_omega: 0.4,
            incidence: Incidence::from_degrees(50.0, 135.0),
            mixing: Mixing::new(C64::new(0.3, 0.5), C64::new((1.0f64 - 0.34).sqrt(), 0.0)).unwrap(),
            detuning: -0.05,
            ..ScatterScenario::default()
        },
    ]
}

/// Im G = Im K⁺ over 10³ random (r, k).
pub fn im_green_equals_im_rwa(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let dir = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let nrm = dir
            .iter()
            .map(|x: &f64| x * x)
            .sum::<f64>()
            .sqrt()
            .max(1e-3);
        let rn = 10f64.powf(rng.random_range(-1.5..1.5));
        let r = dir.map(|x| x / nrm * rn);
        let k = 10f64.powf(rng.random_range(-1.0..1.3));
        let g = green(r, k);
        let kp = dyadic_green_rwa(r, k).unwrap().to_mat();
        let scale = g.iter().flatten().map(|c| c.im.abs()).fold(0.0, f64::max);
        for m in 0..3 {
            for n in 0..3 {
                worst = worst.max((g[m][n].im - kp[(m, n)].im).abs() / scale);
            }
        }
    }
    worst
}

/// Im Σ_g ∫ dk_z/(2π) of the momentum-space kernel −π δ(K² − k²)(δ − KK/k²)/d²,
/// with a Gaussian δ of width ε² in K² and Richardson extrapolation ε² → 0.
pub fn im_bloch_by_quadrature(q: [f64; 2], k: f64, d: f64) -> [f64; 6] {
    let b = TAU / d;
    let at = |eps: f64| -> [f64; 6] {
        let mut out = [0.0; 6];
        let mmax = ((k + q[0].abs().max(q[1].abs())) / b).ceil() as i32 + 1;
        for m in -mmax..=mmax {
            for n in -mmax..=mmax {
                let kx = q[0] + b * m as f64;
                let ky = q[1] + b * n as f64;
                let kap2 = kx * kx + ky * ky;
                if kap2 >= k * k {
                    continue;
                }
                let kz0 = (k * k - kap2).sqrt();
                // Integrate over k_z > 0 and double (even integrand), Simpson on a window of ±12 widths.
                let w = eps / (2.0 * kz0);
                let (lo, hi) = ((kz0 - 12.0 * w).max(0.0), kz0 + 12.0 * w);
                let steps = 4000;
                let h = (hi - lo) / steps as f64;
                let mut acc = [0.0; 6];
                for s in 0..=steps {
                    let kz = lo + h * s as f64;
                    let x = kap2 + kz * kz - k * k;
                    let delta = (-0.5 * x * x / (eps * eps)).exp() / ((TAU).sqrt() * eps);
                    let wgt = if s == 0 || s == steps {
                        1.0
                    } else if s % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    let kk = [kx, ky, kz];
                    let t = [
                        1.0 - kk[0] * kk[0] / (k * k),
                        1.0 - kk[1] * kk[1] / (k * k),
                        1.0 - kk[2] * kk[2] / (k * k),
                        -kk[0] * kk[1] / (k * k),
                        -kk[0] * kk[2] / (k * k),
                        -kk[1] * kk[2] / (k * k),
                    ];
                    for c in 0..6 {
                        acc[c] += wgt * delta * t[c];
                    }
                }
                for c in 0..6 {
                    // xz, yz are odd in k_z and cancel between the two halves.
                    let both = if c >= 4 { 0.0 } else { 2.0 };
                    out[c] += -PI / (d * d) / TAU * both * acc[c] * h / 3.0;
                }
            }
        }
        out
    };
    let e = 1e-3 * k * k;
    let (f1, f2, f3) = (at(e), at(e / 2.0), at(e / 4.0));
    std::array::from_fn(|c| {
        let r1 = (4.0 * f2[c] - f1[c]) / 3.0;
        let r2 = (4.0 * f3[c] - f2[c]) / 3.0;
        (16.0 * r2 - r1) / 15.0
    })
}

/// Worst relative deviation of the closed-form Im ρP from quadrature over `samples` scenarios.
pub fn im_rho_p_vs_quadrature(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < samples {
        let scn = ScatterScenario {
            omega: rng.random_range(0.1..1.6),
            delta_omega: rng.random_range(0.0..2.0),
            incidence: Incidence::from_degrees(
                rng.random_range(0.0..60.0),
                rng.random_range(0.0..360.0),
            ),
            polarization: Polarization::S,
            mixing: Mixing::from_magnitude(rng.random_range(0.05f64..0.95).sqrt()).unwrap(),
            detuning: rng.random_range(-0.1..0.1),
            eta: 1e-9,
            grating: [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)],
            ..ScatterScenario::default()
        };
        let u = TAU;
        let ka = scn.omega * u;
        let kb = (scn.omega + scn.delta_omega) * u;
        let kpar = scn.incidence.k_par(scn.omega);
        let qa = kpar.map(|x| x * u);
        let qb = [
            (kpar[0] + scn.grating[0]) * u,
            (kpar[1] + scn.grating[1]) * u,
        ];
        // Keep every order at least 2 % of k away from the light cone.
        let clear = |q: [f64; 2], k: f64| {
            (-8..=8).all(|m: i32| {
                (-8..=8).all(|n: i32| {
                    let kap = (q[0] + u * m as f64).hypot(q[1] + u * n as f64);
                    (kap - k).abs() > 0.02 * k
                })
            })
        };
        if !(clear(qa, ka) && clear(qb, kb)) {
            continue;
        }
        done += 1;
        let prep = Prepared::new(&scn).unwrap();
        let lib = prep.rho_p(&scn.mixing);
        let ia = im_bloch_by_quadrature(qa, ka, 1.0);
        let ib = im_bloch_by_quadrature(qb, kb, 1.0);
        let (wa, wb) = (scn.mixing.a_sq() * ka * ka, scn.mixing.b_sq() * kb * kb);
        let orc: [f64; 6] = std::array::from_fn(|c| wa * ia[c] + wb * ib[c]);
        let scale = orc.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for c in 0..6 {
            worst = worst.max((lib.0[c].im - orc[c]).abs() / scale);
        }
    }
    worst
}

/// Worst relative deviation of γ from k³℘²|σ|²/(3π) and from −2k²℘²|σ|² Im G(r → 0).
pub fn decay_rate_checks() -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut w_closed, mut w_limit): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let scn = ScatterScenario {
            omega: rng.random_range(0.05..2.0),
            delta_omega: rng.random_range(0.0..3.0),
            mixing: Mixing::from_magnitude(rng.random_range(0.1f64..0.9).sqrt()).unwrap(),
            dipole_a: rng.random_range(0.5..2.0),
            dipole_b: rng.random_range(0.5..2.0),
            ..ScatterScenario::default()
        };
        let p = polarizabilities(&scn, false).unwrap();
        for (g, k, w, dip) in [
            (p.gamma_a, scn.omega * TAU, scn.mixing.a_sq(), scn.dipole_a),
            (
                p.gamma_b,
                (scn.omega + scn.delta_omega) * TAU,
                scn.mixing.b_sq(),
                scn.dipole_b,
            ),
        ] {
            let closed = k.powi(3) * dip * dip * w / (3.0 * PI);
            w_closed = w_closed.max((g - closed).abs() / closed);
            w_closed = w_closed.max((decay_rate(w, dip, k).unwrap() - closed).abs() / closed);
            let r = 1e-3 / k;
            let gm = green([r, 0.0, 0.0], k);
            for c in 0..3 {
                let lim = -2.0 * k * k * dip * dip * w * gm[c][c].im;
                w_limit = w_limit.max((g - lim).abs() / g);
            }
        }
    }
    (w_closed, w_limit)
}
