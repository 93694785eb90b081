//! Steady-state coupled-dipole solver for finite arrays.
//!
//! Each emitter responds to the local a and b fields through the rank-one
//! cross-polarizabilities α_σσ′ = c ℘_σ℘_σ′ σσ′*, c = i/(γ̄ − iδ). Writing
//! P_a(r_i) = ℘_a A Y_i and P_b(r_i) = ℘_b B e^{ik_L·r_i} Y_i collapses the
//! 6N site equations to 3N unknowns Y:
//!
//! Y_j/c + Σ_{i≠j} [w_a k_a² G_a(r_ji) + w_b k_b² e^{−ik_L·r_ji} G_b(r_ji)] Y_i = ℘_a A* E⁰(r_j)
//!
//! with w_σ = ℘_σ²|σ|². Every accepted solve is checked against the
//! unreduced 6N equations.

use std::f64::consts::{PI, TAU};

use faer::Mat;
use faer::linalg::solvers::Solve;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, invalid};
use crate::greens::{Sym3, kernel_unchecked};
use crate::lattice::plane_wave;
use crate::smatrix::ScatterScenario;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO3: [C64; 3] = [C64 { re: 0.0, im: 0.0 }; 3];

/// Distance (units of d) below which a point is treated as sitting on an emitter.
pub const ON_SITE_TOL: f64 = 1e-6;

/// Emitter positions in units of d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmitterArray {
    positions: Vec<[f64; 3]>,
    /// Side length when the array is a centered N×N square lattice in z = 0.
    side: Option<usize>,
}

impl EmitterArray {
    /// Centered N×N square array in the z = 0 plane, row-major in (y, x).
    pub fn square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("array side must be at least 1"));
        }
        let c = (n as f64 - 1.0) / 2.0;
        let positions = (0..n * n)
            .map(|k| [(k % n) as f64 - c, (k / n) as f64 - c, 0.0])
            .collect();
        Ok(Self {
            positions,
            side: Some(n),
        })
    }

    /// Arbitrary positions; they must be finite and pairwise distinct.
    pub fn from_positions(positions: Vec<[f64; 3]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(invalid("emitter list is empty"));
        }
        if positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(invalid("emitter positions must be finite"));
        }
        let mut sorted: Vec<(usize, [f64; 3])> = positions.iter().copied().enumerate().collect();
        sorted.sort_by(|a, b| a.1[0].total_cmp(&b.1[0]));
        for (k, (i, p)) in sorted.iter().enumerate() {
            for (j, q) in sorted[k + 1..].iter() {
                if q[0] - p[0] > ON_SITE_TOL {
                    break;
                }
                if dist(p, q) <= ON_SITE_TOL {
                    return Err(invalid(format!("emitters {i} and {j} coincide")));
                }
            }
        }
        Ok(Self {
            positions,
            side: None,
        })
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn side(&self) -> Option<usize> {
        self.side
    }

    /// Largest |x| over the emitters (units of d).
    pub fn half_extent_x(&self) -> f64 {
        self.positions
            .iter()
            .map(|p| p[0].abs())
            .fold(0.0, f64::max)
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Single-emitter cross-polarizabilities and the decay rates entering them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polarizabilities {
    /// α[σ][σ′] with index 0 = a, 1 = b.
    pub alpha: [[C64; 2]; 2],
    pub gamma_a: f64,
    pub gamma_b: f64,
}

/// α_σσ′ = i ℘_σ℘_σ′ σσ′* / ((γ_a + γ_b)/2 − iδ) in absolute units.
///
/// γ_σ uses the field wavenumber k_σ, or the transition wavenumber k_σ − δ
/// when `markov` is set.
pub fn polarizabilities(scn: &ScatterScenario, markov: bool) -> Result<Polarizabilities> {
    scn.validate()?;
    let u = TAU / scn.lattice.spacing;
    let delta = scn.detuning * u;
    let shift = if markov { delta } else { 0.0 };
    let ka = scn.omega * u - shift;
    let kb = (scn.omega + scn.delta_omega) * u - shift;
    if !(ka > 0.0 && kb > 0.0) {
        return Err(invalid("transition wavenumbers must be positive"));
    }
    let (pa, pb) = (scn.dipole_a, scn.dipole_b);
    let gamma_a = scn.mixing.a_sq() * pa * pa * ka.powi(3) / (3.0 * PI);
    let gamma_b = scn.mixing.b_sq() * pb * pb * kb.powi(3) / (3.0 * PI);
    let c = I / C64::new(0.5 * (gamma_a + gamma_b), -delta);
    let amp = [scn.mixing.a * pa, scn.mixing.b * pb];
    let alpha = [0, 1].map(|s| [0, 1].map(|t| c * amp[s] * amp[t].conj()));
    Ok(Polarizabilities {
        alpha,
        gamma_a,
        gamma_b,
    })
}

/// Linear solver used for the site equations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Dense LU up to 1600 emitters, GMRES beyond.
    Auto,
    Dense,
    Iterative,
}

/// Controls for the finite-array solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiniteOptions {
    pub solver: SolverKind,
    /// Use transition rather than field frequencies in γ_σ.
    pub markov: bool,
    /// Incident amplitude |E⁰|.
    pub amplitude: f64,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
    /// Memory budget for dense factorization, MiB.
    pub memory_limit_mib: usize,
    /// Largest accepted relative residual of the 6N site equations.
    pub residual_limit: f64,
}

impl Default for FiniteOptions {
    fn default() -> Self {
        Self {
            solver: SolverKind::Auto,
            markov: false,
            amplitude: 1.0,
            gmres_tol: 1e-11,
            gmres_restart: 150,
            gmres_max_iter: 5000,
            memory_limit_mib: 3072,
            residual_limit: 1e-10,
        }
    }
}

/// Physical constants of one finite-array problem in absolute units.
#[derive(Clone, Debug)]
struct Problem {
    d: f64,
    k_a: f64,
    k_b: f64,
    rwa: bool,
    grating: [f64; 2],
    e0: [C64; 3],
    k_in: [f64; 3],
    /// ℘_a A and ℘_b B.
    amp_a: C64,
    amp_b: C64,
    inv_c: C64,
    /// Absolute positions.
    sites: Vec<[f64; 3]>,
    /// Kernel tables on the displacement grid for square arrays.
    table: Option<KernelTable>,
}

#[derive(Clone, Debug)]
struct KernelTable {
    n: usize,
    coords: Vec<(i32, i32)>,
    a: Vec<Sym3>,
    b: Vec<Sym3>,
}

impl KernelTable {
    fn build(n: usize, d: f64, k_a: f64, k_b: f64, rwa: bool) -> Self {
        let w = 2 * n - 1;
        let off = n as i32 - 1;
        let entries = crate::par::map_indexed(w * w, |idx| {
            let dx = (idx % w) as i32 - off;
            let dy = (idx / w) as i32 - off;
            if dx == 0 && dy == 0 {
                return (Sym3::zero(), Sym3::zero());
            }
            let r = [dx as f64 * d, dy as f64 * d, 0.0];
            let rn = (r[0] * r[0] + r[1] * r[1]).sqrt();
            (
                kernel_unchecked(r, rn, k_a, rwa),
                kernel_unchecked(r, rn, k_b, rwa),
            )
        });
        let (a, b) = entries.into_iter().unzip();
        let coords = (0..n * n)
            .map(|k| ((k % n) as i32, (k / n) as i32))
            .collect();
        Self { n, coords, a, b }
    }

    #[inline]
    fn index(&self, j: usize, i: usize) -> usize {
        let w = 2 * self.n - 1;
        let off = self.n as i32 - 1;
        let (xj, yj) = self.coords[j];
        let (xi, yi) = self.coords[i];
        ((yj - yi + off) as usize) * w + (xj - xi + off) as usize
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Which {
    A,
    B,
}

impl Problem {
    fn new(
        scn: &ScatterScenario,
        arr: &EmitterArray,
        opts: &FiniteOptions,
        pol: &Polarizabilities,
    ) -> Result<Self> {
        if !(opts.amplitude.is_finite()) {
            return Err(invalid("incident amplitude must be finite"));
        }
        let d = scn.lattice.spacing;
        let u = TAU / d;
        let pw = plane_wave(scn.omega, scn.incidence, scn.polarization)?;
        let k_a = scn.omega * u;
        let k_b = (scn.omega + scn.delta_omega) * u;
        let sites: Vec<[f64; 3]> = arr.positions.iter().map(|p| p.map(|x| x * d)).collect();
        let table = arr
            .side
            .map(|n| KernelTable::build(n, d, k_a, k_b, scn.rwa));
        // 1/c from α_aa = c w_a, or from γ̄ − iδ when |A| = 0.
        let inv_c = C64::new(-scn.detuning * u, -0.5 * (pol.gamma_a + pol.gamma_b));
        Ok(Self {
            d,
            k_a,
            k_b,
            rwa: scn.rwa,
            grating: scn.grating.map(|g| g * u),
            e0: pw.polarization.map(|e| e * opts.amplitude),
            k_in: [pw.k_par[0] * u, pw.k_par[1] * u, pw.k_perp * u],
            amp_a: scn.mixing.a * scn.dipole_a,
            amp_b: scn.mixing.b * scn.dipole_b,
            inv_c,
            sites,
            table,
        })
    }

    fn n(&self) -> usize {
        self.sites.len()
    }

    fn incident(&self, r: &[f64; 3]) -> [C64; 3] {
        let ph = (I * (self.k_in[0] * r[0] + self.k_in[1] * r[1] + self.k_in[2] * r[2])).exp();
        self.e0.map(|e| e * ph)
    }

    fn grating_phase(&self, r: &[f64; 3]) -> C64 {
        (I * (self.grating[0] * r[0] + self.grating[1] * r[1])).exp()
    }

    fn kernel(&self, which: Which, j: usize, i: usize) -> Sym3 {
        match &self.table {
            Some(t) => {
                let idx = t.index(j, i);
                if which == Which::A {
                    t.a[idx]
                } else {
                    t.b[idx]
                }
            }
            None => {
                let (rj, ri) = (&self.sites[j], &self.sites[i]);
                let r = [rj[0] - ri[0], rj[1] - ri[1], rj[2] - ri[2]];
                let rn = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
                let k = if which == Which::A {
                    self.k_a
                } else {
                    self.k_b
                };
                kernel_unchecked(r, rn, k, self.rwa)
            }
        }
    }

    /// (Σ_{i≠j} G_σ(r_j − r_i) v_i)_j for every site j.
    fn apply(&self, which: Which, v: &[[C64; 3]]) -> Vec<[C64; 3]> {
        let n = self.n();
        crate::par::map_indexed(n, |j| {
            let mut acc = ZERO3;
            for (i, vi) in v.iter().enumerate() {
                if i == j {
                    continue;
                }
                let g = self.kernel(which, j, i).apply(vi);
                acc[0] += g[0];
                acc[1] += g[1];
                acc[2] += g[2];
            }
            acc
        })
    }

    fn weights(&self) -> (C64, C64) {
        (
            C64::new(self.amp_a.norm_sqr() * self.k_a * self.k_a, 0.0),
            C64::new(self.amp_b.norm_sqr() * self.k_b * self.k_b, 0.0),
        )
    }

    /// Reduced operator applied to Y.
    fn matvec(&self, y: &[[C64; 3]]) -> Vec<[C64; 3]> {
        let (wa, wb) = self.weights();
        let ga = self.apply(Which::A, y);
        let shifted: Vec<[C64; 3]> = y
            .iter()
            .zip(&self.sites)
            .map(|(v, r)| {
                let p = self.grating_phase(r);
                v.map(|c| c * p)
            })
            .collect();
        let gb = self.apply(Which::B, &shifted);
        (0..self.n())
            .map(|j| {
                let p = self.grating_phase(&self.sites[j]).conj();
                [0, 1, 2].map(|c| y[j][c] * self.inv_c + wa * ga[j][c] + wb * p * gb[j][c])
            })
            .collect()
    }

    fn rhs(&self) -> Vec<[C64; 3]> {
        let s = self.amp_a.conj();
        self.sites
            .iter()
            .map(|r| self.incident(r).map(|e| e * s))
            .collect()
    }

    fn dense(&self) -> Mat<C64> {
        let n3 = 3 * self.n();
        let (wa, wb) = self.weights();
        let mut buf = vec![C64::new(0.0, 0.0); n3 * n3];
        crate::par::fill_chunks(&mut buf, 3 * n3, |start, rows| {
            let j = start / (3 * n3);
            let pj = self.grating_phase(&self.sites[j]).conj();
            for i in 0..self.n() {
                let block = if i == j {
                    let mut b = Sym3::zero();
                    b.0[0] = self.inv_c;
                    b.0[1] = self.inv_c;
                    b.0[2] = self.inv_c;
                    b
                } else {
                    let pi = self.grating_phase(&self.sites[i]);
                    self.kernel(Which::A, j, i)
                        .scale(wa)
                        .add(&self.kernel(Which::B, j, i).scale(wb * pj * pi))
                };
                for a in 0..3 {
                    for b in 0..3 {
                        rows[a * n3 + 3 * i + b] = block.get(a, b);
                    }
                }
            }
        });
        Mat::from_fn(n3, n3, |r, c| buf[r * n3 + c])
    }
}

fn flatten(v: &[[C64; 3]]) -> Vec<C64> {
    v.iter().flatten().copied().collect()
}

fn unflatten(v: &[C64]) -> Vec<[C64; 3]> {
    v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

fn norm(v: &[[C64; 3]]) -> f64 {
    v.iter().flatten().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn diff_norm(a: &[[C64; 3]], b: &[[C64; 3]]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Restarted GMRES on the reduced operator without preconditioning.
fn gmres(p: &Problem, b: &[[C64; 3]], opts: &FiniteOptions) -> Result<(Vec<[C64; 3]>, usize)> {
    let n = 3 * p.n();
    let m = opts.gmres_restart.clamp(1, n);
    let bnorm = norm(b);
    let bf = flatten(b);
    let mut x = vec![C64::new(0.0, 0.0); n];
    let mut iters = 0;
    if bnorm == 0.0 {
        return Ok((unflatten(&x), 0));
    }
    loop {
        let ax = flatten(&p.matvec(&unflatten(&x)));
        let r: Vec<C64> = bf.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = r.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if beta <= opts.gmres_tol * bnorm {
            return Ok((unflatten(&x), iters));
        }
        if iters >= opts.gmres_max_iter {
            return Err(Error::NonConvergence(format!(
                "GMRES reached {iters} iterations at relative residual {:.3e}",
                beta / bnorm
            )));
        }
        let mut basis: Vec<Vec<C64>> = vec![r.iter().map(|c| c / beta).collect()];
        let mut h = vec![vec![C64::new(0.0, 0.0); m]; m + 1];
        let mut cs = vec![C64::new(0.0, 0.0); m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut g = vec![C64::new(0.0, 0.0); m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            iters += 1;
            let mut w = flatten(&p.matvec(&unflatten(&basis[k])));
            // Modified Gram–Schmidt.
            for (i, vi) in basis.iter().enumerate() {
                let hik: C64 = vi.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                h[i][k] = hik;
                for (wi, a) in w.iter_mut().zip(vi) {
                    *wi -= hik * a;
                }
            }
            let hn = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            h[k + 1][k] = C64::new(hn, 0.0);
            for i in 0..k {
                let t = cs[i].conj() * h[i][k] + sn[i].conj() * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let (a, bb) = (h[k][k], h[k + 1][k]);
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if den == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = a / den;
            sn[k] = bb / den;
            h[k][k] = C64::new(den, 0.0);
            h[k + 1][k] = C64::new(0.0, 0.0);
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            k_used = k + 1;
            if g[k + 1].norm() <= 0.5 * opts.gmres_tol * bnorm
                || hn == 0.0
                || iters >= opts.gmres_max_iter
            {
                break;
            }
            basis.push(w.iter().map(|c| c / hn).collect());
        }
        // Back substitution for the update coefficients.
        let mut yk = vec![C64::new(0.0, 0.0); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * yk[j];
            }
            yk[i] = s / h[i][i];
        }
        for (j, c) in yk.iter().enumerate() {
            for (xi, v) in x.iter_mut().zip(&basis[j]) {
                *xi += c * v;
            }
        }
    }
}

/// Self-consistent site fields and polarizations.
#[derive(Clone, Debug)]
pub struct SiteSolution {
    /// Positions in units of d.
    pub positions: Vec<[f64; 3]>,
    pub e_a: Vec<[C64; 3]>,
    pub e_b: Vec<[C64; 3]>,
    pub p_a: Vec<[C64; 3]>,
    pub p_b: Vec<[C64; 3]>,
    pub polarizabilities: Polarizabilities,
    /// Relative residual of the reduced 3N system.
    pub residual: f64,
    /// Relative residual of the unreduced 6N site equations.
    pub residual_full: f64,
    pub solver: SolverKind,
    pub iterations: usize,
    problem: Problem,
}

/// Solves the coupled-dipole equations for the incident plane wave of `scn`.
pub fn solve_sites(
    scn: &ScatterScenario,
    arr: &EmitterArray,
    opts: &FiniteOptions,
) -> Result<SiteSolution> {
    let pol = polarizabilities(scn, opts.markov)?;
    let prob = Problem::new(scn, arr, opts, &pol)?;
    let n = prob.n();
    let n3 = 3 * n;
    let solver = match opts.solver {
        SolverKind::Auto if n <= 1600 => SolverKind::Dense,
        SolverKind::Auto => SolverKind::Iterative,
        s => s,
    };
    let b = prob.rhs();
    let (y, iterations) = match solver {
        SolverKind::Dense => {
            let need = 3 * n3 * n3 * std::mem::size_of::<C64>();
            if need > opts.memory_limit_mib << 20 {
                return Err(invalid(format!(
                    "dense solve of {n} emitters needs about {} MiB (limit {} MiB); use the iterative solver",
                    need >> 20,
                    opts.memory_limit_mib
                )));
            }
            let a = prob.dense();
            let lu = a.partial_piv_lu();
            let rhs = Mat::from_fn(n3, 1, |r, _| b[r / 3][r % 3]);
            let x = lu.solve(&rhs);
            let y: Vec<[C64; 3]> = (0..n)
                .map(|i| [0, 1, 2].map(|c| x[(3 * i + c, 0)]))
                .collect();
            (y, 0)
        }
        _ => gmres(&prob, &b, opts)?,
    };
    if y.iter()
        .flatten()
        .any(|c| !c.re.is_finite() || !c.im.is_finite())
    {
        return Err(Error::SingularSystem {
            cond: f64::INFINITY,
            limit: 0.0,
        });
    }
    let bn = norm(&b).max(f64::MIN_POSITIVE);
    let residual = if norm(&b) == 0.0 {
        0.0
    } else {
        diff_norm(&prob.matvec(&y), &b) / bn
    };

    // Site polarizations and fields from Y.
    let p_a: Vec<[C64; 3]> = y.iter().map(|v| v.map(|c| c * prob.amp_a)).collect();
    let p_b: Vec<[C64; 3]> = y
        .iter()
        .zip(&prob.sites)
        .map(|(v, r)| {
            let ph = prob.grating_phase(r) * prob.amp_b;
            v.map(|c| c * ph)
        })
        .collect();
    let (e_a, e_b) = site_fields(&prob, &p_a, &p_b);

    // Unreduced check: P′ = α E, then E_σ − δ_σa E⁰ + k_σ² Σ G P′_σ = 0.
    let al = pol.alpha;
    let mut pa2 = Vec::with_capacity(n);
    let mut pb2 = Vec::with_capacity(n);
    for j in 0..n {
        let ph = prob.grating_phase(&prob.sites[j]);
        pa2.push([0, 1, 2].map(|c| al[0][0] * e_a[j][c] + al[0][1] * ph.conj() * e_b[j][c]));
        pb2.push([0, 1, 2].map(|c| al[1][0] * ph * e_a[j][c] + al[1][1] * e_b[j][c]));
    }
    let (ea2, eb2) = site_fields(&prob, &pa2, &pb2);
    let inc: Vec<[C64; 3]> = prob.sites.iter().map(|r| prob.incident(r)).collect();
    let scale = norm(&inc).max(f64::MIN_POSITIVE);
    let residual_full = if norm(&inc) == 0.0 {
        0.0
    } else {
        (diff_norm(&ea2, &e_a).powi(2) + diff_norm(&eb2, &e_b).powi(2)).sqrt() / scale
    };
    let limit = if solver == SolverKind::Dense {
        opts.residual_limit
    } else {
        opts.residual_limit.max(10.0 * opts.gmres_tol)
    };
    if !(residual <= limit && residual_full <= limit) {
        return Err(Error::NonConvergence(format!(
            "site equations not satisfied: residual {residual:.3e}, unreduced {residual_full:.3e} (limit {limit:.1e})"
        )));
    }
    Ok(SiteSolution {
        positions: arr.positions.clone(),
        e_a,
        e_b,
        p_a,
        p_b,
        polarizabilities: pol,
        residual,
        residual_full,
        solver,
        iterations,
        problem: prob,
    })
}

/// E_σ(r_j) = δ_σa E⁰(r_j) − k_σ² Σ_{i≠j} G(r_j − r_i, k_σ) P_σ(r_i).
fn site_fields(p: &Problem, pa: &[[C64; 3]], pb: &[[C64; 3]]) -> (Vec<[C64; 3]>, Vec<[C64; 3]>) {
    let ga = p.apply(Which::A, pa);
    let gb = p.apply(Which::B, pb);
    let ka2 = p.k_a * p.k_a;
    let kb2 = p.k_b * p.k_b;
    let e_a = p
        .sites
        .iter()
        .zip(&ga)
        .map(|(r, g)| {
            let e0 = p.incident(r);
            [0, 1, 2].map(|c| e0[c] - ka2 * g[c])
        })
        .collect();
    let e_b = gb.iter().map(|g| g.map(|c| -kb2 * c)).collect();
    (e_a, e_b)
}

/// Axis-aligned plane of a field grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Xy,
    Xz,
    Yz,
}

/// Inclusive uniform range `lo..=hi` with `n` samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range1 {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Range1 {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        let r = Self { lo, hi, n };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0
            || !self.lo.is_finite()
            || !self.hi.is_finite()
            || (self.n > 1 && !(self.hi > self.lo))
        {
            return Err(invalid(format!(
                "invalid range [{}, {}] with {} samples",
                self.lo, self.hi, self.n
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        if self.n > 1 {
            (self.hi - self.lo) / (self.n - 1) as f64
        } else {
            0.0
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        self.lo + self.step() * i as f64
    }
}

/// Rectangular grid in an axis-aligned plane at `offset` along the normal.
/// Point (iu, iv) has flat index iv·nu + iu; u is the first in-plane axis
/// (x for xy and xz, y for yz).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub plane: Plane,
    pub offset: f64,
    pub u: Range1,
    pub v: Range1,
}

impl GridSpec {
    pub fn new(plane: Plane, offset: f64, u: Range1, v: Range1) -> Result<Self> {
        let g = Self {
            plane,
            offset,
            u,
            v,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        self.u.validate()?;
        self.v.validate()?;
        if !self.offset.is_finite() {
            return Err(invalid("grid offset must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.u.n * self.v.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of flat index `k` in units of d.
    pub fn point(&self, k: usize) -> [f64; 3] {
        let a = self.u.value(k % self.u.n);
        let b = self.v.value(k / self.u.n);
        match self.plane {
            Plane::Xy => [a, b, self.offset],
            Plane::Xz => [a, self.offset, b],
            Plane::Yz => [self.offset, a, b],
        }
    }
}

/// Fields on a grid, in units of |E⁰|, plus the site polarizations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMap {
    pub grid: GridSpec,
    pub e_a: Vec<[C64; 3]>,
    pub e_b: Vec<[C64; 3]>,
    pub sites: Vec<[f64; 3]>,
    pub p_a: Vec<[C64; 3]>,
    pub p_b: Vec<[C64; 3]>,
}

impl FieldMap {
    pub fn e_b_norm(&self) -> Vec<f64> {
        self.e_b
            .iter()
            .map(|e| e.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
            .collect()
    }
}

impl SiteSolution {
    /// Fields at arbitrary points (units of d); a point within
    /// [`ON_SITE_TOL`] of an emitter is an error.
    pub fn fields_at(&self, points: &[[f64; 3]]) -> Result<(Vec<[C64; 3]>, Vec<[C64; 3]>)> {
        let p = &self.problem;
        let ka2 = p.k_a * p.k_a;
        let kb2 = p.k_b * p.k_b;
        let tol = ON_SITE_TOL * p.d;
        let out = crate::par::map_slice(points, |pt| {
            let r = pt.map(|x| x * p.d);
            let mut sa = ZERO3;
            let mut sb = ZERO3;
            for (i, s) in p.sites.iter().enumerate() {
                let dr = [r[0] - s[0], r[1] - s[1], r[2] - s[2]];
                let rn = (dr[0] * dr[0] + dr[1] * dr[1] + dr[2] * dr[2]).sqrt();
                if rn <= tol {
                    return Err(Error::PointOnEmitter { index: i });
                }
                let ga = kernel_unchecked(dr, rn, p.k_a, p.rwa).apply(&self.p_a[i]);
                let gb = kernel_unchecked(dr, rn, p.k_b, p.rwa).apply(&self.p_b[i]);
                for c in 0..3 {
                    sa[c] += ga[c];
                    sb[c] += gb[c];
                }
            }
            let e0 = p.incident(&r);
            Ok(([0, 1, 2].map(|c| e0[c] - ka2 * sa[c]), sb.map(|c| -kb2 * c)))
        });
        let mut ea = Vec::with_capacity(points.len());
        let mut eb = Vec::with_capacity(points.len());
        for o in out {
            let (a, b) = o?;
            ea.push(a);
            eb.push(b);
        }
        Ok((ea, eb))
    }

    /// Scattered and incident fields on `grid`.
    pub fn evaluate(&self, grid: &GridSpec) -> Result<FieldMap> {
        grid.validate()?;
        let points: Vec<[f64; 3]> = (0..grid.len()).map(|k| grid.point(k)).collect();
        let (e_a, e_b) = self.fields_at(&points)?;
        Ok(FieldMap {
            grid: *grid,
            e_a,
            e_b,
            sites: self.positions.clone(),
            p_a: self.p_a.clone(),
            p_b: self.p_b.clone(),
        })
    }
}

/// Solves the sites and evaluates the fields on `grid` in one step.
pub fn evaluate_field(
    scn: &ScatterScenario,
    arr: &EmitterArray,
    opts: &FiniteOptions,
    grid: &GridSpec,
) -> Result<FieldMap> {
    solve_sites(scn, arr, opts)?.evaluate(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smatrix::Mixing;

    fn scenario() -> ScatterScenario {
        ScatterScenario {
            omega: 0.2,
            delta_omega: 0.9,
            mixing: Mixing::from_magnitude(0.4).unwrap(),
            detuning: 0.01,
            grating: [0.15, 0.05],
            ..ScatterScenario::default()
        }
    }

    #[test]
    fn rank_one_polarizability() {
        let p = polarizabilities(&scenario(), false).unwrap();
        let a = p.alpha;
        assert!(
            (a[0][0] * a[1][1] - a[0][1] * a[1][0]).norm()
                < 1e-12 * a[0][0].norm() * a[1][1].norm()
        );
    }

    #[test]
    fn single_emitter_unmixed() {
        let scn = ScatterScenario {
            mixing: Mixing::from_magnitude(1.0).unwrap(),
            ..scenario()
        };
        let arr = EmitterArray::square(1).unwrap();
        let s = solve_sites(&scn, &arr, &FiniteOptions::default()).unwrap();
        let e0 = plane_wave(scn.omega, scn.incidence, scn.polarization)
            .unwrap()
            .polarization;
        for c in 0..3 {
            assert!((s.e_a[0][c] - e0[c]).norm() < 1e-14);
            assert_eq!(s.e_b[0][c], C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn gmres_matches_dense() {
        let scn = scenario();
        let arr = EmitterArray::square(5).unwrap();
        let dense = solve_sites(
            &scn,
            &arr,
            &FiniteOptions {
                solver: SolverKind::Dense,
                ..Default::default()
            },
        )
        .unwrap();
        let it = solve_sites(
            &scn,
            &arr,
            &FiniteOptions {
                solver: SolverKind::Iterative,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(diff_norm(&dense.e_b, &it.e_b) < 1e-9 * norm(&dense.e_b));
        assert!(dense.residual < 1e-12 && dense.residual_full < 1e-12);
    }

    #[test]
    fn table_and_direct_kernels_agree() {
        let scn = scenario();
        let sq = EmitterArray::square(3).unwrap();
        let free = EmitterArray::from_positions(sq.positions().to_vec()).unwrap();
        let a = solve_sites(&scn, &sq, &FiniteOptions::default()).unwrap();
        let b = solve_sites(&scn, &free, &FiniteOptions::default()).unwrap();
        assert!(diff_norm(&a.p_b, &b.p_b) < 1e-13 * norm(&a.p_b));
    }

    #[test]
    fn point_on_emitter_rejected() {
        let s = solve_sites(
            &scenario(),
            &EmitterArray::square(2).unwrap(),
            &FiniteOptions::default(),
        )
        .unwrap();
        let err = s.fields_at(&[[0.5, -0.5, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::PointOnEmitter { .. }));
    }

    #[test]
    fn duplicate_positions_rejected() {
        assert!(EmitterArray::from_positions(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0; 3]]).is_err());
    }
}
