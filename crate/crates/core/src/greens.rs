//! Free-space dyadic Green's function, its rotating-wave counterpart K⁺, the
//! exponential integrals I₀, I₁, I₂ and single-emitter decay rates.
//!
//! Everything here works in absolute units: positions in the same length unit
//! as the lattice spacing, wavenumbers in inverse length.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Matrix3;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result, invalid};
use crate::quad::integrate_to_infinity;

pub type Mat3 = Matrix3<C64>;

/// Symmetric 3×3 tensor stored as (xx, yy, zz, xy, xz, yz).
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Sym3(pub [C64; 6]);

impl Sym3 {
    pub fn zero() -> Self {
        Self([C64::new(0.0, 0.0); 6])
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        const IDX: [[usize; 3]; 3] = [[0, 3, 4], [3, 1, 5], [4, 5, 2]];
        self.0[IDX[i][j]]
    }

    pub fn to_mat(&self) -> Mat3 {
        Mat3::from_fn(|i, j| self.get(i, j))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self(self.0.map(|v| v * s))
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut r = *self;
        for (a, b) in r.0.iter_mut().zip(o.0.iter()) {
            *a += *b;
        }
        r
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    /// Applies the tensor to a complex 3-vector.
    pub fn apply(&self, v: &[C64; 3]) -> [C64; 3] {
        let s = &self.0;
        [
            s[0] * v[0] + s[3] * v[1] + s[4] * v[2],
            s[3] * v[0] + s[1] * v[1] + s[5] * v[2],
            s[4] * v[0] + s[5] * v[1] + s[2] * v[2],
        ]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Dyadic Green's function
/// G(r, k) = −e^{ikr}/(4πr) [ (1 + i/kr − 1/(kr)²) δ + (−1 − 3i/kr + 3/(kr)²) r̂r̂ ].
///
/// `k` may be complex (Im k > 0 damps the kernel).
pub fn dyadic_green(r: [f64; 3], k: C64) -> Result<Sym3> {
    let rn = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if rn == 0.0 {
        return Err(invalid("dyadic Green's function is singular at r = 0"));
    }
    Ok(green_unchecked(r, rn, k))
}

#[inline]
pub(crate) fn green_unchecked(r: [f64; 3], rn: f64, k: C64) -> Sym3 {
    let kr = k * rn;
    let ikr = C64::new(0.0, 1.0) / kr;
    let ikr2 = ikr * ikr;
    let pref = -(C64::new(0.0, 1.0) * kr).exp() / (4.0 * PI * rn);
    let a = pref * (1.0 + ikr + ikr2);
    let b = pref * (-1.0 - 3.0 * ikr - 3.0 * ikr2);
    let u = [r[0] / rn, r[1] / rn, r[2] / rn];
    Sym3([
        a + b * (u[0] * u[0]),
        a + b * (u[1] * u[1]),
        a + b * (u[2] * u[2]),
        b * (u[0] * u[1]),
        b * (u[0] * u[2]),
        b * (u[1] * u[2]),
    ])
}

/// Difference G − K⁺ = (1/(4π² k r²)) [ I₂(kr)(δ − r̂r̂) + (I₁ + I₀)(kr)(δ − 3r̂r̂) ].
pub(crate) fn counter_rotating_unchecked(r: [f64; 3], rn: f64, k: f64) -> [f64; 6] {
    let x = k * rn;
    let [i0, i1, i2] = exp_integrals_fast(x);
    let pref = 1.0 / (4.0 * PI * PI * k * rn * rn);
    let a = pref * (i2 + i1 + i0);
    let b = -pref * (i2 + 3.0 * (i1 + i0));
    let u = [r[0] / rn, r[1] / rn, r[2] / rn];
    [
        a + b * u[0] * u[0],
        a + b * u[1] * u[1],
        a + b * u[2] * u[2],
        b * u[0] * u[1],
        b * u[0] * u[2],
        b * u[1] * u[2],
    ]
}

/// Rotating-wave Green's function
/// K⁺(r, k) = G(r, k) − (1/(4π² k r²)) [ I₂(kr)(δ − r̂r̂) + (I₁ + I₀)(kr)(δ − 3r̂r̂) ].
pub fn dyadic_green_rwa(r: [f64; 3], k: f64) -> Result<Sym3> {
    if !(k > 0.0) {
        return Err(invalid(format!(
            "K+ requires a positive real wavenumber, got {k}"
        )));
    }
    let g = dyadic_green(r, C64::new(k, 0.0))?;
    let rn = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let c = counter_rotating_unchecked(r, rn, k);
    let mut out = g;
    for (o, ci) in out.0.iter_mut().zip(c) {
        *o -= ci;
    }
    Ok(out)
}

/// Kernel selector shared by lattice sums and finite arrays.
#[inline]
pub(crate) fn kernel_unchecked(r: [f64; 3], rn: f64, k: f64, rwa: bool) -> Sym3 {
    let mut g = green_unchecked(r, rn, C64::new(k, 0.0));
    if rwa {
        let c = counter_rotating_unchecked(r, rn, k);
        for (o, ci) in g.0.iter_mut().zip(c) {
            *o -= ci;
        }
    }
    g
}

/// Iⱼ(x) = ∫₀^∞ uʲ e^{−u} / (u² + x²) du for j = 0, 1, 2 by adaptive quadrature.
///
/// This is the reference evaluation; [`exp_integrals_fast`] is used in inner loops.
pub fn exp_integrals(x: f64) -> Result<[f64; 3]> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid(format!(
            "exponential integrals need x > 0, got {x}"
        )));
    }
    let x2 = x * x;
    let mut out = [0.0; 3];
    for (j, o) in out.iter_mut().enumerate() {
        let f = |u: f64| u.powi(j as i32) * (-u).exp() / (u * u + x2);
        // Split at u = x where the denominator changes character.
        let (a, _) = crate::quad::integrate(f, 0.0, x.min(40.0), 1e-300, 1e-13)?;
        let (b, _) = integrate_to_infinity(f, x.min(40.0), 1e-300, 1e-13)?;
        *o = a + b;
    }
    Ok(out)
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Auxiliary functions f(x) = ∫₀^∞ e^{−xt}/(1+t²) dt and g(x) = ∫₀^∞ t e^{−xt}/(1+t²) dt.
fn aux_fg(x: f64) -> (f64, f64) {
    if x > 40.0 {
        // Asymptotic series, truncated well before the smallest term.
        let inv2 = 1.0 / (x * x);
        let (mut f, mut g) = (0.0, 0.0);
        let (mut tf, mut tg) = (1.0, 1.0);
        for n in 0..12 {
            f += tf;
            g += tg;
            let a = (2 * n + 1) as f64;
            let b = (2 * n + 2) as f64;
            tf *= -a * b * inv2;
            tg *= -b * (b + 1.0) * inv2;
        }
        return (f / x, g * inv2);
    }
    if x > 2.0 {
        // Lentz continued fraction for e^{ix} E₁(ix) = g − i f.
        let tiny = 1e-300;
        let mut b = C64::new(1.0, x);
        let mut c = C64::new(1.0 / tiny, 0.0);
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..200 {
            let a = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).norm() < 1e-16 {
                break;
            }
        }
        return (-h.im, h.re);
    }
    // Power series for Ci and Si.
    let x2 = x * x;
    let mut ci = EULER_GAMMA + x.ln();
    let mut si = 0.0;
    let mut term = 1.0;
    for k in 1..40 {
        term *= x / k as f64;
        let kk = k as f64;
        if k % 2 == 1 {
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            si += sign * term / kk;
        } else {
            let sign = if (k / 2) % 2 == 1 { -1.0 } else { 1.0 };
            ci += sign * term / kk;
        }
        if term < 1e-18 * x2.max(1.0) && k > 4 {
            break;
        }
    }
    let sih = si - FRAC_PI_2;
    let (s, c) = x.sin_cos();
    (ci * s - sih * c, -ci * c - sih * s)
}

/// Cosine integral Ci(x) = −∫ₓ^∞ cos t / t dt for x > 0.
pub(crate) fn cos_integral(x: f64) -> f64 {
    let (f, g) = aux_fg(x);
    let (s, c) = x.sin_cos();
    f * s - g * c
}

/// Fast evaluation of Iⱼ(x), j = 0, 1, 2, through the auxiliary functions of
/// the sine and cosine integrals.
pub fn exp_integrals_fast(x: f64) -> [f64; 3] {
    let (f, g) = aux_fg(x);
    let i2 = if x > 40.0 {
        let inv2 = 1.0 / (x * x);
        let mut s = 0.0;
        let mut t = 2.0 * inv2;
        for n in 1..12 {
            s += t;
            let a = (2 * n + 1) as f64;
            let b = (2 * n + 2) as f64;
            t *= -a * b * inv2;
        }
        s
    } else {
        1.0 - x * f
    };
    [f / x, g, i2]
}

/// Vacuum decay rate γ = w ℘² k³ / (3π) of a transition with branch weight
/// `w = |σ|²`, dipole `dipole` and wavenumber `k`.
pub fn decay_rate(weight: f64, dipole: f64, k: f64) -> Result<f64> {
    if !(weight >= 0.0 && dipole.is_finite() && k > 0.0) {
        return Err(invalid(format!(
            "decay rate needs weight >= 0 and k > 0, got weight={weight}, k={k}"
        )));
    }
    Ok(weight * dipole * dipole * k.powi(3) / (3.0 * PI))
}

/// Single-site self-energy tensor ρD(r, σ) = k² |σ|² ℘² K⁺(r, k), or the full G when `rwa` is off.
pub fn rho_d_site(r: [f64; 3], weight: f64, dipole: f64, k: f64, rwa: bool) -> Result<Sym3> {
    let kern = if rwa {
        dyadic_green_rwa(r, k)?
    } else {
        dyadic_green(r, C64::new(k, 0.0))?
    };
    Ok(kern.scale(C64::new(k * k * weight * dipole * dipole, 0.0)))
}

/// Im G(0, k) = −k/(6π) δ, the radiative part of the coincident-point kernel.
pub fn im_green_origin(k: f64) -> f64 {
    -k / (6.0 * PI)
}

#[allow(dead_code)]
pub(crate) fn ensure_finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonConvergence(format!("{what} is not finite")))
    }
}
