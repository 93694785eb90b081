//! Lattice-summed self-energy tensors of the infinite square array.
//!
//! The central object is the Bloch sum
//!
//! S(q, k) = Σ_{l≠0} e^{−i q·r_l} G(r_l, k)
//!
//! over the lattice sites r_l in the z = 0 plane. It is conditionally
//! convergent in real space, so it is evaluated at a small height h above the
//! plane where its plane-wave expansion converges like e^{−|q+g|h}; the near
//! sites (including the divergent self term) are subtracted at the same height,
//! the remainder is extrapolated to h → 0 in powers of h², and the near sites
//! are added back at h = 0. The imaginary part has a finite closed form in the
//! radiant orders, which is what the scattering code uses.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::sync::{OnceLock, RwLock};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, invalid};
use crate::greens::{Sym3, counter_rotating_unchecked, green_unchecked, kernel_unchecked};
use crate::lattice::Order;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Numerical controls for the lattice sums.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SumControls {
    /// Number of heights used in the h² extrapolation.
    pub heights: usize,
    /// Height step in units of d.
    pub height_step: f64,
    /// Relative tolerance on the extrapolated value.
    pub tol: f64,
    /// Radius (units of d) of the direct sum of the rotating-wave correction.
    pub rwa_radius: f64,
}

impl Default for SumControls {
    fn default() -> Self {
        Self {
            heights: 8,
            height_step: 0.1,
            tol: 1e-5,
            rwa_radius: 200.0,
        }
    }
}

/// Reduces `q` into the first Brillouin zone of a lattice with spacing `d`.
pub fn reduce_to_zone(q: [f64; 2], d: f64) -> [f64; 2] {
    let b = TAU / d;
    q.map(|x| x - b * (x / b).round())
}

fn kz_of(k: C64, kappa2: f64) -> C64 {
    if k.im == 0.0 {
        let kz2 = k.re * k.re - kappa2;
        if kz2 >= 0.0 {
            C64::new(kz2.sqrt(), 0.0)
        } else {
            C64::new(0.0, (-kz2).sqrt())
        }
    } else {
        let kz = (k * k - kappa2).sqrt();
        if kz.im < 0.0 { -kz } else { kz }
    }
}

/// Neville extrapolation of samples `(t_j, y_j)` to t = 0; returns value and
/// the difference between the two highest-order estimates.
fn neville_to_zero(t: &[f64], y: &[Sym3]) -> (Sym3, f64) {
    let n = t.len();
    let mut p: Vec<Sym3> = y.to_vec();
    let mut prev_top = p[0];
    for m in 1..n {
        prev_top = p[0];
        for i in 0..n - m {
            let (ti, tim) = (t[i], t[i + m]);
            let mut out = Sym3::zero();
            for c in 0..6 {
                out.0[c] = (p[i].0[c] * tim - p[i + 1].0[c] * ti) / (tim - ti);
            }
            p[i] = out;
        }
    }
    // Only the even components (xx, yy, zz, xy) are analytic in h².
    let diff = p[0].sub(&prev_top);
    let err = diff.0[..4].iter().map(|c| c.norm()).fold(0.0, f64::max);
    (p[0], err)
}

/// Bloch sum Σ_{l≠0} e^{−iq·r_l} G(r_l, k) for absolute `q`, `k` (Im k ≥ 0)
/// and spacing `d`. `eta` regularizes orders that graze the light cone.
pub fn bloch_sum(q: [f64; 2], k: C64, d: f64, eta: f64, ctl: &SumControls) -> Result<Sym3> {
    if !(k.re > 0.0 && k.im >= 0.0 && d > 0.0) {
        return Err(invalid(format!(
            "Bloch sum needs Re k > 0, Im k >= 0, d > 0 (k={k}, d={d})"
        )));
    }
    let q = reduce_to_zone(q, d);
    let nh = ctl.heights.max(3);
    let dh = ctl.height_step * d;
    let hs: Vec<f64> = (1..=nh).map(|j| j as f64 * dh).collect();
    let kabs = k.norm();
    // Near block radius keeps k h_max²/(2 R0) and h_max/R0 small; the far
    // remainder is then a rapidly converging series in h².
    let hmax = hs[nh - 1];
    let r0 = (4.0 * d).max(4.0 * kabs * hmax * hmax).max(5.0 * hmax);

    // Plane-wave side: S_full(h) = (i/(2d²)) Σ_g (δ − KK/k²) e^{ik_z h}/k_z, K = (q+g, k_z).
    let kappa_max = kabs + 40.0 / hs[0];
    let b = TAU / d;
    let mmax = (kappa_max / b).ceil() as i32 + 1;
    let k2 = k * k;
    let crit_band = 1e-9 * kabs;
    let negligible = 1e-22 / (d * d * kabs);
    let mut spec = vec![Sym3::zero(); nh];
    for m in -mmax..=mmax {
        let kx = q[0] + b * m as f64;
        for n in -mmax..=mmax {
            let ky = q[1] + b * n as f64;
            let kappa2 = kx * kx + ky * ky;
            if kappa2 > kappa_max * kappa_max {
                continue;
            }
            let mut kz = kz_of(k, kappa2);
            if kz.norm() < crit_band {
                kz = (k2 - kappa2 + 2.0 * I * eta.max(1e-12 * kabs) * k).sqrt();
                if kz.im < 0.0 {
                    kz = -kz;
                }
            }
            let base = I / (2.0 * d * d * kz);
            let t = [
                1.0 - kx * kx / k2,
                1.0 - ky * ky / k2,
                1.0 - kz * kz / k2,
                -kx * ky / k2,
            ];
            let step = (I * kz * dh).exp();
            let mut ph = step;
            for s in spec.iter_mut() {
                let w = base * ph;
                if w.norm() * (1.0 + kappa2 / k2.norm()) < negligible {
                    break;
                }
                s.0[0] += w * t[0];
                s.0[1] += w * t[1];
                s.0[2] += w * t[2];
                s.0[3] += w * t[3];
                ph *= step;
            }
        }
    }

    // Near sites (including l = 0) evaluated at height h and at h = 0.
    let nmax = (r0 / d).floor() as i32;
    let mut near_h = vec![Sym3::zero(); nh];
    let mut near_0 = Sym3::zero();
    for i in -nmax..=nmax {
        for j in -nmax..=nmax {
            let x = i as f64 * d;
            let y = j as f64 * d;
            let rho2 = x * x + y * y;
            if rho2 > r0 * r0 {
                continue;
            }
            let phase = (-I * (q[0] * x + q[1] * y)).exp();
            for (hj, acc) in hs.iter().zip(near_h.iter_mut()) {
                let r = [-x, -y, *hj];
                let rn = (rho2 + hj * hj).sqrt();
                let g = green_unchecked(r, rn, k);
                for c in 0..6 {
                    acc.0[c] += phase * g.0[c];
                }
            }
            if rho2 > 0.0 {
                let g = green_unchecked([-x, -y, 0.0], rho2.sqrt(), k);
                for c in 0..6 {
                    near_0.0[c] += phase * g.0[c];
                }
            }
        }
    }
    // `spec` uses the outgoing-wave sign convention e^{ikr}/(4πr); the kernel G
    // carries the opposite overall sign, so the far remainder is −spec − near_h.
    let rem: Vec<Sym3> = spec
        .iter()
        .zip(near_h.iter())
        .map(|(s, n)| {
            s.scale(C64::new(-1.0, 0.0))
                .add(&n.scale(C64::new(-1.0, 0.0)))
        })
        .collect();
    let ts: Vec<f64> = hs.iter().map(|h| h * h).collect();
    let (f0, err) = neville_to_zero(&ts, &rem);
    let mut total = f0.add(&near_0);
    total.0[4] = C64::new(0.0, 0.0);
    total.0[5] = C64::new(0.0, 0.0);
    let scale = total.max_abs().max(kabs / (4.0 * PI));
    if !(err <= ctl.tol * scale) || !total.0.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        return Err(Error::NonConvergence(format!(
            "lattice sum extrapolation stalled: error {err:.3e} vs scale {scale:.3e} (q={q:?}, k={k})"
        )));
    }
    Ok(total)
}

/// Σ_{l≠0} cos(q·r_l) (G − K⁺)(r_l, k): the counter-rotating correction,
/// summed directly to `ctl.rwa_radius` with a continuum estimate of the
/// leading r⁻⁴ tail beyond it.
pub fn counter_rotating_sum(q: [f64; 2], k: f64, d: f64, ctl: &SumControls) -> Result<[f64; 6]> {
    if !(k > 0.0) {
        return Err(invalid(
            "counter-rotating sum needs a positive real wavenumber",
        ));
    }
    let q = reduce_to_zone(q, d);
    let rc = ctl.rwa_radius * d;
    let nmax = (rc / d).floor() as i32;
    // Sites with i > 0, or i = 0 and j > 0; the r → −r partner doubles each term.
    let rows: Vec<[f64; 6]> = crate::par::map_indexed((nmax + 1) as usize, |ii| {
        let i = ii as i32;
        let mut acc = [0.0; 6];
        let jlo = if i == 0 { 1 } else { -nmax };
        for j in jlo..=nmax {
            let x = i as f64 * d;
            let y = j as f64 * d;
            let rn = (x * x + y * y).sqrt();
            if rn > rc {
                continue;
            }
            let c = counter_rotating_unchecked([x, y, 0.0], rn, k);
            let w = 2.0 * (q[0] * x + q[1] * y).cos();
            for (a, ci) in acc.iter_mut().zip(c) {
                *a += w * ci;
            }
        }
        acc
    });
    let mut sum = [0.0; 6];
    for r in rows {
        for (s, v) in sum.iter_mut().zip(r) {
            *s += v;
        }
    }
    // Leading tail (1/(π² k³ r⁴)) diag(1 − 2cos²φ, 1 − 2sin²φ, 1), xy = −2 sinφ cosφ.
    let tail = leading_tail(q, rc, d);
    let c = 1.0 / (PI * PI * k.powi(3));
    for (s, t) in sum.iter_mut().zip(tail) {
        *s += c * t;
    }
    Ok(sum)
}

fn leading_tail(q: [f64; 2], rc: f64, d: f64) -> [f64; 6] {
    const NPHI: usize = 256;
    let mut out = [0.0; 6];
    for p in 0..NPHI {
        let phi = TAU * p as f64 / NPHI as f64;
        let (s, c) = phi.sin_cos();
        let a = (q[0] * c + q[1] * s).abs();
        // ∫_{rc}^∞ cos(a r) r⁻³ dr = cos(a rc)/(2rc²) − a sin(a rc)/(2rc) + a² Ci(a rc)/2.
        let x = a * rc;
        let radial = if x < 1e-12 {
            1.0 / (2.0 * rc * rc)
        } else {
            let (sx, cx) = x.sin_cos();
            cx / (2.0 * rc * rc) - a * sx / (2.0 * rc)
                + 0.5 * a * a * crate::greens::cos_integral(x)
        };
        let w = radial * TAU / NPHI as f64 / (d * d);
        out[0] += w * (1.0 - 2.0 * c * c);
        out[1] += w * (1.0 - 2.0 * s * s);
        out[2] += w;
        out[3] += w * (-2.0 * s * c);
    }
    out
}

/// Reference Bloch sum by direct summation over |r_l| ≤ `radius` (units of d).
/// Only meaningful when Im k makes the terms decay; used to cross-check
/// [`bloch_sum`].
pub fn bloch_sum_direct(q: [f64; 2], k: C64, d: f64, radius: f64, rwa: bool) -> Sym3 {
    let nmax = radius.floor() as i32;
    let rows: Vec<Sym3> = crate::par::map_indexed((2 * nmax + 1) as usize, |ii| {
        let i = ii as i32 - nmax;
        let mut acc = Sym3::zero();
        for j in -nmax..=nmax {
            if i == 0 && j == 0 {
                continue;
            }
            let x = i as f64 * d;
            let y = j as f64 * d;
            let rn = (x * x + y * y).sqrt();
            if rn > radius * d {
                continue;
            }
            let g = if rwa && k.im == 0.0 {
                kernel_unchecked([x, y, 0.0], rn, k.re, true)
            } else {
                green_unchecked([x, y, 0.0], rn, k)
            };
            let ph = (-I * (q[0] * x + q[1] * y)).exp();
            acc = acc.add(&g.scale(ph));
        }
        acc
    });
    rows.iter().fold(Sym3::zero(), |a, r| a.add(r))
}

/// Closed-form Im of the full Bloch kernel Σ_l e^{−iq·r_l} G (self term included):
///
/// Im 𝒢_mn = −(1/(4d²)) Σ_{g radiant} Σ_{s=±} (δ_mn − K_m K_n / k²) / k_z,
/// K = (q + g, s k_z). Orders within the critical band are regularized with
/// k_z → √(k² − |q+g|² + 2iηk). `filter` restricts the sum to listed orders.
pub fn im_kernel_closed(
    q: [f64; 2],
    k: f64,
    d: f64,
    eta: f64,
    filter: Option<&[Order]>,
) -> [f64; 6] {
    let b = TAU / d;
    // Orders are labelled relative to the unreduced q.
    let mmax = ((k + q[0].abs().max(q[1].abs())) / b).ceil() as i32 + 1;
    let band = 1e-9 * k;
    let mut out = [0.0; 6];
    for m in -mmax..=mmax {
        for n in -mmax..=mmax {
            if let Some(f) = filter
                && !f.contains(&Order::new(m, n))
            {
                continue;
            }
            let kx = q[0] + b * m as f64;
            let ky = q[1] + b * n as f64;
            let kappa2 = kx * kx + ky * ky;
            let kappa = kappa2.sqrt();
            let w = if (k - kappa).abs() <= band {
                let kz = (C64::new(k * k - kappa2, 2.0 * eta.max(1e-12 * k) * k)).sqrt();
                (1.0 / kz).re
            } else if kappa < k {
                1.0 / (k * k - kappa2).sqrt()
            } else {
                continue;
            };
            let k2 = k * k;
            let c = -w / (2.0 * d * d);
            out[0] += c * (1.0 - kx * kx / k2);
            out[1] += c * (1.0 - ky * ky / k2);
            out[2] += c * (kappa2 / k2);
            out[3] += c * (-kx * ky / k2);
        }
    }
    out
}

/// Full Bloch kernel 𝒢(q, k) = Re[Σ_{l≠0} e^{−iq·r_l} K(r_l, k)] + i Im(closed form),
/// with K the full or rotating-wave kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochKernel {
    /// Real part of the l ≠ 0 lattice sum.
    pub re: [f64; 6],
    /// Imaginary part from the radiant orders.
    pub im: [f64; 6],
}

impl BlochKernel {
    pub fn to_sym(&self) -> Sym3 {
        let mut s = Sym3::zero();
        for c in 0..6 {
            s.0[c] = C64::new(self.re[c], self.im[c]);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
struct CacheKey {
    q: [u64; 2],
    k: u64,
    d: u64,
    rwa: bool,
}

/// Shared cache of real parts of Bloch sums, keyed on (q, k, d, rwa).
///
/// Readers take a shared lock; insertions take the write lock once per new
/// entry, so concurrent sweeps never duplicate an entry's storage.
#[derive(Default)]
pub struct SelfEnergyCache {
    map: RwLock<HashMap<CacheKey, [f64; 6]>>,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    version: u32,
    entries: Vec<(CacheKey, [f64; 6])>,
}

const CACHE_FILE: &str = "bloch-sums-v1.json";

impl SelfEnergyCache {
    pub fn global() -> &'static SelfEnergyCache {
        static CACHE: OnceLock<SelfEnergyCache> = OnceLock::new();
        CACHE.get_or_init(SelfEnergyCache::default)
    }

    pub fn len(&self) -> usize {
        self.map.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        if let Ok(mut m) = self.map.write() {
            m.clear();
        }
    }

    /// Real part of Σ_{l≠0} e^{−iq·r_l} K(r_l, k), computed on first use.
    pub fn real_part(
        &self,
        q: [f64; 2],
        k: f64,
        d: f64,
        rwa: bool,
        ctl: &SumControls,
    ) -> Result<[f64; 6]> {
        let qr = reduce_to_zone(q, d);
        let key = CacheKey {
            q: qr.map(f64::to_bits),
            k: k.to_bits(),
            d: d.to_bits(),
            rwa,
        };
        if let Some(v) = self.map.read().ok().and_then(|m| m.get(&key).copied()) {
            return Ok(v);
        }
        let s = bloch_sum(qr, C64::new(k, 0.0), d, 0.0, ctl)?;
        let mut re = s.0.map(|c| c.re);
        if rwa {
            let c = counter_rotating_sum(qr, k, d, ctl)?;
            for (r, ci) in re.iter_mut().zip(c) {
                *r -= ci;
            }
        }
        if let Ok(mut m) = self.map.write() {
            m.entry(key).or_insert(re);
        }
        Ok(re)
    }

    /// Loads entries persisted by [`SelfEnergyCache::save`], if present.
    pub fn load(&self, dir: &Path) -> std::io::Result<usize> {
        let path = dir.join(CACHE_FILE);
        if !path.exists() {
            return Ok(0);
        }
        let text = std::fs::read_to_string(path)?;
        let file: CacheFile = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        if file.version != 1 {
            return Ok(0);
        }
        let n = file.entries.len();
        if let Ok(mut m) = self.map.write() {
            for (k, v) in file.entries {
                m.entry(k).or_insert(v);
            }
        }
        Ok(n)
    }

    /// Writes all entries to `dir`, sorted for a stable file layout.
    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut entries: Vec<(CacheKey, [f64; 6])> = self
            .map
            .read()
            .map(|m| m.iter().map(|(k, v)| (*k, *v)).collect())
            .unwrap_or_default();
        entries.sort_by_key(|a| (a.0.q, a.0.k, a.0.d, a.0.rwa));
        let text = serde_json::to_string(&CacheFile {
            version: 1,
            entries,
        })
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        let tmp = dir.join(format!("{CACHE_FILE}.tmp"));
        std::fs::write(&tmp, text)?;
        std::fs::rename(tmp, dir.join(CACHE_FILE))
    }
}

/// Bloch kernel at (q, k): cached real part plus closed-form imaginary part.
pub fn bloch_kernel(
    q: [f64; 2],
    k: f64,
    d: f64,
    eta: f64,
    rwa: bool,
    ctl: &SumControls,
) -> Result<BlochKernel> {
    let re = SelfEnergyCache::global().real_part(q, k, d, rwa, ctl)?;
    let im = im_kernel_closed(q, k, d, eta, None);
    Ok(BlochKernel { re, im })
}
