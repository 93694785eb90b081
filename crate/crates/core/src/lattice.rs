//! Square-lattice geometry, incident plane waves and diffraction orders.
//!
//! Public frequencies and wavevectors are in units of 2π/d and positions in
//! units of d. [`Lattice::unit`] converts to absolute wavenumbers.

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, invalid};
use crate::quad::bisect;

/// Square lattice in the z = 0 plane with spacing `d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub spacing: f64,
}

impl Default for Lattice {
    fn default() -> Self {
        Self { spacing: 1.0 }
    }
}

impl Lattice {
    pub fn new(spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(invalid(format!(
                "lattice spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self { spacing })
    }

    /// Absolute wavenumber of one unit of 2π/d.
    pub fn unit(&self) -> f64 {
        TAU / self.spacing
    }
}

/// Reciprocal lattice vector g = (m, n) in units of 2π/d.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Order {
    pub m: i32,
    pub n: i32,
}

impl Order {
    pub const ZERO: Order = Order { m: 0, n: 0 };

    pub fn new(m: i32, n: i32) -> Self {
        Self { m, n }
    }

    pub fn vec(&self) -> [f64; 2] {
        [self.m as f64, self.n as f64]
    }

    /// All orders with |m|, |n| ≤ radius, in row-major order.
    pub fn within(radius: i32) -> impl Iterator<Item = Order> {
        (-radius..=radius).flat_map(move |m| (-radius..=radius).map(move |n| Order { m, n }))
    }
}

impl std::fmt::Display for Order {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.m, self.n)
    }
}

/// Ground-state branch a photon couples through.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    A,
    B,
}

/// Sign s of the out-of-plane wavevector component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sense {
    Up,
    Down,
}

impl Sense {
    pub fn sign(self) -> f64 {
        match self {
            Sense::Up => 1.0,
            Sense::Down => -1.0,
        }
    }

    pub fn of(x: f64) -> Self {
        if x >= 0.0 { Sense::Up } else { Sense::Down }
    }
}

/// Outgoing mode label (g, s, branch).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeIndex {
    pub order: Order,
    pub sense: Sense,
    pub branch: Branch,
}

/// Direction of incidence: polar angle from +z and azimuth in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Incidence {
    pub theta: f64,
    pub phi: f64,
}

impl Incidence {
    pub fn normal() -> Self {
        Self::default()
    }

    pub fn from_degrees(theta: f64, phi: f64) -> Self {
        Self {
            theta: theta.to_radians(),
            phi: phi.to_radians(),
        }
    }

    /// In-plane wavevector at frequency `omega`.
    pub fn k_par(&self, omega: f64) -> [f64; 2] {
        let s = omega * self.theta.sin();
        [s * self.phi.cos(), s * self.phi.sin()]
    }

    pub fn k_perp(&self, omega: f64) -> f64 {
        omega * self.theta.cos()
    }

    fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite() && self.phi.is_finite()) || self.theta.abs() >= TAU / 4.0 {
            return Err(invalid(format!(
                "incidence angle must satisfy |theta| < 90 degrees, got {} rad",
                self.theta
            )));
        }
        Ok(())
    }
}

/// Polarization choice for an incident or outgoing photon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    /// Parallel to the array: ẑ × k̂∥.
    S,
    /// In the plane of incidence: k̂ × s.
    P,
    /// Explicit complex unit vector, transverse to k.
    Custom([C64; 3]),
}

/// Incident photon mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneWave {
    pub omega: f64,
    pub k_par: [f64; 2],
    pub k_perp: f64,
    pub polarization: [C64; 3],
}

/// s and p unit vectors for a wave with in-plane part `k_par` and out-of-plane
/// part `k_perp`. For vanishing `k_par` the azimuth `phi` fixes the s direction.
pub fn sp_basis(k_par: [f64; 2], k_perp: f64, phi: f64) -> ([f64; 3], [f64; 3]) {
    let kp = (k_par[0] * k_par[0] + k_par[1] * k_par[1]).sqrt();
    let (ux, uy) = if kp > 1e-14 * (kp + k_perp.abs()) {
        (k_par[0] / kp, k_par[1] / kp)
    } else {
        (phi.cos(), phi.sin())
    };
    let s = [-uy, ux, 0.0];
    let norm = (kp * kp + k_perp * k_perp).sqrt();
    let k = [k_par[0] / norm, k_par[1] / norm, k_perp / norm];
    let p = [
        k[1] * s[2] - k[2] * s[1],
        k[2] * s[0] - k[0] * s[2],
        k[0] * s[1] - k[1] * s[0],
    ];
    (s, p)
}

fn to_c(v: [f64; 3]) -> [C64; 3] {
    [
        C64::new(v[0], 0.0),
        C64::new(v[1], 0.0),
        C64::new(v[2], 0.0),
    ]
}

/// Builds the incident plane wave at frequency `omega` (units 2π/d).
pub fn plane_wave(omega: f64, incidence: Incidence, pol: Polarization) -> Result<PlaneWave> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(invalid(format!("frequency must be positive, got {omega}")));
    }
    incidence.validate()?;
    let k_par = incidence.k_par(omega);
    let k_perp = incidence.k_perp(omega);
    let (s, p) = sp_basis(k_par, k_perp, incidence.phi);
    let polarization = match pol {
        Polarization::S => to_c(s),
        Polarization::P => to_c(p),
        Polarization::Custom(e) => {
            let norm: f64 = e.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let kdot = e[0] * k_par[0] + e[1] * k_par[1] + e[2] * k_perp;
            if (norm - 1.0).abs() > 1e-9 || kdot.norm() > 1e-9 * omega {
                return Err(invalid(
                    "custom polarization must be a unit vector transverse to k",
                ));
            }
            e
        }
    };
    Ok(PlaneWave {
        omega,
        k_par,
        k_perp,
        polarization,
    })
}

/// Classification of an outgoing diffraction order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Radiant,
    Evanescent,
    Critical,
}

/// In-plane wavevector of order `g` on a branch with grating offset `grating`.
pub fn shifted(k_par: [f64; 2], order: Order, grating: [f64; 2]) -> [f64; 2] {
    let g = order.vec();
    [k_par[0] + g[0] + grating[0], k_par[1] + g[1] + grating[1]]
}

/// Classifies order `g` at outgoing frequency `omega_out` and returns k⊥ with
/// the convention that evanescent values are `+i|k⊥|`. Orders with
/// |ω_out − |k∥'|| ≤ `tol` (units 2π/d) are critical.
pub fn mode_classify(
    k_par: [f64; 2],
    order: Order,
    grating: [f64; 2],
    omega_out: f64,
    tol: f64,
) -> (ModeKind, C64) {
    let q = shifted(k_par, order, grating);
    let qn = (q[0] * q[0] + q[1] * q[1]).sqrt();
    let kz2 = (omega_out - qn) * (omega_out + qn);
    let kz = if kz2 >= 0.0 {
        C64::new(kz2.sqrt(), 0.0)
    } else {
        C64::new(0.0, (-kz2).sqrt())
    };
    let kind = if (omega_out - qn).abs() <= tol {
        ModeKind::Critical
    } else if kz2 > 0.0 {
        ModeKind::Radiant
    } else {
        ModeKind::Evanescent
    };
    (kind, kz)
}

/// A frequency at which an order of the b branch grazes the array plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub omega: f64,
    pub order: Order,
}

/// Finds every (ω, g) in `range` with ω + Δω = |k∥(ω) + g + k_L|.
///
/// Each order is scanned on 10⁴ points and sign changes are refined by
/// bisection to a relative tolerance of 1e-12. Results are sorted by ω, then g.
pub fn find_critical_frequencies(
    incidence: Incidence,
    delta_omega: f64,
    grating: [f64; 2],
    range: (f64, f64),
    g_radius: i32,
) -> Result<Vec<CriticalPoint>> {
    incidence.validate()?;
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(invalid(format!(
            "frequency range must satisfy 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    const SCAN: usize = 10_000;
    let mut out = Vec::new();
    for order in Order::within(g_radius) {
        let f = |w: f64| {
            let q = shifted(incidence.k_par(w), order, grating);
            w + delta_omega - (q[0] * q[0] + q[1] * q[1]).sqrt()
        };
        let mut w0 = lo;
        let mut f0 = f(w0);
        for i in 1..=SCAN {
            let w1 = lo + (hi - lo) * i as f64 / SCAN as f64;
            let f1 = f(w1);
            if f0 == 0.0 {
                out.push(CriticalPoint { omega: w0, order });
            } else if (f0 < 0.0) != (f1 < 0.0) && f1 != 0.0 {
                out.push(CriticalPoint {
                    omega: bisect(f, w0, w1, 1e-12),
                    order,
                });
            }
            w0 = w1;
            f0 = f1;
        }
        if f0 == 0.0 {
            out.push(CriticalPoint { omega: w0, order });
        }
    }
    out.sort_by(|a, b| a.omega.total_cmp(&b.omega).then(a.order.cmp(&b.order)));
    Ok(out)
}

/// Largest frequency below which only the g = 0 order of the a branch is
/// radiant for the given direction of incidence.
pub fn cooperativity_threshold(incidence: Incidence) -> Result<f64> {
    incidence.validate()?;
    let s = incidence.theta.sin().abs();
    let u = [incidence.phi.cos(), incidence.phi.sin()];
    let radius = (2.0 / (1.0 - s)).ceil() as i32 + 1;
    let mut best = f64::INFINITY;
    for order in Order::within(radius) {
        if order == Order::ZERO {
            continue;
        }
        // (1 - s²) w² - 2 s (u·g) w - |g|² = 0, positive root.
        let g = order.vec();
        let ug = u[0] * g[0] + u[1] * g[1];
        let g2 = g[0] * g[0] + g[1] * g[1];
        let a = 1.0 - s * s;
        let b = s * ug;
        let root = g2 / ((b * b + a * g2).sqrt() - b);
        if root > 0.0 && root < best {
            best = root;
        }
    }
    Ok(best)
}
