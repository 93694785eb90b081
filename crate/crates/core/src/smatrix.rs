//! Scattering of a single photon off the infinite driven array.
//!
//! An incoming a-branch photon (frequency ω, in-plane wavevector k∥) drives the
//! collective dark-state transition. The 3×3 propagator
//! M = ρ𝕀 − ρP(k∥, a), with ρP = |A|² ρD_a + |B|² ρD_b built from Bloch
//! kernels of the two branches, fixes every outgoing amplitude: a photons at
//! ω into orders k∥ + g and b photons at ω + Δω into orders k∥ + g + k_L.

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, invalid};
use crate::greens::{Mat3, Sym3};
use crate::lattice::{
    Branch, Incidence, Lattice, ModeIndex, ModeKind, Order, Polarization, Sense, mode_classify,
    plane_wave, shifted, sp_basis,
};
use crate::selfenergy::{SumControls, bloch_kernel, im_kernel_closed};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Condition-number limit above which the propagator is reported singular.
pub const COND_LIMIT: f64 = 1e12;

/// Default window |ω − |k∥'|| < tol·(2π/d) within which an order counts as critical.
pub const CRITICAL_TOL: f64 = 1e-6;

/// Dark-state mixing amplitudes A and B with |A|² + |B|² = 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mixing {
    pub a: C64,
    pub b: C64,
}

impl Mixing {
    pub fn new(a: C64, b: C64) -> Result<Self> {
        let n = a.norm_sqr() + b.norm_sqr();
        if (n - 1.0).abs() > 1e-12 {
            return Err(invalid(format!(
                "mixing amplitudes must satisfy |A|^2 + |B|^2 = 1, got {n}"
            )));
        }
        Ok(Self { a, b })
    }

    /// Real amplitudes with |A| = `a_abs` and B = √(1 − |A|²).
    pub fn from_magnitude(a_abs: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a_abs) {
            return Err(invalid(format!("|A| must lie in [0, 1], got {a_abs}")));
        }
        Ok(Self {
            a: C64::new(a_abs, 0.0),
            b: C64::new((1.0 - a_abs * a_abs).max(0.0).sqrt(), 0.0),
        })
    }

    pub fn a_sq(&self) -> f64 {
        self.a.norm_sqr()
    }

    pub fn b_sq(&self) -> f64 {
        self.b.norm_sqr()
    }
}

/// Complete parameter set of an infinite-array scattering problem.
/// Frequencies, wavevectors, detuning and η are in units of 2π/d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterScenario {
    pub lattice: Lattice,
    /// Incoming photon frequency ω_k.
    pub omega: f64,
    /// Transduction energy Δω = ω_g1 − ω_g2.
    pub delta_omega: f64,
    pub incidence: Incidence,
    pub polarization: Polarization,
    pub mixing: Mixing,
    /// Transition dipoles ℘_a, ℘_b (absolute units with ε₀ = ħ = c = 1).
    pub dipole_a: f64,
    pub dipole_b: f64,
    /// Detuning δ = Re ρ.
    pub detuning: f64,
    /// η = Im ρ > 0.
    pub eta: f64,
    /// In-plane grating vector k_L,ba.
    pub grating: [f64; 2],
    /// Use K⁺ instead of G in the lattice sums.
    pub rwa: bool,
    /// Drop Re(ρ𝕀 − ρP) to obtain the upper bound on the efficiency.
    pub zero_real_part: bool,
    /// Width of the critical window in units of 2π/d.
    pub critical_tol: f64,
    pub controls: SumControls,
}

impl Default for ScatterScenario {
    fn default() -> Self {
        Self {
            lattice: Lattice::default(),
            omega: 0.2,
            delta_omega: 0.0,
            incidence: Incidence::normal(),
            polarization: Polarization::S,
            mixing: Mixing {
                a: C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                b: C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            },
            dipole_a: 1.0,
            dipole_b: 1.0,
            detuning: 0.0,
            eta: 1e-9,
            grating: [0.0, 0.0],
            rwa: false,
            zero_real_part: false,
            critical_tol: CRITICAL_TOL,
            controls: SumControls::default(),
        }
    }
}

impl ScatterScenario {
    pub fn validate(&self) -> Result<()> {
        Lattice::new(self.lattice.spacing)?;
        Mixing::new(self.mixing.a, self.mixing.b)?;
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(invalid(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        if !(self.omega + self.delta_omega > 0.0) {
            return Err(invalid(
                "outgoing frequency omega + delta_omega must be positive",
            ));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.dipole_a > 0.0 && self.dipole_b > 0.0) {
            return Err(invalid("transition dipoles must be positive"));
        }
        if !(self.critical_tol >= 0.0 && self.critical_tol < 0.1) {
            return Err(invalid(format!(
                "critical_tol must lie in [0, 0.1), got {}",
                self.critical_tol
            )));
        }
        if !self.detuning.is_finite() || !self.grating.iter().all(|g| g.is_finite()) {
            return Err(invalid("detuning and grating must be finite"));
        }
        Ok(())
    }

    pub fn with_mixing(&self, a_abs: f64) -> Result<Self> {
        Ok(Self {
            mixing: Mixing::from_magnitude(a_abs)?,
            ..self.clone()
        })
    }
}

/// Outgoing polarization label relative to the outgoing wavevector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutPolarization {
    S,
    P,
}

/// Amplitude into one outgoing mode (g, s, branch, polarization).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeAmplitude {
    pub mode: ModeIndex,
    pub polarization: OutPolarization,
    /// Outgoing wavevector in units of 2π/d.
    pub k_out: [f64; 3],
    /// Scattering-operator amplitude −(i/d²) A* σ g_in g_out ω_out/k'⊥ M⁻¹ (scattered part only).
    pub amplitude: C64,
    /// Amplitude normalized to photon flux, |t|² is a probability.
    pub flux_amplitude: C64,
    /// |t|².
    pub probability: f64,
}

/// Result of a single scattering calculation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterResult {
    pub modes: Vec<ModeAmplitude>,
    pub efficiency_total_b: f64,
    pub efficiency_survive_a: f64,
    /// Orders within the critical window, reported as warnings.
    pub critical: Vec<ModeIndex>,
    /// (ρ𝕀 − ρP)⁻¹ in row-major order.
    pub inverse_propagator: [[C64; 3]; 3],
}

/// Mixing-independent pieces of a scenario: Bloch kernels of both branches
/// and the incident mode, all in absolute units.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub scenario: ScatterScenario,
    d: f64,
    k_a: f64,
    k_b: f64,
    q_a: [f64; 2],
    q_b: [f64; 2],
    kz_in: f64,
    eps: [C64; 3],
    /// k_σ² ℘_σ² 𝒢_σ, i.e. ρD per unit branch weight.
    x_a: Sym3,
    x_b: Sym3,
    rho: C64,
}

fn sym_im(s: &Sym3) -> [f64; 6] {
    s.0.map(|c| c.im)
}

fn quad_form_real(m: &[f64; 6], v: &[C64; 3]) -> f64 {
    // v† m v for real symmetric m.
    let s = Sym3(m.map(|x| C64::new(x, 0.0)));
    let mv = s.apply(v);
    (v[0].conj() * mv[0] + v[1].conj() * mv[1] + v[2].conj() * mv[2]).re
}

impl Prepared {
    pub fn new(scn: &ScatterScenario) -> Result<Self> {
        scn.validate()?;
        let d = scn.lattice.spacing;
        let u = TAU / d;
        let pw = plane_wave(scn.omega, scn.incidence, scn.polarization)?;
        let k_a = scn.omega * u;
        let k_b = (scn.omega + scn.delta_omega) * u;
        let q_a = pw.k_par.map(|x| x * u);
        let q_b = shifted(pw.k_par, Order::ZERO, scn.grating).map(|x| x * u);
        let eta = scn.eta * u;
        let ka = bloch_kernel(q_a, k_a, d, eta, scn.rwa, &scn.controls)?;
        let kb = bloch_kernel(q_b, k_b, d, eta, scn.rwa, &scn.controls)?;
        let x_a = ka
            .to_sym()
            .scale(C64::new(k_a * k_a * scn.dipole_a * scn.dipole_a, 0.0));
        let x_b = kb
            .to_sym()
            .scale(C64::new(k_b * k_b * scn.dipole_b * scn.dipole_b, 0.0));
        Ok(Self {
            scenario: scn.clone(),
            d,
            k_a,
            k_b,
            q_a,
            q_b,
            kz_in: pw.k_perp * u,
            eps: pw.polarization,
            x_a,
            x_b,
            rho: C64::new(scn.detuning * u, eta),
        })
    }

    /// ρP(k∥, a) for the given mixing.
    pub fn rho_p(&self, mix: &Mixing) -> Sym3 {
        self.x_a
            .scale(C64::new(mix.a_sq(), 0.0))
            .add(&self.x_b.scale(C64::new(mix.b_sq(), 0.0)))
    }

    /// Propagator M = ρ𝕀 − ρP, or i Im M when the real part is dropped.
    pub fn propagator(&self, mix: &Mixing) -> Mat3 {
        let mut m = -self.rho_p(mix).to_mat();
        for i in 0..3 {
            m[(i, i)] += self.rho;
        }
        if self.scenario.zero_real_part {
            m = m.map(|c| C64::new(0.0, c.im));
        }
        m
    }

    fn solve(&self, mix: &Mixing) -> Result<(Mat3, [C64; 3])> {
        let m = self.propagator(mix);
        let inv = m.try_inverse().ok_or(Error::SingularSystem {
            cond: f64::INFINITY,
            limit: COND_LIMIT,
        })?;
        let cond = m.norm() * inv.norm();
        if !(cond < COND_LIMIT) {
            return Err(Error::SingularSystem {
                cond,
                limit: COND_LIMIT,
            });
        }
        let e = &self.eps;
        let v = [0, 1, 2].map(|i| inv[(i, 0)] * e[0] + inv[(i, 1)] * e[1] + inv[(i, 2)] * e[2]);
        Ok((inv, v))
    }

    fn flux_prefactor(&self, mix: &Mixing) -> f64 {
        let pa = self.scenario.dipole_a;
        self.k_a * self.k_a * pa * pa * mix.a_sq() / (self.d * self.d * self.kz_in)
    }

    /// Im ρD(k∥ + k_L, b) restricted to `filter` (all radiant orders when `None`).
    fn im_rho_d_b(&self, mix: &Mixing, filter: Option<&[Order]>) -> [f64; 6] {
        let im = match filter {
            None => sym_im(&self.x_b),
            Some(f) => {
                let pb = self.scenario.dipole_b;
                let eta = self.rho.im;
                im_kernel_closed(self.q_b, self.k_b, self.d, eta, Some(f))
                    .map(|v| v * self.k_b * self.k_b * pb * pb)
            }
        };
        im.map(|v| v * mix.b_sq())
    }

    /// Probability of leaving in any b mode (or the listed b orders).
    pub fn efficiency(&self, mix: &Mixing, filter: Option<&[Order]>) -> Result<f64> {
        if mix.a_sq() == 0.0 || mix.b_sq() == 0.0 {
            return Ok(0.0);
        }
        let (_, v) = self.solve(mix)?;
        let imd = self.im_rho_d_b(mix, filter);
        Ok(-self.flux_prefactor(mix) * quad_form_real(&imd, &v))
    }

    /// Probability of leaving in any a mode, including interference with the
    /// unscattered photon.
    pub fn survival(&self, mix: &Mixing) -> Result<f64> {
        if mix.a_sq() == 0.0 {
            return Ok(1.0);
        }
        let (inv, v) = self.solve(mix)?;
        let e = &self.eps;
        let mut ext = C64::new(0.0, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                ext += e[i].conj() * inv[(i, j)] * e[j];
            }
        }
        let ima = sym_im(&self.x_a).map(|x| x * mix.a_sq());
        Ok(1.0 + self.flux_prefactor(mix) * (ext.im - quad_form_real(&ima, &v)))
    }

    /// Orders of either branch within the critical band.
    pub fn critical_orders(&self) -> Vec<ModeIndex> {
        let u = TAU / self.d;
        let mut out = Vec::new();
        for (branch, q, k) in [
            (Branch::A, self.q_a, self.k_a),
            (Branch::B, self.q_b, self.k_b),
        ] {
            let r = ((k + q[0].abs().max(q[1].abs())) / u).ceil() as i32 + 1;
            for order in Order::within(r) {
                let (kind, _) = mode_classify(
                    q.map(|x| x / u),
                    order,
                    [0.0, 0.0],
                    k / u,
                    self.scenario.critical_tol,
                );
                if kind == ModeKind::Critical {
                    for sense in [Sense::Up, Sense::Down] {
                        out.push(ModeIndex {
                            order,
                            sense,
                            branch,
                        });
                    }
                }
            }
        }
        out
    }

    /// Flux-normalized amplitudes into every radiant mode of both branches.
    pub fn modes(&self, mix: &Mixing) -> Result<Vec<ModeAmplitude>> {
        let (_, v) = self.solve(mix)?;
        let u = TAU / self.d;
        let pa = self.scenario.dipole_a;
        let mut out = Vec::new();
        for branch in [Branch::A, Branch::B] {
            let (q, k, pol_w, sigma) = match branch {
                Branch::A => (self.q_a, self.k_a, pa, mix.a),
                Branch::B => (self.q_b, self.k_b, self.scenario.dipole_b, mix.b),
            };
            let weight = mix.a.conj() * sigma;
            let r = ((k + q[0].abs().max(q[1].abs())) / u).ceil() as i32 + 1;
            for order in Order::within(r) {
                // Critical orders with real k⊥ still carry flux and are kept.
                let (_, kz) = mode_classify(q.map(|x| x / u), order, [0.0, 0.0], k / u, 0.0);
                if !(kz.im == 0.0 && kz.re > 0.0) {
                    continue;
                }
                let kz = kz.re * u;
                let qo = [q[0] + order.m as f64 * u, q[1] + order.n as f64 * u];
                for sense in [Sense::Up, Sense::Down] {
                    let kzs = sense.sign() * kz;
                    let (s_vec, p_vec) = sp_basis(qo, kzs, self.scenario.incidence.phi);
                    for (label, e) in [(OutPolarization::S, s_vec), (OutPolarization::P, p_vec)] {
                        let proj = e[0] * v[0] + e[1] * v[1] + e[2] * v[2];
                        let t = -I * pa * pol_w * weight * k * self.k_a
                            / (2.0 * self.d * self.d * (kz * self.kz_in).sqrt())
                            * proj;
                        let amp = t * ((k * self.kz_in) / (self.k_a * kz)).sqrt();
                        out.push(ModeAmplitude {
                            mode: ModeIndex {
                                order,
                                sense,
                                branch,
                            },
                            polarization: label,
                            k_out: [qo[0] / u, qo[1] / u, kzs / u],
                            amplitude: amp,
                            flux_amplitude: t,
                            probability: t.norm_sqr(),
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Survival probability assembled mode by mode, adding the unscattered
    /// photon to the forward a mode.
    pub fn survival_from_modes(&self, modes: &[ModeAmplitude]) -> f64 {
        let (s_in, p_in) = sp_basis(self.q_a, self.kz_in, self.scenario.incidence.phi);
        modes
            .iter()
            .filter(|m| m.mode.branch == Branch::A)
            .map(|m| {
                let mut t = m.flux_amplitude;
                if m.mode.order == Order::ZERO && m.mode.sense == Sense::Up {
                    let e = match m.polarization {
                        OutPolarization::S => s_in,
                        OutPolarization::P => p_in,
                    };
                    t += e[0] * self.eps[0] + e[1] * self.eps[1] + e[2] * self.eps[2];
                }
                t.norm_sqr()
            })
            .sum()
    }
}

/// Full scattering calculation for one scenario.
pub fn scatter(scn: &ScatterScenario) -> Result<ScatterResult> {
    let prep = Prepared::new(scn)?;
    let mix = scn.mixing;
    let critical = prep.critical_orders();
    let (inv, _) = prep.solve(&mix)?;
    for c in &critical {
        log::warn!(
            "order {} on branch {:?} is critical at omega = {}",
            c.mode_label(),
            c.branch,
            scn.omega
        );
    }
    Ok(ScatterResult {
        modes: prep.modes(&mix)?,
        efficiency_total_b: prep.efficiency(&mix, None)?,
        efficiency_survive_a: prep.survival(&mix)?,
        inverse_propagator: [0, 1, 2].map(|i| [0, 1, 2].map(|j| inv[(i, j)])),
        critical,
    })
}

impl ModeIndex {
    fn mode_label(&self) -> String {
        format!(
            "{}{}",
            self.order,
            if self.sense == Sense::Up { "+" } else { "-" }
        )
    }
}

/// Transduction probability into b modes, optionally restricted to orders in `filter`.
pub fn efficiency(scn: &ScatterScenario, filter: Option<&[Order]>) -> Result<f64> {
    Prepared::new(scn)?.efficiency(&scn.mixing, filter)
}

/// Best transduction efficiency over |A| ∈ [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub a_abs: f64,
    pub efficiency: f64,
}

/// Maximizes the efficiency over |A| with a 101-point scan refined by
/// golden-section search around the best grid point.
pub fn optimize_mixing(scn: &ScatterScenario) -> Result<Optimum> {
    let prep = Prepared::new(scn)?;
    optimize_prepared(&prep, None)
}

pub fn optimize_prepared(prep: &Prepared, filter: Option<&[Order]>) -> Result<Optimum> {
    let eval = |a: f64| -> Result<f64> { prep.efficiency(&Mixing::from_magnitude(a)?, filter) };
    let mut best = (0usize, f64::NEG_INFINITY);
    let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    for (i, a) in grid.iter().enumerate() {
        let e = eval(*a)?;
        if e > best.1 {
            best = (i, e);
        }
    }
    let lo = grid[best.0.saturating_sub(1)];
    let hi = grid[(best.0 + 1).min(100)];
    let mut failure = None;
    let (a, e) = crate::quad::golden_max(
        |a| match eval(a) {
            Ok(v) => v,
            Err(err) => {
                failure.get_or_insert(err);
                f64::NEG_INFINITY
            }
        },
        lo,
        hi,
        1e-9,
    );
    if let Some(err) = failure {
        return Err(err);
    }
    if e >= best.1 {
        Ok(Optimum {
            a_abs: a,
            efficiency: e,
        })
    } else {
        Ok(Optimum {
            a_abs: grid[best.0],
            efficiency: best.1,
        })
    }
}

/// Scenario parameter varied along a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Omega,
    DeltaOmega,
    /// |A|² (the mixing is then fixed by the sweep value).
    MixingSquared,
    Detuning,
    /// Polar angle of incidence in degrees.
    ThetaDeg,
}

/// Named set of b orders whose share of the efficiency is reported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeFilter {
    pub name: String,
    pub orders: Vec<Order>,
}

/// One row of an efficiency sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub a_abs: f64,
    pub efficiency: f64,
    pub survival: f64,
    pub filtered: Vec<f64>,
    pub error: Option<String>,
}

fn apply_parameter(base: &ScatterScenario, p: SweepParameter, v: f64) -> Result<ScatterScenario> {
    let mut s = base.clone();
    match p {
        SweepParameter::Omega => s.omega = v,
        SweepParameter::DeltaOmega => s.delta_omega = v,
        SweepParameter::MixingSquared => {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("|A|^2 must lie in [0, 1], got {v}")));
            }
            s.mixing = Mixing::from_magnitude(v.sqrt())?
        }
        SweepParameter::Detuning => s.detuning = v,
        SweepParameter::ThetaDeg => s.incidence.theta = v.to_radians(),
    }
    Ok(s)
}

/// Evaluates the efficiency over `values` of `param`, optionally at the
/// optimal |A| for every point. Rows come back in input order; a failing
/// point yields a row with `error` set and NaN values.
pub fn efficiency_sweep(
    base: &ScatterScenario,
    param: SweepParameter,
    values: &[f64],
    optimize: bool,
    filters: &[ModeFilter],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(invalid("sweep grid is empty"));
    }
    let optimize = optimize && param != SweepParameter::MixingSquared;
    let rows = crate::par::map_slice(values, |&v| {
        let run = || -> Result<SweepRow> {
            let scn = apply_parameter(base, param, v)?;
            let prep = Prepared::new(&scn)?;
            let mix = if optimize {
                Mixing::from_magnitude(optimize_prepared(&prep, None)?.a_abs)?
            } else {
                scn.mixing
            };
            let filtered = filters
                .iter()
                .map(|f| prep.efficiency(&mix, Some(&f.orders)))
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepRow {
                value: v,
                a_abs: mix.a.norm(),
                efficiency: prep.efficiency(&mix, None)?,
                survival: prep.survival(&mix)?,
                filtered,
                error: None,
            })
        };
        run().unwrap_or_else(|e| SweepRow {
            value: v,
            a_abs: f64::NAN,
            efficiency: f64::NAN,
            survival: f64::NAN,
            filtered: vec![f64::NAN; filters.len()],
            error: Some(e.to_string()),
        })
    });
    Ok(rows)
}
