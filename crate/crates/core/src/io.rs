//! Run configuration, figure presets and output formats.
//!
//! Configurations are strict JSON: unknown keys are errors and every error
//! carries the key path. Numbers in CSV files use 17 significant digits in
//! Rust's `{:.16e}` notation, `.` as decimal separator and LF line endings.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::analysis::{Component, Part, Window};
use crate::error::{Error, Result, invalid};
use crate::finite::{EmitterArray, FiniteOptions, GridSpec, Plane, Range1};
use crate::lattice::{Incidence, Lattice, Order, Polarization};
use crate::selfenergy::SumControls;
use crate::smatrix::{CRITICAL_TOL, Mixing, ModeFilter, ScatterScenario, SweepParameter};

/// Subcommands of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    EfficiencySweep,
    Modeweights,
    Criticality,
    Fieldmap,
    Fwhm,
    Spectrum,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::EfficiencySweep => "efficiency-sweep",
            Command::Modeweights => "modeweights",
            Command::Criticality => "criticality",
            Command::Fieldmap => "fieldmap",
            Command::Fwhm => "fwhm",
            Command::Spectrum => "spectrum",
        }
    }
}

fn default_d() -> f64 {
    1.0
}
fn default_omega() -> f64 {
    0.2
}
fn default_eta() -> f64 {
    1e-9
}
fn default_one() -> f64 {
    1.0
}
fn default_critical_tol() -> f64 {
    CRITICAL_TOL
}
fn default_g_cutoff() -> i32 {
    8
}
fn default_polarization() -> Polarization {
    Polarization::S
}
fn default_true() -> bool {
    true
}

/// Physical scenario. Frequencies in units of 2π/d, angles in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Lattice spacing d.
    #[serde(default = "default_d")]
    pub d: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Transduction energy Δω; exclusive with `omega_out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_omega: Option<f64>,
    /// Outgoing frequency ω + Δω; exclusive with `delta_omega`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_out: Option<f64>,
    #[serde(default)]
    pub detuning: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_one")]
    pub dipole_a: f64,
    #[serde(default = "default_one")]
    pub dipole_b: f64,
    /// Complex A as [re, im]; B = sqrt(1 − |A|²). Exclusive with `abs_a_sq`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix_a: Option<[f64; 2]>,
    /// |A|² with A, B real and non-negative. Exclusive with `mix_a`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_a_sq: Option<f64>,
    #[serde(default)]
    pub grating: [f64; 2],
    #[serde(default)]
    pub rwa: bool,
    #[serde(default)]
    pub zero_real_part: bool,
    #[serde(default)]
    pub theta_deg: f64,
    #[serde(default)]
    pub phi_deg: f64,
    #[serde(default = "default_polarization")]
    pub polarization: Polarization,
    #[serde(default = "default_critical_tol")]
    pub critical_tol: f64,
    /// Largest |m|, |n| enumerated by the criticality finder and norm filters.
    #[serde(default = "default_g_cutoff")]
    pub g_cutoff: i32,
    #[serde(default)]
    pub controls: SumControls,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty scenario uses defaults")
    }
}

impl ScenarioConfig {
    pub fn delta(&self) -> Result<f64> {
        match (self.delta_omega, self.omega_out) {
            (Some(_), Some(_)) => Err(invalid(
                "scenario: give either delta_omega or omega_out, not both",
            )),
            (Some(dw), None) => Ok(dw),
            (None, Some(w)) => Ok(w - self.omega),
            (None, None) => Ok(0.0),
        }
    }

    pub fn mixing(&self) -> Result<Mixing> {
        match (self.mix_a, self.abs_a_sq) {
            (Some(_), Some(_)) => Err(invalid("scenario: give either mix_a or abs_a_sq, not both")),
            (Some([re, im]), None) => {
                let a = C64::new(re, im);
                let a2 = a.norm_sqr();
                if !(a2 <= 1.0) {
                    return Err(invalid(format!("scenario.mix_a: |A|^2 = {a2} exceeds 1")));
                }
                Mixing::new(a, C64::new((1.0 - a2).sqrt(), 0.0))
            }
            (None, Some(a2)) => {
                if !(0.0..=1.0).contains(&a2) {
                    return Err(invalid(format!(
                        "scenario.abs_a_sq: |A|^2 = {a2} must lie in [0, 1]"
                    )));
                }
                Mixing::from_magnitude(a2.sqrt())
            }
            (None, None) => Mixing::from_magnitude(std::f64::consts::FRAC_1_SQRT_2),
        }
    }

    /// Fully resolved scenario.
    pub fn to_scenario(&self) -> Result<ScatterScenario> {
        if !(1..=64).contains(&self.g_cutoff) {
            return Err(invalid(format!(
                "scenario.g_cutoff must lie in [1, 64], got {}",
                self.g_cutoff
            )));
        }
        let scn = ScatterScenario {
            lattice: Lattice::new(self.d)?,
            omega: self.omega,
            delta_omega: self.delta()?,
            incidence: Incidence::from_degrees(self.theta_deg, self.phi_deg),
            polarization: self.polarization,
            mixing: self.mixing()?,
            dipole_a: self.dipole_a,
            dipole_b: self.dipole_b,
            detuning: self.detuning,
            eta: self.eta,
            grating: self.grating,
            rwa: self.rwa,
            zero_real_part: self.zero_real_part,
            critical_tol: self.critical_tol,
            controls: self.controls,
        };
        scn.validate()?;
        Ok(scn)
    }
}

/// Per-series overrides of the base scenario.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_out: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_a_sq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarization: Option<Polarization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_real_part: Option<bool>,
}

impl SeriesConfig {
    pub fn apply(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut s = base.clone();
        if let Some(v) = self.omega {
            s.omega = v;
        }
        if self.delta_omega.is_some() || self.omega_out.is_some() {
            s.delta_omega = self.delta_omega;
            s.omega_out = self.omega_out;
        }
        if let Some(v) = self.abs_a_sq {
            s.abs_a_sq = Some(v);
            s.mix_a = None;
        }
        if let Some(v) = self.theta_deg {
            s.theta_deg = v;
        }
        if let Some(v) = self.phi_deg {
            s.phi_deg = v;
        }
        if let Some(v) = self.polarization {
            s.polarization = v;
        }
        if let Some(v) = self.detuning {
            s.detuning = v;
        }
        if let Some(v) = self.zero_real_part {
            s.zero_real_part = v;
        }
        s
    }
}

/// Set of b orders named in output columns. Exactly one selector is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orders: Option<Vec<[i32; 2]>>,
    /// All orders with |g| equal to this value (units 2π/d).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_equals: Option<f64>,
    /// All orders with |g| strictly below this value (units 2π/d).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_below: Option<f64>,
}

impl FilterConfig {
    pub fn resolve(&self, g_cutoff: i32) -> Result<ModeFilter> {
        const TOL: f64 = 1e-9;
        let norm = |o: &Order| (o.m as f64).hypot(o.n as f64);
        let orders: Vec<Order> = match (&self.orders, self.norm_equals, self.norm_below) {
            (Some(list), None, None) => list.iter().map(|&[m, n]| Order::new(m, n)).collect(),
            (None, Some(c), None) => Order::within(g_cutoff)
                .filter(|o| (norm(o) - c).abs() <= TOL)
                .collect(),
            (None, None, Some(c)) => Order::within(g_cutoff)
                .filter(|o| norm(o) < c - TOL)
                .collect(),
            _ => {
                return Err(invalid(format!(
                    "filter '{}': give exactly one of orders, norm_equals, norm_below",
                    self.name
                )));
            }
        };
        if self.name.is_empty() || self.name.contains([',', '"', '\n']) {
            return Err(invalid(format!(
                "filter name '{}' must be non-empty without commas or quotes",
                self.name
            )));
        }
        if orders.is_empty() {
            return Err(invalid(format!("filter '{}' selects no orders", self.name)));
        }
        Ok(ModeFilter {
            name: self.name.clone(),
            orders,
        })
    }
}

/// Parameter sweep of the infinite-array efficiency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// Maximize over |A| at every point.
    #[serde(default = "default_true")]
    pub optimize: bool,
    #[serde(default)]
    pub filters: Vec<FilterConfig>,
}

impl SweepConfig {
    /// Sweep grid in input order. Empty or non-monotone grids are errors.
    pub fn grid(&self) -> Result<Vec<f64>> {
        let v = match (&self.values, self.start, self.stop, self.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) => match n {
                0 => Vec::new(),
                1 => vec![a],
                _ => (0..n)
                    .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                    .collect(),
            },
            _ => {
                return Err(invalid(
                    "sweep: give either values or start, stop and points",
                ));
            }
        };
        if v.is_empty() {
            return Err(invalid("sweep: grid is empty"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(invalid("sweep: grid values must be finite"));
        }
        let up = v.windows(2).all(|w| w[1] > w[0]);
        let down = v.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(invalid("sweep: grid must be strictly monotone"));
        }
        Ok(v)
    }
}

/// Per-mode amplitudes at the scenario frequency.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeweightsConfig {
    /// Use the |A| that maximizes the overall efficiency.
    #[serde(default)]
    pub optimize: bool,
}

fn default_crit_range() -> [f64; 2] {
    [0.01, 3.0]
}

/// Search window of the criticality finder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalityConfig {
    #[serde(default = "default_crit_range")]
    pub range: [f64; 2],
}

impl Default for CriticalityConfig {
    fn default() -> Self {
        Self {
            range: default_crit_range(),
        }
    }
}

/// Emitter array of a finite-array run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteConfig {
    /// Side of a centered n×n square array; exclusive with `positions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Explicit positions in units of d.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub options: FiniteOptions,
}

impl FiniteConfig {
    pub fn array(&self) -> Result<EmitterArray> {
        match (&self.n, &self.positions) {
            (Some(n), None) => EmitterArray::square(*n),
            (None, Some(p)) => EmitterArray::from_positions(p.clone()),
            _ => Err(invalid("finite: give either n or positions")),
        }
    }
}

/// Named evaluation grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedGrid {
    pub name: String,
    pub grid: GridSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldmapConfig {
    pub grids: Vec<NamedGrid>,
}

fn default_sizes() -> Vec<usize> {
    vec![5, 10, 15, 20, 25, 30]
}
fn default_x_gap() -> f64 {
    2.0
}
fn default_x_length() -> f64 {
    30.0
}
fn default_x_points() -> usize {
    61
}
fn default_z_max() -> f64 {
    30.0
}
fn default_z_points() -> usize {
    301
}

/// Lobe-width scan. For side N the x window starts `x_gap` beyond the array
/// edge (N − 1)/2 and spans `x_length`; z runs from 0 to `z_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FwhmConfig {
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_x_gap")]
    pub x_gap: f64,
    #[serde(default = "default_x_length")]
    pub x_length: f64,
    #[serde(default = "default_x_points")]
    pub x_points: usize,
    #[serde(default = "default_z_max")]
    pub z_max: f64,
    #[serde(default = "default_z_points")]
    pub z_points: usize,
}

impl Default for FwhmConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty fwhm section uses defaults")
    }
}

impl FwhmConfig {
    pub fn grid(&self, side: usize) -> Result<GridSpec> {
        if side == 0 {
            return Err(invalid("fwhm: array side must be positive"));
        }
        if !(self.x_gap > 0.0 && self.x_length > 0.0 && self.z_max > 0.0) {
            return Err(invalid("fwhm: x_gap, x_length and z_max must be positive"));
        }
        let x0 = (side as f64 - 1.0) / 2.0 + self.x_gap;
        GridSpec::new(
            Plane::Xz,
            0.0,
            Range1::new(x0, x0 + self.x_length, self.x_points)?,
            Range1::new(0.0, self.z_max, self.z_points)?,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 {
            return Err(invalid(
                "fwhm: at least two array sizes are needed for the scaling fit",
            ));
        }
        for &n in &self.sizes {
            self.grid(n)?;
        }
        Ok(())
    }
}

fn default_peak_factor() -> f64 {
    5.0
}

/// Line-cut spectra of one component of E_b.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Named cuts, each a grid with one axis of length 1.
    pub lines: Vec<NamedGrid>,
    pub component: Component,
    pub part: Part,
    pub window: Window,
    #[serde(default = "default_peak_factor")]
    pub peak_factor: f64,
}

/// Complete run configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub scenario: ScenarioConfig,
    /// Curves of a multi-curve run; empty means the base scenario alone.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<SeriesConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modeweights: Option<ModeweightsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criticality: Option<CriticalityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finite: Option<FiniteConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fieldmap: Option<FieldmapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fwhm: Option<FwhmConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumConfig>,
}

/// A series label with its resolved scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub scenario: ScatterScenario,
}

impl Config {
    /// Resolved scenarios, one per series (or the base alone).
    pub fn scenarios(&self) -> Result<Vec<Series>> {
        if self.series.is_empty() {
            return Ok(vec![Series {
                label: "base".into(),
                scenario: self.scenario.to_scenario()?,
            }]);
        }
        let mut seen = std::collections::BTreeSet::new();
        self.series
            .iter()
            .map(|s| {
                if s.label.is_empty()
                    || s.label.contains([',', '"', '\n'])
                    || !seen.insert(s.label.clone())
                {
                    return Err(invalid(format!(
                        "series label '{}' must be unique, non-empty, without commas",
                        s.label
                    )));
                }
                let scenario = s
                    .apply(&self.scenario)
                    .to_scenario()
                    .map_err(|e| prefix(&s.label, e))?;
                Ok(Series {
                    label: s.label.clone(),
                    scenario,
                })
            })
            .collect()
    }

    pub fn filters(&self) -> Result<Vec<ModeFilter>> {
        let f = self
            .sweep
            .as_ref()
            .map(|s| s.filters.as_slice())
            .unwrap_or(&[]);
        let out = f
            .iter()
            .map(|f| f.resolve(self.scenario.g_cutoff))
            .collect::<Result<Vec<_>>>()?;
        let mut names = std::collections::BTreeSet::new();
        for m in &out {
            if !names.insert(m.name.as_str()) {
                return Err(invalid(format!("duplicate filter name '{}'", m.name)));
            }
        }
        Ok(out)
    }

    /// Checks every section needed by `cmd` before any output is written.
    pub fn validate_for(&self, cmd: Command) -> Result<()> {
        self.scenarios()?;
        match cmd {
            Command::EfficiencySweep => {
                self.sweep
                    .as_ref()
                    .ok_or_else(|| missing("sweep", cmd))?
                    .grid()?;
                self.filters()?;
            }
            Command::Modeweights | Command::Criticality => {}
            Command::Fieldmap => {
                self.finite
                    .as_ref()
                    .ok_or_else(|| missing("finite", cmd))?
                    .array()?;
                let f = self
                    .fieldmap
                    .as_ref()
                    .ok_or_else(|| missing("fieldmap", cmd))?;
                check_grids(&f.grids)?;
            }
            Command::Fwhm => {
                if let Some(f) = &self.finite
                    && f.positions.is_some()
                {
                    return Err(invalid(
                        "fwhm uses square arrays; finite.positions is not allowed",
                    ));
                }
                self.fwhm.clone().unwrap_or_default().validate()?;
            }
            Command::Spectrum => {
                self.finite
                    .as_ref()
                    .ok_or_else(|| missing("finite", cmd))?
                    .array()?;
                let s = self
                    .spectrum
                    .as_ref()
                    .ok_or_else(|| missing("spectrum", cmd))?;
                check_grids(&s.lines)?;
                for l in &s.lines {
                    let g = &l.grid;
                    let n = if g.v.n == 1 {
                        g.u.n
                    } else if g.u.n == 1 {
                        g.v.n
                    } else {
                        0
                    };
                    if n < crate::analysis::MIN_SAMPLES {
                        return Err(invalid(format!(
                            "spectrum line '{}' needs one axis of length 1 and at least {} samples",
                            l.name,
                            crate::analysis::MIN_SAMPLES
                        )));
                    }
                }
                if !(s.peak_factor > 0.0) {
                    return Err(invalid("spectrum.peak_factor must be positive"));
                }
            }
        }
        Ok(())
    }
}

fn prefix(label: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter(m) => invalid(format!("series '{label}': {m}")),
        other => other,
    }
}

fn missing(section: &str, cmd: Command) -> Error {
    Error::Config(format!("{}: section '{section}' is required", cmd.name()))
}

fn check_grids(grids: &[NamedGrid]) -> Result<()> {
    if grids.is_empty() {
        return Err(invalid("no grids given"));
    }
    let mut names = std::collections::BTreeSet::new();
    for g in grids {
        if g.name.is_empty()
            || !g
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(invalid(format!(
                "grid name '{}' must be non-empty [A-Za-z0-9_-]",
                g.name
            )));
        }
        if !names.insert(g.name.as_str()) {
            return Err(invalid(format!("duplicate grid name '{}'", g.name)));
        }
        g.grid.validate()?;
    }
    Ok(())
}

/// Parses a configuration document. Schema errors report the key path.
pub fn parse_config_str(text: &str) -> Result<Config> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("at '{path}': {}", e.into_inner()))
    })
}

/// Reads a configuration file.
pub fn parse_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// A caption parameter filled in from a default or a choice of ours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assumed {
    pub key: String,
    pub note: String,
}

/// A named figure reproduction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub command: Command,
    pub config: Config,
    pub assumed: Vec<Assumed>,
}

pub const PRESETS: &[&str] = &[
    "fig2",
    "fig3",
    "fig4a",
    "fig4b",
    "fig4c",
    "fig4d",
    "fig5a",
    "fig5b",
    "fig5c",
    "fig5c-weights",
    "fig6a",
    "fig6b",
    "fig6c",
    "fig6d",
    "fig7a",
    "fig7b",
    "fig8",
    "fig9",
    "fig10",
];

fn assumed(key: &str, note: &str) -> Assumed {
    Assumed {
        key: key.into(),
        note: note.into(),
    }
}

fn series(label: &str) -> SeriesConfig {
    SeriesConfig {
        label: label.into(),
        ..SeriesConfig::default()
    }
}

fn norm_filter(name: &str, eq: Option<f64>, below: Option<f64>) -> FilterConfig {
    FilterConfig {
        name: name.into(),
        orders: None,
        norm_equals: eq,
        norm_below: below,
    }
}

fn omega_sweep(start: f64, stop: f64, points: usize, filters: Vec<FilterConfig>) -> SweepConfig {
    SweepConfig {
        parameter: SweepParameter::Omega,
        values: None,
        start: Some(start),
        stop: Some(stop),
        points: Some(points),
        optimize: true,
        filters,
    }
}

fn base_assumed() -> Vec<Assumed> {
    vec![
        assumed(
            "scenario.eta",
            "resonant limit rho = i0+ taken as eta = 1e-9",
        ),
        assumed(
            "scenario.dipole_a,dipole_b",
            "equal dipoles; the optimal-|A| efficiency does not depend on their ratio",
        ),
        assumed(
            "scenario.controls",
            "lattice-sum controls at module defaults",
        ),
    ]
}

/// Grids in the z = 0 and y = 0 planes around an n×n array. Samples sit on
/// quarter-integer coordinates so that no grid point meets an emitter.
fn finite_grids(n: usize) -> Vec<NamedGrid> {
    let half = (n as f64 / 2.0 + 15.0).ceil();
    let pts = (4.0 * half) as usize;
    let r = Range1 {
        lo: -half + 0.25,
        hi: half - 0.25,
        n: pts,
    };
    vec![
        NamedGrid {
            name: "xy".into(),
            grid: GridSpec {
                plane: Plane::Xy,
                offset: 0.0,
                u: r,
                v: r,
            },
        },
        NamedGrid {
            name: "xz".into(),
            grid: GridSpec {
                plane: Plane::Xz,
                offset: 0.0,
                u: r,
                v: r,
            },
        },
    ]
}

fn finite_preset(n: usize, theta: f64, omega: f64, omega_out: f64) -> Config {
    Config {
        scenario: ScenarioConfig {
            omega,
            omega_out: Some(omega_out),
            theta_deg: theta,
            abs_a_sq: Some(0.5),
            ..ScenarioConfig::default()
        },
        finite: Some(FiniteConfig {
            n: Some(n),
            positions: None,
            options: FiniteOptions::default(),
        }),
        fieldmap: Some(FieldmapConfig {
            grids: finite_grids(n),
        }),
        ..Config::default()
    }
}

fn finite_assumed() -> Vec<Assumed> {
    let mut a = base_assumed();
    a.push(assumed(
        "scenario.abs_a_sq",
        "|A| is not stated; |A|^2 = 0.5 (the infinite-array optimum is degenerate at a critical outgoing frequency)",
    ));
    a.push(assumed(
        "scenario.polarization",
        "s polarization, which is y for incidence in the xz plane",
    ));
    a.push(assumed(
        "fieldmap.grids",
        "plot extents and resolution are not stated; 0.5 d sampling",
    ));
    a.push(assumed(
        "finite.options",
        "solver options at module defaults, field-frequency decay rates",
    ));
    a
}

/// Axis cuts of E_b for spectra: through the array, in-plane outside it and behind it.
fn spectrum_lines(y_out: f64, z_behind: f64) -> Vec<NamedGrid> {
    let h = 1.0 / 16.0;
    let line = |offset: f64, plane: Plane, v: f64| GridSpec {
        plane,
        offset,
        u: Range1 {
            lo: -64.0 + h,
            hi: 64.0 - h,
            n: 1024,
        },
        v: Range1 { lo: v, hi: v, n: 1 },
    };
    vec![
        NamedGrid {
            name: "through".into(),
            grid: line(0.0, Plane::Xy, 0.0),
        },
        NamedGrid {
            name: "beside".into(),
            grid: line(0.0, Plane::Xy, y_out),
        },
        NamedGrid {
            name: "behind".into(),
            grid: line(0.0, Plane::Xz, z_behind),
        },
    ]
}

/// Orders radiant on the b branch at `omega`, excluding `new`.
fn lower_orders(scn: &ScenarioConfig, omega: f64, new: &[[i32; 2]]) -> Vec<[i32; 2]> {
    let inc = Incidence::from_degrees(scn.theta_deg, scn.phi_deg);
    let k = inc.k_par(omega);
    let w = omega + scn.delta_omega.unwrap_or(0.0);
    Order::within(scn.g_cutoff)
        .filter(|o| {
            let q = crate::lattice::shifted(k, *o, scn.grating);
            q[0].hypot(q[1]) < w && !new.contains(&[o.m, o.n])
        })
        .map(|o| [o.m, o.n])
        .collect()
}

/// Looks up a figure preset by name.
pub fn preset(name: &str) -> Result<Preset> {
    let mut assumed_list = base_assumed();
    let (description, command, config) = match name {
        "fig2" => {
            let mut s = Vec::new();
            for (w, tag) in [(0.2, "w0.2"), (0.495, "w0.495")] {
                for dw in [0.0, 2.5, 5.0] {
                    s.push(SeriesConfig {
                        omega: Some(w),
                        delta_omega: Some(dw),
                        ..series(&format!("{tag}_dw{dw}"))
                    });
                }
            }
            assumed_list.push(assumed("sweep.points", "|A|^2 sampled on 201 points"));
            assumed_list.push(assumed(
                "scenario.polarization",
                "in-plane polarization along y (s)",
            ));
            (
                "Efficiency versus |A|^2 at normal incidence",
                Command::EfficiencySweep,
                Config {
                    series: s,
                    sweep: Some(SweepConfig {
                        parameter: SweepParameter::MixingSquared,
                        values: None,
                        start: Some(0.0),
                        stop: Some(1.0),
                        points: Some(201),
                        optimize: false,
                        filters: vec![],
                    }),
                    ..Config::default()
                },
            )
        }
        "fig3" => {
            let s = [0.0, 0.5, 1.0, 1.5, 2.0]
                .iter()
                .map(|&dw| SeriesConfig {
                    delta_omega: Some(dw),
                    ..series(&format!("dw{dw}"))
                })
                .collect();
            assumed_list.push(assumed(
                "sweep.start,stop,points",
                "omega from 0.01 to 1.5 on 750 points",
            ));
            assumed_list.push(assumed(
                "scenario.polarization",
                "in-plane polarization along y (s)",
            ));
            (
                "Optimal-|A| efficiency versus omega at normal incidence; add --zero-real-part for the dashed curve",
                Command::EfficiencySweep,
                Config {
                    series: s,
                    sweep: Some(omega_sweep(0.01, 1.5, 750, vec![])),
                    ..Config::default()
                },
            )
        }
        "fig4a" | "fig4b" | "fig4c" | "fig4d" => {
            let (dw, c, lo, hi) = match name {
                "fig4a" => (1.5, 2.0, 0.4, 0.6),
                "fig4b" => (2.5, 3.0, 0.4, 0.6),
                "fig4c" => (1.8, 2.0, 0.1, 0.3),
                _ => (2.8, 3.0, 0.1, 0.3),
            };
            let mut filters = vec![
                norm_filter("lower", None, Some(c)),
                norm_filter("new", Some(c), None),
            ];
            if name == "fig4d" {
                filters.push(FilterConfig {
                    name: "g0p3".into(),
                    orders: Some(vec![[0, 3], [0, -3]]),
                    norm_equals: None,
                    norm_below: None,
                });
            }
            assumed_list.push(assumed(
                "sweep.start,stop,points",
                "omega window around the critical point on 801 points",
            ));
            (
                "Overall and mode-projected efficiency near a critical point, y polarization, normal incidence",
                Command::EfficiencySweep,
                Config {
                    scenario: ScenarioConfig {
                        delta_omega: Some(dw),
                        ..ScenarioConfig::default()
                    },
                    sweep: Some(omega_sweep(lo, hi, 801, filters)),
                    criticality: Some(CriticalityConfig { range: [lo, hi] }),
                    ..Config::default()
                },
            )
        }
        "fig5a" | "fig5b" => {
            let mut s = Vec::new();
            for (dir, phi) in [("x", 0.0), ("diag", 45.0)] {
                for (p, pol) in [("s", Polarization::S), ("p", Polarization::P)] {
                    s.push(SeriesConfig {
                        phi_deg: Some(phi),
                        polarization: Some(pol),
                        ..series(&format!("{dir}_{p}"))
                    });
                }
            }
            assumed_list.push(assumed(
                "sweep.start,stop,points",
                "omega from 0.002 to 1.0 on 500 points",
            ));
            (
                if name == "fig5a" {
                    "Optimal-|A| efficiency at 30 degrees incidence, along x and diagonal, s and p"
                } else {
                    "As fig5a with the real part of the inverse propagator set to zero"
                },
                Command::EfficiencySweep,
                Config {
                    scenario: ScenarioConfig {
                        delta_omega: Some(3.0),
                        theta_deg: 30.0,
                        zero_real_part: name == "fig5b",
                        ..ScenarioConfig::default()
                    },
                    series: s,
                    sweep: Some(omega_sweep(0.002, 1.0, 500, vec![])),
                    ..Config::default()
                },
            )
        }
        "fig5c" | "fig5c-weights" => {
            let scn = ScenarioConfig {
                delta_omega: Some(3.0),
                theta_deg: 30.0,
                ..ScenarioConfig::default()
            };
            let new = [[3, 1], [3, -1]];
            let lower = lower_orders(&scn, 0.3094 - 1e-3, &new);
            let filters = vec![
                FilterConfig {
                    name: "lower".into(),
                    orders: Some(lower),
                    norm_equals: None,
                    norm_below: None,
                },
                FilterConfig {
                    name: "new".into(),
                    orders: Some(new.to_vec()),
                    norm_equals: None,
                    norm_below: None,
                },
            ];
            assumed_list.push(assumed("criticality.range", "search window [0.25, 0.35]"));
            assumed_list.push(assumed(
                "sweep.start,stop,points",
                "omega from 0.30 to 0.32 on 401 points",
            ));
            let s = [("s", Polarization::S), ("p", Polarization::P)]
                .iter()
                .map(|&(l, p)| SeriesConfig {
                    polarization: Some(p),
                    ..series(l)
                })
                .collect();
            (
                "Critical point at 30 degrees incidence along x with delta_omega = 3 and the mode-projected efficiencies around it",
                if name == "fig5c" {
                    Command::Criticality
                } else {
                    Command::EfficiencySweep
                },
                Config {
                    scenario: scn,
                    series: if name == "fig5c" { vec![] } else { s },
                    sweep: Some(omega_sweep(0.30, 0.32, 401, filters)),
                    criticality: Some(CriticalityConfig {
                        range: [0.25, 0.35],
                    }),
                    ..Config::default()
                },
            )
        }
        "fig6a" | "fig6b" | "fig6c" | "fig6d" => {
            let (w, wp, n) = match name {
                "fig6a" => (0.2, 3.0, 30),
                "fig6b" => (1.2, 3.0, 30),
                "fig6c" => (0.2, 8.0, 30),
                _ => (0.2, 8.0, 60),
            };
            assumed_list = finite_assumed();
            (
                "Scattered b field at normal incidence, y polarization",
                Command::Fieldmap,
                finite_preset(n, 0.0, w, wp),
            )
        }
        "fig7a" | "fig7b" => {
            let wp = if name == "fig7a" { 1.9 } else { 2.1 };
            assumed_list = finite_assumed();
            assumed_list.push(assumed("finite.n", "30x30 array, scaled down from 60x60"));
            (
                "Scattered b field at 30 degrees incidence, y polarization",
                Command::Fieldmap,
                finite_preset(30, 30.0, 0.2, wp),
            )
        }
        "fig8" => {
            let mut cfg = finite_preset(30, 0.0, 0.2, 3.0);
            cfg.finite.as_mut().expect("set above").n = None;
            cfg.fieldmap = None;
            cfg.fwhm = Some(FwhmConfig {
                sizes: (1..=12).map(|k| 5 * k).collect(),
                ..FwhmConfig::default()
            });
            assumed_list = finite_assumed();
            assumed_list.push(assumed("fwhm.sizes", "N from 5 to 60 in steps of 5"));
            assumed_list.push(assumed(
                "fwhm.x_gap,x_length,x_points,z_max,z_points",
                "x from 2 d beyond the edge over 30 d; z up to 30 d",
            ));
            (
                "Lobe FWHM growth and spread rate versus array size (fig6a parameters)",
                Command::Fwhm,
                cfg,
            )
        }
        "fig9" | "fig10" => {
            let mut cfg = if name == "fig9" {
                finite_preset(30, 0.0, 0.2, 8.0)
            } else {
                finite_preset(30, 30.0, 0.2, 2.1)
            };
            cfg.fieldmap = None;
            cfg.spectrum = Some(SpectrumConfig {
                lines: spectrum_lines(50.0, 30.0),
                component: Component::Y,
                part: Part::Complex,
                window: Window::Hann,
                peak_factor: 5.0,
            });
            assumed_list = finite_assumed();
            assumed_list.push(assumed("finite.n", "30x30 array, scaled down from 60x60"));
            assumed_list.push(assumed(
                "spectrum.part,window",
                "complex component with a Hann window, which separates +q from -q; use part real for the plotted transform",
            ));
            assumed_list.push(assumed("spectrum.lines", "1024 samples over |x| < 64 d"));
            (
                if name == "fig9" {
                    "Line-cut spectra of (E_b)_y at normal incidence, outgoing frequency 8"
                } else {
                    "Line-cut spectra of (E_b)_y at 30 degrees incidence, outgoing frequency 2.1"
                },
                Command::Spectrum,
                cfg,
            )
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown preset '{name}'; known presets: {}",
                PRESETS.join(", ")
            )));
        }
    };
    Ok(Preset {
        name: name.into(),
        description: description.into(),
        command,
        config,
        assumed: assumed_list,
    })
}

/// Formats a number with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// LF-terminated CSV writer with a fixed header.
pub struct CsvOut {
    inner: csv::Writer<std::fs::File>,
    width: usize,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[String]) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .quote_style(csv::QuoteStyle::Never)
            .from_path(path)
            .map_err(csv_err)?;
        inner.write_record(header).map_err(csv_err)?;
        Ok(Self {
            inner,
            width: header.len(),
        })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        debug_assert_eq!(fields.len(), self.width);
        self.inner.write_record(fields).map_err(csv_err)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Header of the field-map CSV and the value order of the binary file.
pub const FIELD_COLUMNS: [&str; 12] = [
    "re_ea_x", "im_ea_x", "re_ea_y", "im_ea_y", "re_ea_z", "im_ea_z", "re_eb_x", "im_eb_x",
    "re_eb_y", "im_eb_y", "re_eb_z", "im_eb_z",
];

fn field_values(ea: &[C64; 3], eb: &[C64; 3]) -> [f64; 12] {
    let mut v = [0.0; 12];
    for c in 0..3 {
        v[2 * c] = ea[c].re;
        v[2 * c + 1] = ea[c].im;
        v[6 + 2 * c] = eb[c].re;
        v[6 + 2 * c + 1] = eb[c].im;
    }
    v
}

/// JSON header written next to a binary field map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub format: String,
    pub version: u32,
    pub data_file: String,
    pub dtype: String,
    /// [nu, nv]; the flat point index is iv·nu + iu.
    pub dims: [usize; 2],
    pub plane: Plane,
    pub offset: f64,
    pub u: Range1,
    pub v: Range1,
    pub spacing: [f64; 2],
    pub values_per_point: usize,
    pub order: Vec<String>,
    pub length_unit: String,
    pub field_unit: String,
    pub manifest: String,
}

/// Writes `<stem>.csv`, `<stem>.bin`, `<stem>.json` and `<stem>_sites.csv`.
/// Returns the file names written.
pub fn write_field_map(
    dir: &Path,
    stem: &str,
    map: &crate::finite::FieldMap,
    manifest: &str,
) -> Result<Vec<String>> {
    let g = &map.grid;
    let mut header: Vec<String> = ["x[d]", "y[d]", "z[d]"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(FIELD_COLUMNS.iter().map(|c| format!("{c}[E0]")));
    let csv_name = format!("{stem}.csv");
    let mut w = CsvOut::create(&dir.join(&csv_name), &header)?;
    let mut bin = Vec::with_capacity(map.e_a.len() * 12 * 8);
    for k in 0..g.len() {
        let p = g.point(k);
        let v = field_values(&map.e_a[k], &map.e_b[k]);
        let mut row: Vec<String> = p.iter().map(|x| fmt_f64(*x)).collect();
        row.extend(v.iter().map(|x| fmt_f64(*x)));
        w.row(&row)?;
        for x in v {
            bin.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.finish()?;
    let bin_name = format!("{stem}.bin");
    std::fs::write(dir.join(&bin_name), bin)?;
    let side = FieldSidecar {
        format: "transducer-fieldmap".into(),
        version: 1,
        data_file: bin_name.clone(),
        dtype: "f64-le".into(),
        dims: [g.u.n, g.v.n],
        plane: g.plane,
        offset: g.offset,
        u: g.u,
        v: g.v,
        spacing: [g.u.step(), g.v.step()],
        values_per_point: 12,
        order: FIELD_COLUMNS.iter().map(|s| s.to_string()).collect(),
        length_unit: "d".into(),
        field_unit: "|E0|".into(),
        manifest: manifest.into(),
    };
    let json_name = format!("{stem}.json");
    write_json(&dir.join(&json_name), &side)?;

    let sites_name = format!("{stem}_sites.csv");
    let mut h: Vec<String> = ["x[d]", "y[d]", "z[d]"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for f in ["pa", "pb"] {
        for c in ["x", "y", "z"] {
            h.push(format!("re_{f}_{c}[E0]"));
            h.push(format!("im_{f}_{c}[E0]"));
        }
    }
    let mut w = CsvOut::create(&dir.join(&sites_name), &h)?;
    for (i, s) in map.sites.iter().enumerate() {
        let mut row: Vec<String> = s.iter().map(|x| fmt_f64(*x)).collect();
        for p in [&map.p_a[i], &map.p_b[i]] {
            for c in p {
                row.push(fmt_f64(c.re));
                row.push(fmt_f64(c.im));
            }
        }
        w.row(&row)?;
    }
    w.finish()?;
    Ok(vec![csv_name, bin_name, json_name, sites_name])
}

/// Reads a binary field map back as 12 values per point.
pub fn read_field_bin(path: &Path) -> Result<Vec<[f64; 12]>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 96 != 0 {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!(
                "field map size {} is not a multiple of 96 bytes",
                bytes.len()
            ),
        )));
    }
    Ok(bytes
        .chunks_exact(96)
        .map(|p| {
            std::array::from_fn(|i| {
                f64::from_le_bytes(p[8 * i..8 * i + 8].try_into().expect("8 bytes"))
            })
        })
        .collect())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    f.write_all(b"\n")?;
    Ok(())
}

/// An output file with its SHA-256 digest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

/// Record of one run. Its `config` reproduces the outputs when fed back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: String,
    pub command: Command,
    pub preset: Option<String>,
    pub config: Config,
    pub scenarios: Vec<Series>,
    pub assumed: Vec<Assumed>,
    pub threads: Option<usize>,
    pub backend: String,
    pub seed: Option<u64>,
    pub wall_time_s: f64,
    pub row_errors: usize,
    pub outputs: Vec<OutputFile>,
}

pub const MANIFEST_FORMAT: &str = "transducer-run-manifest";
pub const MANIFEST_FILE: &str = "manifest.json";

/// A configuration file or a run manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct Loaded {
    pub config: Config,
    pub command: Option<Command>,
    pub preset: Option<String>,
    pub assumed: Vec<Assumed>,
}

/// Reads a configuration, or the configuration recorded in a manifest.
pub fn load(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if value.get("format").and_then(|f| f.as_str()) == Some(MANIFEST_FORMAT) {
        let de = &mut serde_json::Deserializer::from_str(&text);
        let m: RunManifest = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("manifest at '{}': {}", e.path(), e.inner())))?;
        return Ok(Loaded {
            config: m.config,
            command: Some(m.command),
            preset: m.preset,
            assumed: m.assumed,
        });
    }
    Ok(Loaded {
        config: parse_config_str(&text)?,
        command: None,
        preset: None,
        assumed: Vec::new(),
    })
}
