//! Post-processing of field maps: line-cut spectra, lobe widths and
//! in-plane scattering directions.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, invalid};
use crate::finite::{FieldMap, Plane, SiteSolution};

/// Taper applied before the transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Rectangular,
}

/// Which part of the field component is transformed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Real,
    Imag,
    Complex,
}

/// Magnitude spectrum with q ascending, in units of 2π/d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub q: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl Spectrum {
    /// Spacing of the q grid.
    pub fn bin(&self) -> f64 {
        if self.q.len() > 1 {
            self.q[1] - self.q[0]
        } else {
            0.0
        }
    }
}

/// A local maximum of a spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub q: f64,
    pub magnitude: f64,
}

/// Minimum number of samples accepted for a line-cut transform.
pub const MIN_SAMPLES: usize = 256;

/// Discrete Fourier transform of uniformly spaced samples (`spacing` in
/// units of d). A component e^{iqx} appears at +q.
pub fn spectrum(samples: &[C64], spacing: f64, part: Part, window: Window) -> Result<Spectrum> {
    let n = samples.len();
    if n < MIN_SAMPLES {
        return Err(invalid(format!(
            "line cut needs at least {MIN_SAMPLES} samples, got {n}"
        )));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(invalid(format!(
            "sample spacing must be positive, got {spacing}"
        )));
    }
    let mut buf: Vec<C64> = samples
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let v = match part {
                Part::Real => C64::new(s.re, 0.0),
                Part::Imag => C64::new(s.im, 0.0),
                Part::Complex => *s,
            };
            let w = match window {
                Window::Hann => 0.5 - 0.5 * (TAU * j as f64 / (n - 1) as f64).cos(),
                Window::Rectangular => 1.0,
            };
            v * w
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let dq = 1.0 / (n as f64 * spacing);
    let mut q = Vec::with_capacity(n);
    let mut magnitude = Vec::with_capacity(n);
    for k in 0..n {
        // fftshift: most negative frequency first.
        let m = k as i64 - half as i64;
        let src = m.rem_euclid(n as i64) as usize;
        q.push(m as f64 * dq);
        magnitude.push(buf[src].norm() / n as f64);
    }
    Ok(Spectrum { q, magnitude })
}

/// Local maxima exceeding `factor` times the median magnitude, strongest first.
pub fn find_peaks(s: &Spectrum, factor: f64) -> Vec<Peak> {
    let n = s.magnitude.len();
    if n < 3 {
        return Vec::new();
    }
    let mut sorted = s.magnitude.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[n / 2];
    let max = sorted[n - 1];
    let threshold = (factor * median).max(1e-12 * max);
    let mut peaks: Vec<Peak> = (0..n)
        .filter(|&k| {
            let m = s.magnitude[k];
            let left = if k > 0 {
                s.magnitude[k - 1]
            } else {
                f64::NEG_INFINITY
            };
            let right = if k + 1 < n {
                s.magnitude[k + 1]
            } else {
                f64::NEG_INFINITY
            };
            m > threshold && m >= left && m > right
        })
        .map(|k| Peak {
            q: s.q[k],
            magnitude: s.magnitude[k],
        })
        .collect();
    peaks.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));
    peaks
}

/// Field component selector along a line cut.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    X,
    Y,
    Z,
}

impl Component {
    pub fn index(self) -> usize {
        match self {
            Component::X => 0,
            Component::Y => 1,
            Component::Z => 2,
        }
    }
}

/// Spectrum of one component of E_b along a one-dimensional field map
/// (a grid with a single sample on one of its axes).
pub fn spectrum_linecut(
    map: &FieldMap,
    component: Component,
    part: Part,
    window: Window,
) -> Result<Spectrum> {
    let g = &map.grid;
    let spacing = if g.v.n == 1 {
        g.u.step()
    } else if g.u.n == 1 {
        g.v.step()
    } else {
        return Err(invalid(
            "line-cut spectrum needs a grid with one axis of length 1",
        ));
    };
    let c = component.index();
    let samples: Vec<C64> = map.e_b.iter().map(|e| e[c]).collect();
    spectrum(&samples, spacing, part, window)
}

/// FWHM of a lobe along x and its linear spread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FwhmResult {
    pub x: Vec<f64>,
    pub z_fwhm: Vec<f64>,
    /// z_fwhm after a centered five-point median filter.
    pub z_smoothed: Vec<f64>,
    /// Least-squares slope of the smoothed widths (sin θ).
    pub spread_rate: f64,
    pub spread_rate_raw: f64,
    /// RMS deviation of the smoothed widths from the fitted line.
    pub fit_residual: f64,
    /// Spearman rank correlation of the smoothed widths with x.
    pub spearman: f64,
}

/// For every x column of an xz map at y = 0 starting at z = 0, the first z
/// where |E_b| drops to half its value at z = 0, linearly interpolated.
/// `footprint` is the array half-width; every x must lie beyond it.
pub fn fwhm_lobe(map: &FieldMap, footprint: f64) -> Result<FwhmResult> {
    let g = &map.grid;
    if g.plane != Plane::Xz || g.offset != 0.0 || g.v.lo != 0.0 || g.v.n < 2 {
        return Err(invalid(
            "FWHM analysis needs an xz grid at y = 0 whose z axis starts at 0",
        ));
    }
    if g.u.n < 2 {
        return Err(invalid("FWHM analysis needs at least two x samples"));
    }
    let mag = map.e_b_norm();
    let (nu, nv) = (g.u.n, g.v.n);
    let mut xs = Vec::with_capacity(nu);
    let mut zs = Vec::with_capacity(nu);
    for iu in 0..nu {
        let x = g.u.value(iu);
        if x.abs() <= footprint {
            return Err(invalid(format!(
                "x = {x} lies inside the array footprint |x| <= {footprint}"
            )));
        }
        let peak = mag[iu];
        let half = 0.5 * peak;
        let mut found = None;
        for iv in 1..nv {
            let m = mag[iv * nu + iu];
            if m <= half {
                let m0 = mag[(iv - 1) * nu + iu];
                let (z0, z1) = (g.v.value(iv - 1), g.v.value(iv));
                found = Some(z0 + (m0 - half) / (m0 - m) * (z1 - z0));
                break;
            }
        }
        let z = found.ok_or_else(|| {
            Error::NonConvergence(format!(
                "half-maximum crossing not found within z <= {} at x = {x}",
                g.v.hi
            ))
        })?;
        xs.push(x);
        zs.push(z);
    }
    let smooth = median5(&zs);
    let (slope, intercept) = linear_fit(&xs, &smooth);
    let (raw, _) = linear_fit(&xs, &zs);
    let fit_residual = (xs
        .iter()
        .zip(&smooth)
        .map(|(x, z)| (z - slope * x - intercept).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    Ok(FwhmResult {
        spearman: spearman(&xs, &smooth),
        x: xs,
        z_fwhm: zs,
        z_smoothed: smooth,
        spread_rate: slope,
        spread_rate_raw: raw,
        fit_residual,
    })
}

/// Centered five-point median; the window shrinks at the ends.
pub fn median5(v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(v.len());
            let mut w = v[lo..hi].to_vec();
            w.sort_by(f64::total_cmp);
            let n = w.len();
            if n % 2 == 1 {
                w[n / 2]
            } else {
                0.5 * (w[n / 2 - 1] + w[n / 2])
            }
        })
        .collect()
}

/// Least-squares line y = a x + b; returns (a, b).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let a = sxy / sxx;
    (a, my - a * mx)
}

/// Exponent p and prefactor c of y = c·x^p from a log-log least-squares fit.
pub fn power_law_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() < 2 || x.len() != y.len() || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(invalid(
            "power-law fit needs at least two positive (x, y) pairs",
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (p, b) = linear_fit(&lx, &ly);
    Ok((p, b.exp()))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// In-plane |E_b|² on a circle around the origin in z = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularProfile {
    /// Bin centers in radians, starting at +x and counter-clockwise.
    pub angles: Vec<f64>,
    pub intensity: Vec<f64>,
}

impl AngularProfile {
    /// Index and angle of the strongest bin.
    pub fn argmax(&self) -> (usize, f64) {
        let k = self
            .intensity
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        (k, self.angles[k])
    }

    pub fn bin_width(&self) -> f64 {
        TAU / self.angles.len() as f64
    }
}

/// Samples |E_b|² at `bins` angles on a circle of `radius` (units of d) in z = 0.
pub fn angular_profile(sol: &SiteSolution, radius: f64, bins: usize) -> Result<AngularProfile> {
    if bins < 4 || !(radius > 0.0) {
        return Err(invalid(
            "angular profile needs a positive radius and at least 4 bins",
        ));
    }
    let angles: Vec<f64> = (0..bins).map(|k| TAU * k as f64 / bins as f64).collect();
    let pts: Vec<[f64; 3]> = angles
        .iter()
        .map(|a| [radius * a.cos(), radius * a.sin(), 0.0])
        .collect();
    let (_, eb) = sol.fields_at(&pts)?;
    let intensity = eb
        .iter()
        .map(|e| e.iter().map(|c| c.norm_sqr()).sum())
        .collect();
    Ok(AngularProfile { angles, intensity })
}

/// Folds an angle into [0, π/2] under the reflections x → −x and y → −y.
pub fn fold_quadrant(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    let a = if a > PI { TAU - a } else { a };
    if a > PI / 2.0 { PI - a } else { a }
}

/// Points of an annulus r_in ≤ r ≤ r_out in z = 0 on a polar grid.
pub fn annulus_points(
    r_in: f64,
    r_out: f64,
    radial: usize,
    angular: usize,
) -> Result<Vec<[f64; 3]>> {
    if !(r_in > 0.0 && r_out > r_in) || radial < 2 || angular < 4 {
        return Err(invalid(
            "annulus needs 0 < r_in < r_out, at least 2 radii and 4 angles",
        ));
    }
    let mut out = Vec::with_capacity(radial * angular);
    for i in 0..radial {
        let r = r_in + (r_out - r_in) * i as f64 / (radial - 1) as f64;
        for k in 0..angular {
            let a = TAU * (k as f64 + 0.5) / angular as f64;
            out.push([r * a.cos(), r * a.sin(), 0.0]);
        }
    }
    Ok(out)
}

/// ‖a − b‖₂ / ‖b‖₂.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}
