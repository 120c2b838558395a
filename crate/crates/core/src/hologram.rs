//! Phase-only SLM holograms for flat-top beams.
//!
//! The target field in the SLM plane is the inverse Fourier transform of
//! the focal-plane flat-top. Amplitude is encoded by modulating the depth
//! of a blazed grating, so the desired field appears in the first
//! diffraction order, `W/Λ` frequency bins away from the zero order.
//!
//! Pixel `(n, m)` is row `n`, column `m`; arrays are row-major. Spatial
//! frequencies are measured in units of the inverse focal-plane waist, and
//! `output_scale` is the frequency step per SLM pixel.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flattop::{flattop_profile, FlatTopOrder};
use crate::propagation::{fft_2d, Grid, SampledField};
use crate::specfun::sinc_inv;

const TWO_PI: f64 = 2.0 * PI;

/// Geometry of the modulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlmSpec {
    pub width: usize,
    pub height: usize,
    pub pixel_pitch_um: f64,
    /// Pixels per 2π ramp of the blazed grating; may be infinite (no grating).
    pub grating_period: f64,
}

impl SlmSpec {
    pub fn new(width: usize, height: usize, pixel_pitch_um: f64, grating_period: f64) -> Result<Self> {
        if width == 0 || height == 0 || !(pixel_pitch_um > 0.0) {
            return Err(Error::Parameter("SLM size and pitch must be positive".into()));
        }
        if !(grating_period >= 2.0) {
            return Err(Error::Parameter(format!(
                "grating period {grating_period} px is below the two-pixel Nyquist limit"
            )));
        }
        Ok(SlmSpec {
            width,
            height,
            pixel_pitch_um,
            grating_period,
        })
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Column offset of the first diffraction order, in frequency bins.
    pub fn first_order_bins(&self) -> f64 {
        self.width as f64 / self.grating_period
    }
}

/// Desired SLM-plane field `A e^{iΦ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetField {
    width: usize,
    height: usize,
    amplitude: Vec<f64>,
    phase: Vec<f64>,
}

impl TargetField {
    /// Build from raw arrays; the amplitude is rescaled to peak 1.
    pub fn new(width: usize, height: usize, amplitude: Vec<f64>, phase: Vec<f64>) -> Result<Self> {
        if amplitude.len() != width * height || phase.len() != amplitude.len() {
            return Err(Error::Shape("amplitude and phase must be width × height".into()));
        }
        let peak = amplitude.iter().fold(0.0_f64, |m, a| m.max(*a));
        if !(peak > 0.0) || amplitude.iter().any(|a| *a < 0.0 || !a.is_finite()) {
            return Err(Error::Parameter("amplitude must be nonnegative with a positive peak".into()));
        }
        let amplitude = amplitude.iter().map(|a| a / peak).collect();
        Ok(TargetField {
            width,
            height,
            amplitude,
            phase,
        })
    }

    pub fn amplitude(&self) -> &[f64] {
        &self.amplitude
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Divide out a Gaussian illumination of waist `waist_px` centred on the
    /// SLM, so that illumination times amplitude reproduces this target.
    ///
    /// The gain `exp(r²/w²)` is capped at `max_gain`; without a cap the far
    /// corners, where the illumination is negligible, would dominate the
    /// peak normalization.
    pub fn compensate_input(&self, waist_px: f64, max_gain: f64) -> Result<TargetField> {
        if !(waist_px > 0.0 && max_gain >= 1.0) {
            return Err(Error::Parameter("waist must be positive and gain cap at least 1".into()));
        }
        let (cx, cy) = centre(self.width, self.height);
        let amplitude: Vec<f64> = (0..self.height)
            .flat_map(|n| (0..self.width).map(move |m| (n, m)))
            .map(|(n, m)| {
                let r2 = ((m as f64 - cx).powi(2) + (n as f64 - cy).powi(2)) / (waist_px * waist_px);
                self.amplitude[n * self.width + m] * r2.exp().min(max_gain)
            })
            .collect();
        TargetField::new(self.width, self.height, amplitude, self.phase.clone())
    }
}

fn centre(width: usize, height: usize) -> (f64, f64) {
    ((width / 2) as f64, (height / 2) as f64)
}

/// Swap the halves of each axis so that index `len/2` moves to 0.
fn shift(data: &mut [Complex64], width: usize, height: usize, forward: bool) {
    let (sx, sy) = if forward {
        (width / 2, height / 2)
    } else {
        (width - width / 2, height - height / 2)
    };
    let copy = data.to_vec();
    for n in 0..height {
        for m in 0..width {
            data[((n + sy) % height) * width + (m + sx) % width] = copy[n * width + m];
        }
    }
}

/// Centred 2-D transform: index `len/2` is the origin on both sides.
fn centred_fft(data: &mut [Complex64], width: usize, height: usize, inverse: bool) {
    shift(data, width, height, false);
    let mut planner = FftPlanner::new();
    fft_2d(&mut planner, data, width, height, inverse);
    shift(data, width, height, true);
}

/// Focal-plane sample spacing (waist units) conjugate to `output_scale`.
fn focal_spacing(pixels: usize, output_scale: f64) -> f64 {
    TWO_PI / (pixels as f64 * output_scale)
}

/// Inverse-transform the focal-plane flat-top onto the SLM grid.
///
/// Fails with a clipping error when the amplitude at the SLM border
/// exceeds 1e-3 of its peak.
pub fn target_from_flattop(order: FlatTopOrder, slm: &SlmSpec, output_scale: f64) -> Result<TargetField> {
    if !(output_scale > 0.0) {
        return Err(Error::Parameter("output scale must be positive".into()));
    }
    let (w, h) = (slm.width, slm.height);
    let (cx, cy) = centre(w, h);
    let dx = focal_spacing(w, output_scale);
    let dy = focal_spacing(h, output_scale);
    let ex: Vec<f64> = (0..w).map(|p| flattop_profile(order.n() as f64, (p as f64 - cx) * dx)).collect();
    let ey: Vec<f64> = (0..h).map(|q| flattop_profile(order.m() as f64, (q as f64 - cy) * dy)).collect();
    let (ex, ey) = (&ex, &ey);
    let mut data: Vec<Complex64> = (0..h)
        .flat_map(|q| ex.iter().map(move |e| Complex64::new(e * ey[q], 0.0)))
        .collect();
    centred_fft(&mut data, w, h, true);
    let amplitude: Vec<f64> = data.iter().map(|v| v.norm()).collect();
    // the transform is real; ignore rounding-level negative values
    let floor = 1e-12 * amplitude.iter().fold(0.0_f64, |m, a| m.max(*a));
    let phase: Vec<f64> = data.iter().map(|v| if v.re < -floor { PI } else { 0.0 }).collect();
    let target = TargetField::new(w, h, amplitude, phase)?;
    let mut border = 0.0_f64;
    for m in 0..w {
        border = border.max(target.amplitude[m]).max(target.amplitude[(h - 1) * w + m]);
    }
    for n in 0..h {
        border = border.max(target.amplitude[n * w]).max(target.amplitude[n * w + w - 1]);
    }
    if border > 1e-3 {
        return Err(Error::Clipping(format!(
            "SLM-plane amplitude reaches {border:.2e} of its peak at the aperture edge; increase the output scale"
        )));
    }
    Ok(target)
}

/// Per-pixel SLM phase in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMask {
    slm: SlmSpec,
    values: Vec<f64>,
}

impl PhaseMask {
    pub fn new(slm: SlmSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != slm.pixels() {
            return Err(Error::Shape(format!("{} phases for {} pixels", values.len(), slm.pixels())));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..TWO_PI).contains(*v)) {
            return Err(Error::Range {
                func: "PhaseMask::new",
                value: *v,
                range: "[0, 2π)",
            });
        }
        Ok(PhaseMask { slm, values })
    }

    pub fn slm(&self) -> &SlmSpec {
        &self.slm
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(TWO_PI);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// Encoding of one pixel: returns `(M, Ψ)`.
///
/// `M = 1 + sinc⁻¹(A)/π`, `F = Φ − πM`, `Ψ = M · mod(F + 2πm/Λ, 2π)`.
/// The first Fourier coefficient of `exp(iMφ)` over a grating period is
/// `sinc(π(M−1)) e^{iπ(M−1)} = −A e^{iπM}`, so the first order carries
/// `A e^{i(Φ−π)}`.
pub fn encode_pixel(amplitude: f64, phase: f64, column: usize, grating_period: f64) -> Result<(f64, f64)> {
    let depth = 1.0 + sinc_inv(amplitude)? / PI;
    let f = phase - PI * depth;
    let ramp = TWO_PI * column as f64 / grating_period;
    Ok((depth, wrap(depth * wrap(f + ramp))))
}

/// Phase mask realizing `target` in the first diffraction order.
pub fn phase_mask(target: &TargetField, slm: &SlmSpec) -> Result<PhaseMask> {
    if target.width != slm.width || target.height != slm.height {
        return Err(Error::Shape("target and SLM sizes differ".into()));
    }
    let w = slm.width;
    let values = target
        .amplitude
        .par_iter()
        .zip(target.phase.par_iter())
        .enumerate()
        .map(|(i, (a, p))| encode_pixel(*a, *p, i % w, slm.grating_period).map(|(_, psi)| psi))
        .collect::<Result<Vec<f64>>>()?;
    PhaseMask::new(*slm, values)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Unnormalized Zernike polynomial `R_n^{|m|}(ρ) · cos(mθ)` (or `sin(|m|θ)`
/// for negative `m`).
pub fn zernike(n: usize, m: i32, rho: f64, theta: f64) -> Result<f64> {
    let am = m.unsigned_abs() as usize;
    if am > n || (n - am) % 2 != 0 {
        return Err(Error::InvalidIndex(format!("Zernike (n, m) = ({n}, {m}) needs n − |m| even and nonnegative")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Range {
            func: "zernike",
            value: rho,
            range: "[0, 1]",
        });
    }
    let mut radial = 0.0;
    for k in 0..=(n - am) / 2 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        radial += sign * factorial(n - k) / (factorial(k) * factorial((n + am) / 2 - k) * factorial((n - am) / 2 - k))
            * rho.powi((n - 2 * k) as i32);
    }
    let angular = if m >= 0 {
        (m as f64 * theta).cos()
    } else {
        (am as f64 * theta).sin()
    };
    Ok(radial * angular)
}

/// Astigmatism and coma weights (radians) on a disk of `radius_px`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZernikeCorrection {
    pub a2: f64,
    pub a3: f64,
    pub radius_px: f64,
}

impl ZernikeCorrection {
    pub fn new(a2: f64, a3: f64, radius_px: f64) -> Result<Self> {
        if !(radius_px > 0.0) || !a2.is_finite() || !a3.is_finite() {
            return Err(Error::Parameter("Zernike radius must be positive, weights finite".into()));
        }
        Ok(ZernikeCorrection { a2, a3, radius_px })
    }

    /// Disk of radius half the smaller SLM side.
    pub fn inscribed(a2: f64, a3: f64, slm: &SlmSpec) -> Result<Self> {
        Self::new(a2, a3, (slm.width.min(slm.height) / 2) as f64)
    }

    /// `a2 Z₂² + a3 Z₃¹` at pixel `(row, column)`, zero outside the disk.
    pub fn phase_at(&self, row: usize, column: usize, slm: &SlmSpec) -> f64 {
        let (cx, cy) = centre(slm.width, slm.height);
        let (dx, dy) = (column as f64 - cx, row as f64 - cy);
        let rho = (dx * dx + dy * dy).sqrt() / self.radius_px;
        if rho > 1.0 {
            return 0.0;
        }
        let (c, s) = if rho > 0.0 {
            (dx / (rho * self.radius_px), dy / (rho * self.radius_px))
        } else {
            (1.0, 0.0)
        };
        let cos2 = c * c - s * s;
        self.a2 * rho * rho * cos2 + self.a3 * (3.0 * rho.powi(3) - 2.0 * rho) * c
    }

    fn map(&self, slm: &SlmSpec) -> Vec<f64> {
        (0..slm.pixels())
            .into_par_iter()
            .map(|i| self.phase_at(i / slm.width, i % slm.width, slm))
            .collect()
    }
}

/// Add a Zernike correction to a mask, wrapping into `[0, 2π)`.
pub fn compose(mask: &PhaseMask, corr: &ZernikeCorrection) -> PhaseMask {
    let slm = mask.slm;
    let values = mask
        .values
        .par_iter()
        .enumerate()
        .map(|(i, v)| wrap(v + corr.phase_at(i / slm.width, i % slm.width, &slm)))
        .collect();
    PhaseMask { slm, values }
}

/// What the far field is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarFieldSetup {
    /// Flat-top whose intensity is the reference.
    pub order: FlatTopOrder,
    /// Frequency step per SLM pixel used to build the mask.
    pub output_scale: f64,
    /// Waist of the Gaussian illumination, in pixels.
    pub input_waist_px: f64,
    /// Wavefront error of the illumination, added to its phase.
    pub aberration: Option<ZernikeCorrection>,
    /// The flat region is where the analytic intensity is at least this
    /// fraction of its peak.
    pub flat_level: f64,
}

impl FarFieldSetup {
    pub fn new(order: FlatTopOrder, output_scale: f64, input_waist_px: f64) -> Self {
        FarFieldSetup {
            order,
            output_scale,
            input_waist_px,
            aberration: None,
            flat_level: DEFAULT_FLAT_LEVEL,
        }
    }

    pub fn with_aberration(mut self, aberration: ZernikeCorrection) -> Self {
        self.aberration = Some(aberration);
        self
    }

    pub fn with_flat_level(mut self, level: f64) -> Self {
        self.flat_level = level;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarFieldMetrics {
    /// First-order window power over total power.
    pub efficiency: f64,
    /// Relative RMS intensity deviation over the flat region.
    pub flat_rms: f64,
    /// Normalized inner product of simulated and analytic intensities.
    pub correlation: f64,
}

#[derive(Debug, Clone)]
pub struct FarField {
    /// First-order window; coordinates in focal-plane waist units.
    pub field: SampledField,
    pub metrics: FarFieldMetrics,
}

/// Default relative level bounding the flat region.
pub const DEFAULT_FLAT_LEVEL: f64 = 0.99;

/// Transform the illuminated mask and analyse the first diffraction order.
///
/// The window spans half the grating frequency on either side of the
/// first-order centre (the same bin count along rows). It must contain
/// the reference beam down to 1e-3 of its peak, otherwise the orders
/// are not separable and an error is returned.
pub fn simulate_far_field(mask: &PhaseMask, setup: &FarFieldSetup) -> Result<FarField> {
    let slm = mask.slm;
    let (w, h) = (slm.width, slm.height);
    if !(setup.input_waist_px > 0.0) {
        return Err(Error::Parameter("input waist must be positive".into()));
    }
    let (cx, cy) = centre(w, h);
    let aberration = setup.aberration.map(|a| a.map(&slm));
    let data: Vec<Complex64> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (n, m) = (i / w, i % w);
            let r2 = ((m as f64 - cx).powi(2) + (n as f64 - cy).powi(2)) / setup.input_waist_px.powi(2);
            let extra = aberration.as_ref().map_or(0.0, |a| a[i]);
            Complex64::from_polar((-r2).exp(), mask.values[i] + extra)
        })
        .collect();
    analyse_reflection(&slm, data, setup)
}

/// Far-field analysis of an arbitrary reflected SLM-plane field.
///
/// `setup.input_waist_px` and `setup.aberration` are not applied here; the
/// field is taken as given.
pub fn analyse_reflection(slm: &SlmSpec, mut data: Vec<Complex64>, setup: &FarFieldSetup) -> Result<FarField> {
    let (w, h) = (slm.width, slm.height);
    if data.len() != w * h {
        return Err(Error::Shape("reflected field must cover the SLM".into()));
    }
    if !(setup.output_scale > 0.0) {
        return Err(Error::Parameter("output scale must be positive".into()));
    }
    let dx = focal_spacing(w, setup.output_scale);
    let dy = focal_spacing(h, setup.output_scale);
    let extent_x = reach(setup.order.n());
    let extent_y = reach(setup.order.m());
    let half = (slm.first_order_bins() / 2.0).floor();
    let half_rows = half.min((h / 2) as f64);
    if !half.is_finite() || extent_x / dx >= half || extent_y / dy >= half_rows {
        return Err(Error::OrderOverlap(format!(
            "first-order window of ±{half} bins cannot hold the beam (±{:.1} × ±{:.1} bins) at grating period {} px",
            extent_x / dx,
            extent_y / dy,
            slm.grating_period
        )));
    }
    let (cx, cy) = centre(w, h);
    let total: f64 = data.iter().map(|v| v.norm_sqr()).sum();
    centred_fft(&mut data, w, h, false);
    let total_far = total * (w * h) as f64;

    let shift_bins = slm.first_order_bins().round() as i64;
    let half = half as i64;
    let half_rows = half_rows as i64;
    let (ncols, nrows) = ((2 * half) as usize, (2 * half_rows) as usize);
    let mut window = Vec::with_capacity(ncols * nrows);
    for q in -half_rows..half_rows {
        let row = (cy as i64 + q).rem_euclid(h as i64) as usize;
        for p in -half..half {
            let col = (cx as i64 + shift_bins + p).rem_euclid(w as i64) as usize;
            window.push(data[row * w + col]);
        }
    }
    let window_power: f64 = window.iter().map(|v| v.norm_sqr()).sum();
    let grid = Grid::new(
        vec![-half as f64 * dx, -half_rows as f64 * dy],
        vec![dx, dy],
        vec![ncols, nrows],
    )?;
    let reference: Vec<f64> = (0..nrows)
        .flat_map(|j| (0..ncols).map(move |i| (i, j)))
        .map(|(i, j)| {
            let e = flattop_profile(setup.order.n() as f64, grid.coord(0, i))
                * flattop_profile(setup.order.m() as f64, grid.coord(1, j));
            e * e
        })
        .collect();
    let simulated: Vec<f64> = window.iter().map(|v| v.norm_sqr()).collect();
    let metrics = FarFieldMetrics {
        efficiency: window_power / total_far,
        flat_rms: flat_rms(&simulated, &reference, setup.flat_level),
        correlation: correlation(&simulated, &reference),
    };
    Ok(FarField {
        field: SampledField::new(grid, window)?,
        metrics,
    })
}

/// Half-width (waist units) beyond which the profile stays below 1e-3.
fn reach(order: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, 50.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if flattop_profile(order as f64, mid) > 1e-3 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb).sqrt()
    }
}

/// Standard deviation over mean of `simulated` where `reference` is flat.
fn flat_rms(simulated: &[f64], reference: &[f64], level: f64) -> f64 {
    let peak = reference.iter().fold(0.0_f64, |m, r| m.max(*r));
    let flat: Vec<f64> = simulated
        .iter()
        .zip(reference)
        .filter(|(_, r)| **r >= level * peak)
        .map(|(s, _)| *s)
        .collect();
    if flat.is_empty() {
        return f64::NAN;
    }
    let mean = flat.iter().sum::<f64>() / flat.len() as f64;
    let var = flat.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / flat.len() as f64;
    var.sqrt() / mean
}

/// Score maximized by [`optimize_correction`].
pub fn uniformity_score(m: &FarFieldMetrics) -> f64 {
    m.correlation - m.flat_rms
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizeOutcome {
    pub correction: ZernikeCorrection,
    pub score: f64,
    pub evaluations: usize,
    /// False when the evaluation budget ran out first.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    pub tolerance: f64,
    pub max_evaluations: usize,
    /// Half-width of the bracket searched around the current point.
    pub bracket: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            tolerance: 0.01,
            max_evaluations: 200,
            bracket: 1.0,
        }
    }
}

/// Coordinate descent over `(a2, a3)` with golden-section line searches.
///
/// `objective` is maximized. Sweeps alternate between the two weights
/// until neither moves by more than the tolerance in a full sweep.
pub fn optimize_correction<F>(initial: ZernikeCorrection, options: OptimizeOptions, mut objective: F) -> Result<OptimizeOutcome>
where
    F: FnMut(&ZernikeCorrection) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut best = initial;
    let mut evaluations = 0usize;
    let mut best_score = objective(&best)?;
    evaluations += 1;
    let mut bracket = options.bracket;
    loop {
        let start = best;
        for axis in 0..2 {
            let base = best;
            let set = |v: f64| {
                let mut c = base;
                if axis == 0 {
                    c.a2 = v;
                } else {
                    c.a3 = v;
                }
                c
            };
            let centre = if axis == 0 { base.a2 } else { base.a3 };
            let (mut lo, mut hi) = (centre - bracket, centre + bracket);
            let mut x1 = hi - inv_phi * (hi - lo);
            let mut x2 = lo + inv_phi * (hi - lo);
            let mut f1 = objective(&set(x1))?;
            let mut f2 = objective(&set(x2))?;
            evaluations += 2;
            while hi - lo > options.tolerance && evaluations < options.max_evaluations {
                if f1 >= f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - inv_phi * (hi - lo);
                    f1 = objective(&set(x1))?;
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + inv_phi * (hi - lo);
                    f2 = objective(&set(x2))?;
                }
                evaluations += 1;
            }
            let (x, f) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
            if f > best_score {
                best_score = f;
                best = set(x);
            }
            if evaluations >= options.max_evaluations {
                log::warn!("Zernike optimizer stopped at the evaluation budget ({evaluations})");
                return Ok(OptimizeOutcome {
                    correction: best,
                    score: best_score,
                    evaluations,
                    converged: false,
                });
            }
        }
        let moved = (best.a2 - start.a2).abs().max((best.a3 - start.a3).abs());
        if moved <= options.tolerance {
            return Ok(OptimizeOutcome {
                correction: best,
                score: best_score,
                evaluations,
                converged: true,
            });
        }
        // later sweeps only refine
        bracket = (2.0 * moved).clamp(4.0 * options.tolerance, options.bracket);
    }
}

fn gray_level(psi: f64) -> u8 {
    (psi / TWO_PI * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn phase_of_gray(g: u8) -> f64 {
    let v = g as f64 * TWO_PI / 255.0;
    if v >= TWO_PI {
        TWO_PI * (1.0 - f64::EPSILON)
    } else {
        v
    }
}

/// 8-bit gray levels, `round(Ψ/2π × 255)` with halves rounded up.
pub fn quantize(mask: &PhaseMask) -> Vec<u8> {
    mask.values.iter().map(|v| gray_level(*v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskFormat {
    Png,
    Pgm,
}

impl MaskFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
            Some(e) if e == "png" => Ok(MaskFormat::Png),
            Some(e) if e == "pgm" => Ok(MaskFormat::Pgm),
            _ => Err(Error::Format(format!("{}: expected a .png or .pgm path", path.display()))),
        }
    }
}

pub fn export_mask(mask: &PhaseMask, path: &Path) -> Result<()> {
    let gray = quantize(mask);
    let (w, h) = (mask.slm.width, mask.slm.height);
    match MaskFormat::from_path(path)? {
        MaskFormat::Png => {
            let img = image::GrayImage::from_raw(w as u32, h as u32, gray)
                .ok_or_else(|| Error::Shape("mask buffer size".into()))?;
            img.save(path)?;
        }
        MaskFormat::Pgm => {
            let mut out = BufWriter::new(File::create(path)?);
            write!(out, "P5\n{w} {h}\n255\n")?;
            out.write_all(&gray)?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Read a mask written by [`export_mask`]; `slm` supplies pitch and grating.
pub fn import_mask(path: &Path, slm: &SlmSpec) -> Result<PhaseMask> {
    let (w, h, gray) = match MaskFormat::from_path(path)? {
        MaskFormat::Png => {
            let img = image::open(path)?.to_luma8();
            let (w, h) = img.dimensions();
            (w as usize, h as usize, img.into_raw())
        }
        MaskFormat::Pgm => read_pgm(BufReader::new(File::open(path)?))?,
    };
    if w != slm.width || h != slm.height {
        return Err(Error::Shape(format!("image is {w}×{h}, SLM is {}×{}", slm.width, slm.height)));
    }
    PhaseMask::new(*slm, gray.into_iter().map(phase_of_gray).collect())
}

fn read_pgm<R: BufRead>(mut input: R) -> Result<(usize, usize, Vec<u8>)> {
    let mut tokens = Vec::new();
    let mut line = String::new();
    while tokens.len() < 4 {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(Error::Format("truncated PGM header".into()));
        }
        let content = line.split('#').next().unwrap_or("");
        tokens.extend(content.split_whitespace().map(str::to_owned));
    }
    if tokens[0] != "P5" || tokens[3] != "255" {
        return Err(Error::Format("only binary 8-bit PGM (P5, maxval 255) is supported".into()));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM size {s}")));
    let (w, h) = (parse(&tokens[1])?, parse(&tokens[2])?);
    let mut gray = vec![0u8; w * h];
    input.read_exact(&mut gray)?;
    Ok((w, h, gray))
}
