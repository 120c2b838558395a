//! Extraction of trap, temperature, Rabi and field parameters from
//! measurements.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{golden_section, levenberg_marquardt, LeastSquares};
use crate::propagation::{Grid, SampledField};
use crate::qsim::{sample_thermal, SamplingMode, TrapSpec, BOLTZMANN};
use crate::specfun::hermite_all;

/// Trap depth, waist and Rayleigh length from the harmonic frequencies of
/// a Gaussian tweezer.
///
/// `ω_r² = 4U₀/(m w₀²)` and `ω_z² = 2U₀/(m z₀²)` give `w₀/z₀ = √2 ω_z/ω_r`;
/// with `z₀ = π w₀²/λ` this fixes `w₀ = λ ω_r / (√2 π ω_z)`.
pub fn invert_trap(omega_r: f64, omega_z: f64, wavelength_m: f64, mass_kg: f64) -> Result<TrapSpec> {
    if [omega_r, omega_z, wavelength_m, mass_kg].iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Parameter("frequencies, wavelength and mass must be positive".into()));
    }
    let waist = wavelength_m * omega_r / (std::f64::consts::SQRT_2 * PI * omega_z);
    if !(waist > 0.0 && waist.is_finite()) {
        return Err(Error::Parameter("trap frequencies imply no valid waist".into()));
    }
    let depth = mass_kg * waist * waist * omega_r * omega_r / 4.0;
    TrapSpec::from_parts(depth, waist, PI * waist * waist / wavelength_m, wavelength_m, 0.0, mass_kg)
}

/// Fraction of initially bound atoms still bound after switching the trap
/// off for each release time.
///
/// An atom counts as bound when its kinetic plus potential energy is below
/// the trap depth; samples unbound at release are discarded, so the
/// survival at zero release time is 1.
pub fn release_recapture(
    trap: &TrapSpec,
    temperature_k: f64,
    release_times_s: &[f64],
    n_mc: usize,
    mode: SamplingMode,
    seed: u64,
) -> Result<Vec<f64>> {
    if release_times_s.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::Parameter("release times must be nonnegative".into()));
    }
    if n_mc == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    let trap = trap.with_temperature(temperature_k)?;
    let atoms = sample_thermal(&trap, mode, n_mc, seed)?;
    let m = trap.mass_kg;
    let bound: Vec<_> = atoms
        .iter()
        .filter(|a| a.kinetic_energy(m) + trap.potential(a.position_m) < trap.depth_j)
        .collect();
    if bound.is_empty() {
        return Err(Error::Degenerate("no sampled atom is bound".into()));
    }
    Ok(release_times_s
        .iter()
        .map(|t| {
            let kept = bound
                .iter()
                .filter(|a| a.kinetic_energy(m) + trap.potential(a.position(*t)) < trap.depth_j)
                .count();
            kept as f64 / bound.len() as f64
        })
        .collect())
}

/// Temperature whose simulated release–recapture curve best matches
/// `survival` in the least-squares sense.
///
/// Every trial temperature reuses the same random stream, so the
/// objective varies smoothly with `T` in harmonic sampling.
pub fn fit_temperature(
    trap: &TrapSpec,
    release_times_s: &[f64],
    survival: &[f64],
    n_mc: usize,
    mode: SamplingMode,
    seed: u64,
) -> Result<f64> {
    if release_times_s.len() != survival.len() || survival.is_empty() {
        return Err(Error::Shape("release times and survival differ in length".into()));
    }
    let mut failure = None;
    let mut sse = |t: f64| match release_recapture(trap, t, release_times_s, n_mc, mode, seed) {
        Ok(curve) => curve.iter().zip(survival).map(|(a, b)| (a - b).powi(2)).sum(),
        Err(e) => {
            failure.get_or_insert(e);
            f64::INFINITY
        }
    };
    let t_max = 2.0 * trap.depth_j / BOLTZMANN;
    let t_min = 1e-3 * t_max;
    let n = 48;
    let grid: Vec<f64> = (0..n).map(|k| t_min * (t_max / t_min).powf(k as f64 / (n - 1) as f64)).collect();
    let values: Vec<f64> = grid.iter().map(|t| sse(*t)).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(n - 1)];
    let (t, _) = golden_section(&mut sse, lo, hi, 1e-4 * grid[best]);
    match failure {
        Some(e) => Err(e),
        None => Ok(t),
    }
}

/// Parameters of `P(t) = 1 − ½ (Ω₀²/Ω̃²)(1 − e^{−γt} cos Ω̃t)` with
/// `Ω̃ = √(Ω₀² + δ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub omega0_rad_s: f64,
    /// Only `|δ|` is identifiable.
    pub delta_rad_s: f64,
    pub gamma_per_s: f64,
    /// Covariance of `(Ω₀, δ, γ)`; infinite where a parameter is not
    /// determined by the data.
    pub covariance: [[f64; 3]; 3],
    pub residual_norm: f64,
}

impl FitResult {
    pub fn generalized_rabi(&self) -> f64 {
        self.omega0_rad_s.hypot(self.delta_rad_s)
    }

    pub fn model(&self, t: f64) -> f64 {
        damped_rabi(self.omega0_rad_s, self.delta_rad_s, self.gamma_per_s, t)
    }

    pub fn std_errors(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| self.covariance[i][i].sqrt())
    }
}

fn damped_rabi(omega0: f64, delta: f64, gamma: f64, t: f64) -> f64 {
    let w2 = omega0 * omega0 + delta * delta;
    if w2 == 0.0 {
        return 1.0;
    }
    1.0 - 0.5 * omega0 * omega0 / w2 * (1.0 - (-gamma * t).exp() * (w2.sqrt() * t).cos())
}

/// Frequency of the strongest periodogram peak of `(s, p)`.
fn dominant_frequency(s: &[f64], p: &[f64]) -> f64 {
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    let mut sorted = s.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min_gap = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let nyquist = PI / min_gap;
    let step = PI / 8.0;
    let mut best = (PI, 0.0);
    let mut w = PI;
    while w <= nyquist {
        let (mut re, mut im) = (0.0, 0.0);
        for (si, pi) in s.iter().zip(p) {
            let (sn, cs) = (w * si).sin_cos();
            re += (pi - mean) * cs;
            im += (pi - mean) * sn;
        }
        let power = re * re + im * im;
        if power > best.1 {
            best = (w, power);
        }
        w += step;
    }
    best.0
}

/// Least-squares fit of the damped Rabi model to population data.
///
/// Times are rescaled by the sampled span, the generalized Rabi frequency
/// is seeded from the periodogram peak, and several starts are tried.
pub fn fit_damped_rabi(t: &[f64], p: &[f64]) -> Result<FitResult> {
    if t.len() != p.len() {
        return Err(Error::Shape("time and population lengths differ".into()));
    }
    if t.len() < 8 {
        return Err(Error::Parameter("need at least 8 samples".into()));
    }
    if t.iter().chain(p).any(|v| !v.is_finite()) {
        return Err(Error::Parameter("non-finite data".into()));
    }
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    if p.iter().all(|v| (v - mean).abs() < 1e-12) {
        return Err(Error::Degenerate("population is constant".into()));
    }
    let span = t.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if span == 0.0 {
        return Err(Error::Degenerate("all samples at t = 0".into()));
    }
    let s: Vec<f64> = t.iter().map(|v| v / span).collect();
    let residuals_for = |fix_gamma: bool| {
        let s = &s;
        move |q: &[f64]| {
            let g = if fix_gamma { 0.0 } else { q[2] };
            DVector::from_iterator(s.len(), s.iter().zip(p).map(|(si, pi)| damped_rabi(q[0], q[1], g, *si) - pi))
        }
    };
    let peak = dominant_frequency(&s, p);
    let amplitude = (1.0 - mean).clamp(0.005, 0.5);
    let mut best: Option<LeastSquares> = None;
    for scale in [0.85, 1.0, 1.15] {
        let w = peak * scale;
        let w0 = w * (2.0 * amplitude).sqrt();
        let d = (w * w - w0 * w0).max(0.0).sqrt().max(0.05 * w);
        for g in [0.0, 2.0] {
            let fit = levenberg_marquardt(residuals_for(false), &[w0, d, g], 500);
            if best.as_ref().map_or(true, |b| fit.cost < b.cost) {
                best = Some(fit);
            }
        }
    }
    let mut fit = best.expect("at least one start");
    let mut free = 3;
    if fit.params[2] < 0.0 {
        let fixed = levenberg_marquardt(residuals_for(true), &fit.params[..2], 500);
        fit = LeastSquares {
            params: vec![fixed.params[0], fixed.params[1], 0.0],
            ..fixed
        };
        free = 2;
    }
    let n = s.len() as f64;
    let sigma2 = fit.cost / (n - free as f64).max(1.0);
    let cov = covariance(&fit.jacobian.columns(0, free).into_owned(), sigma2);
    let mut covariance = [[0.0; 3]; 3];
    for i in 0..free {
        for j in 0..free {
            covariance[i][j] = cov[(i, j)] / (span * span);
        }
    }
    Ok(FitResult {
        omega0_rad_s: fit.params[0].abs() / span,
        delta_rad_s: fit.params[1].abs() / span,
        gamma_per_s: fit.params[2].max(0.0) / span,
        covariance,
        residual_norm: fit.cost.sqrt(),
    })
}

/// `σ² (JᵀJ)⁻¹`, with infinite variance along directions the Jacobian
/// does not resolve.
fn covariance(jac: &DMatrix<f64>, sigma2: f64) -> DMatrix<f64> {
    let jtj = jac.transpose() * jac;
    let k = jtj.nrows();
    let scale: Vec<f64> = (0..k).map(|i| jtj[(i, i)].sqrt()).collect();
    let max_scale = scale.iter().fold(0.0_f64, |m, v| m.max(*v));
    let resolved: Vec<bool> = scale.iter().map(|s| *s > 1e-6 * max_scale).collect();
    let idx: Vec<usize> = (0..k).filter(|i| resolved[*i]).collect();
    let mut out = DMatrix::from_element(k, k, 0.0);
    for i in 0..k {
        if !resolved[i] {
            out[(i, i)] = f64::INFINITY;
        }
    }
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| jtj[(idx[a], idx[b])] / (scale[idx[a]] * scale[idx[b]]));
    let inv = sub.clone().try_inverse().unwrap_or_else(|| {
        sub.pseudo_inverse(1e-14)
            .unwrap_or_else(|_| DMatrix::from_element(idx.len(), idx.len(), f64::INFINITY))
    });
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            out[(i, j)] = sigma2 * inv[(a, b)] / (scale[i] * scale[j]);
        }
    }
    out
}

/// Crosstalk `η = Ω₀ / Ω̄` of a neighbour fit.
pub fn crosstalk_eta(fit: &FitResult, omega_bar: f64) -> Result<f64> {
    if !(omega_bar > 0.0) {
        return Err(Error::Parameter("target Rabi frequency must be positive".into()));
    }
    Ok(fit.omega0_rad_s / omega_bar)
}

/// Atom survival probability on a regular `x`–`y` grid, `x` fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonizationMap {
    pub x_um: Vec<f64>,
    pub y_um: Vec<f64>,
    pub survival: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct MapRow {
    x_um: f64,
    y_um: f64,
    p: f64,
}

fn regular_axis(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Ok((values[0], 1.0));
    }
    let step = values[1] - values[0];
    let ok = values
        .windows(2)
        .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-6 * step.abs());
    if !(ok && step > 0.0) {
        return Err(Error::Format("map axes must be increasing and evenly spaced".into()));
    }
    Ok((values[0], step))
}

impl IonizationMap {
    pub fn new(x_um: Vec<f64>, y_um: Vec<f64>, survival: Vec<f64>) -> Result<Self> {
        if x_um.is_empty() || y_um.is_empty() || survival.len() != x_um.len() * y_um.len() {
            return Err(Error::Shape("survival must have one entry per grid point".into()));
        }
        if survival.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Parameter("survival probabilities must lie in [0, 1]".into()));
        }
        regular_axis(&x_um)?;
        regular_axis(&y_um)?;
        Ok(IonizationMap { x_um, y_um, survival })
    }

    /// Rows `x_um,y_um,p` with a header, in any order.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut rows = Vec::new();
        for row in csv::Reader::from_reader(input).deserialize::<MapRow>() {
            rows.push(row.map_err(|e| Error::Format(e.to_string()))?);
        }
        if rows.is_empty() {
            return Err(Error::Format("empty ionization map".into()));
        }
        let axis = |f: fn(&MapRow) -> f64| {
            let mut v: Vec<f64> = rows.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1.0));
            v
        };
        let (xs, ys) = (axis(|r| r.x_um), axis(|r| r.y_um));
        let (x0, dx) = regular_axis(&xs)?;
        let (y0, dy) = regular_axis(&ys)?;
        let mut survival = vec![f64::NAN; xs.len() * ys.len()];
        for r in &rows {
            let i = ((r.x_um - x0) / dx).round() as usize;
            let j = ((r.y_um - y0) / dy).round() as usize;
            let slot = &mut survival[j * xs.len() + i];
            if !slot.is_nan() {
                return Err(Error::Format(format!("duplicate map point ({}, {})", r.x_um, r.y_um)));
            }
            *slot = r.p;
        }
        if survival.iter().any(|p| p.is_nan()) {
            return Err(Error::Format("ionization map does not cover a full grid".into()));
        }
        IonizationMap::new(xs, ys, survival)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn grid(&self) -> Result<Grid> {
        let (x0, dx) = regular_axis(&self.x_um)?;
        let (y0, dy) = regular_axis(&self.y_um)?;
        Grid::new(vec![x0, y0], vec![dx, dy], vec![self.x_um.len(), self.y_um.len()])
    }
}

/// Relation between survival probability and beam intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntensityMapping {
    /// `I ∝ 1 − p`.
    Loss,
    /// Piecewise-linear calibration through `[p, I]` points sorted by `p`.
    Curve { points: Vec<[f64; 2]> },
}

impl Default for IntensityMapping {
    fn default() -> Self {
        IntensityMapping::Loss
    }
}

impl IntensityMapping {
    pub fn intensity(&self, p: f64) -> Result<f64> {
        match self {
            IntensityMapping::Loss => Ok(1.0 - p),
            IntensityMapping::Curve { points } => {
                if points.len() < 2 || points.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err(Error::Parameter("calibration curve needs two or more points with increasing p".into()));
                }
                let k = points
                    .windows(2)
                    .position(|w| p <= w[1][0])
                    .unwrap_or(points.len() - 2);
                let (a, b) = (points[k], points[k + 1]);
                Ok(a[1] + (b[1] - a[1]) * (p - a[0]) / (b[0] - a[0]))
            }
        }
    }
}

/// Field amplitude `E₀ √(I/I₀)` under a flat phase, on the map grid in µm.
pub fn reconstruct_field(map: &IonizationMap, mapping: &IntensityMapping, e0: f64, i0: f64) -> Result<SampledField> {
    if !(i0 > 0.0) {
        return Err(Error::Parameter("reference intensity must be positive".into()));
    }
    let values = map
        .survival
        .iter()
        .map(|p| {
            let i = mapping.intensity(*p)?;
            if i < -1e-12 {
                return Err(Error::Parameter(format!("negative intensity {i} from survival {p}")));
            }
            Ok(Complex64::from(e0 * (i.max(0.0) / i0).sqrt()))
        })
        .collect::<Result<_>>()?;
    SampledField::new(map.grid()?, values)
}

/// Hermite–Gauss coefficients `c_nm` of a sampled 2-D field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HgDecomposition {
    pub waist_um: f64,
    pub max_order: usize,
    /// `coeffs[n][m]` multiplies `HG_n(x) HG_m(y)`.
    pub coeffs: Vec<Vec<Complex64>>,
    /// `‖E − Σ c_nm HG_n HG_m‖ / ‖E‖` on the grid.
    pub reconstruction_error: f64,
}

/// `H_n(√2 u/w) e^{−u²/w²}` for `n ≤ max_order`.
fn hg_table(coords: &[f64], waist: f64, max_order: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(coords.len(), max_order + 1);
    for (i, u) in coords.iter().enumerate() {
        let v = u / waist;
        let g = (-v * v).exp();
        for (n, h) in hermite_all(max_order, std::f64::consts::SQRT_2 * v).iter().enumerate() {
            m[(i, n)] = h * g;
        }
    }
    m
}

impl HgDecomposition {
    pub fn eval(&self, x_um: f64, y_um: f64) -> Complex64 {
        let hx = hg_table(&[x_um], self.waist_um, self.max_order);
        let hy = hg_table(&[y_um], self.waist_um, self.max_order);
        let mut sum = Complex64::from(0.0);
        for (n, row) in self.coeffs.iter().enumerate() {
            for (m, c) in row.iter().enumerate() {
                sum += c * hx[(0, n)] * hy[(0, m)];
            }
        }
        sum
    }
}

/// Overlap coefficients `⟨E, HG_nm⟩ / ‖HG_nm‖²` by the midpoint rule on
/// the field's grid, for `n, m ≤ max_order`.
pub fn decompose_hg(field: &SampledField, waist_um: f64, max_order: usize) -> Result<HgDecomposition> {
    if !(waist_um > 0.0) {
        return Err(Error::Parameter("waist must be positive".into()));
    }
    if field.grid.dims() != 2 {
        return Err(Error::Shape("decomposition needs a 2-D field".into()));
    }
    let (nx, ny) = (field.grid.counts[0], field.grid.counts[1]);
    let xs: Vec<f64> = (0..nx).map(|i| field.grid.coord(0, i)).collect();
    let ys: Vec<f64> = (0..ny).map(|j| field.grid.coord(1, j)).collect();
    let bx = hg_table(&xs, waist_um, max_order).map(Complex64::from);
    let by = hg_table(&ys, waist_um, max_order).map(Complex64::from);
    // Rows index y, columns index x.
    let e = DMatrix::from_row_slice(ny, nx, &field.values);
    let norms = |b: &DMatrix<Complex64>| -> Vec<f64> { b.column_iter().map(|c| c.norm_squared()).collect() };
    let (nx2, ny2) = (norms(&bx), norms(&by));
    if nx2.iter().chain(&ny2).any(|v| *v == 0.0) {
        return Err(Error::Degenerate("grid does not resolve the mode basis".into()));
    }
    // c[m][n] before normalization: Byᵀ E Bx.
    let raw = by.transpose() * &e * &bx;
    let mut coeffs = vec![vec![Complex64::from(0.0); max_order + 1]; max_order + 1];
    for (n, row) in coeffs.iter_mut().enumerate() {
        for (m, c) in row.iter_mut().enumerate() {
            *c = raw[(m, n)] / (nx2[n] * ny2[m]);
        }
    }
    let c_mat = DMatrix::from_fn(max_order + 1, max_order + 1, |m, n| coeffs[n][m]);
    let model = &by * c_mat * bx.transpose();
    let total = e.norm();
    let reconstruction_error = if total > 0.0 { (&e - model).norm() / total } else { 0.0 };
    Ok(HgDecomposition {
        waist_um,
        max_order,
        coeffs,
        reconstruction_error,
    })
}
