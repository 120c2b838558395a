//! Off-focus evaluation of flat-top beams.
//!
//! Transverse coordinates are in units of the waist `w0`, the longitudinal
//! coordinate in units of the Rayleigh length `z0`. In these units the
//! slowly varying envelope obeys `(∂²x + ∂²y) E = 4i ∂z E`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flattop::{check_even, hg_coefficients, Basis, FlatTopOrder, ModeExpansion};
use crate::specfun::hermite_all;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Gaussian-beam scale parameters of the mode basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamGeometry {
    waist_um: f64,
    rayleigh_um: f64,
    wavelength_nm: f64,
}

impl BeamGeometry {
    pub fn new(waist_um: f64, wavelength_nm: f64) -> Result<Self> {
        if !(waist_um > 0.0 && wavelength_nm > 0.0) {
            return Err(Error::Parameter("waist and wavelength must be positive".into()));
        }
        let rayleigh_um = PI * waist_um * waist_um / (wavelength_nm * 1e-3);
        Ok(BeamGeometry {
            waist_um,
            rayleigh_um,
            wavelength_nm,
        })
    }

    /// Construct from all three scales, checking `z0 = π w0² / λ`.
    pub fn from_parts(waist_um: f64, rayleigh_um: f64, wavelength_nm: f64) -> Result<Self> {
        let g = Self::new(waist_um, wavelength_nm)?;
        if ((rayleigh_um - g.rayleigh_um) / g.rayleigh_um).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "Rayleigh length {rayleigh_um} µm inconsistent with π w0²/λ = {} µm",
                g.rayleigh_um
            )));
        }
        Ok(g)
    }

    pub fn waist_um(&self) -> f64 {
        self.waist_um
    }

    pub fn rayleigh_um(&self) -> f64 {
        self.rayleigh_um
    }

    pub fn wavelength_nm(&self) -> f64 {
        self.wavelength_nm
    }

    /// Plane-wave carrier `exp(-i · 2z0²/w0² · z)` at normalized `z`.
    ///
    /// `2z0²/w0² = 2π z0/λ`, so this is the usual `exp(-ikz)` with `z`
    /// measured in Rayleigh lengths.
    pub fn carrier(&self, z: f64) -> Complex64 {
        let k_z0 = 2.0 * self.rayleigh_um * self.rayleigh_um / (self.waist_um * self.waist_um);
        Complex64::from_polar(1.0, -k_z0 * z)
    }
}

/// Hermite–Gaussian mode `HG_n(x, z)` off the focal plane.
///
/// The Gouy factor `((i−z)/(i+z))^{n/2}` equals `exp(i n arctan z)`; the
/// base never crosses the branch cut for real `z`, so this form is the
/// principal power and is continuous along the axis.
pub fn hg_mode_xz(n: usize, x: f64, z: f64) -> Complex64 {
    hg_modes_xz(n, x, z)[n]
}

/// `HG_0 ..= HG_n` at one point.
pub fn hg_modes_xz(n_max: usize, x: f64, z: f64) -> Vec<Complex64> {
    let q = Complex64::new(1.0, -z);
    let envelope = q.sqrt().inv() * (-(x * x) / q).exp();
    let arg = std::f64::consts::SQRT_2 * x / (1.0 + z * z).sqrt();
    let h = hermite_all(n_max, arg);
    let gouy_step = z.atan();
    h.iter()
        .enumerate()
        .map(|(n, hn)| envelope * Complex64::from_polar(*hn, n as f64 * gouy_step))
        .collect()
}

/// Field of a Hermite–Gaussian expansion at `(x, z)`.
pub fn expansion_field_xz(expansion: &ModeExpansion, x: f64, z: f64) -> Result<Complex64> {
    if expansion.basis() != Basis::HermiteGauss {
        return Err(Error::Parameter("expected a Hermite–Gauss expansion".into()));
    }
    let modes = hg_modes_xz(expansion.max_index(), x, z);
    Ok(expansion.coeffs().iter().map(|(n, c)| modes[*n] * *c).sum())
}

/// One-axis flat-top beam with cached coefficients.
#[derive(Debug, Clone)]
pub struct FlatTopBeam1d {
    expansion: ModeExpansion,
}

impl FlatTopBeam1d {
    pub fn new(n_order: usize) -> Result<Self> {
        check_even(n_order)?;
        Ok(FlatTopBeam1d {
            expansion: hg_coefficients(n_order)?,
        })
    }

    pub fn from_expansion(expansion: ModeExpansion) -> Result<Self> {
        if expansion.basis() != Basis::HermiteGauss {
            return Err(Error::Parameter("expected a Hermite–Gauss expansion".into()));
        }
        Ok(FlatTopBeam1d { expansion })
    }

    pub fn expansion(&self) -> &ModeExpansion {
        &self.expansion
    }

    pub fn field(&self, x: f64, z: f64) -> Complex64 {
        let modes = hg_modes_xz(self.expansion.max_index(), x, z);
        self.expansion.coeffs().iter().map(|(n, c)| modes[*n] * *c).sum()
    }
}

/// `E_N(x, z)` for the order-`n_order` flat-top.
pub fn field_xz(n_order: usize, x: f64, z: f64) -> Result<Complex64> {
    Ok(FlatTopBeam1d::new(n_order)?.field(x, z))
}

/// Separable two-axis beam `E_NM(x, y, z) = E_N(x, z) E_M(y, z)`.
#[derive(Debug, Clone)]
pub struct FlatTopBeam {
    x_axis: FlatTopBeam1d,
    y_axis: FlatTopBeam1d,
    carrier: Option<BeamGeometry>,
}

impl FlatTopBeam {
    pub fn new(order: FlatTopOrder) -> Result<Self> {
        Ok(FlatTopBeam {
            x_axis: FlatTopBeam1d::new(order.n())?,
            y_axis: FlatTopBeam1d::new(order.m())?,
            carrier: None,
        })
    }

    /// Multiply every value by the plane-wave carrier of `geometry`.
    pub fn with_carrier(mut self, geometry: BeamGeometry) -> Self {
        self.carrier = Some(geometry);
        self
    }

    pub fn field(&self, x: f64, y: f64, z: f64) -> Complex64 {
        let e = self.x_axis.field(x, z) * self.y_axis.field(y, z);
        match &self.carrier {
            Some(g) => e * g.carrier(z),
            None => e,
        }
    }
}

/// Convenience wrapper around [`FlatTopBeam::field`].
pub fn field_xyz(order: FlatTopOrder, x: f64, y: f64, z: f64, carrier: Option<BeamGeometry>) -> Result<Complex64> {
    let mut beam = FlatTopBeam::new(order)?;
    if let Some(g) = carrier {
        beam = beam.with_carrier(g);
    }
    Ok(beam.field(x, y, z))
}

/// Regular 1-D or 2-D sampling lattice. Axis 0 is `x` (fastest varying).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Grid {
    pub fn new(origin: Vec<f64>, spacing: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        let dims = counts.len();
        if !(dims == 1 || dims == 2) || origin.len() != dims || spacing.len() != dims {
            return Err(Error::Shape("grid must be 1-D or 2-D with matching axes".into()));
        }
        if spacing.iter().any(|s| !(*s > 0.0)) || counts.iter().any(|c| *c == 0) {
            return Err(Error::Parameter("grid spacing and counts must be positive".into()));
        }
        Ok(Grid {
            origin,
            spacing,
            counts,
        })
    }

    /// `n` points centred on zero spanning `[-half_width, half_width)`.
    pub fn centered_1d(n: usize, half_width: f64) -> Result<Self> {
        let dx = 2.0 * half_width / n as f64;
        Grid::new(vec![-half_width], vec![dx], vec![n])
    }

    pub fn centered_2d(n: usize, half_width: f64) -> Result<Self> {
        let dx = 2.0 * half_width / n as f64;
        Grid::new(vec![-half_width; 2], vec![dx; 2], vec![n; 2])
    }

    pub fn dims(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + self.spacing[axis] * i as f64
    }
}

/// Complex samples on a [`Grid`], row-major with `x` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

impl SampledField {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(SampledField { grid, values })
    }

    /// Sample `f(x, y)`; for 1-D grids `y` is passed as zero.
    pub fn sample<F: Fn(f64, f64) -> Complex64>(grid: Grid, f: F) -> Self {
        let values = match grid.dims() {
            1 => (0..grid.counts[0]).map(|i| f(grid.coord(0, i), 0.0)).collect(),
            _ => {
                let (nx, ny) = (grid.counts[0], grid.counts[1]);
                let mut v = Vec::with_capacity(nx * ny);
                for j in 0..ny {
                    let y = grid.coord(1, j);
                    for i in 0..nx {
                        v.push(f(grid.coord(0, i), y));
                    }
                }
                v
            }
        };
        SampledField { grid, values }
    }

    pub fn peak_amplitude(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Largest amplitude on the outer edge of the grid.
    pub fn boundary_amplitude(&self) -> f64 {
        match self.grid.dims() {
            1 => self.values[0].norm().max(self.values[self.values.len() - 1].norm()),
            _ => {
                let (nx, ny) = (self.grid.counts[0], self.grid.counts[1]);
                let mut m = 0.0_f64;
                for i in 0..nx {
                    m = m.max(self.values[i].norm()).max(self.values[(ny - 1) * nx + i].norm());
                }
                for j in 0..ny {
                    m = m.max(self.values[j * nx].norm()).max(self.values[j * nx + nx - 1].norm());
                }
                m
            }
        }
    }

    /// `Σ |E|² dV`.
    pub fn power(&self) -> f64 {
        let cell: f64 = self.grid.spacing.iter().product();
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * cell
    }
}

/// Result of [`angular_spectrum_propagate`].
#[derive(Debug, Clone)]
pub struct Propagated {
    pub field: SampledField,
    /// Set when the input did not decay to 1e-8 of its peak at the grid edge.
    pub aliasing_warning: bool,
}

fn fft_frequencies(n: usize, spacing: f64) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let signed = if j < n.div_ceil(2) { j as f64 } else { j as f64 - n as f64 };
            2.0 * PI * signed / (n as f64 * spacing)
        })
        .collect()
}

/// Paraxial propagation by the transfer function `exp(i k⊥² dz / 4)`.
///
/// Works on 1-D and 2-D grids in normalized units. Each plane-wave
/// component `exp(i k x)` of `(∂²x + ∂²y) E = 4i ∂z E` advances by
/// exactly that factor, so the result is exact for band-limited input.
pub fn angular_spectrum_propagate(field: &SampledField, dz: f64) -> Result<Propagated> {
    let peak = field.peak_amplitude();
    let aliasing_warning = field.boundary_amplitude() > 1e-8 * peak;
    if aliasing_warning {
        log::warn!("angular spectrum: field does not vanish at the grid edge; expect wrap-around");
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut data = field.values.clone();
    let grid = &field.grid;
    match grid.dims() {
        1 => {
            let n = grid.counts[0];
            let forward = planner.plan_fft_forward(n);
            let inverse = planner.plan_fft_inverse(n);
            forward.process(&mut data);
            let k = fft_frequencies(n, grid.spacing[0]);
            for (v, kx) in data.iter_mut().zip(&k) {
                *v *= Complex64::from_polar(1.0 / n as f64, kx * kx * dz / 4.0);
            }
            inverse.process(&mut data);
        }
        _ => {
            let (nx, ny) = (grid.counts[0], grid.counts[1]);
            fft_2d(&mut planner, &mut data, nx, ny, false);
            let kx = fft_frequencies(nx, grid.spacing[0]);
            let ky = fft_frequencies(ny, grid.spacing[1]);
            let scale = 1.0 / (nx * ny) as f64;
            for j in 0..ny {
                for i in 0..nx {
                    let k2 = kx[i] * kx[i] + ky[j] * ky[j];
                    data[j * nx + i] *= Complex64::from_polar(scale, k2 * dz / 4.0);
                }
            }
            fft_2d(&mut planner, &mut data, nx, ny, true);
        }
    }
    Ok(Propagated {
        field: SampledField::new(grid.clone(), data)?,
        aliasing_warning,
    })
}

/// Unnormalized in-place 2-D FFT of a row-major `nx × ny` array.
pub(crate) fn fft_2d(planner: &mut FftPlanner<f64>, data: &mut [Complex64], nx: usize, ny: usize, inverse: bool) {
    let row_plan = if inverse {
        planner.plan_fft_inverse(nx)
    } else {
        planner.plan_fft_forward(nx)
    };
    row_plan.process(data);
    let col_plan = if inverse {
        planner.plan_fft_inverse(ny)
    } else {
        planner.plan_fft_forward(ny)
    };
    let mut column = vec![Complex64::default(); ny];
    for i in 0..nx {
        for j in 0..ny {
            column[j] = data[j * nx + i];
        }
        col_plan.process(&mut column);
        for j in 0..ny {
            data[j * nx + i] = column[j];
        }
    }
}

/// One term `coefficient · x^α y^β z^γ` of the near-focus expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorTerm {
    pub alpha: u32,
    pub beta: u32,
    pub gamma: u32,
    pub coefficient: Complex64,
}

/// Leading Taylor terms of `E_NN(x, y, z)` about the focus.
///
/// `1 + P z^{N/2} ((i/2) z − (N+2)(N+3)/(4(N+4)) z² − (N+2)/4 (x² + y²))`
/// with `P = (N+2)! / ((4i)^{N/2} ((N/2+1)!)²)`. Everything omitted is of
/// total order at least `N/2 + 3`.
pub fn taylor_coefficients(n_order: usize) -> Result<Vec<TaylorTerm>> {
    check_even(n_order)?;
    let half = n_order / 2;
    let n = n_order as f64;
    // (N+2)! / ((N/2+1)!)² as a product to avoid overflow
    let mut ratio = 1.0;
    for k in 1..=half + 1 {
        ratio *= (half as f64 + 1.0 + k as f64) / k as f64;
    }
    let prefactor = Complex64::new(ratio, 0.0) / (I * 4.0).powi(half as i32);
    let g = half as u32;
    let transverse = prefactor * (-(n + 2.0) / 4.0);
    Ok(vec![
        TaylorTerm { alpha: 0, beta: 0, gamma: 0, coefficient: Complex64::new(1.0, 0.0) },
        TaylorTerm { alpha: 0, beta: 0, gamma: g + 1, coefficient: prefactor * I * 0.5 },
        TaylorTerm {
            alpha: 0,
            beta: 0,
            gamma: g + 2,
            coefficient: prefactor * (-(n + 2.0) * (n + 3.0) / (4.0 * (n + 4.0))),
        },
        TaylorTerm { alpha: 2, beta: 0, gamma: g, coefficient: transverse },
        TaylorTerm { alpha: 0, beta: 2, gamma: g, coefficient: transverse },
    ])
}

/// Evaluate a truncated Taylor series.
pub fn taylor_eval(terms: &[TaylorTerm], x: f64, y: f64, z: f64) -> Complex64 {
    terms
        .iter()
        .map(|t| t.coefficient * (x.powi(t.alpha as i32) * y.powi(t.beta as i32) * z.powi(t.gamma as i32)))
        .sum()
}

/// Maximum of `|(∂²x + ∂²y) E − 4i ∂z E|` over the probe points.
///
/// Central differences with step `step` on every axis, Richardson
/// extrapolated once (steps `h` and `h/2`).
pub fn paraxial_residual<F>(field: F, probes: &[(f64, f64, f64)], step: f64) -> f64
where
    F: Fn(f64, f64, f64) -> Complex64,
{
    let second = |x: f64, y: f64, z: f64, h: f64| {
        let c = field(x, y, z) * 2.0;
        (field(x + h, y, z) - c + field(x - h, y, z)) / (h * h)
            + (field(x, y + h, z) - c + field(x, y - h, z)) / (h * h)
    };
    let first = |x: f64, y: f64, z: f64, h: f64| (field(x, y, z + h) - field(x, y, z - h)) / (2.0 * h);
    probes
        .iter()
        .map(|&(x, y, z)| {
            let lap = (second(x, y, z, step / 2.0) * 4.0 - second(x, y, z, step)) / 3.0;
            let dz = (first(x, y, z, step / 2.0) * 4.0 - first(x, y, z, step)) / 3.0;
            (lap - I * 4.0 * dz).norm()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flattop::flattop_profile;
    use approx::assert_abs_diff_eq;

    #[test]
    fn geometry_invariant() {
        let g = BeamGeometry::new(1.4, 813.0).unwrap();
        assert!((g.rayleigh_um() - PI * 1.96 / 0.813).abs() < 1e-12);
        assert!(BeamGeometry::from_parts(1.4, g.rayleigh_um(), 813.0).is_ok());
        assert!(BeamGeometry::from_parts(1.4, g.rayleigh_um() * 1.001, 813.0).is_err());
        assert!(BeamGeometry::new(-1.0, 813.0).is_err());
        // carrier is exp(-i k z_phys)
        let z = 0.3;
        let k = 2.0 * PI / 0.813;
        let expected = Complex64::from_polar(1.0, -k * z * g.rayleigh_um());
        assert!((g.carrier(z) - expected).norm() < 1e-9);
    }

    #[test]
    fn mode_values() {
        for n in 0..6 {
            for &x in &[-1.2, 0.0, 0.4, 2.0] {
                let expected = crate::specfun::hermite(n, std::f64::consts::SQRT_2 * x) * (-x * x).exp();
                let v = hg_mode_xz(n, x, 0.0);
                assert_abs_diff_eq!(v.re, expected, epsilon = 1e-13);
                assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-13);
            }
        }
        let v = hg_mode_xz(0, 0.0, 1.0);
        assert_abs_diff_eq!(v.norm(), 2f64.powf(-0.25), epsilon = 1e-14);
        assert_abs_diff_eq!(v.arg(), PI / 8.0, epsilon = 1e-14);
    }

    #[test]
    fn gouy_phase_and_branch_continuity() {
        // on-axis phase of HG_2 is (2 + 1/2) arctan z, unwrapped
        let mut previous = hg_mode_xz(2, 0.0, -5.0).arg();
        let mut unwrapped = previous;
        for i in 1..=10_000 {
            let z = -5.0 + 10.0 * i as f64 / 10_000.0;
            for n in 0..6 {
                let a = hg_mode_xz(n, 0.3, z);
                let b = hg_mode_xz(n, 0.3, z - 1e-3);
                assert!((a - b).norm() < 0.05 * (a.norm() + b.norm()) + 1e-9, "jump for n={n} at z={z}");
            }
            let phase = hg_mode_xz(2, 0.0, z).arg();
            let mut d = phase - previous;
            d -= 2.0 * PI * (d / (2.0 * PI)).round();
            unwrapped += d;
            previous = phase;
            let expected = 2.5 * z.atan() + PI; // H2(0) = -2
            let mut diff = unwrapped - expected;
            diff -= 2.0 * PI * (diff / (2.0 * PI)).round();
            assert!(diff.abs() < 1e-9, "z={z}");
        }
    }

    #[test]
    fn focal_plane_field_is_the_profile() {
        let beam = FlatTopBeam1d::new(8).unwrap();
        for i in 0..50 {
            let x = -5.0 + 0.2 * i as f64;
            let e = beam.field(x, 0.0);
            assert!((e.re - flattop_profile(8.0, x)).abs() < 1e-12);
            assert!(e.im.abs() <= 1e-12);
        }
    }

    #[test]
    fn order_zero_is_the_gaussian_beam() {
        // textbook form: (w0/w) exp(-x²/w²) exp(-i k x²/2R) exp(i ψ/2) in 1-D
        for &(x, z) in &[(0.3, 0.5), (1.0, -1.2), (0.0, 2.0)] {
            let e = field_xz(0, x, z).unwrap();
            let w2 = 1.0 + z * z;
            let amplitude = w2.powf(-0.25) * (-x * x / w2).exp();
            let curvature_phase = -x * x * z / w2;
            let gouy = 0.5 * f64::atan(z);
            let expected = Complex64::from_polar(amplitude, curvature_phase + gouy);
            assert!((e - expected).norm() < 1e-13, "x={x} z={z}");
        }
    }

    #[test]
    fn separable_and_symmetric() {
        let order = FlatTopOrder::square(8).unwrap();
        let beam = FlatTopBeam::new(order).unwrap();
        assert_abs_diff_eq!(beam.field(0.0, 0.0, 0.0).re, 1.0, epsilon = 1e-14);
        for &(x, y, z) in &[(0.5, 1.5, 0.2), (2.0, -0.7, -0.4)] {
            assert!((beam.field(x, y, z) - beam.field(y, x, z)).norm() < 1e-14);
        }
        let g = BeamGeometry::new(2.0, 474.0).unwrap();
        let with = field_xyz(order, 0.3, 0.1, 0.2, Some(g)).unwrap();
        let without = field_xyz(order, 0.3, 0.1, 0.2, None).unwrap();
        assert!((with - without * g.carrier(0.2)).norm() < 1e-14);
    }

    #[test]
    fn angular_spectrum_identity_and_gaussian() {
        let grid = Grid::centered_1d(1024, 12.0).unwrap();
        let gauss = SampledField::sample(grid, |x, _| Complex64::new((-x * x).exp(), 0.0));
        let same = angular_spectrum_propagate(&gauss, 0.0).unwrap();
        assert!(!same.aliasing_warning);
        for (a, b) in same.field.values.iter().zip(&gauss.values) {
            assert!((a - b).norm() < 1e-14);
        }
        let out = angular_spectrum_propagate(&gauss, 0.7).unwrap();
        for (i, v) in out.field.values.iter().enumerate() {
            let x = out.field.grid.coord(0, i);
            assert!((v - hg_mode_xz(0, x, 0.7)).norm() <= 1e-8);
        }
        let wide = SampledField::sample(Grid::centered_1d(256, 2.0).unwrap(), |x, _| {
            Complex64::new((-x * x).exp(), 0.0)
        });
        assert!(angular_spectrum_propagate(&wide, 0.1).unwrap().aliasing_warning);
    }

    #[test]
    fn angular_spectrum_two_dimensional() {
        let grid = Grid::centered_2d(128, 8.0).unwrap();
        let gauss = SampledField::sample(grid, |x, y| Complex64::new((-x * x - y * y).exp(), 0.0));
        let out = angular_spectrum_propagate(&gauss, 0.4).unwrap();
        let nx = 128;
        for &(i, j) in &[(64, 64), (70, 60), (80, 50)] {
            let x = out.field.grid.coord(0, i);
            let y = out.field.grid.coord(1, j);
            let expected = hg_mode_xz(0, x, 0.4) * hg_mode_xz(0, y, 0.4);
            assert!((out.field.values[j * nx + i] - expected).norm() < 1e-10);
        }
    }

    #[test]
    fn taylor_prefactors() {
        let terms = taylor_coefficients(2).unwrap();
        let a1 = terms.iter().find(|t| t.gamma == 2 && t.alpha == 0).unwrap();
        assert_abs_diff_eq!(a1.coefficient.re, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(a1.coefficient.im, 0.0, epsilon = 1e-15);
        for n in [2usize, 4, 8, 16] {
            let terms = taylor_coefficients(n).unwrap();
            let lowest_z = terms.iter().filter(|t| t.gamma > 0 && t.alpha + t.beta == 0).map(|t| t.gamma).min();
            assert_eq!(lowest_z, Some(n as u32 / 2 + 1));
            let mixed = terms.iter().find(|t| t.alpha == 2).unwrap();
            assert_eq!(mixed.alpha + mixed.beta + mixed.gamma, n as u32 / 2 + 2);
        }
        assert!(taylor_coefficients(3).is_err());
    }

    fn log_slope(points: &[(f64, f64)]) -> f64 {
        let n = points.len() as f64;
        let (sx, sy) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0.ln(), a.1 + p.1.ln()));
        let (mx, my) = (sx / n, sy / n);
        let num: f64 = points.iter().map(|p| (p.0.ln() - mx) * (p.1.ln() - my)).sum();
        let den: f64 = points.iter().map(|p| (p.0.ln() - mx).powi(2)).sum();
        num / den
    }

    #[test]
    fn taylor_truncation_orders() {
        for n in [2usize, 4, 8] {
            let beam = FlatTopBeam::new(FlatTopOrder::square(n).unwrap()).unwrap();
            let terms = taylor_coefficients(n).unwrap();
            let zs = [0.08, 0.04, 0.02, 0.01];
            let constant_only: Vec<_> = zs.iter().map(|&z| (z, (beam.field(0.0, 0.0, z) - 1.0).norm())).collect();
            let full: Vec<_> = zs
                .iter()
                .map(|&z| (z, (beam.field(0.0, 0.0, z) - taylor_eval(&terms, 0.0, 0.0, z)).norm()))
                .collect();
            let half = (n / 2) as f64;
            assert!((log_slope(&constant_only) - (half + 1.0)).abs() < 0.2, "N={n}");
            assert!((log_slope(&full) - (half + 3.0)).abs() < 0.2, "N={n}");
        }
    }

    #[test]
    fn taylor_transverse_curvature() {
        for n in [2usize, 4, 8] {
            let beam = FlatTopBeam::new(FlatTopOrder::square(n).unwrap()).unwrap();
            let terms = taylor_coefficients(n).unwrap();
            let coefficient = terms.iter().find(|t| t.alpha == 2).unwrap().coefficient;
            let (z, h) = (0.01, 1e-3);
            let curvature =
                (beam.field(h, 0.0, z) - beam.field(0.0, 0.0, z) * 2.0 + beam.field(-h, 0.0, z)) / (2.0 * h * h);
            let predicted = coefficient * z.powi(n as i32 / 2);
            assert!((curvature - predicted).norm() < 0.1 * predicted.norm(), "N={n}");
        }
    }

    #[test]
    fn mode_sum_matches_angular_spectrum() {
        let grid = Grid::centered_1d(2048, 12.0).unwrap();
        let beam = FlatTopBeam1d::new(8).unwrap();
        let start = SampledField::sample(grid, |x, _| beam.field(x, 0.0));
        for dz in [0.3, 0.5] {
            let out = angular_spectrum_propagate(&start, dz).unwrap();
            assert!(!out.aliasing_warning);
            let peak = out.field.peak_amplitude();
            for (i, v) in out.field.values.iter().enumerate() {
                let x = out.field.grid.coord(0, i);
                assert!((v - beam.field(x, dz)).norm() <= 1e-6 * peak, "dz={dz} x={x}");
            }
        }
    }

    #[test]
    fn power_is_conserved() {
        let grid = Grid::centered_1d(2048, 12.0).unwrap();
        let beam = FlatTopBeam1d::new(8).unwrap();
        let p0 = SampledField::sample(grid.clone(), |x, _| beam.field(x, 0.0)).power();
        for i in 0..=20 {
            let z = -1.0 + 0.1 * i as f64;
            let p = SampledField::sample(grid.clone(), |x, _| beam.field(x, z)).power();
            assert!(((p - p0) / p0).abs() <= 1e-8, "z={z}");
        }
    }

    #[test]
    fn paraxial_equation_holds() {
        let probes: Vec<(f64, f64, f64)> = (0..5)
            .flat_map(|i| (0..3).map(move |j| (-1.0 + 0.5 * i as f64, 0.4 * j as f64, -0.3 + 0.3 * j as f64)))
            .collect();
        let gauss = |x: f64, y: f64, z: f64| hg_mode_xz(0, x, z) * hg_mode_xz(0, y, z);
        assert!(paraxial_residual(gauss, &probes, 1e-3) <= 1e-6);
        let beam = FlatTopBeam::new(FlatTopOrder::square(8).unwrap()).unwrap();
        assert!(paraxial_residual(|x, y, z| beam.field(x, y, z), &probes, 1e-3) <= 1e-4);
        let flipped = |x: f64, y: f64, z: f64| beam.field(x, y, z).conj();
        assert!(paraxial_residual(flipped, &probes, 1e-3) >= 1e-1);
    }

    #[test]
    fn on_axis_phase_is_stationary_for_flat_tops() {
        let h = 1e-4;
        let slope = |n: usize| {
            let beam = FlatTopBeam1d::new(n).unwrap();
            (beam.field(0.0, h).arg() - beam.field(0.0, -h).arg()) / (2.0 * h)
        };
        assert_abs_diff_eq!(slope(0), 0.5, epsilon = 1e-6);
        for n in [2usize, 4, 8] {
            assert!(slope(n).abs() < 1e-6, "N={n}: {}", slope(n));
        }
    }
}
