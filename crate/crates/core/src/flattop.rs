//! Flat-top transverse profiles built from even Hermite–Gaussian (or radial
//! Laguerre–Gaussian) modes.
//!
//! Coordinates are in units of the mode waist `w0`. The order-`N` profile is
//! `E(x) = exp(-x²) Σ_{n ≤ N/2} x^{2n}/n! = Q(N/2 + 1, x²)`, whose first `N`
//! derivatives vanish at the origin.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{self, erf, erfc, gamma_q, hermite, hermite_complex, kummer_m, laguerre, ln_gamma};

/// Largest order for which coefficients are accumulated in exact rational arithmetic.
const EXACT_ORDER_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// `H_n(√2 x) exp(-x²)`
    HermiteGauss,
    /// `L_n(2r²) exp(-r²)`
    LaguerreGauss,
    /// `x^n exp(-x²)`
    Polynomial,
}

/// A finite superposition of modes over one basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawExpansion", into = "RawExpansion")]
pub struct ModeExpansion {
    basis: Basis,
    waist_um: f64,
    coeffs: Vec<(usize, f64)>,
}

#[derive(Serialize, Deserialize)]
struct RawExpansion {
    basis: Basis,
    waist_um: f64,
    coeffs: Vec<(usize, f64)>,
}

impl TryFrom<RawExpansion> for ModeExpansion {
    type Error = Error;

    fn try_from(raw: RawExpansion) -> Result<Self> {
        ModeExpansion::new(raw.basis, raw.waist_um, raw.coeffs)
    }
}

impl From<ModeExpansion> for RawExpansion {
    fn from(m: ModeExpansion) -> Self {
        RawExpansion {
            basis: m.basis,
            waist_um: m.waist_um,
            coeffs: m.coeffs,
        }
    }
}

impl ModeExpansion {
    pub fn new(basis: Basis, waist_um: f64, coeffs: Vec<(usize, f64)>) -> Result<Self> {
        if !(waist_um > 0.0 && waist_um.is_finite()) {
            return Err(Error::Parameter(format!("waist must be positive, got {waist_um}")));
        }
        if coeffs.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidIndex("mode indices must be strictly increasing".into()));
        }
        if coeffs.iter().any(|(_, c)| !c.is_finite()) {
            return Err(Error::Parameter("non-finite coefficient".into()));
        }
        Ok(ModeExpansion {
            basis,
            waist_um,
            coeffs,
        })
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn waist_um(&self) -> f64 {
        self.waist_um
    }

    pub fn coeffs(&self) -> &[(usize, f64)] {
        &self.coeffs
    }

    /// Coefficient of mode `n`, zero when absent.
    pub fn coeff(&self, n: usize) -> f64 {
        self.coeffs
            .iter()
            .find(|(k, _)| *k == n)
            .map_or(0.0, |(_, c)| *c)
    }

    pub fn max_index(&self) -> usize {
        self.coeffs.last().map_or(0, |(n, _)| *n)
    }

    /// Same coefficients, different physical waist.
    pub fn with_waist(mut self, waist_um: f64) -> Result<Self> {
        if !(waist_um > 0.0) {
            return Err(Error::Parameter(format!("waist must be positive, got {waist_um}")));
        }
        self.waist_um = waist_um;
        Ok(self)
    }

    /// Evaluate at a normalized coordinate (units of the waist).
    pub fn eval(&self, x: f64) -> f64 {
        let gauss = (-x * x).exp();
        match self.basis {
            Basis::HermiteGauss => {
                let h = specfun::hermite_all(self.max_index(), std::f64::consts::SQRT_2 * x);
                gauss * self.coeffs.iter().map(|(n, c)| c * h[*n]).sum::<f64>()
            }
            Basis::LaguerreGauss => {
                let u = 2.0 * x * x;
                gauss * self.coeffs.iter().map(|(n, c)| c * laguerre(*n, 0.0, u)).sum::<f64>()
            }
            Basis::Polynomial => {
                gauss * self.coeffs.iter().map(|(n, c)| c * x.powi(*n as i32)).sum::<f64>()
            }
        }
    }

    /// Evaluate at a physical coordinate in micrometres.
    pub fn eval_um(&self, x_um: f64) -> f64 {
        self.eval(x_um / self.waist_um)
    }

    /// Analytic continuation to complex normalized arguments.
    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        let gauss = (-z * z).exp();
        let sum: Complex64 = match self.basis {
            Basis::HermiteGauss => self
                .coeffs
                .iter()
                .map(|(n, c)| hermite_complex(*n, z * std::f64::consts::SQRT_2) * *c)
                .sum(),
            Basis::LaguerreGauss => {
                let u = z * z * 2.0;
                self.coeffs.iter().map(|(n, c)| laguerre_complex(*n, u) * *c).sum()
            }
            Basis::Polynomial => self.coeffs.iter().map(|(n, c)| z.powi(*n as i32) * *c).sum(),
        };
        gauss * sum
    }
}

fn laguerre_complex(n: usize, x: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    let mut l_prev = one;
    if n == 0 {
        return l_prev;
    }
    let mut l = one - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((-x + (2.0 * kf + 1.0)) * l - l_prev * kf) / (kf + 1.0);
        l_prev = l;
        l = next;
    }
    l
}

/// Flat-top orders along `x` and `y`; both even.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatTopOrder {
    n: usize,
    m: usize,
}

impl FlatTopOrder {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        check_even(n)?;
        check_even(m)?;
        Ok(FlatTopOrder { n, m })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

pub(crate) fn check_even(n: usize) -> Result<()> {
    if n % 2 == 0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("flat-top order must be even, got {n}")))
    }
}

/// Order-`n` flat-top profile `Q(n/2 + 1, x²)`.
///
/// Noninteger `n ≥ 0` is accepted and interpolates between even orders.
/// Returns NaN for negative or non-finite orders.
pub fn flattop_profile(n: f64, x: f64) -> f64 {
    if !(n >= 0.0) {
        return f64::NAN;
    }
    gamma_q(n / 2.0 + 1.0, x * x).unwrap_or(f64::NAN)
}

fn factorial_big(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// Hermite–Gaussian coefficients `c̃_{2n}` of the order-`n_order` flat-top.
pub fn hg_coefficients(n_order: usize) -> Result<ModeExpansion> {
    check_even(n_order)?;
    let half = n_order / 2;
    let coeffs = if n_order <= EXACT_ORDER_LIMIT {
        (0..=half)
            .map(|n| {
                let mut sum = BigRational::zero();
                for k in n..=half {
                    let num = factorial_big(2 * k);
                    let den = (BigInt::one() << (3 * k))
                        * factorial_big(k)
                        * factorial_big(k - n)
                        * factorial_big(2 * n);
                    sum += BigRational::new(num, den);
                }
                (2 * n, ratio_to_f64(&sum))
            })
            .collect()
    } else {
        (0..=half)
            .map(|n| {
                let sum: f64 = (n..=half)
                    .map(|k| {
                        (ln_factorial(2 * k)
                            - 3.0 * k as f64 * std::f64::consts::LN_2
                            - ln_factorial(k)
                            - ln_factorial(k - n)
                            - ln_factorial(2 * n))
                        .exp()
                    })
                    .sum();
                (2 * n, sum)
            })
            .collect()
    };
    ModeExpansion::new(Basis::HermiteGauss, 1.0, coeffs)
}

/// Radial Laguerre–Gaussian coefficients `b_k` of the order-`n_order` flat-top,
/// over the modes `L_k(2r²) exp(-r²)`.
pub fn lg_coefficients(n_order: usize) -> Result<ModeExpansion> {
    check_even(n_order)?;
    let half = n_order / 2;
    let coeffs = if n_order <= EXACT_ORDER_LIMIT {
        (0..=half)
            .map(|k| {
                let mut sum = BigRational::zero();
                for n in k..=half {
                    let num = factorial_big(n);
                    let den = (BigInt::one() << n) * factorial_big(k) * factorial_big(n - k);
                    sum += BigRational::new(num, den);
                }
                if k % 2 == 1 {
                    sum = -sum;
                }
                (k, ratio_to_f64(&sum))
            })
            .collect()
    } else {
        (0..=half)
            .map(|k| {
                let sum: f64 = (k..=half)
                    .map(|n| {
                        (ln_factorial(n)
                            - n as f64 * std::f64::consts::LN_2
                            - ln_factorial(k)
                            - ln_factorial(n - k))
                        .exp()
                    })
                    .sum();
                (k, if k % 2 == 1 { -sum } else { sum })
            })
            .collect()
    };
    ModeExpansion::new(Basis::LaguerreGauss, 1.0, coeffs)
}

/// Solve the flatness conditions directly for the polynomial coefficients.
///
/// Unknowns are `c_{2n}` in `E(x) = exp(-x²) Σ c_{2n} x^{2n}`. Row 0 pins
/// `E(0) = 1`; row `k` sets the `2k`-th derivative at the origin to zero,
/// with matrix entries `(-1)^{k-n} (2k)!/(k-n)!` for `n ≤ k`. The system is
/// handed to a general pivoting solver rather than back-substituted, so it
/// stays an independent route to the coefficients.
pub fn solve_flatness_system(n_order: usize) -> Result<ModeExpansion> {
    check_even(n_order)?;
    let size = n_order / 2 + 1;
    let mut matrix = vec![vec![0.0; size]; size];
    let mut rhs = vec![0.0; size];
    matrix[0][0] = 1.0;
    rhs[0] = 1.0;
    for k in 1..size {
        for n in 0..=k {
            let sign = if (k - n) % 2 == 0 { 1.0 } else { -1.0 };
            matrix[k][n] = sign * (ln_factorial(2 * k) - ln_factorial(k - n)).exp();
        }
    }
    let solution = solve_dense(matrix, rhs)?;
    let coeffs = solution.into_iter().enumerate().map(|(n, c)| (2 * n, c)).collect();
    ModeExpansion::new(Basis::Polynomial, 1.0, coeffs)
}

/// Gaussian elimination with row equilibration and partial pivoting.
pub(crate) fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for (row, rhs) in a.iter_mut().zip(b.iter_mut()) {
        let scale = row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            continue;
        }
        row.iter_mut().for_each(|v| *v /= scale);
        *rhs /= scale;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::Singular { pivot: col });
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row][j] -= factor * a[col][j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|j| a[row][j] * x[j]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Ok(x)
}

/// Fourier transform `(1/√2π) ∫ E(x) e^{ixt} dx`, normalized to 1 at `t = 0`.
pub fn fourier_flattop(n_order: usize, t: f64) -> f64 {
    let n = n_order as f64;
    if t.abs() < 1e-3 {
        return kummer_m((n + 3.0) / 2.0, 1.5, -t * t / 4.0).unwrap_or(f64::NAN);
    }
    let half = n_order / 2;
    // (-1)^{N/2} (N/2)! / (N+1)! as a running product
    let mut prefactor: f64 = (half + 1..=n_order + 1).map(|k| 1.0 / k as f64).product();
    if half % 2 == 1 {
        prefactor = -prefactor;
    }
    prefactor * hermite(n_order + 1, t / 2.0) / t * (-t * t / 4.0).exp()
}

/// Unnormalized transform at the origin, `(1/√2π) ∫ E(x) dx`.
pub fn fourier_flattop_at_zero(n_order: usize) -> f64 {
    // L_{N/2}^{(1/2)}(0) / √2 = Γ(N/2 + 3/2) / (Γ(3/2) (N/2)!) / √2
    let half = (n_order / 2) as f64;
    (ln_gamma(half + 1.5) - ln_gamma(1.5) - ln_gamma(half + 1.0)).exp() / std::f64::consts::SQRT_2
}

/// Large-order approximation `½ erfc(√2|x| − √(N + 4/3))`.
pub fn asymptotic_profile(n_order: usize, x: f64) -> f64 {
    0.5 * erfc(std::f64::consts::SQRT_2 * x.abs() - (n_order as f64 + 4.0 / 3.0).sqrt())
}

/// Large-order approximation of the normalized transform,
/// `sinc(t √(N/2 + 3/4)) exp(-t²/8)`.
pub fn asymptotic_fourier(n_order: usize, t: f64) -> f64 {
    specfun::sinc(t * (n_order as f64 / 2.0 + 0.75).sqrt()) * (-t * t / 8.0).exp()
}

/// Approximate full width at half maximum, `√(2N + 8/3)` in waist units.
pub fn fwhm(n_order: usize) -> f64 {
    (2.0 * n_order as f64 + 8.0 / 3.0).sqrt()
}

/// Exact full width at half maximum found by bisection on the profile.
pub fn fwhm_exact(n_order: usize) -> f64 {
    let n = n_order as f64;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while flattop_profile(n, hi) > 0.5 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if flattop_profile(n, mid) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo + hi
}

/// Radial flat-top profile; identical in form to the Cartesian one.
pub fn lg_flattop(n_order: usize, r: f64) -> f64 {
    flattop_profile(n_order as f64, r)
}

/// Zeroth-order Hankel transform `∫ E(r) J0(kr) r dr` in closed form,
/// `½ L_{N/2}^{(1)}(k²/4) exp(-k²/4)`.
pub fn hankel_flattop_unnormalized(n_order: usize, k: f64) -> f64 {
    let q = k * k / 4.0;
    0.5 * laguerre(n_order / 2, 1.0, q) * (-q).exp()
}

/// Hankel transform normalized to 1 at `k = 0` (factor `4/(N+2)`).
pub fn hankel_flattop(n_order: usize, k: f64) -> f64 {
    4.0 / (n_order as f64 + 2.0) * hankel_flattop_unnormalized(n_order, k)
}

/// One-axis factor of the aspheric-lens phase,
/// `(√π/2) x erf(x) + exp(-x²)/2 − 1/2`.
pub fn aspheric_phi(x: f64) -> f64 {
    PI.sqrt() / 2.0 * x * erf(x) + 0.5 * (-x * x).exp() - 0.5
}

/// Phase of the lossless Gaussian-to-flat-top aspheric lens with curvature `c`.
pub fn aspheric_lens_phase(x: f64, y: f64, c: f64) -> f64 {
    c * aspheric_phi(x) * aspheric_phi(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize, lo: f64, hi: f64) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
    }

    #[test]
    fn profile_values() {
        assert_abs_diff_eq!(flattop_profile(0.0, 1.0), (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(flattop_profile(2.0, 1.0), 2.0 / 1f64.exp(), epsilon = 1e-15);
        for n in (0..=30).step_by(2) {
            assert_eq!(flattop_profile(n as f64, 0.0), 1.0);
        }
        // interpolation between even orders is monotone at fixed x
        let x = 2.0;
        assert!(flattop_profile(4.0, x) < flattop_profile(5.0, x));
        assert!(flattop_profile(5.0, x) < flattop_profile(6.0, x));
        assert!(flattop_profile(-1.0, 0.5).is_nan());
    }

    #[test]
    fn profile_is_even() {
        for n in (0..=16).step_by(2) {
            for x in grid(41, 0.0, 6.0) {
                assert_eq!(flattop_profile(n as f64, x), flattop_profile(n as f64, -x));
            }
        }
    }

    #[test]
    fn hg_coefficients_small_orders() {
        let c0 = hg_coefficients(0).unwrap();
        assert_eq!(c0.coeffs(), &[(0, 1.0)]);
        let c2 = hg_coefficients(2).unwrap();
        assert_abs_diff_eq!(c2.coeff(0), 1.25, epsilon = 1e-15);
        assert_abs_diff_eq!(c2.coeff(2), 0.125, epsilon = 1e-15);
        assert_eq!(c2.coeff(1), 0.0);
        assert!(hg_coefficients(3).is_err());
    }

    #[test]
    fn hg_mode_sum_reproduces_gamma_form() {
        for n in [8usize, 16, 24, 30] {
            let expansion = hg_coefficients(n).unwrap();
            for x in grid(100, -6.0, 6.0) {
                let diff = (expansion.eval(x) - flattop_profile(n as f64, x)).abs();
                assert!(diff <= 1e-10, "N={n} x={x} diff={diff}");
            }
        }
    }

    #[test]
    fn exact_and_float_coefficient_paths_agree() {
        let exact = hg_coefficients(20).unwrap();
        let half = 10;
        for n in 0..=half {
            let float: f64 = (n..=half)
                .map(|k| {
                    (ln_factorial(2 * k)
                        - 3.0 * k as f64 * std::f64::consts::LN_2
                        - ln_factorial(k)
                        - ln_factorial(k - n)
                        - ln_factorial(2 * n))
                    .exp()
                })
                .sum();
            assert!((exact.coeff(2 * n) - float).abs() <= 1e-12 * float);
        }
    }

    #[test]
    fn flatness_system_gives_inverse_factorials() {
        let s2 = solve_flatness_system(2).unwrap();
        assert_abs_diff_eq!(s2.coeff(0), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s2.coeff(2), 1.0, epsilon = 1e-14);
        let s6 = solve_flatness_system(6).unwrap();
        for (n, expected) in [(0, 1.0), (2, 1.0), (4, 0.5), (6, 1.0 / 6.0)] {
            assert_abs_diff_eq!(s6.coeff(n), expected, epsilon = 1e-14);
        }
        for n_order in (0..=20).step_by(2) {
            let s = solve_flatness_system(n_order).unwrap();
            let mut fact = 1.0;
            for n in 0..=n_order / 2 {
                if n > 0 {
                    fact *= n as f64;
                }
                assert!((s.coeff(2 * n) - 1.0 / fact).abs() <= 1e-10, "N={n_order} n={n}");
            }
        }
    }

    #[test]
    fn solver_reports_singular_systems() {
        let err = solve_dense(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]);
        assert!(matches!(err, Err(Error::Singular { .. })));
    }

    #[test]
    fn fourier_closed_form_values() {
        for n in (0..=20).step_by(2) {
            assert_abs_diff_eq!(fourier_flattop(n, 0.0), 1.0, epsilon = 1e-15);
        }
        for t in grid(25, -8.0, 8.0) {
            assert_abs_diff_eq!(fourier_flattop(0, t), (-t * t / 4.0).exp(), epsilon = 1e-14);
        }
        // Hermite and Kummer branches meet smoothly
        for n in [2usize, 8, 16] {
            let a = fourier_flattop(n, 0.999e-3);
            let b = fourier_flattop(n, 1.001e-3);
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn fourier_matches_quadrature_for_order_eight() {
        let n = 8;
        let norm = fourier_flattop_at_zero(n);
        let direct_zero =
            quad::integrate(|x| flattop_profile(8.0, x), -14.0, 14.0, 1e-13) / (2.0 * PI).sqrt();
        assert!((direct_zero - norm).abs() <= 1e-12 * norm);
        for t in grid(50, 0.05, 10.0) {
            let q = quad::integrate(|x| flattop_profile(8.0, x) * (x * t).cos(), -14.0, 14.0, 1e-13)
                / (2.0 * PI).sqrt();
            assert!((q / norm - fourier_flattop(n, t)).abs() <= 1e-9, "t={t}");
        }
    }

    #[test]
    fn asymptotic_forms() {
        assert!((asymptotic_profile(10, 0.0) - 1.0).abs() <= 2e-4);
        for n in [2usize, 10, 40] {
            let edge = ((n as f64 + 4.0 / 3.0) / 2.0).sqrt();
            assert_abs_diff_eq!(asymptotic_profile(n, edge), 0.5, epsilon = 1e-15);
            assert_eq!(asymptotic_fourier(n, 0.0), 1.0);
            let scale = (n as f64 / 2.0 + 0.75).sqrt();
            for k in 1..4 {
                assert!(asymptotic_fourier(n, k as f64 * PI / scale).abs() < 1e-14);
            }
        }
        let gap = grid(4001, 0.0, 8.0)
            .map(|x| (asymptotic_profile(10, x) - flattop_profile(10.0, x)).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 0.014, "gap {gap}");
        let fourier_gap = grid(2001, 0.0, 10.0)
            .map(|t| (asymptotic_fourier(20, t) - fourier_flattop(20, t)).abs())
            .fold(0.0, f64::max);
        assert!(fourier_gap <= 0.25, "fourier gap {fourier_gap}");
    }

    #[test]
    fn widths() {
        assert_abs_diff_eq!(fwhm(8), (56.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(fwhm(8), 4.3205, epsilon = 1e-4);
        let exact10 = fwhm_exact(10);
        assert!((exact10 - fwhm(10)).abs() / fwhm(10) <= 0.02);
        // N = 0: e^{-x²} has FWHM 2√ln2
        assert_abs_diff_eq!(fwhm_exact(0), 2.0 * 2f64.ln().sqrt(), epsilon = 1e-12);
        assert!((fwhm(0) - 1.633).abs() < 1e-3);
        let widths: Vec<f64> = (0..=40).step_by(2).map(fwhm_exact).collect();
        assert!(widths.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn laguerre_expansion() {
        let b2 = lg_coefficients(2).unwrap();
        assert_abs_diff_eq!(b2.coeff(0), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b2.coeff(1), -0.5, epsilon = 1e-15);
        for r in grid(20, 0.0, 3.0) {
            assert_abs_diff_eq!(b2.eval(r), (-r * r).exp() * (1.0 + r * r), epsilon = 1e-14);
        }
        for n in (0..=16).step_by(2) {
            assert_eq!(lg_flattop(n, 0.0), 1.0);
        }
        let b8 = lg_coefficients(8).unwrap();
        for r in grid(100, 0.0, 6.0) {
            assert!((b8.eval(r) - lg_flattop(8, r)).abs() <= 1e-10);
        }
        let b24 = lg_coefficients(24).unwrap();
        for r in grid(50, 0.0, 6.0) {
            assert!((b24.eval(r) - lg_flattop(24, r)).abs() <= 1e-9);
        }
    }

    #[test]
    fn hankel_closed_form() {
        for n in (0..=16).step_by(2) {
            assert_abs_diff_eq!(hankel_flattop(n, 0.0), 1.0, epsilon = 1e-14);
        }
        for k in grid(20, 0.0, 6.0) {
            let expected = (2.0 - k * k / 4.0) * (-k * k / 4.0).exp() / 2.0;
            assert_abs_diff_eq!(hankel_flattop_unnormalized(2, k), expected, epsilon = 1e-15);
        }
        for k in grid(30, 0.0, 8.0) {
            let q = quad::integrate(
                |r| flattop_profile(8.0, r) * specfun::bessel_j0(k * r) * r,
                0.0,
                12.0,
                1e-13,
            );
            assert!((q - hankel_flattop_unnormalized(8, k)).abs() <= 1e-7, "k={k}");
        }
    }

    #[test]
    fn aspheric_lens() {
        assert_eq!(aspheric_phi(0.0), 0.0);
        for x in grid(15, 0.0, 4.0) {
            assert_eq!(aspheric_phi(x), aspheric_phi(-x));
        }
        let expected = PI.sqrt() / 2.0 * 3.0 * erf(3.0) + (-9.0f64).exp() / 2.0 - 0.5;
        assert_abs_diff_eq!(aspheric_phi(3.0), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(aspheric_phi(3.0), 2.1587, epsilon = 1e-4);
        assert_abs_diff_eq!(aspheric_lens_phase(3.0, 3.0, 2.0), 2.0 * expected * expected, epsilon = 1e-13);
    }

    #[test]
    fn expansion_json_roundtrip_and_validation() {
        let e = hg_coefficients(4).unwrap().with_waist(2.0).unwrap();
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.contains("\"basis\":\"hermite_gauss\""));
        assert!(json.contains("\"waist_um\":2.0"));
        let back: ModeExpansion = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
        let bad = r#"{"basis":"hermite_gauss","waist_um":1.0,"coeffs":[[2,1.0],[0,1.0]]}"#;
        assert!(serde_json::from_str::<ModeExpansion>(bad).is_err());
        assert!(FlatTopOrder::new(3, 2).is_err());
    }
}
