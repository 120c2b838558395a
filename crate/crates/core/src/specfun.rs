//! Special functions used by the beam and hologram code.
//!
//! Everything here is a pure function of its arguments. The error function,
//! its complement and `J0` are delegated to `libm`; the incomplete gamma
//! ratio, Kummer's function and the orthogonal polynomials are evaluated
//! directly because their argument families are specific to flat-top beams.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_ITER: usize = 10_000;

fn check_finite(func: &'static str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(func, format!("non-finite argument {x}")))
    }
}

/// Physicists' Hermite polynomial `H_n(x)`.
pub fn hermite(n: usize, x: f64) -> f64 {
    let mut h_prev = 1.0;
    if n == 0 {
        return h_prev;
    }
    let mut h = 2.0 * x;
    for k in 1..n {
        let next = 2.0 * x * h - 2.0 * k as f64 * h_prev;
        h_prev = h;
        h = next;
    }
    h
}

/// `H_n(z)` for complex `z`, same recurrence as [`hermite`].
pub fn hermite_complex(n: usize, z: Complex64) -> Complex64 {
    let mut h_prev = Complex64::new(1.0, 0.0);
    if n == 0 {
        return h_prev;
    }
    let mut h = z * 2.0;
    for k in 1..n {
        let next = z * h * 2.0 - h_prev * (2.0 * k as f64);
        h_prev = h;
        h = next;
    }
    h
}

/// All of `H_0(x) ..= H_n(x)` in one pass.
pub fn hermite_all(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(2.0 * x);
    }
    for k in 1..n {
        let next = 2.0 * x * out[k] - 2.0 * k as f64 * out[k - 1];
        out.push(next);
    }
    out
}

/// Associated Laguerre polynomial `L_n^(alpha)(x)`.
pub fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let mut l_prev = 1.0;
    if n == 0 {
        return l_prev;
    }
    let mut l = 1.0 + alpha - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * l - (kf + alpha) * l_prev) / (kf + 1.0);
        l_prev = l;
        l = next;
    }
    l
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Regularized upper incomplete gamma function `Q(a, x) = Γ(a, x) / Γ(a)`.
///
/// Power series for the lower ratio when `x < a + 1`, Lentz continued
/// fraction otherwise.
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    check_finite("gamma_q", a)?;
    check_finite("gamma_q", x)?;
    if a <= 0.0 {
        return Err(Error::domain("gamma_q", format!("a = {a} must be positive")));
    }
    if x < 0.0 {
        return Err(Error::domain("gamma_q", format!("x = {x} must be nonnegative")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        Ok(1.0 - lower_series(a, x)?)
    } else {
        upper_continued_fraction(a, x)
    }
}

/// Regularized lower incomplete gamma function `P(a, x) = 1 - Q(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> Result<f64> {
    check_finite("gamma_p", a)?;
    check_finite("gamma_p", x)?;
    if a <= 0.0 || x < 0.0 {
        return Err(Error::domain("gamma_p", format!("a = {a}, x = {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x < a + 1.0 {
        lower_series(a, x)
    } else {
        Ok(1.0 - upper_continued_fraction(a, x)?)
    }
}

fn lower_series(a: f64, x: f64) -> Result<f64> {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            let log_prefactor = -x + a * x.ln() - ln_gamma(a);
            return Ok(sum * log_prefactor.exp());
        }
    }
    Err(Error::Convergence {
        func: "gamma_q (series)",
        iterations: MAX_ITER,
        last_term: term,
    })
}

fn upper_continued_fraction(a: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            let log_prefactor = -x + a * x.ln() - ln_gamma(a);
            return Ok(log_prefactor.exp() * h);
        }
    }
    Err(Error::Convergence {
        func: "gamma_q (continued fraction)",
        iterations: MAX_ITER,
        last_term: h,
    })
}

fn nonpositive_integer(v: f64) -> Option<usize> {
    if v <= 0.0 && v == v.round() && v > -1e9 {
        Some((-v) as usize)
    } else {
        None
    }
}

/// Kummer's confluent hypergeometric function `M(a, b, z)` for real arguments.
///
/// A nonpositive integer `a = -n` gives a polynomial, evaluated through
/// `M(-n, b, z) = n! / (b)_n · L_n^(b-1)(z)`. Negative `z` goes through the
/// Kummer transformation `M(a, b, z) = e^z M(b - a, b, -z)`, so that the
/// flat-top transform family `a = (N+3)/2`, `b = 3/2` lands on a polynomial.
pub fn kummer_m(a: f64, b: f64, z: f64) -> Result<f64> {
    check_finite("kummer_m", a)?;
    check_finite("kummer_m", b)?;
    check_finite("kummer_m", z)?;
    if nonpositive_integer(b).is_some() {
        return Err(Error::domain("kummer_m", format!("b = {b} is a nonpositive integer")));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    if let Some(n) = nonpositive_integer(a) {
        return Ok(kummer_polynomial(n, b, z));
    }
    if z < 0.0 {
        let inner = if let Some(n) = nonpositive_integer(b - a) {
            kummer_polynomial(n, b, -z)
        } else {
            kummer_series(b - a, b, -z)?
        };
        return Ok(z.exp() * inner);
    }
    kummer_series(a, b, z)
}

fn kummer_polynomial(n: usize, b: f64, z: f64) -> f64 {
    // n! / (b)_n as a running product to stay in range for large n
    let ratio: f64 = (1..=n).map(|k| k as f64 / (b + k as f64 - 1.0)).product();
    ratio * laguerre(n, b - 1.0, z)
}

fn kummer_series(a: f64, b: f64, z: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..MAX_ITER {
        let kf = k as f64;
        term *= (a + kf) / (b + kf) * z / (kf + 1.0);
        sum += term;
        if term.abs() <= sum.abs() * 1e-17 && kf > z.abs() {
            return Ok(sum);
        }
        if !sum.is_finite() {
            break;
        }
    }
    Err(Error::Convergence {
        func: "kummer_m",
        iterations: MAX_ITER,
        last_term: term,
    })
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Bessel function of the first kind, order zero.
pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

/// Unnormalized cardinal sine `sin(x)/x`, with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Inverse of [`sinc`] on the branch `[-π, 0]`.
///
/// `sinc` is even and strictly decreasing on `[0, π]`, so the preimage is
/// found by bisection there and returned with a negative sign.
pub fn sinc_inv(y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::Range {
            func: "sinc_inv",
            value: y,
            range: "[0, 1]",
        });
    }
    if y == 1.0 {
        return Ok(0.0);
    }
    if y == 0.0 {
        return Ok(-PI);
    }
    let (mut lo, mut hi) = (0.0_f64, PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if sinc(mid) > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(-0.5 * (lo + hi))
}
