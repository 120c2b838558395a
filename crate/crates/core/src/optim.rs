//! Small derivative-free and least-squares minimizers.

use nalgebra::{DMatrix, DVector};

/// Result of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Nelder–Mead simplex search started from `x0` with initial edge `step`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], step: &[f64], f_tol: f64, max_evaluations: usize) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64], count: &mut usize| {
        *count += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evaluations);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step[i];
        let v = eval(&x, &mut evaluations);
        simplex.push((x, v));
    }
    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect() };
    while evaluations < max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[n].1 - simplex[0].1).abs() <= f_tol {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].0.clone();
        let reflected = combine(&centroid, &worst, -1.0);
        let fr = eval(&reflected, &mut evaluations);
        if fr < simplex[0].1 {
            let expanded = combine(&centroid, &worst, -2.0);
            let fe = eval(&expanded, &mut evaluations);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let outside = fr < simplex[n].1;
            let contracted = if outside {
                combine(&centroid, &worst, -0.5)
            } else {
                combine(&centroid, &worst, 0.5)
            };
            let fc = eval(&contracted, &mut evaluations);
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x = combine(&best, &entry.0, 0.5);
                    let v = eval(&x, &mut evaluations);
                    *entry = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, evaluations }
}

/// Outcome of a least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub params: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    /// Jacobian at the solution, one row per residual.
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn jacobian<F>(residuals: &F, p: &[f64], r0: &DVector<f64>) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> DVector<f64>,
{
    let mut jac = DMatrix::zeros(r0.len(), p.len());
    for k in 0..p.len() {
        let h = 1e-7 * p[k].abs().max(1e-7);
        let mut up = p.to_vec();
        up[k] += h;
        let mut down = p.to_vec();
        down[k] -= h;
        let d = (residuals(&up) - residuals(&down)) / (2.0 * h);
        jac.set_column(k, &d);
    }
    jac
}

/// Levenberg–Marquardt with central-difference Jacobians and
/// Marquardt's diagonal scaling.
pub fn levenberg_marquardt<F>(residuals: F, p0: &[f64], max_iterations: usize) -> LeastSquares
where
    F: Fn(&[f64]) -> DVector<f64>,
{
    let mut p = p0.to_vec();
    let mut r = residuals(&p);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut jac = jacobian(&residuals, &p, &r);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for i in 0..p.len() {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(delta) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(x, d)| x + d).collect();
            let rt = residuals(&trial);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct < cost {
                let rel_step = delta
                    .iter()
                    .zip(&p)
                    .map(|(d, x)| d.abs() / x.abs().max(1e-12))
                    .fold(0.0, f64::max);
                let gain = (cost - ct) / cost.max(1e-300);
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel_step < 1e-10 || gain < 1e-14 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            converged = true;
        }
        jac = jacobian(&residuals, &p, &r);
        if converged {
            break;
        }
    }
    LeastSquares {
        params: p,
        cost,
        jacobian: jac,
        iterations,
        converged,
    }
}

/// Golden-section search for a minimum of a unimodal function on `[a, b]`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(f, &[-1.2, 1.0], &[0.5, 0.5], 1e-14, 5000);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn levenberg_marquardt_fits_an_exponential() {
        let t: Vec<f64> = (0..30).map(|k| k as f64 * 0.1).collect();
        let data: Vec<f64> = t.iter().map(|t| 2.5 * (-1.3 * t).exp() + 0.4).collect();
        let res = |p: &[f64]| DVector::from_iterator(t.len(), t.iter().zip(&data).map(|(t, y)| p[0] * (-p[1] * t).exp() + p[2] - y));
        let fit = levenberg_marquardt(res, &[1.0, 0.5, 0.0], 200);
        assert!(fit.converged);
        for (got, want) in fit.params.iter().zip([2.5, 1.3, 0.4]) {
            assert!((got - want).abs() < 1e-8, "{:?}", fit.params);
        }
    }

    #[test]
    fn golden_section_on_a_parabola() {
        let (x, _) = golden_section(|x| (x - 0.3).powi(2), -2.0, 2.0, 1e-9);
        assert!((x - 0.3).abs() < 1e-8);
    }
}
