//! Master-equation and quantum-jump solvers.

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Operator;
use crate::error::{Error, Result};
use crate::stream_rng;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

const TRACE_DRIFT: f64 = 1e-8;
const HERMITICITY: f64 = 1e-10;
const POSITIVITY: f64 = 1e-6;

type Entries = Vec<(usize, usize, Complex64)>;

fn sparse(m: &Operator) -> Entries {
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v != ZERO {
                out.push((i, j, v));
            }
        }
    }
    out
}

/// Right-hand side of the master equation for constant `H` and jumps.
///
/// The Hamiltonian is stored as `H_eff − μ` with
/// `H_eff = H − (i/2) Σ J†J` and `μ` the midpoint of the real diagonal;
/// the shift cancels in the commutator and only contributes a global phase
/// to pure states.
struct Generator {
    dim: usize,
    h_eff: Entries,
    jumps: Vec<Entries>,
    shift: f64,
    h_norm: f64,
    jump_norm: f64,
}

impl Generator {
    fn new(h: &Operator, jumps: &[Operator]) -> Result<Self> {
        let dim = h.nrows();
        if h.ncols() != dim || jumps.iter().any(|j| j.shape() != (dim, dim)) {
            return Err(Error::Shape("operators must be square and of equal size".into()));
        }
        let mut h_eff = h.clone();
        for j in jumps {
            h_eff -= (j.adjoint() * j) * Complex64::new(0.0, 0.5);
        }
        let (lo, hi) = (0..dim).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            (lo.min(h_eff[(i, i)].re), hi.max(h_eff[(i, i)].re))
        });
        let shift = if dim > 0 { 0.5 * (lo + hi) } else { 0.0 };
        for i in 0..dim {
            h_eff[(i, i)] -= Complex64::from(shift);
        }
        let col = (0..dim).map(|j| h_eff.column(j).iter().map(|z| z.norm()).sum::<f64>());
        let row = (0..dim).map(|i| h_eff.row(i).iter().map(|z| z.norm()).sum::<f64>());
        let h_norm = col.chain(row).fold(0.0, f64::max);
        let jumps: Vec<Entries> = jumps.iter().map(sparse).collect();
        let jump_norm = jumps
            .iter()
            .map(|e| e.iter().map(|(_, _, v)| v.norm()).sum::<f64>().powi(2))
            .sum();
        Ok(Generator {
            dim,
            h_eff: sparse(&h_eff),
            jumps,
            shift,
            h_norm,
            jump_norm,
        })
    }

    fn density_norm(&self) -> f64 {
        2.0 * self.h_norm + self.jump_norm
    }

    /// `out = −i(H_eff ρ − ρ H_eff†) + Σ J ρ J†`.
    fn density_rhs(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        out.fill(ZERO);
        for &(i, j, h) in &self.h_eff {
            let left = -I * h;
            let (src, dst) = (j * d, i * d);
            for k in 0..d {
                out[dst + k] += left * rho[src + k];
            }
            let right = I * h.conj();
            for k in 0..d {
                out[k * d + i] += right * rho[k * d + j];
            }
        }
        for jump in &self.jumps {
            for &(a, i, v1) in jump {
                for &(b, j, v2) in jump {
                    out[a * d + b] += v1 * v2.conj() * rho[i * d + j];
                }
            }
        }
    }

    /// `out = −i H_eff ψ` (shifted).
    fn vector_rhs(&self, psi: &[Complex64], out: &mut [Complex64]) {
        out.fill(ZERO);
        for &(i, j, h) in &self.h_eff {
            out[i] += -I * h * psi[j];
        }
    }

    fn evolve_density(&self, rho: &mut [Complex64], t: f64) {
        taylor_propagate(|x, y| self.density_rhs(x, y), self.density_norm(), t, rho);
    }

    fn evolve_vector(&self, psi: &mut [Complex64], t: f64) {
        taylor_propagate(|x, y| self.vector_rhs(x, y), self.h_norm, t, psi);
        let phase = Complex64::from_polar(1.0, -self.shift * t);
        psi.iter_mut().for_each(|z| *z *= phase);
    }
}

const TAYLOR_RADIUS: f64 = 4.0;
const TAYLOR_TERMS: usize = 80;

fn max_abs(v: &[Complex64]) -> f64 {
    v.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// `v ← exp(tA) v` by a truncated Taylor series on substeps with
/// `‖A‖ h ≤ 4`, stopping each series when two consecutive terms are below
/// round-off relative to the partial sum.
fn taylor_propagate<F: Fn(&[Complex64], &mut [Complex64])>(apply: F, norm: f64, t: f64, v: &mut [Complex64]) {
    if t == 0.0 {
        return;
    }
    let steps = ((norm * t.abs()) / TAYLOR_RADIUS).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let n = v.len();
    let mut term = vec![ZERO; n];
    let mut next = vec![ZERO; n];
    for _ in 0..steps {
        term.copy_from_slice(v);
        let mut small = 0;
        for k in 1..=TAYLOR_TERMS {
            apply(&term, &mut next);
            let scale = h / k as f64;
            for (t, x) in term.iter_mut().zip(&next) {
                *t = x * scale;
            }
            for (acc, t) in v.iter_mut().zip(&term) {
                *acc += t;
            }
            if max_abs(&term) <= 1e-17 * max_abs(v) {
                small += 1;
                if small == 2 {
                    break;
                }
            } else {
                small = 0;
            }
        }
    }
}

/// Health of a density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateDiagnostics {
    pub trace: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
}

pub fn check_state(rho: &Operator) -> StateDiagnostics {
    let trace = rho.trace().re;
    let hermiticity = (rho - rho.adjoint()).iter().fold(0.0, |m: f64, z| m.max(z.norm()));
    let sym = (rho + rho.adjoint()) * Complex64::from(0.5);
    let min_eigenvalue = SymmetricEigen::new(sym).eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    StateDiagnostics {
        trace,
        hermiticity,
        min_eigenvalue,
    }
}

fn validate_initial(rho: &Operator) -> Result<()> {
    if rho.nrows() != rho.ncols() {
        return Err(Error::Shape("density matrix must be square".into()));
    }
    let d = check_state(rho);
    if (d.trace - 1.0).abs() > TRACE_DRIFT || d.hermiticity > HERMITICITY || d.min_eigenvalue < -POSITIVITY {
        return Err(Error::Parameter(format!("initial state is not a density matrix: {d:?}")));
    }
    Ok(())
}

fn validate_times(t0: f64, times: &[f64]) -> Result<()> {
    let mut last = t0;
    for &t in times {
        if !(t >= last) || !t.is_finite() {
            return Err(Error::Parameter("sample times must be finite, nondecreasing and not before t0".into()));
        }
        last = t;
    }
    Ok(())
}

fn to_flat(m: &Operator) -> Vec<Complex64> {
    let d = m.nrows();
    (0..d * d).map(|k| m[(k / d, k % d)]).collect()
}

fn from_flat(d: usize, v: &[Complex64]) -> Operator {
    Operator::from_fn(d, d, |i, j| v[i * d + j])
}

fn flat_trace(d: usize, v: &[Complex64]) -> f64 {
    (0..d).map(|i| v[i * d + i].re).sum()
}

fn checked_sample(d: usize, flat: &[Complex64], t: f64) -> Result<Operator> {
    let rho = from_flat(d, flat);
    let diag = check_state(&rho);
    if diag.hermiticity > HERMITICITY {
        return Err(Error::Integrator(format!("state lost Hermiticity ({:.1e}) at t = {t:e}", diag.hermiticity)));
    }
    if diag.min_eigenvalue < -POSITIVITY {
        return Err(Error::Integrator(format!(
            "state lost positivity (eigenvalue {:.1e}) at t = {t:e}",
            diag.min_eigenvalue
        )));
    }
    Ok(rho)
}

fn check_trace(d: usize, flat: &[Complex64], t: f64) -> Result<()> {
    let drift = (flat_trace(d, flat) - 1.0).abs();
    if drift > TRACE_DRIFT {
        return Err(Error::Integrator(format!("trace drifted by {drift:.1e} at t = {t:e}")));
    }
    Ok(())
}

/// Error control of the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 20_000_000,
        }
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Integrate `dρ/dt = −i[H(t), ρ] + Σ (JρJ† − ½{J†J, ρ})` with an adaptive
/// Dormand–Prince 5(4) scheme, returning `ρ` at each sample time.
///
/// The trace is checked after every accepted step and Hermiticity and
/// positivity at every sample; violations abort with
/// [`Error::Integrator`].
pub fn integrate_master<H>(
    rho0: &Operator,
    hamiltonian: H,
    jumps: &[Operator],
    t0: f64,
    sample_times: &[f64],
    tol: Tolerance,
) -> Result<Vec<Operator>>
where
    H: Fn(f64) -> Operator,
{
    validate_initial(rho0)?;
    validate_times(t0, sample_times)?;
    let d = rho0.nrows();
    let rhs = |t: f64, y: &[Complex64], out: &mut [Complex64]| -> Result<()> {
        Generator::new(&hamiltonian(t), jumps)?.density_rhs(y, out);
        Ok(())
    };
    let n = d * d;
    let mut y = to_flat(rho0);
    let mut t = t0;
    let mut k: Vec<Vec<Complex64>> = vec![vec![ZERO; n]; 7];
    let mut stage = vec![ZERO; n];
    let mut y_new = vec![ZERO; n];
    rhs(t, &y, &mut k[0])?;
    let f_norm = max_abs(&k[0]).max(1e-300);
    let mut h = (0.01 * max_abs(&y).max(1e-10) / f_norm).max(1e-18);
    let mut steps = 0usize;
    let mut out = Vec::with_capacity(sample_times.len());
    for &target in sample_times {
        while t < target {
            if steps >= tol.max_steps {
                return Err(Error::Integrator(format!("step budget of {} exhausted", tol.max_steps)));
            }
            steps += 1;
            let hit = t + h >= target;
            let step = if hit { target - t } else { h };
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        if A[s][j] != 0.0 {
                            acc += kj[i] * (A[s][j] * step);
                        }
                    }
                    stage[i] = acc;
                }
                rhs(t + C[s] * step, &stage, &mut k[s])?;
                if s == 6 {
                    y_new.copy_from_slice(&stage);
                }
            }
            let mut err = 0.0;
            for i in 0..n {
                let e: Complex64 = (0..7).map(|j| k[j][i] * (E[j] * step)).sum();
                let scale = tol.atol + tol.rtol * y[i].norm().max(y_new[i].norm());
                err += (e.norm() / scale).powi(2);
            }
            let err = (err / n as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Integrator(format!("non-finite error estimate at t = {t:e}")));
            }
            if err <= 1.0 {
                t = if hit { target } else { t + step };
                y.copy_from_slice(&y_new);
                k.swap(0, 6);
                check_trace(d, &y, t)?;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 && hit {
                h = h.max(step * factor.min(1.0));
            } else {
                h = step * factor;
            }
            if h < 1e-14 * t.abs().max(1e-30) {
                return Err(Error::Integrator(format!("step size underflow at t = {t:e}")));
            }
        }
        out.push(checked_sample(d, &y, target)?);
    }
    Ok(out)
}

fn slices(t0: f64, t1: f64, max_slice: f64) -> impl Iterator<Item = (f64, f64)> {
    let count = if t1 > t0 {
        ((t1 - t0) / max_slice).ceil().max(1.0) as usize
    } else {
        0
    };
    let h = if count > 0 { (t1 - t0) / count as f64 } else { 0.0 };
    (0..count).map(move |i| (t0 + i as f64 * h, h))
}

fn check_slice(max_slice: f64) -> Result<()> {
    if !(max_slice > 0.0 && max_slice.is_finite()) {
        return Err(Error::Parameter("slice length must be positive".into()));
    }
    Ok(())
}

/// Master-equation propagation with `H` held at its midpoint value on
/// slices no longer than `max_slice`; each slice is propagated to
/// round-off accuracy.
///
/// Suited to drives with a large intermediate detuning, where an explicit
/// adaptive scheme would have to resolve every `1/Δ` oscillation. Accepts
/// any square `ρ₀` (also non-Hermitian operators); the density-matrix
/// checks are applied only when `ρ₀` is a state.
pub fn propagate_master<H>(
    rho0: &Operator,
    hamiltonian: H,
    jumps: &[Operator],
    t0: f64,
    sample_times: &[f64],
    max_slice: f64,
) -> Result<Vec<Operator>>
where
    H: Fn(f64) -> Operator,
{
    if rho0.nrows() != rho0.ncols() {
        return Err(Error::Shape("density matrix must be square".into()));
    }
    check_slice(max_slice)?;
    validate_times(t0, sample_times)?;
    let d = rho0.nrows();
    let is_state = validate_initial(rho0).is_ok();
    let mut y = to_flat(rho0);
    let mut t = t0;
    let mut out = Vec::with_capacity(sample_times.len());
    for &target in sample_times {
        for (start, h) in slices(t, target, max_slice) {
            Generator::new(&hamiltonian(start + 0.5 * h), jumps)?.evolve_density(&mut y, h);
            if is_state {
                check_trace(d, &y, start + h)?;
            }
        }
        t = target;
        out.push(if is_state {
            checked_sample(d, &y, target)?
        } else {
            from_flat(d, &y)
        });
    }
    Ok(out)
}

/// Schrödinger evolution with the same slicing as [`propagate_master`].
pub fn propagate_pure<H>(
    psi0: &DVector<Complex64>,
    hamiltonian: H,
    t0: f64,
    sample_times: &[f64],
    max_slice: f64,
) -> Result<Vec<DVector<Complex64>>>
where
    H: Fn(f64) -> Operator,
{
    check_slice(max_slice)?;
    validate_times(t0, sample_times)?;
    let mut psi: Vec<Complex64> = psi0.iter().copied().collect();
    let mut t = t0;
    let mut out = Vec::with_capacity(sample_times.len());
    for &target in sample_times {
        for (start, h) in slices(t, target, max_slice) {
            let hm = hamiltonian(start + 0.5 * h);
            if hm.shape() != (psi.len(), psi.len()) {
                return Err(Error::Shape("Hamiltonian does not match the state".into()));
            }
            Generator::new(&hm, &[])?.evolve_vector(&mut psi, h);
        }
        t = target;
        out.push(DVector::from_column_slice(&psi));
    }
    Ok(out)
}

/// Settings of a quantum-jump run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McwfOptions {
    pub n_traj: usize,
    pub seed: u64,
    pub max_slice: f64,
}

/// Trajectory-averaged basis-state populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McwfResult {
    pub times: Vec<f64>,
    /// `mean[s][i]`: population of basis state `i` at sample `s`.
    pub mean: Vec<Vec<f64>>,
    /// Standard error of each mean.
    pub std_error: Vec<Vec<f64>>,
    pub jumps: usize,
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn apply_sparse(op: &Entries, psi: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; psi.len()];
    for &(i, j, v) in op {
        out[i] += v * psi[j];
    }
    out
}

struct Trajectory {
    samples: Vec<Vec<f64>>,
    jumps: usize,
}

fn one_trajectory<H>(
    psi0: &[Complex64],
    hamiltonian: &H,
    jumps: &[Operator],
    jump_entries: &[Entries],
    t0: f64,
    sample_times: &[f64],
    options: &McwfOptions,
    index: usize,
) -> Result<Trajectory>
where
    H: Fn(f64) -> Operator,
{
    let mut rng = stream_rng(options.seed, index as u64);
    let mut psi = psi0.to_vec();
    let mut threshold: f64 = rng.gen();
    let mut t = t0;
    let mut samples = Vec::with_capacity(sample_times.len());
    let mut count = 0;
    for &target in sample_times {
        for (start, h) in slices(t, target, options.max_slice) {
            let gen = Generator::new(&hamiltonian(start + 0.5 * h), jumps)?;
            let mut remaining = h;
            loop {
                let mut trial = psi.clone();
                gen.evolve_vector(&mut trial, remaining);
                if norm_sqr(&trial) > threshold || jump_entries.is_empty() {
                    psi = trial;
                    break;
                }
                // The norm decays monotonically; bisect for the jump time.
                let (mut lo, mut hi) = (0.0, remaining);
                for _ in 0..48 {
                    let mid = 0.5 * (lo + hi);
                    let mut probe = psi.clone();
                    gen.evolve_vector(&mut probe, mid);
                    if norm_sqr(&probe) > threshold {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                gen.evolve_vector(&mut psi, hi);
                let candidates: Vec<Vec<Complex64>> = jump_entries.iter().map(|j| apply_sparse(j, &psi)).collect();
                let weights: Vec<f64> = candidates.iter().map(|c| norm_sqr(c)).collect();
                let total: f64 = weights.iter().sum();
                if total <= 0.0 {
                    return Err(Error::Integrator("jump requested with no jump weight".into()));
                }
                let mut pick = rng.gen::<f64>() * total;
                let mut chosen = weights.len() - 1;
                for (k, w) in weights.iter().enumerate() {
                    if pick < *w {
                        chosen = k;
                        break;
                    }
                    pick -= w;
                }
                let norm = weights[chosen].sqrt();
                psi = candidates[chosen].iter().map(|z| z / norm).collect();
                threshold = rng.gen();
                count += 1;
                remaining -= hi;
                if remaining <= 0.0 {
                    break;
                }
            }
        }
        t = target;
        let n = norm_sqr(&psi);
        samples.push(psi.iter().map(|z| z.norm_sqr() / n).collect());
    }
    Ok(Trajectory { samples, jumps: count })
}

/// Monte Carlo wave-function unravelling of the master equation.
///
/// Each trajectory draws from its own random stream derived from
/// `(seed, trajectory index)` and results are summed in index order, so
/// the output does not depend on how the work is scheduled.
pub fn mcwf_evolve<H>(
    psi0: &DVector<Complex64>,
    hamiltonian: H,
    jumps: &[Operator],
    t0: f64,
    sample_times: &[f64],
    options: McwfOptions,
) -> Result<McwfResult>
where
    H: Fn(f64) -> Operator + Sync,
{
    check_slice(options.max_slice)?;
    validate_times(t0, sample_times)?;
    if options.n_traj == 0 {
        return Err(Error::Parameter("need at least one trajectory".into()));
    }
    let norm = psi0.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Parameter(format!("initial state has norm {norm}")));
    }
    let d = psi0.len();
    if jumps.iter().any(|j| j.shape() != (d, d)) {
        return Err(Error::Shape("jump operators do not match the state".into()));
    }
    let start: Vec<Complex64> = psi0.iter().copied().collect();
    let entries: Vec<Entries> = jumps.iter().map(sparse).collect();
    let runs: Vec<Trajectory> = (0..options.n_traj)
        .into_par_iter()
        .map(|k| one_trajectory(&start, &hamiltonian, jumps, &entries, t0, sample_times, &options, k))
        .collect::<Result<_>>()?;
    let n = options.n_traj as f64;
    let mut mean = vec![vec![0.0; d]; sample_times.len()];
    for run in &runs {
        for (s, pops) in run.samples.iter().enumerate() {
            for (i, p) in pops.iter().enumerate() {
                mean[s][i] += p / n;
            }
        }
    }
    let mut std_error = vec![vec![0.0; d]; sample_times.len()];
    if options.n_traj > 1 {
        for run in &runs {
            for (s, pops) in run.samples.iter().enumerate() {
                for (i, p) in pops.iter().enumerate() {
                    std_error[s][i] += (p - mean[s][i]).powi(2);
                }
            }
        }
        for v in std_error.iter_mut().flatten() {
            *v = (*v / (n * (n - 1.0))).sqrt();
        }
    }
    Ok(McwfResult {
        times: sample_times.to_vec(),
        mean,
        std_error,
        jumps: runs.iter().map(|r| r.jumps).sum(),
    })
}
