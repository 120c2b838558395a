//! Optical-tweezer potential and thermal initial conditions.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BOLTZMANN;
use crate::error::{Error, Result};
use crate::stream_rng;

/// Gaussian-beam tweezer and the temperature of the atom it holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapSpec {
    pub depth_j: f64,
    pub waist_m: f64,
    pub rayleigh_m: f64,
    pub wavelength_m: f64,
    pub temperature_k: f64,
    pub mass_kg: f64,
}

impl TrapSpec {
    /// Trap from optical parameters in lab units; `z0 = π w0² / λ`.
    pub fn new(depth_uk: f64, waist_um: f64, wavelength_nm: f64, temperature_uk: f64, mass_kg: f64) -> Result<Self> {
        let waist_m = waist_um * 1e-6;
        let wavelength_m = wavelength_nm * 1e-9;
        Self::from_parts(
            depth_uk * 1e-6 * BOLTZMANN,
            waist_m,
            PI * waist_m * waist_m / wavelength_m,
            wavelength_m,
            temperature_uk * 1e-6,
            mass_kg,
        )
    }

    pub fn from_parts(
        depth_j: f64,
        waist_m: f64,
        rayleigh_m: f64,
        wavelength_m: f64,
        temperature_k: f64,
        mass_kg: f64,
    ) -> Result<Self> {
        let positive = [depth_j, waist_m, rayleigh_m, wavelength_m, mass_kg];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(temperature_k >= 0.0 && temperature_k.is_finite()) {
            return Err(Error::Parameter("trap parameters must be positive and temperature nonnegative".into()));
        }
        Ok(TrapSpec {
            depth_j,
            waist_m,
            rayleigh_m,
            wavelength_m,
            temperature_k,
            mass_kg,
        })
    }

    pub fn with_temperature(mut self, temperature_k: f64) -> Result<Self> {
        if !(temperature_k >= 0.0 && temperature_k.is_finite()) {
            return Err(Error::Parameter("temperature must be nonnegative".into()));
        }
        self.temperature_k = temperature_k;
        Ok(self)
    }

    pub fn depth_uk(&self) -> f64 {
        self.depth_j / BOLTZMANN * 1e6
    }

    /// Potential energy above the trap bottom; tends to the depth far away.
    pub fn potential(&self, r: [f64; 3]) -> f64 {
        let wz2 = 1.0 + (r[2] / self.rayleigh_m).powi(2);
        let rho2 = r[0] * r[0] + r[1] * r[1];
        self.depth_j * (1.0 - (-2.0 * rho2 / (self.waist_m * self.waist_m * wz2)).exp() / wz2)
    }

    fn kt(&self) -> f64 {
        BOLTZMANN * self.temperature_k
    }
}

/// Harmonic radial and axial angular frequencies at the trap bottom.
pub fn trap_frequencies(trap: &TrapSpec) -> (f64, f64) {
    let s = (trap.depth_j / trap.mass_kg).sqrt();
    (2.0 * s / trap.waist_m, std::f64::consts::SQRT_2 * s / trap.rayleigh_m)
}

/// Straight-line motion after the trap is switched off.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub position_m: [f64; 3],
    pub velocity_m_s: [f64; 3],
}

impl Trajectory {
    pub fn at_rest(position_m: [f64; 3]) -> Self {
        Trajectory {
            position_m,
            velocity_m_s: [0.0; 3],
        }
    }

    pub fn position(&self, t: f64) -> [f64; 3] {
        let (p, v) = (self.position_m, self.velocity_m_s);
        [p[0] + v[0] * t, p[1] + v[1] * t, p[2] + v[2] * t]
    }

    /// Same motion about a different centre.
    pub fn offset(&self, origin: [f64; 3]) -> Self {
        let p = self.position_m;
        Trajectory {
            position_m: [p[0] + origin[0], p[1] + origin[1], p[2] + origin[2]],
            velocity_m_s: self.velocity_m_s,
        }
    }

    pub fn kinetic_energy(&self, mass_kg: f64) -> f64 {
        0.5 * mass_kg * self.velocity_m_s.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Position distribution of thermal samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SamplingMode {
    /// Independent Gaussians of the harmonic approximation.
    Harmonic,
    /// Metropolis–Hastings on the full potential, restricted to
    /// `U(r) < cutoff_kt · k_B T`.
    Exact { cutoff_kt: f64 },
}

impl Default for SamplingMode {
    fn default() -> Self {
        SamplingMode::Harmonic
    }
}

const CHAIN_LENGTH: usize = 64;

fn normal3<R: Rng>(rng: &mut R, s: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (o, si) in out.iter_mut().zip(s) {
        *o = si * rng.sample::<f64, _>(StandardNormal);
    }
    out
}

/// Thermal positions and velocities, one independent random stream per
/// sample.
///
/// In [`SamplingMode::Exact`] each sample runs a short Metropolis chain
/// started from a harmonic draw (or the origin when that lies beyond the
/// cutoff), with Gaussian proposals of the harmonic widths.
pub fn sample_thermal(trap: &TrapSpec, mode: SamplingMode, n: usize, seed: u64) -> Result<Vec<Trajectory>> {
    if trap.temperature_k == 0.0 {
        return Ok(vec![Trajectory::default(); n]);
    }
    let kt = trap.kt();
    let (wr, wz) = trap_frequencies(trap);
    let m = trap.mass_kg;
    let sigma = [
        (kt / (m * wr * wr)).sqrt(),
        (kt / (m * wr * wr)).sqrt(),
        (kt / (m * wz * wz)).sqrt(),
    ];
    let sigma_v = (kt / m).sqrt();
    let cutoff = match mode {
        SamplingMode::Harmonic => None,
        SamplingMode::Exact { cutoff_kt } => {
            if !(cutoff_kt > 0.0) {
                return Err(Error::Parameter("cutoff must be positive".into()));
            }
            let e_cut = cutoff_kt * kt;
            if e_cut >= trap.depth_j {
                return Err(Error::Parameter(format!(
                    "cutoff {cutoff_kt} k_B T reaches the trap depth; the Boltzmann distribution is not normalizable"
                )));
            }
            Some(e_cut)
        }
    };
    let draws: Vec<(Trajectory, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let mut pos = normal3(&mut rng, sigma);
            let velocity_m_s = normal3(&mut rng, [sigma_v; 3]);
            let mut accepted = 0;
            if let Some(e_cut) = cutoff {
                if trap.potential(pos) >= e_cut {
                    pos = [0.0; 3];
                }
                let mut u = trap.potential(pos);
                for _ in 0..CHAIN_LENGTH {
                    let step = normal3(&mut rng, sigma);
                    let trial = [pos[0] + step[0], pos[1] + step[1], pos[2] + step[2]];
                    let ut = trap.potential(trial);
                    let uniform: f64 = rng.gen();
                    if ut < e_cut && uniform < (-(ut - u) / kt).exp() {
                        pos = trial;
                        u = ut;
                        accepted += 1;
                    }
                }
            }
            (
                Trajectory {
                    position_m: pos,
                    velocity_m_s,
                },
                accepted,
            )
        })
        .collect();
    if cutoff.is_some() && n > 0 {
        let rate = draws.iter().map(|d| d.1).sum::<usize>() as f64 / (n * CHAIN_LENGTH) as f64;
        if rate < 0.01 {
            return Err(Error::Parameter(format!("Metropolis acceptance {rate:.4} below 1%")));
        }
    }
    Ok(draws.into_iter().map(|d| d.0).collect())
}
