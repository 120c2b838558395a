//! Beam models, motion-dependent gate parameters, Rabi scans and the
//! two-pulse CZ gate.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solver::{propagate_master, propagate_pure};
use super::thermal::{sample_thermal, SamplingMode, Trajectory, TrapSpec};
use super::{
    atom_hamiltonian, atom_jump_operators, build_hamiltonian, jump_operators, pair_index, AtomDrive, Branching, Decay,
    GateParams, Level, Operator, ATOM_DIM, PAIR_DIM, RB87_MASS_KG,
};
use crate::error::{Error, Result};
use crate::flattop::{fwhm_exact, hg_coefficients, Basis, ModeExpansion};
use crate::optim::nelder_mead;
use crate::propagation::FlatTopBeam1d;

/// Site-selective second-stage beam: a separable Hermite–Gaussian
/// superposition along `x` and `y`, focused at `z = 0` and propagating
/// along `−z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddressingBeam {
    pub x_profile: ModeExpansion,
    pub y_profile: ModeExpansion,
    pub wavelength_m: f64,
    pub center_m: [f64; 2],
}

impl AddressingBeam {
    /// Gaussian of waist `waist_x_m` along `x` and an order-`order_y`
    /// flat-top along `y` whose field falls to half at `±half_width_m`.
    pub fn flat_top(order_y: usize, half_width_m: f64, waist_x_m: f64, wavelength_m: f64) -> Result<Self> {
        if !(half_width_m > 0.0 && waist_x_m > 0.0 && wavelength_m > 0.0) {
            return Err(Error::Parameter("beam dimensions must be positive".into()));
        }
        let waist_y_m = 2.0 * half_width_m / fwhm_exact(order_y);
        Ok(AddressingBeam {
            x_profile: ModeExpansion::new(Basis::HermiteGauss, waist_x_m * 1e6, vec![(0, 1.0)])?,
            y_profile: hg_coefficients(order_y)?.with_waist(waist_y_m * 1e6)?,
            wavelength_m,
            center_m: [0.0, 0.0],
        })
    }

    /// Field relative to the focus centre.
    pub fn relative_field(&self, r: [f64; 3]) -> Result<Complex64> {
        let (x, y) = self.axes()?;
        Ok(self.eval(&x, &y, r))
    }

    fn axes(&self) -> Result<(Axis, Axis)> {
        Ok((
            Axis::new(&self.x_profile, self.wavelength_m)?,
            Axis::new(&self.y_profile, self.wavelength_m)?,
        ))
    }

    fn eval(&self, x: &Axis, y: &Axis, r: [f64; 3]) -> Complex64 {
        // Propagation along −z mirrors the longitudinal coordinate.
        x.value(r[0] - self.center_m[0], -r[2]) * y.value(r[1] - self.center_m[1], -r[2])
    }
}

#[derive(Debug, Clone)]
struct Axis {
    beam: FlatTopBeam1d,
    waist: f64,
    rayleigh: f64,
    norm: Complex64,
}

impl Axis {
    fn new(e: &ModeExpansion, wavelength_m: f64) -> Result<Self> {
        let beam = FlatTopBeam1d::from_expansion(e.clone())?;
        let waist = e.waist_um() * 1e-6;
        let norm = beam.field(0.0, 0.0);
        if norm.norm() == 0.0 {
            return Err(Error::Parameter("beam profile vanishes at its centre".into()));
        }
        Ok(Axis {
            beam,
            waist,
            rayleigh: PI * waist * waist / wavelength_m,
            norm,
        })
    }

    fn value(&self, u: f64, z: f64) -> Complex64 {
        self.beam.field(u / self.waist, z / self.rayleigh) / self.norm
    }
}

/// Two-pulse CZ protocol with a laser phase jump between the pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    /// Two-photon detuning in units of the two-photon Rabi frequency.
    pub detuning_ratio: f64,
    pub phase_jump_rad: f64,
    /// Rabi frequency times the duration of one pulse.
    pub pulse_area_rad: f64,
    /// Length of the `sin²` edges inside each pulse.
    pub ramp_s: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            detuning_ratio: 0.377371,
            phase_jump_rad: 3.90242,
            pulse_area_rad: 4.29268,
            ramp_s: 5e-9,
        }
    }
}

impl Protocol {
    pub fn pulse_s(&self, omega_bar: f64) -> f64 {
        self.pulse_area_rad / omega_bar
    }

    pub fn schedule(&self, omega_bar: f64) -> Schedule {
        let tau = self.pulse_s(omega_bar);
        let detuning_rad_s = self.detuning_ratio * omega_bar;
        let pulse = |start_s, phase_rad| Pulse {
            start_s,
            duration_s: tau,
            phase_rad,
            detuning_rad_s,
            ramp_s: self.ramp_s,
        };
        Schedule {
            pulses: vec![pulse(0.0, 0.0), pulse(tau, self.phase_jump_rad)],
        }
    }
}

/// One pulse of both excitation beams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub start_s: f64,
    pub duration_s: f64,
    /// Phase of the second-stage beam.
    pub phase_rad: f64,
    /// Extra two-photon detuning during the pulse.
    pub detuning_rad_s: f64,
    pub ramp_s: f64,
}

impl Pulse {
    fn end(&self) -> f64 {
        self.start_s + self.duration_s
    }

    fn envelope(&self, t: f64) -> f64 {
        let u = t - self.start_s;
        let ramp = self.ramp_s.min(0.5 * self.duration_s);
        if ramp <= 0.0 {
            return 1.0;
        }
        let edge = u.min(self.duration_s - u);
        if edge >= ramp {
            1.0
        } else {
            (0.5 * PI * edge.max(0.0) / ramp).sin().powi(2)
        }
    }
}

/// Sequence of non-overlapping pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub pulses: Vec<Pulse>,
}

#[derive(Debug, Clone, Copy)]
struct PulseState {
    envelope: f64,
    phase: f64,
    detuning: f64,
}

impl Schedule {
    /// One square pulse from `t = 0`.
    pub fn square(duration_s: f64) -> Self {
        Schedule {
            pulses: vec![Pulse {
                start_s: 0.0,
                duration_s,
                phase_rad: 0.0,
                detuning_rad_s: 0.0,
                ramp_s: 0.0,
            }],
        }
    }

    pub fn end(&self) -> f64 {
        self.pulses.iter().map(Pulse::end).fold(0.0, f64::max)
    }

    /// Pulse edges, used to align propagation slices.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.pulses.iter().flat_map(|p| [p.start_s, p.end()]).collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    fn at(&self, t: f64) -> PulseState {
        self.pulses
            .iter()
            .find(|p| t >= p.start_s && t <= p.end())
            .map_or(
                PulseState {
                    envelope: 0.0,
                    phase: 0.0,
                    detuning: 0.0,
                },
                |p| PulseState {
                    envelope: p.envelope(t),
                    phase: p.phase_rad,
                    detuning: p.detuning_rad_s,
                },
            )
    }
}

/// Atoms, beams, trap and protocol of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    /// Intermediate-state detuning `Δ`.
    pub intermediate_detuning_rad_s: f64,
    /// Two-photon Rabi frequency `Ω̄`, averaged over the target sites.
    pub two_photon_rabi_rad_s: f64,
    /// `Ω_r / Ω_b` at the target sites.
    pub rabi_ratio: f64,
    pub c6_rad_s_m6: f64,
    pub gamma_p_per_s: f64,
    pub gamma_r_per_s: f64,
    pub branching: Branching,
    pub zero_channel_to_one: bool,
    pub first_wavelength_m: f64,
    /// Waist of the global first-stage beam, which propagates along `+z`.
    pub global_waist_m: f64,
    pub addressing: AddressingBeam,
    /// Additional two-photon detuning at unit relative addressing
    /// intensity, for Stark shifts beyond the modelled `|p⟩` coupling.
    pub stark_shift_rad_s: f64,
    pub trap: TrapSpec,
    pub sampling: SamplingMode,
    pub targets_m: [[f64; 3]; 2],
    pub spectators_m: Vec<[f64; 3]>,
    pub protocol: Protocol,
    pub max_slice_s: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        let two_pi = 2.0 * PI;
        GateConfig {
            intermediate_detuning_rad_s: two_pi * 870e6,
            two_photon_rabi_rad_s: two_pi * 2.41e6,
            rabi_ratio: 1.0,
            c6_rad_s_m6: two_pi * 135e9 * 1e-36,
            gamma_p_per_s: 1.0 / 27.7e-9,
            gamma_r_per_s: 1.0e4,
            branching: Branching::default(),
            zero_channel_to_one: false,
            first_wavelength_m: 795e-9,
            global_waist_m: 570e-6,
            addressing: AddressingBeam::flat_top(8, 3.0e-6, 1.1e-6, 474e-9).expect("valid default beam"),
            stark_shift_rad_s: 0.0,
            trap: TrapSpec::new(800.0, 1.4, 813.0, 100.0, RB87_MASS_KG).expect("valid default trap"),
            sampling: SamplingMode::Harmonic,
            targets_m: [[0.0, -1.8e-6, 0.0], [0.0, 1.8e-6, 0.0]],
            spectators_m: vec![[0.0, -5.4e-6, 0.0], [0.0, 5.4e-6, 0.0]],
            protocol: Protocol::default(),
            max_slice_s: 0.5e-9,
        }
    }
}

impl GateConfig {
    pub fn decay(&self) -> Decay {
        Decay {
            gamma_p: self.gamma_p_per_s,
            gamma_r: self.gamma_r_per_s,
            branching: self.branching,
            zero_channel_to_one: self.zero_channel_to_one,
        }
    }

    pub fn interaction(&self, r1: [f64; 3], r2: [f64; 3]) -> f64 {
        let d2: f64 = (0..3).map(|k| (r1[k] - r2[k]).powi(2)).sum();
        self.c6_rad_s_m6 / d2.powi(3)
    }

    /// Single-photon Rabi frequencies `(Ω_r, Ω_b)` at the target sites.
    ///
    /// With `Ω_r = Ω_b = Ω` the slow eigenvalue splitting of the
    /// `|1⟩, |p⟩, |r⟩` system is `(√(Δ² + 2Ω²) − Δ)/2`; setting it to `Ω̄`
    /// gives `Ω_r Ω_b = 2Ω̄(Δ + Ω̄)`, which is used for any ratio.
    pub fn site_rabi(&self) -> (f64, f64) {
        let product = 2.0 * self.two_photon_rabi_rad_s * (self.intermediate_detuning_rad_s + self.two_photon_rabi_rad_s);
        ((product * self.rabi_ratio).sqrt(), (product / self.rabi_ratio).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.intermediate_detuning_rad_s,
            self.two_photon_rabi_rad_s,
            self.rabi_ratio,
            self.first_wavelength_m,
            self.global_waist_m,
            self.max_slice_s,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Parameter("detuning, Rabi frequency, ratio, wavelength, waist and slice must be positive".into()));
        }
        if !(self.c6_rad_s_m6 >= 0.0) {
            return Err(Error::Parameter("C6 must be nonnegative".into()));
        }
        self.decay();
        atom_jump_operators(&self.decay())?;
        if self.interaction(self.targets_m[0], self.targets_m[1]).is_infinite() {
            return Err(Error::Parameter("target atoms coincide".into()));
        }
        Ok(())
    }

    fn calibrate(&self) -> Result<Calibration> {
        self.validate()?;
        let (ax, ay) = self.addressing.axes()?;
        let global = |r: [f64; 3]| (-(r[0] * r[0] + r[1] * r[1]) / self.global_waist_m.powi(2)).exp();
        let a_mean = self
            .targets_m
            .iter()
            .map(|r| self.addressing.eval(&ax, &ay, *r).norm())
            .sum::<f64>()
            / 2.0;
        let g_mean = self.targets_m.iter().map(|r| global(*r)).sum::<f64>() / 2.0;
        if a_mean == 0.0 || g_mean == 0.0 {
            return Err(Error::Parameter("target sites receive no light".into()));
        }
        let (wr, wb) = self.site_rabi();
        let delta = self.intermediate_detuning_rad_s;
        Ok(Calibration {
            beam: self.addressing.clone(),
            x_axis: ax,
            y_axis: ay,
            omega_r0: wr / g_mean,
            omega_b0: wb / a_mean,
            delta,
            light_shift_offset: (wb * wb - wr * wr) / (4.0 * delta),
            k1: 2.0 * PI / self.first_wavelength_m,
            k2: 2.0 * PI / self.addressing.wavelength_m,
            global_waist: self.global_waist_m,
            stark: self.stark_shift_rad_s,
        })
    }
}

/// Beam amplitudes fixed so the target sites see `Ω̄` on average.
#[derive(Debug, Clone)]
struct Calibration {
    beam: AddressingBeam,
    x_axis: Axis,
    y_axis: Axis,
    omega_r0: f64,
    omega_b0: f64,
    delta: f64,
    light_shift_offset: f64,
    k1: f64,
    k2: f64,
    global_waist: f64,
    stark: f64,
}

impl Calibration {
    fn drive(&self, traj: &Trajectory, pulse: PulseState, t: f64, noise: f64) -> AtomDrive {
        let r = traj.position(t);
        let vz = traj.velocity_m_s[2];
        let g = (-(r[0] * r[0] + r[1] * r[1]) / self.global_waist.powi(2)).exp();
        let a = self.beam.eval(&self.x_axis, &self.y_axis, r);
        let f = pulse.envelope;
        AtomDrive {
            omega_r: Complex64::from(self.omega_r0 * f * g),
            omega_b: a * Complex64::from_polar(self.omega_b0 * f, pulse.phase),
            // The first beam runs along +z, the second along −z.
            delta_p: self.delta - self.k1 * vz,
            delta_r: self.light_shift_offset + pulse.detuning - (self.k1 - self.k2) * vz
                + self.stark * a.norm_sqr() * f * f
                + noise,
        }
    }
}

/// Injects a detuning offset for atom `i` at time `t`; laser phase noise
/// would enter here.
pub type DetuningNoise = fn(usize, f64) -> f64;

fn no_noise(_atom: usize, _t: f64) -> f64 {
    0.0
}

/// Time-dependent [`GateParams`] of one pair of moving atoms.
#[derive(Debug, Clone)]
pub struct PairProvider {
    cal: Calibration,
    trajectories: [Trajectory; 2],
    schedule: Schedule,
    c6: f64,
    decay: Decay,
    noise: DetuningNoise,
}

impl PairProvider {
    pub fn at(&self, t: f64) -> GateParams {
        let pulse = self.schedule.at(t);
        let [a, b] = &self.trajectories;
        let d2: f64 = (0..3).map(|k| (a.position(t)[k] - b.position(t)[k]).powi(2)).sum();
        GateParams {
            atoms: [
                self.cal.drive(a, pulse, t, (self.noise)(0, t)),
                self.cal.drive(b, pulse, t, (self.noise)(1, t)),
            ],
            v: self.c6 / d2.powi(3),
            decay: self.decay,
        }
    }

    pub fn hamiltonian(&self, t: f64) -> Operator {
        let p = self.at(t);
        build_hamiltonian(&p.atoms[0], &p.atoms[1], p.v)
    }

    pub fn with_detuning_noise(mut self, noise: DetuningNoise) -> Self {
        self.noise = noise;
        self
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }
}

/// Gate parameters along the straight-line flight of two atoms; the
/// trajectories carry absolute positions.
pub fn params_from_trajectory(config: &GateConfig, trajectories: [Trajectory; 2], schedule: Schedule) -> Result<PairProvider> {
    Ok(PairProvider {
        cal: config.calibrate()?,
        trajectories,
        schedule,
        c6: config.c6_rad_s_m6,
        decay: config.decay(),
        noise: no_noise,
    })
}

fn atom_count(config: &GateConfig) -> usize {
    2 + config.spectators_m.len()
}

fn sites(config: &GateConfig) -> Vec<[f64; 3]> {
    config.targets_m.iter().copied().chain(config.spectators_m.iter().copied()).collect()
}

/// Trajectories of every atom for each Monte Carlo run, `[run][atom]`.
fn draw_motion(config: &GateConfig, thermal: bool, n_traj: usize, seed: u64) -> Result<Vec<Vec<Trajectory>>> {
    let sites = sites(config);
    if !thermal || config.trap.temperature_k == 0.0 {
        return Ok(vec![sites.iter().map(|s| Trajectory::at_rest(*s)).collect()]);
    }
    if n_traj == 0 {
        return Err(Error::Parameter("need at least one trajectory".into()));
    }
    let n_atoms = sites.len();
    let draws = sample_thermal(&config.trap, config.sampling, n_traj * n_atoms, seed)?;
    Ok(draws
        .chunks(n_atoms)
        .map(|run| run.iter().zip(&sites).map(|(t, s)| t.offset(*s)).collect())
        .collect())
}

fn single_atom_run(
    cal: &Calibration,
    traj: &Trajectory,
    schedule: &Schedule,
    decay: &Decay,
    rho0: &Operator,
    times: &[f64],
    max_slice: f64,
) -> Result<Vec<Operator>> {
    let jumps = atom_jump_operators(decay)?;
    let h = |t: f64| atom_hamiltonian(&cal.drive(traj, schedule.at(t), t, 0.0));
    propagate_master(rho0, h, &jumps, 0.0, times, max_slice)
}

fn single_atom_pure(
    cal: &Calibration,
    traj: &Trajectory,
    schedule: &Schedule,
    psi0: &DVector<Complex64>,
    times: &[f64],
    max_slice: f64,
) -> Result<Vec<DVector<Complex64>>> {
    let h = |t: f64| atom_hamiltonian(&cal.drive(traj, schedule.at(t), t, 0.0));
    propagate_pure(psi0, h, 0.0, times, max_slice)
}

/// Survival probability `1 − P_r` after driving for each duration: an
/// atom left in the Rydberg state is lost before imaging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiCurves {
    pub times_s: Vec<f64>,
    pub targets: Vec<Vec<f64>>,
    pub spectators: Vec<Vec<f64>>,
    pub runs: usize,
}

/// Thermal-averaged single-atom Rabi oscillations of every configured atom.
///
/// Each atom starts in `|1⟩` with its partner in the dark state `|0⟩`, so
/// the atoms evolve independently under a square resonant pulse.
pub fn rabi_scan(config: &GateConfig, durations: &[f64], n_traj: usize, seed: u64) -> Result<RabiCurves> {
    let cal = config.calibrate()?;
    if durations.windows(2).any(|w| w[1] < w[0]) || durations.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::Parameter("durations must be nonnegative and sorted".into()));
    }
    let motion = draw_motion(config, true, n_traj, seed)?;
    let schedule = Schedule::square(durations.last().copied().unwrap_or(0.0));
    let decay = config.decay();
    let (one, r) = (Level::One.index(), Level::R.index());
    let mut rho0 = Operator::zeros(ATOM_DIM, ATOM_DIM);
    rho0[(one, one)] = Complex64::from(1.0);
    let n_atoms = atom_count(config);
    let jobs: Vec<(usize, usize)> = (0..motion.len()).flat_map(|k| (0..n_atoms).map(move |j| (k, j))).collect();
    let curves: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(k, j)| {
            let states = single_atom_run(&cal, &motion[k][j], &schedule, &decay, &rho0, durations, config.max_slice_s)?;
            Ok(states.iter().map(|s| 1.0 - s[(r, r)].re).collect())
        })
        .collect::<Result<_>>()?;
    let mut mean = vec![vec![0.0; durations.len()]; n_atoms];
    for (&(_, j), c) in jobs.iter().zip(&curves) {
        for (m, v) in mean[j].iter_mut().zip(c) {
            *m += v;
        }
    }
    let runs = motion.len();
    for m in mean.iter_mut() {
        m.iter_mut().for_each(|v| *v /= runs as f64);
    }
    let spectators = mean.split_off(2);
    Ok(RabiCurves {
        times_s: durations.to_vec(),
        targets: mean,
        spectators,
        runs,
    })
}

/// Error channels of the CZ simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channels {
    pub decay: bool,
    pub thermal: bool,
    pub crosstalk: bool,
}

impl Channels {
    pub const ALL: Channels = Channels {
        decay: true,
        thermal: true,
        crosstalk: true,
    };
    pub const NONE: Channels = Channels {
        decay: false,
        thermal: false,
        crosstalk: false,
    };
}

fn plus_pair() -> DVector<Complex64> {
    let mut v = DVector::zeros(PAIR_DIM);
    for a in [Level::Zero, Level::One] {
        for b in [Level::Zero, Level::One] {
            v[pair_index(a, b)] = Complex64::from(0.5);
        }
    }
    v
}

fn plus_atom() -> DVector<Complex64> {
    let mut v = DVector::zeros(ATOM_DIM);
    v[Level::Zero.index()] = Complex64::from(std::f64::consts::FRAC_1_SQRT_2);
    v[Level::One.index()] = Complex64::from(std::f64::consts::FRAC_1_SQRT_2);
    v
}

/// `⟨ψ|ρ|ψ⟩`.
fn expectation(rho: &Operator, psi: &DVector<Complex64>) -> f64 {
    (psi.adjoint() * rho * psi)[(0, 0)].re
}

struct Reference {
    pair: DVector<Complex64>,
    spectators: Vec<DVector<Complex64>>,
}

/// CZ target states built from the single-qubit phases of a run without
/// motion or decay, which a calibrated experiment would cancel.
fn reference(config: &GateConfig, cal: &Calibration, schedule: &Schedule) -> Result<Reference> {
    let sites = sites(config);
    let still: Vec<Trajectory> = sites.iter().map(|s| Trajectory::at_rest(*s)).collect();
    let times = schedule.boundaries();
    let pair = PairProvider {
        cal: cal.clone(),
        trajectories: [still[0], still[1]],
        schedule: schedule.clone(),
        c6: config.c6_rad_s_m6,
        decay: Decay::none(),
        noise: no_noise,
    };
    let out = propagate_pure(&plus_pair(), |t| pair.hamiltonian(t), 0.0, &times, config.max_slice_s)?;
    let psi = out.last().expect("schedule has boundaries");
    let amp = |a, b| psi[pair_index(a, b)];
    let base = amp(Level::Zero, Level::Zero);
    let p01 = (amp(Level::Zero, Level::One) / base).arg();
    let p10 = (amp(Level::One, Level::Zero) / base).arg();
    let mut ideal = DVector::zeros(PAIR_DIM);
    ideal[pair_index(Level::Zero, Level::Zero)] = Complex64::from(0.5);
    ideal[pair_index(Level::Zero, Level::One)] = Complex64::from_polar(0.5, p01);
    ideal[pair_index(Level::One, Level::Zero)] = Complex64::from_polar(0.5, p10);
    ideal[pair_index(Level::One, Level::One)] = -Complex64::from_polar(0.5, p01 + p10);
    let spectators = still[2..]
        .iter()
        .map(|traj| {
            let out = single_atom_pure(cal, traj, schedule, &plus_atom(), &times, config.max_slice_s)?;
            let psi = out.last().expect("schedule has boundaries");
            let phase = (psi[Level::One.index()] / psi[Level::Zero.index()]).arg();
            let mut v = DVector::zeros(ATOM_DIM);
            v[Level::Zero.index()] = Complex64::from(std::f64::consts::FRAC_1_SQRT_2);
            v[Level::One.index()] = Complex64::from_polar(std::f64::consts::FRAC_1_SQRT_2, phase);
            Ok(v)
        })
        .collect::<Result<_>>()?;
    Ok(Reference { pair: ideal, spectators })
}

/// Per-run fidelities `(pair, product over spectators)`.
fn run_fidelities(
    config: &GateConfig,
    protocol: &Protocol,
    decay_on: bool,
    thermal: bool,
    n_traj: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let cal = config.calibrate()?;
    let schedule = protocol.schedule(config.two_photon_rabi_rad_s);
    let reference = reference(config, &cal, &schedule)?;
    let motion = draw_motion(config, thermal, n_traj, seed)?;
    let decay = if decay_on { config.decay() } else { Decay::none() };
    let times = schedule.boundaries();
    let slice = config.max_slice_s;
    let pair_jumps = jump_operators(&decay)?;
    motion
        .par_iter()
        .map(|atoms| {
            let pair = PairProvider {
                cal: cal.clone(),
                trajectories: [atoms[0], atoms[1]],
                schedule: schedule.clone(),
                c6: config.c6_rad_s_m6,
                decay,
                noise: no_noise,
            };
            let h = |t: f64| pair.hamiltonian(t);
            let f_pair = if decay.is_none() {
                let out = propagate_pure(&plus_pair(), h, 0.0, &times, slice)?;
                reference.pair.dotc(out.last().expect("boundaries")).norm_sqr()
            } else {
                let psi = plus_pair();
                let rho0 = &psi * psi.adjoint();
                let out = propagate_master(&rho0, h, &pair_jumps, 0.0, &times, slice)?;
                expectation(out.last().expect("boundaries"), &reference.pair)
            };
            let mut f_spec = 1.0;
            for (traj, ideal) in atoms[2..].iter().zip(&reference.spectators) {
                f_spec *= if decay.is_none() {
                    let out = single_atom_pure(&cal, traj, &schedule, &plus_atom(), &times, slice)?;
                    ideal.dotc(out.last().expect("boundaries")).norm_sqr()
                } else {
                    let psi = plus_atom();
                    let rho0 = &psi * psi.adjoint();
                    let out = single_atom_run(&cal, traj, &schedule, &decay, &rho0, &times, slice)?;
                    expectation(out.last().expect("boundaries"), ideal)
                };
            }
            Ok((f_pair, f_spec))
        })
        .collect()
}

fn mean_infidelity(runs: &[(f64, f64)], crosstalk: bool) -> f64 {
    let total: f64 = runs.iter().map(|(p, s)| if crosstalk { p * s } else { *p }).sum();
    1.0 - total / runs.len() as f64
}

/// Thermal-averaged CZ infidelity with the selected channels.
///
/// The pair starts in `|++⟩`; its fidelity is the overlap with the ideal
/// CZ output after the single-qubit phases of a still, lossless reference
/// run. Spectators start in `|+⟩` and should be left unchanged; the gate
/// fidelity is the product of pair and spectator fidelities.
pub fn cz_infidelity(config: &GateConfig, protocol: &Protocol, channels: Channels, n_traj: usize, seed: u64) -> Result<f64> {
    let runs = run_fidelities(config, protocol, channels.decay, channels.thermal, n_traj, seed)?;
    Ok(mean_infidelity(&runs, channels.crosstalk))
}

/// Infidelity contributions of the error channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    /// All channels on.
    pub total: f64,
    /// All channels off: finite blockade and intermediate-state admixture.
    pub residual: f64,
    /// `total` minus the infidelity with the channel switched off.
    pub decay: f64,
    pub thermal: f64,
    pub crosstalk: f64,
    /// Infidelity with only the channel on, minus `residual`.
    pub only_decay: f64,
    pub only_thermal: f64,
    pub only_crosstalk: f64,
}

impl ErrorBudget {
    /// Channel with the largest switch-off contribution.
    pub fn dominant(&self) -> &'static str {
        let items = [("decay", self.decay), ("thermal", self.thermal), ("crosstalk", self.crosstalk)];
        items.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|x| x.0).unwrap_or("decay")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CzReport {
    pub protocol: Protocol,
    pub pulse_s: f64,
    pub gate_s: f64,
    pub budget: ErrorBudget,
    pub runs: usize,
}

/// CZ gate with its error budget.
pub fn cz_gate(config: &GateConfig, protocol: &Protocol, n_traj: usize, seed: u64) -> Result<CzReport> {
    let mut table = [[0.0; 2]; 4];
    let mut runs = 1;
    for (idx, (decay, thermal)) in [(false, false), (true, false), (false, true), (true, true)].into_iter().enumerate() {
        let r = run_fidelities(config, protocol, decay, thermal, n_traj, seed)?;
        runs = runs.max(r.len());
        table[idx] = [mean_infidelity(&r, false), mean_infidelity(&r, true)];
    }
    let infid = |c: Channels| table[usize::from(c.decay) + 2 * usize::from(c.thermal)][usize::from(c.crosstalk)];
    let total = infid(Channels::ALL);
    let residual = infid(Channels::NONE);
    let off = |f: fn(&mut Channels)| {
        let mut c = Channels::ALL;
        f(&mut c);
        infid(c)
    };
    let only = |f: fn(&mut Channels)| {
        let mut c = Channels::NONE;
        f(&mut c);
        infid(c) - residual
    };
    let budget = ErrorBudget {
        total,
        residual,
        decay: total - off(|c| c.decay = false),
        thermal: total - off(|c| c.thermal = false),
        crosstalk: total - off(|c| c.crosstalk = false),
        only_decay: only(|c| c.decay = true),
        only_thermal: only(|c| c.thermal = true),
        only_crosstalk: only(|c| c.crosstalk = true),
    };
    let pulse_s = protocol.pulse_s(config.two_photon_rabi_rad_s);
    Ok(CzReport {
        protocol: *protocol,
        pulse_s,
        gate_s: 2.0 * pulse_s,
        budget,
        runs,
    })
}

/// Blockade-limit version of `config`: no motion, no decay, no spectators
/// and `V = 10³ Ω̄` between the targets.
pub fn ideal_limit(config: &GateConfig) -> GateConfig {
    let mut c = config.clone();
    c.gamma_p_per_s = 0.0;
    c.gamma_r_per_s = 0.0;
    c.trap.temperature_k = 0.0;
    c.spectators_m.clear();
    let d2: f64 = (0..3).map(|k| (c.targets_m[0][k] - c.targets_m[1][k]).powi(2)).sum();
    c.c6_rad_s_m6 = 1e3 * c.two_photon_rabi_rad_s * d2.powi(3);
    c
}

/// Re-optimize pulse area and phase jump for `config` in the blockade
/// limit, keeping the detuning ratio and ramps.
pub fn rederive_protocol(config: &GateConfig) -> Result<Protocol> {
    let ideal = ideal_limit(config);
    let start = config.protocol;
    let mut failure = None;
    let objective = |x: &[f64]| {
        let p = Protocol {
            pulse_area_rad: x[0],
            phase_jump_rad: x[1],
            ..start
        };
        match cz_infidelity(&ideal, &p, Channels::NONE, 1, 0) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let best = nelder_mead(
        objective,
        &[start.pulse_area_rad, start.phase_jump_rad],
        &[0.05, 0.05],
        1e-12,
        600,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Protocol {
        pulse_area_rad: best.x[0],
        phase_jump_rad: best.x[1],
        ..start
    })
}
