//! Two-atom Rydberg dynamics under a Lindblad master equation.
//!
//! Each atom has the levels `|0⟩, |1⟩, |p⟩, |r⟩, |L⟩`; a pair lives in the
//! 25-dimensional product space with index `5·a + b`. All quantities are
//! SI: angular frequencies in rad/s, rates in 1/s, lengths in metres and
//! times in seconds.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod gate;
mod solver;
mod thermal;

pub use gate::{
    cz_gate, cz_infidelity, ideal_limit, params_from_trajectory, rabi_scan, rederive_protocol, AddressingBeam, Channels,
    CzReport, DetuningNoise, ErrorBudget, GateConfig, PairProvider, Protocol, Pulse, RabiCurves, Schedule,
};
pub use solver::{
    check_state, integrate_master, mcwf_evolve, propagate_master, propagate_pure, McwfOptions, McwfResult,
    StateDiagnostics, Tolerance,
};
pub use thermal::{sample_thermal, trap_frequencies, SamplingMode, Trajectory, TrapSpec};

pub type Operator = DMatrix<Complex64>;

pub const BOLTZMANN: f64 = 1.380649e-23;
pub const RB87_MASS_KG: f64 = 1.443_160_648e-25;
pub const ATOM_DIM: usize = 5;
pub const PAIR_DIM: usize = ATOM_DIM * ATOM_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Zero,
    One,
    P,
    R,
    Loss,
}

impl Level {
    pub const ALL: [Level; ATOM_DIM] = [Level::Zero, Level::One, Level::P, Level::R, Level::Loss];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Index of `|a b⟩` in the pair space.
pub fn pair_index(a: Level, b: Level) -> usize {
    ATOM_DIM * a.index() + b.index()
}

/// Drive seen by one atom.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AtomDrive {
    /// First-stage Rabi frequency on `|1⟩ ↔ |p⟩`.
    pub omega_r: Complex64,
    /// Second-stage Rabi frequency on `|p⟩ ↔ |r⟩`.
    pub omega_b: Complex64,
    /// Intermediate-state detuning `Δ`.
    pub delta_p: f64,
    /// Two-photon detuning `δ`.
    pub delta_r: f64,
}

/// Where intermediate-state decay goes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branching {
    pub to_zero: f64,
    pub to_one: f64,
    pub to_loss: f64,
}

impl Default for Branching {
    fn default() -> Self {
        Branching {
            to_zero: 0.25,
            to_one: 0.25,
            to_loss: 0.5,
        }
    }
}

impl Branching {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.to_zero, self.to_one, self.to_loss];
        if parts.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return Err(Error::Parameter("branching fractions must be nonnegative".into()));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("branching fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Spontaneous-emission parameters shared by both atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decay {
    /// Intermediate-state decay rate `Γ`.
    pub gamma_p: f64,
    /// Rydberg decay rate `Γ_r`.
    pub gamma_r: f64,
    pub branching: Branching,
    /// Send the `Γ b₀` channel to `|1⟩` instead of `|0⟩`, so that both
    /// `|p⟩ → |1⟩` channels coincide.
    #[serde(default)]
    pub zero_channel_to_one: bool,
}

impl Decay {
    pub fn none() -> Self {
        Decay {
            gamma_p: 0.0,
            gamma_r: 0.0,
            branching: Branching::default(),
            zero_channel_to_one: false,
        }
    }

    pub fn is_none(&self) -> bool {
        self.gamma_p == 0.0 && self.gamma_r == 0.0
    }
}

/// Instantaneous parameters of the two-atom Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub atoms: [AtomDrive; 2],
    /// Rydberg–Rydberg interaction `V`.
    pub v: f64,
    pub decay: Decay,
}

fn unit(dim: usize, row: usize, col: usize, value: Complex64) -> Operator {
    let mut m = Operator::zeros(dim, dim);
    m[(row, col)] = value;
    m
}

/// Single-atom Hamiltonian on the five levels.
pub fn atom_hamiltonian(d: &AtomDrive) -> Operator {
    let (one, p, r) = (Level::One.index(), Level::P.index(), Level::R.index());
    let mut h = Operator::zeros(ATOM_DIM, ATOM_DIM);
    h[(one, p)] = d.omega_r / 2.0;
    h[(p, one)] = d.omega_r.conj() / 2.0;
    h[(p, r)] = d.omega_b / 2.0;
    h[(r, p)] = d.omega_b.conj() / 2.0;
    h[(p, p)] = Complex64::from(-d.delta_p);
    h[(r, r)] = Complex64::from(-d.delta_r);
    h
}

/// `A ⊗ I` and `I ⊗ A` for a single-atom operator.
pub fn lift(op: &Operator) -> (Operator, Operator) {
    let id = Operator::identity(ATOM_DIM, ATOM_DIM);
    (op.kronecker(&id), id.kronecker(op))
}

/// Pair Hamiltonian `H₁ ⊗ I + I ⊗ H₂ + V |rr⟩⟨rr|`.
pub fn build_hamiltonian(a1: &AtomDrive, a2: &AtomDrive, v: f64) -> Operator {
    let (h1, _) = lift(&atom_hamiltonian(a1));
    let (_, h2) = lift(&atom_hamiltonian(a2));
    let rr = pair_index(Level::R, Level::R);
    let mut h = h1 + h2;
    h[(rr, rr)] += Complex64::from(v);
    h
}

/// Single-atom jump operators with nonzero rate.
pub fn atom_jump_operators(decay: &Decay) -> Result<Vec<Operator>> {
    decay.branching.validate()?;
    if !(decay.gamma_p >= 0.0 && decay.gamma_r >= 0.0 && decay.gamma_p.is_finite() && decay.gamma_r.is_finite()) {
        return Err(Error::Parameter("decay rates must be nonnegative".into()));
    }
    let b = decay.branching;
    let zero_target = if decay.zero_channel_to_one {
        Level::One
    } else {
        Level::Zero
    };
    let channels = [
        (decay.gamma_p * b.to_zero, zero_target, Level::P),
        (decay.gamma_p * b.to_one, Level::One, Level::P),
        (decay.gamma_p * b.to_loss, Level::Loss, Level::P),
        (decay.gamma_r, Level::Loss, Level::R),
    ];
    Ok(channels
        .iter()
        .filter(|(rate, _, _)| *rate > 0.0)
        .map(|(rate, to, from)| unit(ATOM_DIM, to.index(), from.index(), Complex64::from(rate.sqrt())))
        .collect())
}

/// Jump operators of both atoms lifted to the pair space.
pub fn jump_operators(decay: &Decay) -> Result<Vec<Operator>> {
    let single = atom_jump_operators(decay)?;
    let mut out = Vec::with_capacity(2 * single.len());
    for j in &single {
        let (a, b) = lift(j);
        out.push(a);
        out.push(b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn drive() -> AtomDrive {
        AtomDrive {
            omega_r: Complex64::new(3.0, 1.0),
            omega_b: Complex64::new(-2.0, 0.5),
            delta_p: 7.0,
            delta_r: 0.3,
        }
    }

    #[test]
    fn zero_couplings_give_zero_hamiltonian() {
        let h = build_hamiltonian(&AtomDrive::default(), &AtomDrive::default(), 0.0);
        assert_eq!(h.shape(), (25, 25));
        assert!(h.iter().all(|z| *z == Complex64::from(0.0)));
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let h = build_hamiltonian(&drive(), &AtomDrive::default(), 11.0);
        assert_eq!(h, h.adjoint());
        let real = AtomDrive {
            omega_r: Complex64::from(1.0),
            ..AtomDrive::default()
        };
        let h = build_hamiltonian(&real, &real, 0.0);
        assert_eq!(h, h.adjoint());
    }

    #[test]
    fn hamiltonian_entries() {
        let delta = 2.0 * PI * 870e6;
        let d = AtomDrive {
            delta_p: delta,
            ..drive()
        };
        let h = build_hamiltonian(&d, &AtomDrive::default(), 5.0);
        let pz = pair_index(Level::P, Level::Zero);
        assert_eq!(h[(pz, pz)].re, -delta);
        let rr = pair_index(Level::R, Level::R);
        assert_eq!(h[(rr, rr)].re, 5.0 - 0.3);
        let (one0, p0) = (pair_index(Level::One, Level::Zero), pair_index(Level::P, Level::Zero));
        assert_eq!(h[(one0, p0)], d.omega_r / 2.0);
    }

    #[test]
    fn jump_operator_structure() {
        assert!(jump_operators(&Decay::none()).unwrap().is_empty());
        let gamma = 3.7;
        let decay = Decay {
            gamma_p: gamma,
            gamma_r: 0.2,
            ..Decay::none()
        };
        let single = atom_jump_operators(&decay).unwrap();
        assert_eq!(single.len(), 4);
        let total: Operator = single.iter().map(|j| j.adjoint() * j).sum();
        let p = Level::P.index();
        assert!((total[(p, p)].re - gamma).abs() < 1e-12);
        let rates: Vec<f64> = single.iter().map(|j| j.iter().map(|z| z.norm_sqr()).sum()).collect();
        assert!((rates[0] - gamma / 4.0).abs() < 1e-12);
        assert!((rates[1] - gamma / 4.0).abs() < 1e-12);
        assert!((rates[2] - gamma / 2.0).abs() < 1e-12);
        assert!(single[0][(Level::Zero.index(), p)].norm() > 0.0);
        let printed = atom_jump_operators(&Decay {
            zero_channel_to_one: true,
            ..decay
        })
        .unwrap();
        assert!(printed[0][(Level::One.index(), p)].norm() > 0.0);
        assert_eq!(jump_operators(&decay).unwrap().len(), 8);
        let bad = Decay {
            branching: Branching {
                to_zero: 0.5,
                to_one: 0.5,
                to_loss: 0.5,
            },
            ..decay
        };
        assert!(matches!(jump_operators(&bad), Err(Error::Parameter(_))));
    }
}
