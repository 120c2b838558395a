use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use flattop_core::calib::fit_damped_rabi;
use flattop_core::flattop::{flattop_profile, hg_coefficients, lg_coefficients, lg_flattop};
use flattop_core::hologram::encode_pixel;
use flattop_core::propagation::{angular_spectrum_propagate, FlatTopBeam1d, Grid, SampledField};
use flattop_core::qsim::{
    atom_hamiltonian, atom_jump_operators, check_state, propagate_master, AtomDrive, GateConfig, Operator, ATOM_DIM,
};

fn even_order() -> impl Strategy<Value = usize> {
    (0usize..=12).prop_map(|k| 2 * k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profile_is_bounded_even_and_decreasing(n in even_order(), x in 0.0f64..8.0, dx in 1e-3f64..1.0) {
        let f = flattop_profile(n as f64, x);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(f, flattop_profile(n as f64, -x));
        prop_assert!(flattop_profile(n as f64, x + dx) <= f);
    }

    #[test]
    fn mode_sums_match_closed_forms(n in even_order(), x in -6.0f64..6.0) {
        let hg = hg_coefficients(n).unwrap();
        prop_assert!((hg.eval(x) - flattop_profile(n as f64, x)).abs() <= 1e-10);
        let lg = lg_coefficients(n).unwrap();
        prop_assert!((lg.eval(x.abs()) - lg_flattop(n, x.abs())).abs() <= 1e-9);
    }

    #[test]
    fn encoded_pixels_stay_in_range(a in 0.0f64..=1.0, phase in -10.0f64..10.0, column in 0usize..2000) {
        let (m, psi) = encode_pixel(a, phase, column, 8.0).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&m));
        prop_assert!((0.0..2.0 * PI + 1e-12).contains(&psi));
    }

    #[test]
    fn damped_rabi_fit_is_scale_consistent(
        omega0 in 1.0f64..3.0,
        delta in 0.0f64..2.0,
        gamma in 0.0f64..0.2,
        kappa in 1e-7f64..1e3,
    ) {
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
        let w2 = omega0 * omega0 + delta * delta;
        let p: Vec<f64> = times
            .iter()
            .map(|t| 1.0 - 0.5 * omega0 * omega0 / w2 * (1.0 - (-gamma * t).exp() * (w2.sqrt() * t).cos()))
            .collect();
        let base = fit_damped_rabi(&times, &p).unwrap();
        let scaled_times: Vec<f64> = times.iter().map(|t| t / kappa).collect();
        let scaled = fit_damped_rabi(&scaled_times, &p).unwrap();
        prop_assert!((scaled.omega0_rad_s / (kappa * base.omega0_rad_s) - 1.0).abs() < 1e-6);
        prop_assert!((scaled.delta_rad_s.abs() - kappa * base.delta_rad_s.abs()).abs() < 1e-6 * kappa * w2.sqrt());
        prop_assert!((base.omega0_rad_s - omega0).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn free_propagation_conserves_power(n in (0usize..=4).prop_map(|k| 2 * k), dz in -1.0f64..1.0) {
        let beam = FlatTopBeam1d::new(n).unwrap();
        let start = SampledField::sample(Grid::centered_1d(1024, 12.0).unwrap(), |x, _| beam.field(x, 0.0));
        let out = angular_spectrum_propagate(&start, dz).unwrap();
        prop_assert!((out.field.power() / start.power() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn master_equation_keeps_a_density_matrix(
        omega_r in 0.0f64..5e7,
        omega_b in 0.0f64..5e7,
        phase in 0.0f64..(2.0 * PI),
        delta_p in -2e8f64..2e8,
        delta_r in -1e7f64..1e7,
    ) {
        let drive = AtomDrive {
            omega_r: Complex64::from(omega_r),
            omega_b: Complex64::from_polar(omega_b, phase),
            delta_p,
            delta_r,
        };
        let h = atom_hamiltonian(&drive);
        let jumps = atom_jump_operators(&GateConfig::default().decay()).unwrap();
        let mut rho0 = Operator::zeros(ATOM_DIM, ATOM_DIM);
        rho0[(1, 1)] = Complex64::from(0.5);
        rho0[(0, 0)] = Complex64::from(0.5);
        rho0[(0, 1)] = Complex64::from(0.5);
        rho0[(1, 0)] = Complex64::from(0.5);
        let times: Vec<f64> = (1..=4).map(|k| k as f64 * 50e-9).collect();
        for rho in propagate_master(&rho0, |_| h.clone(), &jumps, 0.0, &times, 1e-9).unwrap() {
            let d = check_state(&rho);
            prop_assert!((d.trace - 1.0).abs() < 1e-10);
            prop_assert!(d.hermiticity < 1e-12);
            prop_assert!(d.min_eigenvalue > -1e-10);
        }
    }
}
