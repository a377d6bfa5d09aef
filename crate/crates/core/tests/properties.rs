use proptest::prelude::*;

use lmg_core::analysis::{stationary_average, windowed_average};
use lmg_core::dynamics::{integrate_dde, mean_field_rhs};
use lmg_core::model::{classical_energy, feedback_coupling};
use lmg_core::spectrum::{build_h_eff, build_spin_matrices, dos_counting, dos_resolvent, ComplexSpectrum};
use lmg_core::stability::{boundary_points, char_residual, linearize_broken};
use lmg_core::{Complex64, ModelParams, SpinState};

fn state() -> impl Strategy<Value = SpinState> {
    (0.0..std::f64::consts::PI, 0.0..std::f64::consts::TAU).prop_map(|(t, p)| SpinState::from_angles(t, p))
}

proptest! {
    #[test]
    fn energy_is_z2_symmetric(s in state(), gamma in 0.0..4.0f64, gamma_y in 0.0..4.0f64) {
        let p = ModelParams { gamma, gamma_y, ..ModelParams::default() };
        prop_assert_eq!(classical_energy(&s, &p), classical_energy(&s.flipped(), &p));
        prop_assert_eq!(classical_energy(&SpinState::NORTH_POLE, &p), -0.5);
    }

    #[test]
    fn feedback_vanishes_on_equal_arguments(a in -0.5..0.5f64, gamma in 0.0..4.0f64, lambda in 0.0..3.0f64) {
        let p = ModelParams { gamma, lambda, ..ModelParams::default() };
        prop_assert_eq!(feedback_coupling(&p, a, a), gamma);
    }

    #[test]
    fn flow_is_tangent_and_fixes_the_poles(
        s in state(), gx in -3.0..3.0f64, kappa in 0.0..1.0f64,
    ) {
        let p = ModelParams { kappa, ..ModelParams::default() };
        let d = mean_field_rhs(&s, gx, &p);
        let radial = s.jx * d[0] + s.jy * d[1] + s.jz * d[2];
        prop_assert!(radial.abs() < 1e-15);
        for pole in [SpinState::NORTH_POLE, SpinState::SOUTH_POLE] {
            prop_assert_eq!(mean_field_rhs(&pole, gx, &p), [0.0; 3]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spin_algebra(n in 1usize..16) {
        let m = build_spin_matrices(n).unwrap();
        let comm = m.jx().matmul(&m.jy()).sub(&m.jy().matmul(&m.jx()));
        let want = m.jz().scale(Complex64::i());
        prop_assert!(comm.sub(&want).max_abs() < 1e-12);
        let jp = m.jx().add(&m.jy().scale(Complex64::i()));
        prop_assert!(jp.sub(&m.jplus()).max_abs() < 1e-15);
    }

    #[test]
    fn closed_spectrum_is_real(n in 2usize..80, gamma in 0.0..3.0f64, gamma_y in 0.0..3.0f64) {
        let p = ModelParams { n_spins: n, gamma, gamma_y, kappa: 0.0, ..ModelParams::default() };
        prop_assert!(build_h_eff(&p).unwrap().max_anti_hermitian() < 1e-12);
        let s = ComplexSpectrum::compute(&p).unwrap();
        prop_assert_eq!(s.len(), n + 1);
        prop_assert!(s.max_abs_im() < 1e-10);
    }

    #[test]
    fn eigenvalues_sum_to_the_trace(
        n in 2usize..120, gamma in 0.0..3.0f64, gamma_y in 0.0..3.0f64, kappa in 0.0..1.0f64,
    ) {
        let p = ModelParams { n_spins: n, gamma, gamma_y, kappa, ..ModelParams::default() };
        let tr = build_h_eff(&p).unwrap().trace() / n as f64;
        let s = ComplexSpectrum::compute(&p).unwrap();
        prop_assert!((s.sum() - tr).norm() < 1e-9);
        // decay only
        prop_assert!(s.eigenvalues.iter().all(|z| z.im <= 1e-12));
    }

    #[test]
    fn counting_conserves_states(n in 2usize..200, width in 0.001..0.3f64, kappa in 0.0..0.5f64) {
        let s = ComplexSpectrum::compute(&ModelParams { n_spins: n, kappa, ..ModelParams::default() }).unwrap();
        let dos = dos_counting(&s, width).unwrap();
        prop_assert!((dos.total().unwrap() - (n + 1) as f64).abs() < 1e-9 * n as f64);
        prop_assert!(dos.density.iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn resolvent_density_is_non_negative(eta in 1e-4..0.1f64, kappa in 0.0..0.5f64) {
        let s = ComplexSpectrum::compute(&ModelParams { n_spins: 40, kappa, ..ModelParams::default() }).unwrap();
        let grid: Vec<f64> = (0..50).map(|i| -0.6 + 0.024 * i as f64).collect();
        let dos = dos_resolvent(&s, &grid, eta).unwrap();
        prop_assert!(dos.density.iter().all(|&d| d >= 0.0));
    }
}

#[test]
fn decay_rates_scale_linearly_in_kappa() {
    let at = |kappa: f64| ComplexSpectrum::compute(&ModelParams { n_spins: 200, kappa, ..ModelParams::default() }).unwrap();
    let (a, b) = (at(0.01), at(0.02));
    let mut checked = 0;
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
        if x.im.abs() < 1e-9 {
            continue;
        }
        let ratio = y.im / x.im;
        assert!((ratio - 2.0).abs() < 0.1, "{x} -> {y}");
        checked += 1;
    }
    assert!(checked > 150);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn spin_length_is_conserved(
        s in state(), kappa in 0.0..0.5f64, lambda in 0.0..2.0f64, tau in 0.1..1.0f64,
    ) {
        let p = ModelParams { kappa, lambda, tau, ..ModelParams::default() };
        let traj = integrate_dde(&p, s, 200.0, 0.005).unwrap();
        prop_assert!(traj.max_sphere_deviation < 1e-7);
    }

    #[test]
    fn delay_is_irrelevant_without_feedback(s in state(), tau_a in 0.1..2.0f64, tau_b in 0.1..2.0f64) {
        let p = ModelParams { lambda: 0.0, ..ModelParams::default() };
        let a = integrate_dde(&p.with_tau(tau_a), s, 50.0, 0.005).unwrap();
        let b = integrate_dde(&p.with_tau(tau_b), s, 50.0, 0.005).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            prop_assert!(x.distance(y) < 1e-12);
        }
    }

    #[test]
    fn flow_commutes_with_the_z2_flip(s in state(), tau in 0.1..1.0f64, lambda in 0.0..2.0f64) {
        let p = ModelParams { lambda, tau, ..ModelParams::default() };
        let a = integrate_dde(&p, s, 50.0, 0.005).unwrap();
        let b = integrate_dde(&p, s.flipped(), 50.0, 0.005).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            prop_assert!(x.flipped().distance(y) < 1e-15);
        }
    }

    #[test]
    fn poles_stay_put(kappa in 0.0..1.0f64, lambda in 0.0..2.0f64, tau in 0.1..1.0f64) {
        let p = ModelParams { kappa, lambda, tau, ..ModelParams::default() };
        for pole in [SpinState::NORTH_POLE, SpinState::SOUTH_POLE] {
            let traj = integrate_dde(&p, pole, 20.0, 0.005).unwrap();
            prop_assert!(traj.states.iter().all(|x| *x == pole));
        }
    }

    #[test]
    fn coupling_record_uses_the_delayed_sample(lag in 20usize..200, lambda in 0.1..2.0f64) {
        let dt = 0.005;
        let p = ModelParams { lambda, tau: lag as f64 * dt, ..ModelParams::default() };
        let traj = integrate_dde(&p, SpinState::from_angles(0.9, 0.3), 5.0, dt).unwrap();
        for i in lag..traj.len() {
            let want = feedback_coupling(&p, traj.states[i - lag].jz, traj.states[i].jz);
            prop_assert!((traj.gamma_x_record[i] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn averages_stay_inside_the_envelope(
        s in state(), a in 0.0..30.0f64, len in 0.5..20.0f64, tau in 0.1..1.0f64,
    ) {
        let p = ModelParams::default().with_tau(tau);
        let traj = integrate_dde(&p, s, 60.0, 0.005).unwrap();
        let avg = stationary_average(&traj, a, a + len).unwrap();
        let i0 = (a / 0.005) as usize;
        let i1 = ((a + len) / 0.005).ceil() as usize;
        let seg = &traj.states[i0..=i1.min(traj.len() - 1)];
        let (zlo, zhi) = seg.iter().fold((1.0f64, -1.0f64), |(l, h), x| (l.min(x.jz), h.max(x.jz)));
        let x2hi = seg.iter().fold(0.0f64, |h, x| h.max(x.jx * x.jx));
        // Hermite overshoot between samples is O(dt^4)
        prop_assert!(avg.jz_bar >= zlo - 1e-9 && avg.jz_bar <= zhi + 1e-9);
        prop_assert!(avg.jx2_bar >= -1e-12 && avg.jx2_bar <= x2hi + 1e-9);
        prop_assert!(avg.jz_bar.abs() <= 0.5 && avg.jx2_bar <= 0.25);
        for w in windowed_average(&traj, len, 97).unwrap() {
            prop_assert!(w.jz_bar.abs() <= 0.5 && (0.0..=0.25).contains(&w.jx2_bar));
        }
    }

    #[test]
    fn boundary_points_are_roots(lambda in 0.5..2.0f64, kappa in 0.0..0.3f64) {
        let p = ModelParams { lambda, kappa, ..ModelParams::default() };
        for b in boundary_points(&p, 6).unwrap() {
            let sys = linearize_broken(&p.with_tau(b.tau)).unwrap();
            prop_assert!(char_residual(Complex64::new(0.0, b.s), &sys).norm() < 1e-8);
        }
    }
}
