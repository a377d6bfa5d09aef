use approx::assert_relative_eq;

use lmg_core::analysis::{
    bifurcation_entry, chaotic_window_signal, classify_tail, closed_orbit, closed_orbit_reference, dissipative_signal,
    distance_to_curve, esqpt_feedback_sweep, feedback_sweep_point, on_shell_state, rotation_period,
    slice_energy_band, stationary_average, windowed_average, ChaoticOptions, ScanOptions, SweepOptions, TailRegime,
    EXTREMA_TOLERANCE,
};
use lmg_core::dynamics::{integrate_dde, integrate_dde_recorded, reference_step_check, RecordOptions};
use lmg_core::model::classical_energy;
use lmg_core::stability::{broken_fixed_point, perturbed_fixed_point};
use lmg_core::{Error, ModelParams, SpinState};

fn closed() -> ModelParams {
    ModelParams::default().closed().with_tau(0.0)
}

#[test]
fn closed_orbit_conserves_energy() {
    let p = closed();
    let start = on_shell_state(&p, -0.52).unwrap();
    let traj = integrate_dde(&p, start, 200.0, 0.005).unwrap();
    let e0 = classical_energy(&start, &p);
    let worst = (0..traj.len()).map(|i| (traj.energy(i) - e0).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn free_dissipative_run_settles_on_the_broken_state() {
    let p = ModelParams::default().with_lambda(0.0);
    let traj = integrate_dde(&p, SpinState::from_angles(2.0, 0.7), 2000.0, 0.005).unwrap();
    let fp = broken_fixed_point(&p).unwrap().state;
    let end = traj.last_state().unwrap();
    let d = end.distance(&fp).min(end.distance(&fp.flipped()));
    assert!(d < 1e-3, "{d}");
}

#[test]
fn feedback_run_self_convergence() {
    let p = ModelParams::default().with_tau(0.3);
    let dev = reference_step_check(&p, perturbed_fixed_point(&p).unwrap(), 200.0, 0.005).unwrap();
    assert!(dev < 1e-6, "{dev}");
}

#[test]
fn oversized_step_is_rejected() {
    let p = ModelParams::default().with_tau(0.05);
    let err = integrate_dde(&p, perturbed_fixed_point(&p).unwrap(), 1.0, 0.005).unwrap_err();
    assert!(matches!(err, Error::StepTooLarge { .. }), "{err}");
}

#[test]
fn rotating_orbit_period_matches_return_time() {
    let p = closed();
    for e in [-0.45, -0.2, 0.1] {
        let orbit = closed_orbit(&p, e, 0.001, 1000.0).unwrap();
        let traj = integrate_dde(&p, orbit.start, 5.0 * orbit.period, 0.001).unwrap();
        let periods = rotation_period(&traj).unwrap();
        assert!(periods.len() >= 4);
        for t in &periods[..4] {
            assert!((t - orbit.period).abs() < 1e-4, "E={e}: {t} vs {}", orbit.period);
        }
    }
}

#[test]
fn librating_orbit_never_winds() {
    let p = closed();
    let orbit = closed_orbit(&p, -0.52, 0.001, 1000.0).unwrap();
    let traj = integrate_dde(&p, orbit.start, 3.0 * orbit.period, 0.001).unwrap();
    assert!(rotation_period(&traj).unwrap().is_empty());
}

#[test]
fn reference_curve_limits_and_monotonicity() {
    let p = closed();
    let (e_min, _) = slice_energy_band(&p);
    let energies: Vec<f64> = (1..=40).map(|i| e_min + (-0.5 - e_min) * i as f64 / 41.0).collect();
    let curve = closed_orbit_reference(&p, &energies, 0.001, 2000.0).unwrap();
    for w in curve.points.windows(2) {
        assert!(w[1].jz_bar > w[0].jz_bar);
        assert!(w[1].period.unwrap() > w[0].period.unwrap());
    }

    let fp = broken_fixed_point(&ModelParams::default().with_kappa(0.0)).unwrap().state;
    let bottom = closed_orbit(&p, e_min + 1e-7, 0.001, 100.0).unwrap();
    assert!((bottom.jz_bar - fp.jz).abs() < 1e-3);
    assert!((bottom.jx2_bar - fp.jx * fp.jx).abs() < 1e-3);

    let top = closed_orbit(&p, -0.5 - 1e-9, 0.001, 1000.0).unwrap();
    assert!(top.jz_bar > 0.44 && top.jx2_bar < 0.04, "{top:?}");
}

#[test]
fn period_diverges_at_the_separatrix() {
    let p = closed();
    let periods: Vec<f64> = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
        .iter()
        .map(|d| closed_orbit(&p, -0.5 - d, 0.001, 1000.0).unwrap().period)
        .collect();
    // logarithmic: roughly equal increments per decade
    let steps: Vec<f64> = periods.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(steps.iter().all(|&s| s > 1.0), "{periods:?}");
    assert!(steps.windows(2).all(|w| (w[1] - w[0]).abs() < 0.2 * w[0]), "{steps:?}");
}

#[test]
fn out_of_band_energy_is_rejected() {
    let err = closed_orbit(&closed(), -0.55, 0.001, 100.0).unwrap_err();
    assert!(matches!(err, Error::EnergyOutsideBand { .. }));
}

fn settled_cycle() -> lmg_core::dynamics::Trajectory {
    let p = ModelParams::default().with_tau(0.3);
    let rec = RecordOptions { stride: 1, record_from: 2000.0 };
    integrate_dde_recorded(&p, perturbed_fixed_point(&p).unwrap(), 2400.0, 0.005, rec).unwrap()
}

#[test]
fn limit_cycle_average_is_phase_independent() {
    let traj = settled_cycle();
    let TailRegime::Periodic { period, .. } = classify_tail(&traj) else {
        panic!("expected a cycle");
    };
    let base = stationary_average(&traj, 2000.0, 2000.0 + 10.0 * period).unwrap();
    for (shift, k) in [(0.37, 10.0), (1.9, 10.0), (0.0, 20.0), (2.6, 30.0)] {
        let a = stationary_average(&traj, 2000.0 + shift, 2000.0 + shift + k * period).unwrap();
        assert!((a.jz_bar - base.jz_bar).abs() < 1e-8, "shift {shift}, k {k}");
        assert!((a.jx2_bar - base.jx2_bar).abs() < 1e-8, "shift {shift}, k {k}");
    }
}

#[test]
fn limit_cycle_at_tau_03_lies_on_the_closed_curve() {
    let p = ModelParams::default();
    let point = feedback_sweep_point(&p, 0.3, &SweepOptions::default()).unwrap();
    assert!(matches!(point.regime, TailRegime::Periodic { .. }), "{:?}", point.regime);
    let energies: Vec<f64> = (1..=60).map(|i| -0.5417 + 0.0417 * i as f64 / 61.0).collect();
    let curve = closed_orbit_reference(&p.closed(), &energies, 0.001, 2000.0).unwrap();
    let d = distance_to_curve(point.average.jz_bar, point.average.jx2_bar, &curve);
    assert!(d < 0.02, "{d}");
}

#[test]
fn stable_delays_average_to_the_fixed_point() {
    let p = ModelParams::default();
    let fp = broken_fixed_point(&p).unwrap().state;
    let curve = esqpt_feedback_sweep(&p, &[0.1, 0.15], &SweepOptions::default()).unwrap();
    for q in &curve.points {
        assert_eq!(q.regime, Some(TailRegime::FixedPoint));
        assert!((q.jz_bar - fp.jz).abs() < 1e-6);
        assert!((q.jx2_bar - fp.jx * fp.jx).abs() < 1e-6);
    }
}

#[test]
fn sweep_without_feedback_is_flat() {
    let p = ModelParams::default().with_lambda(0.0);
    let curve = esqpt_feedback_sweep(&p, &[0.1, 0.3, 0.55], &SweepOptions::default()).unwrap();
    let first = &curve.points[0];
    for q in &curve.points[1..] {
        assert_eq!(q.jz_bar, first.jz_bar);
        assert_eq!(q.jx2_bar, first.jx2_bar);
    }
}

#[test]
fn bifurcation_entries_below_and_above_onset() {
    let p = ModelParams::default();
    let opts = ScanOptions::default();
    let below = bifurcation_entry(&p, 0.1, &opts).unwrap();
    assert_eq!(below.distinct_count(EXTREMA_TOLERANCE), 1);
    let fp = broken_fixed_point(&p).unwrap().state;
    assert!((below.fixed_value.unwrap() - fp.jx).abs() < 1e-5);

    let above = bifurcation_entry(&p, 0.5, &opts).unwrap();
    assert_eq!(above.distinct_count(EXTREMA_TOLERANCE), 2);
    assert!(above.maxima[0] > above.minima[0]);
}

#[test]
fn chaotic_window_signal_at_long_delay() {
    let p = ModelParams::default().with_tau(7.8);
    let sig = chaotic_window_signal(&p, 20.0, &ChaoticOptions::default()).unwrap();
    assert!(sig.chaotic, "{:?}", sig.regime);
    assert!(!sig.curve.points.is_empty());

    let rec = RecordOptions { stride: 1, record_from: 1000.0 };
    let traj = integrate_dde_recorded(&p, perturbed_fixed_point(&p).unwrap(), 1500.0, 0.005, rec).unwrap();
    let whole = windowed_average(&traj, traj.span(), 1).unwrap();
    assert_eq!(whole.len(), 1);
    let direct = stationary_average(&traj, traj.t_start(), traj.t_end()).unwrap();
    assert_relative_eq!(whole[0].jz_bar, direct.jz_bar, epsilon = 1e-12);
    assert_relative_eq!(whole[0].jx2_bar, direct.jx2_bar, epsilon = 1e-12);

    let (lo, hi) = traj.states.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.jz), b.max(s.jz)));
    for w in windowed_average(&traj, 20.0, 50).unwrap() {
        assert!(w.jz_bar >= lo && w.jz_bar <= hi);
    }
}

#[test]
fn dissipative_relaxation_shows_the_peak() {
    // from near the south pole down to the ground state
    let p = ModelParams::default();
    let curve = dissipative_signal(&p, SpinState::from_angles(3.0, 0.2), 1500.0, 20.0, 100).unwrap();
    let peak = curve.peak().unwrap();
    let last = curve.points.last().unwrap();
    let fp = broken_fixed_point(&p).unwrap().state;
    assert!((last.jz_bar - fp.jz).abs() < 1e-3);
    assert!(peak.jz_bar > fp.jz + 0.05, "{peak:?}");
    assert!(peak.jx2_bar < fp.jx * fp.jx);
}

#[test]
fn slowly_decaying_spiral_is_transient() {
    // stable, but close to the first boundary
    let p = ModelParams::default().with_tau(0.15);
    let rec = RecordOptions { stride: 1, record_from: 100.0 };
    let traj = integrate_dde_recorded(&p, perturbed_fixed_point(&p).unwrap(), 300.0, 0.005, rec).unwrap();
    assert_eq!(classify_tail(&traj), TailRegime::Transient);
}
