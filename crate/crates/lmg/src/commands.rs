//! The subcommands. Each one turns a resolved config into a table and a
//! JSON summary; nothing here touches the file system.

use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use lmg_core::analysis::{
    bifurcation_entry, chaotic_window_signal, closed_orbit_reference, dissipative_signal, feedback_sweep_point,
    slice_energy_band, CurvePoint, EsqptCurve,
};
use lmg_core::dynamics::{integrate_dde_recorded, RecordOptions};
use lmg_core::spectrum::{
    build_spin_matrices_capped, complex_spectrum, default_bin_width, default_eta, dos_counting, dos_resolvent,
    dos_resolvent_binned, h_eff_from, ComplexSpectrum, DosHistogram,
};
use lmg_core::stability::{boundary_points, perturbed_fixed_point, stability_margin, SeedGrid};
use lmg_core::{Complex64, SpinState};

use crate::config::{linspace, DosChoice, EsqptSource, ResolventMode, RunConfig};
use crate::error::CliError;
use crate::output::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    /// Complex spectrum of the effective Hamiltonian.
    Spectrum,
    /// Density of states by counting and by the resolvent trace.
    Dos,
    /// One mean-field trajectory with delayed feedback.
    Evolve,
    /// Real part of the rightmost characteristic root over a (tau, lambda) grid.
    StabilityMap,
    /// Closed-form stability boundaries over a lambda grid.
    Boundaries,
    /// Averaged (jz, jx^2) signal curves.
    Esqpt,
    /// Extrema of jx over a delay scan.
    Bifurcation,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Spectrum => "spectrum",
            Self::Dos => "dos",
            Self::Evolve => "evolve",
            Self::StabilityMap => "stability-map",
            Self::Boundaries => "boundaries",
            Self::Esqpt => "esqpt",
            Self::Bifurcation => "bifurcation",
        }
    }

    pub fn default_file(&self) -> String {
        format!("{}.csv", self.name().replace('-', "_"))
    }
}

pub fn run(sub: Subcommand, cfg: &RunConfig) -> Result<(Table, Value), CliError> {
    match sub {
        Subcommand::Spectrum => spectrum(cfg),
        Subcommand::Dos => dos(cfg),
        Subcommand::Evolve => evolve(cfg),
        Subcommand::StabilityMap => stability_map(cfg),
        Subcommand::Boundaries => boundaries(cfg),
        Subcommand::Esqpt => esqpt(cfg),
        Subcommand::Bifurcation => bifurcation(cfg),
    }
}

fn compute_spectrum(cfg: &RunConfig) -> Result<ComplexSpectrum, CliError> {
    let p = cfg.params();
    let spins = build_spin_matrices_capped(p.n_spins, cfg.spectrum.max_spins).map_err(CliError::compute("spin matrices"))?;
    let mut s = complex_spectrum(&h_eff_from(&spins, &p)).map_err(CliError::compute("eigenvalues"))?;
    s.params = Some(p);
    Ok(s)
}

fn spectrum(cfg: &RunConfig) -> Result<(Table, Value), CliError> {
    let s = compute_spectrum(cfg)?;
    let h = cfg.model.h;
    let mut t = Table::new(&["re_e_over_n", "im_e_over_n"]);
    for z in &s.eigenvalues {
        t.push(vec![(z.re / h).into(), (z.im / h).into()]);
    }
    let (lo, hi) = s.re_range();
    let summary = json!({
        "states": s.len(),
        "re_min": lo / h,
        "re_max": hi / h,
        "max_abs_im": s.max_abs_im() / h,
    });
    Ok((t, summary))
}

fn push_dos(t: &mut Table, d: &DosHistogram, h: f64) {
    for (e, rho) in d.bin_centers.iter().zip(&d.density) {
        t.push(vec![(e / h).into(), (rho * h).into(), d.method.as_str().into()]);
    }
}

fn dos(cfg: &RunConfig) -> Result<(Table, Value), CliError> {
    let s = compute_spectrum(cfg)?;
    let h = cfg.model.h;
    let sp = &cfg.spectrum;
    let width = sp.bin_width_h.map_or_else(|| default_bin_width(&s), |w| w * h);
    let eta = sp.eta_h.map_or_else(|| default_eta(&s), |e| e * h);
    let counting = dos_counting(&s, width).map_err(CliError::compute("counting density"))?;

    let mut t = Table::new(&["e_over_n", "density", "method"]);
    let mut summary = json!({ "bin_width": width / h, "eta": eta / h, "states": s.len() });
    if sp.dos_method != DosChoice::Resolvent {
        push_dos(&mut t, &counting, h);
        if let Some((e, _)) = counting.peak() {
            summary["counting_peak"] = json!(e / h);
        }
    }
    if sp.dos_method != DosChoice::Counting {
        let r = match sp.resolvent {
            ResolventMode::Point => dos_resolvent(&s, &counting.bin_centers, eta),
            ResolventMode::Binned => dos_resolvent_binned(&s, width, eta),
        }
        .map_err(CliError::compute("resolvent density"))?;
        push_dos(&mut t, &r, h);
        if let Some((e, _)) = r.peak() {
            summary["resolvent_peak"] = json!(e / h);
        }
    }
    Ok((t, summary))
}

fn initial_state(cfg: &RunConfig, fallback: impl FnOnce() -> Result<SpinState, CliError>) -> Result<SpinState, CliError> {
    let i = &cfg.integrator;
    match (i.initial_theta_rad, i.initial_phi_rad) {
        (None, None) => fallback(),
        (theta, phi) => Ok(SpinState::from_angles(theta.unwrap_or(0.0), phi.unwrap_or(0.0))),
    }
}

fn evolve(cfg: &RunConfig) -> Result<(Table, Value), CliError> {
    let p = cfg.params();
    let h = p.h;
    let start = initial_state(cfg, || perturbed_fixed_point(&p).map_err(CliError::compute("initial state")))?;
    let rec = RecordOptions {
        stride: cfg.integrator.record_stride,
        record_from: cfg.integrator.record_from_over_h / h,
    };
    let traj = integrate_dde_recorded(&p, start, cfg.t_max(), cfg.dt(), rec).map_err(CliError::compute("integration"))?;

    let mut t = Table::new(&["t", "jx", "jy", "jz", "gamma_x", "energy"]);
    let (mut e_lo, mut e_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..traj.len() {
        let s = traj.states[i];
        let e = traj.energy(i) / h;
        e_lo = e_lo.min(e);
        e_hi = e_hi.max(e);
        t.push(vec![
            (traj.times[i] * h).into(),
            s.jx.into(),
            s.jy.into(),
            s.jz.into(),
            (traj.gamma_x_record[i] / h).into(),
            e.into(),
        ]);
    }
    let summary = json!({
        "samples": traj.len(),
        "max_sphere_deviation": traj.max_sphere_deviation,
        "energy_range": e_hi - e_lo,
    });
    Ok((t, summary))
}

/// Seed grid with every seed moved by up to `jitter` grid spacings. The
/// stream is fixed by `seed` and `point`, so thread scheduling cannot
/// change it.
pub fn jittered_seeds(grid: &SeedGrid, jitter: f64, seed: u64, point: u64) -> Vec<Complex64> {
    let mut seeds = grid.seeds();
    if jitter == 0.0 {
        return seeds;
    }
    let spacing = |lo: f64, hi: f64, n: usize| if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    let dre = jitter * spacing(grid.re_min, grid.re_max, grid.n_re);
    let dim = jitter * spacing(grid.im_min, grid.im_max, grid.n_im);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(point);
    for z in &mut seeds {
        z.re += dre * rng.random_range(-1.0..=1.0);
        z.im += dim * rng.random_range(-1.0..=1.0);
    }
    seeds
}

fn stability_map(cfg: &RunConfig) -> Result<(Table, Value), CliError> {
    let p = cfg.params();
    let h = p.h;
    let taus = cfg.stability_taus();
    let lambdas = cfg.stability_lambdas();
    let grid = cfg.seed_grid();
    let st = &cfg.stability;
    let points: Vec<(f64, f64)> = lambdas.iter().flat_map(|&l| taus.iter().map(move |&t| (t, l))).collect();
    let margins = points
        .par_iter()
        .enumerate()
        .map(|(k, &(tau, lambda))| {
            let seeds = jittered_seeds(&grid, st.seed_jitter, st.seed, k as u64);
            stability_margin(&p.with_tau(tau).with_lambda(lambda), &seeds)
                .map_err(CliError::compute(format!("rightmost root at tau = {tau}, lambda = {lambda}")))
        })
        .collect::<Result<Vec<f64>, _>>()?;

    let mut t = Table::new(&["tau", "lambda", "re_rightmost"]);
    for (&(tau, lambda), &m) in points.iter().zip(&margins) {
        t.push(vec![(tau * h).into(), (lambda / h).into(), (m / h).into()]);
    }
    let unstable = margins.iter().filter(|&&m| m >= 0.0).count();
    let summary = json!({ "points": points.len(), "unstable": unstable, "seeds": grid.n_re * grid.n_im });
    Ok((t, summary))
}

fn boundaries(cfg: &RunConfig) -> Result<(Table, Value), CliError> {
    let p = cfg.params().with_tau(0.0);
    let h = p.h;
    let z_max = cfg.stability.z_max;
    let per_lambda = cfg
        .stability_lambdas()
        .par_iter()
        .map(|&l| boundary_points(&p.with_lambda(l), z_max).map_err(CliError::compute(format!("boundaries at lambda = {l}"))))
        .collect::<Result<Vec<_>, _>>()?;

    let mut t = Table::new(&["lambda", "tau", "s", "z"]);
    for b in per_lambda.iter().flatten() {
        t.push(vec![(b.lambda / h).into(), (b.tau * h).into(), (b.s / h).into(), b.z.into()]);
    }
    let first = boundary_points(&cfg.params(), z_max)
        .map_err(CliError::compute("boundaries at the model lambda"))?
        .first()
        .map(|b| b.tau * h);
    let summary = json!({ "points": t.rows.len(), "first_tau_at_model_lambda": first });
    Ok((t, summary))
}

fn curve_rows(t: &mut Table, curve: &EsqptCurve, regime: impl Fn(&CurvePoint) -> &'static str) {
    for q in &curve.points {
        t.push(vec![
            q.control.into(),
            q.jz_bar.into(),
            q.jx2_bar.into(),
            curve.source.as_str().into(),
            regime(q).into(),
        ]);
    }
}

fn esqpt(cfg: &RunConfig) -> Result<(Table, Value), CliError> {
    let p = cfg.params();
    let h = p.h;
    let e = &cfg.esqpt;
    let mut t = Table::new(&["control", "jz_bar", "jx2_bar", "method", "regime"]);
    let mut summary = json!({ "source": e.source });
    let curve = match e.source {
        EsqptSource::Feedback => {
            let opts = cfg.sweep_options();
            let points = cfg
                .esqpt_taus()
                .par_iter()
                .map(|&tau| feedback_sweep_point(&p, tau, &opts).map_err(CliError::compute(format!("sweep at tau = {tau}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let unsettled = points.iter().filter(|q| q.average.warning.is_some()).count();
            summary["unsettled"] = json!(unsettled);
            EsqptCurve {
                source: lmg_core::analysis::CurveSource::FeedbackTauSweep,
                points: points.iter().map(lmg_core::analysis::sweep_curve_point).collect(),
            }
        }
        EsqptSource::ClosedOrbit => {
            let closed = p.closed();
            let (lo, hi) = slice_energy_band(&closed);
            let e_min = e.energy_min_h.map_or(lo + 1e-6 * h, |v| v * h);
            let energies: Vec<f64> = linspace(e_min, e.energy_max_h * h, e.energy_points)
                .into_iter()
                .filter(|&x| (x + 0.5 * h).abs() > 1e-9 * h)
                .collect();
            if let Some(&bad) = energies.iter().find(|&&x| x < lo || x > hi) {
                return Err(CliError::Invalid {
                    key: "esqpt.energy_min_h".into(),
                    reason: format!("energy {} is outside the band [{}, {}]", bad / h, lo / h, hi / h),
                });
            }
            let (dt, cap) = (cfg.dt(), e.orbit_t_cap_over_h / h);
            let parts = energies
                .par_iter()
                .map(|&x| {
                    closed_orbit_reference(&closed, &[x], dt, cap)
                        .map_err(CliError::compute(format!("closed orbit at E/N = {}", x / h)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut points: Vec<CurvePoint> = parts.into_iter().flat_map(|c| c.points).collect();
            for q in &mut points {
                q.control /= h;
            }
            EsqptCurve {
                source: lmg_core::analysis::CurveSource::ClosedOrbit,
                points,
            }
        }
        EsqptSource::Dissipative => {
            let start = initial_state(cfg, || Ok(SpinState::from_angles(3.0, 0.2)))?;
            dissipative_signal(&p, start, cfg.t_max(), e.delta_t_over_h / h, e.window_stride)
                .map_err(CliError::compute("dissipative signal"))?
        }
        EsqptSource::Chaotic => {
            let sig = chaotic_window_signal(&p, e.delta_t_over_h / h, &cfg.chaotic_options())
                .map_err(CliError::compute("chaotic window signal"))?;
            summary["tail"] = json!(sig.regime.as_str());
            summary["chaotic"] = json!(sig.chaotic);
            sig.curve
        }
    };
    let mut curve = curve;
    if matches!(e.source, EsqptSource::Feedback | EsqptSource::Dissipative | EsqptSource::Chaotic) {
        for q in &mut curve.points {
            q.control *= h;
        }
    }
    curve_rows(&mut t, &curve, |q| match (e.source, q.regime) {
        (_, Some(r)) => r.as_str(),
        (EsqptSource::ClosedOrbit, None) => "periodic",
        _ => "",
    });
    if let Some(peak) = curve.peak() {
        summary["peak"] = json!({ "control": peak.control, "jz_bar": peak.jz_bar, "jx2_bar": peak.jx2_bar });
    }
    summary["points"] = json!(curve.points.len());
    Ok((t, summary))
}

fn bifurcation(cfg: &RunConfig) -> Result<(Table, Value), CliError> {
    let p = cfg.params();
    let h = p.h;
    let opts = cfg.scan_options();
    let entries = cfg
        .bifurcation_taus()
        .par_iter()
        .map(|&tau| bifurcation_entry(&p, tau, &opts).map_err(CliError::compute(format!("scan at tau = {tau}"))))
        .collect::<Result<Vec<_>, _>>()?;

    let mut t = Table::new(&["tau", "extremum_value", "kind"]);
    let mut most = 0;
    for b in &entries {
        let tau = b.tau * h;
        if let Some(v) = b.fixed_value {
            t.push(vec![tau.into(), v.into(), "fixed".into()]);
        }
        for &v in &b.maxima {
            t.push(vec![tau.into(), v.into(), "max".into()]);
        }
        for &v in &b.minima {
            t.push(vec![tau.into(), v.into(), "min".into()]);
        }
        most = most.max(b.distinct_count(opts.tolerance));
    }
    let fixed = entries.iter().filter(|b| b.fixed_value.is_some()).count();
    let summary = json!({ "delays": entries.len(), "fixed_point_delays": fixed, "max_distinct_extrema": most });
    Ok((t, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_is_reproducible_and_bounded() {
        let g = SeedGrid::default();
        let a = jittered_seeds(&g, 0.3, 7, 11);
        assert_eq!(a, jittered_seeds(&g, 0.3, 7, 11));
        assert_ne!(a, jittered_seeds(&g, 0.3, 7, 12));
        assert_ne!(a, jittered_seeds(&g, 0.3, 8, 11));
        let dre = 0.3 * (g.re_max - g.re_min) / (g.n_re - 1) as f64;
        for (x, y) in a.iter().zip(g.seeds()) {
            assert!((x.re - y.re).abs() <= dre + 1e-15);
        }
        assert_eq!(jittered_seeds(&g, 0.0, 7, 11), g.seeds());
    }

    #[test]
    fn small_spectrum_table() {
        let mut cfg = RunConfig::default();
        cfg.model.n_spins = 10;
        let (t, summary) = run(Subcommand::Spectrum, &cfg).unwrap();
        assert_eq!(t.rows.len(), 11);
        assert_eq!(summary["states"], 11);
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let mut cfg = RunConfig::default();
        cfg.model.n_spins = 50;
        cfg.spectrum.max_spins = 20;
        let err = run(Subcommand::Spectrum, &cfg).unwrap_err();
        assert_eq!(err.kind(), "compute");
    }
}
