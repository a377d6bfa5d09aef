//! Time averages, rotation periods, closed-orbit reference curves, feedback
//! sweeps and bifurcation scans.
//!
//! Integrals over trajectories are exact integrals of the piecewise cubic
//! Hermite interpolant built from the stored states and their derivatives
//! (on whole steps this is the trapezoid rule with end corrections).

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::dynamics::{integrate_dde_recorded, max_step, DdeIntegrator, RecordOptions, Trajectory};
use crate::model::classical_energy;
use crate::stability::perturbed_fixed_point;
use crate::{Error, ModelParams, Result, SpinState};

/// Default integration step for analysis runs.
pub const DEFAULT_DT: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AverageMethod {
    RotationPeriod,
    EffectiveWindow,
    StationaryWindow,
}

impl AverageMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::RotationPeriod => "rotation_period",
            Self::EffectiveWindow => "effective_window",
            Self::StationaryWindow => "stationary_window",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AverageWarning {
    /// Window starts before [`default_onset`].
    BeforeOnset,
    /// The `jx`, `jz` envelopes of the two window halves differ by more than `1e-3`.
    EnvelopeDrift,
    /// Tail is neither a fixed point nor a steady cycle.
    IrregularTail,
}

/// Time averages of `jz` and `jx^2` over `[t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedObservables {
    pub jz_bar: f64,
    pub jx2_bar: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub method: AverageMethod,
    pub warning: Option<AverageWarning>,
}

/// `max(50 tau, 500/h)`.
pub fn default_onset(params: &ModelParams) -> f64 {
    (50.0 * params.tau).max(500.0 / params.h)
}

/// `jz`, `jx^2` and their time derivatives at sample `i`.
fn observables(traj: &Trajectory, i: usize) -> ([f64; 2], [f64; 2]) {
    let s = traj.states[i];
    let d = traj.derivative(i);
    ([s.jz, s.jx * s.jx], [d[2], 2.0 * s.jx * d[0]])
}

/// Integral over `[s0, s1]` (fractions of one step) of the cubic Hermite
/// interpolant through `(y0, d0)`, `(y1, d1)`.
fn hermite_piece(y0: f64, d0: f64, y1: f64, d1: f64, dt: f64, s0: f64, s1: f64) -> f64 {
    let prim = |s: f64| {
        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        let h00 = 0.5 * s4 - s3 + s;
        let h10 = 0.25 * s4 - 2.0 / 3.0 * s3 + 0.5 * s2;
        let h01 = -0.5 * s4 + s3;
        let h11 = 0.25 * s4 - s3 / 3.0;
        h00 * y0 + h10 * dt * d0 + h01 * y1 + h11 * dt * d1
    };
    dt * (prim(s1) - prim(s0))
}

fn hermite_value(y0: f64, d0: f64, y1: f64, d1: f64, dt: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * dt * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * dt * d1
}

/// `[int jz, int jx^2]` over `[ta, tb]`.
fn integrate_span(traj: &Trajectory, ta: f64, tb: f64) -> Result<[f64; 2]> {
    let n = traj.len();
    let (t0, t1) = (traj.t_start(), traj.t_end());
    let eps = 1e-9 * traj.dt;
    if n < 2 || !(ta < tb) || ta < t0 - eps || tb > t1 + eps {
        return Err(Error::WindowOutOfRange {
            start: ta,
            end: tb,
            t0,
            t1,
        });
    }
    let dt = traj.dt;
    let ua = ((ta - t0) / dt).max(0.0);
    let ub = ((tb - t0) / dt).min((n - 1) as f64);
    let ia = (ua.floor() as usize).min(n - 2);
    let ib = (ub.floor() as usize).min(n - 2);
    let mut acc = [0.0; 2];
    let mut cur = observables(traj, ia);
    for i in ia..=ib {
        let next = observables(traj, i + 1);
        let s0 = if i == ia { ua - i as f64 } else { 0.0 };
        let s1 = if i == ib { ub - i as f64 } else { 1.0 };
        for (q, a) in acc.iter_mut().enumerate() {
            *a += hermite_piece(cur.0[q], cur.1[q], next.0[q], next.1[q], dt, s0, s1);
        }
        cur = next;
    }
    Ok(acc)
}

fn average_span(traj: &Trajectory, ta: f64, tb: f64, method: AverageMethod) -> Result<AveragedObservables> {
    let [iz, ix] = integrate_span(traj, ta, tb)?;
    let len = tb - ta;
    Ok(AveragedObservables {
        jz_bar: iz / len,
        jx2_bar: ix / len,
        t_start: ta,
        t_end: tb,
        method,
        warning: None,
    })
}

fn envelope(traj: &Trajectory, from: usize, to: usize) -> [f64; 4] {
    traj.states[from..to]
        .iter()
        .fold([f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY], |e, s| {
            [e[0].min(s.jx), e[1].max(s.jx), e[2].min(s.jz), e[3].max(s.jz)]
        })
}

/// Mean of `jz` and `jx^2` over `[t1, t2]`, flagged when the window does
/// not look stationary.
pub fn stationary_average(traj: &Trajectory, t1: f64, t2: f64) -> Result<AveragedObservables> {
    let mut avg = average_span(traj, t1, t2, AverageMethod::StationaryWindow)?;
    let index = |t: f64| (((t - traj.t_start()) / traj.dt).round().max(0.0) as usize).min(traj.len() - 1);
    let (ia, ib) = (index(t1), index(t2));
    let mid = (ia + ib) / 2;
    if t1 < default_onset(&traj.params) {
        avg.warning = Some(AverageWarning::BeforeOnset);
    } else if mid > ia && ib > mid {
        let a = envelope(traj, ia, mid + 1);
        let b = envelope(traj, mid, ib + 1);
        if a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-3) {
            avg.warning = Some(AverageWarning::EnvelopeDrift);
        }
    }
    Ok(avg)
}

/// Sliding-window means with window `delta_t` (rounded to whole samples),
/// window starts every `stride` samples.
pub fn windowed_average(traj: &Trajectory, delta_t: f64, stride: usize) -> Result<Vec<AveragedObservables>> {
    if stride == 0 {
        return Err(Error::InvalidParameter {
            name: "stride",
            reason: "must be at least 1",
        });
    }
    if !(delta_t > 0.0) || delta_t > traj.span() + 1e-9 * traj.dt {
        return Err(Error::WindowOutOfRange {
            start: traj.t_start(),
            end: traj.t_start() + delta_t,
            t0: traj.t_start(),
            t1: traj.t_end(),
        });
    }
    let n = traj.len();
    let w = ((delta_t / traj.dt).round() as usize).clamp(1, n - 1);
    // cumulative integrals over whole steps
    let mut prefix = Vec::with_capacity(n);
    prefix.push([0.0f64; 2]);
    let mut cur = observables(traj, 0);
    for i in 0..n - 1 {
        let next = observables(traj, i + 1);
        let last = prefix[i];
        let mut p = [0.0; 2];
        for q in 0..2 {
            p[q] = last[q] + hermite_piece(cur.0[q], cur.1[q], next.0[q], next.1[q], traj.dt, 0.0, 1.0);
        }
        prefix.push(p);
        cur = next;
    }
    let len = w as f64 * traj.dt;
    let mut out = Vec::new();
    let mut i = 0;
    while i + w < n {
        out.push(AveragedObservables {
            jz_bar: (prefix[i + w][0] - prefix[i][0]) / len,
            jx2_bar: (prefix[i + w][1] - prefix[i][1]) / len,
            t_start: traj.times[i],
            t_end: traj.times[i + w],
            method: AverageMethod::EffectiveWindow,
            warning: None,
        });
        i += stride;
    }
    Ok(out)
}

/// Times at which the net azimuth `atan2(jy, jx)` has turned through
/// `2 pi k`, `k = 1, 2, ...` (linear interpolation between samples).
pub fn rotation_times(traj: &Trajectory) -> Result<Vec<f64>> {
    if traj.states.iter().any(|s| s.jx.hypot(s.jy) < 1e-12) {
        return Err(Error::Precondition("trajectory touches a pole; azimuth undefined"));
    }
    let mut out = Vec::new();
    let Some(first) = traj.states.first() else {
        return Ok(out);
    };
    let mut phi = first.jy.atan2(first.jx);
    let mut net = 0.0f64;
    let mut next_turn = 2.0 * PI;
    for i in 1..traj.len() {
        let s = traj.states[i];
        let p = s.jy.atan2(s.jx);
        let mut d = p - phi;
        if d > PI {
            d -= 2.0 * PI;
        } else if d <= -PI {
            d += 2.0 * PI;
        }
        phi = p;
        let before = net.abs();
        net += d;
        let after = net.abs();
        while after >= next_turn {
            let frac = if after > before {
                ((next_turn - before) / (after - before)).clamp(0.0, 1.0)
            } else {
                1.0
            };
            out.push(traj.times[i - 1] + frac * (traj.times[i] - traj.times[i - 1]));
            next_turn += 2.0 * PI;
        }
    }
    Ok(out)
}

/// Durations of successive full turns about the `z` axis, the first one
/// measured from the trajectory start. Empty when the orbit never winds.
pub fn rotation_period(traj: &Trajectory) -> Result<Vec<f64>> {
    let times = rotation_times(traj)?;
    let mut prev = traj.t_start();
    Ok(times
        .into_iter()
        .map(|t| {
            let p = t - prev;
            prev = t;
            p
        })
        .collect())
}

/// Averages over each full turn found by [`rotation_times`].
pub fn period_averages(traj: &Trajectory) -> Result<Vec<AveragedObservables>> {
    let mut prev = traj.t_start();
    let mut out = Vec::new();
    for t in rotation_times(traj)? {
        out.push(average_span(traj, prev, t, AverageMethod::RotationPeriod)?);
        prev = t;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveSource {
    ClosedOrbit,
    Dissipative,
    FeedbackTauSweep,
    ChaoticWindow,
}

impl CurveSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ClosedOrbit => "closed_orbit",
            Self::Dissipative => "dissipative",
            Self::FeedbackTauSweep => "feedback_tau_sweep",
            Self::ChaoticWindow => "chaotic_window",
        }
    }
}

/// Long-time behaviour of a trajectory tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailRegime {
    FixedPoint,
    Periodic {
        period: f64,
        /// Upward mid-level crossings of `jz` per period.
        crossings_per_period: usize,
    },
    /// Regular crossings but the amplitude is still changing.
    Transient,
    Irregular,
}

impl TailRegime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::FixedPoint => "fixed_point",
            Self::Periodic { .. } => "periodic",
            Self::Transient => "transient",
            Self::Irregular => "irregular",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// Energy, delay or window start, depending on the source.
    pub control: f64,
    pub jz_bar: f64,
    pub jx2_bar: f64,
    pub period: Option<f64>,
    pub regime: Option<TailRegime>,
}

/// `(control, jz_bar, jx2_bar)` points of one ESQPT-signal construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EsqptCurve {
    pub source: CurveSource,
    pub points: Vec<CurvePoint>,
}

impl EsqptCurve {
    /// Point with the largest `jz_bar`.
    pub fn peak(&self) -> Option<&CurvePoint> {
        self.points.iter().max_by(|a, b| a.jz_bar.total_cmp(&b.jz_bar))
    }
}

/// Distance in the `(jz_bar, jx2_bar)` plane from a point to the polyline
/// through the curve's points.
pub fn distance_to_curve(jz: f64, jx2: f64, curve: &EsqptCurve) -> f64 {
    let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.jz_bar, p.jx2_bar)).collect();
    match pts.len() {
        0 => f64::INFINITY,
        1 => (jz - pts[0].0).hypot(jx2 - pts[0].1),
        _ => pts
            .windows(2)
            .map(|w| {
                let (ax, ay) = w[0];
                let (bx, by) = w[1];
                let (dx, dy) = (bx - ax, by - ay);
                let len2 = dx * dx + dy * dy;
                let t = if len2 > 0.0 {
                    (((jz - ax) * dx + (jx2 - ay) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                (jz - ax - t * dx).hypot(jx2 - ay - t * dy)
            })
            .fold(f64::INFINITY, f64::min),
    }
}

fn slice_energy(jz: f64, params: &ModelParams) -> f64 {
    params.gamma * jz * jz - params.h * jz - params.gamma / 4.0
}

/// Energy range reachable on the `jy = 0`, `jx > 0` slice:
/// `(minimum, h/2)`.
pub fn slice_energy_band(params: &ModelParams) -> (f64, f64) {
    let jz_star = (params.h / (2.0 * params.gamma)).min(0.5);
    (slice_energy(jz_star, params), params.h / 2.0)
}

/// On-shell start on the `jy = 0`, `jx > 0` slice: the root of
/// `classical_energy = energy` with `jz` below the vertex `h/(2 gamma)`.
pub fn on_shell_state(params: &ModelParams, energy: f64) -> Result<SpinState> {
    if !(params.gamma >= 0.0) {
        return Err(Error::Precondition("closed orbits need gamma >= 0"));
    }
    let (min, max) = slice_energy_band(params);
    if !(energy >= min && energy <= max) {
        return Err(Error::EnergyOutsideBand { energy, min, max });
    }
    let (mut lo, mut hi) = (-0.5, (params.h / (2.0 * params.gamma)).min(0.5));
    // slice energy decreases on [lo, hi]
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slice_energy(mid, params) > energy {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    let jz = 0.5 * (lo + hi);
    let jx = (0.25 - jz * jz).max(0.0).sqrt();
    Ok(SpinState::new_unchecked(jx, 0.0, jz))
}

/// One period of a closed (`kappa = lambda = 0`) orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedOrbit {
    pub energy: f64,
    pub start: SpinState,
    pub period: f64,
    pub jz_bar: f64,
    pub jx2_bar: f64,
    /// Largest energy deviation along the orbit.
    pub energy_drift: f64,
}

/// First `+ -> -` crossing of `jy` with `jx > 0` after the start; the
/// crossing time is refined on the Hermite interpolant.
pub fn closed_orbit(params: &ModelParams, energy: f64, dt: f64, t_cap: f64) -> Result<ClosedOrbit> {
    let p = params.closed().with_tau(0.0);
    let start = on_shell_state(&p, energy)?;
    let mut integ = DdeIntegrator::new(&p, start, dt)?;
    let mut times = alloc::vec![0.0];
    let mut states = alloc::vec![start];
    let mut gamma_x = alloc::vec![integ.gamma_x()];
    let mut drift = 0.0f64;
    let max_steps = (t_cap / dt).ceil() as u64;
    let mut prev_d = integ.derivative();
    while integ.steps_taken() < max_steps {
        let prev = integ.state();
        integ.step()?;
        let cur = integ.state();
        let d = integ.derivative();
        times.push(integ.time());
        states.push(cur);
        gamma_x.push(integ.gamma_x());
        drift = drift.max((classical_energy(&cur, &p) - energy).abs());
        if integ.steps_taken() > 1 && prev.jy > 0.0 && cur.jy <= 0.0 && prev.jx > 0.0 {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if hermite_value(prev.jy, prev_d[1], cur.jy, d[1], dt, mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let period = integ.time() - dt + 0.5 * (lo + hi) * dt;
            let traj = Trajectory {
                times,
                states,
                gamma_x_record: gamma_x,
                params: p,
                dt,
                integration_dt: dt,
                max_sphere_deviation: integ.max_drift(),
            };
            let avg = average_span(&traj, 0.0, period, AverageMethod::RotationPeriod)?;
            return Ok(ClosedOrbit {
                energy,
                start,
                period,
                jz_bar: avg.jz_bar,
                jx2_bar: avg.jx2_bar,
                energy_drift: drift,
            });
        }
        prev_d = d;
    }
    Err(Error::OrbitNotClosed { t_cap })
}

/// Closed-orbit period and averages for each energy.
pub fn closed_orbit_reference(params: &ModelParams, energy_grid: &[f64], dt: f64, t_cap: f64) -> Result<EsqptCurve> {
    let mut points = Vec::with_capacity(energy_grid.len());
    for &e in energy_grid {
        let o = closed_orbit(params, e, dt, t_cap)?;
        points.push(CurvePoint {
            control: e,
            jz_bar: o.jz_bar,
            jx2_bar: o.jx2_bar,
            period: Some(o.period),
            regime: None,
        });
    }
    Ok(EsqptCurve {
        source: CurveSource::ClosedOrbit,
        points,
    })
}

/// Upward crossings of `jz` through `level`, refined on the interpolant.
fn upward_crossings(traj: &Trajectory, level: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..traj.len().saturating_sub(1) {
        let (a, b) = (traj.states[i].jz - level, traj.states[i + 1].jz - level);
        if a < 0.0 && b >= 0.0 {
            let (da, db) = (traj.derivative(i)[2], traj.derivative(i + 1)[2]);
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if hermite_value(a, da, b, db, traj.dt, mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(traj.times[i] + 0.5 * (lo + hi) * traj.dt);
        }
    }
    out
}

/// Amplitude below which a tail counts as a fixed point.
pub const FIXED_POINT_RANGE: f64 = 1e-5;
/// Relative spread allowed between candidate periods.
pub const PERIOD_TOLERANCE: f64 = 1e-3;
/// Relative change allowed between the `jz` ranges of the two tail halves.
pub const AMPLITUDE_TOLERANCE: f64 = 1e-3;

fn tail_level(traj: &Trajectory) -> Option<f64> {
    let e = envelope(traj, 0, traj.len());
    if e[1] - e[0] < FIXED_POINT_RANGE && e[3] - e[2] < FIXED_POINT_RANGE {
        None
    } else {
        Some(0.5 * (e[2] + e[3]))
    }
}

/// Classifies a tail as fixed point, periodic (including period-doubled
/// cycles), transient or irregular.
pub fn classify_tail(traj: &Trajectory) -> TailRegime {
    let Some(level) = tail_level(traj) else {
        return TailRegime::FixedPoint;
    };
    let regime = classify_crossings(&upward_crossings(traj, level));
    if let TailRegime::Periodic { .. } = regime {
        let mid = traj.len() / 2;
        let (a, b) = (envelope(traj, 0, mid + 1), envelope(traj, mid, traj.len()));
        let (ra, rb) = (a[3] - a[2], b[3] - b[2]);
        if (ra - rb).abs() > AMPLITUDE_TOLERANCE * ra.max(rb) {
            return TailRegime::Transient;
        }
    }
    regime
}

fn classify_crossings(c: &[f64]) -> TailRegime {
    let mut m = 1;
    while m <= 16 && c.len() > 3 * m {
        let sums: Vec<f64> = (0..c.len() - m).map(|j| c[j + m] - c[j]).collect();
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        let spread = sums.iter().fold(0.0f64, |a, s| a.max((s - mean).abs()));
        if spread <= PERIOD_TOLERANCE * mean {
            return TailRegime::Periodic {
                period: mean,
                crossings_per_period: m,
            };
        }
        m *= 2;
    }
    TailRegime::Irregular
}

/// Settings for [`feedback_sweep_point`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Integration step; capped by [`max_step`].
    pub dt: f64,
    /// First candidate start of the stationary tail; `None` means [`default_onset`].
    pub onset: Option<f64>,
    /// Give up waiting for a fixed point or cycle after this time.
    pub max_onset: f64,
    /// At least this many periods are averaged.
    pub min_periods: usize,
    /// And at least this much time.
    pub min_observe: f64,
    /// Length of each tail segment inspected for stationarity.
    pub probe: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            onset: None,
            max_onset: 10_000.0,
            min_periods: 20,
            min_observe: 200.0,
            probe: 400.0,
        }
    }
}

/// One delay of the feedback sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub tau: f64,
    pub average: AveragedObservables,
    pub regime: TailRegime,
}

/// Samples recorded straight from a running integrator.
struct Recorder {
    times: Vec<f64>,
    states: Vec<SpinState>,
    gamma_x: Vec<f64>,
}

impl Recorder {
    fn new() -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            gamma_x: Vec::new(),
        }
    }

    fn push(&mut self, integ: &DdeIntegrator) {
        self.times.push(integ.time());
        self.states.push(integ.state());
        self.gamma_x.push(integ.gamma_x());
    }

    /// Records the current state, then steps for `duration`.
    fn run(&mut self, integ: &mut DdeIntegrator, duration: f64) -> Result<()> {
        let steps = (duration / integ.dt() - 1e-9).ceil() as u64;
        if self.times.is_empty() {
            self.push(integ);
        }
        for _ in 0..steps {
            integ.step()?;
            self.push(integ);
        }
        Ok(())
    }

    fn trajectory(&self, integ: &DdeIntegrator) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            states: self.states.clone(),
            gamma_x_record: self.gamma_x.clone(),
            params: *integ.params(),
            dt: integ.dt(),
            integration_dt: integ.dt(),
            max_sphere_deviation: integ.max_drift(),
        }
    }
}

/// Integrates from the perturbed fixed point until a tail segment of length
/// `probe` is a fixed point or a cycle (or `max_onset` is reached), then
/// averages: over an integer number of periods for a cycle, over
/// `min_observe` for a fixed point, over the last segment (flagged) otherwise.
pub fn feedback_sweep_point(params: &ModelParams, tau: f64, opts: &SweepOptions) -> Result<SweepPoint> {
    let p = params.with_tau(tau);
    p.validate()?;
    let dt = opts.dt.min(max_step(&p));
    let mut integ = DdeIntegrator::new(&p, perturbed_fixed_point(&p)?, dt)?;
    integ.advance_to(opts.onset.unwrap_or_else(|| default_onset(&p)))?;
    let (mut rec, mut tail, mut regime) = loop {
        let mut rec = Recorder::new();
        rec.run(&mut integ, opts.probe)?;
        let tail = rec.trajectory(&integ);
        let regime = classify_tail(&tail);
        let settled = matches!(regime, TailRegime::FixedPoint | TailRegime::Periodic { .. });
        if settled || integ.time() >= opts.max_onset {
            break (rec, tail, regime);
        }
    };
    let t1 = tail.t_start();
    let average = match regime {
        TailRegime::FixedPoint => {
            if tail.span() < opts.min_observe {
                rec.run(&mut integ, opts.min_observe - tail.span())?;
                tail = rec.trajectory(&integ);
            }
            average_span(&tail, t1, t1 + opts.min_observe, AverageMethod::StationaryWindow)?
        }
        TailRegime::Periodic {
            period,
            crossings_per_period,
        } => {
            let k = opts.min_periods.max((opts.min_observe / period).ceil() as usize);
            let needed = k * crossings_per_period + 1;
            let level = tail_level(&tail).unwrap_or(0.0);
            let mut crossings = upward_crossings(&tail, level);
            if crossings.len() < needed {
                rec.run(&mut integ, (needed - crossings.len() + 2) as f64 * period / crossings_per_period as f64)?;
                tail = rec.trajectory(&integ);
                crossings = upward_crossings(&tail, level);
                // a longer record can expose slow drift
                let check = classify_crossings(&crossings);
                if check == TailRegime::Irregular {
                    regime = check;
                }
            }
            if crossings.len() < needed {
                return Err(Error::Precondition("periodic tail too short for the averaging window"));
            }
            let mut a = average_span(&tail, crossings[0], crossings[needed - 1], AverageMethod::StationaryWindow)?;
            if regime == TailRegime::Irregular {
                a.warning = Some(AverageWarning::IrregularTail);
            }
            a
        }
        TailRegime::Transient | TailRegime::Irregular => {
            let mut a = average_span(&tail, t1, tail.t_end(), AverageMethod::StationaryWindow)?;
            a.warning = Some(AverageWarning::IrregularTail);
            a
        }
    };
    Ok(SweepPoint { tau, average, regime })
}

/// [`feedback_sweep_point`] for each delay.
pub fn esqpt_feedback_sweep(params: &ModelParams, tau_grid: &[f64], opts: &SweepOptions) -> Result<EsqptCurve> {
    let mut points = Vec::with_capacity(tau_grid.len());
    for &tau in tau_grid {
        points.push(sweep_curve_point(&feedback_sweep_point(params, tau, opts)?));
    }
    Ok(EsqptCurve {
        source: CurveSource::FeedbackTauSweep,
        points,
    })
}

pub fn sweep_curve_point(p: &SweepPoint) -> CurvePoint {
    CurvePoint {
        control: p.tau,
        jz_bar: p.average.jz_bar,
        jx2_bar: p.average.jx2_bar,
        period: match p.regime {
            TailRegime::Periodic { period, .. } => Some(period),
            _ => None,
        },
        regime: Some(p.regime),
    }
}

/// Extrema of `jx` in the stationary tail at one delay.
#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationEntry {
    pub tau: f64,
    /// Distinct local maxima, ascending.
    pub maxima: Vec<f64>,
    /// Distinct local minima, ascending.
    pub minima: Vec<f64>,
    /// Tail mean when `jx` is constant within the tolerance.
    pub fixed_value: Option<f64>,
}

impl BifurcationEntry {
    /// Number of distinct values among maxima and minima together.
    pub fn distinct_count(&self, tol: f64) -> usize {
        if self.fixed_value.is_some() {
            return 1;
        }
        let mut all: Vec<f64> = self.maxima.iter().chain(&self.minima).copied().collect();
        cluster(&mut all, tol).len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationScan {
    pub entries: Vec<BifurcationEntry>,
    /// Merge tolerance used for the extrema.
    pub tolerance: f64,
}

/// Default extrema merge tolerance.
pub const EXTREMA_TOLERANCE: f64 = 1e-4;

/// Single-linkage clustering of sorted values; returns cluster means.
fn cluster(values: &mut [f64], tol: f64) -> Vec<f64> {
    values.sort_by(|a, b| a.total_cmp(b));
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > tol {
            if i > start {
                let group = &values[start..i];
                out.push(group.iter().sum::<f64>() / group.len() as f64);
            }
            start = i;
        }
    }
    out
}

/// Vertex value of the parabola through three equally spaced samples.
fn parabola_extremum(y0: f64, y1: f64, y2: f64) -> f64 {
    let curv = y2 - 2.0 * y1 + y0;
    if curv == 0.0 {
        return y1;
    }
    y1 - (y2 - y0) * (y2 - y0) / (8.0 * curv)
}

/// Settings for bifurcation scans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub dt: f64,
    pub settle_time: f64,
    pub observe_time: f64,
    pub tolerance: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            settle_time: 1000.0,
            observe_time: 400.0,
            tolerance: EXTREMA_TOLERANCE,
        }
    }
}

/// Local extrema of `jx` after `settle_time`, found from sign changes of
/// `d jx/dt` and refined by a parabola through three samples.
pub fn bifurcation_entry(params: &ModelParams, tau: f64, opts: &ScanOptions) -> Result<BifurcationEntry> {
    let p = params.with_tau(tau);
    p.validate()?;
    let dt = opts.dt.min(max_step(&p));
    let mut integ = DdeIntegrator::new(&p, perturbed_fixed_point(&p)?, dt)?;
    integ.advance_to(opts.settle_time)?;
    let end = ((opts.settle_time + opts.observe_time) / dt - 1e-9).ceil() as u64;
    // last four (jx, d jx/dt) samples, newest last
    let mut win: [(f64, f64); 4] = [(0.0, 0.0); 4];
    let mut filled = 0usize;
    let (mut maxima, mut minima) = (Vec::new(), Vec::new());
    let (mut lo, mut hi, mut sum, mut count) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    loop {
        let jx = integ.state().jx;
        win.rotate_left(1);
        win[3] = (jx, integ.derivative()[0]);
        filled += 1;
        lo = lo.min(jx);
        hi = hi.max(jx);
        sum += jx;
        count += 1;
        if filled >= 4 {
            let (a, b) = (win[1], win[2]);
            if a.1 > 0.0 && b.1 <= 0.0 {
                let c = if a.0 >= b.0 { 1 } else { 2 };
                maxima.push(parabola_extremum(win[c - 1].0, win[c].0, win[c + 1].0));
            } else if a.1 < 0.0 && b.1 >= 0.0 {
                let c = if a.0 <= b.0 { 1 } else { 2 };
                minima.push(parabola_extremum(win[c - 1].0, win[c].0, win[c + 1].0));
            }
        }
        if integ.steps_taken() >= end {
            break;
        }
        integ.step()?;
    }
    if hi - lo < opts.tolerance {
        return Ok(BifurcationEntry {
            tau,
            maxima: Vec::new(),
            minima: Vec::new(),
            fixed_value: Some(sum / count as f64),
        });
    }
    Ok(BifurcationEntry {
        tau,
        maxima: cluster(&mut maxima, opts.tolerance),
        minima: cluster(&mut minima, opts.tolerance),
        fixed_value: None,
    })
}

/// [`bifurcation_entry`] for each delay.
pub fn bifurcation_scan(params: &ModelParams, tau_grid: &[f64], opts: &ScanOptions) -> Result<BifurcationScan> {
    let entries = tau_grid
        .iter()
        .map(|&tau| bifurcation_entry(params, tau, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(BifurcationScan {
        entries,
        tolerance: opts.tolerance,
    })
}

fn curve_from_windows(source: CurveSource, windows: &[AveragedObservables]) -> EsqptCurve {
    EsqptCurve {
        source,
        points: windows
            .iter()
            .map(|w| CurvePoint {
                control: w.t_start,
                jz_bar: w.jz_bar,
                jx2_bar: w.jx2_bar,
                period: None,
                regime: None,
            })
            .collect(),
    }
}

/// Sliding-window signal of a free (`lambda = 0`) dissipative relaxation.
pub fn dissipative_signal(
    params: &ModelParams,
    initial: SpinState,
    t_max: f64,
    delta_t: f64,
    stride: usize,
) -> Result<EsqptCurve> {
    let p = params.with_lambda(0.0);
    let dt = DEFAULT_DT.min(max_step(&p));
    let traj = integrate_dde_recorded(&p, initial, t_max, dt, RecordOptions::default())?;
    Ok(curve_from_windows(
        CurveSource::Dissipative,
        &windowed_average(&traj, delta_t, stride)?,
    ))
}

/// Settings for [`chaotic_window_signal`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChaoticOptions {
    pub dt: f64,
    pub settle_time: f64,
    pub duration: f64,
    /// Window start spacing in samples.
    pub stride: usize,
}

impl Default for ChaoticOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            settle_time: 1000.0,
            duration: 2000.0,
            stride: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChaoticSignal {
    pub curve: EsqptCurve,
    pub regime: TailRegime,
    /// `false` when the tail settled to a fixed point or a cycle.
    pub chaotic: bool,
}

/// Sliding averages with window `delta_t` over one long run at fixed delay.
pub fn chaotic_window_signal(params: &ModelParams, delta_t: f64, opts: &ChaoticOptions) -> Result<ChaoticSignal> {
    params.validate()?;
    let dt = opts.dt.min(max_step(params));
    let traj = integrate_dde_recorded(
        params,
        perturbed_fixed_point(params)?,
        opts.settle_time + opts.duration,
        dt,
        RecordOptions {
            stride: 1,
            record_from: opts.settle_time,
        },
    )?;
    let regime = classify_tail(&traj);
    let windows = windowed_average(&traj, delta_t, opts.stride)?;
    Ok(ChaoticSignal {
        curve: curve_from_windows(CurveSource::ChaoticWindow, &windows),
        regime,
        chaotic: matches!(regime, TailRegime::Irregular),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::integrate_dde;

    fn free() -> ModelParams {
        ModelParams {
            gamma: 0.0,
            kappa: 0.0,
            lambda: 0.0,
            tau: 0.0,
            ..ModelParams::default()
        }
    }

    #[test]
    fn hermite_piece_is_exact_for_cubics() {
        let f = |t: f64| 2.0 * t * t * t - t + 0.5;
        let df = |t: f64| 6.0 * t * t - 1.0;
        let (a, dt) = (0.3, 0.2);
        let exact = |t: f64| 0.5 * t.powi(4) - 0.5 * t * t + 0.5 * t;
        let got = hermite_piece(f(a), df(a), f(a + dt), df(a + dt), dt, 0.25, 0.8);
        let want = exact(a + 0.8 * dt) - exact(a + 0.25 * dt);
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn cluster_merges_close_values() {
        let mut v = [0.3, 0.30005, 0.1, 0.30009, 0.5];
        let c = cluster(&mut v, 1e-4);
        assert_eq!(c.len(), 3);
        assert!((c[1] - 0.300_046_666_666_666_7).abs() < 1e-12);
    }

    #[test]
    fn parabola_vertex() {
        let f = |x: f64| -(x - 0.3) * (x - 0.3) + 2.0;
        assert!((parabola_extremum(f(-1.0), f(0.0), f(1.0)) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn free_precession_rotations() {
        let s = SpinState::from_angles(1.0, 0.3);
        let traj = integrate_dde(&free(), s, 30.0, 0.005).unwrap();
        let periods = rotation_period(&traj).unwrap();
        assert_eq!(periods.len(), 4);
        for p in periods {
            assert!((p - 2.0 * PI).abs() < 1e-6, "{p}");
        }
    }

    #[test]
    fn windowed_average_of_free_precession() {
        let s = SpinState::from_angles(1.0, 0.0);
        let traj = integrate_dde(&free(), s, 20.0, 2.0 * PI / 2000.0).unwrap();
        let w = windowed_average(&traj, 2.0 * PI, 100).unwrap();
        assert!(!w.is_empty());
        for a in w {
            assert!((a.jx2_bar - s.jx * s.jx / 2.0).abs() < 1e-10);
            assert!((a.jz_bar - s.jz).abs() < 1e-12);
        }
        assert!(windowed_average(&traj, 100.0, 1).is_err());
    }

    #[test]
    fn on_shell_start_has_the_requested_energy() {
        let p = ModelParams::default().closed();
        for e in [-0.54, -0.52, -0.5001, -0.3, 0.2, 0.49] {
            let s = on_shell_state(&p, e).unwrap();
            assert!((classical_energy(&s, &p) - e).abs() < 1e-14);
            assert!(s.jx > 0.0 && s.jy == 0.0 && s.jz <= 1.0 / 3.0 + 1e-12);
        }
        assert!(matches!(
            on_shell_state(&p, -0.55),
            Err(Error::EnergyOutsideBand { .. })
        ));
        assert!(on_shell_state(&p, 0.51).is_err());
    }

    #[test]
    fn crossing_classification() {
        let c: Vec<f64> = (0..20).map(|i| 3.0 * i as f64).collect();
        assert_eq!(
            classify_crossings(&c),
            TailRegime::Periodic {
                period: 3.0,
                crossings_per_period: 1
            }
        );
        let mut t = 0.0;
        let c2: Vec<f64> = (0..20)
            .map(|i| {
                let v = t;
                t += if i % 2 == 0 { 2.0 } else { 3.5 };
                v
            })
            .collect();
        assert_eq!(
            classify_crossings(&c2),
            TailRegime::Periodic {
                period: 5.5,
                crossings_per_period: 2
            }
        );
        let c3: Vec<f64> = (0..40).map(|i| (i as f64) * 2.0 + ((i * i) % 7) as f64 * 0.1).collect();
        assert_eq!(classify_crossings(&c3), TailRegime::Irregular);
    }

    #[test]
    fn distance_to_polyline() {
        let curve = EsqptCurve {
            source: CurveSource::ClosedOrbit,
            points: [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]
                .iter()
                .map(|&(a, b)| CurvePoint {
                    control: a,
                    jz_bar: a,
                    jx2_bar: b,
                    period: None,
                    regime: None,
                })
                .collect(),
        };
        assert!((distance_to_curve(0.5, 0.2, &curve) - 0.2).abs() < 1e-15);
        assert!((distance_to_curve(1.3, 0.5, &curve) - 0.3).abs() < 1e-15);
        assert!((distance_to_curve(-3.0, 4.0, &curve) - 5.0).abs() < 1e-15);
    }
}
