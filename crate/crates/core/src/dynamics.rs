//! Mean-field equations of motion with delayed feedback, integrated as a
//! delay differential equation.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::model::{classical_energy, feedback_coupling};
use crate::{Error, ModelParams, Result, SpinState};

/// Abort threshold on `| |J|^2 - 1/4 |`.
pub const DRIFT_ABORT: f64 = 1e-4;

/// Absolute step cap `0.01/h`.
pub const MAX_DT_TIMES_H: f64 = 0.01;

/// Right-hand side of the mean-field equations at instantaneous x-coupling `gamma_x`.
pub fn mean_field_rhs(state: &SpinState, gamma_x: f64, params: &ModelParams) -> [f64; 3] {
    let SpinState { jx, jy, jz } = *state;
    let (h, k) = (params.h, params.kappa);
    [
        h * jy - k * jx * jz,
        -h * jx + 2.0 * gamma_x * jx * jz - k * jy * jz,
        -2.0 * gamma_x * jx * jy + k * (jx * jx + jy * jy),
    ]
}

/// Largest admissible step for these parameters.
pub fn max_step(params: &ModelParams) -> f64 {
    let cap = MAX_DT_TIMES_H / params.h;
    if params.tau > 0.0 {
        cap.min(params.tau / 20.0)
    } else {
        cap
    }
}

/// How the state is continued before `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialHistory {
    /// The initial state for all `t <= 0`.
    #[default]
    Constant,
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    state: SpinState,
    derivative: [f64; 3],
}

/// Past samples on the integration grid `t_n = n dt`, long enough to cover
/// `[t - tau, t]`, with cubic Hermite interpolation between them.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    dt: f64,
    /// Step index of `samples[0]`.
    first_step: u64,
    samples: VecDeque<Sample>,
    capacity: usize,
    initial: SpinState,
    kind: InitialHistory,
}

impl HistoryBuffer {
    fn new(dt: f64, tau: f64, initial: SpinState, kind: InitialHistory) -> Self {
        let capacity = (tau / dt).ceil() as usize + 3;
        Self {
            dt,
            first_step: 0,
            samples: VecDeque::with_capacity(capacity),
            capacity,
            initial,
            kind,
        }
    }

    fn push(&mut self, state: SpinState, derivative: [f64; 3]) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
            self.first_step += 1;
        }
        self.samples.push_back(Sample { state, derivative });
    }

    pub fn initial_history(&self) -> InitialHistory {
        self.kind
    }

    /// Oldest and newest stored times.
    pub fn span(&self) -> Option<(f64, f64)> {
        let last = self.samples.len().checked_sub(1)?;
        Some((
            self.first_step as f64 * self.dt,
            (self.first_step + last as u64) as f64 * self.dt,
        ))
    }

    /// State at fractional step position `u = t / dt`.
    pub fn state_at_step(&self, u: f64) -> Result<SpinState> {
        if u <= 0.0 {
            return Ok(match self.kind {
                InitialHistory::Constant => self.initial,
            });
        }
        let k = u.floor();
        let s = u - k;
        let k = k as u64;
        let lo = k
            .checked_sub(self.first_step)
            .ok_or(Error::Precondition("history query older than the buffer"))? as usize;
        let a = self
            .samples
            .get(lo)
            .ok_or(Error::Precondition("history query ahead of the integrator"))?;
        if s == 0.0 {
            return Ok(a.state);
        }
        let b = self
            .samples
            .get(lo + 1)
            .ok_or(Error::Precondition("history query ahead of the integrator"))?;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = (s3 - 2.0 * s2 + s) * self.dt;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = (s3 - s2) * self.dt;
        let ya = a.state.to_array();
        let yb = b.state.to_array();
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = h00 * ya[i] + h10 * a.derivative[i] + h01 * yb[i] + h11 * b.derivative[i];
        }
        Ok(SpinState::new_unchecked(out[0], out[1], out[2]))
    }

    pub fn state_at(&self, t: f64) -> Result<SpinState> {
        self.state_at_step(t / self.dt)
    }
}

/// Fixed-step RK4 integrator for the delayed mean-field flow.
#[derive(Debug, Clone)]
pub struct DdeIntegrator {
    params: ModelParams,
    dt: f64,
    /// `tau / dt`
    lag: f64,
    step: u64,
    state: SpinState,
    derivative: [f64; 3],
    gamma_x: f64,
    history: HistoryBuffer,
    max_drift: f64,
}

impl DdeIntegrator {
    pub fn new(params: &ModelParams, initial: SpinState, dt: f64) -> Result<Self> {
        params.validate()?;
        let cap = max_step(params);
        if !(dt > 0.0) || dt > cap * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { dt, max: cap });
        }
        let deviation = initial.sphere_deviation();
        if !(deviation.abs() <= 1e-6) {
            return Err(Error::OffSphere { deviation });
        }
        let gamma_x = feedback_coupling(params, initial.jz, initial.jz);
        let derivative = mean_field_rhs(&initial, gamma_x, params);
        let mut history = HistoryBuffer::new(dt, params.tau, initial, InitialHistory::Constant);
        history.push(initial, derivative);
        Ok(Self {
            params: *params,
            dt,
            lag: params.tau / dt,
            step: 0,
            state: initial,
            derivative,
            gamma_x,
            history,
            max_drift: deviation.abs(),
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state(&self) -> SpinState {
        self.state
    }

    /// Derivative at the current state.
    pub fn derivative(&self) -> [f64; 3] {
        self.derivative
    }

    /// Feedback coupling at the current time.
    pub fn gamma_x(&self) -> f64 {
        self.gamma_x
    }

    pub fn max_drift(&self) -> f64 {
        self.max_drift
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn delayed_jz(&self, stage_offset: f64, current_jz: f64) -> Result<f64> {
        if self.params.tau == 0.0 {
            return Ok(current_jz);
        }
        let u = self.step as f64 + stage_offset - self.lag;
        Ok(self.history.state_at_step(u)?.jz)
    }

    fn eval(&self, y: &SpinState, stage_offset: f64) -> Result<([f64; 3], f64)> {
        let gx = feedback_coupling(&self.params, self.delayed_jz(stage_offset, y.jz)?, y.jz);
        Ok((mean_field_rhs(y, gx, &self.params), gx))
    }

    /// Advances one step.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.dt;
        let y = self.state.to_array();
        let shifted = |k: &[f64; 3], c: f64| SpinState::new_unchecked(y[0] + c * k[0], y[1] + c * k[1], y[2] + c * k[2]);
        let k1 = self.derivative;
        let (k2, _) = self.eval(&shifted(&k1, 0.5 * dt), 0.5)?;
        let (k3, _) = self.eval(&shifted(&k2, 0.5 * dt), 0.5)?;
        let (k4, _) = self.eval(&shifted(&k3, dt), 1.0)?;
        let mut next = [0.0; 3];
        for i in 0..3 {
            next[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        self.state = SpinState::new_unchecked(next[0], next[1], next[2]);
        self.step += 1;
        let deviation = self.state.sphere_deviation();
        if !(deviation.abs() <= DRIFT_ABORT) {
            return Err(Error::SphereDrift {
                time: self.time(),
                deviation,
            });
        }
        self.max_drift = self.max_drift.max(deviation.abs());
        let (d, gx) = self.eval(&self.state, 0.0)?;
        self.derivative = d;
        self.gamma_x = gx;
        self.history.push(self.state, d);
        Ok(())
    }

    /// Steps until `time() >= t` (on the grid).
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        let target = (t / self.dt - 1e-9).ceil().max(0.0) as u64;
        while self.step < target {
            self.step()?;
        }
        Ok(())
    }
}

/// Sampled solution of the delayed flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpinState>,
    /// Feedback coupling at each sample time.
    pub gamma_x_record: Vec<f64>,
    pub params: ModelParams,
    /// Spacing between samples.
    pub dt: f64,
    /// Integration step; equals `dt` unless samples were thinned.
    pub integration_dt: f64,
    pub max_sphere_deviation: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.times.first().copied().unwrap_or(0.0)
    }

    pub fn t_end(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn span(&self) -> f64 {
        self.t_end() - self.t_start()
    }

    /// Derivative at sample `i`, from the recorded coupling.
    pub fn derivative(&self, i: usize) -> [f64; 3] {
        mean_field_rhs(&self.states[i], self.gamma_x_record[i], &self.params)
    }

    /// Classical energy with the base coupling.
    pub fn energy(&self, i: usize) -> f64 {
        classical_energy(&self.states[i], &self.params)
    }

    pub fn last_state(&self) -> Option<SpinState> {
        self.states.last().copied()
    }

    /// Samples with `t >= t0`, keeping everything else.
    pub fn tail(&self, t0: f64) -> Trajectory {
        let start = self.times.partition_point(|&t| t < t0 - 1e-9 * self.dt);
        Trajectory {
            times: self.times[start..].to_vec(),
            states: self.states[start..].to_vec(),
            gamma_x_record: self.gamma_x_record[start..].to_vec(),
            ..*self
        }
    }
}

/// Integration settings beyond the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordOptions {
    /// Keep every `stride`-th step.
    pub stride: usize,
    /// Drop samples before this time.
    pub record_from: f64,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            stride: 1,
            record_from: 0.0,
        }
    }
}

/// Integrates from `t = 0` to `t_max` with constant initial history.
pub fn integrate_dde(params: &ModelParams, initial: SpinState, t_max: f64, dt: f64) -> Result<Trajectory> {
    integrate_dde_recorded(params, initial, t_max, dt, RecordOptions::default())
}

pub fn integrate_dde_recorded(
    params: &ModelParams,
    initial: SpinState,
    t_max: f64,
    dt: f64,
    record: RecordOptions,
) -> Result<Trajectory> {
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidParameter {
            name: "t_max",
            reason: "must be positive",
        });
    }
    if record.stride == 0 {
        return Err(Error::InvalidParameter {
            name: "stride",
            reason: "must be at least 1",
        });
    }
    let mut integ = DdeIntegrator::new(params, initial, dt)?;
    let n_steps = (t_max / dt - 1e-9).ceil() as u64;
    let first = (record.record_from / dt - 1e-9).ceil().max(0.0) as u64;
    let capacity = (n_steps.saturating_sub(first) / record.stride as u64 + 1) as usize;
    let mut times = Vec::with_capacity(capacity);
    let mut states = Vec::with_capacity(capacity);
    let mut gamma_x_record = Vec::with_capacity(capacity);
    let stride = record.stride as u64;
    loop {
        let n = integ.steps_taken();
        if n >= first && (n - first) % stride == 0 {
            times.push(integ.time());
            states.push(integ.state());
            gamma_x_record.push(integ.gamma_x());
        }
        if n >= n_steps {
            break;
        }
        integ.step()?;
    }
    Ok(Trajectory {
        times,
        states,
        gamma_x_record,
        params: *params,
        dt: dt * record.stride as f64,
        integration_dt: dt,
        max_sphere_deviation: integ.max_drift(),
    })
}

/// Largest state difference between runs at `dt` and `dt/2`, compared on
/// the coarse grid.
pub fn reference_step_check(params: &ModelParams, initial: SpinState, t_max: f64, dt: f64) -> Result<f64> {
    let coarse = integrate_dde(params, initial, t_max, dt)?;
    let fine = integrate_dde_recorded(
        params,
        initial,
        t_max,
        dt / 2.0,
        RecordOptions {
            stride: 2,
            record_from: 0.0,
        },
    )?;
    Ok(coarse
        .states
        .iter()
        .zip(&fine.states)
        .map(|(a, b)| a.distance(b))
        .fold(0.0, f64::max))
}
