use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the computational core can report.
#[derive(Debug, Clone, PartialEq, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },

    #[error("state is off the Bloch sphere: |J|^2 - 1/4 = {deviation:e}")]
    OffSphere { deviation: f64 },

    #[error("spin dimension {requested} exceeds the configured cap {cap}")]
    DimensionTooLarge { requested: usize, cap: usize },

    #[error("matrix is not square or is empty")]
    BadMatrix,

    #[error("eigenvalue iteration did not converge ({converged} of {dimension} eigenvalues found)")]
    EigenNoConvergence { converged: usize, dimension: usize },

    #[error("resolvent is singular at E/N = {energy}")]
    SingularResolvent { energy: f64 },

    #[error("resolvent needs a positive broadening: a pole lies on or above the real axis")]
    ResolventNeedsBroadening,

    #[error("step dt = {dt} violates the bound dt <= {max}")]
    StepTooLarge { dt: f64, max: f64 },

    #[error("spin length drifted by {deviation:e} at t = {time}; reduce the step")]
    SphereDrift { time: f64, deviation: f64 },

    #[error("no symmetry-broken fixed point: {0}")]
    NoBrokenBranch(BrokenBranchAbsence),

    #[error("the delayed linearization applies to broken-branch fixed points only")]
    NormalBranchLinearization,

    #[error("no characteristic root converged from any of {seeds} seeds")]
    NoRootConverged { seeds: usize },

    #[error("energy {energy} is outside the allowed band ({min}, {max})")]
    EnergyOutsideBand { energy: f64, min: f64, max: f64 },

    #[error("orbit did not close within t = {t_cap}")]
    OrbitNotClosed { t_cap: f64 },

    #[error("averaging window [{start}, {end}] is not inside the trajectory span [{t0}, {t1}]")]
    WindowOutOfRange {
        start: f64,
        end: f64,
        t0: f64,
        t1: f64,
    },

    #[error("{0}")]
    Precondition(&'static str),
}

/// Why the broken-symmetry pair of fixed points does not exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrokenBranchAbsence {
    /// `gamma < kappa`: the inner square root of the stationary solution is imaginary.
    CouplingBelowDecay,
    /// `gamma < gamma_c`: below the pitchfork.
    BelowCritical,
}

impl core::fmt::Display for BrokenBranchAbsence {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::CouplingBelowDecay => f.write_str("coupling gamma is smaller than the decay rate kappa"),
            Self::BelowCritical => f.write_str("coupling gamma is below the critical coupling"),
        }
    }
}
