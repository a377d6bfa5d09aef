//! Shared parameter and state types, the classical energy and the feedback law.

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::{Error, Result};

/// Sphere-membership tolerance for accepted states.
pub const SPHERE_TOLERANCE: f64 = 1e-9;

/// Physical and control parameters. Energies and rates are in units of `h`,
/// the delay `tau` in units of `1/h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Magnetic field along z.
    pub h: f64,
    /// Base x-coupling `gamma` (the value the Pyragas term modulates).
    pub gamma: f64,
    /// y-coupling; zero for the isotropic model.
    pub gamma_y: f64,
    /// Collective decay rate.
    pub kappa: f64,
    /// Feedback gain.
    pub lambda: f64,
    /// Feedback delay.
    pub tau: f64,
    /// Number of spins; only the quantum spectrum uses it.
    pub n_spins: usize,
}

impl Default for ModelParams {
    /// The recurring figure parameters: `gamma = 1.5h`, `kappa = 0.05h`,
    /// `lambda = 1h`, `tau = 0.3/h`, `N = 1000`.
    fn default() -> Self {
        Self {
            h: 1.0,
            gamma: 1.5,
            gamma_y: 0.0,
            kappa: 0.05,
            lambda: 1.0,
            tau: 0.3,
            n_spins: 1000,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("h", self.h),
            ("gamma", self.gamma),
            ("gamma_y", self.gamma_y),
            ("kappa", self.kappa),
            ("lambda", self.lambda),
            ("tau", self.tau),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be finite",
                });
            }
        }
        if self.h <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "h",
                reason: "must be positive",
            });
        }
        if self.kappa < 0.0 {
            return Err(Error::InvalidParameter {
                name: "kappa",
                reason: "must be non-negative",
            });
        }
        if self.tau < 0.0 {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: "must be non-negative",
            });
        }
        if self.n_spins == 0 {
            return Err(Error::InvalidParameter {
                name: "n_spins",
                reason: "must be at least 1",
            });
        }
        Ok(())
    }

    /// Closed, undriven system: `kappa = lambda = 0`.
    pub fn closed(self) -> Self {
        Self {
            kappa: 0.0,
            lambda: 0.0,
            ..self
        }
    }

    pub fn with_tau(self, tau: f64) -> Self {
        Self { tau, ..self }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }

    pub fn with_kappa(self, kappa: f64) -> Self {
        Self { kappa, ..self }
    }
}

/// Rescaled classical spin `J_i = <J_i>/N`, a point on the sphere of radius 1/2.
///
/// Stored in Cartesian form; the poles are ordinary points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    pub jx: f64,
    pub jy: f64,
    pub jz: f64,
}

impl SpinState {
    pub const NORTH_POLE: Self = Self {
        jx: 0.0,
        jy: 0.0,
        jz: 0.5,
    };
    pub const SOUTH_POLE: Self = Self {
        jx: 0.0,
        jy: 0.0,
        jz: -0.5,
    };

    /// Checked constructor: rejects points further than [`SPHERE_TOLERANCE`]
    /// from the sphere.
    pub fn new(jx: f64, jy: f64, jz: f64) -> Result<Self> {
        let s = Self { jx, jy, jz };
        let deviation = s.sphere_deviation();
        if !(deviation.abs() <= SPHERE_TOLERANCE) {
            return Err(Error::OffSphere { deviation });
        }
        Ok(s)
    }

    /// No sphere check. Integrators use this for intermediate states.
    pub const fn new_unchecked(jx: f64, jy: f64, jz: f64) -> Self {
        Self { jx, jy, jz }
    }

    /// Polar angle `theta` from +z, azimuth `phi` from +x.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self {
            jx: 0.5 * st * cp,
            jy: 0.5 * st * sp,
            jz: 0.5 * ct,
        }
    }

    /// Rescales an arbitrary non-zero vector onto the sphere.
    pub fn projected(jx: f64, jy: f64, jz: f64) -> Result<Self> {
        let norm = (jx * jx + jy * jy + jz * jz).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Precondition("cannot project a zero or non-finite vector"));
        }
        let scale = 0.5 / norm;
        Ok(Self {
            jx: jx * scale,
            jy: jy * scale,
            jz: jz * scale,
        })
    }

    pub fn norm_sq(&self) -> f64 {
        self.jx * self.jx + self.jy * self.jy + self.jz * self.jz
    }

    /// `|J|^2 - 1/4`.
    pub fn sphere_deviation(&self) -> f64 {
        self.norm_sq() - 0.25
    }

    /// The Z2 partner `(jx, jy, jz) -> (-jx, -jy, jz)`.
    pub fn flipped(&self) -> Self {
        Self {
            jx: -self.jx,
            jy: -self.jy,
            jz: self.jz,
        }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        let dx = self.jx - other.jx;
        let dy = self.jy - other.jy;
        let dz = self.jz - other.jz;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.jx, self.jy, self.jz]
    }
}

/// Classical energy per spin, `e = -h jz - gamma jx^2 - gamma_y jy^2`.
pub fn classical_energy(state: &SpinState, params: &ModelParams) -> f64 {
    -params.h * state.jz - params.gamma * state.jx * state.jx - params.gamma_y * state.jy * state.jy
}

/// Instantaneous x-coupling under Pyragas feedback on `jz^2`:
/// `gamma + lambda (jz(t - tau)^2 - jz(t)^2)`.
pub fn feedback_coupling(params: &ModelParams, jz_delayed: f64, jz_now: f64) -> f64 {
    params.gamma + params.lambda * (jz_delayed * jz_delayed - jz_now * jz_now)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_at_the_poles() {
        let p = ModelParams::default();
        assert_eq!(classical_energy(&SpinState::NORTH_POLE, &p), -0.5);
        assert_eq!(classical_energy(&SpinState::SOUTH_POLE, &p), 0.5);
        let aniso = ModelParams {
            gamma_y: 2.5,
            gamma: 3.0,
            ..p
        };
        assert_eq!(classical_energy(&SpinState::NORTH_POLE, &aniso), -0.5);
    }

    #[test]
    fn energy_on_the_equator() {
        let p = ModelParams::default();
        let s = SpinState::new(0.5, 0.0, 0.0).unwrap();
        assert!((classical_energy(&s, &p) + 0.375).abs() < 1e-15);
    }

    #[test]
    fn sphere_minimum_by_grid_search() {
        // brute force over (theta, phi)
        let p = ModelParams::default();
        let mut best = (f64::INFINITY, 0.0);
        let n = 1200;
        for i in 0..=n {
            let theta = core::f64::consts::PI * i as f64 / n as f64;
            for j in 0..n {
                let phi = 2.0 * core::f64::consts::PI * j as f64 / n as f64;
                let s = SpinState::from_angles(theta, phi);
                let e = classical_energy(&s, &p);
                if e < best.0 {
                    best = (e, s.jz);
                }
            }
        }
        assert!((best.0 + 0.5417).abs() < 1e-4, "{}", best.0);
        assert!((best.1 - 1.0 / 3.0).abs() < 5e-3, "{}", best.1);
    }

    #[test]
    fn energy_is_z2_symmetric() {
        let p = ModelParams {
            gamma_y: 0.7,
            ..ModelParams::default()
        };
        let s = SpinState::from_angles(1.1, 0.4);
        let a = classical_energy(&s, &p);
        let b = classical_energy(&s.flipped(), &p);
        let c = classical_energy(&SpinState::new_unchecked(-s.jx, s.jy, s.jz), &p);
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn feedback_vanishes_without_delay_difference() {
        let p = ModelParams::default();
        for a in [-0.5, -0.1, 0.0, 0.3, 0.5] {
            assert_eq!(feedback_coupling(&p, a, a), p.gamma);
        }
        let off = p.with_lambda(0.0);
        assert_eq!(feedback_coupling(&off, 0.4, 0.1), p.gamma);
    }

    #[test]
    fn feedback_arithmetic() {
        let p = ModelParams::default();
        assert!((feedback_coupling(&p, 0.4, 0.3) - 1.57).abs() < 1e-14);
    }

    #[test]
    fn state_constructors() {
        assert!(SpinState::new(0.5, 0.0, 0.0).is_ok());
        assert!(matches!(
            SpinState::new(0.5, 0.1, 0.0),
            Err(Error::OffSphere { .. })
        ));
        let s = SpinState::from_angles(0.3, 2.0);
        assert!(s.sphere_deviation().abs() < 1e-15);
        let q = SpinState::projected(1.0, 2.0, -3.0).unwrap();
        assert!(q.sphere_deviation().abs() < 1e-15);
        assert!(SpinState::projected(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelParams::default().validate().is_ok());
        let bad = ModelParams::default().with_kappa(-0.1);
        assert_eq!(
            bad.validate(),
            Err(Error::InvalidParameter {
                name: "kappa",
                reason: "must be non-negative"
            })
        );
        let bad = ModelParams {
            n_spins: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelParams {
            h: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(ModelParams::default().with_tau(-1.0).validate().is_err());
    }
}
